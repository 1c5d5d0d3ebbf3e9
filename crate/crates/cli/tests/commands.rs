use std::path::Path;
use std::process::{Command, Output};

fn lab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_outbreak-lab"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn example_config() -> String {
    format!("{}/../../configs/table2.json", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn thresholds_prints_s_star() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(dir.path(), &["thresholds"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("S* = 0.5445"), "{out}");
    let csv = std::fs::read_to_string(dir.path().join("thresholds.csv")).unwrap();
    assert!(csv.starts_with("# tool: outbreak-lab\n"));
    assert!(csv.contains("# config_sha256: "));
}

#[test]
fn figure_one_peaks_near_day_130() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(dir.path(), &["figure", "1", "--plot"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("fig1.csv")).unwrap();
    let rows = data_rows(&csv);
    let (t_col, e_col) = (
        rows[0].iter().position(|c| c == "t").unwrap(),
        rows[0].iter().position(|c| c == "E").unwrap(),
    );
    let (t_peak, _) = rows[1..]
        .iter()
        .map(|r| (r[t_col].parse::<f64>().unwrap(), r[e_col].parse::<f64>().unwrap()))
        .fold(
            (0.0, f64::NEG_INFINITY),
            |best, p| if p.1 > best.1 { p } else { best },
        );
    assert!((t_peak - 130.0).abs() <= 5.0, "E peaks at {t_peak}");
    assert!(dir.path().join("fig1.svg").exists());
}

#[test]
fn props_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = lab(a.path(), &["props", "--seed", "1"]);
    let second = lab(b.path(), &["props", "--seed", "1"]);
    assert_eq!(first.status.code(), second.status.code());
    assert!(matches!(first.status.code(), Some(0 | 3)));
    assert_eq!(
        stdout(&first).replace(&a.path().display().to_string(), ""),
        stdout(&second).replace(&b.path().display().to_string(), "")
    );
    let ra = std::fs::read_to_string(a.path().join("props.csv")).unwrap();
    let rb = std::fs::read_to_string(b.path().join("props.csv")).unwrap();
    assert_eq!(data_rows(&ra), data_rows(&rb));
}

#[test]
fn simulate_writes_trajectory_and_events() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(dir.path(), &["simulate", "--config", &example_config()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("S_inf"), "{out}");
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let rows = data_rows(&csv);
    assert_eq!(
        rows[0],
        ["t", "S", "E", "I_1", "I_2", "R", "q_1", "q_2", "U", "Vnorm"]
    );
    let events = std::fs::read_to_string(dir.path().join("events.csv")).unwrap();
    assert!(events.contains("strategy-start") && events.contains("strategy-end"));
}

#[test]
fn invalid_config_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(example_config())
        .unwrap()
        .replace("\"chi\": 0.862", "\"chi\": 1.2");
    let path = dir.path().join("bad.json");
    std::fs::write(&path, text).unwrap();
    let o = lab(dir.path(), &["simulate", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("probability out of range"));
}

#[test]
fn unfinished_horizon_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(dir.path(), &["figure", "3", "--t-max", "150"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn quarantine_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(dir.path(), &["quarantine"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("0.29691345"));
}

#[test]
fn thread_cap_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_outbreak-lab"))
        .args(["thresholds", "--out"])
        .arg(dir.path())
        .env("OUTBREAK_LAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}
