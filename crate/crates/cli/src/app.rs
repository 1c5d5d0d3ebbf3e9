//! Command-line parsing and the subcommands.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use outbreak_core::experiments::{
    proposition_suite, quarantine_analysis, run_figure, scan_delta, scan_ti, summarize, trajectory_table,
    Cell, Table,
};
use outbreak_core::integrator::{detect_tstar, EventKind};
use outbreak_core::model::ModelParams;
use outbreak_core::spectral::spectral;
use outbreak_core::strategy::classify;
use outbreak_core::threshold::{s_bar, s_star};
use outbreak_core::{integrate, Error, Strategy};

use crate::config::{parse_config, RunConfig};
use crate::output::{write_table, Provenance};

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numerical(String),
    Io(String),
    PropsFailed(usize),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Validation(_) | Self::Io(_) => 1,
            Self::Numerical(_) => 2,
            Self::PropsFailed(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Validation(m) => write!(f, "validation error: {m}"),
            Self::Numerical(m) => write!(f, "numerical failure: {m}"),
            Self::Io(m) => write!(f, "i/o error: {m}"),
            Self::PropsFailed(n) => write!(f, "{n} proposition check(s) failed"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain { .. }
            | Error::InvalidModel(_)
            | Error::InvalidState(_)
            | Error::InvalidStrategy(_)
            | Error::InvalidConfig(_)
            | Error::UnequalGamma { .. }
            | Error::NoThreshold => Self::Validation(e.to_string()),
            _ => Self::Numerical(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "outbreak-lab",
    version,
    about = "Epidemic control experiments on N-stage SEIR models"
)]
struct Cli {
    /// JSON run configuration; the built-in COVID-19 SEIAR setup when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `outputs.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed of the proposition suite, overriding `props.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Integration horizon in days, overriding `integration.t_max`.
    #[arg(long = "t-max", global = true)]
    t_max: Option<f64>,
    /// Also write an SVG chart per table.
    #[arg(long, global = true)]
    plot: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate one trajectory.
    Simulate,
    /// Thresholds and the leading eigenvalue over a grid of S0.
    Thresholds,
    /// Sweep the start time of the configured strategy template.
    ScanTi,
    /// Sweep the period of regulated strategies.
    ScanDelta,
    /// Regenerate the data of one figure (1 to 9).
    Figure { n: u8 },
    /// Isolation thresholds of the quarantine model.
    Quarantine,
    /// Randomized proposition checks.
    Props,
}

impl Command {
    fn name(&self) -> String {
        match self {
            Self::Simulate => "simulate".into(),
            Self::Thresholds => "thresholds".into(),
            Self::ScanTi => "scan-ti".into(),
            Self::ScanDelta => "scan-delta".into(),
            Self::Figure { n } => format!("figure {n}"),
            Self::Quarantine => "quarantine".into(),
            Self::Props => "props".into(),
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
            parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.outputs.dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.props.seed = seed;
    }
    if let Some(t_max) = cli.t_max {
        cfg.integration.t_max = t_max;
    }
    cfg.outputs.plot |= cli.plot;
    cfg.validate()?;
    Ok(cfg)
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("OUTBREAK_LAB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        CliError::Validation(format!(
            "OUTBREAK_LAB_THREADS = {raw:?} must be a positive integer"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Validation(format!("cannot set thread count: {e}")))
}

struct Run {
    cfg: RunConfig,
    prov: Provenance,
}

impl Run {
    fn emit(&self, mut table: Table) -> Result<(), CliError> {
        self.prov.stamp(&mut table);
        for path in write_table(&self.cfg.outputs.dir, &table, self.cfg.outputs.plot)? {
            println!("wrote {}", path.display());
        }
        Ok(())
    }

    fn params(&self) -> Result<ModelParams, CliError> {
        Ok(self.cfg.model.build()?)
    }
}

fn fmt_threshold(v: outbreak_core::Result<f64>) -> Result<String, CliError> {
    match v {
        Ok(x) => Ok(format!("{x:.10}")),
        Err(Error::NoThreshold) => Ok("none (no transmission)".into()),
        Err(e) => Err(e.into()),
    }
}

fn simulate(run: &Run) -> Result<(), CliError> {
    let p = run.params()?;
    let st = &run.cfg.strategy;
    if st.has_aggravating_multiplier() {
        eprintln!("warning: strategy has a multiplier above 1, which increases transmission");
    }
    let init = run.cfg.init.build(&p)?;
    let tr = integrate(&p, st, &init, &run.cfg.integration)?;
    let mut table = trajectory_table("trajectory", &tr, p.n_stages());
    table.meta("strategy", serde_json::to_string(st).expect("serializable"));
    run.emit(table)?;
    if run.cfg.outputs.events {
        let mut events = Table::new("events", ["t", "kind"]);
        for e in &tr.events {
            events.push(vec![e.t.into(), e.kind.label().into()]);
        }
        run.emit(events)?;
    }

    let q1 = p.identity_control();
    println!("S_bar(q=1) = {}", fmt_threshold(s_bar(&p, &q1))?);
    println!("S*(q=1)    = {}", fmt_threshold(s_star(&p, &q1))?);
    println!("samples    = {}, t_end = {}", tr.samples.len(), tr.t_end());
    match detect_tstar(&tr) {
        Ok(t) => println!("t*         = {t:.4} (E = {:.6e})", tr.max_e().0),
        Err(_) => println!("t*         = none (E has no interior maximum)"),
    }
    println!("E peaks    = {}", tr.events_of(EventKind::EPeak).count());
    if tr.quiescent {
        let s = summarize(&tr, st)?;
        println!("S_inf      = {:.10}", s.s_inf);
        if let Some(d) = s.duration {
            println!("duration   = {d} days");
        }
    } else {
        println!("not quiescent by t = {}; S_inf not available", tr.t_end());
    }
    match classify(st, &p, &tr) {
        Ok(c) => println!(
            "class      = finite: {}, permanent: {}, uniform: {}, NOS: {}, WOS: {}",
            c.is_finite, c.is_permanent, c.is_uniform, c.is_nos, c.is_wos
        ),
        Err(e) => println!("class      = unavailable ({e})"),
    }
    Ok(())
}

fn thresholds(run: &Run) -> Result<(), CliError> {
    let p = run.params()?;
    let q = p.identity_control();
    let sb = s_bar(&p, &q);
    let ss = s_star(&p, &q);
    println!("S_bar = {}", fmt_threshold(sb.clone())?);
    println!("S* = {}", fmt_threshold(ss.clone())?);
    let mut t = Table::new(
        "thresholds",
        ["S0", "lambda1", "lambda2", "lambda_rest", "cond_factor", "regime"],
    );
    for k in 0..=20 {
        let s0 = k as f64 / 20.0;
        let b = spectral(&p, s0, &q)?;
        let regime = if b.lambda1 < 0.0 {
            "non-outbreak"
        } else {
            "outbreak"
        };
        t.push(vec![
            s0.into(),
            b.lambda1.into(),
            b.lambda2.into(),
            b.lambda_rest.into(),
            b.cond_factor.into(),
            regime.into(),
        ]);
    }
    let cell = |v: outbreak_core::Result<f64>| v.map_or(Cell::Text("none".into()), Cell::Num).render();
    t.meta("S_bar", cell(sb)).meta("S_star", cell(ss));
    run.emit(t)
}

fn print_scan(table: &Table) {
    let x = &table.columns[0];
    for r in &table.rows {
        println!("{x} = {:>8}  S_inf = {}", r[0].render(), r[1].render());
    }
}

fn scan_ti_cmd(run: &Run) -> Result<(), CliError> {
    let p = run.params()?;
    let init = run.cfg.init.build(&p)?;
    let spec = &run.cfg.scan;
    let res = scan_ti(&p, &spec.template, &spec.t_i_grid, &init, &run.cfg.integration)?;
    let natural = integrate(&p, &Strategy::Natural {}, &init, &run.cfg.integration)?;
    let baseline = summarize(&natural, &Strategy::Natural {})?.s_inf;
    let mut t = res.to_table("scan_ti");
    t.meta(
        "template",
        serde_json::to_string(&spec.template).expect("serializable"),
    )
    .meta("S_inf_natural", baseline.to_string());
    print_scan(&t);
    if let Some(best) = res.argmax_s_inf() {
        println!(
            "best t_I = {} with S_inf = {:.6} (natural {:.6})",
            best.param_value, best.s_inf, baseline
        );
    }
    match res.effect_window(baseline, 0.005) {
        Some((a, b)) => println!("S_inf exceeds natural by > 0.005 for t_I in [{a}, {b}]"),
        None => println!("S_inf never exceeds natural by > 0.005"),
    }
    run.emit(t)
}

fn scan_delta_cmd(run: &Run) -> Result<(), CliError> {
    let p = run.params()?;
    let init = run.cfg.init.build(&p)?;
    let spec = &run.cfg.scan;
    let res = scan_delta(&p, spec.t_i, &spec.delta_grid, &init, &run.cfg.integration)?;
    let mut t = res.to_table("scan_delta");
    t.meta("t_I", spec.t_i.to_string());
    print_scan(&t);
    run.emit(t)
}

fn figure(run: &Run, n: u8) -> Result<(), CliError> {
    let tables = run_figure(n, &run.cfg.figure, &run.cfg.integration)?;
    for t in tables {
        println!("{}: {} rows", t.name, t.rows.len());
        for (k, v) in t.meta.iter().filter(|(k, _)| k == "t_star" || k == "S_at_t_star") {
            println!("  {k} = {v}");
        }
        run.emit(t)?;
    }
    Ok(())
}

fn quarantine(run: &Run) -> Result<(), CliError> {
    let q = &run.cfg.quarantine;
    let t = quarantine_analysis(q.chi, q.xi, q.r0, &q.zeta_i_grid)?;
    for r in &t.rows {
        println!(
            "zeta_I = {:<5} {:<22} zeta_A_min = {:<14} S*(zeta_A = 0) = {}",
            r[0].render(),
            r[1].render(),
            r[2].render(),
            r[3].render()
        );
    }
    run.emit(t)
}

fn props(run: &Run) -> Result<(), CliError> {
    let spec = &run.cfg.props;
    let report = proposition_suite(&spec.family, spec.seed, spec.trials);
    for o in &report.outcomes {
        println!(
            "{:<5} {:<18} {}/{} failed, worst = {}",
            if o.passed() { "PASS" } else { "FAIL" },
            o.name,
            o.failures.len(),
            o.trials,
            o.worst.map_or("-".into(), |w| format!("{w:.6e}"))
        );
        if let Some(c) = o.failures.first() {
            println!("      trial {}: {}", c.trial, c.detail);
        }
    }
    run.emit(report.to_table())?;
    let failed = report.outcomes.iter().filter(|o| !o.passed()).count();
    if failed > 0 {
        return Err(CliError::PropsFailed(failed));
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    configure_threads()?;
    let run = Run {
        prov: Provenance::new(cli.command.name(), &cfg),
        cfg,
    };
    match &cli.command {
        Command::Simulate => simulate(&run),
        Command::Thresholds => thresholds(&run),
        Command::ScanTi => scan_ti_cmd(&run),
        Command::ScanDelta => scan_delta_cmd(&run),
        Command::Figure { n } => figure(&run, *n),
        Command::Quarantine => quarantine(&run),
        Command::Props => props(&run),
    }
}

/// Parses the process arguments, runs the subcommand and maps errors to exit codes.
pub fn main_entry() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
