//! Minimal SVG line charts.

use std::fmt::Write;

use outbreak_core::experiments::Table;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

fn bounds(series: &[Series]) -> Option<(f64, f64, f64, f64)> {
    let pts = series
        .iter()
        .flat_map(|s| &s.points)
        .filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) =
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        return None;
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    Some((x0, x1, y0, y1))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn line_chart(title: &str, x_label: &str, series: &[Series]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let Some((x0, x1, y0, y1)) = bounds(series) else {
        out.push_str("</svg>\n");
        return out;
    };
    let pw = WIDTH - MARGIN_L - MARGIN_R;
    let ph = HEIGHT - MARGIN_T - MARGIN_B;
    let px = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| MARGIN_T + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for k in 0..=5 {
        let f = k as f64 / 5.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            px(xv),
            HEIGHT - MARGIN_B + 18.0,
            tick(xv)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            MARGIN_L - 6.0,
            py(yv) + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        MARGIN_L + pw / 2.0,
        HEIGHT - 10.0,
        escape(x_label)
    );

    for (k, s) in series.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = MARGIN_T + 16.0 * k as f64 + 8.0;
        let lx = WIDTH - MARGIN_R + 10.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 18.0,
            lx + 24.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e5) {
        format!("{v:.1e}")
    } else {
        format!("{}", (v * 1000.0).round() / 1000.0)
    }
}

fn pairs(table: &Table, x: &str, y: &str, filter: Option<(&str, &str)>) -> Vec<(f64, f64)> {
    let (Some(ix), Some(iy)) = (table.column_index(x), table.column_index(y)) else {
        return Vec::new();
    };
    let ic = filter.and_then(|(c, _)| table.column_index(c));
    table
        .rows
        .iter()
        .filter(|r| match (ic, filter) {
            (Some(c), Some((_, want))) => r[c].render() == want,
            _ => true,
        })
        .filter_map(|r| Some((r[ix].as_num()?, r[iy].as_num()?)))
        .collect()
}

/// A chart suited to the shape of `table`, or `None` when it has no obvious plot.
pub fn chart_for(table: &Table) -> Option<String> {
    let has = |c: &str| table.column_index(c).is_some();
    if has("curve") && has("E_norm") {
        let mut labels: Vec<String> = Vec::new();
        let k = table.column_index("curve")?;
        for r in &table.rows {
            let l = r[k].render();
            if !labels.contains(&l) {
                labels.push(l);
            }
        }
        let series = labels
            .iter()
            .map(|l| Series {
                label: l.clone(),
                points: pairs(table, "t", "E_norm", Some(("curve", l))),
            })
            .collect::<Vec<_>>();
        return Some(line_chart(
            &format!("{}: E / max natural E", table.name),
            "t (days)",
            &series,
        ));
    }
    if has("t") && has("S") && has("E") {
        let series = ["S", "E", "R"]
            .iter()
            .map(|c| Series {
                label: (*c).into(),
                points: pairs(table, "t", c, None),
            })
            .collect::<Vec<_>>();
        return Some(line_chart(&table.name, "t (days)", &series));
    }
    if has("S_inf") {
        let x = table.columns.first()?.clone();
        let series = [Series {
            label: "S_inf".into(),
            points: pairs(table, &x, "S_inf", None),
        }];
        return Some(line_chart(&table.name, &x, &series));
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_contains_one_polyline_per_series() {
        let s = vec![
            Series {
                label: "a".into(),
                points: vec![(0.0, 0.0), (1.0, 1.0)],
            },
            Series {
                label: "b<c".into(),
                points: vec![(0.0, 1.0), (1.0, f64::NAN), (2.0, 0.5)],
            },
        ];
        let svg = line_chart("t", "x", &s);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("b&lt;c"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn empty_chart_is_still_valid() {
        assert!(line_chart("empty", "x", &[]).trim_end().ends_with("</svg>"));
    }

    #[test]
    fn scan_tables_get_a_chart() {
        let mut t = Table::new("scan", ["t_I", "S_inf"]);
        t.push(vec![10.0.into(), 0.3.into()]);
        t.push(vec![20.0.into(), 0.4.into()]);
        assert!(chart_for(&t).unwrap().contains("polyline"));
        assert!(chart_for(&Table::new("other", ["a"])).is_none());
    }
}
