use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    default_init, json, scan_delta, scan_ti, summarize, table2_params, trajectory_table, Cell, QLevel,
    StrategyTemplate, Table, DEFAULT_POPULATION,
};
use crate::error::{Error, Result};
use crate::integrator::{detect_tstar, integrate, IntegrationConfig, Trajectory};
use crate::model::{ModelParams, State};
use crate::strategy::{Multipliers, Strategy};
use crate::threshold::s_star;

pub const FIGURE_IDS: std::ops::RangeInclusive<u8> = 1..=9;

/// Optional changes to the built-in settings of a figure.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FigureOverrides {
    /// Start time, days (figures 2, 3, 6, 9).
    pub t_i: Option<f64>,
    /// Fixed end time, days (figure 4).
    pub t_f: Option<f64>,
    /// Duration of the finite strategies scanned in figure 5, days.
    pub delta_t: Option<f64>,
    /// Regulation period, days (figures 7, 8).
    pub period: Option<f64>,
    /// Replaces the swept values of the figure.
    pub grid: Option<Vec<f64>>,
    pub population: Option<f64>,
    /// Spacing of the rows kept in curve tables, days.
    pub curve_stride: Option<f64>,
}

const FIG5_DEFAULT_DELTA_T: f64 = 60.0;
const REGULATED_DEFAULT_PERIOD: f64 = 1.0;

struct Ctx {
    params: ModelParams,
    init: State,
    cfg: IntegrationConfig,
    s0_star: f64,
    stride: f64,
    population: f64,
}

impl Ctx {
    fn run(&self, st: &Strategy) -> Result<Trajectory> {
        integrate(&self.params, st, &self.init, &self.cfg)
    }

    fn stamp(&self, t: &mut Table, figure: u8) {
        t.meta("figure", figure.to_string())
            .meta("model", json(&self.params))
            .meta("population", self.population.to_string())
            .meta("integration", json(&self.cfg))
            .meta("S0_star", self.s0_star.to_string());
    }
}

fn grid_or(o: &FigureOverrides, default: Vec<f64>) -> Vec<f64> {
    o.grid.clone().unwrap_or(default)
}

fn range(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|k| lo + k as f64 * step).collect()
}

/// Long-format curves: one block of rows per labelled run.
struct Curves {
    table: Table,
    e_max: f64,
    v_max: f64,
    stride: f64,
}

impl Curves {
    fn new(name: String, natural: &Trajectory, stride: f64) -> Self {
        let e_max = natural.max_e().0;
        let v_max = natural.samples.iter().map(|s| s.v_norm).fold(0.0, f64::max);
        let table = Table::new(
            name,
            ["curve", "t", "S", "E", "R", "Vnorm", "q", "E_norm", "Vnorm_norm"],
        );
        Self {
            table,
            e_max,
            v_max,
            stride,
        }
    }

    fn add(&mut self, label: &str, tr: &Trajectory) {
        let mut next = 0.0;
        let last = tr.samples.len() - 1;
        for (k, s) in tr.samples.iter().enumerate() {
            if s.t + 1e-9 < next && k != last {
                continue;
            }
            next = (s.t / self.stride).floor() * self.stride + self.stride;
            self.table.push(vec![
                label.into(),
                s.t.into(),
                s.state.s.into(),
                s.state.e.into(),
                s.state.r.into(),
                s.v_norm.into(),
                s.q[0].into(),
                (s.state.e / self.e_max).into(),
                (s.v_norm / self.v_max).into(),
            ]);
        }
    }
}

fn summary_table(name: String) -> Table {
    Table::new(
        name,
        [
            "curve",
            "t_I",
            "t_F",
            "q_I",
            "S_inf",
            "peak_E",
            "peak_time",
            "n_peaks",
            "duration",
        ],
    )
}

fn summary_row(label: &str, st: &Strategy, tr: &Trajectory) -> Result<Vec<Cell>> {
    let s = summarize(tr, st)?;
    let (t_f, q_i) = match st {
        Strategy::ConstantFinite { t_end, q, .. } => (Some(*t_end), q_cell(q)),
        Strategy::ConstantPermanent { q, .. } => (None, q_cell(q)),
        Strategy::RegulatedSStar { t_start, .. } => (s.duration.map(|d| t_start + d), Cell::Empty),
        _ => (None, Cell::Empty),
    };
    Ok(vec![
        label.into(),
        st.start_time().into(),
        t_f.into(),
        q_i,
        s.s_inf.into(),
        s.peak_e.into(),
        s.peak_time.into(),
        s.n_peaks.into(),
        s.duration.into(),
    ])
}

fn q_cell(q: &Multipliers) -> Cell {
    match q {
        Multipliers::Uniform(v) => (*v).into(),
        Multipliers::PerStage(v) => json(v).into(),
    }
}

/// Runs labelled strategies concurrently; curves and summary rows keep input order.
fn compare(ctx: &Ctx, figure: u8, natural: &Trajectory, runs: Vec<(String, Strategy)>) -> Result<Vec<Table>> {
    let trajectories = runs
        .par_iter()
        .map(|(_, st)| ctx.run(st))
        .collect::<Result<Vec<_>>>()?;
    let mut curves = Curves::new(format!("fig{figure}"), natural, ctx.stride);
    let mut summary = summary_table(format!("fig{figure}_summary"));
    curves.add("natural", natural);
    summary.push(summary_row("natural", &Strategy::Natural {}, natural)?);
    for ((label, st), tr) in runs.iter().zip(&trajectories) {
        curves.add(label, tr);
        summary.push(summary_row(label, st, tr)?);
    }
    let mut curves = curves.table;
    ctx.stamp(&mut curves, figure);
    curves.meta("strategies", json(&runs.iter().map(|r| &r.1).collect::<Vec<_>>()));
    ctx.stamp(&mut summary, figure);
    Ok(vec![curves, summary])
}

/// CSV tables behind figure `figure` (1 to 9) for the COVID-19 parameters.
pub fn run_figure(figure: u8, overrides: &FigureOverrides, cfg: &IntegrationConfig) -> Result<Vec<Table>> {
    if !FIGURE_IDS.contains(&figure) {
        return Err(Error::InvalidConfig(format!(
            "figure must be in 1..=9, got {figure}"
        )));
    }
    let params = table2_params();
    let population = overrides.population.unwrap_or(DEFAULT_POPULATION);
    let init = default_init(&params, population)?;
    let s0_star = s_star(&params, &params.identity_control())?;
    let ctx = Ctx {
        params,
        init,
        cfg: cfg.clone(),
        s0_star,
        stride: overrides
            .curve_stride
            .unwrap_or(if figure == 7 { 10.0 } else { 1.0 }),
        population,
    };
    let natural = ctx.run(&Strategy::Natural {})?;
    let q_star = Multipliers::Uniform(s0_star);
    let t_i = overrides.t_i.unwrap_or(110.0);

    match figure {
        1 => {
            let mut t = trajectory_table("fig1", &natural, ctx.params.n_stages());
            ctx.stamp(&mut t, 1);
            let t_star = detect_tstar(&natural)?;
            t.meta("t_star", t_star.to_string());
            if let Some(y) = natural.interpolate(t_star) {
                t.meta("S_at_t_star", y[0].to_string());
            }
            Ok(vec![t])
        }
        2 => {
            let s_ti = natural
                .interpolate(t_i)
                .ok_or_else(|| Error::InvalidConfig(format!("t_I = {t_i} beyond the natural run")))?[0];
            let levels = [
                ("q=0.85", 0.85),
                ("q=S0*/S(t_I)", s0_star / s_ti),
                ("q=S0*", s0_star),
            ];
            let runs = levels
                .iter()
                .map(|(label, q)| {
                    (
                        label.to_string(),
                        Strategy::ConstantPermanent {
                            t_start: t_i,
                            q: Multipliers::Uniform(*q),
                        },
                    )
                })
                .collect();
            let mut tables = compare(&ctx, 2, &natural, runs)?;
            tables[0].meta("S_at_t_I", s_ti.to_string());
            Ok(tables)
        }
        3 => {
            let mut runs: Vec<(String, Strategy)> = grid_or(overrides, vec![30.0, 60.0, 90.0, 120.0])
                .into_iter()
                .map(|dt| {
                    (
                        format!("dt={dt}"),
                        Strategy::ConstantFinite {
                            t_start: t_i,
                            t_end: t_i + dt,
                            q: q_star.clone(),
                        },
                    )
                })
                .collect();
            runs.push((
                "permanent".into(),
                Strategy::ConstantPermanent {
                    t_start: t_i,
                    q: q_star.clone(),
                },
            ));
            compare(&ctx, 3, &natural, runs)
        }
        4 => {
            let t_f = overrides.t_f.unwrap_or(170.0);
            let runs = grid_or(overrides, vec![50.0, 70.0, 90.0, 110.0, 130.0])
                .into_iter()
                .map(|ti| {
                    (
                        format!("t_I={ti}"),
                        Strategy::ConstantFinite {
                            t_start: ti,
                            t_end: t_f,
                            q: q_star.clone(),
                        },
                    )
                })
                .collect();
            compare(&ctx, 4, &natural, runs)
        }
        5 => {
            let delta_t = overrides.delta_t.unwrap_or(FIG5_DEFAULT_DELTA_T);
            let template = StrategyTemplate::ConstantFinite {
                duration: delta_t,
                q: QLevel::Value(q_star.clone()),
            };
            let grid = grid_or(overrides, range(5.0, 250.0, 5.0));
            let scan = scan_ti(&ctx.params, &template, &grid, &ctx.init, &ctx.cfg)?;
            let natural_s_inf = summarize(&natural, &Strategy::Natural {})?.s_inf;
            let mut t = scan.to_table("fig5");
            t.columns.push("S_inf_minus_natural".into());
            for (row, r) in t.rows.iter_mut().zip(&scan.rows) {
                row.push((r.s_inf - natural_s_inf).into());
            }
            ctx.stamp(&mut t, 5);
            t.meta("delta_t", delta_t.to_string()).meta(
                "delta_t_source",
                if overrides.delta_t.is_some() {
                    "override"
                } else {
                    "default, not given with the figure"
                },
            );
            t.meta("S_inf_natural", natural_s_inf.to_string());
            t.meta("template", json(&template));
            Ok(vec![t])
        }
        6 => {
            let mut runs: Vec<(String, Strategy)> = grid_or(overrides, vec![1.0, 30.0])
                .into_iter()
                .map(|d| {
                    (
                        format!("period={d}"),
                        Strategy::RegulatedSStar {
                            t_start: t_i,
                            period: d,
                        },
                    )
                })
                .collect();
            runs.push((
                "permanent".into(),
                Strategy::ConstantPermanent {
                    t_start: t_i,
                    q: q_star.clone(),
                },
            ));
            compare(&ctx, 6, &natural, runs)
        }
        7 => {
            let period = overrides.period.unwrap_or(REGULATED_DEFAULT_PERIOD);
            let runs = grid_or(overrides, vec![40.0, 60.0, 80.0, 100.0, 110.0, 120.0, 130.0])
                .into_iter()
                .map(|ti| {
                    (
                        format!("t_I={ti}"),
                        Strategy::RegulatedSStar { t_start: ti, period },
                    )
                })
                .collect();
            let mut tables = compare(&ctx, 7, &natural, runs)?;
            for t in &mut tables {
                t.meta("period", period.to_string());
            }
            Ok(tables)
        }
        8 => {
            let period = overrides.period.unwrap_or(REGULATED_DEFAULT_PERIOD);
            let template = StrategyTemplate::RegulatedSStar { period };
            let grid = grid_or(overrides, range(40.0, 200.0, 10.0));
            let scan = scan_ti(&ctx.params, &template, &grid, &ctx.init, &ctx.cfg)?;
            let mut t = scan.to_table("fig8");
            ctx.stamp(&mut t, 8);
            t.meta("period", period.to_string())
                .meta("template", json(&template));
            Ok(vec![t])
        }
        9 => {
            let grid = grid_or(
                overrides,
                vec![
                    1.0, 5.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0, 120.0, 140.0,
                    160.0,
                ],
            );
            let scan = scan_delta(&ctx.params, t_i, &grid, &ctx.init, &ctx.cfg)?;
            let mut t = scan.to_table("fig9");
            t.columns.push("one_minus_S_inf".into());
            for (row, r) in t.rows.iter_mut().zip(&scan.rows) {
                row.push((1.0 - r.s_inf).into());
            }
            ctx.stamp(&mut t, 9);
            t.meta("t_I", t_i.to_string());
            Ok(vec![t])
        }
        _ => unreachable!("figure id checked above"),
    }
}
