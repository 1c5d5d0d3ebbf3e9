use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{summarize, Table};
use crate::error::{Error, Result};
use crate::integrator::{integrate, IntegrationConfig};
use crate::model::{ModelParams, State};
use crate::strategy::{Multipliers, Strategy};
use crate::threshold::s_star;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NamedLevel {
    /// `q = S0*`, the natural weak-outbreak threshold.
    SStar,
}

/// Control level of a template: a number, a per-stage vector or `"s-star"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QLevel {
    Value(Multipliers),
    Named(NamedLevel),
}

impl QLevel {
    pub fn resolve(&self, params: &ModelParams) -> Result<Multipliers> {
        match self {
            QLevel::Value(m) => Ok(m.clone()),
            QLevel::Named(NamedLevel::SStar) => {
                Ok(Multipliers::Uniform(s_star(params, &params.identity_control())?))
            }
        }
    }
}

/// A strategy with its start time left open.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StrategyTemplate {
    Natural {},
    ConstantPermanent {
        q: QLevel,
    },
    /// Runs for `duration` days after the start.
    ConstantFinite {
        duration: f64,
        q: QLevel,
    },
    /// Ends at the fixed time `t_end`.
    ConstantFiniteUntil {
        t_end: f64,
        q: QLevel,
    },
    RegulatedSStar {
        period: f64,
    },
}

impl StrategyTemplate {
    pub fn instantiate(&self, params: &ModelParams, t_start: f64) -> Result<Strategy> {
        let st = match self {
            Self::Natural {} => Strategy::Natural {},
            Self::ConstantPermanent { q } => Strategy::ConstantPermanent {
                t_start,
                q: q.resolve(params)?,
            },
            Self::ConstantFinite { duration, q } => Strategy::ConstantFinite {
                t_start,
                t_end: t_start + duration,
                q: q.resolve(params)?,
            },
            Self::ConstantFiniteUntil { t_end, q } => Strategy::ConstantFinite {
                t_start,
                t_end: *t_end,
                q: q.resolve(params)?,
            },
            Self::RegulatedSStar { period } => Strategy::RegulatedSStar {
                t_start,
                period: *period,
            },
        };
        st.validate(params.n_stages())?;
        Ok(st)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanRow {
    pub param_value: f64,
    pub s_inf: f64,
    pub peak_e: f64,
    pub peak_time: f64,
    pub strategy_duration: Option<f64>,
    pub n_peaks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub swept_param: String,
    pub units: String,
    pub rows: Vec<ScanRow>,
}

impl ScanResult {
    pub fn values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.param_value).collect()
    }

    pub fn s_inf(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.s_inf).collect()
    }

    /// Row with the largest `S_inf` (first one on ties).
    pub fn argmax_s_inf(&self) -> Option<&ScanRow> {
        self.rows
            .iter()
            .fold(None, |best: Option<&ScanRow>, r| match best {
                Some(b) if b.s_inf >= r.s_inf => Some(b),
                _ => Some(r),
            })
    }

    /// Smallest and largest swept value whose `S_inf` exceeds `baseline` by
    /// more than `threshold`.
    pub fn effect_window(&self, baseline: f64, threshold: f64) -> Option<(f64, f64)> {
        let hits: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.s_inf - baseline > threshold)
            .map(|r| r.param_value)
            .collect();
        Some((*hits.first()?, *hits.last()?))
    }

    pub fn to_table(&self, name: &str) -> Table {
        let mut t = Table::new(
            name,
            [
                self.swept_param.as_str(),
                "S_inf",
                "peak_E",
                "peak_time",
                "strategy_duration",
                "n_peaks",
            ],
        );
        t.meta("swept_param", format!("{} [{}]", self.swept_param, self.units));
        for r in &self.rows {
            t.push(vec![
                r.param_value.into(),
                r.s_inf.into(),
                r.peak_e.into(),
                r.peak_time.into(),
                r.strategy_duration.into(),
                r.n_peaks.into(),
            ]);
        }
        t
    }
}

fn check_grid(grid: &[f64], lo: f64, hi: f64, what: &str) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig(format!("{what} grid is empty")));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig(format!(
            "{what} grid must be strictly increasing"
        )));
    }
    if let Some(bad) = grid.iter().find(|v| !(**v > lo && **v < hi)) {
        return Err(Error::InvalidConfig(format!(
            "{what} = {bad} outside ({lo}, {hi})"
        )));
    }
    Ok(())
}

fn run_row(
    params: &ModelParams,
    strategy: &Strategy,
    init: &State,
    cfg: &IntegrationConfig,
    value: f64,
) -> Result<ScanRow> {
    let tr = integrate(params, strategy, init, cfg)?;
    let s = summarize(&tr, strategy)?;
    Ok(ScanRow {
        param_value: value,
        s_inf: s.s_inf,
        peak_e: s.peak_e,
        peak_time: s.peak_time,
        strategy_duration: s.duration,
        n_peaks: s.n_peaks,
    })
}

/// One full run per start time; rows come back in grid order.
pub fn scan_ti(
    params: &ModelParams,
    template: &StrategyTemplate,
    t_i_grid: &[f64],
    init: &State,
    cfg: &IntegrationConfig,
) -> Result<ScanResult> {
    check_grid(t_i_grid, 0.0, cfg.t_max, "t_I")?;
    let strategies = t_i_grid
        .iter()
        .map(|&t| template.instantiate(params, t))
        .collect::<Result<Vec<_>>>()?;
    let rows = strategies
        .par_iter()
        .zip(t_i_grid)
        .map(|(st, &t)| run_row(params, st, init, cfg, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScanResult {
        swept_param: "t_I".into(),
        units: "days".into(),
        rows,
    })
}

/// Regulated strategies started at `t_i` with each period in `delta_grid`.
pub fn scan_delta(
    params: &ModelParams,
    t_i: f64,
    delta_grid: &[f64],
    init: &State,
    cfg: &IntegrationConfig,
) -> Result<ScanResult> {
    check_grid(delta_grid, 0.0, f64::INFINITY, "period")?;
    let rows = delta_grid
        .par_iter()
        .map(|&d| {
            let st = Strategy::RegulatedSStar {
                t_start: t_i,
                period: d,
            };
            run_row(params, &st, init, cfg, d)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScanResult {
        swept_param: "period".into(),
        units: "days".into(),
        rows,
    })
}

/// Geometric period sweep used to find where `S_inf(period)` levels off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateauSearch {
    pub delta0: f64,
    pub growth: f64,
    /// Stop once consecutive `S_inf` values differ by less than this.
    pub tol: f64,
    pub max_points: usize,
}

/// Grows the period until `S_inf` stops changing or the point budget runs out.
pub fn extend_delta_until_plateau(
    params: &ModelParams,
    t_i: f64,
    init: &State,
    cfg: &IntegrationConfig,
    search: PlateauSearch,
) -> Result<ScanResult> {
    let PlateauSearch {
        delta0,
        growth,
        tol: plateau_tol,
        max_points,
    } = search;
    if !(delta0 > 0.0 && growth > 1.0) {
        return Err(Error::InvalidConfig("need delta0 > 0 and growth > 1".into()));
    }
    let mut rows: Vec<ScanRow> = Vec::new();
    let mut d = delta0;
    while rows.len() < max_points {
        let st = Strategy::RegulatedSStar {
            t_start: t_i,
            period: d,
        };
        let row = run_row(params, &st, init, cfg, d)?;
        let done = rows
            .last()
            .is_some_and(|p| (row.s_inf - p.s_inf).abs() < plateau_tol);
        rows.push(row);
        if done {
            break;
        }
        d *= growth;
    }
    Ok(ScanResult {
        swept_param: "period".into(),
        units: "days".into(),
        rows,
    })
}
