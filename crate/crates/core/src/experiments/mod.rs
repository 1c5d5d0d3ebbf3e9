//! Reproducible experiments: figure data, parameter scans, randomized
//! proposition checks and isolation-threshold tables.

mod figures;
mod props;
mod quarantine;
mod scan;
mod table;

pub use figures::{run_figure, FigureOverrides, FIGURE_IDS};
pub use props::{
    asymptotic_trials, envelope_trials, finite_strategy_config, finite_strategy_trials, proposition_suite,
    random_finite_strategy, sign_structure_trials, wos_trials, Counterexample, ParamFamily, PropOutcome,
    PropositionReport,
};
pub use quarantine::{quarantine_analysis, seiaqr_s_star};
pub use scan::{
    extend_delta_until_plateau, scan_delta, scan_ti, NamedLevel, PlateauSearch, QLevel, ScanResult, ScanRow,
    StrategyTemplate,
};
pub use table::{format_num, Cell, Table};

use crate::error::Result;
use crate::integrator::{asymptotic_s, detect_tstar, EventKind, Trajectory};
use crate::model::{make_seiar, ModelParams, State};
use crate::strategy::Strategy;

/// Population used for the default initial condition (one exposed person).
pub const DEFAULT_POPULATION: f64 = 3e6;

/// SEIAR parameters of the COVID-19 scenario: `R0 = 3`, incubation 5 days,
/// infection 1.61 days, 86.2% asymptomatic with relative infectiousness 0.55.
pub fn table2_params() -> ModelParams {
    make_seiar(3.0, 0.2, 1.0 / 1.61, 0.862, 0.55).expect("built-in parameters are valid")
}

/// `E(0) = 1 / population`, everyone else susceptible.
pub fn default_init(params: &ModelParams, population: f64) -> Result<State> {
    State::single_exposed(params.n_stages(), population)
}

/// Outcome of a single run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub s_inf: f64,
    pub peak_e: f64,
    pub peak_time: f64,
    /// Time between strategy start and its observed end.
    pub duration: Option<f64>,
    pub n_peaks: usize,
}

pub fn summarize(trajectory: &Trajectory, strategy: &Strategy) -> Result<RunSummary> {
    let s_inf = asymptotic_s(trajectory)?;
    let (peak_e, t_sampled) = trajectory.max_e();
    let peak_time = detect_tstar(trajectory).unwrap_or(t_sampled);
    let duration = trajectory
        .controller
        .t_end_observed
        .zip(strategy.start_time())
        .map(|(end, start)| end - start);
    Ok(RunSummary {
        s_inf,
        peak_e,
        peak_time,
        duration,
        n_peaks: trajectory.events_of(EventKind::EPeak).count(),
    })
}

/// Columns `t, S, E, I_1..I_N, R, q_1..q_N, U, Vnorm`.
pub fn trajectory_table(name: &str, trajectory: &Trajectory, n_stages: usize) -> Table {
    let mut cols: Vec<String> = vec!["t".into(), "S".into(), "E".into()];
    cols.extend((1..=n_stages).map(|k| format!("I_{k}")));
    cols.push("R".into());
    cols.extend((1..=n_stages).map(|k| format!("q_{k}")));
    cols.push("U".into());
    cols.push("Vnorm".into());
    let mut table = Table::new(name, cols);
    for s in &trajectory.samples {
        let mut row: Vec<Cell> = vec![s.t.into(), s.state.s.into(), s.state.e.into()];
        row.extend(s.state.i.iter().map(|&v| Cell::from(v)));
        row.push(s.state.r.into());
        row.extend(s.q.iter().map(|&v| Cell::from(v)));
        row.push(s.u.into());
        row.push(s.v_norm.into());
        table.push(row);
    }
    table
}

/// Compact JSON of a serializable value for metadata lines.
pub(crate) fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).unwrap_or_else(|e| format!("<unserializable: {e}>"))
}
