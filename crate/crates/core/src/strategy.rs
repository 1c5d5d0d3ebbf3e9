//! Control strategies as a multiplier vector `q(t)` on the natural
//! reproduction numbers, and classification of executed strategies.
//!
//! `q(t)` is left-continuous: a breakpoint `t_k` opens the interval
//! `(t_k, t_{k+1}]`, so `q = 1` for every `t <= t_start`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::model::ModelParams;
use crate::threshold::{s_bar, s_star};

/// Slack used when checking `S(t) <= threshold(t)` pointwise.
pub const CLASSIFY_TOL: f64 = 1e-9;
/// Strategies whose components agree within this are uniform.
pub const UNIFORM_TOL: f64 = 1e-12;

/// Multipliers applied to the natural reproduction numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Multipliers {
    Uniform(f64),
    PerStage(Vec<f64>),
}

impl Multipliers {
    pub fn resolve(&self, n_stages: usize) -> Vec<f64> {
        match self {
            Self::Uniform(q) => vec![*q; n_stages],
            Self::PerStage(v) => v.clone(),
        }
    }

    fn values(&self) -> &[f64] {
        match self {
            Self::Uniform(q) => std::slice::from_ref(q),
            Self::PerStage(v) => v,
        }
    }

    fn is_uniform(&self) -> bool {
        is_uniform_slice(self.values())
    }

    fn validate(&self, n_stages: usize) -> Result<()> {
        if let Self::PerStage(v) = self {
            if v.len() != n_stages {
                return Err(Error::InvalidStrategy(format!(
                    "multiplier vector has {} entries, model has {} stages",
                    v.len(),
                    n_stages
                )));
            }
        }
        check_multipliers(self.values())
    }
}

fn is_uniform_slice(v: &[f64]) -> bool {
    v.iter().all(|x| (x - v[0]).abs() <= UNIFORM_TOL)
}

fn check_multipliers(v: &[f64]) -> Result<()> {
    match v.iter().find(|x| !(**x >= 0.0 && x.is_finite())) {
        Some(&bad) => Err(Error::Domain {
            what: "q",
            value: bad,
            expected: "multiplier must be non-negative",
        }),
        None => Ok(()),
    }
}

fn check_time(what: &str, t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidStrategy(format!(
            "{what} = {t} must be a finite non-negative time"
        )))
    }
}

/// A control strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Strategy {
    /// No intervention.
    Natural {},
    /// `q` from `t_start` onwards.
    ConstantPermanent { t_start: f64, q: Multipliers },
    /// `q` on `(t_start, t_end]`, natural afterwards.
    ConstantFinite {
        t_start: f64,
        t_end: f64,
        q: Multipliers,
    },
    /// Uniform feedback on S: at `t_i = t_start + i * period` the control is
    /// set to `min(1, S0* / S(t_i))` and held until `t_{i+1}`; it ends at the
    /// first sample with `S(t_i) <= S0*`.
    RegulatedSStar { t_start: f64, period: f64 },
    /// Uniform multiplier switching at the listed `(time, q)` breakpoints.
    PiecewiseUniform { breakpoints: Vec<(f64, f64)> },
    /// Per-stage multipliers switching at the listed breakpoints.
    PerStagePiecewise { breakpoints: Vec<(f64, Vec<f64>)> },
}

impl Strategy {
    pub fn validate(&self, n_stages: usize) -> Result<()> {
        match self {
            Self::Natural {} => Ok(()),
            Self::ConstantPermanent { t_start, q } => {
                check_time("t_start", *t_start)?;
                q.validate(n_stages)
            }
            Self::ConstantFinite { t_start, t_end, q } => {
                check_time("t_start", *t_start)?;
                check_time("t_end", *t_end)?;
                if t_end <= t_start {
                    return Err(Error::InvalidStrategy(format!(
                        "t_end = {t_end} must be later than t_start = {t_start}"
                    )));
                }
                q.validate(n_stages)
            }
            Self::RegulatedSStar { t_start, period } => {
                check_time("t_start", *t_start)?;
                if !(*period > 0.0 && period.is_finite()) {
                    return Err(Error::InvalidStrategy(format!(
                        "period = {period} must be positive"
                    )));
                }
                Ok(())
            }
            Self::PiecewiseUniform { breakpoints } => {
                let times: Vec<f64> = breakpoints.iter().map(|b| b.0).collect();
                check_breakpoint_times(&times)?;
                check_multipliers(&breakpoints.iter().map(|b| b.1).collect::<Vec<_>>())
            }
            Self::PerStagePiecewise { breakpoints } => {
                let times: Vec<f64> = breakpoints.iter().map(|b| b.0).collect();
                check_breakpoint_times(&times)?;
                for (t, q) in breakpoints {
                    if q.len() != n_stages {
                        return Err(Error::InvalidStrategy(format!(
                            "breakpoint at t = {t} has {} multipliers, model has {n_stages} stages",
                            q.len()
                        )));
                    }
                    check_multipliers(q)?;
                }
                Ok(())
            }
        }
    }

    /// Time at which control begins, `None` for the natural course.
    pub fn start_time(&self) -> Option<f64> {
        match self {
            Self::Natural {} => None,
            Self::ConstantPermanent { t_start, .. }
            | Self::ConstantFinite { t_start, .. }
            | Self::RegulatedSStar { t_start, .. } => Some(*t_start),
            Self::PiecewiseUniform { breakpoints } => breakpoints.first().map(|b| b.0),
            Self::PerStagePiecewise { breakpoints } => breakpoints.first().map(|b| b.0),
        }
    }

    /// Every stage is scaled by the same multiplier at all times.
    pub fn is_uniform(&self) -> bool {
        match self {
            Self::Natural {} | Self::RegulatedSStar { .. } | Self::PiecewiseUniform { .. } => true,
            Self::ConstantPermanent { q, .. } | Self::ConstantFinite { q, .. } => q.is_uniform(),
            Self::PerStagePiecewise { breakpoints } => breakpoints.iter().all(|(_, q)| is_uniform_slice(q)),
        }
    }

    /// Any multiplier above one, i.e. an intervention that raises transmission.
    pub fn has_aggravating_multiplier(&self) -> bool {
        match self {
            Self::Natural {} | Self::RegulatedSStar { .. } => false,
            Self::ConstantPermanent { q, .. } | Self::ConstantFinite { q, .. } => {
                q.values().iter().any(|v| *v > 1.0)
            }
            Self::PiecewiseUniform { breakpoints } => breakpoints.iter().any(|b| b.1 > 1.0),
            Self::PerStagePiecewise { breakpoints } => {
                breakpoints.iter().any(|b| b.1.iter().any(|v| *v > 1.0))
            }
        }
    }

    /// Fixed discontinuity times of `q`; regulated sample times are dynamic.
    pub fn static_breakpoints(&self) -> Vec<f64> {
        match self {
            Self::Natural {} => vec![],
            Self::ConstantPermanent { t_start, .. } | Self::RegulatedSStar { t_start, .. } => {
                vec![*t_start]
            }
            Self::ConstantFinite { t_start, t_end, .. } => vec![*t_start, *t_end],
            Self::PiecewiseUniform { breakpoints } => breakpoints.iter().map(|b| b.0).collect(),
            Self::PerStagePiecewise { breakpoints } => breakpoints.iter().map(|b| b.0).collect(),
        }
    }

    /// Final multiplier of a non-regulated strategy, `None` for natural.
    fn final_level(&self, n_stages: usize) -> Option<Vec<f64>> {
        match self {
            Self::Natural {} | Self::RegulatedSStar { .. } => None,
            Self::ConstantPermanent { q, .. } => Some(q.resolve(n_stages)),
            Self::ConstantFinite { .. } => Some(vec![1.0; n_stages]),
            Self::PiecewiseUniform { breakpoints } => breakpoints.last().map(|b| vec![b.1; n_stages]),
            Self::PerStagePiecewise { breakpoints } => breakpoints.last().map(|b| b.1.clone()),
        }
    }

    /// Time after which a non-regulated strategy is back at `q = 1` for good.
    fn scheduled_end(&self, n_stages: usize) -> Option<f64> {
        let back_to_normal = self
            .final_level(n_stages)
            .is_some_and(|q| q.iter().all(|v| *v == 1.0));
        if !back_to_normal {
            return None;
        }
        match self {
            Self::ConstantFinite { t_end, .. } => Some(*t_end),
            Self::PiecewiseUniform { breakpoints } if breakpoints.len() > 1 => {
                breakpoints.last().map(|b| b.0)
            }
            Self::PerStagePiecewise { breakpoints } if breakpoints.len() > 1 => {
                breakpoints.last().map(|b| b.0)
            }
            _ => None,
        }
    }
}

fn check_breakpoint_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidStrategy(
            "piecewise strategy needs at least one breakpoint".into(),
        ));
    }
    for &t in times {
        check_time("breakpoint", t)?;
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidStrategy(
            "breakpoint times must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Mutable part of a strategy, threaded explicitly through integration.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    /// Next time the regulated controller samples `S` (infinite otherwise).
    pub next_sample_time: f64,
    /// Multiplier held since the last sample.
    pub held_q: Vec<f64>,
    /// The strategy has returned to `q = 1` for good.
    pub finished: bool,
    pub t_end_observed: Option<f64>,
    samples_taken: u64,
    s_target: Option<f64>,
}

impl ControllerState {
    pub fn new(strategy: &Strategy, params: &ModelParams) -> Result<Self> {
        strategy.validate(params.n_stages())?;
        let (next_sample_time, s_target) = match strategy {
            Strategy::RegulatedSStar { t_start, .. } => {
                (*t_start, Some(s_star(params, &params.identity_control())?))
            }
            _ => (f64::INFINITY, None),
        };
        Ok(Self {
            next_sample_time,
            held_q: params.identity_control(),
            finished: matches!(strategy, Strategy::Natural {}),
            t_end_observed: None,
            samples_taken: 0,
            s_target,
        })
    }

    /// Threshold the regulated controller steers towards (`S0*`).
    pub fn s_target(&self) -> Option<f64> {
        self.s_target
    }

    pub fn samples_taken(&self) -> u64 {
        self.samples_taken
    }
}

fn level_at<Q>(breakpoints: &[(f64, Q)], t: f64) -> Option<&Q> {
    breakpoints
        .iter()
        .take_while(|(bt, _)| *bt < t)
        .last()
        .map(|(_, q)| q)
}

/// Control vector in force at `t`.
///
/// For regulated strategies the first query past a pending sample time `t_i`
/// consumes `s_sample`, which must be `S(t_i)`. Queries may not jump over a
/// whole period.
pub fn q_at(
    strategy: &Strategy,
    ctrl: &ControllerState,
    t: f64,
    s_sample: Option<f64>,
) -> Result<(Vec<f64>, ControllerState)> {
    let n = ctrl.held_q.len();
    let mut next = ctrl.clone();
    let q = match strategy {
        Strategy::Natural {} => vec![1.0; n],
        Strategy::ConstantPermanent { t_start, q } => {
            if t <= *t_start {
                vec![1.0; n]
            } else {
                q.resolve(n)
            }
        }
        Strategy::ConstantFinite { t_start, t_end, q } => {
            if t <= *t_start || t > *t_end {
                vec![1.0; n]
            } else {
                q.resolve(n)
            }
        }
        Strategy::RegulatedSStar { t_start, period } => {
            if t <= *t_start || ctrl.finished {
                vec![1.0; n]
            } else if t > ctrl.next_sample_time {
                let following = t_start + (ctrl.samples_taken + 1) as f64 * period;
                if t > following {
                    return Err(Error::SkippedSample {
                        expected: ctrl.next_sample_time,
                        t,
                    });
                }
                let s = s_sample.ok_or(Error::MissingSample {
                    t: ctrl.next_sample_time,
                })?;
                let target = ctrl.s_target.expect("regulated controller carries its target");
                let sample_time = ctrl.next_sample_time;
                next.samples_taken += 1;
                if s > target {
                    next.held_q = vec![target / s; n];
                    next.next_sample_time = t_start + next.samples_taken as f64 * period;
                } else {
                    next.finished = true;
                    next.t_end_observed = Some(sample_time);
                    next.held_q = vec![1.0; n];
                    next.next_sample_time = f64::INFINITY;
                }
                next.held_q.clone()
            } else {
                ctrl.held_q.clone()
            }
        }
        Strategy::PiecewiseUniform { breakpoints } => match level_at(breakpoints, t) {
            Some(q) => vec![*q; n],
            None => vec![1.0; n],
        },
        Strategy::PerStagePiecewise { breakpoints } => match level_at(breakpoints, t) {
            Some(q) => q.clone(),
            None => vec![1.0; n],
        },
    };
    if let Some(end) = strategy.scheduled_end(n) {
        if t > end {
            next.finished = true;
            next.t_end_observed = Some(end);
        }
    }
    if !matches!(strategy, Strategy::RegulatedSStar { .. }) {
        next.held_q = q.clone();
    }
    Ok((q, next))
}

/// Control vector at `t` without consuming a regulated sample.
pub fn current_q(strategy: &Strategy, ctrl: &ControllerState, t: f64) -> Result<Vec<f64>> {
    match strategy {
        Strategy::RegulatedSStar { t_start, .. } => {
            if t <= *t_start || ctrl.finished {
                Ok(vec![1.0; ctrl.held_q.len()])
            } else {
                Ok(ctrl.held_q.clone())
            }
        }
        _ => q_at(strategy, ctrl, t, None).map(|(q, _)| q),
    }
}

/// Next discontinuity of `q` strictly after `t`.
pub fn next_discontinuity(strategy: &Strategy, ctrl: &ControllerState, t: f64) -> Option<f64> {
    let fixed = strategy.static_breakpoints().into_iter().find(|bt| *bt > t);
    let sample = match strategy {
        Strategy::RegulatedSStar { t_start, period } if !ctrl.finished => {
            if ctrl.next_sample_time > t {
                Some(ctrl.next_sample_time)
            } else {
                // The sample at `next_sample_time` is pending; the one after it bounds the segment.
                Some(t_start + (ctrl.samples_taken + 1) as f64 * period)
            }
        }
        _ => None,
    };
    match (fixed, sample) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
}

/// No further change of `q` can happen after `t`.
pub fn is_settled(strategy: &Strategy, ctrl: &ControllerState, t: f64) -> bool {
    match strategy {
        Strategy::RegulatedSStar { .. } => ctrl.finished,
        _ => next_discontinuity(strategy, ctrl, t).is_none(),
    }
}

/// Time-dependent thresholds under the control active at `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub s_bar: f64,
    pub s_star: f64,
}

/// `S_bar(t)` and `S*(t)` for the control in force at `t`.
pub fn thresholds_at(
    strategy: &Strategy,
    ctrl: &ControllerState,
    params: &ModelParams,
    t: f64,
) -> Result<Thresholds> {
    let q = current_q(strategy, ctrl, t)?;
    Ok(Thresholds {
        s_bar: s_bar(params, &q)?,
        s_star: s_star(params, &q)?,
    })
}

/// Critical susceptible function `S_q(t) = S0* / q(t)` of a uniform strategy.
pub fn critical_susceptible(
    strategy: &Strategy,
    ctrl: &ControllerState,
    params: &ModelParams,
    t: f64,
) -> Result<f64> {
    if !strategy.is_uniform() {
        return Err(Error::InvalidStrategy(
            "critical susceptible function needs a uniform strategy".into(),
        ));
    }
    let q = current_q(strategy, ctrl, t)?;
    let s0 = s_star(params, &params.identity_control())?;
    if q[0] > 0.0 {
        Ok(s0 / q[0])
    } else {
        Err(Error::NoThreshold)
    }
}

/// Taxonomy of an executed strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyClassification {
    pub is_finite: bool,
    pub is_permanent: bool,
    pub is_uniform: bool,
    /// `S(t) <= S_bar(t)` at every sample after the start.
    pub is_nos: bool,
    /// `S(t) <= S*(t)` at every sample after the start.
    pub is_wos: bool,
    pub observed_t_end: Option<f64>,
}

fn below(s: f64, threshold: Result<f64>) -> Result<bool> {
    match threshold {
        Ok(th) => Ok(s <= th + CLASSIFY_TOL),
        Err(Error::NoThreshold) => Ok(true),
        Err(e) => Err(e),
    }
}

/// Classifies `strategy` from its specification and its executed trajectory.
pub fn classify(
    strategy: &Strategy,
    params: &ModelParams,
    trajectory: &Trajectory,
) -> Result<StrategyClassification> {
    let n = params.n_stages();
    let end = &trajectory.controller;
    let t_last = trajectory.samples.last().map_or(0.0, |s| s.t);
    if matches!(strategy, Strategy::RegulatedSStar { .. }) && !end.finished {
        return Err(Error::InsufficientHorizon { t_end: t_last });
    }
    let (is_finite, is_permanent) = match strategy {
        Strategy::Natural {} => (false, false),
        Strategy::RegulatedSStar { .. } => (true, false),
        _ => {
            let last = strategy.final_level(n).unwrap_or_else(|| vec![1.0; n]);
            let permanent = last.iter().any(|v| *v != 1.0);
            (strategy.scheduled_end(n).is_some(), permanent)
        }
    };
    let t_start = strategy.start_time().unwrap_or(0.0);
    let mut is_nos = true;
    let mut is_wos = true;
    for sample in trajectory.samples.iter().filter(|s| s.t > t_start) {
        let s = sample.state.s;
        if is_nos && !below(s, s_bar(params, &sample.q))? {
            is_nos = false;
        }
        if is_wos && !below(s, s_star(params, &sample.q))? {
            is_wos = false;
        }
        if !is_nos && !is_wos {
            break;
        }
    }
    let observed_t_end = end.t_end_observed.filter(|t| *t <= t_last);
    Ok(StrategyClassification {
        is_finite,
        is_permanent,
        is_uniform: strategy.is_uniform(),
        is_nos,
        is_wos,
        observed_t_end,
    })
}
