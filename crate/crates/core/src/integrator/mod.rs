//! Adaptive integration of the model under a control strategy.
//!
//! Integration is split into segments at every discontinuity of `q(t)`; a
//! segment `(a, b]` uses the control returned by [`q_at`] at `b`, with the
//! regulated controller sampling `S(a)`.

mod analysis;
mod dopri;

pub use analysis::{asymptotic_s, detect_tstar, sign_structure_check, SignPhase, SignReport, SignViolation};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{rhs_into, ModelParams, State};
use crate::strategy::{is_settled, next_discontinuity, q_at, ControllerState, Strategy};
use crate::threshold::{lyapunov_u_unchecked, s_bar, s_star, weighted_reproduction};
use dopri::Dopri5;

/// Abort when `|S + E + sum(I) + R - 1|` exceeds this.
pub const DRIFT_LIMIT: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrationConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Days.
    pub max_step: f64,
    /// Days.
    pub t_max: f64,
    /// Stop once `E + sum(I) < quiescence_eps` and the strategy is settled.
    pub quiescence_eps: f64,
    /// Spacing of the regular output grid, in days.
    pub output_stride: f64,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            max_step: 5.0,
            t_max: 2e5,
            quiescence_eps: 1e-12,
            output_stride: 1.0,
        }
    }
}

impl IntegrationConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("max_step", self.max_step),
            ("t_max", self.t_max),
            ("quiescence_eps", self.quiescence_eps),
            ("output_stride", self.output_stride),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} = {v} must be positive")));
            }
        }
        Ok(())
    }
}

/// One recorded point of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub state: State,
    /// Control in force on the segment ending at `t`.
    pub q: Vec<f64>,
    /// `None` when the control suppresses all transmission.
    pub u: Option<f64>,
    pub v_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    EPeak,
    SCrossesSBar,
    SCrossesSStar,
    StrategyStart,
    StrategyEnd,
    Quiescence,
}

impl EventKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::EPeak => "e-peak",
            Self::SCrossesSBar => "s-crosses-s-bar",
            Self::SCrossesSStar => "s-crosses-s-star",
            Self::StrategyStart => "strategy-start",
            Self::StrategyEnd => "strategy-end",
            Self::Quiescence => "quiescence",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub events: Vec<Event>,
    /// Controller state when integration stopped.
    pub controller: ControllerState,
    pub quiescent: bool,
}

impl Trajectory {
    pub fn last(&self) -> &Sample {
        self.samples
            .last()
            .expect("trajectory holds at least the initial sample")
    }

    pub fn t_end(&self) -> f64 {
        self.last().t
    }

    pub fn events_of(&self, kind: EventKind) -> impl Iterator<Item = &Event> + '_ {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    /// E-peaks: strict local maxima of E above `quiescence_eps * 1e3`.
    pub fn peak_times(&self) -> Vec<f64> {
        self.events_of(EventKind::EPeak).map(|e| e.t).collect()
    }

    /// Largest sampled E and its time.
    pub fn max_e(&self) -> (f64, f64) {
        self.samples.iter().fold((f64::NEG_INFINITY, 0.0), |(m, tm), s| {
            if s.state.e > m {
                (s.state.e, s.t)
            } else {
                (m, tm)
            }
        })
    }

    /// Packed state linearly interpolated between the bracketing samples.
    pub fn interpolate(&self, t: f64) -> Option<Vec<f64>> {
        let idx = self.samples.partition_point(|s| s.t < t);
        if idx == self.samples.len() {
            return None;
        }
        let hi = &self.samples[idx];
        if hi.t == t || idx == 0 {
            return (hi.t == t).then(|| hi.state.to_vec());
        }
        let lo = &self.samples[idx - 1];
        let w = (t - lo.t) / (hi.t - lo.t);
        Some(
            lo.state
                .to_vec()
                .iter()
                .zip(hi.state.to_vec())
                .map(|(a, b)| a + w * (b - a))
                .collect(),
        )
    }
}

struct Recorder<'a> {
    params: &'a ModelParams,
    samples: Vec<Sample>,
    events: Vec<Event>,
    peak_floor: f64,
    // Last two accepted step points (t, E) for peak detection.
    prev: [(f64, f64); 2],
    n_points: usize,
}

impl<'a> Recorder<'a> {
    fn push_sample(&mut self, t: f64, y: &[f64], q: &[f64]) -> Result<()> {
        if self.samples.last().is_some_and(|s| s.t >= t) {
            return Ok(());
        }
        let state = State::from_slice(y)?;
        let weighted = weighted_reproduction(self.params, q)?;
        let u = (weighted > 0.0).then(|| lyapunov_u_unchecked(self.params, q, weighted, &state.i, state.e));
        let v_norm = state.v_norm();
        self.samples.push(Sample {
            t,
            state,
            q: q.to_vec(),
            u,
            v_norm,
        });
        Ok(())
    }

    fn observe_point(&mut self, t: f64, e: f64) {
        let [(t0, e0), (t1, e1)] = self.prev;
        if self.n_points >= 2 && e1 > e0 && e1 > e && e1 > self.peak_floor {
            self.events.push(Event {
                t: parabola_vertex((t0, e0), (t1, e1), (t, e)),
                kind: EventKind::EPeak,
            });
        }
        self.prev = [(t1, e1), (t, e)];
        self.n_points += 1;
    }

    fn event(&mut self, t: f64, kind: EventKind) {
        self.events.push(Event { t, kind });
    }
}

/// Abscissa of the vertex of the parabola through three points.
pub(crate) fn parabola_vertex(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    let (x0, y0) = a;
    let (x1, y1) = b;
    let (x2, y2) = c;
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let curv = (d12 - d01) / (x2 - x0);
    if curv >= 0.0 || !curv.is_finite() {
        return x1;
    }
    // p(x) = y0 + d01 (x - x0) + curv (x - x0)(x - x1)
    let vertex = 0.5 * (x0 + x1) - d01 / (2.0 * curv);
    vertex.clamp(x0, x2)
}

fn threshold_or_inf(v: Result<f64>) -> Result<f64> {
    match v {
        Ok(x) => Ok(x),
        Err(Error::NoThreshold) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Copy)]
struct Thresholds {
    bar: f64,
    star: f64,
}

impl Thresholds {
    fn of(params: &ModelParams, q: &[f64]) -> Result<Self> {
        Ok(Self {
            bar: threshold_or_inf(s_bar(params, q))?,
            star: threshold_or_inf(s_star(params, q))?,
        })
    }
}

fn infected(y: &[f64]) -> f64 {
    y[1..y.len() - 1].iter().sum()
}

fn check_drift(t: f64, y: &[f64]) -> Result<()> {
    let drift = y.iter().sum::<f64>() - 1.0;
    if drift.abs() > DRIFT_LIMIT {
        return Err(Error::ConservationDrift { t, drift });
    }
    Ok(())
}

/// Integrates from `t = 0` until quiescence or `cfg.t_max`.
pub fn integrate(
    params: &ModelParams,
    strategy: &Strategy,
    init: &State,
    cfg: &IntegrationConfig,
) -> Result<Trajectory> {
    params.validate()?;
    cfg.validate()?;
    let n = params.n_stages();
    if init.n_stages() != n {
        return Err(Error::InvalidState(format!(
            "initial state has {} stages, model has {n}",
            init.n_stages()
        )));
    }
    let mut ctrl = ControllerState::new(strategy, params)?;
    let dim = n + 3;
    let mut y = init.to_vec();
    let mut t = 0.0;
    let mut q = params.identity_control();
    let mut th = Thresholds::of(params, &q)?;
    let mut rec = Recorder {
        params,
        samples: Vec::new(),
        events: Vec::new(),
        peak_floor: cfg.quiescence_eps * 1e3,
        prev: [(0.0, 0.0); 2],
        n_points: 0,
    };
    rec.push_sample(t, &y, &q)?;
    rec.observe_point(t, y[1]);

    let start = strategy.start_time();
    let mut out_index: u64 = 1;
    let mut stepper = Dopri5::new(dim, cfg.rel_tol, cfg.abs_tol);
    let mut h = 0.0;
    let mut quiescent = false;

    'segments: loop {
        let seg_end = next_discontinuity(strategy, &ctrl, t);
        let probe = seg_end.unwrap_or(t + 1.0);
        let was_finished = ctrl.finished;
        let (q_seg, next_ctrl) = q_at(strategy, &ctrl, probe, Some(y[0]))?;
        ctrl = next_ctrl;
        if start == Some(t) {
            rec.event(t, EventKind::StrategyStart);
        }
        if ctrl.finished && !was_finished {
            rec.event(ctrl.t_end_observed.unwrap_or(t), EventKind::StrategyEnd);
        }
        if q_seg != q {
            let th_new = Thresholds::of(params, &q_seg)?;
            if (y[0] > th.bar) != (y[0] > th_new.bar) {
                rec.event(t, EventKind::SCrossesSBar);
            }
            if (y[0] > th.star) != (y[0] > th_new.star) {
                rec.event(t, EventKind::SCrossesSStar);
            }
            th = th_new;
            q = q_seg;
        }
        if infected(&y) < cfg.quiescence_eps && is_settled(strategy, &ctrl, t) {
            quiescent = true;
            rec.event(t, EventKind::Quiescence);
            break;
        }
        if t >= cfg.t_max {
            break;
        }

        let stop = seg_end.unwrap_or(f64::INFINITY).min(cfg.t_max);
        let settled = is_settled(strategy, &ctrl, t);
        let qv = q.clone();
        let mut f = |yy: &[f64], dy: &mut [f64]| rhs_into(params, yy, &qv, dy);
        stepper.reset(&mut f, &y);
        if h == 0.0 {
            h = stepper.initial_step(&mut f, &y, cfg.max_step);
        }

        while t < stop {
            let next_out = out_index as f64 * cfg.output_stride;
            let target = stop.min(next_out);
            let remaining = target - t;
            let mut h_try = h.min(cfg.max_step);
            let land = h_try >= remaining;
            if land {
                h_try = remaining;
            }
            let err = stepper.try_step(&mut f, &y, h_try);
            if err.is_nan() || err > 1.0 {
                h = h_try * stepper.factor(if err.is_finite() { err } else { 1e10 }, false);
                if h < 1e-14 * t.abs().max(1.0) {
                    return Err(Error::StepSizeUnderflow { t, h });
                }
                continue;
            }
            let t_new = if land { target } else { t + h_try };
            check_drift(t_new, &stepper.ynew)?;
            let s_old = y[0];
            let s_new = stepper.ynew[0];
            for (thv, kind) in [
                (th.bar, EventKind::SCrossesSBar),
                (th.star, EventKind::SCrossesSStar),
            ] {
                if (s_old > thv) != (s_new > thv) {
                    let w = (s_old - thv) / (s_old - s_new);
                    rec.event(t + w * (t_new - t), kind);
                }
            }
            rec.observe_point(t_new, stepper.ynew[1]);
            y.copy_from_slice(&stepper.ynew);
            stepper.accept(err);
            let grown = h_try * stepper.factor(err, true);
            h = if land && h_try < h { h.max(grown) } else { grown };
            t = t_new;

            if land && t == next_out {
                rec.push_sample(t, &y, &q)?;
                out_index += 1;
            }
            if t == stop {
                rec.push_sample(t, &y, &q)?;
            }
            if settled && infected(&y) < cfg.quiescence_eps {
                rec.push_sample(t, &y, &q)?;
                quiescent = true;
                rec.event(t, EventKind::Quiescence);
                break 'segments;
            }
        }
    }

    if rec.samples.last().is_some_and(|s| s.t < t) {
        rec.push_sample(t, &y, &q)?;
    }
    rec.events
        .sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap_or(std::cmp::Ordering::Equal));
    Ok(Trajectory {
        samples: rec.samples,
        events: rec.events,
        controller: ctrl,
        quiescent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_seiar;
    use crate::strategy::Multipliers;

    fn table2() -> ModelParams {
        make_seiar(3.0, 0.2, 1.0 / 1.61, 0.862, 0.55).unwrap()
    }

    #[test]
    fn fixed_point_is_quiescent_immediately() {
        let p = table2();
        let init = State::new(0.7, 0.0, vec![0.0, 0.0], 0.3).unwrap();
        let tr = integrate(&p, &Strategy::Natural {}, &init, &IntegrationConfig::default()).unwrap();
        assert!(tr.quiescent);
        assert_eq!(tr.samples.len(), 1);
        assert_eq!(tr.t_end(), 0.0);
        assert_eq!(tr.events_of(EventKind::Quiescence).next().unwrap().t, 0.0);
    }

    #[test]
    fn segments_hit_breakpoints_and_grid() {
        let p = table2();
        let st = Strategy::ConstantFinite {
            t_start: 10.5,
            t_end: 20.25,
            q: Multipliers::Uniform(0.5),
        };
        let init = State::single_exposed(2, 1e4).unwrap();
        let cfg = IntegrationConfig {
            t_max: 30.0,
            ..Default::default()
        };
        let tr = integrate(&p, &st, &init, &cfg).unwrap();
        let times: Vec<f64> = tr.samples.iter().map(|s| s.t).collect();
        assert!(times.contains(&10.5));
        assert!(times.contains(&20.25));
        assert!(times.contains(&17.0));
        assert!(times.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(tr.t_end(), 30.0);
        assert!(!tr.quiescent);
        let at = |t: f64| tr.samples.iter().find(|s| s.t == t).unwrap();
        assert_eq!(at(10.5).q, vec![1.0, 1.0]);
        assert_eq!(at(11.0).q, vec![0.5, 0.5]);
        assert_eq!(at(20.25).q, vec![0.5, 0.5]);
        assert_eq!(at(21.0).q, vec![1.0, 1.0]);
        let kinds: Vec<EventKind> = tr.events.iter().map(|e| e.kind).collect();
        assert!(kinds.contains(&EventKind::StrategyStart));
        assert!(kinds.contains(&EventKind::StrategyEnd));
    }

    #[test]
    fn sample_diagnostics_are_consistent() {
        let p = table2();
        let init = State::single_exposed(2, 1e3).unwrap();
        let cfg = IntegrationConfig {
            t_max: 60.0,
            ..Default::default()
        };
        let tr = integrate(&p, &Strategy::Natural {}, &init, &cfg).unwrap();
        for s in &tr.samples {
            assert!((s.v_norm - s.state.v_norm()).abs() <= 1e-12);
            assert!((s.state.total() - 1.0).abs() <= 1e-9);
            let u = s.u.unwrap();
            let direct = crate::threshold::lyapunov_u(&p, &s.q, &s.state).unwrap();
            assert_eq!(u, direct);
        }
    }

    #[test]
    fn parabola_vertex_recovers_symmetric_peak() {
        let v = parabola_vertex((0.0, 0.0), (1.0, 1.0), (3.0, -3.0));
        // y = -x^2 + 2x has its vertex at 1; through (0,0),(1,1),(3,-3).
        assert!((v - 1.0).abs() < 1e-14);
    }

    #[test]
    fn invalid_config_rejected() {
        let p = table2();
        let init = State::single_exposed(2, 1e3).unwrap();
        let cfg = IntegrationConfig {
            rel_tol: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            integrate(&p, &Strategy::Natural {}, &init, &cfg),
            Err(Error::InvalidConfig(_))
        ));
    }
}
