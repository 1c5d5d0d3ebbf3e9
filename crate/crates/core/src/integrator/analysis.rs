//! Post-processing of trajectories: asymptotic susceptibles, the critical
//! time of an outbreak, and the sign pattern of `(E', J')` in the equal-gamma
//! reduction.

use serde::Serialize;

use super::{parabola_vertex, Trajectory};
use crate::error::{Error, Result};
use crate::model::{ModelParams, ReducedSystem};

/// Dead-band on finite-difference derivatives.
pub const SIGN_DEADBAND: f64 = 1e-12;

/// Final S of a trajectory that reached quiescence.
pub fn asymptotic_s(trajectory: &Trajectory) -> Result<f64> {
    if !trajectory.quiescent {
        return Err(Error::NotQuiescent {
            t_end: trajectory.t_end(),
        });
    }
    let s = trajectory.last().state.s;
    debug_assert!(s > 0.0);
    Ok(s)
}

fn tstar_from(trajectory: &Trajectory, from: usize) -> Option<f64> {
    let samples = &trajectory.samples[from..];
    let (k, _) = samples
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bk, be), (k, s)| {
            if s.state.e > be {
                (k, s.state.e)
            } else {
                (bk, be)
            }
        });
    if k == 0 || k + 1 == samples.len() {
        return None;
    }
    let p = |j: usize| (samples[j].t, samples[j].state.e);
    Some(parabola_vertex(p(k - 1), p(k), p(k + 1)))
}

/// Time of the global maximum of E, refined by a parabola through the three
/// samples around the discrete maximum.
pub fn detect_tstar(trajectory: &Trajectory) -> Result<f64> {
    tstar_from(trajectory, 0).ok_or(Error::NoOutbreak)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignPhase {
    /// Between cone entry and `t*`: both derivatives must be positive.
    Rising,
    /// After `t*`: both derivatives must be negative.
    Falling,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignViolation {
    /// Start of the sample interval.
    pub t: f64,
    pub phase: SignPhase,
    /// `"E"` or `"J"`.
    pub variable: &'static str,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignReport {
    /// First sample inside the outbreak cone.
    pub t_entry: f64,
    pub t_star: f64,
    /// Time of the maximum of J, located like `t_star`.
    pub t_j_peak: f64,
    pub intervals_checked: usize,
    pub violations: Vec<SignViolation>,
}

impl SignReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn first_violation(&self) -> Option<&SignViolation> {
        self.violations.first()
    }
}

/// Checks that `E` and `J = sum(e_i I_i)` both rise between entry into the
/// outbreak cone and `t*`, and both fall after it.
///
/// The cone is `sigma / (beta S) <= J / E <= sigma_bar / gamma`; it is
/// non-empty only while `S >= S*`. If `E` never rises after entry, `t*` is the
/// entry time.
pub fn sign_structure_check(trajectory: &Trajectory, params: &ModelParams) -> Result<SignReport> {
    let r_ref = params.stages.iter().map(|s| s.r_natural).fold(0.0, f64::max);
    if r_ref <= 0.0 {
        return Err(Error::NoThreshold);
    }
    let red = ReducedSystem::new(params, r_ref)?;
    let sej: Vec<(f64, f64, f64, f64)> = trajectory
        .samples
        .iter()
        .map(|s| {
            let p = red.project(&s.state);
            (s.t, p.s, p.e, p.j)
        })
        .collect();

    const CONE_SLACK: f64 = 1e-9;
    let j_over_e_max = red.sigma_bar / red.gamma;
    let entry = sej.iter().position(|&(_, s, e, j)| {
        e > 0.0 && s > 0.0 && {
            let ratio = j / e;
            let lower = red.sigma / (red.beta * s);
            ratio >= lower * (1.0 - CONE_SLACK) && ratio <= j_over_e_max * (1.0 + CONE_SLACK)
        }
    });
    let entry = entry.ok_or(Error::NotOutbreakCondition)?;
    let t_entry = sej[entry].0;
    let t_star = tstar_from(trajectory, entry).unwrap_or(t_entry);

    let tail = &sej[entry..];
    let t_j_peak = {
        let (k, _) =
            tail.iter().enumerate().fold(
                (0, f64::NEG_INFINITY),
                |(bk, bj), (k, p)| if p.3 > bj { (k, p.3) } else { (bk, bj) },
            );
        if k == 0 || k + 1 == tail.len() {
            tail[k].0
        } else {
            parabola_vertex(
                (tail[k - 1].0, tail[k - 1].3),
                (tail[k].0, tail[k].3),
                (tail[k + 1].0, tail[k + 1].3),
            )
        }
    };

    let mut violations = Vec::new();
    let mut checked = 0;
    for w in tail.windows(2) {
        let (t0, _, e0, j0) = w[0];
        let (t1, _, e1, j1) = w[1];
        let phase = if t1 <= t_star {
            SignPhase::Rising
        } else if t0 >= t_star {
            SignPhase::Falling
        } else {
            continue;
        };
        checked += 1;
        let dt = t1 - t0;
        for (variable, slope) in [("E", (e1 - e0) / dt), ("J", (j1 - j0) / dt)] {
            let bad = match phase {
                SignPhase::Rising => slope < -SIGN_DEADBAND,
                SignPhase::Falling => slope > SIGN_DEADBAND,
            };
            if bad {
                violations.push(SignViolation {
                    t: t0,
                    phase,
                    variable,
                    slope,
                });
            }
        }
    }
    Ok(SignReport {
        t_entry,
        t_star,
        t_j_peak,
        intervals_checked: checked,
        violations,
    })
}
