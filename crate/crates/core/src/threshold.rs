//! Susceptible thresholds for non-outbreak and weak-outbreak behaviour, the
//! Lyapunov-like function `U`, and isolation thresholds of the quarantine model.

use crate::error::{Error, Result};
use crate::model::{ModelParams, State};

/// `S_bar(q) = gamma_min / sum(x_i q_i beta_i)`.
///
/// Below this value every eigenvalue of the linearised infection block is
/// negative. Returns [`Error::NoThreshold`] when every effective transmission
/// term is zero.
pub fn s_bar(params: &ModelParams, q: &[f64]) -> Result<f64> {
    params.check_control(q)?;
    let weighted: f64 = params
        .stages
        .iter()
        .zip(q)
        .map(|(s, &qi)| s.x * qi * s.beta())
        .sum();
    if weighted > 0.0 {
        Ok(params.gamma_min() / weighted)
    } else {
        Err(Error::NoThreshold)
    }
}

/// `S*(q) = 1 / sum(x_i q_i R_i)`.
pub fn s_star(params: &ModelParams, q: &[f64]) -> Result<f64> {
    let weighted = weighted_reproduction(params, q)?;
    if weighted > 0.0 {
        Ok(1.0 / weighted)
    } else {
        Err(Error::NoThreshold)
    }
}

/// Effective reproduction number `sum(x_i q_i R_i)` of a fully susceptible population.
pub fn weighted_reproduction(params: &ModelParams, q: &[f64]) -> Result<f64> {
    params.check_control(q)?;
    Ok(params
        .stages
        .iter()
        .zip(q)
        .map(|(s, &qi)| s.x * qi * s.r_natural)
        .sum())
}

/// `U = E + sum_i (q_i R_i / sum_j x_j q_j R_j) I_i`.
///
/// Non-increasing whenever `S <= S*(q)` under a uniform control.
pub fn lyapunov_u(params: &ModelParams, q: &[f64], state: &State) -> Result<f64> {
    let weighted = weighted_reproduction(params, q)?;
    if weighted <= 0.0 {
        return Err(Error::NoThreshold);
    }
    Ok(lyapunov_u_unchecked(params, q, weighted, &state.i, state.e))
}

pub(crate) fn lyapunov_u_unchecked(
    params: &ModelParams,
    q: &[f64],
    weighted: f64,
    infectious: &[f64],
    e: f64,
) -> f64 {
    e + params
        .stages
        .iter()
        .zip(q)
        .zip(infectious)
        .map(|((s, &qi), &ii)| qi * s.r_natural / weighted * ii)
        .sum::<f64>()
}

/// Outcome of solving for the asymptomatic isolation needed to reach `S* >= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IsolationThreshold {
    /// Minimal asymptomatic isolation probability.
    Required(f64),
    /// Symptomatic isolation alone already gives `S* >= 1`.
    AlreadyNonOutbreak,
    /// Even isolating every asymptomatic case leaves `S* < 1`.
    Infeasible,
}

impl IsolationThreshold {
    pub fn value(&self) -> Option<f64> {
        match self {
            Self::Required(v) => Some(*v),
            Self::AlreadyNonOutbreak => Some(0.0),
            Self::Infeasible => None,
        }
    }
}

/// Minimal `zeta_a` with `chi xi (1 - zeta_a) + (1 - chi)(1 - zeta_i) <= 1 / r0`.
pub fn quarantine_threshold(chi: f64, xi: f64, r0: f64, zeta_i: f64) -> Result<IsolationThreshold> {
    for (what, v) in [("chi", chi), ("zeta_i", zeta_i)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Domain {
                what,
                value: v,
                expected: "probability out of range [0, 1]",
            });
        }
    }
    let asym = chi * xi * r0;
    if !(asym > 0.0 && asym.is_finite()) {
        return Err(Error::Domain {
            what: "chi * xi * r0",
            value: asym,
            expected: "must be positive",
        });
    }
    let symptomatic = (1.0 - chi) * (1.0 - zeta_i) * r0;
    let zeta_a = 1.0 - (1.0 - symptomatic) / asym;
    if zeta_a < 0.0 {
        Ok(IsolationThreshold::AlreadyNonOutbreak)
    } else if zeta_a > 1.0 {
        Ok(IsolationThreshold::Infeasible)
    } else {
        Ok(IsolationThreshold::Required(zeta_a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_seiaqr, make_seiar, StageSpec};
    use approx::assert_abs_diff_eq;

    fn table2() -> ModelParams {
        make_seiar(3.0, 0.2, 1.0 / 1.61, 0.862, 0.55).unwrap()
    }

    #[test]
    fn table2_thresholds_coincide() {
        let p = table2();
        let q = [1.0, 1.0];
        assert_abs_diff_eq!(s_star(&p, &q).unwrap(), 0.5445, epsilon = 1e-4);
        assert_abs_diff_eq!(s_bar(&p, &q).unwrap(), 0.5445, epsilon = 1e-4);
        assert_abs_diff_eq!(s_bar(&p, &q).unwrap(), s_star(&p, &q).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn unit_reproduction_gives_unit_threshold() {
        let p = ModelParams::new(0.3, vec![StageSpec::new(1.0, 0.7, 1.0).unwrap()]).unwrap();
        assert_abs_diff_eq!(s_bar(&p, &[1.0]).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s_star(&p, &[1.0]).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn s_bar_with_unequal_gammas_by_hand() {
        let p = ModelParams::new(
            0.2,
            vec![
                StageSpec::new(0.5, 0.5, 2.0).unwrap(),
                StageSpec::new(0.5, 1.0, 2.0).unwrap(),
            ],
        )
        .unwrap();
        assert_abs_diff_eq!(s_bar(&p, &[1.0, 1.0]).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s_star(&p, &[1.0, 1.0]).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn quarantine_model_threshold() {
        let p = make_seiaqr(3.0, 0.2, 1.0 / 1.61, 0.862, 0.55, 1.0, 0.0).unwrap();
        assert_abs_diff_eq!(s_star(&p, &[1.0; 3]).unwrap(), 0.7031, epsilon = 1e-3);
        let sealed = make_seiaqr(3.0, 0.2, 1.0 / 1.61, 0.862, 0.55, 1.0, 1.0).unwrap();
        assert_eq!(s_star(&sealed, &[1.0; 3]), Err(Error::NoThreshold));
        assert_eq!(s_bar(&sealed, &[1.0; 3]), Err(Error::NoThreshold));
    }

    #[test]
    fn zero_control_has_no_threshold() {
        let p = table2();
        assert_eq!(s_star(&p, &[0.0, 0.0]), Err(Error::NoThreshold));
        let st = State::new(0.5, 0.1, vec![0.1, 0.1], 0.2).unwrap();
        assert_eq!(lyapunov_u(&p, &[0.0, 0.0], &st), Err(Error::NoThreshold));
    }

    #[test]
    fn lyapunov_vanishes_on_fixed_points_and_collapses_for_one_stage() {
        let p = table2();
        let st = State::new(0.5, 0.0, vec![0.0, 0.0], 0.5).unwrap();
        assert_eq!(lyapunov_u(&p, &[1.0, 1.0], &st).unwrap(), 0.0);

        let single = ModelParams::new(0.3, vec![StageSpec::new(1.0, 0.7, 2.4).unwrap()]).unwrap();
        let st = State::new(0.5, 0.1, vec![0.2], 0.2).unwrap();
        assert_abs_diff_eq!(lyapunov_u(&single, &[0.6], &st).unwrap(), 0.3, epsilon = 1e-15);
    }

    #[test]
    fn isolation_threshold_table2() {
        let t = quarantine_threshold(0.862, 0.55, 3.0, 1.0).unwrap();
        match t {
            IsolationThreshold::Required(z) => assert_abs_diff_eq!(z, 0.2969134503, epsilon = 1e-9),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn isolation_threshold_edge_cases() {
        // chi xi r0 = 1 exactly with all symptomatic isolated.
        assert_eq!(
            quarantine_threshold(0.5, 1.0, 2.0, 1.0).unwrap(),
            IsolationThreshold::Required(0.0)
        );
        assert_eq!(
            quarantine_threshold(0.5, 1.0, 4.0, 1.0).unwrap(),
            IsolationThreshold::Required(0.5)
        );
        assert_eq!(
            quarantine_threshold(0.5, 0.5, 1.5, 1.0).unwrap(),
            IsolationThreshold::AlreadyNonOutbreak
        );
        // Symptomatic transmission alone exceeds one.
        assert_eq!(
            quarantine_threshold(0.2, 0.5, 3.0, 0.0).unwrap(),
            IsolationThreshold::Infeasible
        );
        assert!(quarantine_threshold(0.0, 0.5, 3.0, 1.0).is_err());
        assert!(quarantine_threshold(1.5, 0.5, 3.0, 1.0).is_err());
    }
}
