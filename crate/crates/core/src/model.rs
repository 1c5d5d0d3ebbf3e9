//! N-stage SEIR model: parameters, state and right-hand side.
//!
//! Exposed individuals branch into `N` parallel infectious stages with
//! probabilities `x_i`; stage `i` recovers at rate `gamma_i` and transmits with
//! `beta_i = gamma_i * R_i`. A control vector `q` scales each `R_i`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `sum(x_i) = 1`.
pub const BRANCHING_TOL: f64 = 1e-12;
/// Tolerance on `S + E + sum(I_i) + R = 1` for a valid state.
pub const STATE_SUM_TOL: f64 = 1e-10;
/// Negative round-off tolerated (and clamped to zero) in state components.
pub const NEGATIVE_TOL: f64 = 1e-12;
/// Relative tolerance used to decide that all infection rates coincide.
pub const EQUAL_GAMMA_RTOL: f64 = 1e-12;

/// One parallel infectious stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    /// Probability that an exposed individual enters this stage.
    pub x: f64,
    /// Inverse infection time (1/day).
    pub gamma: f64,
    /// Natural basic reproduction number of the stage.
    pub r_natural: f64,
}

impl StageSpec {
    pub fn new(x: f64, gamma: f64, r_natural: f64) -> Result<Self> {
        let stage = Self { x, gamma, r_natural };
        stage.validate()?;
        Ok(stage)
    }

    /// Natural transmission rate `gamma * R`.
    pub fn beta(&self) -> f64 {
        self.gamma * self.r_natural
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.x) {
            return Err(Error::Domain {
                what: "x",
                value: self.x,
                expected: "probability out of range [0, 1]",
            });
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Domain {
                what: "gamma",
                value: self.gamma,
                expected: "rate must be positive",
            });
        }
        if !(self.r_natural >= 0.0 && self.r_natural.is_finite()) {
            return Err(Error::Domain {
                what: "r_natural",
                value: self.r_natural,
                expected: "reproduction number must be non-negative",
            });
        }
        Ok(())
    }
}

/// Parameters of the N-stage model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Inverse incubation time (1/day).
    pub sigma: f64,
    pub stages: Vec<StageSpec>,
}

impl ModelParams {
    pub fn new(sigma: f64, stages: Vec<StageSpec>) -> Result<Self> {
        let params = Self { sigma, stages };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Domain {
                what: "sigma",
                value: self.sigma,
                expected: "rate must be positive",
            });
        }
        if self.stages.is_empty() {
            return Err(Error::InvalidModel(
                "at least one infectious stage is required".into(),
            ));
        }
        for stage in &self.stages {
            stage.validate()?;
        }
        let total: f64 = self.stages.iter().map(|s| s.x).sum();
        if (total - 1.0).abs() > BRANCHING_TOL {
            return Err(Error::InvalidModel(format!(
                "branching probabilities sum to {total}, expected 1"
            )));
        }
        Ok(())
    }

    pub fn n_stages(&self) -> usize {
        self.stages.len()
    }

    /// Smallest infection rate; the slowest stage governs the spectral bound.
    pub fn gamma_min(&self) -> f64 {
        self.stages.iter().map(|s| s.gamma).fold(f64::INFINITY, f64::min)
    }

    pub fn has_equal_gamma(&self) -> bool {
        let g0 = self.stages[0].gamma;
        self.stages
            .iter()
            .all(|s| (s.gamma - g0).abs() <= EQUAL_GAMMA_RTOL * g0.abs())
    }

    /// Effective transmission rates `gamma_i * q_i * R_i`.
    pub fn effective_betas(&self, q: &[f64]) -> Vec<f64> {
        debug_assert_eq!(q.len(), self.n_stages());
        self.stages
            .iter()
            .zip(q)
            .map(|(s, &qi)| s.gamma * qi * s.r_natural)
            .collect()
    }

    pub fn identity_control(&self) -> Vec<f64> {
        vec![1.0; self.n_stages()]
    }

    /// Checks that a control vector has one non-negative finite entry per stage.
    pub fn check_control(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.n_stages() {
            return Err(Error::InvalidStrategy(format!(
                "control vector has {} entries, model has {} stages",
                q.len(),
                self.n_stages()
            )));
        }
        if let Some(&bad) = q.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::Domain {
                what: "q",
                value: bad,
                expected: "multiplier must be non-negative",
            });
        }
        Ok(())
    }
}

fn check_probability(what: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::Domain {
            what,
            value,
            expected: "probability out of range [0, 1]",
        })
    }
}

fn check_positive(what: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            what,
            value,
            expected: "must be positive",
        })
    }
}

fn check_non_negative(what: &'static str, value: f64) -> Result<()> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            what,
            value,
            expected: "must be non-negative",
        })
    }
}

/// Two-stage model with symptomatic (`I`) and asymptomatic (`A`) infected.
///
/// Stage order is `(I, A)`: `x = (1 - chi, chi)`, `R = (r0, xi * r0)`, both
/// stages share `gamma`.
pub fn make_seiar(r0: f64, sigma: f64, gamma: f64, chi: f64, xi: f64) -> Result<ModelParams> {
    check_positive("r0", r0)?;
    check_positive("sigma", sigma)?;
    check_positive("gamma", gamma)?;
    check_probability("chi", chi)?;
    check_non_negative("xi", xi)?;
    ModelParams::new(
        sigma,
        vec![
            StageSpec::new(1.0 - chi, gamma, r0)?,
            StageSpec::new(chi, gamma, xi * r0)?,
        ],
    )
}

/// Three-stage model `(I, A, Q)` where a fraction `zeta_i` of symptomatic and
/// `zeta_a` of asymptomatic cases is isolated into the non-transmitting `Q`.
pub fn make_seiaqr(
    r0: f64,
    sigma: f64,
    gamma: f64,
    chi: f64,
    xi: f64,
    zeta_i: f64,
    zeta_a: f64,
) -> Result<ModelParams> {
    check_positive("r0", r0)?;
    check_positive("sigma", sigma)?;
    check_positive("gamma", gamma)?;
    check_probability("chi", chi)?;
    check_non_negative("xi", xi)?;
    check_probability("zeta_i", zeta_i)?;
    check_probability("zeta_a", zeta_a)?;
    let x_i = (1.0 - zeta_i) * (1.0 - chi);
    let x_a = (1.0 - zeta_a) * chi;
    // Equals zeta_i (1 - chi) + zeta_a chi; written as a residual so the
    // three probabilities sum to exactly 1 in floating point.
    let x_q = 1.0 - (x_i + x_a);
    ModelParams::new(
        sigma,
        vec![
            StageSpec::new(x_i, gamma, r0)?,
            StageSpec::new(x_a, gamma, xi * r0)?,
            StageSpec::new(x_q.max(0.0), gamma, 0.0)?,
        ],
    )
}

/// Compartment fractions at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub s: f64,
    pub e: f64,
    pub i: Vec<f64>,
    pub r: f64,
}

impl State {
    /// Builds a state, clamping round-off negatives in `[-1e-12, 0)` to zero.
    pub fn new(s: f64, e: f64, i: Vec<f64>, r: f64) -> Result<Self> {
        let mut state = Self { s, e, i, r };
        state.clamp_and_check()?;
        Ok(state)
    }

    /// Reads a packed `[S, E, I_1..I_N, R]` vector.
    pub fn from_slice(y: &[f64]) -> Result<Self> {
        if y.len() < 4 {
            return Err(Error::InvalidState(format!(
                "packed state needs at least 4 entries, got {}",
                y.len()
            )));
        }
        let n = y.len() - 3;
        Self::new(y[0], y[1], y[2..2 + n].to_vec(), y[2 + n])
    }

    /// Single exposed individual in a closed population of `population`.
    pub fn single_exposed(n_stages: usize, population: f64) -> Result<Self> {
        Self::seeded(n_stages, population, 1.0)
    }

    /// `exposed` individuals out of `population`, everyone else susceptible.
    pub fn seeded(n_stages: usize, population: f64, exposed: f64) -> Result<Self> {
        if !(population > 0.0 && population.is_finite()) {
            return Err(Error::Domain {
                what: "population",
                value: population,
                expected: "must be positive",
            });
        }
        if !(0.0..=population).contains(&exposed) {
            return Err(Error::Domain {
                what: "initial_exposed",
                value: exposed,
                expected: "must lie in [0, population]",
            });
        }
        let e = exposed / population;
        Self::new(1.0 - e, e, vec![0.0; n_stages], 0.0)
    }

    fn clamp_and_check(&mut self) -> Result<()> {
        let n = self.i.len();
        if n == 0 {
            return Err(Error::InvalidState("no infectious stages".into()));
        }
        for (k, v) in std::iter::once(&mut self.s)
            .chain(std::iter::once(&mut self.e))
            .chain(self.i.iter_mut())
            .chain(std::iter::once(&mut self.r))
            .enumerate()
        {
            if !v.is_finite() {
                return Err(Error::InvalidState(format!("component {k} is not finite")));
            }
            if *v < 0.0 {
                if *v >= -NEGATIVE_TOL {
                    *v = 0.0;
                } else {
                    return Err(Error::InvalidState(format!("component {k} is negative ({v:e})")));
                }
            }
        }
        let drift = self.total() - 1.0;
        if drift.abs() > STATE_SUM_TOL {
            return Err(Error::InvalidState(format!("compartments sum to 1 {drift:+e}")));
        }
        Ok(())
    }

    pub fn n_stages(&self) -> usize {
        self.i.len()
    }

    pub fn total(&self) -> f64 {
        self.s + self.e + self.i.iter().sum::<f64>() + self.r
    }

    /// `E + sum(I_i)`: everyone currently carrying the infection.
    pub fn infected(&self) -> f64 {
        self.e + self.i.iter().sum::<f64>()
    }

    /// Euclidean norm of `V = (E, I_1, .., I_N)`.
    pub fn v_norm(&self) -> f64 {
        (self.e * self.e + self.i.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    /// Max norm of `V`.
    pub fn v_max_norm(&self) -> f64 {
        self.i.iter().fold(self.e.abs(), |m, v| m.max(v.abs()))
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut y = Vec::with_capacity(self.i.len() + 3);
        y.push(self.s);
        y.push(self.e);
        y.extend_from_slice(&self.i);
        y.push(self.r);
        y
    }
}

/// Writes the time derivative of the packed state `y = [S, E, I.., R]` into `dy`.
pub(crate) fn rhs_into(params: &ModelParams, y: &[f64], q: &[f64], dy: &mut [f64]) {
    let n = params.n_stages();
    let s = y[0];
    let e = y[1];
    let infectious = &y[2..2 + n];
    let pressure: f64 = params
        .stages
        .iter()
        .zip(q)
        .zip(infectious)
        .map(|((st, &qi), &ii)| st.gamma * qi * st.r_natural * ii)
        .sum();
    let force = pressure * s;
    let incubation = params.sigma * e;
    dy[0] = -force;
    dy[1] = force - incubation;
    let mut recovery = 0.0;
    for (k, (st, &ii)) in params.stages.iter().zip(infectious).enumerate() {
        let out = st.gamma * ii;
        dy[2 + k] = st.x * incubation - out;
        recovery += out;
    }
    dy[2 + n] = recovery;
}

/// Time derivative `(S', E', I_1'..I_N', R')` under the control vector `q`.
pub fn rhs(params: &ModelParams, state: &State, q: &[f64]) -> Result<Vec<f64>> {
    params.check_control(q)?;
    if state.n_stages() != params.n_stages() {
        return Err(Error::InvalidState(format!(
            "state has {} stages, model has {}",
            state.n_stages(),
            params.n_stages()
        )));
    }
    let y = state.to_vec();
    let mut dy = vec![0.0; y.len()];
    rhs_into(params, &y, q, &mut dy);
    Ok(dy)
}

/// Coordinates `(S, E, J)` of the equal-gamma reduction, `J = sum(e_i I_i)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SejState {
    pub s: f64,
    pub e: f64,
    pub j: f64,
}

/// The three-dimensional `(S, E, J)` system of an equal-gamma model.
///
/// With `e_i = R_i / r_ref` and `beta = gamma * r_ref`, the full model obeys
/// `S' = -beta J S`, `E' = beta J S - sigma E`, `J' = sigma_bar E - gamma J`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSystem {
    pub sigma: f64,
    pub gamma: f64,
    pub beta: f64,
    /// `sigma * sum(x_i e_i)`.
    pub sigma_bar: f64,
    /// Relative infectiousness `e_i = R_i / r_ref`.
    pub weights: Vec<f64>,
}

impl ReducedSystem {
    pub fn new(params: &ModelParams, r_ref: f64) -> Result<Self> {
        check_positive("r_ref", r_ref)?;
        if !params.has_equal_gamma() {
            return Err(Error::UnequalGamma {
                gammas: params.stages.iter().map(|s| s.gamma).collect(),
            });
        }
        let gamma = params.stages[0].gamma;
        let weights: Vec<f64> = params.stages.iter().map(|s| s.r_natural / r_ref).collect();
        let sigma_bar = params.sigma
            * params
                .stages
                .iter()
                .zip(&weights)
                .map(|(s, w)| s.x * w)
                .sum::<f64>();
        Ok(Self {
            sigma: params.sigma,
            gamma,
            beta: gamma * r_ref,
            sigma_bar,
            weights,
        })
    }

    pub fn project(&self, state: &State) -> SejState {
        SejState {
            s: state.s,
            e: state.e,
            j: self.weights.iter().zip(&state.i).map(|(w, i)| w * i).sum(),
        }
    }

    /// `(S', E', J')` with a uniform control multiplier `q`.
    pub fn rhs(&self, p: &SejState, q: f64) -> [f64; 3] {
        let force = q * self.beta * p.j * p.s;
        [
            -force,
            force - self.sigma * p.e,
            self.sigma_bar * p.e - self.gamma * p.j,
        ]
    }

    /// Threshold `gamma sigma / (beta sigma_bar)`, the S at which the (E, J)
    /// flow changes topology.
    pub fn critical_s(&self) -> Result<f64> {
        let denom = self.beta * self.sigma_bar;
        if denom > 0.0 {
            Ok(self.gamma * self.sigma / denom)
        } else {
            Err(Error::NoThreshold)
        }
    }
}

/// Projects `state` onto the equal-gamma `(S, E, J)` coordinates.
pub fn reduce_sej(params: &ModelParams, state: &State, r_ref: f64) -> Result<(SejState, ReducedSystem)> {
    let system = ReducedSystem::new(params, r_ref)?;
    Ok((system.project(state), system))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn table2() -> ModelParams {
        make_seiar(3.0, 0.2, 1.0 / 1.61, 0.862, 0.55).unwrap()
    }

    #[test]
    fn seiar_table2_layout() {
        let p = table2();
        assert_eq!(p.n_stages(), 2);
        assert_relative_eq!(p.stages[0].x, 0.138, epsilon = 1e-15);
        assert_relative_eq!(p.stages[1].x, 0.862, epsilon = 1e-15);
        assert_relative_eq!(p.stages[0].r_natural, 3.0);
        assert_relative_eq!(p.stages[1].r_natural, 1.65, epsilon = 1e-15);
    }

    #[test]
    fn seiar_without_asymptomatics_is_single_seir() {
        let p = make_seiar(2.5, 0.3, 0.4, 0.0, 0.7).unwrap();
        assert_eq!(p.stages[0].x, 1.0);
        assert_eq!(p.stages[1].x, 0.0);
    }

    #[test]
    fn seiar_identical_stages_when_xi_is_one() {
        let p = make_seiar(2.0, 0.25, 0.5, 0.5, 1.0).unwrap();
        assert_eq!(p.stages[0].r_natural, 2.0);
        assert_eq!(p.stages[1].r_natural, 2.0);
        assert_eq!(p.stages[0].x, 0.5);
        assert_eq!(p.stages[1].x, 0.5);
    }

    #[test]
    fn seiar_rejects_bad_inputs() {
        assert!(matches!(
            make_seiar(3.0, 0.2, 0.6, 1.2, 0.5),
            Err(Error::Domain { what: "chi", .. })
        ));
        assert!(make_seiar(3.0, 0.0, 0.6, 0.5, 0.5).is_err());
        assert!(make_seiar(3.0, 0.2, -1.0, 0.5, 0.5).is_err());
        assert!(make_seiar(-3.0, 0.2, 0.6, 0.5, 0.5).is_err());
    }

    #[test]
    fn seiaqr_zero_isolation_matches_seiar() {
        let a = table2();
        let b = make_seiaqr(3.0, 0.2, 1.0 / 1.61, 0.862, 0.55, 0.0, 0.0).unwrap();
        assert_eq!(b.n_stages(), 3);
        assert_eq!(b.stages[2].x, 0.0);
        assert_eq!(b.stages[2].r_natural, 0.0);
        let sa = State::new(0.7, 0.05, vec![0.1, 0.05], 0.1).unwrap();
        let sb = State::new(0.7, 0.05, vec![0.1, 0.05, 0.0], 0.1).unwrap();
        let da = rhs(&a, &sa, &[1.0, 1.0]).unwrap();
        let db = rhs(&b, &sb, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(&da[..4], &db[..4]);
        assert_eq!(db[4], 0.0);
        assert_eq!(da[4], db[5]);
    }

    #[test]
    fn seiaqr_full_symptomatic_isolation() {
        let p = make_seiaqr(3.0, 0.2, 1.0 / 1.61, 0.862, 0.55, 1.0, 0.0).unwrap();
        assert_eq!(p.stages[0].x, 0.0);
        assert_relative_eq!(p.stages[1].x, 0.862, epsilon = 1e-15);
        assert_relative_eq!(p.stages[2].x, 0.138, epsilon = 1e-15);
    }

    #[test]
    fn seiaqr_branching_sums_to_one_exactly_on_grid() {
        let grid: Vec<f64> = (0..=20).map(|k| k as f64 / 20.0).collect();
        for &chi in &grid {
            for &zi in &grid {
                for &za in &grid {
                    let p = make_seiaqr(3.0, 0.2, 0.6, chi, 0.55, zi, za).unwrap();
                    let sum: f64 = p.stages.iter().map(|s| s.x).sum();
                    assert_eq!(sum, 1.0, "chi={chi} zi={zi} za={za}");
                }
            }
        }
    }

    #[test]
    fn model_params_rejects_unnormalized_branching() {
        let err = ModelParams::new(
            0.2,
            vec![
                StageSpec::new(0.5, 1.0, 2.0).unwrap(),
                StageSpec::new(0.4, 1.0, 2.0).unwrap(),
            ],
        );
        assert!(matches!(err, Err(Error::InvalidModel(_))));
        assert!(ModelParams::new(0.2, vec![]).is_err());
    }

    #[test]
    fn fixed_point_surface_has_zero_derivative() {
        let p = table2();
        let st = State::new(0.6, 0.0, vec![0.0, 0.0], 0.4).unwrap();
        let d = rhs(&p, &st, &[1.0, 1.0]).unwrap();
        assert!(d.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn pure_exposed_state_derivative_by_hand() {
        let p = table2();
        let pop = 2.0;
        let e = 1.0 / pop;
        let st = State::new(1.0 - e, e, vec![0.0, 0.0], 0.0).unwrap();
        let d = rhs(&p, &st, &[1.0, 1.0]).unwrap();
        let sig_e = 0.2 * e;
        assert_eq!(d[0], 0.0);
        assert_relative_eq!(d[1], -sig_e, epsilon = 1e-16);
        assert_relative_eq!(d[2], 0.138 * sig_e, epsilon = 1e-16);
        assert_relative_eq!(d[3], 0.862 * sig_e, epsilon = 1e-16);
        assert_eq!(d[4], 0.0);
    }

    #[test]
    fn state_clamps_round_off_and_rejects_real_negatives() {
        let st = State::new(0.5, -5e-13, vec![0.25, 0.25], 5e-13).unwrap();
        assert_eq!(st.e, 0.0);
        assert!(State::new(0.5, -1e-9, vec![0.25, 0.25], 1e-9).is_err());
        assert!(State::new(0.5, 0.1, vec![0.25, 0.25], 0.0).is_err());
    }

    #[test]
    fn single_exposed_initial_condition() {
        let st = State::single_exposed(2, 3.0e6).unwrap();
        assert_eq!(st.e, 1.0 / 3.0e6);
        assert_eq!(st.s, 1.0 - 1.0 / 3.0e6);
        assert_eq!(st.i, vec![0.0, 0.0]);
    }

    #[test]
    fn reduction_of_seiar_weights_asymptomatics_by_xi() {
        let p = table2();
        let st = State::new(0.6, 0.05, vec![0.03, 0.07], 0.25).unwrap();
        let (red, sys) = reduce_sej(&p, &st, 3.0).unwrap();
        assert_relative_eq!(red.j, 0.03 + 0.55 * 0.07, epsilon = 1e-16);
        assert_relative_eq!(sys.beta, 3.0 / 1.61, epsilon = 1e-15);
        let none = State::new(0.6, 0.05, vec![0.0, 0.0], 0.35).unwrap();
        assert_eq!(sys.project(&none).j, 0.0);
    }

    #[test]
    fn reduction_requires_equal_gamma() {
        let p = ModelParams::new(
            0.2,
            vec![
                StageSpec::new(0.5, 0.5, 2.0).unwrap(),
                StageSpec::new(0.5, 1.0, 2.0).unwrap(),
            ],
        )
        .unwrap();
        let st = State::new(1.0, 0.0, vec![0.0, 0.0], 0.0).unwrap();
        assert!(matches!(
            reduce_sej(&p, &st, 2.0),
            Err(Error::UnequalGamma { .. })
        ));
    }
}
