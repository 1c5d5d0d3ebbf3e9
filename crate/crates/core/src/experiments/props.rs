//! Randomized checks of the threshold propositions.
//!
//! Every trial is drawn sequentially from a seeded ChaCha stream before any
//! integration runs, so reports are identical for a given seed whatever the
//! thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{default_init, table2_params, Cell, Table, DEFAULT_POPULATION};
use crate::error::Result;
use crate::integrator::{asymptotic_s, integrate, sign_structure_check, IntegrationConfig, Trajectory};
use crate::model::{ModelParams, ReducedSystem, StageSpec, State};
use crate::spectral::{envelope_from_bundle, spectral};
use crate::strategy::{Multipliers, Strategy};
use crate::threshold::{s_bar, s_star};

/// Ranges from which random models are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamFamily {
    pub max_stages: usize,
    pub sigma: (f64, f64),
    pub gamma: (f64, f64),
    pub r_natural: (f64, f64),
}

impl Default for ParamFamily {
    fn default() -> Self {
        Self {
            max_stages: 4,
            sigma: (0.05, 1.0),
            gamma: (0.05, 1.0),
            r_natural: (0.0, 5.0),
        }
    }
}

impl ParamFamily {
    fn draw(&self, rng: &mut ChaCha8Rng) -> ModelParams {
        let n = rng.random_range(1..=self.max_stages.max(1));
        let weights: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let total: f64 = weights.iter().sum();
        let mut x: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let head: f64 = x[..n - 1].iter().sum();
        x[n - 1] = (1.0 - head).max(0.0);
        let sigma = uniform(rng, self.sigma);
        let stages = x
            .into_iter()
            .map(|xi| {
                StageSpec::new(xi, uniform(rng, self.gamma), uniform(rng, self.r_natural))
                    .expect("family ranges give valid stages")
            })
            .collect();
        ModelParams::new(sigma, stages).expect("family ranges give valid models")
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Counterexample {
    pub trial: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropOutcome {
    pub name: &'static str,
    pub trials: usize,
    pub failures: Vec<Counterexample>,
    /// Worst value of the checked quantity, e.g. `max ||V|| / bound`.
    pub worst: Option<f64>,
    /// Largest `|S + E + sum(I) + R - 1|` over every sample of every trial.
    pub max_drift: f64,
}

impl PropOutcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropositionReport {
    pub seed: u64,
    pub outcomes: Vec<PropOutcome>,
}

impl PropositionReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(PropOutcome::passed)
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(
            "props",
            [
                "check",
                "trials",
                "failures",
                "worst",
                "max_drift",
                "first_counterexample",
            ],
        );
        t.meta("seed", self.seed.to_string());
        for o in &self.outcomes {
            t.push(vec![
                o.name.into(),
                o.trials.into(),
                o.failures.len().into(),
                o.worst.into(),
                o.max_drift.into(),
                o.failures
                    .first()
                    .map_or(Cell::Empty, |c| format!("trial {}: {}", c.trial, c.detail).into()),
            ]);
        }
        t
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn drift(tr: &Trajectory) -> f64 {
    tr.samples
        .iter()
        .map(|s| (s.state.total() - 1.0).abs())
        .fold(0.0, f64::max)
}

type TrialResult = Result<(Option<String>, f64, f64)>;

/// Runs the trials in parallel and folds their results in trial order.
fn collect<T: Sync>(name: &'static str, draws: &[T], run: impl Fn(&T) -> TrialResult + Sync) -> PropOutcome {
    let results: Vec<TrialResult> = draws.par_iter().map(&run).collect();
    let mut failures = Vec::new();
    let mut worst: Option<f64> = None;
    let mut max_drift: f64 = 0.0;
    for (trial, r) in results.into_iter().enumerate() {
        match r {
            Ok((fail, metric, d)) => {
                worst = Some(worst.map_or(metric, |w: f64| w.max(metric)));
                max_drift = max_drift.max(d);
                if let Some(detail) = fail {
                    failures.push(Counterexample { trial, detail });
                }
            }
            Err(e) => failures.push(Counterexample {
                trial,
                detail: format!("run failed: {e}"),
            }),
        }
    }
    PropOutcome {
        name,
        trials: draws.len(),
        failures,
        worst,
        max_drift,
    }
}

/// Tight tolerances so that tiny `V` in the decaying tail is still resolved.
fn envelope_config() -> IntegrationConfig {
    IntegrationConfig {
        rel_tol: 1e-10,
        abs_tol: 1e-20,
        t_max: 400.0,
        quiescence_eps: 1e-14,
        ..Default::default()
    }
}

/// Below-threshold segments: `||V(t)||` stays under the exponential envelope.
pub fn envelope_trials(family: &ParamFamily, seed: u64, n: usize) -> PropOutcome {
    let mut rng = stream(seed, 1);
    let draws: Vec<(ModelParams, Vec<f64>, State)> = (0..n)
        .map(|_| {
            let p = family.draw(&mut rng);
            let q: Vec<f64> = (0..p.n_stages()).map(|_| rng.random::<f64>()).collect();
            let e0 = rng.random_range(0.0..1e-2);
            let i0: Vec<f64> = (0..p.n_stages()).map(|_| rng.random_range(0.0..1e-2)).collect();
            let infected = e0 + i0.iter().sum::<f64>();
            let cap = s_bar(&p, &q).unwrap_or(f64::INFINITY).min(1.0 - infected);
            let s0 = cap * rng.random_range(0.01..0.99);
            let r = 1.0 - s0 - infected;
            let init = State::new(s0, e0, i0, r).expect("drawn state is valid");
            (p, q, init)
        })
        .collect();
    let cfg = envelope_config();
    collect("envelope", &draws, |(p, q, init)| {
        let bundle = spectral(p, init.s, q)?;
        let v0 = init.v_max_norm();
        let st = Strategy::ConstantPermanent {
            t_start: 0.0,
            q: Multipliers::PerStage(q.clone()),
        };
        let tr = integrate(p, &st, init, &cfg)?;
        let mut worst: f64 = 0.0;
        let mut fail = None;
        for s in &tr.samples {
            let bound = envelope_from_bundle(&bundle, v0, s.t);
            if bound > 0.0 {
                worst = worst.max(s.v_norm / bound);
            }
            // Relative slack at the integrator's tolerance.
            if fail.is_none() && s.v_norm > bound * (1.0 + 1e-8) {
                fail = Some(format!(
                    "t = {}: |V| = {:e} > bound {:e} (S0 = {}, lambda1 = {}, cond = {})",
                    s.t, s.v_norm, bound, init.s, bundle.lambda1, bundle.cond_factor
                ));
            }
        }
        Ok((fail, worst, drift(&tr)))
    })
}

/// Natural runs end with `S_inf < S*`.
pub fn asymptotic_trials(family: &ParamFamily, seed: u64, n: usize) -> PropOutcome {
    let mut rng = stream(seed, 2);
    let draws: Vec<(ModelParams, State)> = (0..n)
        .map(|_| {
            let p = loop {
                let p = family.draw(&mut rng);
                if s_star(&p, &p.identity_control()).is_ok() {
                    break p;
                }
            };
            let e0 = rng.random_range(1e-7..1e-3);
            let i0: Vec<f64> = (0..p.n_stages()).map(|_| rng.random_range(0.0..1e-3)).collect();
            let infected = e0 + i0.iter().sum::<f64>();
            let s0 = rng.random_range(0.05..1.0 - infected);
            let init = State::new(s0, e0, i0, 1.0 - s0 - infected).expect("drawn state is valid");
            (p, init)
        })
        .collect();
    let cfg = IntegrationConfig {
        t_max: 1e5,
        ..Default::default()
    };
    collect("asymptotic-limit", &draws, |(p, init)| {
        let sstar = s_star(p, &p.identity_control())?;
        let tr = integrate(p, &Strategy::Natural {}, init, &cfg)?;
        let s_inf = asymptotic_s(&tr)?;
        let fail = (s_inf >= sstar).then(|| format!("S_inf = {s_inf} >= S* = {sstar}"));
        Ok((fail, s_inf / sstar, drift(&tr)))
    })
}

/// Uniform strategies: `U` never increases while `S <= S*(t)`.
pub fn wos_trials(family: &ParamFamily, seed: u64, n: usize) -> PropOutcome {
    let mut rng = stream(seed, 3);
    let draws: Vec<(ModelParams, Strategy, State)> = (0..n)
        .map(|k| {
            let p = loop {
                let p = family.draw(&mut rng);
                if s_star(&p, &p.identity_control()).is_ok_and(|s| s < 0.9) {
                    break p;
                }
            };
            let st = if k % 2 == 0 {
                Strategy::RegulatedSStar {
                    t_start: rng.random_range(5.0..150.0),
                    period: rng.random_range(0.5..40.0),
                }
            } else {
                let mut t = 0.0;
                let breakpoints = (0..4)
                    .map(|_| {
                        t += rng.random_range(5.0..60.0);
                        (t, rng.random_range(0.1..1.0))
                    })
                    .collect();
                Strategy::PiecewiseUniform { breakpoints }
            };
            let init = State::single_exposed(p.n_stages(), 1e6).expect("valid seed state");
            (p, st, init)
        })
        .collect();
    let cfg = IntegrationConfig {
        t_max: 2e4,
        ..Default::default()
    };
    collect("wos-monotonicity", &draws, |(p, st, init)| {
        let tr = integrate(p, st, init, &cfg)?;
        let mut worst = f64::NEG_INFINITY;
        let mut fail = None;
        for w in tr.samples.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            // The interval (a.t, b.t] runs under b.q.
            let th = s_star(p, &b.q).unwrap_or(f64::INFINITY);
            if a.state.s > th + 1e-12 {
                continue;
            }
            let (Some(ua), Some(ub)) = (a.u, b.u) else {
                continue;
            };
            worst = worst.max(ub - ua);
            if fail.is_none() && ub > ua + 1e-10 {
                fail = Some(format!("U rose by {:e} on ({}, {}]", ub - ua, a.t, b.t));
            }
        }
        Ok((fail, worst, drift(&tr)))
    })
}

/// Finite strategy drawn as in the proposition suite: start in `[20, 200]`,
/// duration in `[10, 200]`, level in `[0.1, 1]`, per-stage or uniform with
/// equal probability.
pub fn random_finite_strategy(rng: &mut ChaCha8Rng, n_stages: usize) -> Strategy {
    let t_start = rng.random_range(20.0..=200.0);
    let duration = rng.random_range(10.0..=200.0);
    let q = if rng.random_bool(0.5) {
        Multipliers::PerStage((0..n_stages).map(|_| rng.random_range(0.1..=1.0)).collect())
    } else {
        Multipliers::Uniform(rng.random_range(0.1..=1.0))
    };
    Strategy::ConstantFinite {
        t_start,
        t_end: t_start + duration,
        q,
    }
}

/// Resolves infection levels far below one person, so that a suppressed
/// epidemic is not declared over before its rebound.
pub fn finite_strategy_config() -> IntegrationConfig {
    IntegrationConfig {
        rel_tol: 1e-10,
        abs_tol: 1e-32,
        quiescence_eps: 1e-30,
        ..Default::default()
    }
}

/// Every finite strategy on the COVID-19 parameters ends with `S_inf < S0*`.
pub fn finite_strategy_trials(seed: u64, n: usize) -> PropOutcome {
    let p = table2_params();
    let mut rng = stream(seed, 4);
    let draws: Vec<Strategy> = (0..n)
        .map(|_| random_finite_strategy(&mut rng, p.n_stages()))
        .collect();
    let init = default_init(&p, DEFAULT_POPULATION).expect("valid seed state");
    let cfg = finite_strategy_config();
    let sstar = s_star(&p, &p.identity_control()).expect("threshold exists");
    collect("finite-strategies", &draws, |st| {
        let tr = integrate(&p, st, &init, &cfg)?;
        let s_inf = asymptotic_s(&tr)?;
        let fail =
            (s_inf >= sstar).then(|| format!("S_inf = {s_inf} >= S0* = {sstar} for {}", super::json(st)));
        Ok((fail, s_inf, drift(&tr)))
    })
}

/// Initial state inside the outbreak cone of the equal-gamma reduction.
pub(crate) fn cone_init(p: &ModelParams, red: &ReducedSystem, rng: &mut ChaCha8Rng) -> State {
    let crit = red.critical_s().expect("positive transmission");
    let s0 = rng.random_range((crit + 0.01).min(0.99)..0.999);
    let infected = rng.random_range(1e-6..1e-3);
    let lower = red.sigma / (red.beta * s0);
    let upper = red.sigma_bar / red.gamma;
    let ratio = lower + (upper - lower) * rng.random_range(0.05..0.95);
    // I_i = c x_i gives J = c w with w = sum(x_i e_i).
    let w: f64 = p.stages.iter().zip(&red.weights).map(|(s, e)| s.x * e).sum();
    let e0 = infected / (1.0 + ratio / w);
    let c = ratio * e0 / w;
    let i0: Vec<f64> = p.stages.iter().map(|s| c * s.x).collect();
    let infected_exact = e0 + i0.iter().sum::<f64>();
    State::new(s0, e0, i0, 1.0 - s0 - infected_exact).expect("cone state is valid")
}

/// Outbreak starts inside the cone: `E` and `J` rise together until `t*` and
/// fall together afterwards.
pub fn sign_structure_trials(seed: u64, n: usize) -> PropOutcome {
    let p = table2_params();
    let r_ref = p.stages.iter().map(|s| s.r_natural).fold(0.0, f64::max);
    let red = ReducedSystem::new(&p, r_ref).expect("equal gamma");
    let mut rng = stream(seed, 5);
    let draws: Vec<State> = (0..n).map(|_| cone_init(&p, &red, &mut rng)).collect();
    let cfg = IntegrationConfig::default();
    collect("sign-structure", &draws, |init| {
        let tr = integrate(&p, &Strategy::Natural {}, init, &cfg)?;
        let rep = sign_structure_check(&tr, &p)?;
        let fail = rep.first_violation().map(|v| {
            format!(
                "{} violation(s); first at t = {} ({} slope {:e} while {:?}); t* = {}, J peaks at {}",
                rep.violations.len(),
                v.t,
                v.variable,
                v.slope,
                v.phase,
                rep.t_star,
                rep.t_j_peak
            )
        });
        Ok((fail, rep.violations.len() as f64, drift(&tr)))
    })
}

/// All proposition checks with `trials` draws each.
pub fn proposition_suite(family: &ParamFamily, seed: u64, trials: usize) -> PropositionReport {
    PropositionReport {
        seed,
        outcomes: vec![
            envelope_trials(family, seed, trials),
            asymptotic_trials(family, seed, trials),
            wos_trials(family, seed, trials),
            finite_strategy_trials(seed, trials),
            sign_structure_trials(seed, trials),
        ],
    }
}
