//! Spectral structure of the linearised infection block and the exponential
//! envelope it implies for `V = (E, I_1, .., I_N)`.
//!
//! Near the disease-free surface `V' = L(S) V`. Replacing every `gamma_i` by
//! `gamma = min gamma_i` and `S` by `S0 >= S(t)` gives the comparison matrix
//!
//! ```text
//!        | -sigma     b_1 S0  ...  b_N S0 |
//!   L0 = | x_1 sigma  -gamma            0 |
//!        |   ...             ...          |
//!        | x_N sigma   0     ...   -gamma |
//! ```
//!
//! whose eigenvalues are
//! `lambda_{1,2} = -(sigma + gamma)/2 +- sqrt(4 sigma S0 sum(b_i x_i) + (gamma - sigma)^2)/2`
//! and `-gamma` with multiplicity `N - 1`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralBundle {
    /// Largest eigenvalue; negative exactly when `S0 < S_bar`.
    pub lambda1: f64,
    pub lambda2: f64,
    /// `-gamma_min`, multiplicity `N - 1`.
    pub lambda_rest: f64,
    /// `max(1, |T0^-1| |T0|)` in the element-wise max norm. That norm is not
    /// submultiplicative, so the raw product can fall to `1/(N+1)`; it is
    /// floored at one. Infinite when `L0` is not diagonalizable.
    pub cond_factor: f64,
    /// Dimension of `V`.
    pub n_plus_1: usize,
}

fn check_s0(s0: f64) -> Result<()> {
    if (0.0..=1.0).contains(&s0) {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "s0",
            value: s0,
            expected: "susceptible fraction must lie in [0, 1]",
        })
    }
}

/// `L(S)` with the per-stage infection rates.
pub fn l_matrix(params: &ModelParams, s: f64, q: &[f64]) -> Result<DMatrix<f64>> {
    params.check_control(q)?;
    let n = params.n_stages();
    let betas = params.effective_betas(q);
    let mut l = DMatrix::zeros(n + 1, n + 1);
    l[(0, 0)] = -params.sigma;
    for (k, stage) in params.stages.iter().enumerate() {
        l[(0, k + 1)] = betas[k] * s;
        l[(k + 1, 0)] = stage.x * params.sigma;
        l[(k + 1, k + 1)] = -stage.gamma;
    }
    Ok(l)
}

/// Comparison matrix `L0` at `S0`, all infection rates replaced by `gamma_min`.
pub fn l0_matrix(params: &ModelParams, s0: f64, q: &[f64]) -> Result<DMatrix<f64>> {
    let mut l = l_matrix(params, s0, q)?;
    let g = params.gamma_min();
    for k in 1..=params.n_stages() {
        l[(k, k)] = -g;
    }
    Ok(l)
}

struct Roots {
    lambda1: f64,
    lambda2: f64,
    coupling: f64,
}

fn roots(params: &ModelParams, s0: f64, betas: &[f64]) -> Roots {
    let sigma = params.sigma;
    let gamma = params.gamma_min();
    let bx: f64 = params.stages.iter().zip(betas).map(|(s, b)| s.x * b).sum();
    let coupling = sigma * s0 * bx;
    let trace = sigma + gamma;
    // 4c + (gamma - sigma)^2 rewritten around the trace, so lambda1 carries no
    // cancellation near the threshold.
    let disc = (4.0 * coupling + (gamma - sigma) * (gamma - sigma)).max(0.0);
    let root = disc.sqrt();
    Roots {
        lambda1: 2.0 * (coupling - sigma * gamma) / (trace + root),
        lambda2: -(trace + root) / 2.0,
        coupling,
    }
}

/// Analytic eigen-decomposition `L0 T0 = T0 D0`.
///
/// Columns are normalised to unit max norm and ordered by decreasing
/// eigenvalue. Returns `None` when `L0` is defective.
pub fn eigen_decomposition(
    params: &ModelParams,
    s0: f64,
    q: &[f64],
) -> Result<Option<(DMatrix<f64>, DVector<f64>)>> {
    check_s0(s0)?;
    params.check_control(q)?;
    let n = params.n_stages();
    let sigma = params.sigma;
    let gamma = params.gamma_min();
    let betas = params.effective_betas(q);
    let r = roots(params, s0, &betas);

    let mut pairs: Vec<(f64, DVector<f64>)> = Vec::with_capacity(n + 1);
    let branch_vector = |lambda: f64| {
        let mut v = DVector::zeros(n + 1);
        v[0] = 1.0;
        for (k, st) in params.stages.iter().enumerate() {
            v[k + 1] = st.x * sigma / (lambda + gamma);
        }
        v
    };

    if r.coupling > 0.0 {
        pairs.push((r.lambda1, branch_vector(r.lambda1)));
        pairs.push((r.lambda2, branch_vector(r.lambda2)));
        // Kernel of {v_0 = 0, sum b_k v_k = 0}, pivoting on the largest b.
        let pivot = (0..n)
            .max_by(|&a, &b| betas[a].abs().total_cmp(&betas[b].abs()))
            .expect("at least one stage");
        for k in (0..n).filter(|&k| k != pivot) {
            let mut w = DVector::zeros(n + 1);
            w[pivot + 1] = betas[k];
            w[k + 1] = -betas[pivot];
            pairs.push((-gamma, w));
        }
    } else {
        // No coupling from V back into E: eigenvalues -sigma and -gamma.
        if sigma == gamma {
            return Ok(None);
        }
        pairs.push((-sigma, branch_vector(-sigma)));
        let row_zero = s0 == 0.0 || betas.iter().all(|b| *b == 0.0);
        if !row_zero {
            return Ok(None);
        }
        for k in 0..n {
            let mut w = DVector::zeros(n + 1);
            w[k + 1] = 1.0;
            pairs.push((-gamma, w));
        }
    }

    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut t = DMatrix::zeros(n + 1, n + 1);
    let mut d = DVector::zeros(n + 1);
    for (col, (lambda, v)) in pairs.into_iter().enumerate() {
        let scale = v.amax();
        t.set_column(col, &(v / scale));
        d[col] = lambda;
    }
    Ok(Some((t, d)))
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.amax()
}

/// Eigenvalues of `L0` and the conditioning constant of its eigenvector matrix.
pub fn spectral(params: &ModelParams, s0: f64, q: &[f64]) -> Result<SpectralBundle> {
    check_s0(s0)?;
    params.check_control(q)?;
    let betas = params.effective_betas(q);
    let r = roots(params, s0, &betas);
    let gamma = params.gamma_min();
    let (lambda1, lambda2) = if r.coupling > 0.0 {
        (r.lambda1, r.lambda2)
    } else {
        (-params.sigma.min(gamma), -params.sigma.max(gamma))
    };
    let cond_factor = match eigen_decomposition(params, s0, q)? {
        Some((t, _)) => match t.clone().try_inverse() {
            Some(inv) => (max_abs(&t) * max_abs(&inv)).max(1.0),
            None => f64::INFINITY,
        },
        None => f64::INFINITY,
    };
    Ok(SpectralBundle {
        lambda1,
        lambda2,
        lambda_rest: -gamma,
        cond_factor,
        n_plus_1: params.n_stages() + 1,
    })
}

/// `(N + 1) |T0^-1| |T0| |V(t0)|_max exp(lambda1(S0) dt)`, an upper bound on the
/// Euclidean norm of `V` a time `dt` after `t0` under constant control.
pub fn envelope_bound(params: &ModelParams, s0: f64, q: &[f64], v0_maxnorm: f64, dt: f64) -> Result<f64> {
    if dt.is_nan() || dt < 0.0 {
        return Err(Error::Domain {
            what: "dt",
            value: dt,
            expected: "must be non-negative",
        });
    }
    let sb = spectral(params, s0, q)?;
    Ok(envelope_from_bundle(&sb, v0_maxnorm, dt))
}

pub(crate) fn envelope_from_bundle(sb: &SpectralBundle, v0_maxnorm: f64, dt: f64) -> f64 {
    sb.n_plus_1 as f64 * sb.cond_factor * v0_maxnorm * (sb.lambda1 * dt).exp()
}
