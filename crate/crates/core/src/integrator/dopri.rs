//! Dormand–Prince 5(4) stepper for autonomous systems, with FSAL and a PI step controller.

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// 5th-order weights minus embedded 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;

pub(crate) struct Dopri5 {
    dim: usize,
    pub rtol: f64,
    pub atol: f64,
    k: [Vec<f64>; 7],
    ytmp: Vec<f64>,
    pub ynew: Vec<f64>,
    fsal_valid: bool,
    err_old: f64,
}

impl Dopri5 {
    pub fn new(dim: usize, rtol: f64, atol: f64) -> Self {
        Self {
            dim,
            rtol,
            atol,
            k: std::array::from_fn(|_| vec![0.0; dim]),
            ytmp: vec![0.0; dim],
            ynew: vec![0.0; dim],
            fsal_valid: false,
            err_old: 1e-4,
        }
    }

    /// Forget the cached derivative, e.g. after the right-hand side changed.
    pub fn reset<F: FnMut(&[f64], &mut [f64])>(&mut self, f: &mut F, y: &[f64]) {
        f(y, &mut self.k[0]);
        self.fsal_valid = true;
    }

    fn scaled_norm(&self, y: &[f64], v: &[f64]) -> f64 {
        let mut sum = 0.0;
        for ((&a, &b), &d) in y.iter().zip(&self.ynew).zip(v) {
            let sc = self.atol + self.rtol * a.abs().max(b.abs());
            sum += (d / sc).powi(2);
        }
        (sum / self.dim as f64).sqrt()
    }

    /// Hairer's starting step heuristic.
    pub fn initial_step<F: FnMut(&[f64], &mut [f64])>(&mut self, f: &mut F, y: &[f64], h_max: f64) -> f64 {
        if !self.fsal_valid {
            self.reset(f, y);
        }
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for (&yi, &fi) in y.iter().zip(&self.k[0]) {
            let sc = self.atol + self.rtol * yi.abs();
            d0 += (yi / sc).powi(2);
            d1 += (fi / sc).powi(2);
        }
        d0 = (d0 / self.dim as f64).sqrt();
        d1 = (d1 / self.dim as f64).sqrt();
        let h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        let h0 = h0.min(h_max);
        for ((t, &yi), &fi) in self.ytmp.iter_mut().zip(y).zip(&self.k[0]) {
            *t = yi + h0 * fi;
        }
        f(&self.ytmp, &mut self.k[1]);
        let mut d2 = 0.0;
        for ((&yi, &a), &b) in y.iter().zip(&self.k[1]).zip(&self.k[0]) {
            let sc = self.atol + self.rtol * yi.abs();
            d2 += ((a - b) / sc).powi(2);
        }
        d2 = (d2 / self.dim as f64).sqrt() / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(h_max)
    }

    /// Attempts one step of size `h` from `y`; the candidate is left in `ynew`.
    /// Returns the scaled error norm (accept when `<= 1`).
    pub fn try_step<F: FnMut(&[f64], &mut [f64])>(&mut self, f: &mut F, y: &[f64], h: f64) -> f64 {
        if !self.fsal_valid {
            self.reset(f, y);
        }
        let n = self.dim;
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let ytmp = &mut self.ytmp;
        for i in 0..n {
            ytmp[i] = y[i] + h * A21 * k1[i];
        }
        f(ytmp, k2);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        f(ytmp, k3);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(ytmp, k4);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(ytmp, k5);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        f(ytmp, k6);
        for i in 0..n {
            self.ynew[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        f(&self.ynew, k7);
        for i in 0..n {
            ytmp[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        self.scaled_norm(y, &self.ytmp)
    }

    /// Commits the last candidate: FSAL derivative moves into slot 0.
    pub fn accept(&mut self, err: f64) {
        self.k.swap(0, 6);
        self.err_old = err.max(1e-4);
    }

    /// Step factor for the next attempt after an error norm of `err`.
    pub fn factor(&self, err: f64, accepted: bool) -> f64 {
        if err == 0.0 {
            return FAC_MAX;
        }
        let expo1 = 0.2 - 0.75 * BETA;
        let mut fac = SAFETY * err.powf(-expo1);
        if accepted {
            fac *= self.err_old.powf(BETA);
            fac.clamp(FAC_MIN, FAC_MAX)
        } else {
            fac.clamp(FAC_MIN, 1.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(rtol: f64) -> (f64, usize) {
        // y' = -y, y(0) = 1 on [0, 5].
        let mut f = |y: &[f64], dy: &mut [f64]| dy[0] = -y[0];
        let mut s = Dopri5::new(1, rtol, 1e-14);
        let mut y = vec![1.0];
        let mut t = 0.0;
        let mut h = s.initial_step(&mut f, &y, 1.0);
        let mut steps = 0;
        while t < 5.0 {
            let h_try = h.min(5.0 - t);
            let err = s.try_step(&mut f, &y, h_try);
            if err <= 1.0 {
                t = if h_try == 5.0 - t { 5.0 } else { t + h_try };
                y.copy_from_slice(&s.ynew);
                s.accept(err);
                steps += 1;
                h = h_try * s.factor(err, true);
            } else {
                h = h_try * s.factor(err, false);
            }
        }
        (y[0], steps)
    }

    #[test]
    fn exponential_decay_to_tolerance() {
        let exact = (-5.0f64).exp();
        let (y, _) = solve(1e-10);
        assert!((y - exact).abs() < 1e-10 * 10.0, "{y} vs {exact}");
    }

    #[test]
    fn tighter_tolerance_takes_more_steps() {
        let (_, loose) = solve(1e-6);
        let (_, tight) = solve(1e-11);
        assert!(tight > loose);
    }

    #[test]
    fn fifth_order_on_polynomial() {
        // y' = 5 t^4 as an autonomous system (t, y).
        let mut f = |y: &[f64], dy: &mut [f64]| {
            dy[0] = 1.0;
            dy[1] = 5.0 * y[0].powi(4);
        };
        let mut s = Dopri5::new(2, 1e-6, 1e-6);
        s.try_step(&mut f, &[0.0, 0.0], 1.0);
        assert!((s.ynew[1] - 1.0).abs() < 1e-13);
    }
}
