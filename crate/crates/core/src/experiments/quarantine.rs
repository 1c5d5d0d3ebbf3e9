use super::{Cell, Table};
use crate::error::{Error, Result};
use crate::model::make_seiaqr;
use crate::threshold::{quarantine_threshold, s_star, IsolationThreshold};

/// `S*` of the isolation model with natural control. Rates do not enter.
pub fn seiaqr_s_star(chi: f64, xi: f64, r0: f64, zeta_i: f64, zeta_a: f64) -> Result<f64> {
    let p = make_seiaqr(r0, 1.0, 1.0, chi, xi, zeta_i, zeta_a)?;
    s_star(&p, &p.identity_control())
}

fn threshold_cell(v: Result<f64>) -> Result<Cell> {
    match v {
        Ok(x) => Ok(x.into()),
        Err(Error::NoThreshold) => Ok("none".into()),
        Err(e) => Err(e),
    }
}

/// Minimal asymptomatic isolation for each symptomatic isolation level.
///
/// Columns: the required `zeta_A`, `S*` without asymptomatic isolation, `S*`
/// at the required level, and the largest uniform multiplier that keeps a
/// fully susceptible population below `S*` when no asymptomatic case is
/// isolated.
pub fn quarantine_analysis(chi: f64, xi: f64, r0: f64, zeta_i_grid: &[f64]) -> Result<Table> {
    let mut t = Table::new(
        "quarantine",
        [
            "zeta_I",
            "status",
            "zeta_A_min",
            "S_star_zeta_A_0",
            "S_star_at_min",
            "q_uniform_max",
        ],
    );
    t.meta("chi", chi.to_string())
        .meta("xi", xi.to_string())
        .meta("r0", r0.to_string());
    for &zi in zeta_i_grid {
        let th = quarantine_threshold(chi, xi, r0, zi)?;
        let status = match th {
            IsolationThreshold::Required(_) => "required",
            IsolationThreshold::AlreadyNonOutbreak => "already-non-outbreak",
            IsolationThreshold::Infeasible => "infeasible",
        };
        let s0 = seiaqr_s_star(chi, xi, r0, zi, 0.0);
        let q_max = match &s0 {
            Ok(s) => Cell::Num(s.min(1.0)),
            Err(Error::NoThreshold) => Cell::Num(1.0),
            Err(e) => return Err(e.clone()),
        };
        let at_min = match th {
            IsolationThreshold::Required(za) => threshold_cell(seiaqr_s_star(chi, xi, r0, zi, za))?,
            _ => Cell::Empty,
        };
        t.push(vec![
            zi.into(),
            status.into(),
            th.value().into(),
            threshold_cell(s0)?,
            at_min,
            q_max,
        ]);
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn s_star_formula_by_hand() {
        // 1 / (R0 (chi xi (1 - zA) + (1 - chi)(1 - zI)))
        let (chi, xi, r0, zi, za) = (0.862, 0.55, 3.0, 0.4, 0.2);
        let hand = 1.0 / (r0 * (chi * xi * (1.0 - za) + (1.0 - chi) * (1.0 - zi)));
        let v = seiaqr_s_star(chi, xi, r0, zi, za).unwrap();
        assert!((v - hand).abs() < 1e-14);
    }

    #[test]
    fn full_isolation_has_no_threshold() {
        assert_eq!(seiaqr_s_star(0.862, 0.55, 3.0, 1.0, 1.0), Err(Error::NoThreshold));
    }

    #[test]
    fn table_rows() {
        let t = quarantine_analysis(0.862, 0.55, 3.0, &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(t.rows.len(), 3);
        let last = &t.rows[2];
        assert_eq!(last[1], Cell::Text("required".into()));
        let za = last[2].as_num().unwrap();
        assert!((za - 0.2969134503).abs() < 1e-9);
        assert!((last[4].as_num().unwrap() - 1.0).abs() < 1e-12);
        // zeta_I = 0: even full asymptomatic isolation leaves R = 3 * 0.138 < 1, so feasible.
        assert_eq!(t.rows[0][1], Cell::Text("required".into()));
    }
}
