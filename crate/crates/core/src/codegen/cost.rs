use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{checked_cholesky, gram, real_trace, CMat};

/// Largest condition number of `G^H G` accepted by the cost functions.
const MAX_GRAM_CONDITION: f64 = 1e14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Blue,
    Lmmse,
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::Blue => "blue",
            Estimator::Lmmse => "lmmse",
        })
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "blue" => Ok(Estimator::Blue),
            "lmmse" => Ok(Estimator::Lmmse),
            other => Err(Error::Parse(format!("unknown estimator {other:?}"))),
        }
    }
}

/// Transceiver cost at a fixed ratio `c = E_s / sigma_n^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostSpec {
    pub estimator: Estimator,
    pub c: f64,
    pub sigma_d2: f64,
}

impl CostSpec {
    pub fn new(estimator: Estimator, c: f64, sigma_d2: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidConfig(format!("c must be positive, got {c}")));
        }
        if !(sigma_d2 > 0.0 && sigma_d2.is_finite()) {
            return Err(Error::InvalidConfig(format!("sigma_d2 must be positive, got {sigma_d2}")));
        }
        Ok(CostSpec { estimator, c, sigma_d2 })
    }

    /// Closed-form global minimum for `n_d` data symbols.
    pub fn minimum(&self, n_d: usize) -> f64 {
        let base = self.sigma_d2 * n_d as f64;
        match self.estimator {
            Estimator::Blue => base / self.c,
            Estimator::Lmmse => base / (self.c + 1.0),
        }
    }
}

pub fn cost(g: &CMat, spec: &CostSpec) -> Result<f64> {
    match spec.estimator {
        Estimator::Blue => cost_blue(g, spec),
        Estimator::Lmmse => cost_lmmse(g, spec),
    }
}

/// `J = sigma_d^2 / (c N_d) tr(G^H G) tr((G^H G)^{-1})`.
pub fn cost_blue(g: &CMat, spec: &CostSpec) -> Result<f64> {
    let x = gram(g);
    let n_d = x.nrows() as f64;
    let chol = checked_cholesky(&x, MAX_GRAM_CONDITION)?;
    let tr_inv = real_trace(&chol.inverse());
    Ok(spec.sigma_d2 / (spec.c * n_d) * real_trace(&x) * tr_inv)
}

/// `J = sigma_d^2 tr((c N_d / tr(G^H G) G^H G + I)^{-1})`.
pub fn cost_lmmse(g: &CMat, spec: &CostSpec) -> Result<f64> {
    let x = gram(g);
    let n_d = x.nrows();
    let tr = real_trace(&x);
    if !(tr > 0.0) {
        return Err(Error::RankDeficient { condition: f64::INFINITY });
    }
    // reject the same near-singular matrices the BLUE cost rejects
    checked_cholesky(&x, MAX_GRAM_CONDITION)?;
    let kappa = spec.c * n_d as f64 / tr;
    let y = x * crate::linalg::C64::from(kappa) + CMat::identity(n_d, n_d);
    let chol = checked_cholesky(&y, f64::INFINITY)?;
    Ok(spec.sigma_d2 * real_trace(&chol.inverse()))
}

/// Either cost expressed through the singular values of `G`.
pub fn cost_from_singular_values(s: &[f64], spec: &CostSpec) -> Result<f64> {
    if s.is_empty() {
        return Err(Error::InvalidConfig("empty singular value list".into()));
    }
    if let Some(bad) = s.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidConfig(format!("singular values must be positive, got {bad}")));
    }
    let n_d = s.len() as f64;
    let sum_sq: f64 = s.iter().map(|v| v * v).sum();
    Ok(match spec.estimator {
        Estimator::Blue => {
            let sum_inv: f64 = s.iter().map(|v| 1.0 / (v * v)).sum();
            spec.sigma_d2 / (spec.c * n_d) * sum_sq * sum_inv
        }
        Estimator::Lmmse => {
            let tail: f64 = s
                .iter()
                .map(|v| v * v / (spec.c * n_d * v * v + sum_sq))
                .sum();
            spec.sigma_d2 * n_d - spec.sigma_d2 * spec.c * n_d * tail
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::C64;

    fn spec(estimator: Estimator, c: f64) -> CostSpec {
        CostSpec::new(estimator, c, 1.0).unwrap()
    }

    fn diag(s: &[f64], rows: usize) -> CMat {
        CMat::from_fn(rows, s.len(), |i, j| if i == j { C64::new(s[j], 0.0) } else { C64::new(0.0, 0.0) })
    }

    #[test]
    fn isometry_hits_both_minima() {
        let g = diag(&[1.0; 36], 52);
        assert!((cost_blue(&g, &spec(Estimator::Blue, 1.0)).unwrap() - 36.0).abs() < 1e-12);
        assert!((cost_lmmse(&g, &spec(Estimator::Lmmse, 1.0)).unwrap() - 18.0).abs() < 1e-12);
        assert_eq!(spec(Estimator::Blue, 1.0).minimum(36), 36.0);
        assert_eq!(spec(Estimator::Lmmse, 1.0).minimum(36), 18.0);
    }

    #[test]
    fn blue_small_case() {
        // (1 + 1 + 1 + 4) (1 + 1 + 1 + 1/4) / 4
        let g = diag(&[1.0, 1.0, 1.0, 2.0], 6);
        let j = cost_blue(&g, &spec(Estimator::Blue, 1.0)).unwrap();
        assert!((j - 7.0 * 3.25 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn lmmse_small_case() {
        // kappa = 2/5, diag entries 1/(2/5 + 1) and 1/(8/5 + 1)
        let g = diag(&[1.0, 2.0], 3);
        let j = cost_lmmse(&g, &spec(Estimator::Lmmse, 1.0)).unwrap();
        assert!((j - (5.0 / 7.0 + 5.0 / 13.0)).abs() < 1e-12);
        let s = cost_from_singular_values(&[1.0, 2.0], &spec(Estimator::Lmmse, 1.0)).unwrap();
        assert!((s - j).abs() < 1e-12);
    }

    #[test]
    fn lmmse_approaches_blue_at_high_c() {
        let g = diag(&[0.5, 1.0, 1.5, 3.0], 5);
        let c = 1e6;
        let blue = cost_blue(&g, &spec(Estimator::Blue, c)).unwrap();
        let lmmse = cost_lmmse(&g, &spec(Estimator::Lmmse, c)).unwrap();
        assert!(((lmmse - blue) / blue).abs() < 1e-5);
    }

    #[test]
    fn scale_invariance() {
        let g = CMat::from_fn(6, 3, |i, j| C64::new(((3 * i + 7 * j) as f64).sin(), ((i + 5 * j) as f64).cos()));
        for est in [Estimator::Blue, Estimator::Lmmse] {
            let sp = spec(est, 2.5);
            let j0 = cost(&g, &sp).unwrap();
            for beta in [0.5, 2.0, 10.0] {
                let j1 = cost(&(&g * C64::from(beta)), &sp).unwrap();
                assert!((j1 - j0).abs() <= 1e-12 * j0);
            }
        }
    }

    #[test]
    fn rejects_rank_deficient() {
        let g = CMat::from_fn(5, 2, |i, _| C64::new(i as f64, 1.0));
        assert!(matches!(cost_blue(&g, &spec(Estimator::Blue, 1.0)), Err(Error::RankDeficient { .. })));
        assert!(cost_lmmse(&g, &spec(Estimator::Lmmse, 1.0)).is_err());
    }

    #[test]
    fn singular_value_form_checks_input() {
        assert!(cost_from_singular_values(&[1.0, 0.0], &spec(Estimator::Blue, 1.0)).is_err());
        assert!(cost_from_singular_values(&[], &spec(Estimator::Blue, 1.0)).is_err());
        assert!(CostSpec::new(Estimator::Blue, 0.0, 1.0).is_err());
    }

    #[test]
    fn estimator_names_round_trip() {
        for e in [Estimator::Blue, Estimator::Lmmse] {
            assert_eq!(e.to_string().parse::<Estimator>().unwrap(), e);
        }
    }
}
