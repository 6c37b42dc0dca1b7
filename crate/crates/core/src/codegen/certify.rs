use super::param::ParamMatrix;
use super::{constraint_residual, GeneratorKind, GeneratorMatrix};
use crate::error::{Error, Result};
use crate::linalg::{dft_matrix, gram, hermitian_inv_sqrt, singular_values, CMat, C64};
use crate::ofdm::{Layout, SystemConfig};

/// Divides by the root mean squared singular value without any checks.
pub fn scale_to_unit_power(g: &GeneratorMatrix) -> GeneratorMatrix {
    let s = g.s2().sqrt();
    let mut out = g.clone();
    out.mat = g.matrix() / C64::from(s);
    out.s2 = 1.0;
    out
}

/// Relative spread of the squared singular values, `(max - min) / mean`.
fn squared_spread(mat: &CMat) -> (f64, f64) {
    let s = singular_values(mat);
    let sq: Vec<f64> = s.iter().map(|v| v * v).collect();
    let mean = sq.iter().sum::<f64>() / sq.len() as f64;
    let hi = sq.iter().copied().fold(0.0, f64::max);
    let lo = sq.iter().copied().fold(f64::INFINITY, f64::min);
    ((hi - lo) / mean, mean)
}

/// Scales a generator with `G^H G ~ alpha I` to `G^H G = I`.
///
/// Fails when the squared singular values spread by more than `tol`
/// relative to their mean.
pub fn normalize(g: &GeneratorMatrix, tol: f64) -> Result<GeneratorMatrix> {
    let (spread, _) = squared_spread(g.matrix());
    if !(spread <= tol) {
        return Err(Error::NotOrthogonal { spread });
    }
    Ok(scale_to_unit_power(g))
}

/// Projects the columns onto the null space of the tail rows and
/// orthonormalizes them, giving an exact optimum close to `g`.
pub fn polish(g: &GeneratorMatrix) -> Result<GeneratorMatrix> {
    let layout = Layout::new(g.config())?;
    let tail = layout.tail_rows();
    let n_a = layout.n_a();
    let llh = tail * tail.adjoint();
    let inner = llh.lu().solve(tail).ok_or(Error::RankDeficient {
        condition: f64::INFINITY,
    })?;
    let proj = CMat::identity(n_a, n_a) - tail.adjoint() * inner;
    let projected = proj * g.matrix();
    let w = hermitian_inv_sqrt(&gram(&projected))?;
    let mat = projected * w;
    GeneratorMatrix::with_layout(g.kind(), mat, &layout)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalityReport {
    /// `max |G^H G / s^2 - I|`.
    pub ortho_residual: f64,
    pub constraint_residual: f64,
    pub singular_value_spread: f64,
    pub s2: f64,
    pub is_optimal: bool,
}

/// Checks `G^H G = s^2 I` and the zero-UW constraint.
pub fn certify_optimality(g: &GeneratorMatrix, tol: f64) -> Result<OptimalityReport> {
    let layout = Layout::new(g.config())?;
    let (spread, s2) = squared_spread(g.matrix());
    let x = gram(g.matrix()) / C64::from(s2);
    let n_d = x.nrows();
    let ortho = (x - CMat::identity(n_d, n_d))
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    let constraint = constraint_residual(&layout, g.matrix());
    Ok(OptimalityReport {
        ortho_residual: ortho,
        constraint_residual: constraint,
        singular_value_spread: spread,
        s2,
        is_optimal: ortho < tol && constraint < tol,
    })
}

/// Layout without zero subcarriers; the redundant set only labels the
/// first `n_u` subcarriers, which keeps `M22` a nonsingular Vandermonde block.
pub fn scfde_config(n: usize, n_u: usize) -> Result<SystemConfig> {
    SystemConfig::new(n, n_u, Vec::new(), (0..n_u).collect())
}

/// `G_SC = F_N [I; 0]`, whose time-domain symbol is the data block followed
/// by `N_u` zeros.
pub fn scfde_generator(config: &SystemConfig) -> Result<GeneratorMatrix> {
    if !config.zero_idx.is_empty() {
        return Err(Error::InvalidConfig(
            "single-carrier generator needs a layout without zero subcarriers".into(),
        ));
    }
    let f = dft_matrix(config.n);
    let mat = f.columns(0, config.n_d).into_owned();
    GeneratorMatrix::new(GeneratorKind::ScFde, mat, config)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetryReport {
    /// Column `N_d-1-i` equals the flipped conjugate of column `i`.
    pub g_conj_symmetric: bool,
    pub g_residual: f64,
    /// Column `N_a-1-i` of `A` equals flipped column `i`.
    pub a_symmetric: Option<bool>,
    pub a_residual: Option<f64>,
}

/// Residuals are relative to the largest entry; `tol` decides the flags.
pub fn check_symmetry(g: &GeneratorMatrix, a: Option<&ParamMatrix>, tol: f64) -> SymmetryReport {
    let m = g.matrix();
    let (rows, cols) = m.shape();
    let peak = m.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut g_res = 0.0f64;
    for c in 0..cols {
        for r in 0..rows {
            let d = m[(r, cols - 1 - c)] - m[(rows - 1 - r, c)].conj();
            g_res = g_res.max(d.norm());
        }
    }
    g_res /= peak;
    let a_res = a.map(|p| {
        let a = p.matrix();
        let n = a.nrows();
        let peak = a.amax().max(f64::MIN_POSITIVE);
        let mut res = 0.0f64;
        for c in 0..n {
            for r in 0..n {
                res = res.max((a[(r, n - 1 - c)] - a[(n - 1 - r, c)]).abs());
            }
        }
        res / peak
    });
    SymmetryReport {
        g_conj_symmetric: g_res < tol,
        g_residual: g_res,
        a_symmetric: a_res.map(|r| r < tol),
        a_residual: a_res,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codegen::systematic_generator;
    use crate::linalg::{idft_matrix, max_abs};

    #[test]
    fn scfde_is_single_carrier_block() {
        let cfg = scfde_config(8, 2).unwrap();
        let g = scfde_generator(&cfg).unwrap();
        let mut d = vec![C64::new(0.0, 0.0); 6];
        d[0] = C64::new(1.0, 0.0);
        let x = idft_matrix(8) * crate::linalg::CVec::from_vec(g.encode(&d));
        for (i, z) in x.iter().enumerate() {
            let want = if i == 0 { 1.0 } else { 0.0 };
            assert!((z - C64::new(want, 0.0)).norm() < 1e-14);
        }
        let gg = gram(g.matrix());
        assert!(max_abs(&(gg - CMat::identity(6, 6) * C64::from(8.0))) < 1e-12);
        let report = certify_optimality(&g, 1e-9).unwrap();
        assert!(report.is_optimal);
        assert!((report.s2 - 8.0).abs() < 1e-12);
        let unit = normalize(&g, 1e-9).unwrap();
        assert!(max_abs(&(unit.matrix() * C64::from(8f64.sqrt()) - g.matrix())) < 1e-12);
    }

    #[test]
    fn scfde_rejects_zero_subcarriers() {
        assert!(scfde_generator(&SystemConfig::default()).is_err());
    }

    #[test]
    fn systematic_is_not_optimal_but_symmetric() {
        let g = systematic_generator(&SystemConfig::default()).unwrap();
        let report = certify_optimality(&g, 1e-6).unwrap();
        assert!(!report.is_optimal);
        assert!(report.singular_value_spread > 0.1);
        assert!(normalize(&g, 1e-6).is_err());
        let sym = check_symmetry(&g, Some(&ParamMatrix::identity(52)), 1e-9);
        assert!(sym.g_conj_symmetric, "{}", sym.g_residual);
        assert_eq!(sym.a_symmetric, Some(true));
    }

    #[test]
    fn polish_systematic_gives_exact_optimum() {
        let g = systematic_generator(&SystemConfig::default()).unwrap();
        let p = polish(&g).unwrap();
        let report = certify_optimality(&p, 1e-9).unwrap();
        assert!(report.is_optimal, "{report:?}");
        assert!((report.s2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalize_divides_by_alpha_root() {
        let g = scfde_generator(&scfde_config(8, 2).unwrap()).unwrap();
        let doubled = GeneratorMatrix::new(GeneratorKind::ScFde, g.matrix() * C64::from(0.25), g.config()).unwrap();
        let n = normalize(&doubled, 1e-9).unwrap();
        assert!(max_abs(&(gram(n.matrix()) - CMat::identity(6, 6))) < 1e-12);
        let tr: f64 = n.matrix().iter().map(|z| z.norm_sqr()).sum();
        assert!((tr - 6.0).abs() < 1e-12);
    }
}
