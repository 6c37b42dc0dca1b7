//! Small complex linear-algebra helpers shared by the modules.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type RMat = DMatrix<f64>;
pub type CVec = DVector<C64>;

/// Explicit DFT matrix with kernel `e^{-j 2 pi k l / n}` (no normalization).
pub fn dft_matrix(n: usize) -> CMat {
    CMat::from_fn(n, n, |k, l| {
        let phase = -2.0 * std::f64::consts::PI * ((k * l) % n) as f64 / n as f64;
        C64::from_polar(1.0, phase)
    })
}

/// Explicit inverse DFT matrix, `(1/n) e^{+j 2 pi k l / n}`.
pub fn idft_matrix(n: usize) -> CMat {
    let scale = 1.0 / n as f64;
    CMat::from_fn(n, n, |k, l| {
        let phase = 2.0 * std::f64::consts::PI * ((k * l) % n) as f64 / n as f64;
        C64::from_polar(scale, phase)
    })
}

/// `m^H m`, exactly Hermitian.
pub fn gram(m: &CMat) -> CMat {
    let mut g = m.ad_mul(m);
    hermitize(&mut g);
    g
}

pub fn hermitize(m: &mut CMat) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)].im = 0.0;
        for j in (i + 1)..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

pub fn real_trace(m: &CMat) -> f64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)].re).sum()
}

/// Cholesky factor of a Hermitian positive definite matrix, rejecting
/// matrices whose estimated condition number exceeds `max_condition`.
pub fn checked_cholesky(m: &CMat, max_condition: f64) -> Result<Cholesky<C64, Dyn>> {
    let chol = Cholesky::new(m.clone()).ok_or(Error::RankDeficient {
        condition: f64::INFINITY,
    })?;
    let l = chol.l_dirty();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..l.nrows() {
        let d = l[(i, i)].re;
        lo = lo.min(d);
        hi = hi.max(d);
    }
    // squared ratio of diag(L) is a cheap lower bound on the condition number
    let condition = (hi / lo).powi(2);
    if !condition.is_finite() || condition > max_condition {
        return Err(Error::RankDeficient { condition });
    }
    Ok(chol)
}

/// Singular values in descending order.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// 2-norm condition number from the singular values.
pub fn condition_number(m: &CMat) -> f64 {
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn rms(values: impl IntoIterator<Item = C64>) -> f64 {
    let (sum, count) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), z| (s + z.norm_sqr(), n + 1));
    if count == 0 {
        0.0
    } else {
        (sum / count as f64).sqrt()
    }
}

pub fn real_to_complex(m: &RMat) -> CMat {
    m.map(|x| C64::new(x, 0.0))
}

/// Inverse square root of a Hermitian positive definite matrix.
pub fn hermitian_inv_sqrt(m: &CMat) -> Result<CMat> {
    let eig = m.clone().symmetric_eigen();
    let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    if !(lo > hi * 1e-14) {
        return Err(Error::RankDeficient { condition: hi / lo });
    }
    let v = &eig.eigenvectors;
    let scaled = CMat::from_fn(v.nrows(), v.ncols(), |i, j| {
        v[(i, j)] / eig.eigenvalues[j].sqrt()
    });
    Ok(scaled * v.adjoint())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dft_pair_is_inverse() {
        let f = dft_matrix(8);
        let fi = idft_matrix(8);
        let prod = &f * &fi;
        let err = max_abs(&(prod - CMat::identity(8, 8)));
        assert!(err < 1e-13, "{err}");
    }

    #[test]
    fn inv_sqrt_whitens() {
        let a = CMat::from_fn(5, 3, |i, j| C64::new(((2 * i + 3 * j) as f64).sin(), (i * j) as f64 - 1.0));
        let g = gram(&a);
        let w = hermitian_inv_sqrt(&g).unwrap();
        let white = w.adjoint() * g * w;
        assert!(max_abs(&(white - CMat::identity(3, 3))) < 1e-10);
    }

    #[test]
    fn cholesky_rejects_singular() {
        let a = CMat::from_fn(4, 2, |i, _| C64::new(i as f64, 0.0));
        assert!(checked_cholesky(&gram(&a), 1e12).is_err());
    }

    #[test]
    fn inv_sqrt_rejects_rank_deficient() {
        let a = CMat::from_fn(5, 3, |i, j| C64::new((i + 2 * j) as f64, (i * j) as f64 - 1.0));
        assert!(hermitian_inv_sqrt(&gram(&a)).is_err());
    }
}
