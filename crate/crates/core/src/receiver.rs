//! Linear data estimation and preamble-based channel estimation.

use log::warn;

use crate::error::{Error, Result};
use crate::linalg::{checked_cholesky, gram, hermitize, CMat, CVec, C64};
use crate::ofdm::{Layout, TimeSymbol};
use crate::rng::rng_for;

use rand::Rng;

/// Condition bound above which an equalizer is reported as unusable.
pub const MAX_EQUALIZER_CONDITION: f64 = 1e12;

/// `y = y_d - H B^T x_u`.
pub fn subtract_uw(y_d: &[C64], h: &[C64], xu: &[C64]) -> Result<Vec<C64>> {
    if y_d.len() != h.len() || xu.len() != h.len() {
        return Err(Error::DimensionMismatch {
            expected: h.len(),
            found: if y_d.len() != h.len() { y_d.len() } else { xu.len() },
        });
    }
    Ok(y_d
        .iter()
        .zip(h)
        .zip(xu)
        .map(|((&y, &hk), &u)| y - hk * u)
        .collect())
}

/// Estimator matrix and per-symbol error variances.
#[derive(Debug, Clone, PartialEq)]
pub struct Equalizer {
    pub e: CMat,
    pub cee_diag: Vec<f64>,
}

impl Equalizer {
    pub fn apply(&self, y: &[C64]) -> Vec<C64> {
        assert_eq!(y.len(), self.e.ncols(), "received vector length");
        (0..self.e.nrows())
            .map(|r| self.e.row(r).iter().zip(y).map(|(&a, &b)| a * b).sum())
            .collect()
    }
}

fn channel_times(g: &CMat, h: &[C64]) -> Result<CMat> {
    if h.len() != g.nrows() {
        return Err(Error::DimensionMismatch {
            expected: g.nrows(),
            found: h.len(),
        });
    }
    Ok(CMat::from_fn(g.nrows(), g.ncols(), |r, c| h[r] * g[(r, c)]))
}

/// Solves `(A + reg I) E = (HG)^H` and returns `E` with `diag((A + reg I)^{-1})`.
fn regularized(g: &CMat, h: &[C64], reg: f64) -> Result<(CMat, Vec<f64>)> {
    let hg = channel_times(g, h)?;
    let mut a = gram(&hg);
    for i in 0..a.nrows() {
        a[(i, i)] += C64::from(reg);
    }
    hermitize(&mut a);
    let chol = checked_cholesky(&a, MAX_EQUALIZER_CONDITION)?;
    let e = chol.solve(&hg.adjoint());
    let inv = chol.inverse();
    Ok((e, inv.diagonal().iter().map(|z| z.re).collect()))
}

/// `E = (G^H H^H H G)^{-1} G^H H^H` with `C_ee = N sigma_n^2 (G^H H^H H G)^{-1}`.
///
/// `noise_var` is the frequency-domain noise variance `N sigma_n^2`.
pub fn blue_equalizer(g: &CMat, h: &[C64], noise_var: f64) -> Result<Equalizer> {
    let (e, diag) = regularized(g, h, 0.0)?;
    Ok(Equalizer {
        e,
        cee_diag: diag.into_iter().map(|v| v * noise_var).collect(),
    })
}

/// `E = (G^H H^H H G + N sigma_n^2 / sigma_d^2 I)^{-1} G^H H^H`.
pub fn lmmse_equalizer(g: &CMat, h: &[C64], noise_var: f64, sigma_d2: f64) -> Result<Equalizer> {
    if !(noise_var >= 0.0) || !(sigma_d2 > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "need noise variance >= 0 and sigma_d2 > 0, got {noise_var}, {sigma_d2}"
        )));
    }
    let (e, diag) = regularized(g, h, noise_var / sigma_d2)?;
    Ok(Equalizer {
        e,
        cee_diag: diag.into_iter().map(|v| v * noise_var).collect(),
    })
}

/// Channel inversion on the data subcarriers of a systematic code; the
/// redundant subcarriers are discarded.
pub fn ci_equalizer(h: &[C64], layout: &Layout, noise_var: f64) -> Result<Equalizer> {
    if h.len() != layout.n_a() {
        return Err(Error::DimensionMismatch {
            expected: layout.n_a(),
            found: h.len(),
        });
    }
    let n_d = layout.n_d();
    let mut e = CMat::zeros(n_d, layout.n_a());
    let mut cee = Vec::with_capacity(n_d);
    for k in 0..n_d {
        let pos = layout.slot_to_pos()[k];
        if h[pos].norm_sqr() == 0.0 {
            return Err(Error::ZeroChannelCoefficient { index: pos });
        }
        e[(k, pos)] = h[pos].inv();
        cee.push(noise_var / h[pos].norm_sqr());
    }
    Ok(Equalizer { e, cee_diag: cee })
}

/// `B^T M_1`: occupied rows of the first `N_u` columns of `F_N`.
fn phi(layout: &Layout) -> CMat {
    let n = layout.n();
    let occ = layout.occupied();
    CMat::from_fn(occ.len(), layout.n_u(), |o, t| {
        let phase = -2.0 * std::f64::consts::PI * ((occ[o] * t) % n) as f64 / n as f64;
        C64::from_polar(1.0, phase)
    })
}

/// `W = B^T M_1 (M_1^H B B^T M_1)^{-1} M_1^H B`.
pub fn smoothing_matrix(layout: &Layout) -> Result<CMat> {
    let p = phi(layout);
    let chol = checked_cholesky(&gram(&p), MAX_EQUALIZER_CONDITION)?;
    let mut w = &p * chol.solve(&p.adjoint());
    hermitize(&mut w);
    Ok(w)
}

/// BPSK training symbol on the occupied subcarriers, sent twice.
#[derive(Debug, Clone, PartialEq)]
pub struct Preamble {
    pub values: Vec<f64>,
    pub amplitude: f64,
}

impl Preamble {
    pub fn seeded(layout: &Layout, seed: u64, amplitude: f64) -> Self {
        let mut rng = rng_for(&[seed, 0x5052_4541_4d42]);
        let values = (0..layout.n_a())
            .map(|_| if rng.random::<bool>() { amplitude } else { -amplitude })
            .collect();
        Preamble { values, amplitude }
    }

    pub fn time_symbol(&self, layout: &Layout) -> Result<TimeSymbol> {
        let c: Vec<C64> = self.values.iter().map(|&v| C64::new(v, 0.0)).collect();
        let x = layout.insert_zeros(&c)?;
        Ok(TimeSymbol(layout.dft().inverse(&x.0)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    pub h_hat: Vec<C64>,
    /// Smoothed downsized frequency response.
    pub h_freq: Vec<C64>,
    /// Coarse per-subcarrier estimate before smoothing.
    pub h_coarse: Vec<C64>,
}

/// Precomputed least-squares channel estimator for one layout.
#[derive(Debug, Clone)]
pub struct ChannelEstimator {
    phi: CMat,
    /// `(Phi^H Phi)^{-1} Phi^H`.
    pinv: CMat,
}

impl ChannelEstimator {
    pub fn new(layout: &Layout) -> Result<Self> {
        let p = phi(layout);
        let chol = checked_cholesky(&gram(&p), MAX_EQUALIZER_CONDITION)?;
        let pinv = chol.solve(&p.adjoint());
        Ok(ChannelEstimator { phi: p, pinv })
    }

    /// Averages the two received preamble symbols, divides out the training
    /// values and projects onto responses of at most `N_u` taps.
    pub fn estimate(&self, y1: &TimeSymbol, y2: &TimeSymbol, preamble: &Preamble, layout: &Layout) -> Result<ChannelEstimate> {
        let n = layout.n();
        if y1.0.len() != n || y2.0.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: y1.0.len().max(y2.0.len()),
            });
        }
        let avg: Vec<C64> = y1.0.iter().zip(&y2.0).map(|(a, b)| (a + b) * 0.5).collect();
        let yf = layout.downsize(&layout.dft().forward(&avg)?)?;
        let a2 = preamble.amplitude * preamble.amplitude;
        let coarse: Vec<C64> = yf.iter().zip(&preamble.values).map(|(y, &x)| y * (x / a2)).collect();
        let h_hat = &self.pinv * CVec::from_vec(coarse.clone());
        let h_freq = &self.phi * &h_hat;
        Ok(ChannelEstimate {
            h_hat: h_hat.iter().copied().collect(),
            h_freq: h_freq.iter().copied().collect(),
            h_coarse: coarse,
        })
    }
}

/// Logs and skips symbols whose equalizer cannot be formed.
pub(crate) fn equalizer_or_warn(result: Result<Equalizer>, context: &str) -> Option<Equalizer> {
    match result {
        Ok(e) => Some(e),
        Err(err) => {
            warn!("{context}: {err}");
            None
        }
    }
}
