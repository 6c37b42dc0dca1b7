//! Multipath channel generation, cyclic channel application and AWGN.
//!
//! Channels are sample-spaced tapped delay lines with an exponential power
//! delay profile, truncated to the UW length and normalized to unit energy.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::ofdm::{Layout, TimeSymbol};
use crate::rng::{complex_gaussian, fnv1a, rng_for};

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    h: Vec<C64>,
    hd: Vec<C64>,
}

impl ChannelRealization {
    /// Wraps an impulse response, rejecting ones longer than the UW.
    pub fn new(h: Vec<C64>, layout: &Layout) -> Result<Self> {
        if h.len() > layout.n_u() {
            return Err(Error::ChannelTooLong {
                taps: h.len(),
                max: layout.n_u(),
            });
        }
        let hd = to_freq(&h, layout)?;
        Ok(ChannelRealization { h, hd })
    }

    pub fn identity(layout: &Layout) -> Self {
        ChannelRealization {
            h: vec![C64::new(1.0, 0.0)],
            hd: vec![C64::new(1.0, 0.0); layout.n_a()],
        }
    }

    pub fn taps(&self) -> &[C64] {
        &self.h
    }

    /// Downsized frequency response on the occupied subcarriers.
    pub fn freq(&self) -> &[C64] {
        &self.hd
    }
}

/// Per-sample time-domain noise variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma_n2: f64,
}

impl NoiseSpec {
    pub fn new(sigma_n2: f64) -> Result<Self> {
        if !(sigma_n2 >= 0.0 && sigma_n2.is_finite()) {
            return Err(Error::InvalidConfig(format!("noise variance must be >= 0, got {sigma_n2}")));
        }
        Ok(NoiseSpec { sigma_n2 })
    }

    pub fn noiseless() -> Self {
        NoiseSpec { sigma_n2: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultipathSpec {
    pub delay_spread_ns: f64,
    pub fs: f64,
    pub max_taps: usize,
}

impl MultipathSpec {
    pub fn indoor(fs: f64, max_taps: usize) -> Self {
        MultipathSpec {
            delay_spread_ns: 100.0,
            fs,
            max_taps,
        }
    }

    /// Expected power of tap `k` before normalization.
    pub fn tap_power(&self, k: usize) -> f64 {
        let ts_ns = 1e9 / self.fs;
        (-(k as f64) * ts_ns / self.delay_spread_ns).exp()
    }
}

/// Raw taps with powers `exp(-k T_s / tau)`, not normalized.
pub fn multipath_taps<R: Rng + ?Sized>(rng: &mut R, spec: &MultipathSpec) -> Result<Vec<C64>> {
    if !(spec.delay_spread_ns > 0.0) || !(spec.fs > 0.0) || spec.max_taps == 0 {
        return Err(Error::InvalidConfig(format!("invalid multipath spec {spec:?}")));
    }
    Ok((0..spec.max_taps)
        .map(|k| complex_gaussian(rng, spec.tap_power(k)))
        .collect())
}

/// Unit-energy realization for `seed`.
pub fn gen_multipath(seed: u64, spec: &MultipathSpec, layout: &Layout) -> Result<ChannelRealization> {
    let mut rng = rng_for(&[seed]);
    let mut h = multipath_taps(&mut rng, spec)?;
    let norm = h.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    h.iter_mut().for_each(|z| *z /= norm);
    ChannelRealization::new(h, layout)
}

/// `B^T F [h; 0]`.
pub fn to_freq(h: &[C64], layout: &Layout) -> Result<Vec<C64>> {
    if h.len() > layout.n() {
        return Err(Error::ChannelTooLong {
            taps: h.len(),
            max: layout.n(),
        });
    }
    let mut padded = vec![C64::new(0.0, 0.0); layout.n()];
    padded[..h.len()].copy_from_slice(h);
    layout.downsize(&layout.dft().forward(&padded)?)
}

/// Cyclic convolution of `x` with the taps of `h`.
pub fn cyclic_convolve(x: &[C64], h: &[C64]) -> Vec<C64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            h.iter()
                .enumerate()
                .map(|(k, &hk)| hk * x[(i + n - k % n) % n])
                .sum()
        })
        .collect()
}

pub fn add_awgn<R: Rng + ?Sized>(x: &mut [C64], noise: &NoiseSpec, rng: &mut R) {
    if noise.sigma_n2 > 0.0 {
        for z in x.iter_mut() {
            *z += complex_gaussian(rng, noise.sigma_n2);
        }
    }
}

/// `y = H_c x + n` with `H_c` circulant.
pub fn apply_channel<R: Rng + ?Sized>(
    x: &TimeSymbol,
    ch: &ChannelRealization,
    noise: &NoiseSpec,
    rng: &mut R,
) -> TimeSymbol {
    let mut y = cyclic_convolve(&x.0, ch.taps());
    add_awgn(&mut y, noise, rng);
    TimeSymbol(y)
}

/// Stored set of impulse responses shared by every system under test.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelCorpus {
    pub spec: MultipathSpec,
    pub seed: u64,
    pub taps: Vec<Vec<C64>>,
}

const CORPUS_MAGIC: &str = "# uwofdm-channels v1";

impl ChannelCorpus {
    pub fn generate(count: usize, spec: MultipathSpec, seed: u64) -> Result<Self> {
        let taps = (0..count as u64)
            .map(|i| {
                let mut rng = rng_for(&[seed, i]);
                let mut h = multipath_taps(&mut rng, &spec)?;
                let norm = h.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                h.iter_mut().for_each(|z| *z /= norm);
                Ok(h)
            })
            .collect::<Result<_>>()?;
        Ok(ChannelCorpus { spec, seed, taps })
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Content fingerprint.
    pub fn id(&self) -> u64 {
        let bytes = self
            .taps
            .iter()
            .flatten()
            .flat_map(|z| [z.re.to_bits().to_le_bytes(), z.im.to_bits().to_le_bytes()])
            .flatten();
        fnv1a(bytes)
    }

    pub fn realization(&self, index: usize, layout: &Layout) -> Result<ChannelRealization> {
        let h = self
            .taps
            .get(index)
            .ok_or_else(|| Error::InvalidScenario(format!("corpus has no realization {index}")))?;
        ChannelRealization::new(h.clone(), layout)
    }

    /// First `count` realizations.
    pub fn truncated(&self, count: usize) -> Self {
        ChannelCorpus {
            spec: self.spec,
            seed: self.seed,
            taps: self.taps.iter().take(count).cloned().collect(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{CORPUS_MAGIC}").unwrap();
        writeln!(s, "count {}", self.taps.len()).unwrap();
        writeln!(s, "tau_rms_ns {}", self.spec.delay_spread_ns).unwrap();
        writeln!(s, "fs {}", self.spec.fs).unwrap();
        writeln!(s, "n_u {}", self.spec.max_taps).unwrap();
        writeln!(s, "seed {}", self.seed).unwrap();
        writeln!(s, "data").unwrap();
        for h in &self.taps {
            let line: Vec<String> = h.iter().map(|z| format!("{} {}", z.re, z.im)).collect();
            writeln!(s, "{}", line.join(" ")).unwrap();
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(CORPUS_MAGIC) {
            return Err(Error::Parse(format!("expected header {CORPUS_MAGIC:?}")));
        }
        let mut fields = std::collections::HashMap::new();
        for line in lines.by_ref() {
            let line = line.trim();
            if line == "data" {
                break;
            }
            if let Some((k, v)) = line.split_once(' ') {
                fields.insert(k.to_string(), v.trim().to_string());
            }
        }
        let num = |key: &str| -> Result<f64> {
            fields
                .get(key)
                .ok_or_else(|| Error::Parse(format!("missing field {key}")))?
                .parse()
                .map_err(|_| Error::Parse(format!("bad value for {key}")))
        };
        let count = num("count")? as usize;
        let spec = MultipathSpec {
            delay_spread_ns: num("tau_rms_ns")?,
            fs: num("fs")?,
            max_taps: num("n_u")? as usize,
        };
        let seed: u64 = fields
            .get("seed")
            .ok_or_else(|| Error::Parse("missing field seed".into()))?
            .parse()
            .map_err(|_| Error::Parse("bad value for seed".into()))?;
        let mut taps = Vec::with_capacity(count);
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| Error::Parse(format!("bad tap value {t:?}"))))
                .collect::<Result<_>>()?;
            if !vals.len().is_multiple_of(2) || vals.len() / 2 > spec.max_taps {
                return Err(Error::Parse(format!("bad tap line with {} values", vals.len())));
            }
            taps.push(vals.chunks(2).map(|p| C64::new(p[0], p[1])).collect());
        }
        if taps.len() != count {
            return Err(Error::Parse(format!("expected {count} realizations, found {}", taps.len())));
        }
        Ok(ChannelCorpus { spec, seed, taps })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dft_matrix, idft_matrix, max_abs, CMat};
    use crate::ofdm::{selection_matrix, SystemConfig};

    fn layout() -> Layout {
        Layout::new(&SystemConfig::default()).unwrap()
    }

    #[test]
    fn realizations_have_unit_energy() {
        let l = layout();
        let spec = MultipathSpec::indoor(20e6, 16);
        for seed in 0..20 {
            let ch = gen_multipath(seed, &spec, &l).unwrap();
            let e: f64 = ch.taps().iter().map(|z| z.norm_sqr()).sum();
            assert!((e - 1.0).abs() < 1e-12);
            assert_eq!(ch.taps().len(), 16);
        }
    }

    #[test]
    fn tiny_delay_spread_leaves_one_tap() {
        let spec = MultipathSpec {
            delay_spread_ns: 1e-3,
            fs: 20e6,
            max_taps: 16,
        };
        let ch = gen_multipath(3, &spec, &layout()).unwrap();
        assert!(ch.taps()[0].norm_sqr() > 0.999);
    }

    #[test]
    fn identity_and_delay_responses() {
        let l = layout();
        let one = to_freq(&[C64::new(1.0, 0.0)], &l).unwrap();
        assert!(one.iter().all(|z| (z - C64::new(1.0, 0.0)).norm() < 1e-15));
        let delay = to_freq(&[C64::new(0.0, 0.0), C64::new(1.0, 0.0)], &l).unwrap();
        for (z, &k) in delay.iter().zip(l.occupied()) {
            let want = C64::from_polar(1.0, -2.0 * std::f64::consts::PI * k as f64 / 64.0);
            assert!((z - want).norm() < 1e-12);
        }
    }

    #[test]
    fn circulant_is_diagonalized() {
        let l = layout();
        let cfg = l.config().clone();
        let ch = gen_multipath(11, &MultipathSpec::indoor(20e6, 16), &l).unwrap();
        let hc = CMat::from_fn(64, 64, |i, j| {
            let k = (i + 64 - j) % 64;
            ch.taps().get(k).copied().unwrap_or_default()
        });
        let b = selection_matrix(&cfg).unwrap();
        let dense = b.transpose() * dft_matrix(64) * hc * idft_matrix(64) * &b;
        let diag = CMat::from_diagonal(&crate::linalg::CVec::from_vec(ch.freq().to_vec()));
        assert!(max_abs(&(dense - diag)) < 1e-9);
    }

    #[test]
    fn noiseless_identity_channel_is_transparent() {
        let l = layout();
        let x = TimeSymbol((0..64).map(|i| C64::new(i as f64, -(i as f64))).collect());
        let mut rng = rng_for(&[1]);
        let y = apply_channel(&x, &ChannelRealization::identity(&l), &NoiseSpec::noiseless(), &mut rng);
        assert_eq!(y, x);
    }

    #[test]
    fn too_many_taps_rejected() {
        let h = vec![C64::new(0.1, 0.0); 17];
        assert!(matches!(
            ChannelRealization::new(h, &layout()),
            Err(Error::ChannelTooLong { taps: 17, max: 16 })
        ));
    }

    #[test]
    fn corpus_round_trip_and_determinism() {
        let spec = MultipathSpec::indoor(20e6, 16);
        let a = ChannelCorpus::generate(12, spec, 99).unwrap();
        let b = ChannelCorpus::generate(12, spec, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.id(), b.id());
        let back = ChannelCorpus::parse(&a.to_text()).unwrap();
        assert_eq!(back, a);
        assert_ne!(ChannelCorpus::generate(12, spec, 100).unwrap().id(), a.id());
        assert_eq!(a.truncated(5).len(), 5);
    }
}
