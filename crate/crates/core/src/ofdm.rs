//! Subcarrier layout, DFT conventions and UW-OFDM symbol assembly.
//!
//! The forward transform uses the kernel `e^{-j 2 pi k l / N}` without
//! scaling; the inverse carries the `1/N`. A time-domain symbol is the
//! length-`N` DFT interval whose last `N_u` samples hold the unique word.
//!
//! Codeword slots are ordered data first (ascending subcarrier index), then
//! redundant (ascending). The permutation between codeword slots and occupied
//! subcarrier positions is kept as an index map and never materialized.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::codegen::GeneratorMatrix;
use crate::error::{Error, Result};
use crate::linalg::{rms, CMat, C64};

/// Zero subcarriers of the 64-point WLAN layout (DC and band edges).
pub const DEFAULT_ZERO_IDX: [usize; 12] = [0, 27, 28, 29, 30, 31, 32, 33, 34, 35, 36, 37];

/// Energy-optimal redundant subcarrier positions for the default layout.
pub const DEFAULT_RED_IDX: [usize; 16] = [2, 6, 10, 14, 17, 21, 24, 26, 38, 40, 43, 47, 50, 54, 58, 62];

/// OFDM dimensions and subcarrier layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// DFT length.
    pub n: usize,
    /// Unique word length in samples.
    pub n_u: usize,
    /// Redundant symbol count (equals `n_u`).
    pub n_r: usize,
    /// Data symbol count.
    pub n_d: usize,
    pub zero_idx: Vec<usize>,
    pub red_idx: Vec<usize>,
    /// QAM symbol variance.
    pub sigma_d2: f64,
    /// Sample rate in Hz.
    pub fs: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            n: 64,
            n_u: 16,
            n_r: 16,
            n_d: 36,
            zero_idx: DEFAULT_ZERO_IDX.to_vec(),
            red_idx: DEFAULT_RED_IDX.to_vec(),
            sigma_d2: 1.0,
            fs: 20e6,
        }
    }
}

/// On-disk form of [`SystemConfig`]; `n_r` and `n_d` are derived when absent.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    n: Option<usize>,
    n_u: Option<usize>,
    n_r: Option<usize>,
    n_d: Option<usize>,
    zero_idx: Option<Vec<usize>>,
    red_idx: Option<Vec<usize>>,
    sigma_d2: Option<f64>,
    fs: Option<f64>,
}

impl SystemConfig {
    /// Builds a config from a layout, deriving `n_r` and `n_d`.
    pub fn new(n: usize, n_u: usize, zero_idx: Vec<usize>, red_idx: Vec<usize>) -> Result<Self> {
        let n_r = n_u;
        let n_d = n
            .checked_sub(zero_idx.len() + n_r)
            .ok_or_else(|| Error::InvalidConfig("more zero and redundant subcarriers than N".into()))?;
        let cfg = SystemConfig {
            n,
            n_u,
            n_r,
            n_d,
            zero_idx,
            red_idx,
            ..SystemConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_red_idx(&self, red_idx: Vec<usize>) -> Result<Self> {
        let cfg = SystemConfig {
            red_idx,
            ..self.clone()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Number of occupied subcarriers, `N_d + N_r`.
    pub fn n_a(&self) -> usize {
        self.n_d + self.n_r
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n == 0 || self.n_u == 0 || self.n_u >= self.n {
            return bad(format!("need 0 < n_u < n, got n={} n_u={}", self.n, self.n_u));
        }
        if self.n_r != self.n_u {
            return bad(format!("n_r ({}) must equal n_u ({})", self.n_r, self.n_u));
        }
        if self.n_d == 0 || self.n_d + self.n_r + self.zero_idx.len() != self.n {
            return bad(format!(
                "n_d + n_r + |zero_idx| must equal n: {} + {} + {} != {}",
                self.n_d,
                self.n_r,
                self.zero_idx.len(),
                self.n
            ));
        }
        if self.red_idx.len() != self.n_r {
            return bad(format!("|red_idx| = {} but n_r = {}", self.red_idx.len(), self.n_r));
        }
        let zero: BTreeSet<usize> = self.zero_idx.iter().copied().collect();
        let red: BTreeSet<usize> = self.red_idx.iter().copied().collect();
        if zero.len() != self.zero_idx.len() || red.len() != self.red_idx.len() {
            return bad("duplicate subcarrier indices".into());
        }
        if let Some(&i) = zero.iter().chain(red.iter()).find(|&&i| i >= self.n) {
            return bad(format!("subcarrier index {i} out of range 0..{}", self.n));
        }
        if let Some(i) = zero.intersection(&red).next() {
            return bad(format!("subcarrier {i} is both zero and redundant"));
        }
        if !(self.sigma_d2 > 0.0) || !(self.fs > 0.0) {
            return bad("sigma_d2 and fs must be positive".into());
        }
        Ok(())
    }

    /// Parses the TOML key/value config format. Missing keys take the
    /// 64-point WLAN defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: ConfigFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let def = SystemConfig::default();
        let n = raw.n.unwrap_or(def.n);
        let n_u = raw.n_u.unwrap_or(def.n_u);
        let zero_idx = raw.zero_idx.unwrap_or(def.zero_idx);
        let red_idx = raw.red_idx.unwrap_or(def.red_idx);
        let mut cfg = SystemConfig::new(n, n_u, zero_idx, red_idx)?;
        if let Some(n_r) = raw.n_r {
            if n_r != cfg.n_r {
                return Err(Error::InvalidConfig(format!("n_r = {n_r} inconsistent with n_u = {n_u}")));
            }
        }
        if let Some(n_d) = raw.n_d {
            if n_d != cfg.n_d {
                return Err(Error::InvalidConfig(format!("n_d = {n_d}, layout implies {}", cfg.n_d)));
            }
        }
        cfg.sigma_d2 = raw.sigma_d2.unwrap_or(def.sigma_d2);
        cfg.fs = raw.fs.unwrap_or(def.fs);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Cached forward/inverse FFT plans of one length.
#[derive(Clone)]
pub struct Dft {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Dft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Dft").field("n", &self.n).finish()
    }
}

impl Dft {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Dft {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn forward(&self, x: &[C64]) -> Result<Vec<C64>> {
        self.check(x.len())?;
        let mut buf = x.to_vec();
        self.fwd.process(&mut buf);
        Ok(buf)
    }

    pub fn inverse(&self, x: &[C64]) -> Result<Vec<C64>> {
        self.check(x.len())?;
        let mut buf = x.to_vec();
        self.inv.process(&mut buf);
        let scale = 1.0 / self.n as f64;
        buf.iter_mut().for_each(|z| *z *= scale);
        Ok(buf)
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: len,
            });
        }
        Ok(())
    }
}

/// Frequency-domain subcarrier symbols (length `N`).
#[derive(Debug, Clone, PartialEq)]
pub struct FreqSymbol(pub Vec<C64>);

/// Time-domain samples of one DFT interval (length `N`).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSymbol(pub Vec<C64>);

impl TimeSymbol {
    pub fn energy(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }
}

pub fn dft(x: &TimeSymbol) -> FreqSymbol {
    FreqSymbol(Dft::new(x.0.len()).forward(&x.0).expect("length matches plan"))
}

pub fn idft(x: &FreqSymbol) -> TimeSymbol {
    TimeSymbol(Dft::new(x.0.len()).inverse(&x.0).expect("length matches plan"))
}

/// Precomputed index maps and tail rows for one [`SystemConfig`].
#[derive(Debug, Clone)]
pub struct Layout {
    config: SystemConfig,
    occupied: Vec<usize>,
    slot_to_pos: Vec<usize>,
    pos_to_slot: Vec<usize>,
    tail: CMat,
    dft: Dft,
}

impl Layout {
    pub fn new(config: &SystemConfig) -> Result<Self> {
        config.validate()?;
        let zero: BTreeSet<usize> = config.zero_idx.iter().copied().collect();
        let red: BTreeSet<usize> = config.red_idx.iter().copied().collect();
        let occupied: Vec<usize> = (0..config.n).filter(|k| !zero.contains(k)).collect();
        let pos_of = |k: usize| occupied.binary_search(&k).expect("occupied subcarrier");
        let data_pos = occupied.iter().filter(|k| !red.contains(k)).map(|&k| pos_of(k));
        let red_pos = red.iter().map(|&k| pos_of(k));
        let slot_to_pos: Vec<usize> = data_pos.chain(red_pos).collect();
        let mut pos_to_slot = vec![0; slot_to_pos.len()];
        for (slot, &pos) in slot_to_pos.iter().enumerate() {
            pos_to_slot[pos] = slot;
        }
        let (n, n_u) = (config.n, config.n_u);
        let tail = CMat::from_fn(n_u, occupied.len(), |r, o| {
            let t = n - n_u + r;
            let phase = 2.0 * std::f64::consts::PI * ((t * occupied[o]) % n) as f64 / n as f64;
            C64::from_polar(1.0 / n as f64, phase)
        });
        Ok(Layout {
            config: config.clone(),
            occupied,
            slot_to_pos,
            pos_to_slot,
            tail,
            dft: Dft::new(n),
        })
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn n(&self) -> usize {
        self.config.n
    }

    pub fn n_u(&self) -> usize {
        self.config.n_u
    }

    pub fn n_d(&self) -> usize {
        self.config.n_d
    }

    pub fn n_r(&self) -> usize {
        self.config.n_r
    }

    pub fn n_a(&self) -> usize {
        self.config.n_a()
    }

    /// Subcarrier index of each occupied position, ascending.
    pub fn occupied(&self) -> &[usize] {
        &self.occupied
    }

    /// The permutation `P` as an index map: codeword slot -> occupied position.
    pub fn slot_to_pos(&self) -> &[usize] {
        &self.slot_to_pos
    }

    pub fn pos_to_slot(&self) -> &[usize] {
        &self.pos_to_slot
    }

    /// Lowermost `N_u` rows of `F^{-1} B`.
    pub fn tail_rows(&self) -> &CMat {
        &self.tail
    }

    pub fn dft(&self) -> &Dft {
        &self.dft
    }

    /// Inserts zero subcarriers: `B c`.
    pub fn insert_zeros(&self, c: &[C64]) -> Result<FreqSymbol> {
        if c.len() != self.n_a() {
            return Err(Error::DimensionMismatch {
                expected: self.n_a(),
                found: c.len(),
            });
        }
        let mut x = vec![C64::new(0.0, 0.0); self.n()];
        for (&k, &v) in self.occupied.iter().zip(c) {
            x[k] = v;
        }
        Ok(FreqSymbol(x))
    }

    /// Drops zero subcarriers: `B^T x`.
    pub fn downsize(&self, x: &[C64]) -> Result<Vec<C64>> {
        if x.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                found: x.len(),
            });
        }
        Ok(self.occupied.iter().map(|&k| x[k]).collect())
    }

    /// Downsized frequency-domain UW, `B^T F [0; uw]`.
    pub fn uw_spectrum(&self, uw: &[C64]) -> Result<Vec<C64>> {
        if uw.len() != self.n_u() {
            return Err(Error::DimensionMismatch {
                expected: self.n_u(),
                found: uw.len(),
            });
        }
        let mut x = vec![C64::new(0.0, 0.0); self.n()];
        x[self.n() - self.n_u()..].copy_from_slice(uw);
        self.downsize(&self.dft.forward(&x)?)
    }
}

/// Zero-subcarrier insertion matrix `B` (`N x (N_d+N_r)`).
pub fn selection_matrix(config: &SystemConfig) -> Result<CMat> {
    let layout = Layout::new(config)?;
    let mut b = CMat::zeros(config.n, config.n_a());
    for (o, &k) in layout.occupied().iter().enumerate() {
        b[(k, o)] = C64::new(1.0, 0.0);
    }
    Ok(b)
}

/// Relative tolerance on the zero-UW tail before the UW is added.
pub const TAIL_TOLERANCE: f64 = 1e-8;

/// Builds the transmit symbol `F^{-1}(B G d + x_u)`: the UW occupies the last
/// `N_u` samples of the DFT interval.
pub fn assemble_tx(layout: &Layout, g: &GeneratorMatrix, d: &[C64], uw: &[C64]) -> Result<TimeSymbol> {
    let (n, n_u) = (layout.n(), layout.n_u());
    if d.len() != g.n_d() {
        return Err(Error::DimensionMismatch {
            expected: g.n_d(),
            found: d.len(),
        });
    }
    if uw.len() != n_u {
        return Err(Error::DimensionMismatch {
            expected: n_u,
            found: uw.len(),
        });
    }
    if g.n_a() != layout.n_a() {
        return Err(Error::DimensionMismatch {
            expected: layout.n_a(),
            found: g.n_a(),
        });
    }
    let c = g.encode(d);
    let mut x = layout.dft().inverse(&layout.insert_zeros(&c)?.0)?;
    let head_rms = rms(x[..n - n_u].iter().copied());
    let tail_max = x[n - n_u..].iter().map(|z| z.norm()).fold(0.0, f64::max);
    if tail_max > TAIL_TOLERANCE * head_rms.max(f64::MIN_POSITIVE) && tail_max > 1e-300 {
        return Err(Error::ConstraintViolation {
            residual: tail_max / head_rms,
        });
    }
    for (dst, &u) in x[n - n_u..].iter_mut().zip(uw) {
        *dst += u;
    }
    Ok(TimeSymbol(x))
}

/// Mean transmit symbol energy `(sigma_d^2/N) tr(G^H G) + uw^H uw`.
pub fn mean_symbol_energy(g: &GeneratorMatrix, config: &SystemConfig, uw: &[C64]) -> f64 {
    let frob: f64 = g.matrix().iter().map(|z| z.norm_sqr()).sum();
    config.sigma_d2 * frob / config.n as f64 + uw.iter().map(|z| z.norm_sqr()).sum::<f64>()
}

/// Constant-envelope linear chirp of `n_u` samples sweeping the occupied
/// band `[-band/2, band/2]` (band as a fraction of the sample rate), scaled to
/// total energy `energy`.
pub fn chirp_uw(n_u: usize, band: f64, energy: f64) -> Vec<C64> {
    let amp = (energy / n_u as f64).sqrt();
    let half = band / 2.0;
    (0..n_u)
        .map(|i| {
            let t = i as f64;
            let phase = 2.0 * std::f64::consts::PI * (-half * t + half * t * t / n_u as f64);
            C64::from_polar(amp, phase)
        })
        .collect()
}
