use serde::{Deserialize, Serialize};

use crate::channel::cyclic_convolve;
use crate::codegen::GeneratorMatrix;
use crate::error::{Error, Result};
use crate::linalg::{CMat, C64};
use crate::ofdm::{chirp_uw, Layout, SystemConfig, TimeSymbol, DEFAULT_ZERO_IDX};
use crate::receiver::{blue_equalizer, ci_equalizer, lmmse_equalizer, subtract_uw, Equalizer};

/// Fraction of the total mean symbol energy spent on the UW.
pub const UW_ENERGY_RATIO: f64 = 4.0 / 52.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detector {
    Blue,
    Lmmse,
    /// Channel inversion on the data subcarriers.
    Ci,
}

impl std::fmt::Display for Detector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Detector::Blue => "blue",
            Detector::Lmmse => "lmmse",
            Detector::Ci => "ci",
        })
    }
}

impl std::str::FromStr for Detector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "blue" => Ok(Detector::Blue),
            "lmmse" => Ok(Detector::Lmmse),
            "ci" => Ok(Detector::Ci),
            other => Err(Error::Parse(format!("unknown detector {other:?}"))),
        }
    }
}

/// The CP-OFDM reference system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpOfdmConfig {
    pub n: usize,
    pub cp_len: usize,
    pub zero_idx: Vec<usize>,
    pub pilot_idx: Vec<usize>,
    pub pilot_values: Vec<f64>,
    pub sigma_d2: f64,
}

impl Default for CpOfdmConfig {
    fn default() -> Self {
        CpOfdmConfig {
            n: 64,
            cp_len: 16,
            zero_idx: DEFAULT_ZERO_IDX.to_vec(),
            pilot_idx: vec![7, 21, 43, 57],
            pilot_values: vec![1.0, 1.0, 1.0, -1.0],
            sigma_d2: 1.0,
        }
    }
}

impl CpOfdmConfig {
    /// Occupied layout; the pilots take the place of the redundant set.
    pub fn layout(&self) -> Result<Layout> {
        if self.pilot_idx.len() != self.pilot_values.len() {
            return Err(Error::InvalidConfig("one value per pilot required".into()));
        }
        let mut cfg = SystemConfig::new(self.n, self.pilot_idx.len(), self.zero_idx.clone(), self.pilot_idx.clone())?;
        cfg.sigma_d2 = self.sigma_d2;
        Layout::new(&cfg)
    }

    pub fn data_subcarriers(&self) -> usize {
        self.n - self.zero_idx.len() - self.pilot_idx.len()
    }
}

#[derive(Debug, Clone)]
enum Kind {
    Uw {
        g: CMat,
        uw: Vec<C64>,
        uw_freq: Vec<C64>,
    },
    Cp {
        cp_len: usize,
        pilots: Vec<f64>,
    },
}

/// One transmission scheme: symbol assembly, energy bookkeeping and
/// detection given a channel response.
#[derive(Debug, Clone)]
pub struct Link {
    layout: Layout,
    est_layout: Layout,
    kind: Kind,
    block_energy: f64,
}

impl Link {
    /// UW-OFDM with generator `g` (used as given) and a chirp UW carrying
    /// `uw_ratio` of the total energy; `uw_ratio = 0` gives the zero UW.
    pub fn uw(g: &GeneratorMatrix, uw_ratio: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&uw_ratio) {
            return Err(Error::InvalidConfig(format!("UW energy ratio must lie in [0, 1), got {uw_ratio}")));
        }
        let layout = Layout::new(g.config())?;
        let cfg = layout.config();
        let frob: f64 = g.matrix().iter().map(|z| z.norm_sqr()).sum();
        let data_energy = cfg.sigma_d2 * frob / cfg.n as f64;
        let uw_energy = data_energy * uw_ratio / (1.0 - uw_ratio);
        let band = layout.n_a() as f64 / cfg.n as f64;
        let uw = if uw_energy > 0.0 {
            chirp_uw(cfg.n_u, band, uw_energy)
        } else {
            vec![C64::new(0.0, 0.0); cfg.n_u]
        };
        let uw_freq = layout.uw_spectrum(&uw)?;
        Ok(Link {
            block_energy: data_energy + uw_energy,
            est_layout: layout.clone(),
            kind: Kind::Uw {
                g: g.matrix().clone(),
                uw,
                uw_freq,
            },
            layout,
        })
    }

    pub fn cp_ofdm(cfg: &CpOfdmConfig) -> Result<Self> {
        let layout = cfg.layout()?;
        // the estimator resolves impulse responses up to the CP length
        let occ = layout.occupied();
        if cfg.cp_len > occ.len() {
            return Err(Error::InvalidConfig(format!("CP of {} exceeds the occupied subcarriers", cfg.cp_len)));
        }
        let est_cfg = SystemConfig::new(cfg.n, cfg.cp_len, cfg.zero_idx.clone(), occ[..cfg.cp_len].to_vec())?;
        let est_layout = Layout::new(&est_cfg)?;
        let occupied = layout.n_a() as f64;
        // pilots carry sigma_d^2 like the data; the CP repeats cp_len samples
        let core = cfg.sigma_d2 * occupied / cfg.n as f64;
        Ok(Link {
            block_energy: core * (cfg.n + cfg.cp_len) as f64 / cfg.n as f64,
            est_layout,
            kind: Kind::Cp {
                cp_len: cfg.cp_len,
                pilots: cfg.pilot_values.clone(),
            },
            layout,
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Layout the preamble-based channel estimator works on; it shares the
    /// occupied set with `layout()`.
    pub fn estimation_layout(&self) -> &Layout {
        &self.est_layout
    }

    /// Guard samples sent outside the DFT interval.
    pub fn cp_len(&self) -> usize {
        match &self.kind {
            Kind::Cp { cp_len, .. } => *cp_len,
            Kind::Uw { .. } => 0,
        }
    }

    pub fn is_uw(&self) -> bool {
        matches!(self.kind, Kind::Uw { .. })
    }

    /// QAM symbols carried per block.
    pub fn payload(&self) -> usize {
        self.layout.n_d()
    }

    /// Mean transmit energy per block, guard included.
    pub fn block_energy(&self) -> f64 {
        self.block_energy
    }

    /// Energy per payload QAM symbol.
    pub fn es(&self) -> f64 {
        self.block_energy / self.payload() as f64
    }

    /// Per-sample noise variance for the given `E_s/N_0` in dB.
    pub fn noise_variance(&self, es_n0_db: f64) -> f64 {
        self.es() / 10f64.powf(es_n0_db / 10.0)
    }

    /// Frequency-domain codeword on the occupied subcarriers.
    fn codeword(&self, d: &[C64]) -> Vec<C64> {
        match &self.kind {
            Kind::Uw { g, .. } => (0..g.nrows())
                .map(|r| g.row(r).iter().zip(d).map(|(a, b)| a * b).sum())
                .collect(),
            Kind::Cp { pilots, .. } => {
                let mut c = vec![C64::new(0.0, 0.0); self.layout.n_a()];
                let perm = self.layout.slot_to_pos();
                let n_d = self.layout.n_d();
                let amp = self.layout.config().sigma_d2.sqrt();
                for (k, &v) in d.iter().enumerate() {
                    c[perm[k]] = v;
                }
                for (m, &p) in pilots.iter().enumerate() {
                    c[perm[n_d + m]] = C64::new(p * amp, 0.0);
                }
                c
            }
        }
    }

    /// The `N` samples inside the DFT interval (UW included, CP excluded).
    pub fn core_symbol(&self, d: &[C64]) -> Result<TimeSymbol> {
        if d.len() != self.payload() {
            return Err(Error::DimensionMismatch {
                expected: self.payload(),
                found: d.len(),
            });
        }
        let c = self.codeword(d);
        let mut x = self.layout.dft().inverse(&self.layout.insert_zeros(&c)?.0)?;
        if let Kind::Uw { uw, .. } = &self.kind {
            let n = x.len();
            for (dst, &u) in x[n - uw.len()..].iter_mut().zip(uw) {
                *dst += u;
            }
        }
        Ok(TimeSymbol(x))
    }

    /// The transmitted samples: CP plus core for CP-OFDM, the core alone
    /// for UW-OFDM.
    pub fn transmit_symbol(&self, d: &[C64]) -> Result<Vec<C64>> {
        let core = self.core_symbol(d)?.0;
        Ok(match &self.kind {
            Kind::Cp { cp_len, .. } => {
                let n = core.len();
                core[n - cp_len..].iter().chain(&core).copied().collect()
            }
            Kind::Uw { .. } => core,
        })
    }

    /// Received core symbol through a cyclic channel, without noise.
    pub fn through_channel(&self, x: &TimeSymbol, h: &[C64]) -> TimeSymbol {
        TimeSymbol(cyclic_convolve(&x.0, h))
    }

    /// Equalizer for the downsized channel `h`; `noise_var` is `N sigma_n^2`.
    pub fn equalizer(&self, h: &[C64], noise_var: f64, detector: Detector) -> Result<Equalizer> {
        match &self.kind {
            Kind::Uw { g, .. } => match detector {
                Detector::Blue => blue_equalizer(g, h, noise_var),
                Detector::Lmmse => lmmse_equalizer(g, h, noise_var, self.layout.config().sigma_d2),
                Detector::Ci => ci_equalizer(h, &self.layout, noise_var),
            },
            // one-tap inversion on the data subcarriers for every detector
            Kind::Cp { .. } => ci_equalizer(h, &self.layout, noise_var),
        }
    }

    /// Data estimates from a received core symbol; `h` is the channel used
    /// for UW removal.
    pub fn detect(&self, y: &TimeSymbol, h: &[C64], eq: &Equalizer) -> Result<Vec<C64>> {
        let yf = self.layout.downsize(&self.layout.dft().forward(&y.0)?)?;
        let yc = match &self.kind {
            Kind::Uw { uw_freq, .. } => subtract_uw(&yf, h, uw_freq)?,
            Kind::Cp { .. } => yf,
        };
        Ok(eq.apply(&yc))
    }
}

/// Noiseless-capable one-symbol CP-OFDM loopback: CP insertion, cyclic
/// channel, noise on every sample, CP removal and one-tap equalization.
pub fn cp_ofdm_reference<R: rand::Rng + ?Sized>(
    cfg: &CpOfdmConfig,
    taps: &[C64],
    d: &[C64],
    sigma_n2: f64,
    rng: &mut R,
) -> Result<Vec<C64>> {
    if taps.len() > cfg.cp_len + 1 {
        return Err(Error::ChannelTooLong {
            taps: taps.len(),
            max: cfg.cp_len + 1,
        });
    }
    let link = Link::cp_ofdm(cfg)?;
    let tx = link.transmit_symbol(d)?;
    // linear convolution of the CP-extended symbol; the CP absorbs the tail
    let mut rx = vec![C64::new(0.0, 0.0); tx.len()];
    for (i, out) in rx.iter_mut().enumerate() {
        for (k, &hk) in taps.iter().enumerate() {
            if i >= k {
                *out += hk * tx[i - k];
            }
        }
    }
    crate::channel::add_awgn(&mut rx, &crate::channel::NoiseSpec::new(sigma_n2)?, rng);
    let core = TimeSymbol(rx[cfg.cp_len..].to_vec());
    let h = crate::channel::to_freq(taps, link.layout())?;
    let eq = link.equalizer(&h, cfg.n as f64 * sigma_n2, Detector::Ci)?;
    link.detect(&core, &h, &eq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{gen_multipath, to_freq, MultipathSpec};
    use crate::codegen::systematic_generator;
    use crate::rng::rng_for;

    fn qpsk(n: usize, seed: u64) -> Vec<C64> {
        use rand::Rng;
        let mut rng = rng_for(&[seed]);
        let a = 0.5f64.sqrt();
        (0..n)
            .map(|_| C64::new(if rng.random() { a } else { -a }, if rng.random() { a } else { -a }))
            .collect()
    }

    #[test]
    fn energy_bookkeeping() {
        let cp = Link::cp_ofdm(&CpOfdmConfig::default()).unwrap();
        assert_eq!(cp.payload(), 48);
        assert!((cp.block_energy() - 52.0 / 64.0 * 80.0 / 64.0).abs() < 1e-15);
        let g = systematic_generator(&SystemConfig::default()).unwrap();
        let frob: f64 = g.matrix().iter().map(|z| z.norm_sqr()).sum();
        let uw = Link::uw(&g, UW_ENERGY_RATIO).unwrap();
        assert!((uw.block_energy() - frob / 64.0 * 52.0 / 48.0).abs() < 1e-12);
        // measured mean energy of the core symbol
        let trials = 4000;
        let e: f64 = (0..trials)
            .map(|s| uw.core_symbol(&qpsk(36, s)).unwrap().energy())
            .sum::<f64>()
            / trials as f64;
        assert!((e / uw.block_energy() - 1.0).abs() < 0.02, "{e}");
        let e: f64 = (0..trials)
            .map(|s| cp.transmit_symbol(&qpsk(48, s)).unwrap().iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum::<f64>()
            / trials as f64;
        assert!((e / cp.block_energy() - 1.0).abs() < 0.02, "{e}");
    }

    #[test]
    fn uw_occupies_the_tail() {
        let g = systematic_generator(&SystemConfig::default()).unwrap();
        let link = Link::uw(&g, UW_ENERGY_RATIO).unwrap();
        let x = link.core_symbol(&qpsk(36, 1)).unwrap();
        let Kind::Uw { uw, .. } = &link.kind else { unreachable!() };
        for (a, b) in x.0[48..].iter().zip(uw) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn noiseless_uw_loopback() {
        let g = systematic_generator(&SystemConfig::default()).unwrap();
        let link = Link::uw(&g, UW_ENERGY_RATIO).unwrap();
        let ch = gen_multipath(4, &MultipathSpec::indoor(20e6, 16), link.layout()).unwrap();
        let d = qpsk(36, 2);
        let y = link.through_channel(&link.core_symbol(&d).unwrap(), ch.taps());
        for det in [Detector::Blue, Detector::Lmmse, Detector::Ci] {
            let eq = link.equalizer(ch.freq(), 0.0, det).unwrap();
            let est = link.detect(&y, ch.freq(), &eq).unwrap();
            for (a, b) in est.iter().zip(&d) {
                assert!((a - b).norm() < 1e-9, "{det}");
            }
        }
    }

    #[test]
    fn cp_reference_recovers_constellation() {
        let cfg = CpOfdmConfig::default();
        let d = qpsk(48, 3);
        let mut rng = rng_for(&[0]);
        let unit = [C64::new(1.0, 0.0)];
        let delay = [C64::new(0.0, 0.0), C64::new(1.0, 0.0)];
        let layout = cfg.layout().unwrap();
        let link = Link::cp_ofdm(&cfg).unwrap();
        let multipath = gen_multipath(9, &MultipathSpec::indoor(20e6, 16), link.estimation_layout()).unwrap();
        for taps in [&unit[..], &delay[..], multipath.taps()] {
            let est = cp_ofdm_reference(&cfg, taps, &d, 0.0, &mut rng).unwrap();
            for (a, b) in est.iter().zip(&d) {
                assert!((a - b).norm() < 1e-10);
            }
        }
        let h = to_freq(&delay, &layout).unwrap();
        assert!((h[0] - C64::from_polar(1.0, -2.0 * std::f64::consts::PI / 64.0)).norm() < 1e-12);
    }

    #[test]
    fn pilots_are_placed() {
        let cfg = CpOfdmConfig::default();
        let link = Link::cp_ofdm(&cfg).unwrap();
        let x = link.core_symbol(&vec![C64::new(0.0, 0.0); 48]).unwrap();
        let f = link.layout().dft().forward(&x.0).unwrap();
        for (&k, &v) in cfg.pilot_idx.iter().zip(&cfg.pilot_values) {
            assert!((f[k] - C64::new(v, 0.0)).norm() < 1e-12);
        }
        assert!(f[1].norm() < 1e-12);
    }
}
