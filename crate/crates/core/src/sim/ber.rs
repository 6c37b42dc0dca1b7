use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{add_awgn, cyclic_convolve, to_freq, ChannelCorpus, NoiseSpec};
use crate::codegen::{
    load_generator, scfde_config, scfde_generator, systematic_generator, GeneratorKind, GeneratorMatrix,
};
use crate::error::{Error, Result};
use crate::fec::{encode, map_qam, soft_demap, viterbi_decode, Interleaver, Modulation, OuterCode};
use crate::linalg::C64;
use crate::ofdm::{SystemConfig, TimeSymbol};
use crate::receiver::{equalizer_or_warn, ChannelEstimator, Equalizer, Preamble};
use crate::rng::{fnv1a, rng_for};

use super::link::{CpOfdmConfig, Detector, Link, UW_ENERGY_RATIO};

/// Frames simulated per parallel batch. Results do not depend on it.
const BATCH: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SystemId {
    #[serde(rename = "cp-ofdm")]
    CpOfdm,
    /// Systematic coded UW-OFDM.
    #[serde(rename = "uw-g")]
    UwG,
    /// Non-systematic, optimized from the identity.
    #[serde(rename = "uw-g1")]
    UwGPrime,
    /// Non-systematic, optimized from a random start.
    #[serde(rename = "uw-g2")]
    UwGDoublePrime,
    #[serde(rename = "uw-scfde")]
    UwScFde,
}

impl SystemId {
    pub const ALL: [SystemId; 5] = [
        SystemId::CpOfdm,
        SystemId::UwG,
        SystemId::UwGPrime,
        SystemId::UwGDoublePrime,
        SystemId::UwScFde,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SystemId::CpOfdm => "cp-ofdm",
            SystemId::UwG => "uw-g",
            SystemId::UwGPrime => "uw-g1",
            SystemId::UwGDoublePrime => "uw-g2",
            SystemId::UwScFde => "uw-scfde",
        }
    }
}

impl fmt::Display for SystemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SystemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SystemId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown system {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CsiMode {
    Perfect,
    Estimated,
}

impl fmt::Display for CsiMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CsiMode::Perfect => "perfect",
            CsiMode::Estimated => "estimated",
        })
    }
}

#[derive(Debug, Clone)]
pub enum ChannelSource {
    Awgn,
    Corpus(Arc<ChannelCorpus>),
}

impl ChannelSource {
    pub fn id(&self) -> u64 {
        match self {
            ChannelSource::Awgn => 0,
            ChannelSource::Corpus(c) => c.id(),
        }
    }

    fn count(&self) -> usize {
        match self {
            ChannelSource::Awgn => 1,
            ChannelSource::Corpus(c) => c.len(),
        }
    }

    fn taps(&self, r: usize) -> &[C64] {
        const UNIT: [C64; 1] = [C64::new(1.0, 0.0)];
        match self {
            ChannelSource::Awgn => &UNIT,
            ChannelSource::Corpus(c) => &c.taps[r],
        }
    }
}

/// A point stops once `min_errors` errors were seen over at least
/// `min_frames` frames, or once `max_bits` bits were sent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopRule {
    pub min_errors: u64,
    pub max_bits: u64,
    pub min_frames: u64,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            min_errors: 100,
            max_bits: 1_000_000,
            min_frames: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StopReason {
    #[serde(rename = "min-errors")]
    MinErrors,
    #[serde(rename = "max-bits")]
    MaxBits,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::MinErrors => "min-errors",
            StopReason::MaxBits => "max-bits",
        })
    }
}

/// One point of a BER curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerRecord {
    pub label: String,
    pub system: SystemId,
    pub estimator: Detector,
    pub outer_code: OuterCode,
    pub modulation: Modulation,
    pub es_n0_db: f64,
    pub bits_sent: u64,
    pub bit_errors: u64,
    pub frames: u64,
    pub stop: StopReason,
    pub csi: CsiMode,
    pub corpus_id: String,
    pub seed: u64,
    pub fingerprint: String,
}

impl BerRecord {
    pub fn ber(&self) -> f64 {
        if self.bits_sent == 0 {
            0.0
        } else {
            self.bit_errors as f64 / self.bits_sent as f64
        }
    }
}

/// A fully resolved BER experiment.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub label: String,
    pub system: SystemId,
    pub detector: Detector,
    pub outer_code: OuterCode,
    pub modulation: Modulation,
    pub es_n0_db: Vec<f64>,
    pub channels: ChannelSource,
    pub csi: CsiMode,
    pub stop: StopRule,
    pub symbols_per_frame: usize,
    pub seed: u64,
    link: Link,
    generator_hash: u64,
}

fn check_kind(system: SystemId, g: &GeneratorMatrix) -> Result<()> {
    let ok = match system {
        SystemId::CpOfdm => false,
        SystemId::UwG => g.kind() == GeneratorKind::Systematic,
        SystemId::UwGPrime | SystemId::UwGDoublePrime => {
            matches!(g.kind(), GeneratorKind::OptBlue | GeneratorKind::OptLmmse)
        }
        SystemId::UwScFde => g.kind() == GeneratorKind::ScFde,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidScenario(format!("{} generator does not fit system {system}", g.kind())))
    }
}

impl Scenario {
    /// Builds a scenario with defaults: uncoded QPSK, perfect CSI, 10
    /// symbols per frame and an empty `E_s/N_0` grid. UW-G and SC/FDE fall
    /// back to their closed-form generators when `generator` is `None`; the
    /// optimized systems require one. CP-OFDM always equalizes per
    /// subcarrier and is recorded with the channel-inversion detector.
    pub fn new(
        label: impl Into<String>,
        system: SystemId,
        generator: Option<&GeneratorMatrix>,
        detector: Detector,
        channels: ChannelSource,
    ) -> Result<Self> {
        Self::with_uw_ratio(label, system, generator, detector, channels, UW_ENERGY_RATIO)
    }

    pub fn with_uw_ratio(
        label: impl Into<String>,
        system: SystemId,
        generator: Option<&GeneratorMatrix>,
        detector: Detector,
        channels: ChannelSource,
        uw_ratio: f64,
    ) -> Result<Self> {
        let (link, detector, generator_hash) = match system {
            SystemId::CpOfdm => {
                if generator.is_some() {
                    return Err(Error::InvalidScenario("CP-OFDM takes no generator matrix".into()));
                }
                (Link::cp_ofdm(&CpOfdmConfig::default())?, Detector::Ci, 0)
            }
            _ => {
                let owned;
                let g = match (generator, system) {
                    (Some(g), _) => g,
                    (None, SystemId::UwG) => {
                        owned = systematic_generator(&SystemConfig::default())?;
                        &owned
                    }
                    (None, SystemId::UwScFde) => {
                        owned = scfde_generator(&scfde_config(64, 16)?)?;
                        &owned
                    }
                    (None, _) => {
                        return Err(Error::InvalidScenario(format!("system {system} needs a generator matrix")))
                    }
                };
                check_kind(system, g)?;
                if detector == Detector::Ci && g.kind() != GeneratorKind::Systematic {
                    return Err(Error::InvalidScenario(
                        "channel inversion needs a systematic generator".into(),
                    ));
                }
                let hash = fnv1a(g.matrix().iter().flat_map(|z| {
                    [z.re.to_bits().to_le_bytes(), z.im.to_bits().to_le_bytes()].concat()
                }));
                (Link::uw(g, uw_ratio)?, detector, hash)
            }
        };
        if let ChannelSource::Corpus(c) = &channels {
            if c.is_empty() {
                return Err(Error::InvalidScenario("channel corpus is empty".into()));
            }
            let max = link.estimation_layout().n_u();
            if let Some(h) = c.taps.iter().find(|h| h.len() > max) {
                return Err(Error::ChannelTooLong { taps: h.len(), max });
            }
        }
        Ok(Scenario {
            label: label.into(),
            system,
            detector,
            outer_code: OuterCode::Uncoded,
            modulation: Modulation::Qpsk,
            es_n0_db: Vec::new(),
            channels,
            csi: CsiMode::Perfect,
            stop: StopRule::default(),
            symbols_per_frame: 10,
            seed: 0,
            link,
            generator_hash,
        })
    }

    pub fn outer_code(mut self, code: OuterCode) -> Self {
        self.outer_code = code;
        self
    }

    pub fn modulation(mut self, m: Modulation) -> Self {
        self.modulation = m;
        self
    }

    pub fn es_n0_db(mut self, grid: Vec<f64>) -> Self {
        self.es_n0_db = grid;
        self
    }

    pub fn csi(mut self, csi: CsiMode) -> Self {
        self.csi = csi;
        self
    }

    pub fn stop(mut self, stop: StopRule) -> Self {
        self.stop = stop;
        self
    }

    pub fn symbols_per_frame(mut self, n: usize) -> Self {
        self.symbols_per_frame = n;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn link(&self) -> &Link {
        &self.link
    }

    /// Hash of every parameter that affects the bit counts.
    pub fn fingerprint(&self) -> u64 {
        let desc = format!(
            "{}|{}|{}|{}|{}|{:?}|{}|{}|{:?}|{}|{}|{:x}|{}",
            self.label,
            self.system,
            self.detector,
            self.outer_code,
            self.modulation,
            self.es_n0_db.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            self.channels.id(),
            self.csi,
            self.stop,
            self.symbols_per_frame,
            self.seed,
            self.generator_hash,
            self.link.block_energy().to_bits(),
        );
        fnv1a(desc.into_bytes())
    }

    fn validate(&self) -> Result<FrameShape> {
        if self.symbols_per_frame == 0 {
            return Err(Error::InvalidScenario("symbols_per_frame must be positive".into()));
        }
        if self.stop.max_bits == 0 {
            return Err(Error::InvalidScenario("max_bits must be positive".into()));
        }
        if let Some(x) = self.es_n0_db.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidScenario(format!("non-finite Es/N0 {x}")));
        }
        let n_cbps = self.link.payload() * self.modulation.bits_per_symbol();
        let n_coded = n_cbps * self.symbols_per_frame;
        let n_info = self.outer_code.info_len(n_coded).map_err(|_| {
            Error::InvalidScenario(format!(
                "{} symbols of {n_cbps} coded bits do not fit rate {}",
                self.symbols_per_frame, self.outer_code
            ))
        })?;
        if n_info == 0 {
            return Err(Error::InvalidScenario("frame carries no information bits".into()));
        }
        Ok(FrameShape {
            n_cbps,
            n_info,
            interleaver: Interleaver::new(n_cbps),
        })
    }
}

struct FrameShape {
    n_cbps: usize,
    n_info: usize,
    interleaver: Interleaver,
}

struct PointContext<'a> {
    sc: &'a Scenario,
    shape: &'a FrameShape,
    sigma_n2: f64,
    estimator: Option<(ChannelEstimator, Preamble, TimeSymbol)>,
    /// Shared equalizer when every frame sees the same known channel.
    fixed: Option<Option<Equalizer>>,
}

impl PointContext<'_> {
    fn equalizer(&self, taps: &[C64], rng: &mut impl Rng) -> Result<(Vec<C64>, Option<Equalizer>)> {
        let link = &self.sc.link;
        let noise_var = link.layout().n() as f64 * self.sigma_n2;
        let h = match &self.estimator {
            None => to_freq(taps, link.layout())?,
            Some((est, preamble, p)) => {
                let noise = NoiseSpec::new(self.sigma_n2)?;
                let mut rx = || {
                    let mut y = cyclic_convolve(&p.0, taps);
                    add_awgn(&mut y, &noise, rng);
                    TimeSymbol(y)
                };
                let (y1, y2) = (rx(), rx());
                est.estimate(&y1, &y2, preamble, link.estimation_layout())?.h_freq
            }
        };
        if let Some(eq) = &self.fixed {
            return Ok((h, eq.clone()));
        }
        let eq = equalizer_or_warn(link.equalizer(&h, noise_var, self.sc.detector), &self.sc.label);
        Ok((h, eq))
    }

    /// Returns `(information bits, bit errors)` of frame `f`.
    fn frame(&self, f: u64) -> Result<(u64, u64)> {
        let sc = self.sc;
        let link = &sc.link;
        let shape = self.shape;
        let r = (f % sc.channels.count() as u64) as usize;
        let taps = sc.channels.taps(r);
        let base = [sc.seed, sc.channels.id(), r as u64, f];
        let mut bit_rng = rng_for(&[base[0], base[1], base[2], base[3], 1]);
        let mut noise_rng = rng_for(&[base[0], base[1], base[2], base[3], 2]);
        let mut est_rng = rng_for(&[base[0], base[1], base[2], base[3], 3]);

        let info: Vec<u8> = (0..shape.n_info).map(|_| bit_rng.random::<bool>() as u8).collect();
        let coded = encode(&info, sc.outer_code);
        let (h, eq) = self.equalizer(taps, &mut est_rng)?;
        let noise = NoiseSpec::new(self.sigma_n2)?;
        let sigma_d2 = link.layout().config().sigma_d2;

        let mut llrs = Vec::with_capacity(coded.len());
        for block in coded.chunks(shape.n_cbps) {
            let bits = shape.interleaver.interleave(block);
            let d = map_qam(&bits, sc.modulation, sigma_d2)?;
            let x = link.core_symbol(&d)?;
            let mut y = cyclic_convolve(&x.0, taps);
            add_awgn(&mut y, &noise, &mut noise_rng);
            let soft = match &eq {
                Some(eq) => {
                    let d_hat = link.detect(&TimeSymbol(y), &h, eq)?;
                    soft_demap(&d_hat, &eq.cee_diag, sc.modulation, sigma_d2)?
                }
                // unusable channel estimate: every bit is erased
                None => vec![0.0; shape.n_cbps],
            };
            llrs.extend(shape.interleaver.deinterleave(&soft));
        }
        let decoded = viterbi_decode(&llrs, sc.outer_code)?;
        let errors = decoded.iter().zip(&info).filter(|(a, b)| a != b).count();
        Ok((shape.n_info as u64, errors as u64))
    }
}

/// Simulates one `E_s/N_0` point.
pub fn run_point(sc: &Scenario, es_n0_db: f64) -> Result<BerRecord> {
    let shape = sc.validate()?;
    let link = &sc.link;
    let sigma_n2 = link.noise_variance(es_n0_db);
    let estimator = match sc.csi {
        CsiMode::Perfect => None,
        CsiMode::Estimated => {
            let layout = link.estimation_layout();
            let amp = layout.config().sigma_d2.sqrt();
            let preamble = Preamble::seeded(layout, sc.seed, amp);
            let p = preamble.time_symbol(layout)?;
            Some((ChannelEstimator::new(layout)?, preamble, p))
        }
    };
    let mut ctx = PointContext {
        sc,
        shape: &shape,
        sigma_n2,
        estimator,
        fixed: None,
    };
    if sc.csi == CsiMode::Perfect && sc.channels.count() == 1 {
        let mut unused = rng_for(&[0]);
        ctx.fixed = Some(ctx.equalizer(sc.channels.taps(0), &mut unused)?.1);
    }

    let (mut bits, mut errors, mut frames) = (0u64, 0u64, 0u64);
    let stop = loop {
        let outcomes: Vec<Result<(u64, u64)>> = (frames..frames + BATCH as u64)
            .into_par_iter()
            .map(|f| ctx.frame(f))
            .collect();
        let mut reason = None;
        for o in outcomes {
            let (b, e) = o?;
            bits += b;
            errors += e;
            frames += 1;
            if errors >= sc.stop.min_errors && frames >= sc.stop.min_frames {
                reason = Some(StopReason::MinErrors);
            } else if bits >= sc.stop.max_bits {
                reason = Some(StopReason::MaxBits);
            }
            if reason.is_some() {
                break;
            }
        }
        if let Some(r) = reason {
            break r;
        }
    };
    log::debug!("{} at {es_n0_db} dB: {errors}/{bits} over {frames} frames", sc.label);
    Ok(BerRecord {
        label: sc.label.clone(),
        system: sc.system,
        estimator: sc.detector,
        outer_code: sc.outer_code,
        modulation: sc.modulation,
        es_n0_db,
        bits_sent: bits,
        bit_errors: errors,
        frames,
        stop,
        csi: sc.csi,
        corpus_id: format!("{:016x}", sc.channels.id()),
        seed: sc.seed,
        fingerprint: format!("{:016x}", sc.fingerprint()),
    })
}

/// Simulates every point of the scenario's grid in order.
pub fn run_ber(sc: &Scenario) -> Result<Vec<BerRecord>> {
    sc.validate()?;
    sc.es_n0_db.iter().map(|&x| run_point(sc, x)).collect()
}

const SCENARIO_VERSION: u32 = 1;

/// On-disk scenario description (TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub version: u32,
    pub label: String,
    pub system: SystemId,
    /// Generator matrix file; relative paths resolve against the scenario.
    pub generator: Option<PathBuf>,
    pub estimator: Detector,
    #[serde(default = "default_code")]
    pub outer_code: OuterCode,
    #[serde(default = "default_modulation")]
    pub modulation: Modulation,
    pub es_n0_db: Vec<f64>,
    /// `"awgn"` or a channel corpus file.
    pub channel: String,
    /// Use only the first `channels` realizations of the corpus.
    pub channels: Option<usize>,
    #[serde(default = "default_csi")]
    pub csi: CsiMode,
    #[serde(default = "default_min_errors")]
    pub min_errors: u64,
    pub max_bits: u64,
    /// Defaults to the number of channel realizations.
    pub min_frames: Option<u64>,
    #[serde(default = "default_spf")]
    pub symbols_per_frame: usize,
    #[serde(default)]
    pub seed: u64,
    pub uw_ratio: Option<f64>,
}

fn default_code() -> OuterCode {
    OuterCode::Uncoded
}
fn default_modulation() -> Modulation {
    Modulation::Qpsk
}
fn default_csi() -> CsiMode {
    CsiMode::Perfect
}
fn default_min_errors() -> u64 {
    100
}
fn default_spf() -> usize {
    10
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if file.version != SCENARIO_VERSION {
            return Err(Error::Parse(format!("unsupported scenario version {}", file.version)));
        }
        Ok(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Loads referenced files relative to `base` and builds the scenario.
    pub fn resolve(&self, base: &Path) -> Result<Scenario> {
        let at = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        let generator = self.generator.as_deref().map(|p| load_generator(at(p))).transpose()?;
        let channels = if self.channel == "awgn" {
            ChannelSource::Awgn
        } else {
            let path = at(Path::new(&self.channel));
            if !path.exists() {
                return Err(Error::InvalidScenario(format!("channel corpus {} not found", path.display())));
            }
            let corpus = ChannelCorpus::load(&path)?;
            let corpus = match self.channels {
                Some(n) if n > corpus.len() => {
                    return Err(Error::InvalidScenario(format!(
                        "requested {n} channels from a corpus of {}",
                        corpus.len()
                    )))
                }
                Some(n) => corpus.truncated(n),
                None => corpus,
            };
            ChannelSource::Corpus(Arc::new(corpus))
        };
        let min_frames = self.min_frames.unwrap_or(channels.count() as u64);
        let sc = Scenario::with_uw_ratio(
            self.label.clone(),
            self.system,
            generator.as_ref(),
            self.estimator,
            channels,
            self.uw_ratio.unwrap_or(UW_ENERGY_RATIO),
        )?;
        let sc = sc
            .outer_code(self.outer_code)
            .modulation(self.modulation)
            .es_n0_db(self.es_n0_db.clone())
            .csi(self.csi)
            .stop(StopRule {
                min_errors: self.min_errors,
                max_bits: self.max_bits,
                min_frames,
            })
            .symbols_per_frame(self.symbols_per_frame)
            .seed(self.seed);
        sc.validate()?;
        Ok(sc)
    }
}
