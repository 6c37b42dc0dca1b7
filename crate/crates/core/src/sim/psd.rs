use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::rng::rng_for;

use super::link::Link;

pub const PSD_HEADER: &str = "# uwofdm-psd v1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdOptions {
    pub n_symbols: usize,
    /// Interpolation factor of the synthesized waveform.
    pub oversampling: usize,
    /// Welch segment length in oversampled samples.
    pub segment_len: usize,
    pub seed: u64,
}

impl Default for PsdOptions {
    fn default() -> Self {
        PsdOptions {
            n_symbols: 1000,
            oversampling: 4,
            segment_len: 1024,
            seed: 0,
        }
    }
}

/// Two-sided spectrum in dB relative to the in-band peak, ascending in
/// frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdCurve {
    pub freq_hz: Vec<f64>,
    pub psd_db: Vec<f64>,
    /// Outermost occupied subcarrier frequency.
    pub band_edge_hz: f64,
    pub spacing_hz: f64,
}

impl PsdCurve {
    fn mean_linear(&self, keep: impl Fn(f64) -> bool) -> f64 {
        let (sum, n) = self
            .freq_hz
            .iter()
            .zip(&self.psd_db)
            .filter(|(f, _)| keep(f.abs()))
            .fold((0.0, 0usize), |(s, n), (_, &p)| (s + 10f64.powf(p / 10.0), n + 1));
        sum / n.max(1) as f64
    }

    /// Mean power beyond `edge_hz` relative to the mean in-band power, dB.
    pub fn out_of_band_db(&self, edge_hz: f64) -> f64 {
        let oob = self.mean_linear(|f| f > edge_hz);
        let inb = self.mean_linear(|f| f <= self.band_edge_hz);
        10.0 * (oob / inb).log10()
    }

    /// Standard deviation of the in-band PSD in dB, skipping the DC notch
    /// and the band edges.
    pub fn in_band_ripple_db(&self) -> f64 {
        let lo = 1.5 * self.spacing_hz;
        let hi = self.band_edge_hz - 1.5 * self.spacing_hz;
        let v: Vec<f64> = self
            .freq_hz
            .iter()
            .zip(&self.psd_db)
            .filter(|(f, _)| (lo..=hi).contains(&f.abs()))
            .map(|(_, &p)| p)
            .collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{PSD_HEADER}\n# band_edge_hz {}\n# spacing_hz {}\n# freq_hz psd_db\n", self.band_edge_hz, self.spacing_hz);
        for (f, p) in self.freq_hz.iter().zip(&self.psd_db) {
            writeln!(s, "{f} {p}").expect("writing to a string");
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

fn qpsk_symbols<R: Rng>(rng: &mut R, n: usize, sigma_d2: f64) -> Vec<C64> {
    let a = (sigma_d2 / 2.0).sqrt();
    (0..n)
        .map(|_| C64::new(if rng.random() { a } else { -a }, if rng.random() { a } else { -a }))
        .collect()
}

/// Band-limited interpolation of one block, guard interval included.
fn oversampled_block(link: &Link, d: &[C64], os: usize, ifft: &dyn rustfft::Fft<f64>) -> Result<Vec<C64>> {
    let layout = link.layout();
    let n = layout.n();
    let core = link.core_symbol(d)?;
    let spec = layout.dft().forward(&core.0)?;
    let m = n * os;
    let mut grid = vec![C64::new(0.0, 0.0); m];
    for (k, &v) in spec.iter().enumerate() {
        let dst = if k < n / 2 { k } else { k + m - n };
        grid[dst] = v;
    }
    ifft.process(&mut grid);
    let scale = 1.0 / n as f64;
    grid.iter_mut().for_each(|z| *z *= scale);
    // CP-OFDM prepends its prefix; UW-OFDM shifts the block boundary into
    // the middle of the UW so neighbouring blocks meet near the UW samples
    let guard = if link.is_uw() { layout.n_u() / 2 * os } else { link.cp_len() * os };
    let body = if link.is_uw() { m - guard } else { m };
    Ok(grid[m - guard..].iter().chain(&grid[..body]).copied().collect())
}

/// Welch estimate (Hann window, 50 % overlap) of a burst of random QPSK
/// blocks.
pub fn run_psd(link: &Link, opts: &PsdOptions) -> Result<PsdCurve> {
    if opts.oversampling == 0 || opts.segment_len < 2 || opts.n_symbols == 0 {
        return Err(Error::InvalidConfig("PSD options must be positive".into()));
    }
    let layout = link.layout();
    let cfg = layout.config();
    let n = layout.n();
    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(n * opts.oversampling);
    let mut rng = rng_for(&[opts.seed, 0x505344]);
    let mut burst = Vec::new();
    for _ in 0..opts.n_symbols {
        let d = qpsk_symbols(&mut rng, link.payload(), cfg.sigma_d2);
        burst.extend(oversampled_block(link, &d, opts.oversampling, ifft.as_ref())?);
    }
    let l = opts.segment_len;
    if burst.len() < l {
        return Err(Error::InvalidConfig(format!("burst of {} samples is shorter than one segment", burst.len())));
    }
    let window: Vec<f64> = (0..l)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / l as f64).cos())
        .collect();
    let fft = planner.plan_fft_forward(l);
    let mut acc = vec![0.0; l];
    let mut segments = 0usize;
    let mut buf = vec![C64::new(0.0, 0.0); l];
    let mut start = 0;
    while start + l <= burst.len() {
        for ((b, &x), &w) in buf.iter_mut().zip(&burst[start..start + l]).zip(&window) {
            *b = x * w;
        }
        fft.process(&mut buf);
        acc.iter_mut().zip(&buf).for_each(|(a, z)| *a += z.norm_sqr());
        segments += 1;
        start += l / 2;
    }
    let fs = cfg.fs * opts.oversampling as f64;
    let spacing = cfg.fs / n as f64;
    let band_edge = layout
        .occupied()
        .iter()
        .map(|&k| if k < n / 2 { k as f64 } else { n as f64 - k as f64 })
        .fold(0.0, f64::max)
        * spacing;
    // reorder to ascending frequency
    let half = l / 2;
    let freq: Vec<f64> = (0..l).map(|i| (i as f64 - half as f64) * fs / l as f64).collect();
    let lin: Vec<f64> = (0..l).map(|i| acc[(i + l - half) % l] / segments as f64).collect();
    let peak = freq
        .iter()
        .zip(&lin)
        .filter(|(f, _)| f.abs() <= band_edge)
        .map(|(_, &p)| p)
        .fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(Error::InvalidConfig("burst carries no in-band power".into()));
    }
    let psd_db = lin.iter().map(|&p| 10.0 * (p.max(peak * 1e-30) / peak).log10()).collect();
    Ok(PsdCurve {
        freq_hz: freq,
        psd_db,
        band_edge_hz: band_edge,
        spacing_hz: spacing,
    })
}
