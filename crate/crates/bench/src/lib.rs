//! Shared inputs for the kernel benchmarks.

use uwofdm::channel::{gen_multipath, to_freq, MultipathSpec};
use uwofdm::codegen::{build_generator, systematic_generator, ParamMatrix};
use uwofdm::fec::{encode, OuterCode};
use uwofdm::rng::{complex_gaussian, rng_for};
use uwofdm::{GeneratorKind, GeneratorMatrix, Layout, SystemConfig, C64};

pub struct Fixture {
    pub layout: Layout,
    pub systematic: GeneratorMatrix,
    /// Non-systematic generator from a random parameter matrix.
    pub nonsystematic: GeneratorMatrix,
    pub param: ParamMatrix,
    pub taps: Vec<C64>,
    /// Channel response on the occupied subcarriers.
    pub h: Vec<C64>,
    pub noise_var: f64,
    /// Noisy received occupied-subcarrier vector.
    pub y: Vec<C64>,
}

impl Fixture {
    pub fn reference() -> Self {
        let cfg = SystemConfig::default();
        let layout = Layout::new(&cfg).expect("reference layout");
        let systematic = systematic_generator(&cfg).expect("systematic generator");
        let param = ParamMatrix::random_gaussian(layout.n_a(), 1);
        let nonsystematic = build_generator(&param, &layout, GeneratorKind::OptLmmse).expect("generator");
        let spec = MultipathSpec::indoor(cfg.fs, layout.n_u());
        let taps = gen_multipath(7, &spec, &layout).expect("channel").taps().to_vec();
        let h = to_freq(&taps, &layout).expect("frequency response");
        let noise_var = 0.1 * layout.n() as f64;
        let mut rng = rng_for(&[3]);
        let y = h.iter().map(|&hk| hk + complex_gaussian(&mut rng, noise_var)).collect();
        Fixture {
            layout,
            systematic,
            nonsystematic,
            param,
            taps,
            h,
            noise_var,
            y,
        }
    }
}

/// LLRs of a noisy rate-`code` codeword carrying `n_info` bits.
pub fn noisy_llrs(n_info: usize, code: OuterCode, seed: u64) -> Vec<f64> {
    let mut rng = rng_for(&[seed, 1]);
    let bits: Vec<u8> = (0..n_info).map(|_| (complex_gaussian(&mut rng, 1.0).re > 0.0) as u8).collect();
    encode(&bits, code)
        .into_iter()
        .map(|b| {
            let s = if b == 0 { 1.0 } else { -1.0 };
            2.0 * (s + 0.7 * complex_gaussian(&mut rng, 2.0).re)
        })
        .collect()
}
