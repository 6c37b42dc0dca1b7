use std::sync::Arc;

use num_complex::Complex64 as C;
use proptest::prelude::*;

use uwofdm::channel::{cyclic_convolve, to_freq, ChannelCorpus, MultipathSpec};
use uwofdm::codegen::{
    build_generator, cost, parse_generator, systematic_generator, write_generator, CostSpec, Estimator,
    ParamMatrix,
};
use uwofdm::fec::{encode, map_qam, soft_demap, viterbi_decode, Interleaver, Modulation, OuterCode};
use uwofdm::ofdm::Dft;
use uwofdm::sim::{parse_results, run_point, write_results, ChannelSource, Detector, Scenario, StopRule, SystemId};
use uwofdm::{GeneratorKind, Layout, SystemConfig};

fn complex_vec(n: usize) -> impl Strategy<Value = Vec<C>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| C::new(a, b)), n)
}

fn code() -> impl Strategy<Value = OuterCode> {
    prop_oneof![Just(OuterCode::Uncoded), Just(OuterCode::Half), Just(OuterCode::ThreeQuarters)]
}

fn modulation() -> impl Strategy<Value = Modulation> {
    prop_oneof![Just(Modulation::Qpsk), Just(Modulation::Qam16)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dft_round_trip(x in complex_vec(64)) {
        let dft = Dft::new(64);
        let back = dft.inverse(&dft.forward(&x).unwrap()).unwrap();
        for (a, b) in back.iter().zip(&x) {
            prop_assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn systematic_tail_is_zero(d in complex_vec(36)) {
        let cfg = SystemConfig::default();
        let layout = Layout::new(&cfg).unwrap();
        let g = systematic_generator(&cfg).unwrap();
        let c = g.encode(&d);
        let x = layout.dft().inverse(&layout.insert_zeros(&c).unwrap().0).unwrap();
        let scale = x.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for z in &x[48..] {
            prop_assert!(z.norm() <= 1e-9 * scale);
        }
        // the data symbols appear verbatim
        for (k, &p) in layout.slot_to_pos()[..36].iter().enumerate() {
            prop_assert!((c[p] - d[k]).norm() < 1e-12);
        }
    }

    #[test]
    fn parametrized_generators_satisfy_constraint(seed in any::<u64>(), d in complex_vec(36)) {
        let layout = Layout::new(&SystemConfig::default()).unwrap();
        let a = ParamMatrix::random_gaussian(52, seed);
        let g = build_generator(&a, &layout, GeneratorKind::OptLmmse).unwrap();
        let x = layout.dft().inverse(&layout.insert_zeros(&g.encode(&d)).unwrap().0).unwrap();
        let scale = x.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for z in &x[48..] {
            prop_assert!(z.norm() <= 1e-8 * scale);
        }
    }

    #[test]
    fn cost_is_scale_invariant(seed in any::<u64>(), alpha in 0.1f64..10.0, blue in any::<bool>()) {
        let layout = Layout::new(&SystemConfig::default()).unwrap();
        let g = build_generator(&ParamMatrix::random_gaussian(52, seed), &layout, GeneratorKind::OptLmmse).unwrap();
        let spec = CostSpec::new(if blue { Estimator::Blue } else { Estimator::Lmmse }, 1.0, 1.0).unwrap();
        let j = cost(g.matrix(), &spec).unwrap();
        let js = cost(&(g.matrix() * C::from(alpha)), &spec).unwrap();
        prop_assert!((j - js).abs() <= 1e-7 * j);
        prop_assert!(j >= spec.minimum(36) * (1.0 - 1e-12));
    }

    #[test]
    fn generator_file_round_trip(seed in any::<u64>()) {
        let layout = Layout::new(&SystemConfig::default()).unwrap();
        let g = build_generator(&ParamMatrix::random_gaussian(52, seed), &layout, GeneratorKind::OptBlue).unwrap();
        let mut buf = Vec::new();
        write_generator(&g, &mut buf).unwrap();
        let back = parse_generator(std::str::from_utf8(&buf).unwrap()).unwrap();
        prop_assert_eq!(back.kind(), g.kind());
        prop_assert!(back.matrix().iter().zip(g.matrix().iter()).all(|(a, b)| a == b));
    }

    #[test]
    fn convolution_theorem(seed in any::<u64>(), x in complex_vec(64)) {
        let layout = Layout::new(&SystemConfig::default()).unwrap();
        let corpus = ChannelCorpus::generate(1, MultipathSpec::indoor(20e6, 16), seed).unwrap();
        let h = &corpus.taps[0];
        let y = cyclic_convolve(&x, h);
        let dft = layout.dft();
        let (xf, yf) = (dft.forward(&x).unwrap(), dft.forward(&y).unwrap());
        let hf = to_freq(h, &layout).unwrap();
        for (o, &k) in layout.occupied().iter().enumerate() {
            prop_assert!((yf[k] - hf[o] * xf[k]).norm() < 1e-10);
        }
        let energy: f64 = h.iter().map(|z| z.norm_sqr()).sum();
        prop_assert!((energy - 1.0).abs() < 1e-12);
    }

    #[test]
    fn corpus_text_round_trip(seed in any::<u64>(), count in 1usize..6) {
        let corpus = ChannelCorpus::generate(count, MultipathSpec::indoor(20e6, 16), seed).unwrap();
        let back = ChannelCorpus::parse(&corpus.to_text()).unwrap();
        prop_assert_eq!(back.id(), corpus.id());
        prop_assert_eq!(back, corpus);
    }

    #[test]
    fn interleaver_is_a_permutation(depth in 1usize..20, rows in 1usize..20, seed in any::<u64>()) {
        let n = depth * rows;
        let il = Interleaver::with_depth(n, depth);
        let x: Vec<u64> = (0..n as u64).map(|i| i ^ seed).collect();
        let y = il.interleave(&x);
        let mut sorted = y.clone();
        sorted.sort_unstable();
        let mut orig = x.clone();
        orig.sort_unstable();
        prop_assert_eq!(sorted, orig);
        prop_assert_eq!(il.deinterleave(&y), x);
    }

    #[test]
    fn noiseless_code_round_trip(mut bits in prop::collection::vec(0u8..2, 3..200), code in code()) {
        // the punctured code needs whole puncturing periods
        while code.info_len(code.coded_len(bits.len())).ok() != Some(bits.len()) {
            bits.pop();
        }
        let coded = encode(&bits, code);
        prop_assert_eq!(coded.len(), code.coded_len(bits.len()));
        let llr: Vec<f64> = coded.iter().map(|&b| if b == 0 { 1.0 } else { -1.0 }).collect();
        prop_assert_eq!(viterbi_decode(&llr, code).unwrap(), bits);
    }

    #[test]
    fn mapping_round_trip(groups in 1usize..40, seed in any::<u64>(), m in modulation(), sigma_d2 in 0.1f64..4.0) {
        let n = groups * m.bits_per_symbol();
        let bits: Vec<u8> = (0..n).map(|i| ((seed >> (i % 64)) & 1) as u8).collect();
        let s = map_qam(&bits, m, sigma_d2).unwrap();
        let e = s.iter().map(|z| z.norm_sqr()).sum::<f64>() / s.len() as f64;
        prop_assert!(e <= 2.0 * sigma_d2);
        let llr = soft_demap(&s, &vec![0.1; s.len()], m, sigma_d2).unwrap();
        let hard: Vec<u8> = llr.iter().map(|&l| (l < 0.0) as u8).collect();
        prop_assert_eq!(hard, bits);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn ber_is_reproducible_and_bounded(seed in any::<u64>(), es_n0 in 0.0f64..12.0, system in prop_oneof![
        Just(SystemId::CpOfdm), Just(SystemId::UwG), Just(SystemId::UwScFde)
    ]) {
        let corpus = ChannelCorpus::generate(4, MultipathSpec::indoor(20e6, 16), seed).unwrap();
        let sc = Scenario::new("p", system, None, Detector::Lmmse, ChannelSource::Corpus(Arc::new(corpus)))
            .unwrap()
            .seed(seed)
            .stop(StopRule { min_errors: 20, max_bits: 20_000, min_frames: 4 });
        let a = run_point(&sc, es_n0).unwrap();
        let b = run_point(&sc, es_n0).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.bit_errors <= a.bits_sent);
        prop_assert!(a.bit_errors >= 20 || a.bits_sent >= 20_000);
        let mut buf = Vec::new();
        write_results(&mut buf, std::slice::from_ref(&a)).unwrap();
        prop_assert_eq!(parse_results(std::str::from_utf8(&buf).unwrap()).unwrap(), vec![a]);
    }
}
