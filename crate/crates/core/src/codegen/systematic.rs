use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GeneratorKind, GeneratorMatrix};
use crate::error::{Error, Result};
use crate::linalg::{condition_number, CMat, C64};
use crate::ofdm::{Layout, SystemConfig, DEFAULT_RED_IDX};

/// Largest condition number of `M22` treated as invertible.
pub(crate) const MAX_M22_CONDITION: f64 = 1e12;

/// Redundant-symbol map `T = -M22^{-1} M21` of the systematic code, where
/// `M = F^{-1} B P` restricted to its lowermost `N_u` rows.
pub fn systematic_t(layout: &Layout) -> Result<CMat> {
    let tail = layout.tail_rows();
    let (n_d, n_r) = (layout.n_d(), layout.n_r());
    let perm = layout.slot_to_pos();
    let m21 = CMat::from_fn(tail.nrows(), n_d, |r, k| tail[(r, perm[k])]);
    let m22 = CMat::from_fn(tail.nrows(), n_r, |r, m| tail[(r, perm[n_d + m])]);
    solve_redundant(&m22, &m21).map_err(|condition| Error::SingularRedundantBlock {
        red_idx: layout.config().red_idx.clone(),
        condition,
    })
}

/// `-m22^{-1} m21`, or the offending condition number.
fn solve_redundant(m22: &CMat, m21: &CMat) -> std::result::Result<CMat, f64> {
    let condition = condition_number(m22);
    if !(condition <= MAX_M22_CONDITION) {
        return Err(condition);
    }
    let t = m22.clone().lu().solve(m21).ok_or(f64::INFINITY)?;
    Ok(-t)
}

/// The systematic generator `G = P [I; T]`.
pub fn systematic_generator(config: &SystemConfig) -> Result<GeneratorMatrix> {
    let layout = Layout::new(config)?;
    let t = systematic_t(&layout)?;
    let (n_d, n_a) = (layout.n_d(), layout.n_a());
    let perm = layout.slot_to_pos();
    let mut g = CMat::zeros(n_a, n_d);
    for k in 0..n_d {
        g[(perm[k], k)] = C64::new(1.0, 0.0);
    }
    for m in 0..layout.n_r() {
        for k in 0..n_d {
            g[(perm[n_d + m], k)] = t[(m, k)];
        }
    }
    GeneratorMatrix::with_layout(GeneratorKind::Systematic, g, &layout)
}

/// Energy-based cost `J_E = (sigma_d^2 / N) tr(T T^H)`.
pub fn redundant_energy_cost(t: &CMat, sigma_d2: f64, n: usize) -> f64 {
    sigma_d2 / n as f64 * t.iter().map(|z| z.norm_sqr()).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub enum PermutationStrategy {
    /// The published energy-optimal set for the 64-point WLAN layout.
    Reference,
    /// Accept-if-better pairwise swaps between a redundant and a data
    /// subcarrier, starting from `start` or from a random set.
    LocalSearch {
        seed: u64,
        iters: usize,
        start: Option<Vec<usize>>,
    },
}

/// Chooses the redundant subcarrier index set.
pub fn optimize_permutation(config: &SystemConfig, strategy: &PermutationStrategy) -> Result<Vec<usize>> {
    match strategy {
        PermutationStrategy::Reference => Ok(DEFAULT_RED_IDX.to_vec()),
        PermutationStrategy::LocalSearch { seed, iters, start } => {
            local_search(config, *seed, *iters, start.as_deref())
        }
    }
}

fn local_search(config: &SystemConfig, seed: u64, iters: usize, start: Option<&[usize]>) -> Result<Vec<usize>> {
    let layout = Layout::new(config)?;
    let occupied = layout.occupied().to_vec();
    let tail = layout.tail_rows().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos_of = |k: usize| {
        occupied
            .binary_search(&k)
            .map_err(|_| Error::InvalidConfig(format!("subcarrier {k} is not occupied")))
    };

    let energy = |red_pos: &[usize]| -> Option<f64> {
        let mut is_red = vec![false; occupied.len()];
        red_pos.iter().for_each(|&p| is_red[p] = true);
        let data: Vec<usize> = (0..occupied.len()).filter(|&p| !is_red[p]).collect();
        let m21 = CMat::from_fn(tail.nrows(), data.len(), |r, k| tail[(r, data[k])]);
        let m22 = CMat::from_fn(tail.nrows(), red_pos.len(), |r, m| tail[(r, red_pos[m])]);
        solve_redundant(&m22, &m21)
            .ok()
            .map(|t| redundant_energy_cost(&t, config.sigma_d2, config.n))
    };

    let mut red: Vec<usize> = match start {
        Some(set) => set.iter().map(|&k| pos_of(k)).collect::<Result<_>>()?,
        None => {
            let mut tries = 0;
            loop {
                let mut all: Vec<usize> = (0..occupied.len()).collect();
                all.shuffle(&mut rng);
                all.truncate(config.n_r);
                if energy(&all).is_some() {
                    break all;
                }
                tries += 1;
                if tries > 1000 {
                    return Err(Error::InvalidConfig("no invertible random redundant set found".into()));
                }
            }
        }
    };
    if red.len() != config.n_r {
        return Err(Error::InvalidConfig(format!("start set has {} entries, need {}", red.len(), config.n_r)));
    }
    let mut best = energy(&red).ok_or_else(|| Error::SingularRedundantBlock {
        red_idx: red.iter().map(|&p| occupied[p]).collect(),
        condition: f64::INFINITY,
    })?;

    for _ in 0..iters {
        let slot = rng.random_range(0..red.len());
        let candidate = rng.random_range(0..occupied.len());
        if red.contains(&candidate) {
            continue;
        }
        let old = red[slot];
        red[slot] = candidate;
        match energy(&red) {
            Some(e) if e < best => best = e,
            _ => red[slot] = old,
        }
    }
    let mut out: Vec<usize> = red.into_iter().map(|p| occupied[p]).collect();
    out.sort_unstable();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codegen::constraint_residual;
    use crate::linalg::{idft_matrix, max_abs};
    use crate::ofdm::selection_matrix;

    fn default_layout() -> Layout {
        Layout::new(&SystemConfig::default()).unwrap()
    }

    #[test]
    fn default_t_zeroes_the_tail() {
        let g = systematic_generator(&SystemConfig::default()).unwrap();
        let layout = default_layout();
        assert!(constraint_residual(&layout, g.matrix()) < 1e-9);
    }

    #[test]
    fn small_layout_matches_direct_solve() {
        // N = 8, N_u = 2, no zero subcarriers, redundant {3, 7}
        let cfg = SystemConfig::new(8, 2, vec![], vec![3, 7]).unwrap();
        let layout = Layout::new(&cfg).unwrap();
        let t = systematic_t(&layout).unwrap();
        let fi = idft_matrix(8);
        // rows 6, 7 of F^{-1}; data columns {0,1,2,4,5,6}, redundant {3,7}
        let data = [0usize, 1, 2, 4, 5, 6];
        for (k, &dc) in data.iter().enumerate() {
            // solve [a b; c d] r = -[e; f] by Cramer's rule
            let (a, b) = (fi[(6, 3)], fi[(6, 7)]);
            let (c, d) = (fi[(7, 3)], fi[(7, 7)]);
            let (e, f) = (-fi[(6, dc)], -fi[(7, dc)]);
            let det = a * d - b * c;
            let r0 = (e * d - b * f) / det;
            let r1 = (a * f - e * c) / det;
            assert!((t[(0, k)] - r0).norm() < 1e-12);
            assert!((t[(1, k)] - r1).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_data_gives_zero_redundancy() {
        let t = systematic_t(&default_layout()).unwrap();
        let r = &t * crate::linalg::CVec::zeros(36);
        assert!(r.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn singular_block_names_index_set() {
        // tail rows form a Vandermonde block, so only a tightly clustered
        // redundant set is numerically singular
        let red: Vec<usize> = (1..17).collect();
        let cfg = SystemConfig::new(256, 16, vec![], red.clone()).unwrap();
        match systematic_t(&Layout::new(&cfg).unwrap()) {
            Err(Error::SingularRedundantBlock { red_idx, condition }) => {
                assert_eq!(red_idx, red);
                assert!(condition > MAX_M22_CONDITION);
            }
            other => panic!("expected singular block, got {other:?}"),
        }
    }

    #[test]
    fn energy_cost_matches_redundant_powers() {
        let cfg = SystemConfig::default();
        let t = systematic_t(&default_layout()).unwrap();
        let je = redundant_energy_cost(&t, 1.0, 64);
        // diag(T T^H) holds the redundant-subcarrier mean powers
        let powers: f64 = (&t * t.adjoint()).diagonal().iter().map(|z| z.re).sum();
        assert!((je - powers / 64.0).abs() < 1e-12);
        assert_eq!(redundant_energy_cost(&CMat::zeros(16, 36), 1.0, 64), 0.0);

        let contiguous: Vec<usize> = (22..27).chain(38..49).collect();
        let block = cfg.with_red_idx(contiguous).unwrap();
        let t_block = systematic_t(&Layout::new(&block).unwrap()).unwrap();
        assert!(redundant_energy_cost(&t_block, 1.0, 64) > je);
    }

    #[test]
    fn generator_has_identity_on_data_rows() {
        let layout = default_layout();
        let g = systematic_generator(layout.config()).unwrap();
        for k in 0..36 {
            let row = g.matrix().row(layout.slot_to_pos()[k]);
            for (j, z) in row.iter().enumerate() {
                let expect = if j == k { 1.0 } else { 0.0 };
                assert!((z - C64::new(expect, 0.0)).norm() < 1e-15);
            }
        }
        let fb = idft_matrix(64) * selection_matrix(layout.config()).unwrap();
        let tail = (fb * g.matrix()).rows(48, 16).into_owned();
        assert!(max_abs(&tail) < 1e-12);
    }

    #[test]
    fn reference_set_is_verbatim() {
        let set = optimize_permutation(&SystemConfig::default(), &PermutationStrategy::Reference).unwrap();
        assert_eq!(set, vec![2, 6, 10, 14, 17, 21, 24, 26, 38, 40, 43, 47, 50, 54, 58, 62]);
    }

    #[test]
    fn local_search_from_default_never_gets_worse() {
        let cfg = SystemConfig::default();
        let base = redundant_energy_cost(&systematic_t(&default_layout()).unwrap(), 1.0, 64);
        let strategy = PermutationStrategy::LocalSearch {
            seed: 9,
            iters: 500,
            start: Some(DEFAULT_RED_IDX.to_vec()),
        };
        let set = optimize_permutation(&cfg, &strategy).unwrap();
        let t = systematic_t(&Layout::new(&cfg.with_red_idx(set).unwrap()).unwrap()).unwrap();
        assert!(redundant_energy_cost(&t, 1.0, 64) <= base);
    }
}
