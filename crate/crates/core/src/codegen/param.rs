use nalgebra::Matrix2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::cost::{cost, CostSpec, Estimator};
use super::systematic::MAX_M22_CONDITION;
use super::{GeneratorKind, GeneratorMatrix};
use crate::error::{Error, Result};
use crate::linalg::{condition_number, gram, real_trace, CMat, RMat, C64};
use crate::ofdm::Layout;

/// Real `N_a x N_a` optimizer variable `A` of the parametrization
/// `G = A P [I; T(A)]`, indexed by occupied position.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamMatrix {
    a: RMat,
}

impl ParamMatrix {
    pub fn new(a: RMat) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                found: a.ncols(),
            });
        }
        Ok(ParamMatrix { a })
    }

    pub fn identity(n_a: usize) -> Self {
        ParamMatrix { a: RMat::identity(n_a, n_a) }
    }

    /// Entries drawn i.i.d. from `N(0, 1)`.
    pub fn random_gaussian(n_a: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = RMat::from_fn(n_a, n_a, |_, _| StandardNormal.sample(&mut rng));
        ParamMatrix { a }
    }

    pub fn matrix(&self) -> &RMat {
        &self.a
    }

    pub fn into_inner(self) -> RMat {
        self.a
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn condition(&self) -> f64 {
        let s = self.a.clone().singular_values();
        let hi = s.iter().copied().fold(0.0, f64::max);
        let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
        if lo > 0.0 {
            hi / lo
        } else {
            f64::INFINITY
        }
    }
}

/// Generator and intermediate factors for one `A`.
pub(crate) struct Assembled {
    pub g: CMat,
    pub t: CMat,
    /// `M22^{-1} L` with `L` the tail rows of `F^{-1} B`.
    pub k: CMat,
    /// Columns of `A` at the redundant slots.
    pub a_red: CMat,
}

pub(crate) fn assemble(a: &RMat, layout: &Layout) -> Result<Assembled> {
    let n_a = layout.n_a();
    if a.nrows() != n_a || a.ncols() != n_a {
        return Err(Error::DimensionMismatch {
            expected: n_a,
            found: a.nrows(),
        });
    }
    let (n_d, n_r) = (layout.n_d(), layout.n_r());
    let perm = layout.slot_to_pos();
    let tail = layout.tail_rows();
    let a_data = CMat::from_fn(n_a, n_d, |r, k| C64::new(a[(r, perm[k])], 0.0));
    let a_red = CMat::from_fn(n_a, n_r, |r, m| C64::new(a[(r, perm[n_d + m])], 0.0));
    let m22 = tail * &a_red;
    let condition = condition_number(&m22);
    if !(condition <= MAX_M22_CONDITION) {
        return Err(Error::SingularRedundantBlock {
            red_idx: layout.config().red_idx.clone(),
            condition,
        });
    }
    let k = m22.lu().solve(tail).ok_or(Error::SingularRedundantBlock {
        red_idx: layout.config().red_idx.clone(),
        condition: f64::INFINITY,
    })?;
    let t = -(&k * &a_data);
    let g = a_data + &a_red * &t;
    Ok(Assembled { g, t, k, a_red })
}

/// Builds `G = A P [I; T]` with `T = -M22^{-1} M21` taken from `M = F^{-1} B A P`.
pub fn build_generator(a: &ParamMatrix, layout: &Layout, kind: GeneratorKind) -> Result<GeneratorMatrix> {
    let parts = assemble(a.matrix(), layout)?;
    GeneratorMatrix::with_layout(kind, parts.g, layout)
}

/// Evaluates the cost at `A + delta e_i e_j^T` in `O(N_d)` operations.
///
/// A single-entry change of `A` moves `G` by a rank-one term `beta h y^T`, so
/// `G^H G` moves by a rank-two term and the traces follow from Woodbury's
/// identity in the eigenbasis of the current `G^H G`.
pub struct ProbeEvaluator {
    spec: CostSpec,
    n_d: usize,
    base: f64,
    g: CMat,
    tr_x: f64,
    lambda: Vec<f64>,
    pos_to_slot: Vec<usize>,
    k: CMat,
    /// `V^H G^H (I - A_red K)`.
    hh: CMat,
    /// `V^H T^H`.
    vht: CMat,
    /// `V^H`.
    vh: CMat,
    hnorm2: Vec<f64>,
}

/// Smallest `|1 + delta K|` accepted before a probe counts as infeasible.
const MIN_PROBE_DENOMINATOR: f64 = 1e-8;

impl ProbeEvaluator {
    pub fn new(a: &ParamMatrix, layout: &Layout, spec: &CostSpec) -> Result<Self> {
        let parts = assemble(a.matrix(), layout)?;
        let n_a = layout.n_a();
        let n_d = layout.n_d();
        let x = gram(&parts.g);
        let base = cost(&parts.g, spec)?;
        let eig = x.clone().symmetric_eigen();
        let lambda: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let vh = eig.eigenvectors.adjoint();
        let ak = &parts.a_red * &parts.k;
        let i_minus_ak = CMat::identity(n_a, n_a) - &ak;
        let hh = &vh * parts.g.adjoint() * &i_minus_ak;
        let vht = &vh * parts.t.adjoint();
        let hnorm2 = (0..n_a)
            .map(|i| i_minus_ak.column(i).iter().map(|z| z.norm_sqr()).sum())
            .collect();
        Ok(ProbeEvaluator {
            spec: *spec,
            n_d,
            base,
            tr_x: real_trace(&x),
            lambda,
            pos_to_slot: layout.pos_to_slot().to_vec(),
            k: parts.k,
            hh,
            vht,
            vh,
            hnorm2,
            g: parts.g,
        })
    }

    pub fn base_cost(&self) -> f64 {
        self.base
    }

    pub fn generator(&self) -> &CMat {
        &self.g
    }

    /// Cost at `A + delta e_i e_j^T`.
    pub fn probe(&self, i: usize, j: usize, delta: f64) -> Result<f64> {
        let n_d = self.n_d;
        let q = self.pos_to_slot[j];
        let (beta, u): (C64, Vec<C64>) = if q < n_d {
            (C64::from(delta), self.vh.column(q).iter().copied().collect())
        } else {
            let m0 = q - n_d;
            let den = C64::from(1.0) + self.k[(m0, i)] * delta;
            if den.norm() < MIN_PROBE_DENOMINATOR {
                return Err(Error::SingularRedundantBlock {
                    red_idx: Vec::new(),
                    condition: f64::INFINITY,
                });
            }
            (delta / den, self.vht.column(m0).iter().copied().collect())
        };
        let g: Vec<C64> = self.hh.column(i).iter().map(|&z| beta * z).collect();
        let p2 = beta.norm_sqr() * self.hnorm2[i];
        let ug: C64 = u.iter().zip(&g).map(|(a, b)| a.conj() * b).sum();
        let u2: f64 = u.iter().map(|z| z.norm_sqr()).sum();
        let tr_x = self.tr_x + 2.0 * ug.re + p2 * u2;
        let m_inv = Matrix2::new(C64::from(-p2), C64::from(1.0), C64::from(1.0), C64::from(0.0));

        // quadratic forms U^H diag(w) U and U^H diag(w^2) U with U = [g, u]
        let forms = |w: &dyn Fn(f64) -> f64| -> (Matrix2<C64>, Matrix2<C64>, f64) {
            let mut q1 = Matrix2::<C64>::zeros();
            let mut q2 = Matrix2::<C64>::zeros();
            let mut sum = 0.0;
            for k in 0..n_d {
                let wk = w(self.lambda[k]);
                sum += wk;
                let col = [g[k], u[k]];
                for r in 0..2 {
                    for c in 0..2 {
                        let z = col[r].conj() * col[c];
                        q1[(r, c)] += z * wk;
                        q2[(r, c)] += z * (wk * wk);
                    }
                }
            }
            (q1, q2, sum)
        };
        let correction = |inner: Matrix2<C64>, q2: Matrix2<C64>| -> Result<f64> {
            let inv = inner.try_inverse().ok_or(Error::RankDeficient {
                condition: f64::INFINITY,
            })?;
            Ok((inv * q2).trace().re)
        };

        let sd2 = self.spec.sigma_d2;
        let value = match self.spec.estimator {
            Estimator::Blue => {
                let (q1, q2, sum) = forms(&|l| 1.0 / l);
                let tr_inv = sum - correction(m_inv + q1, q2)?;
                sd2 / (self.spec.c * n_d as f64) * tr_x * tr_inv
            }
            Estimator::Lmmse => {
                let kappa = self.spec.c * n_d as f64 / tr_x;
                let (q1, q2, sum) = forms(&|l| 1.0 / (kappa * l + 1.0));
                let inner = m_inv.map(|z| z / kappa) + q1;
                sd2 * (sum - correction(inner, q2)?)
            }
        };
        if !value.is_finite() {
            return Err(Error::RankDeficient {
                condition: f64::INFINITY,
            });
        }
        Ok(value)
    }

    /// Central-difference gradient with step `eps(a_ij)`.
    pub fn gradient(&self, a: &RMat, eps: impl Fn(f64) -> f64) -> Result<RMat> {
        let n = a.nrows();
        let mut grad = RMat::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                let h = eps(a[(i, j)]);
                let plus = self.probe(i, j, h)?;
                let minus = self.probe(i, j, -h)?;
                grad[(i, j)] = (plus - minus) / (2.0 * h);
            }
        }
        Ok(grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codegen::{constraint_residual, systematic_generator, systematic_t};
    use crate::linalg::max_abs;
    use crate::ofdm::SystemConfig;

    fn layout() -> Layout {
        Layout::new(&SystemConfig::default()).unwrap()
    }

    #[test]
    fn identity_reproduces_systematic() {
        let layout = layout();
        let g = build_generator(&ParamMatrix::identity(52), &layout, GeneratorKind::Systematic).unwrap();
        let sys = systematic_generator(layout.config()).unwrap();
        assert!(max_abs(&(g.matrix() - sys.matrix())) < 1e-12);
    }

    #[test]
    fn uniform_scaling_keeps_t() {
        let layout = layout();
        let a = ParamMatrix::new(RMat::identity(52, 52) * 2.0).unwrap();
        let parts = assemble(a.matrix(), &layout).unwrap();
        let t = systematic_t(&layout).unwrap();
        assert!(max_abs(&(&parts.t - &t)) < 1e-12);
        let sys = systematic_generator(layout.config()).unwrap();
        assert!(max_abs(&(parts.g - sys.matrix() * C64::from(2.0))) < 1e-12);
    }

    #[test]
    fn random_a_satisfies_constraint() {
        let layout = layout();
        for seed in 0..5 {
            let a = ParamMatrix::random_gaussian(52, seed);
            let parts = assemble(a.matrix(), &layout).unwrap();
            assert!(constraint_residual(&layout, &parts.g) < 1e-9);
        }
    }

    #[test]
    fn probe_matches_full_rebuild() {
        let layout = layout();
        for (seed, est) in [(1u64, Estimator::Blue), (2, Estimator::Lmmse)] {
            let spec = CostSpec::new(est, 1.0, 1.0).unwrap();
            let a = ParamMatrix::random_gaussian(52, seed);
            let eval = ProbeEvaluator::new(&a, &layout, &spec).unwrap();
            let full = cost(&assemble(a.matrix(), &layout).unwrap().g, &spec).unwrap();
            assert!((eval.base_cost() - full).abs() < 1e-10 * full);
            // one data column and one redundant column
            for &(i, j) in &[(3usize, 0usize), (7, 2), (40, 1)] {
                for delta in [1e-3, -0.2] {
                    let mut moved = a.matrix().clone();
                    moved[(i, j)] += delta;
                    let want = cost(&assemble(&moved, &layout).unwrap().g, &spec).unwrap();
                    let got = eval.probe(i, j, delta).unwrap();
                    assert!((got - want).abs() < 1e-9 * want, "{i} {j} {delta}: {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn singular_a_is_rejected() {
        let layout = layout();
        let a = ParamMatrix::new(RMat::zeros(52, 52)).unwrap();
        assert!(matches!(
            assemble(a.matrix(), &layout),
            Err(Error::SingularRedundantBlock { .. })
        ));
        assert!(ParamMatrix::new(RMat::zeros(3, 4)).is_err());
    }
}
