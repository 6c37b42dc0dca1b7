use log::{debug, info};

use super::certify::scale_to_unit_power;
use super::cost::{cost, CostSpec, Estimator};
use super::param::{assemble, ParamMatrix, ProbeEvaluator};
use super::{GeneratorKind, GeneratorMatrix};
use crate::error::{Error, Result};
use crate::linalg::RMat;
use crate::ofdm::Layout;

/// Default finite-difference step for entry value `a`.
pub fn default_eps(a: f64) -> f64 {
    1e-6 * (1.0 + a.abs())
}

/// Central-difference gradient of `f` at `a` with the default step rule.
pub fn numeric_gradient<F>(f: F, a: &RMat) -> Result<RMat>
where
    F: FnMut(&RMat) -> Result<f64>,
{
    gradient_impl(f, a, default_eps)
}

/// Central-difference gradient of `f` at `a` with a fixed step `eps`.
pub fn numeric_gradient_with<F>(f: F, a: &RMat, eps: f64) -> Result<RMat>
where
    F: FnMut(&RMat) -> Result<f64>,
{
    if !(eps > 0.0) {
        return Err(Error::InvalidConfig(format!("eps must be positive, got {eps}")));
    }
    gradient_impl(f, a, |_| eps)
}

fn gradient_impl<F, E>(mut f: F, a: &RMat, eps: E) -> Result<RMat>
where
    F: FnMut(&RMat) -> Result<f64>,
    E: Fn(f64) -> f64,
{
    let mut probe = a.clone();
    let mut grad = RMat::zeros(a.nrows(), a.ncols());
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let a0 = a[(i, j)];
            let h = eps(a0);
            probe[(i, j)] = a0 + h;
            let plus = f(&probe)?;
            probe[(i, j)] = a0 - h;
            let minus = f(&probe)?;
            probe[(i, j)] = a0;
            grad[(i, j)] = (plus - minus) / (2.0 * h);
        }
    }
    Ok(grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    Identity,
    RandomGaussian(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentOptions {
    pub max_iters: usize,
    /// Stop once the relative decrease stays below this for `stall_window`
    /// consecutive iterations.
    pub stall_tol: f64,
    pub stall_window: usize,
    /// Stop once `(J - J_min) / J_min` falls below this.
    pub gap_tol: Option<f64>,
    /// Initial line-search step.
    pub initial_step: f64,
    pub max_halvings: usize,
}

impl Default for DescentOptions {
    fn default() -> Self {
        DescentOptions {
            max_iters: 50_000,
            stall_tol: 1e-10,
            stall_window: 10,
            gap_tol: None,
            initial_step: 1e-2,
            max_halvings: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub iteration: usize,
    pub cost: f64,
    /// Cumulative cost evaluations, gradient probes included.
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DescentStatus {
    GapReached,
    Stalled,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct DescentOutcome {
    pub param: ParamMatrix,
    /// Normalized to unit mean squared singular value.
    pub generator: GeneratorMatrix,
    pub cost: f64,
    pub trace: Vec<TracePoint>,
    pub evaluations: usize,
    pub status: DescentStatus,
}

impl DescentOutcome {
    pub fn iterations(&self) -> usize {
        self.trace.last().map_or(0, |p| p.iteration)
    }

    /// Evaluations spent until the relative gap to `minimum` first dropped
    /// below `tol`.
    pub fn evaluations_to_gap(&self, minimum: f64, tol: f64) -> Option<usize> {
        self.trace
            .iter()
            .find(|p| (p.cost - minimum) / minimum < tol)
            .map(|p| p.evaluations)
    }
}

/// Minimizes the transceiver cost over `A` by steepest descent with a
/// backtracking line search.
///
/// Each line search starts at twice the previously accepted step and halves
/// until the cost decreases, so the cost trace is monotone.
pub fn steepest_descent(layout: &Layout, spec: &CostSpec, init: Init, opts: &DescentOptions) -> Result<DescentOutcome> {
    let n_a = layout.n_a();
    let mut a = match init {
        Init::Identity => ParamMatrix::identity(n_a),
        Init::RandomGaussian(seed) => ParamMatrix::random_gaussian(n_a, seed),
    }
    .into_inner();
    let minimum = spec.minimum(layout.n_d());
    let mut evaluations = 0usize;
    let mut eval = ProbeEvaluator::new(&ParamMatrix::new(a.clone())?, layout, spec)?;
    evaluations += 1;
    let mut j = eval.base_cost();
    let mut trace = vec![TracePoint {
        iteration: 0,
        cost: j,
        evaluations,
    }];
    let mut step = opts.initial_step / 2.0;
    let mut stall = 0usize;
    let mut status = DescentStatus::MaxIterations;

    for iteration in 1..=opts.max_iters {
        if let Some(tol) = opts.gap_tol {
            if (j - minimum) / minimum < tol {
                status = DescentStatus::GapReached;
                break;
            }
        }
        let grad = eval.gradient(&a, default_eps)?;
        evaluations += 2 * n_a * n_a;

        let mut mu = 2.0 * step;
        let mut accepted = None;
        for _ in 0..opts.max_halvings {
            let candidate = &a - &grad * mu;
            evaluations += 1;
            // a near-singular M22 is an infeasible step: shrink
            if let Ok(parts) = assemble(&candidate, layout) {
                if let Ok(jc) = cost(&parts.g, spec) {
                    if jc < j {
                        accepted = Some((candidate, jc));
                        break;
                    }
                }
            }
            mu *= 0.5;
        }
        let Some((next, jn)) = accepted else {
            status = DescentStatus::LineSearchFailed;
            break;
        };
        step = mu;
        let rel = (j - jn) / j;
        a = next;
        j = jn;
        eval = ProbeEvaluator::new(&ParamMatrix::new(a.clone())?, layout, spec)?;
        trace.push(TracePoint {
            iteration,
            cost: j,
            evaluations,
        });
        if iteration % 100 == 0 {
            debug!("iteration {iteration}: J = {j:.12}, step {mu:.3e}");
        }
        stall = if rel < opts.stall_tol { stall + 1 } else { 0 };
        if stall >= opts.stall_window {
            status = DescentStatus::Stalled;
            break;
        }
    }
    info!(
        "descent finished: {status:?} after {} iterations, J = {j:.12} (minimum {minimum})",
        trace.last().map_or(0, |p| p.iteration)
    );

    let kind = match spec.estimator {
        Estimator::Blue => GeneratorKind::OptBlue,
        Estimator::Lmmse => GeneratorKind::OptLmmse,
    };
    let g = GeneratorMatrix::with_layout(kind, eval.generator().clone(), layout)?;
    Ok(DescentOutcome {
        param: ParamMatrix::new(a)?,
        generator: scale_to_unit_power(&g),
        cost: j,
        trace,
        evaluations,
        status,
    })
}
