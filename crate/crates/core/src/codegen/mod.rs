//! Complex-number RS code generator matrices.
//!
//! A generator maps `N_d` data symbols onto the `N_d + N_r` occupied
//! subcarriers such that the lowermost `N_u` samples of `F^{-1} B G d` vanish
//! for every `d` (the zero-UW constraint). The systematic generator keeps the
//! data verbatim and loads dedicated redundant subcarriers; the optimized
//! non-systematic generators spread redundancy over all subcarriers and are
//! found by minimizing the BLUE or LMMSE transceiver cost.

mod certify;
mod cost;
mod descent;
mod io;
mod param;
mod systematic;

pub use certify::{
    certify_optimality, check_symmetry, normalize, polish, scale_to_unit_power, scfde_config,
    scfde_generator, OptimalityReport, SymmetryReport,
};
pub use cost::{cost, cost_blue, cost_from_singular_values, cost_lmmse, CostSpec, Estimator};
pub use descent::{
    numeric_gradient, numeric_gradient_with, steepest_descent, DescentOptions, DescentOutcome,
    DescentStatus, Init, TracePoint,
};
pub use io::{load_generator, parse_generator, save_generator, write_generator};
pub use param::{build_generator, ParamMatrix, ProbeEvaluator};
pub use systematic::{
    optimize_permutation, redundant_energy_cost, systematic_generator, systematic_t,
    PermutationStrategy,
};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{CMat, C64};
use crate::ofdm::{Layout, SystemConfig};

/// Relative zero-UW residual accepted for a generator matrix.
pub const CONSTRAINT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GeneratorKind {
    Systematic,
    OptBlue,
    OptLmmse,
    ScFde,
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GeneratorKind::Systematic => "Systematic",
            GeneratorKind::OptBlue => "OptBlue",
            GeneratorKind::OptLmmse => "OptLmmse",
            GeneratorKind::ScFde => "ScFde",
        };
        f.write_str(s)
    }
}

impl FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Systematic" => Ok(GeneratorKind::Systematic),
            "OptBlue" => Ok(GeneratorKind::OptBlue),
            "OptLmmse" => Ok(GeneratorKind::OptLmmse),
            "ScFde" => Ok(GeneratorKind::ScFde),
            other => Err(Error::Parse(format!("unknown generator kind {other:?}"))),
        }
    }
}

/// A `(N_d+N_r) x N_d` code generator matrix together with the layout it was
/// built for.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    mat: CMat,
    kind: GeneratorKind,
    s2: f64,
    config: SystemConfig,
}

impl GeneratorMatrix {
    /// Wraps `mat`, checking its shape and the zero-UW constraint.
    pub fn new(kind: GeneratorKind, mat: CMat, config: &SystemConfig) -> Result<Self> {
        let layout = Layout::new(config)?;
        Self::with_layout(kind, mat, &layout)
    }

    pub fn with_layout(kind: GeneratorKind, mat: CMat, layout: &Layout) -> Result<Self> {
        if mat.nrows() != layout.n_a() {
            return Err(Error::DimensionMismatch {
                expected: layout.n_a(),
                found: mat.nrows(),
            });
        }
        if mat.ncols() != layout.n_d() {
            return Err(Error::DimensionMismatch {
                expected: layout.n_d(),
                found: mat.ncols(),
            });
        }
        let residual = constraint_residual(layout, &mat);
        if !(residual < CONSTRAINT_TOLERANCE) {
            return Err(Error::ConstraintViolation { residual });
        }
        let s2 = mean_squared_singular_value(&mat);
        Ok(GeneratorMatrix {
            mat,
            kind,
            s2,
            config: layout.config().clone(),
        })
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn kind(&self) -> GeneratorKind {
        self.kind
    }

    /// Mean squared singular value, `tr(G^H G) / N_d`; the common `s^2` of an
    /// optimum generator.
    pub fn s2(&self) -> f64 {
        self.s2
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn n_d(&self) -> usize {
        self.mat.ncols()
    }

    pub fn n_a(&self) -> usize {
        self.mat.nrows()
    }

    /// Codeword `G d` in occupied-subcarrier order.
    pub fn encode(&self, d: &[C64]) -> Vec<C64> {
        assert_eq!(d.len(), self.n_d(), "data length");
        let mut c = vec![C64::new(0.0, 0.0); self.n_a()];
        for (k, &dk) in d.iter().enumerate() {
            for (ci, &g) in c.iter_mut().zip(self.mat.column(k).iter()) {
                *ci += g * dk;
            }
        }
        c
    }
}

pub(crate) fn mean_squared_singular_value(mat: &CMat) -> f64 {
    mat.iter().map(|z| z.norm_sqr()).sum::<f64>() / mat.ncols() as f64
}

/// Largest tail-sample magnitude of `F^{-1} B G` relative to the RMS of its
/// head samples.
pub fn constraint_residual(layout: &Layout, mat: &CMat) -> f64 {
    let tail = layout.tail_rows() * mat;
    let tail_max = tail.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let tail_energy: f64 = tail.iter().map(|z| z.norm_sqr()).sum();
    // F^{-1} B has orthogonal columns of squared norm 1/N
    let total = mat.iter().map(|z| z.norm_sqr()).sum::<f64>() / layout.n() as f64;
    let head_count = ((layout.n() - layout.n_u()) * mat.ncols()) as f64;
    let head_rms = ((total - tail_energy).max(0.0) / head_count).sqrt();
    if head_rms == 0.0 {
        return if tail_max == 0.0 { 0.0 } else { f64::INFINITY };
    }
    tail_max / head_rms
}
