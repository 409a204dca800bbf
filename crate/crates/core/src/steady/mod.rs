//! Steady states of the three market classes.
//!
//! * non-segmented: a scalar root of the non-owner balance function, found
//!   by bisection on a sign bracket;
//! * partially segmented: a `K`-dimensional zero of the fixed-point map,
//!   found by damped Gauss–Seidel sweeps with box subdivision as fallback;
//! * heterogeneous: the reduced six-equation system, searched by box
//!   subdivision and then by multistart Newton.

mod heterogeneous;
mod nonsegmented;
mod partially_segmented;

use serde::{Deserialize, Serialize};

use crate::miranda::MirandaError;
use crate::models::{ModelError, StateDistribution};

pub use heterogeneous::{
    check_condition_p, counterexample_root, counterexample_verdict, reduced_residual_heterogeneous,
    solve_heterogeneous, solve_heterogeneous_with, ConditionMargin, ConditionPReport,
    ExistenceVerdict, HeterogeneousOptions, HeterogeneousOutcome, HeterogeneousSolution,
    NoSteadyStateReport, FROZEN_FLUX,
};
pub use nonsegmented::{
    high_nonowner_balance, solve_nonsegmented, solve_nonsegmented_with, ScalarMethod,
};
pub use partially_segmented::{
    fixed_point_map, gauss_seidel, solve_partially_segmented, solve_partially_segmented_with,
    GaussSeidelOptions, GaussSeidelOutcome, PartialMethod,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    ScalarRoot,
    FixedPoint,
    PoincareMiranda,
    MultistartNewton,
    ClosedForm,
}

impl SolveMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveMethod::ScalarRoot => "scalar-root",
            SolveMethod::FixedPoint => "fixed-point",
            SolveMethod::PoincareMiranda => "poincare-miranda",
            SolveMethod::MultistartNewton => "multistart-newton",
            SolveMethod::ClosedForm => "closed-form",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadySolution {
    pub state: StateDistribution,
    /// Sup-norm of the full mean-field drift at `state`.
    pub residual_inf_norm: f64,
    pub method: SolveMethod,
    /// Volume of the box whose faces certified around the zero, when one did.
    pub certified_box_volume: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolverError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("tolerance {tol:e} must be positive and finite")]
    InvalidTolerance { tol: f64 },
    #[error(
        "tolerance {tol:e} is below the floating-point resolution {resolution:e} of the bracket"
    )]
    ToleranceUnreachable { tol: f64, resolution: f64 },
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error(transparent)]
    Miranda(#[from] MirandaError),
}

fn check_tol(tol: f64) -> Result<(), SolverError> {
    if tol.is_finite() && tol > 0.0 {
        Ok(())
    } else {
        Err(SolverError::InvalidTolerance { tol })
    }
}
