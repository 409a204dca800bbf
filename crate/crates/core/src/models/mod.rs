//! Parameter and state types for the three market classes, together with
//! their mean-field right-hand sides and per-investor transition kernels.
//!
//! State vectors use a fixed ordering per class:
//!
//! * non-segmented: `(h,n), (l,n), (h1,o), (l1,o), ..., (hK,o), (lK,o)`
//! * partially segmented: `(h1,n), ..., (hK,n), (l,n), (h1,o), (l1,o), ..., (hK,o), (lK,o)`
//! * heterogeneous: `(h,0), (h,1), (h,2), (l,0), (l,1), (l,2)`, i.e. `x, y, z, u, v, w`
//!
//! For `K = 1` the first two orderings coincide, which is what makes the
//! one-asset equivalence between the two classes a plain vector comparison.

pub(crate) mod heterogeneous;
mod kernel;
mod nonsegmented;
mod partially_segmented;

use serde::{Deserialize, Serialize};
use std::fmt;

pub use heterogeneous::HeterogeneousParams;
pub use kernel::{Transition, TransitionKernel};
pub use nonsegmented::NonSegmentedParams;
pub use partially_segmented::PartiallySegmentedParams;

/// Tolerance used when checking that a state satisfies the linear constraints.
pub const STATE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("asset masses sum to {0}, must be < 1")]
    MassOverflow(f64),
    #[error("rate `{name}` = {value} must be strictly positive")]
    NonPositiveRate { name: String, value: f64 },
    #[error("rate `{name}` = {value} must be finite and non-negative")]
    NegativeRate { name: String, value: f64 },
    #[error("asset mass m_{index} = {value} must be strictly positive")]
    NonPositiveMass { index: usize, value: f64 },
    #[error("split probabilities a = {a}, b = {b} must be non-negative and sum to 1")]
    SplitNotUnit { a: f64, b: f64 },
    #[error("asset supply s = {0} outside [0, 2]")]
    SupplyOutOfRange(f64),
    #[error("all switching rates are zero")]
    DegenerateSwitching,
    #[error("expected {expected} components, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("state belongs to the {actual} class, model is {expected}")]
    ClassMismatch {
        expected: ModelClass,
        actual: ModelClass,
    },
    #[error("invalid state: {0}")]
    InvalidState(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelClass {
    NonSegmented,
    PartiallySegmented,
    Heterogeneous,
}

impl ModelClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelClass::NonSegmented => "non-segmented",
            ModelClass::PartiallySegmented => "partially-segmented",
            ModelClass::Heterogeneous => "heterogeneous",
        }
    }
}

impl fmt::Display for ModelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `coeffs · mu = target`, one row of the model's linear constraint system.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub name: String,
    pub coeffs: Vec<f64>,
    pub target: f64,
}

impl LinearConstraint {
    pub fn value(&self, mu: &[f64]) -> f64 {
        self.coeffs.iter().zip(mu).map(|(c, x)| c * x).sum()
    }

    pub fn violation(&self, mu: &[f64]) -> f64 {
        (self.value(mu) - self.target).abs()
    }
}

/// Behaviour shared by the three market classes.
pub trait MarketModel: Send + Sync {
    fn class(&self) -> ModelClass;

    fn dim(&self) -> usize;

    /// Column names in the fixed state ordering.
    fn state_labels(&self) -> Vec<String>;

    /// Mean-field drift written into `out`. Both slices must have length
    /// [`MarketModel::dim`].
    fn rhs_into(&self, mu: &[f64], out: &mut [f64]);

    /// Total mass plus the model-specific conservation laws.
    fn linear_constraints(&self) -> Vec<LinearConstraint>;

    /// Per-investor transition rates evaluated at `mu`.
    fn kernel_at(&self, mu: &[f64]) -> TransitionKernel;

    /// Checked drift evaluation.
    fn rhs(&self, mu: &StateDistribution) -> Result<Vec<f64>, ModelError> {
        self.check_shape(mu)?;
        let mut out = vec![0.0; self.dim()];
        self.rhs_into(&mu.values, &mut out);
        Ok(out)
    }

    fn kernel(&self, mu: &StateDistribution) -> Result<TransitionKernel, ModelError> {
        self.check_shape(mu)?;
        Ok(self.kernel_at(&mu.values))
    }

    fn check_shape(&self, mu: &StateDistribution) -> Result<(), ModelError> {
        if mu.class != self.class() {
            return Err(ModelError::ClassMismatch {
                expected: self.class(),
                actual: mu.class,
            });
        }
        if mu.values.len() != self.dim() {
            return Err(ModelError::DimensionMismatch {
                expected: self.dim(),
                actual: mu.values.len(),
            });
        }
        Ok(())
    }

    /// Shape, range and constraint check of `mu` against this model.
    fn check_state(&self, mu: &StateDistribution) -> Result<(), ModelError> {
        self.check_shape(mu)?;
        for (label, &v) in self.state_labels().iter().zip(&mu.values) {
            if !v.is_finite() || !(-STATE_TOLERANCE..=1.0 + STATE_TOLERANCE).contains(&v) {
                return Err(ModelError::InvalidState(format!(
                    "{label} = {v} outside [0, 1]"
                )));
            }
        }
        for c in self.linear_constraints() {
            let gap = c.violation(&mu.values);
            if gap > STATE_TOLERANCE {
                return Err(ModelError::InvalidState(format!(
                    "constraint `{}` violated by {gap:e}",
                    c.name
                )));
            }
        }
        Ok(())
    }

    /// Largest absolute deviation of any linear constraint from its target.
    fn constraint_drift(&self, mu: &[f64]) -> f64 {
        self.linear_constraints()
            .iter()
            .map(|c| c.violation(mu))
            .fold(0.0, f64::max)
    }

    fn residual_inf_norm(&self, mu: &[f64]) -> f64 {
        let mut out = vec![0.0; self.dim()];
        self.rhs_into(mu, &mut out);
        inf_norm(&out)
    }
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// A probability vector over a model's state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDistribution {
    pub class: ModelClass,
    pub values: Vec<f64>,
}

impl StateDistribution {
    pub fn new(class: ModelClass, values: Vec<f64>) -> Self {
        Self { class, values }
    }

    /// Validating constructor.
    pub fn for_model<M: MarketModel + ?Sized>(
        model: &M,
        values: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let mu = Self::new(model.class(), values);
        model.check_state(&mu)?;
        Ok(mu)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Any of the three parameter sets, tagged by class. This is the form used
/// in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum ModelParams {
    NonSegmented(NonSegmentedParams),
    PartiallySegmented(PartiallySegmentedParams),
    Heterogeneous(HeterogeneousParams),
}

impl ModelParams {
    /// Strict validation: every invariant of the parameter type.
    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            ModelParams::NonSegmented(p) => p.validate(),
            ModelParams::PartiallySegmented(p) => p.validate(),
            ModelParams::Heterogeneous(p) => p.validate(),
        }
    }

    /// Structural validation only; zero rates are allowed.
    pub fn check_structure(&self) -> Result<(), ModelError> {
        match self {
            ModelParams::NonSegmented(p) => p.check_structure(),
            ModelParams::PartiallySegmented(p) => p.check_structure(),
            ModelParams::Heterogeneous(p) => p.check_structure(),
        }
    }

    fn inner(&self) -> &dyn MarketModel {
        match self {
            ModelParams::NonSegmented(p) => p,
            ModelParams::PartiallySegmented(p) => p,
            ModelParams::Heterogeneous(p) => p,
        }
    }

    /// Copy of these parameters whose conserved quantities (asset masses,
    /// supply) are read off `mu` instead. Used to pair a finite population,
    /// whose masses are rounded to multiples of `1/N`, with its own
    /// mean-field limit.
    pub fn recalibrated_to(&self, mu: &[f64]) -> ModelParams {
        match self {
            ModelParams::NonSegmented(p) => {
                let mut q = p.clone();
                for i in 0..q.k() {
                    q.m[i] = mu[2 + 2 * i] + mu[3 + 2 * i];
                }
                ModelParams::NonSegmented(q)
            }
            ModelParams::PartiallySegmented(p) => {
                let mut q = p.clone();
                let k = q.k();
                for i in 0..k {
                    q.m[i] = mu[k + 1 + 2 * i] + mu[k + 2 + 2 * i];
                }
                ModelParams::PartiallySegmented(q)
            }
            ModelParams::Heterogeneous(p) => {
                let mut q = p.clone();
                q.s = mu[1] + mu[4] + 2.0 * (mu[2] + mu[5]);
                ModelParams::Heterogeneous(q)
            }
        }
    }
}

impl MarketModel for ModelParams {
    fn class(&self) -> ModelClass {
        self.inner().class()
    }
    fn dim(&self) -> usize {
        self.inner().dim()
    }
    fn state_labels(&self) -> Vec<String> {
        self.inner().state_labels()
    }
    fn rhs_into(&self, mu: &[f64], out: &mut [f64]) {
        self.inner().rhs_into(mu, out)
    }
    fn linear_constraints(&self) -> Vec<LinearConstraint> {
        self.inner().linear_constraints()
    }
    fn kernel_at(&self, mu: &[f64]) -> TransitionKernel {
        self.inner().kernel_at(mu)
    }
}

pub(crate) fn require_positive(name: &str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ModelError::NonPositiveRate {
            name: name.to_string(),
            value,
        })
    }
}

pub(crate) fn require_non_negative(name: &str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(ModelError::NegativeRate {
            name: name.to_string(),
            value,
        })
    }
}

pub(crate) fn require_len(expected: usize, actual: usize) -> Result<(), ModelError> {
    if expected == actual {
        Ok(())
    } else {
        Err(ModelError::DimensionMismatch { expected, actual })
    }
}

/// Checks asset masses: each strictly positive, total strictly below one.
pub(crate) fn check_masses(m: &[f64]) -> Result<(), ModelError> {
    for (index, &value) in m.iter().enumerate() {
        if !(value.is_finite() && value > 0.0) {
            return Err(ModelError::NonPositiveMass {
                index: index + 1,
                value,
            });
        }
    }
    let total: f64 = m.iter().sum();
    if total >= 1.0 {
        return Err(ModelError::MassOverflow(total));
    }
    Ok(())
}

/// Public entry points mirroring the per-class drift operations.
pub fn rhs_nonsegmented(
    params: &NonSegmentedParams,
    mu: &StateDistribution,
) -> Result<Vec<f64>, ModelError> {
    params.rhs(mu)
}

pub fn rhs_partially_segmented(
    params: &PartiallySegmentedParams,
    mu: &StateDistribution,
) -> Result<Vec<f64>, ModelError> {
    params.rhs(mu)
}

pub fn rhs_heterogeneous(
    params: &HeterogeneousParams,
    mu: &StateDistribution,
) -> Result<Vec<f64>, ModelError> {
    params.rhs(mu)
}
