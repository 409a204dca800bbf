//! Multi-asset over-the-counter market models: mean-field dynamics, steady
//! states, box-subdivision zero localisation and finite-population
//! simulation.

pub mod io;
pub mod miranda;
pub mod models;
pub mod ode;
pub mod sim;
pub mod steady;

pub use miranda::{
    check_faces, iterations_needed, refine, FaceCertificate, RefineOptions, SearchBox,
};
pub use models::{
    HeterogeneousParams, MarketModel, ModelClass, ModelError, ModelParams, NonSegmentedParams,
    PartiallySegmentedParams, StateDistribution, TransitionKernel,
};
pub use ode::{integrate, relax_to_steady, RelaxationReport, Trajectory};
