pub mod config;
pub mod drift;
pub mod error;
pub mod fieldio;
pub mod grid;
pub mod orlicz;
pub mod sde;
pub mod solver;
pub mod spectral;
pub mod verify;

pub use config::ExperimentConfig;
pub use drift::{DriftSpec, FormBoundCertificate, FormBoundOutcome};
pub use error::{Error, Result};
pub use grid::{ScalarField, TorusGrid, VectorField};
pub use orlicz::OrliczNorm;
pub use sde::{HittingStats, SdeConfig};
pub use solver::{SolverConfig, Trajectory};
pub use verify::{ToleranceTier, VerificationReport};
