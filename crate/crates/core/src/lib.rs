//! Identification of distribution-grid admittance matrices from noisy
//! phasor measurements.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`]: topologies, admittance matrices, Kron reduction and file formats.
//! * [`signal`]: polar measurement noise, its Cartesian moments, block
//!   covariances and preprocessing (debiasing, filtering, centering).
//! * [`vectorize`]: real stacking of complex quantities and the reduction
//!   maps that enforce symmetric Laplacian structure.
//! * [`estimators`]: OLS/TLS closed forms, the errors-in-variables likelihood,
//!   Fisher information and the catalogue of generalized-lasso priors.
//! * [`solvers`]: block coordinate descent, broken adaptive ridge and ADMM for
//!   the maximum-a-posteriori problem.
//! * [`simulator`]: synthetic feeders, load profiles, power flow and the
//!   end-to-end measurement scenario.

pub mod error;
pub mod estimators;
pub mod grid;
pub(crate) mod linalg;
pub mod signal;
pub mod simulator;
pub mod solvers;
pub mod vectorize;

pub use error::{Error, Result};
pub use estimators::{EstimationResult, PriorStack, PriorTerm};
pub use grid::{AdmittanceMatrix, GridTopology, LineSpec};
pub use signal::{Measurements, NoiseSpec, PhasorSeries, PolarNoise};
pub use simulator::{Scenario, ScenarioOutput};
pub use solvers::{Algorithm, SolverConfig, SolverTrace};
pub use vectorize::ReductionMap;

pub use num_complex::Complex64;
