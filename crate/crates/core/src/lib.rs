//! Mean-field particle approximation of density-dependent SDEs driven by
//! isotropic α-stable noise on a periodic box.
//!
//! The particle system regularizes the density dependence with a compactly
//! supported mollifier whose width shrinks like `N^{-theta}`; the limit law is
//! the solution of a fractional Fokker–Planck equation, computed spectrally.

pub mod drift;
pub mod error;
pub mod error_metrics;
pub mod experiment;
pub mod fpe_solver;
pub mod grid;
pub mod initial;
pub mod mollifier;
pub mod particle_system;
pub mod quad;
pub mod rng;
pub mod stable_noise;

pub use drift::{DriftKind, DriftSpec};
pub use error::{Error, Result};
pub use error_metrics::{ErrorKind, ErrorRecord, RateFit};
pub use fpe_solver::{DensityPath, FpeConfig};
pub use grid::{GridField, GridSpec};
pub use initial::InitialDensity;
pub use mollifier::{MollifierKernel, ParticleEnsemble};
pub use particle_system::{SimulationOutput, SimulationPlan};
pub use rng::StreamFactory;
pub use stable_noise::StableNoiseConfig;
