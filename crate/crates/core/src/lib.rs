//! Numerical engine for phonon-laser arrays in locally driven spin chains:
//! exact Lindblad dynamics of the minimal spin-mechanical system, effective
//! blue-sideband Hamiltonians, mean-field kinetic equations for N-site
//! arrays, and the diagnostic suite (phonon number, g²(0), Wigner maps,
//! emission spectra, lasing thresholds, synchronization metrics).
//!
//! ħ = 1; every frequency and time is expressed in units of the reference
//! frequency ω̄.

pub mod error;
pub mod hilbert;
pub mod lindblad;
pub mod meanfield;
pub mod model;
pub mod observables;
pub mod presets;
pub mod sweep;

pub use error::{Error, Result};
pub use hilbert::{DensityMatrix, Operator, SpaceLayout, Subsystem, SubsystemKind};
pub use lindblad::{DissipatorSet, IntegrationSpec, TrajectoryRecord};
pub use model::{
    BondParams, ChainConfig, ChainLayout, DrivenHamiltonian, LocalDriveParams,
    ResonanceCase, SiteParams,
};
