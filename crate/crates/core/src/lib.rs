//! Exact classical evaluation of the variational quantum circuit that alternates
//! transverse-field and Ising layers on a periodic chain.
//!
//! The state after any sequence of `X`, `ZZ` and `YY` layers stays a fermionic
//! coherent state, so every momentum pair `(k, -k)` carries a two-component
//! amplitude that evolves independently. From those amplitudes the crate builds
//! energies, ground-state overlaps, X-magnetization and correlations, and the
//! order parameter as a Fredholm determinant, all in time polynomial in the
//! circuit depth. A dense statevector simulator in [`oracle`] certifies the
//! closed forms at small sizes.
//!
//! Module map:
//! - [`model`]: dispersion, Bogoliubov angles, momentum grids, reference values.
//! - [`coherent`]: gate sequences and per-momentum amplitude evolution.
//! - [`observables`]: energy, gradient, overlap, `m_X`, `m_XX`.
//! - [`fredholm`]: principal-value quadrature and the `m_Z` determinant.
//! - [`optimizer`]: BFGS, multi-start search, branch census, preparation time.
//! - [`oracle`]: brute-force statevector and ground-state reference.
//! - [`experiments`]: sweeps, scaling fits, collapse, exact preparation, quenches.

pub mod coherent;
pub mod error;
pub mod experiments;
pub mod fredholm;
pub mod model;
pub mod observables;
pub mod optimizer;
pub mod oracle;
pub mod quadrature;

pub use num_complex::Complex64;

pub use coherent::{
    AmplitudeTrajectory, AngleSchedule, Gate, GateKind, GateSequence, InitialState, PairMap,
    ProjectiveAmplitude,
};
pub use error::{Error, Result};
pub use fredholm::{MagnetizationZ, QuadratureGrid};
pub use model::{Field, MomentumGrid, Sector};
pub use observables::ObservableReport;
pub use optimizer::{BranchCensus, OptimizationResult};
