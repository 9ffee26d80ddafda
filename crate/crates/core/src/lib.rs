//! Two-site Bose-Hubbard model with particle loss on site 1 and gain on site 2.
//!
//! Three levels of description are provided:
//!
//! * [`lindblad`]: the exact master equation on a truncated Fock space,
//! * [`jump`]: its quantum-jump unraveling into stochastic pure-state trajectories,
//! * [`meanfield`]: the PT-symmetric Gross-Pitaevskii limit.
//!
//! [`states`] builds many-body initial states from mean-field amplitudes and
//! [`observables`] evaluates populations, covariances and Bloch vectors.

pub mod cli;
pub mod error;
pub mod fock;
pub mod grid;
pub mod jump;
pub mod lindblad;
pub mod meanfield;
pub mod observables;
pub mod states;

pub use num_complex::Complex64 as C64;

pub use error::{FockError, JumpError, LindbladError, MeanFieldError, ParamError, StateError};
pub use fock::{FockBasis, Site, SparseOperator};
pub use jump::{ensemble_average, EnsembleSeries, JumpOptions, ManyBodyState, TrajectoryEngine};
pub use lindblad::{DensityMatrix, DimerParams, Lindbladian, MasterOptions};
pub use meanfield::{GpeOptions, ModeAmplitudes, StationaryStates};
pub use observables::{BlochFrame, BlochSample, QuantumState};
