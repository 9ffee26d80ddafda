use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FockError {
    #[error("invalid site index {0}, expected 1 or 2")]
    InvalidSite(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("initial particle number must be at least 1, got {0}")]
    ParticleNumber(usize),
    #[error("rate {name} must be finite and non-negative, got {value}")]
    Rate { name: &'static str, value: f64 },
    #[error("parameter {name} must be finite, got {value}")]
    NotFinite { name: &'static str, value: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LindbladError {
    #[error("dimension mismatch: state has {state}, operators have {operator}")]
    DimensionMismatch { state: usize, operator: usize },
    #[error("time grid must start at 0 and increase strictly")]
    BadTimeGrid,
    #[error("step size must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("non-physical density matrix at t = {t}: minimum eigenvalue {min_eigenvalue:.3e}")]
    NonPhysical { t: f64, min_eigenvalue: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JumpError {
    #[error("state is not normalized (norm² = {0})")]
    NotNormalized(f64),
    #[error("number of trajectories must be at least 1")]
    NoTrajectories,
    #[error("time grid must start at 0 and increase strictly")]
    BadTimeGrid,
    #[error("step size must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("gain jump at t = {t} would leave the basis (cutoff n_max = {n_max})")]
    Truncation { t: f64, n_max: usize },
    #[error("{aborted} of {n_traj} trajectories aborted at the basis cutoff (first: {first})")]
    EnsembleTruncation { aborted: usize, n_traj: usize, first: Box<JumpError> },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeanFieldError {
    #[error("no PT-symmetric stationary state for |gamma| = {0} > 2")]
    BrokenSymmetry(f64),
    #[error("time grid must start at 0 and increase strictly")]
    BadTimeGrid,
    #[error("step size must be positive and finite, got {0}")]
    BadStep(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("particle number {n0} exceeds basis cutoff {n_max}")]
    ExceedsCutoff { n0: usize, n_max: usize },
    #[error("amplitudes are not normalized (norm² = {0})")]
    NotNormalized(f64),
    #[error("superposition cancels (norm = {0:e})")]
    Cancellation(f64),
    #[error("states live in different bases")]
    BasisMismatch,
}
