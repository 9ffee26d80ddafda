//! Many-body initial states built from mean-field amplitudes.

use std::f64::consts::TAU;
use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::error::StateError;
use crate::fock::FockBasis;
use crate::jump::ManyBodyState;
use crate::meanfield::ModeAmplitudes;
use crate::observables::BlochFrame;

const NORM_TOL: f64 = 1e-10;
const CANCELLATION: f64 = 1e-8;

/// All `N0` particles in the single-particle state `c1|1⟩ + c2|2⟩`:
/// amplitude `√binom(N0, m) c1^{N0−m} c2^m` on `|N0 − m, m⟩`.
pub fn embed_mean_field(c: &ModeAmplitudes, n0: usize, basis: &Arc<FockBasis>) -> Result<ManyBodyState, StateError> {
    if n0 > basis.n_max() {
        return Err(StateError::ExceedsCutoff { n0, n_max: basis.n_max() });
    }
    let norm = c.norm_sqr();
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(StateError::NotNormalized(norm));
    }

    // ln k! for k = 0..=n0; amplitudes are assembled in log space
    let mut ln_fact = vec![0.0f64; n0 + 1];
    for k in 1..=n0 {
        ln_fact[k] = ln_fact[k - 1] + (k as f64).ln();
    }
    let (r1, r2) = (c.c1.norm(), c.c2.norm());
    let (p1, p2) = (c.c1.arg(), c.c2.arg());
    let log_pow = |r: f64, e: usize| if e == 0 { 0.0 } else { e as f64 * r.ln() };

    let mut amplitudes = vec![C64::new(0.0, 0.0); basis.dim()];
    for m in 0..=n0 {
        let e1 = n0 - m;
        if (e1 > 0 && r1 == 0.0) || (m > 0 && r2 == 0.0) {
            continue;
        }
        let log_mag = 0.5 * (ln_fact[n0] - ln_fact[m] - ln_fact[e1]) + log_pow(r1, e1) + log_pow(r2, m);
        let phase = e1 as f64 * p1 + m as f64 * p2;
        let k = basis.index_of(e1, m).expect("n0 within cutoff");
        amplitudes[k] = C64::from_polar(log_mag.exp(), phase);
    }
    Ok(ManyBodyState::new(basis.clone(), amplitudes))
}

/// `cos θ |ψ_g⟩ + sin θ |ψ_e⟩`, renormalized.
///
/// For `γ ≠ 0` the two stationary states are not orthogonal, so `cos² θ` is
/// not an occupation probability.
pub fn superposition(psi_g: &ManyBodyState, psi_e: &ManyBodyState, theta: f64) -> Result<ManyBodyState, StateError> {
    if psi_g.basis() != psi_e.basis() {
        return Err(StateError::BasisMismatch);
    }
    let (a, b) = (theta.cos(), theta.sin());
    let amps: Vec<C64> = psi_g.amplitudes().iter().zip(psi_e.amplitudes()).map(|(g, e)| g * a + e * b).collect();
    let norm = amps.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if norm < CANCELLATION {
        return Err(StateError::Cancellation(norm));
    }
    Ok(ManyBodyState::new(psi_g.basis().clone(), amps.into_iter().map(|v| v / norm).collect()))
}

/// Mean-field counterpart of [`superposition`] with the same `θ` convention.
pub fn mean_field_superposition(
    c_g: &ModeAmplitudes,
    c_e: &ModeAmplitudes,
    theta: f64,
) -> Result<ModeAmplitudes, StateError> {
    let mixed = c_g.scale(C64::new(theta.cos(), 0.0)).add(&c_e.scale(C64::new(theta.sin(), 0.0)));
    let norm = mixed.norm_sqr().sqrt();
    if norm < CANCELLATION {
        return Err(StateError::Cancellation(norm));
    }
    Ok(mixed.normalized())
}

/// Normalized state whose Bloch vector is `(sin φ, 0, cos φ)`: polar angle `φ`
/// on the xz great circle, measured from the north pole (`e1`).
pub fn great_circle_state(frame: &BlochFrame, phi: f64) -> ModeAmplitudes {
    let half = 0.5 * phi;
    frame.e1.scale(C64::new(half.cos(), 0.0)).add(&frame.e2.scale(C64::new(half.sin(), 0.0)))
}

/// `count` evenly spaced polar angles on the great circle, starting at the north pole.
pub fn great_circle_angles(count: usize) -> Vec<f64> {
    (0..count).map(|k| TAU * k as f64 / count as f64).collect()
}
