//! Dense Lindblad master equation for the dimer with loss on site 1 and gain
//! on site 2:
//!
//! ```text
//! dρ/dt = −i[H, ρ]
//!         − (γ_loss/2)(a1†a1 ρ + ρ a1†a1 − 2 a1 ρ a1†)
//!         − (γ_gain/2)(a2 a2† ρ + ρ a2 a2† − 2 a2† ρ a2)
//! ```
//!
//! The density matrix is stored densely, so this is meant for small bases
//! (a few hundred states). It is the reference the trajectory code is
//! checked against.
//!
//! Truncation: `a2 a2†` is taken as the exact `n2 + 1` while the sandwich
//! `a2† ρ a2` drops elements leaving the cutoff. Probability on the top shell
//! therefore leaks out at rate `γ_gain (n2 + 1)`, which is what the top-shell
//! diagnostic measures.

use std::ops::Range;
use std::sync::Arc;

use log::warn;
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{LindbladError, ParamError};
use crate::fock::{self, FockBasis, Site, SparseOperator};
use crate::grid::StepPlan;
use crate::jump::ManyBodyState;
use crate::meanfield;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Top-shell population above which a run is reported as truncation-affected.
pub const TRUNCATION_WARN: f64 = 1e-6;

/// Model parameters: on-site interaction `U`, loss rate on site 1, gain rate
/// on site 2 and the initial particle number `N0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimerParams {
    pub u: f64,
    pub gamma_loss: f64,
    pub gamma_gain: f64,
    pub n0: usize,
}

impl DimerParams {
    pub fn new(u: f64, gamma_loss: f64, gamma_gain: f64, n0: usize) -> Result<Self, ParamError> {
        if n0 < 1 {
            return Err(ParamError::ParticleNumber(n0));
        }
        if !u.is_finite() {
            return Err(ParamError::NotFinite { name: "U", value: u });
        }
        for (name, value) in [("gamma_loss", gamma_loss), ("gamma_gain", gamma_gain)] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(ParamError::Rate { name, value });
            }
        }
        Ok(Self { u, gamma_loss, gamma_gain, n0 })
    }

    /// Loss rate `gamma`, gain rate fixed by [`balanced_gain_rate`].
    pub fn balanced(u: f64, gamma: f64, n0: usize) -> Result<Self, ParamError> {
        let gain = balanced_gain_rate(gamma, n0)?;
        Self::new(u, gamma, gain, n0)
    }

    /// Balanced parameters from the macroscopic interaction `g = (N0 − 1) U`.
    pub fn balanced_with_g(g: f64, gamma: f64, n0: usize) -> Result<Self, ParamError> {
        Self::balanced(meanfield::interaction_from_g(g, n0), gamma, n0)
    }

    pub fn g(&self) -> f64 {
        meanfield::macroscopic_g(self.u, self.n0)
    }
}

/// `γ_gain = γ_loss · N0 / (N0 + 2)`: first-order gain and loss cancel for a
/// state with half the particles on each site.
pub fn balanced_gain_rate(gamma_loss: f64, n0: usize) -> Result<f64, ParamError> {
    if n0 < 1 {
        return Err(ParamError::ParticleNumber(n0));
    }
    let n = n0 as f64;
    Ok(gamma_loss * n / (n + 2.0))
}

/// `⟨N(t)⟩ = N0' e^{−γ t}` for a single site with loss only.
pub fn single_site_loss_n(n0p: usize, gamma_loss: f64, t: f64) -> f64 {
    n0p as f64 * (-gamma_loss * t).exp()
}

/// `⟨N(t)⟩ = N0' [(1 + 1/N0') e^{γ t} − 1/N0']` for a single site with gain only.
///
/// Written as `(N0' + 1) e^{γ t} − 1`, which is also the `N0' = 0` limit.
pub fn single_site_gain_n(n0p: usize, gamma_gain: f64, t: f64) -> f64 {
    (n0p as f64 + 1.0) * (gamma_gain * t).exp() - 1.0
}

/// Density matrix over a two-site Fock basis.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    basis: Arc<FockBasis>,
    rho: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn new(basis: Arc<FockBasis>, rho: DMatrix<C64>) -> Result<Self, LindbladError> {
        if rho.nrows() != basis.dim() || rho.ncols() != basis.dim() {
            return Err(LindbladError::DimensionMismatch { state: rho.nrows(), operator: basis.dim() });
        }
        Ok(Self { basis, rho })
    }

    /// `|ψ⟩⟨ψ|`
    pub fn pure(state: &ManyBodyState) -> Self {
        let v = nalgebra::DVector::from_column_slice(state.amplitudes());
        let rho = &v * v.adjoint();
        Self { basis: state.basis().clone(), rho }
    }

    /// `|n1, n2⟩⟨n1, n2|`
    pub fn fock(basis: Arc<FockBasis>, n1: usize, n2: usize) -> Option<Self> {
        let k = basis.index_of(n1, n2)?;
        let mut rho = DMatrix::zeros(basis.dim(), basis.dim());
        rho[(k, k)] = C64::new(1.0, 0.0);
        Some(Self { basis, rho })
    }

    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.rho
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.rho
    }

    pub fn trace(&self) -> C64 {
        self.rho.trace()
    }

    /// Largest `|ρ[r,c] − conj(ρ[c,r])|`.
    pub fn hermiticity_error(&self) -> f64 {
        hermiticity_error(&self.rho)
    }

    /// Probability carried by the shell `N = n_max`.
    pub fn top_shell_population(&self) -> f64 {
        self.basis.top_shell().map(|k| self.rho[(k, k)].re).sum()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.rho, &shell_sectors(&self.basis))
    }
}

/// `tr(op · ρ)`
pub fn expectation(rho: &DensityMatrix, op: &SparseOperator) -> C64 {
    trace_product(op, &rho.rho)
}

/// `tr(op · ρ)` on raw matrices.
pub fn trace_product(op: &SparseOperator, rho: &DMatrix<C64>) -> C64 {
    assert_eq!(op.dim(), rho.nrows(), "dimension mismatch");
    op.entries().map(|(r, c, v)| v * rho[(c, r)]).sum()
}

pub fn hermiticity_error(m: &DMatrix<C64>) -> f64 {
    let d = m.nrows();
    let mut worst: f64 = 0.0;
    for c in 0..d {
        for r in 0..=c {
            worst = worst.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    worst
}

fn shell_sectors(basis: &FockBasis) -> Vec<Range<usize>> {
    (0..=basis.n_max()).map(|n| basis.shell_range(n)).collect()
}

/// Smallest eigenvalue of a Hermitian matrix. When the matrix is block
/// diagonal over `sectors` the blocks are diagonalized separately.
pub fn min_eigenvalue(m: &DMatrix<C64>, sectors: &[Range<usize>]) -> f64 {
    let d = m.nrows();
    let mut owner = vec![0usize; d];
    for (s, range) in sectors.iter().enumerate() {
        for k in range.clone() {
            owner[k] = s;
        }
    }
    let block_diagonal = (0..d).all(|c| (0..d).all(|r| owner[r] == owner[c] || m[(r, c)] == ZERO));
    let hermitian_min = |block: DMatrix<C64>| -> f64 {
        let h = (&block + block.adjoint()) * C64::new(0.5, 0.0);
        h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    };
    if block_diagonal && !sectors.is_empty() {
        sectors
            .iter()
            .filter(|r| !r.is_empty())
            .map(|r| {
                if r.len() == 1 {
                    m[(r.start, r.start)].re
                } else {
                    hermitian_min(m.view((r.start, r.start), (r.len(), r.len())).into_owned())
                }
            })
            .fold(f64::INFINITY, f64::min)
    } else {
        hermitian_min(m.clone())
    }
}

/// One dissipative channel `rate · (J ρ J† − ½{D, ρ})` with `D` diagonal.
///
/// `D` is supplied explicitly instead of computed as `J†J` so the truncated
/// basis keeps the exact anticommutator.
#[derive(Debug, Clone)]
pub struct DissipationChannel {
    pub rate: f64,
    pub jump: SparseOperator,
    pub decay: Vec<f64>,
}

/// Generator of the master equation on a finite basis.
#[derive(Debug, Clone)]
pub struct Lindbladian {
    hamiltonian: SparseOperator,
    channels: Vec<DissipationChannel>,
    sectors: Vec<Range<usize>>,
    top: Option<Range<usize>>,
}

impl Lindbladian {
    pub fn new(
        hamiltonian: SparseOperator,
        channels: Vec<DissipationChannel>,
        sectors: Vec<Range<usize>>,
        top: Option<Range<usize>>,
    ) -> Self {
        let d = hamiltonian.dim();
        assert!(channels.iter().all(|c| c.jump.dim() == d && c.decay.len() == d));
        Self { hamiltonian, channels, sectors, top }
    }

    /// Bose-Hubbard dimer with loss on site 1 and gain on site 2.
    pub fn dimer(basis: &FockBasis, params: &DimerParams) -> Self {
        Self::dimer_with_hamiltonian(basis, fock::hamiltonian(basis, params.u), params)
    }

    /// Dimer dissipators around a caller-supplied Hamiltonian (e.g. without hopping).
    pub fn dimer_with_hamiltonian(basis: &FockBasis, hamiltonian: SparseOperator, params: &DimerParams) -> Self {
        let loss = DissipationChannel {
            rate: params.gamma_loss,
            jump: fock::annihilation(basis, Site::One),
            decay: basis.states().iter().map(|&(n1, _)| n1 as f64).collect(),
        };
        let gain = DissipationChannel {
            rate: params.gamma_gain,
            jump: fock::creation(basis, Site::Two),
            decay: basis.states().iter().map(|&(_, n2)| n2 as f64 + 1.0).collect(),
        };
        Self::new(hamiltonian, vec![loss, gain], shell_sectors(basis), Some(basis.top_shell()))
    }

    /// A single mode with loss only, truncated at `n_max` quanta.
    pub fn single_mode_loss(n_max: usize, gamma: f64) -> Self {
        let (lower, _) = fock::single_mode_ladder(n_max);
        let channel = DissipationChannel { rate: gamma, jump: lower, decay: (0..=n_max).map(|n| n as f64).collect() };
        // loss never populates the cutoff from below, so there is no leakage to report
        Self::single_mode(n_max, channel, None)
    }

    /// A single mode with gain only, truncated at `n_max` quanta.
    pub fn single_mode_gain(n_max: usize, gamma: f64) -> Self {
        let (_, raise) = fock::single_mode_ladder(n_max);
        let channel =
            DissipationChannel { rate: gamma, jump: raise, decay: (0..=n_max).map(|n| n as f64 + 1.0).collect() };
        Self::single_mode(n_max, channel, Some(n_max..n_max + 1))
    }

    fn single_mode(n_max: usize, channel: DissipationChannel, top: Option<Range<usize>>) -> Self {
        let h = SparseOperator::from_triplets(n_max + 1, Vec::new(), true);
        let sectors = (0..=n_max).map(|n| n..n + 1).collect();
        Self::new(h, vec![channel], sectors, top)
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn hamiltonian(&self) -> &SparseOperator {
        &self.hamiltonian
    }

    pub fn channels(&self) -> &[DissipationChannel] {
        &self.channels
    }

    /// Population of the cutoff sector, zero if there is none.
    pub fn top_population(&self, rho: &DMatrix<C64>) -> f64 {
        self.top.as_ref().map_or(0.0, |r| r.clone().map(|k| rho[(k, k)].re).sum())
    }

    pub fn min_eigenvalue(&self, rho: &DMatrix<C64>) -> f64 {
        min_eigenvalue(rho, &self.sectors)
    }

    /// `dρ/dt`
    pub fn apply(&self, rho: &DMatrix<C64>) -> Result<DMatrix<C64>, LindbladError> {
        let d = self.dim();
        if rho.nrows() != d || rho.ncols() != d {
            return Err(LindbladError::DimensionMismatch { state: rho.nrows(), operator: d });
        }
        let mut out = DMatrix::zeros(d, d);
        self.apply_into(rho, &mut out);
        Ok(out)
    }

    fn apply_into(&self, rho: &DMatrix<C64>, out: &mut DMatrix<C64>) {
        let d = self.dim();
        let src = rho.as_slice();
        let dst = out.as_mut_slice();
        let minus_i = C64::new(0.0, -1.0);

        // −i H ρ, column by column
        for c in 0..d {
            let col = &src[c * d..(c + 1) * d];
            let out_col = &mut dst[c * d..(c + 1) * d];
            for r in 0..d {
                let mut acc = ZERO;
                for (k, v) in self.hamiltonian.row(r) {
                    acc += v * col[k];
                }
                out_col[r] = minus_i * acc;
            }
        }
        // +i ρ H: column c gathers ρ[:,k] H[k,c]
        let i = C64::new(0.0, 1.0);
        for (k, c, v) in self.hamiltonian.entries() {
            let f = i * v;
            for r in 0..d {
                dst[c * d + r] += f * src[k * d + r];
            }
        }

        let mut jr = vec![ZERO; d * d];
        for ch in &self.channels {
            if ch.rate == 0.0 {
                continue;
            }
            let half = 0.5 * ch.rate;
            for c in 0..d {
                for r in 0..d {
                    dst[c * d + r] -= src[c * d + r] * (half * (ch.decay[r] + ch.decay[c]));
                }
            }
            // jr = J ρ
            for c in 0..d {
                let col = &src[c * d..(c + 1) * d];
                for r in 0..d {
                    let mut acc = ZERO;
                    for (k, v) in ch.jump.row(r) {
                        acc += v * col[k];
                    }
                    jr[c * d + r] = acc;
                }
            }
            // out[:,c] += rate · (Jρ)[:,l] conj(J[c,l])
            for (c, l, v) in ch.jump.entries() {
                let f = v.conj() * ch.rate;
                for r in 0..d {
                    dst[c * d + r] += f * jr[l * d + r];
                }
            }
        }
    }

    /// RK4 integration of `rho0` over `t_grid`; `observe` sees the state at every grid time.
    pub fn integrate<F>(
        &self,
        rho0: DMatrix<C64>,
        t_grid: &[f64],
        opts: MasterOptions,
        mut observe: F,
    ) -> Result<TruncationReport, LindbladError>
    where
        F: FnMut(f64, &DMatrix<C64>),
    {
        if !(opts.dt > 0.0 && opts.dt.is_finite()) {
            return Err(LindbladError::BadStep(opts.dt));
        }
        let plan = StepPlan::new(t_grid, opts.dt).ok_or(LindbladError::BadTimeGrid)?;
        let d = self.dim();
        if rho0.nrows() != d || rho0.ncols() != d {
            return Err(LindbladError::DimensionMismatch { state: rho0.nrows(), operator: d });
        }
        let mut rho = rho0;
        let mut report = TruncationReport::default();
        self.checkpoint(0.0, &rho, opts, &mut report)?;
        observe(0.0, &rho);

        let mut k1 = DMatrix::zeros(d, d);
        let mut k2 = DMatrix::zeros(d, d);
        let mut k3 = DMatrix::zeros(d, d);
        let mut k4 = DMatrix::zeros(d, d);
        let mut stage = DMatrix::zeros(d, d);
        for (idx, (steps, h)) in plan.intervals().enumerate() {
            for _ in 0..steps {
                self.apply_into(&rho, &mut k1);
                axpy_into(&mut stage, &rho, 0.5 * h, &k1);
                self.apply_into(&stage, &mut k2);
                axpy_into(&mut stage, &rho, 0.5 * h, &k2);
                self.apply_into(&stage, &mut k3);
                axpy_into(&mut stage, &rho, h, &k3);
                self.apply_into(&stage, &mut k4);
                let w = h / 6.0;
                let r = rho.as_mut_slice();
                let (a, b, c, e) = (k1.as_slice(), k2.as_slice(), k3.as_slice(), k4.as_slice());
                for j in 0..r.len() {
                    r[j] += (a[j] + (b[j] + c[j]) * 2.0 + e[j]) * w;
                }
                hermitize(&mut rho);
                report.max_top_shell = report.max_top_shell.max(self.top_population(&rho));
            }
            let t = t_grid[idx + 1];
            self.checkpoint(t, &rho, opts, &mut report)?;
            observe(t, &rho);
        }
        if report.max_top_shell > TRUNCATION_WARN {
            warn!("top-shell population reached {:.3e}; results are affected by the cutoff", report.max_top_shell);
        }
        Ok(report)
    }

    fn checkpoint(
        &self,
        t: f64,
        rho: &DMatrix<C64>,
        opts: MasterOptions,
        report: &mut TruncationReport,
    ) -> Result<(), LindbladError> {
        report.max_top_shell = report.max_top_shell.max(self.top_population(rho));
        if opts.check_positivity {
            let min = self.min_eigenvalue(rho);
            report.min_eigenvalue = report.min_eigenvalue.min(min);
            if min < -opts.positivity_tolerance {
                return Err(LindbladError::NonPhysical { t, min_eigenvalue: min });
            }
        }
        Ok(())
    }
}

fn axpy_into(out: &mut DMatrix<C64>, x: &DMatrix<C64>, a: f64, y: &DMatrix<C64>) {
    for ((o, xv), yv) in out.as_mut_slice().iter_mut().zip(x.as_slice()).zip(y.as_slice()) {
        *o = xv + yv * a;
    }
}

/// `ρ ← (ρ + ρ†)/2`
pub fn hermitize(rho: &mut DMatrix<C64>) {
    let d = rho.nrows();
    for c in 0..d {
        rho[(c, c)].im = 0.0;
        for r in 0..c {
            let avg = (rho[(r, c)] + rho[(c, r)].conj()) * 0.5;
            rho[(r, c)] = avg;
            rho[(c, r)] = avg.conj();
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MasterOptions {
    pub dt: f64,
    /// Diagonalize at every grid time and abort below `−positivity_tolerance`.
    pub check_positivity: bool,
    pub positivity_tolerance: f64,
}

impl Default for MasterOptions {
    fn default() -> Self {
        Self { dt: 1e-3, check_positivity: true, positivity_tolerance: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationReport {
    /// Largest top-shell population seen during the run.
    pub max_top_shell: f64,
    /// Smallest eigenvalue seen at the grid times (`+∞` when not checked).
    pub min_eigenvalue: f64,
}

impl Default for TruncationReport {
    fn default() -> Self {
        Self { max_top_shell: 0.0, min_eigenvalue: f64::INFINITY }
    }
}

impl TruncationReport {
    pub fn truncation_affected(&self) -> bool {
        self.max_top_shell > TRUNCATION_WARN
    }
}

#[derive(Debug, Clone)]
pub struct MasterRun {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub report: TruncationReport,
}

/// `−i[H, ρ] + L_loss ρ + L_gain ρ` for the dimer.
pub fn liouvillian_apply(
    rho: &DensityMatrix,
    h: &SparseOperator,
    params: &DimerParams,
) -> Result<DMatrix<C64>, LindbladError> {
    if h.dim() != rho.basis.dim() {
        return Err(LindbladError::DimensionMismatch { state: rho.basis.dim(), operator: h.dim() });
    }
    Lindbladian::dimer_with_hamiltonian(&rho.basis, h.clone(), params).apply(&rho.rho)
}

/// Integrates the dimer master equation from `rho0`, keeping every grid state.
pub fn integrate_master(
    rho0: &DensityMatrix,
    params: &DimerParams,
    t_grid: &[f64],
    opts: MasterOptions,
) -> Result<MasterRun, LindbladError> {
    let generator = Lindbladian::dimer(&rho0.basis, params);
    let mut times = Vec::with_capacity(t_grid.len());
    let mut states = Vec::with_capacity(t_grid.len());
    let report = generator.integrate(rho0.rho.clone(), t_grid, opts, |t, m| {
        times.push(t);
        states.push(DensityMatrix { basis: rho0.basis.clone(), rho: m.clone() });
    })?;
    Ok(MasterRun { times, states, report })
}

/// Largest element-wise difference between the final states of runs with
/// step `dt` and `dt/2`: the step-halving convergence check.
pub fn step_halving_error(
    generator: &Lindbladian,
    rho0: &DMatrix<C64>,
    t_end: f64,
    dt: f64,
) -> Result<f64, LindbladError> {
    let grid = [0.0, t_end];
    let run = |step: f64| -> Result<DMatrix<C64>, LindbladError> {
        let mut last = rho0.clone();
        let opts = MasterOptions { dt: step, check_positivity: false, ..Default::default() };
        generator.integrate(rho0.clone(), &grid, opts, |_, m| last = m.clone())?;
        Ok(last)
    };
    let coarse = run(dt)?;
    let fine = run(0.5 * dt)?;
    Ok((coarse - fine).iter().map(|v| v.norm()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::build_basis;

    fn basis(n_max: usize) -> Arc<FockBasis> {
        Arc::new(build_basis(n_max))
    }

    #[test]
    fn balanced_rate_examples() {
        assert_eq!(balanced_gain_rate(1.0, 2).unwrap(), 0.5);
        assert!((balanced_gain_rate(0.5, 100).unwrap() - 0.5 * 100.0 / 102.0).abs() < 1e-16);
        assert!((balanced_gain_rate(0.5, 100).unwrap() - 0.490_196_078_431_372_5).abs() < 1e-15);
        assert!((balanced_gain_rate(1.0, 1 << 40).unwrap() - 1.0).abs() < 1e-11);
        assert!(matches!(balanced_gain_rate(1.0, 0), Err(ParamError::ParticleNumber(0))));
    }

    #[test]
    fn params_validation() {
        assert!(DimerParams::new(0.1, -1.0, 0.0, 4).is_err());
        assert!(DimerParams::new(f64::NAN, 1.0, 0.0, 4).is_err());
        assert!(DimerParams::new(0.1, 1.0, 0.0, 0).is_err());
        let p = DimerParams::balanced_with_g(0.5, 0.5, 101).unwrap();
        assert!((p.u - 0.005).abs() < 1e-17);
        assert!((p.g() - 0.5).abs() < 1e-15);
        assert_eq!(p.gamma_gain, 0.5 * 101.0 / 103.0);
    }

    #[test]
    fn closed_forms() {
        assert_eq!(single_site_loss_n(100, 0.5, 0.0), 100.0);
        assert!((single_site_loss_n(100, 0.5, 2.0) - 100.0 * (-1.0f64).exp()).abs() < 1e-12);
        assert!((single_site_loss_n(100, 0.5, 2.0) - 36.787_944_117_144_23).abs() < 1e-10);
        assert!(single_site_loss_n(1, 0.3, 1e4) < 1e-300);
        assert!((single_site_gain_n(100, 0.5, 0.0) - 100.0).abs() < 1e-13);
        let e = 1f64.exp();
        assert!((single_site_gain_n(100, 0.5, 2.0) - 100.0 * (1.01 * e - 0.01)).abs() < 1e-10);
        assert!((single_site_gain_n(100, 0.5, 2.0) - 273.546_464_674_363_56).abs() < 1e-9);
        assert!((single_site_gain_n(0, 1.0, 1.0) - (e - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn eigenprojector_is_stationary_without_dissipation() {
        let b = basis(3);
        let h = fock::hamiltonian(&b, 0.4);
        let dense = h.to_dense();
        let eig = dense.clone().symmetric_eigen();
        let v = eig.eigenvectors.column(2).into_owned();
        let rho = DensityMatrix::new(b.clone(), &v * v.adjoint()).unwrap();
        let params = DimerParams::new(0.4, 0.0, 0.0, 2).unwrap();
        let d = liouvillian_apply(&rho, &h, &params).unwrap();
        assert!(d.iter().all(|x| x.norm() < 1e-12));
    }

    #[test]
    fn vacuum_is_dark_for_loss() {
        let b = basis(2);
        let rho = DensityMatrix::fock(b.clone(), 0, 0).unwrap();
        let params = DimerParams::new(0.3, 2.5, 0.0, 1).unwrap();
        let d = liouvillian_apply(&rho, &fock::hamiltonian(&b, 0.3), &params).unwrap();
        assert!(d.iter().all(|x| x.norm() == 0.0));
    }

    #[test]
    fn gain_fills_vacuum_at_unit_rate() {
        let b = basis(2);
        let rho = DensityMatrix::fock(b.clone(), 0, 0).unwrap();
        let params = DimerParams::new(0.0, 0.0, 1.0, 1).unwrap();
        let d = liouvillian_apply(&rho, &fock::hamiltonian(&b, 0.0), &params).unwrap();
        let n2 = fock::number_operator(&b, Site::Two);
        assert!((trace_product(&n2, &d) - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let rho = DensityMatrix::fock(basis(2), 0, 0).unwrap();
        let h = fock::hamiltonian(&build_basis(3), 0.0);
        let params = DimerParams::new(0.0, 0.0, 1.0, 1).unwrap();
        assert!(matches!(liouvillian_apply(&rho, &h, &params), Err(LindbladError::DimensionMismatch { .. })));
        assert!(DensityMatrix::new(basis(2), DMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn closed_system_conserves_trace() {
        let b = basis(4);
        let rho0 = DensityMatrix::fock(b.clone(), 2, 1).unwrap();
        let params = DimerParams::new(0.7, 0.0, 0.0, 3).unwrap();
        let grid = crate::grid::uniform(2.0, 10);
        let run = integrate_master(&rho0, &params, &grid, MasterOptions { dt: 1e-2, ..Default::default() }).unwrap();
        assert_eq!(run.states.len(), 11);
        for s in &run.states {
            assert!((s.trace() - C64::new(1.0, 0.0)).norm() < 1e-8);
            assert!(s.hermiticity_error() < 1e-12);
        }
    }

    #[test]
    fn trace_leak_bounded_by_top_shell() {
        let b = basis(2);
        let rho = DensityMatrix::fock(b.clone(), 1, 1).unwrap();
        let params = DimerParams::new(0.0, 0.3, 0.8, 2).unwrap();
        let gen = Lindbladian::dimer(&b, &params);
        let d = gen.apply(rho.matrix()).unwrap();
        let leak = d.trace().norm();
        let p = rho.top_shell_population();
        assert!(leak > 0.0);
        assert!(leak <= params.gamma_gain * (b.n_max() as f64 + 2.0) * p + 1e-15);
    }

    #[test]
    fn step_halving_converges() {
        let b = build_basis(4);
        let params = DimerParams::balanced(0.2, 0.5, 2).unwrap();
        let gen = Lindbladian::dimer(&b, &params);
        let rho0 = DensityMatrix::fock(Arc::new(b), 1, 1).unwrap();
        let err = step_halving_error(&gen, rho0.matrix(), 0.5, 0.01).unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn positivity_abort_on_bad_state() {
        let b = basis(1);
        let mut m = DMatrix::zeros(3, 3);
        m[(0, 0)] = C64::new(1.1, 0.0);
        m[(1, 1)] = C64::new(-0.1, 0.0);
        let rho0 = DensityMatrix::new(b, m).unwrap();
        let params = DimerParams::new(0.0, 0.0, 0.0, 1).unwrap();
        let r = integrate_master(&rho0, &params, &[0.0, 0.1], MasterOptions::default());
        assert!(matches!(r, Err(LindbladError::NonPhysical { .. })));
    }

    #[test]
    fn block_and_full_eigenvalues_agree() {
        let b = basis(3);
        let h = fock::hamiltonian(&b, 0.9).to_dense();
        let shift = C64::new(0.3, 0.0);
        let m = &h + DMatrix::identity(b.dim(), b.dim()) * shift;
        let blocked = min_eigenvalue(&m, &shell_sectors(&b));
        let full = min_eigenvalue(&m, &[]);
        assert!((blocked - full).abs() < 1e-12);
    }
}
