//! Quantum-jump unraveling of the dimer master equation.
//!
//! Between jumps a trajectory evolves under
//! `H_eff = H − (i/2)(γ_loss a1†a1 + γ_gain a2 a2†)`. A jump happens when the
//! squared norm of the unnormalized state falls to a uniform random threshold;
//! the jump time is refined by a bracketing root search and the channel (`√γ_loss a1` or
//! `√γ_gain a2†`) is drawn with probability proportional to `‖L ψ‖²`.
//!
//! Both `H_eff` and the jump operators move whole particle-number shells, so
//! each trajectory only touches the window of shells it currently occupies.

use std::ops::Range;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::JumpError;
use crate::fock::{self, FockBasis, Site, SparseOperator};
use crate::grid;
use crate::lindblad::DimerParams;
use crate::observables::BlochFrame;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Pure state over a two-site Fock basis.
#[derive(Debug, Clone, PartialEq)]
pub struct ManyBodyState {
    basis: Arc<FockBasis>,
    amplitudes: Vec<C64>,
}

impl ManyBodyState {
    pub fn new(basis: Arc<FockBasis>, amplitudes: Vec<C64>) -> Self {
        assert_eq!(basis.dim(), amplitudes.len(), "amplitude vector does not match basis");
        Self { basis, amplitudes }
    }

    pub fn fock(basis: Arc<FockBasis>, n1: usize, n2: usize) -> Option<Self> {
        let k = basis.index_of(n1, n2)?;
        let mut amplitudes = vec![ZERO; basis.dim()];
        amplitudes[k] = C64::new(1.0, 0.0);
        Some(Self { basis, amplitudes })
    }

    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalized(&self) -> Self {
        let s = 1.0 / self.norm_sqr().sqrt();
        Self { basis: self.basis.clone(), amplitudes: self.amplitudes.iter().map(|a| a * s).collect() }
    }

    /// `⟨self|other⟩`
    pub fn inner(&self, other: &Self) -> C64 {
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum()
    }

    /// Lowest and highest particle-number shell carrying amplitude.
    pub fn occupied_shells(&self) -> Option<(usize, usize)> {
        let first = self.amplitudes.iter().position(|a| *a != ZERO)?;
        let last = self.amplitudes.iter().rposition(|a| *a != ZERO)?;
        Some((self.basis.total(first), self.basis.total(last)))
    }
}

/// `H − (i/2)[γ_loss a1†a1 + γ_gain a2 a2†]` with `a2 a2† = n2 + 1`.
pub fn effective_hamiltonian(basis: &FockBasis, h: &SparseOperator, params: &DimerParams) -> SparseOperator {
    let damping: Vec<C64> = basis
        .states()
        .iter()
        .map(|&(n1, n2)| C64::new(0.0, -0.5 * (params.gamma_loss * n1 as f64 + params.gamma_gain * (n2 as f64 + 1.0))))
        .collect();
    h.add(&SparseOperator::diagonal_from(&damping, false))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Loss,
    Gain,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    pub t: f64,
    pub channel: Channel,
}

/// Per-time observables of one trajectory, evaluated on the normalized state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Sample {
    pub n1: f64,
    pub n2: f64,
    /// `⟨a1† a2⟩`
    pub s12: C64,
}

impl Sample {
    pub fn total(&self) -> f64 {
        self.n1 + self.n2
    }

    /// Single-particle density matrix `σ_jk = ⟨a_j† a_k⟩`.
    pub fn sigma(&self) -> [[C64; 2]; 2] {
        [[C64::new(self.n1, 0.0), self.s12], [self.s12.conj(), C64::new(self.n2, 0.0)]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub samples: Vec<Sample>,
    pub jumps: Vec<JumpEvent>,
}

#[derive(Debug, Clone, Copy)]
pub struct JumpOptions {
    pub dt: f64,
    /// Width of the final bracket on the jump time, relative to `dt`.
    pub jump_time_tolerance: f64,
}

impl Default for JumpOptions {
    fn default() -> Self {
        Self { dt: 1e-3, jump_time_tolerance: 1e-6 }
    }
}

/// Tridiagonal operator: `diag[k]`, `upper[k] = A[k][k+1]`, `lower[k] = A[k][k−1]`.
///
/// Within a shell the dimer Hamiltonian only couples neighbouring Fock
/// states, so `H_eff` fits this layout exactly.
#[derive(Debug, Clone)]
struct Bands {
    diag: Vec<C64>,
    upper: Vec<C64>,
    lower: Vec<C64>,
}

impl Bands {
    fn from_operator(op: &SparseOperator) -> Self {
        let n = op.dim();
        let mut bands = Self { diag: vec![ZERO; n], upper: vec![ZERO; n], lower: vec![ZERO; n] };
        for (r, c, v) in op.entries() {
            if r == c {
                bands.diag[r] = v;
            } else if c == r + 1 {
                bands.upper[r] = v;
            } else if r == c + 1 {
                bands.lower[r] = v;
            } else {
                panic!("effective Hamiltonian is not tridiagonal: entry ({r}, {c})");
            }
        }
        bands
    }
}

/// Operators shared read-only by all trajectories of one parameter set.
#[derive(Debug, Clone)]
pub struct TrajectoryEngine {
    basis: Arc<FockBasis>,
    params: DimerParams,
    /// `H_eff` minus a real constant per shell (see [`Self::new`]).
    propagator: Bands,
    loss: SparseOperator,
    gain: SparseOperator,
    hop12: SparseOperator,
}

impl TrajectoryEngine {
    pub fn new(basis: Arc<FockBasis>, params: DimerParams) -> Self {
        let h = fock::hamiltonian(&basis, params.u);
        Self::with_hamiltonian(basis, h, params)
    }

    /// The real diagonal of `H` is shifted by its mean over each shell. Every
    /// shell evolves independently and no observable couples shells, so the
    /// shift only changes unobservable phases while keeping `|E dt|` small
    /// for large particle numbers.
    pub fn with_hamiltonian(basis: Arc<FockBasis>, h: SparseOperator, params: DimerParams) -> Self {
        let mut shift = vec![ZERO; basis.dim()];
        for n in 0..=basis.n_max() {
            let range = basis.shell_range(n);
            let mean = range.clone().map(|k| h.get(k, k).re).sum::<f64>() / range.len() as f64;
            for k in range {
                shift[k] = C64::new(-mean, 0.0);
            }
        }
        let propagator =
            effective_hamiltonian(&basis, &h, &params).add(&SparseOperator::diagonal_from(&shift, false));
        let propagator = Bands::from_operator(&propagator);
        Self {
            loss: fock::annihilation(&basis, Site::One),
            gain: fock::creation(&basis, Site::Two),
            hop12: fock::transfer_operator(&basis, Site::One, Site::Two),
            basis,
            params,
            propagator,
        }
    }

    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    pub fn params(&self) -> &DimerParams {
        &self.params
    }

    /// Trajectory seeded from `seed` on random stream `stream`.
    pub fn run(
        &self,
        psi0: &ManyBodyState,
        t_grid: &[f64],
        seed: u64,
        stream: u64,
        opts: JumpOptions,
    ) -> Result<TrajectoryRecord, JumpError> {
        check_inputs(t_grid, opts)?;
        let mut walker = self.walker(psi0, seed, stream)?;
        let mut record = TrajectoryRecord {
            times: Vec::with_capacity(t_grid.len()),
            samples: Vec::with_capacity(t_grid.len()),
            jumps: Vec::new(),
        };
        record.times.push(t_grid[0]);
        record.samples.push(walker.sample());
        for &t in &t_grid[1..] {
            walker.advance_to(t, opts)?;
            record.times.push(t);
            record.samples.push(walker.sample());
        }
        record.jumps = walker.jumps;
        Ok(record)
    }

    /// Resumable trajectory at `t = 0`, seeded like [`Self::run`].
    pub fn walker(&self, psi0: &ManyBodyState, seed: u64, stream: u64) -> Result<Walker<'_>, JumpError> {
        let norm = psi0.norm_sqr();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(JumpError::NotNormalized(norm));
        }
        assert_eq!(psi0.basis.dim(), self.basis.dim(), "state and engine bases differ");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let (lo, hi) = psi0.occupied_shells().expect("normalized state has amplitude");
        let threshold = draw_threshold(&mut rng);
        Ok(Walker { traj: Trajectory::new(self, psi0, lo, hi), rng, threshold, t: 0.0, jumps: Vec::new() })
    }
}

fn check_inputs(t_grid: &[f64], opts: JumpOptions) -> Result<(), JumpError> {
    if !(opts.dt > 0.0 && opts.dt.is_finite()) {
        return Err(JumpError::BadStep(opts.dt));
    }
    if !grid::is_valid_grid(t_grid) {
        return Err(JumpError::BadTimeGrid);
    }
    Ok(())
}

fn draw_threshold(rng: &mut ChaCha8Rng) -> f64 {
    rng.gen_range(f64::MIN_POSITIVE..1.0)
}

/// A single trajectory that can be advanced piecewise.
pub struct Walker<'a> {
    traj: Trajectory<'a>,
    rng: ChaCha8Rng,
    threshold: f64,
    t: f64,
    jumps: Vec<JumpEvent>,
}

impl Walker<'_> {
    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn jumps(&self) -> &[JumpEvent] {
        &self.jumps
    }

    /// Observables of the normalized current state.
    pub fn sample(&self) -> Sample {
        self.traj.sample()
    }

    /// Current state, normalized, on the full basis.
    pub fn state(&self) -> ManyBodyState {
        let basis = self.traj.engine.basis.clone();
        let mut amplitudes = vec![ZERO; basis.dim()];
        amplitudes[self.traj.window.clone()].copy_from_slice(&self.traj.psi);
        ManyBodyState::new(basis, amplitudes).normalized()
    }

    /// Evolves to `t_next` in equal RK4 steps no longer than `opts.dt`.
    pub fn advance_to(&mut self, t_next: f64, opts: JumpOptions) -> Result<(), JumpError> {
        if !(opts.dt > 0.0 && opts.dt.is_finite()) {
            return Err(JumpError::BadStep(opts.dt));
        }
        if !(t_next > self.t && t_next.is_finite()) {
            return Err(JumpError::BadTimeGrid);
        }
        let (steps, h) = grid::substeps(t_next - self.t, opts.dt);
        let tol = opts.jump_time_tolerance * opts.dt;
        let t_start = self.t;
        let traj = &mut self.traj;
        for s in 0..steps {
            let mut remaining = h;
            while remaining > 0.0 {
                traj.rk4(remaining);
                if traj.trial_norm_sqr() > self.threshold {
                    traj.accept();
                    break;
                }
                let hit = traj.locate_threshold(self.threshold, remaining, tol);
                traj.rk4(hit);
                traj.accept();
                remaining -= hit;
                let jump_t = self.t + (h - remaining);
                let channel = traj.jump(&mut self.rng, jump_t)?;
                self.jumps.push(JumpEvent { t: jump_t, channel });
                self.threshold = draw_threshold(&mut self.rng);
            }
            self.t = t_start + h * (s + 1) as f64;
        }
        self.t = t_next;
        Ok(())
    }
}

/// Mutable state of one trajectory restricted to its occupied shells.
struct Trajectory<'a> {
    engine: &'a TrajectoryEngine,
    window: Range<usize>,
    lo: usize,
    hi: usize,
    /// Amplitudes on `window`, indexed from `window.start`.
    psi: Vec<C64>,
    trial: Vec<C64>,
    k: [Vec<C64>; 4],
    stage: Vec<C64>,
}

impl<'a> Trajectory<'a> {
    fn new(engine: &'a TrajectoryEngine, psi0: &ManyBodyState, lo: usize, hi: usize) -> Self {
        let window = engine.basis.shells_range(lo, hi);
        let mut traj = Self {
            engine,
            psi: psi0.amplitudes[window.clone()].to_vec(),
            window,
            lo,
            hi,
            trial: Vec::new(),
            k: Default::default(),
            stage: Vec::new(),
        };
        traj.resize_buffers();
        traj
    }

    fn resize_buffers(&mut self) {
        let len = self.window.len();
        for buf in self.k.iter_mut().chain([&mut self.trial, &mut self.stage]) {
            buf.clear();
            buf.resize(len, ZERO);
        }
    }

    /// `dψ/dt = −i H_eff ψ` on the window.
    fn derivative(op: &Bands, window: &Range<usize>, x: &[C64], out: &mut [C64]) {
        let base = window.start;
        let n = x.len();
        let (d, up, lo) = (&op.diag[window.clone()], &op.upper[window.clone()], &op.lower[window.clone()]);
        let minus_i = |v: C64| C64::new(v.im, -v.re);
        if n == 1 {
            out[0] = minus_i(d[0] * x[0]);
            return;
        }
        debug_assert_eq!(base + n, window.end);
        out[0] = minus_i(d[0] * x[0] + up[0] * x[1]);
        for i in 1..n - 1 {
            out[i] = minus_i(lo[i] * x[i - 1] + d[i] * x[i] + up[i] * x[i + 1]);
        }
        out[n - 1] = minus_i(lo[n - 1] * x[n - 2] + d[n - 1] * x[n - 1]);
    }

    /// One RK4 step of length `h` from `psi` into `trial`.
    fn rk4(&mut self, h: f64) {
        let w = &self.window;
        let op = &self.engine.propagator;
        let [k1, k2, k3, k4] = &mut self.k;
        let psi = &self.psi;
        let stage = &mut self.stage;
        Self::derivative(op, w, psi, k1);
        for j in 0..psi.len() {
            stage[j] = psi[j] + k1[j] * (0.5 * h);
        }
        Self::derivative(op, w, stage, k2);
        for j in 0..psi.len() {
            stage[j] = psi[j] + k2[j] * (0.5 * h);
        }
        Self::derivative(op, w, stage, k3);
        for j in 0..psi.len() {
            stage[j] = psi[j] + k3[j] * h;
        }
        Self::derivative(op, w, stage, k4);
        let c = h / 6.0;
        for j in 0..psi.len() {
            self.trial[j] = psi[j] + (k1[j] + (k2[j] + k3[j]) * 2.0 + k4[j]) * c;
        }
    }

    /// Smallest step `h ∈ (0, span]` with `‖ψ(h)‖² ≤ threshold`, to within `tol`.
    ///
    /// Expects `trial` to hold the state after the full `span`, already below
    /// the threshold. Illinois-modified regula falsi keeps a sign-changing
    /// bracket; each secant point is followed by a probe `tol` further in, so
    /// the bracket collapses as soon as the estimate is within `tol`.
    fn locate_threshold(&mut self, threshold: f64, span: f64, tol: f64) -> f64 {
        let (mut a, mut fa) = (0.0, self.norm_sqr() - threshold);
        let (mut b, mut fb) = (span, self.trial_norm_sqr() - threshold);
        let mut last_side = 0i8;
        while b - a > tol {
            let secant = if fa > fb { (a * fb - b * fa) / (fb - fa) } else { 0.5 * (a + b) };
            let x = secant.clamp(a + 0.25 * tol, b - 0.25 * tol);
            self.rk4(x);
            let fx = self.trial_norm_sqr() - threshold;
            let side = if fx > 0.0 { 1 } else { -1 };
            if side > 0 {
                a = x;
                fa = fx;
                if last_side > 0 {
                    fb *= 0.5;
                }
            } else {
                b = x;
                fb = fx;
                if last_side < 0 {
                    fa *= 0.5;
                }
            }
            last_side = side;
            if b - a > tol {
                let probe = if side > 0 { (a + tol).min(b) } else { (b - tol).max(a) };
                self.rk4(probe);
                let fp = self.trial_norm_sqr() - threshold;
                if fp > 0.0 {
                    a = probe;
                    fa = fp;
                } else {
                    b = probe;
                    fb = fp;
                }
            }
        }
        b
    }

    fn trial_norm_sqr(&self) -> f64 {
        self.trial.iter().map(|a| a.norm_sqr()).sum()
    }

    fn norm_sqr(&self) -> f64 {
        self.psi.iter().map(|a| a.norm_sqr()).sum()
    }

    fn accept(&mut self) {
        self.psi.copy_from_slice(&self.trial);
    }

    fn jump(&mut self, rng: &mut ChaCha8Rng, t: f64) -> Result<Channel, JumpError> {
        let basis = &self.engine.basis;
        let params = &self.engine.params;
        let (mut w_loss, mut w_gain) = (0.0, 0.0);
        for (r, a) in self.window.clone().zip(&self.psi) {
            let (n1, n2) = basis.state(r);
            let p = a.norm_sqr();
            w_loss += params.gamma_loss * n1 as f64 * p;
            w_gain += params.gamma_gain * (n2 as f64 + 1.0) * p;
        }
        let pick = rng.gen::<f64>() * (w_loss + w_gain);
        let channel = if pick < w_loss { Channel::Loss } else { Channel::Gain };

        let (op, lo, hi) = match channel {
            Channel::Loss => (&self.engine.loss, self.lo.saturating_sub(1), self.hi.saturating_sub(1)),
            Channel::Gain => {
                if self.hi + 1 > basis.n_max() {
                    return Err(JumpError::Truncation { t, n_max: basis.n_max() });
                }
                (&self.engine.gain, self.lo + 1, self.hi + 1)
            }
        };
        let target = basis.shells_range(lo, hi);
        let base = self.window.start;
        let mut next: Vec<C64> = target
            .clone()
            .map(|r| {
                op.row(r)
                    .filter(|(c, _)| self.window.contains(c))
                    .map(|(c, v)| v * self.psi[c - base])
                    .sum()
            })
            .collect();
        let s = 1.0 / next.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        for a in &mut next {
            *a *= s;
        }
        self.psi = next;
        self.window = target;
        self.lo = lo;
        self.hi = hi;
        self.resize_buffers();
        Ok(channel)
    }

    fn sample(&self) -> Sample {
        let basis = &self.engine.basis;
        let base = self.window.start;
        let norm = self.norm_sqr();
        let (mut n1, mut n2) = (0.0, 0.0);
        let mut s12 = ZERO;
        for (r, a) in self.window.clone().zip(&self.psi) {
            let (x, y) = basis.state(r);
            let p = a.norm_sqr();
            n1 += x as f64 * p;
            n2 += y as f64 * p;
            let mut acc = ZERO;
            for (c, v) in self.engine.hop12.row(r) {
                acc += v * self.psi[c - base];
            }
            s12 += a.conj() * acc;
        }
        Sample { n1: n1 / norm, n2: n2 / norm, s12: s12 / norm }
    }
}

/// Single trajectory on random stream 0 of `seed`.
pub fn run_trajectory(
    psi0: &ManyBodyState,
    params: &DimerParams,
    t_grid: &[f64],
    seed: u64,
    opts: JumpOptions,
) -> Result<TrajectoryRecord, JumpError> {
    TrajectoryEngine::new(psi0.basis.clone(), *params).run(psi0, t_grid, seed, 0, opts)
}

/// Mean and standard error of one observable on the time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesColumn {
    pub name: String,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSeries {
    /// Grid times that were reached; a prefix of the requested grid when stopped early.
    pub t_grid: Vec<f64>,
    pub n_traj: usize,
    pub seed: u64,
    pub columns: Vec<SeriesColumn>,
    /// Ensemble-averaged single-particle density matrix at each grid time.
    pub sigma: Vec<[[C64; 2]; 2]>,
    pub total_jumps: usize,
    /// Set when the stop condition fired before the end of the grid.
    pub stopped_at: Option<f64>,
}

impl EnsembleSeries {
    pub fn column(&self, name: &str) -> Option<&SeriesColumn> {
        self.columns.iter().find(|c| c.name == name)
    }
}

/// Runs `n_traj` trajectories on streams `0..n_traj` of `seed` and reduces
/// them in index order. Columns: `n1`, `n2`, `N`, `s12_re`, `s12_im`, and
/// `bx`, `by`, `bz` when a Bloch frame is given.
pub fn ensemble_average(
    engine: &TrajectoryEngine,
    psi0: &ManyBodyState,
    t_grid: &[f64],
    n_traj: usize,
    seed: u64,
    opts: JumpOptions,
    frame: Option<&BlochFrame>,
) -> Result<EnsembleSeries, JumpError> {
    ensemble_until(engine, psi0, t_grid, n_traj, seed, opts, frame, |_, _| false)
}

/// [`ensemble_average`] with all trajectories advanced in lockstep; stops
/// after the first grid time where `stop(t, ⟨N⟩)` holds.
#[allow(clippy::too_many_arguments)]
pub fn ensemble_until<F>(
    engine: &TrajectoryEngine,
    psi0: &ManyBodyState,
    t_grid: &[f64],
    n_traj: usize,
    seed: u64,
    opts: JumpOptions,
    frame: Option<&BlochFrame>,
    mut stop: F,
) -> Result<EnsembleSeries, JumpError>
where
    F: FnMut(f64, f64) -> bool,
{
    if n_traj == 0 {
        return Err(JumpError::NoTrajectories);
    }
    check_inputs(t_grid, opts)?;
    let mut walkers = (0..n_traj)
        .map(|i| engine.walker(psi0, seed, i as u64))
        .collect::<Result<Vec<_>, _>>()?;

    let mut names = vec!["n1", "n2", "N", "s12_re", "s12_im"];
    if frame.is_some() {
        names.extend(["bx", "by", "bz"]);
    }
    let n = n_traj as f64;
    let mut means = vec![Vec::with_capacity(t_grid.len()); names.len()];
    let mut ses = vec![Vec::with_capacity(t_grid.len()); names.len()];
    let mut sigma = Vec::with_capacity(t_grid.len());
    let mut reached = Vec::with_capacity(t_grid.len());
    let mut stopped_at = None;
    let mut values = vec![0.0; names.len()];

    for (ti, &t) in t_grid.iter().enumerate() {
        let samples: Vec<Sample> = if ti == 0 {
            walkers.iter().map(Walker::sample).collect()
        } else {
            let results: Vec<Result<Sample, JumpError>> = walkers
                .par_iter_mut()
                .map(|w| w.advance_to(t, opts).map(|_| w.sample()))
                .collect();
            let mut ok = Vec::with_capacity(n_traj);
            let mut aborted = 0usize;
            let mut first_err: Option<JumpError> = None;
            for r in results {
                match r {
                    Ok(s) => ok.push(s),
                    Err(e @ JumpError::Truncation { .. }) => {
                        aborted += 1;
                        first_err.get_or_insert(e);
                    }
                    Err(e) => return Err(e),
                }
            }
            if let Some(first) = first_err {
                return Err(JumpError::EnsembleTruncation { aborted, n_traj, first: Box::new(first) });
            }
            ok
        };

        let mut sums = vec![0.0; names.len()];
        let mut sq = vec![0.0; names.len()];
        let mut sig = [[ZERO; 2]; 2];
        for s in &samples {
            values[0] = s.n1;
            values[1] = s.n2;
            values[2] = s.total();
            values[3] = s.s12.re;
            values[4] = s.s12.im;
            let sm = s.sigma();
            if let Some(f) = frame {
                values[5..8].copy_from_slice(&f.contract(&sm));
            }
            for (c, v) in values.iter().enumerate() {
                sums[c] += v;
                sq[c] += v * v;
            }
            for j in 0..2 {
                for k in 0..2 {
                    sig[j][k] += sm[j][k];
                }
            }
        }
        for c in 0..names.len() {
            let m = sums[c] / n;
            means[c].push(m);
            ses[c].push(if n_traj < 2 { 0.0 } else { (((sq[c] - n * m * m) / (n - 1.0)).max(0.0) / n).sqrt() });
        }
        sigma.push(sig.map(|row| row.map(|v| v / n)));
        reached.push(t);
        if stop(t, means[2][ti]) && ti + 1 < t_grid.len() {
            stopped_at = Some(t);
            break;
        }
    }

    let columns = names
        .iter()
        .zip(means.into_iter().zip(ses))
        .map(|(name, (mean, se))| SeriesColumn { name: name.to_string(), mean, se })
        .collect();
    Ok(EnsembleSeries {
        t_grid: reached,
        n_traj,
        seed,
        columns,
        sigma,
        total_jumps: walkers.iter().map(|w| w.jumps.len()).sum(),
        stopped_at,
    })
}
