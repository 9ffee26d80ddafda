//! Site populations, the single-particle density matrix, covariances and the
//! Bloch-sphere representation.
//!
//! The Bloch frame is built from the stationary excited state `e1 = (c1, c2)`
//! and its PT-symmetric orthogonal partner `e2 = i(−c2*|1⟩ + c1*|2⟩)`. The
//! collective pseudo-spin is `Σ_α = Σ_ij ⟨i|σ_α|j⟩ a_i† a_j`, so its
//! expectation is a contraction of `σ_α` with `σ_jk = ⟨a_j† a_k⟩`.

use num_complex::Complex64 as C64;

use crate::error::MeanFieldError;
use crate::fock::{self, FockBasis, Site, SparseOperator};
use crate::jump::ManyBodyState;
use crate::lindblad::{self, DensityMatrix};
use crate::meanfield::{self, ModeAmplitudes};

pub type Mat2 = [[C64; 2]; 2];

const ZERO: C64 = C64::new(0.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// Anything expectation values can be taken in: pure states and density matrices.
pub trait QuantumState {
    fn fock_basis(&self) -> &FockBasis;

    /// `⟨A⟩`
    fn expect(&self, op: &SparseOperator) -> C64;

    /// `⟨A B⟩`
    fn expect_product(&self, a: &SparseOperator, b: &SparseOperator) -> C64;
}

impl QuantumState for ManyBodyState {
    fn fock_basis(&self) -> &FockBasis {
        self.basis()
    }

    fn expect(&self, op: &SparseOperator) -> C64 {
        let applied = op.apply(self.amplitudes());
        self.amplitudes().iter().zip(&applied).map(|(a, b)| a.conj() * b).sum()
    }

    fn expect_product(&self, a: &SparseOperator, b: &SparseOperator) -> C64 {
        let applied = a.apply(&b.apply(self.amplitudes()));
        self.amplitudes().iter().zip(&applied).map(|(x, y)| x.conj() * y).sum()
    }
}

impl QuantumState for DensityMatrix {
    fn fock_basis(&self) -> &FockBasis {
        self.basis()
    }

    fn expect(&self, op: &SparseOperator) -> C64 {
        lindblad::expectation(self, op)
    }

    fn expect_product(&self, a: &SparseOperator, b: &SparseOperator) -> C64 {
        lindblad::expectation(self, &a.matmul(b))
    }
}

/// `(⟨n1⟩, ⟨n2⟩, ⟨N⟩)`
pub fn site_populations<S: QuantumState>(state: &S) -> (f64, f64, f64) {
    let basis = state.fock_basis();
    let n1 = state.expect(&fock::number_operator(basis, Site::One)).re;
    let n2 = state.expect(&fock::number_operator(basis, Site::Two)).re;
    (n1, n2, n1 + n2)
}

/// Single-particle density matrix `σ_jk = ⟨a_j† a_k⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinglePartDM {
    pub sigma: Mat2,
}

impl SinglePartDM {
    /// `σ_jk = N0 c_j* c_k`
    pub fn from_mean_field(c: &ModeAmplitudes, n0: f64) -> Self {
        let v = c.as_array();
        let mut sigma = [[ZERO; 2]; 2];
        for j in 0..2 {
            for k in 0..2 {
                sigma[j][k] = v[j].conj() * v[k] * n0;
            }
        }
        Self { sigma }
    }

    pub fn trace(&self) -> f64 {
        (self.sigma[0][0] + self.sigma[1][1]).re
    }

    pub fn hermiticity_error(&self) -> f64 {
        let s = &self.sigma;
        (s[0][1] - s[1][0].conj()).norm().max(s[0][0].im.abs()).max(s[1][1].im.abs())
    }
}

pub fn single_particle_dm<S: QuantumState>(state: &S) -> SinglePartDM {
    let basis = state.fock_basis();
    let mut sigma = [[ZERO; 2]; 2];
    for j in Site::BOTH {
        for k in Site::BOTH {
            sigma[j.idx()][k.idx()] = state.expect(&fock::transfer_operator(basis, j, k));
        }
    }
    SinglePartDM { sigma }
}

/// `Δ_jklm = ⟨a_j† a_k a_l† a_m⟩ − ⟨a_j† a_k⟩⟨a_l† a_m⟩`
pub fn covariances<S: QuantumState>(state: &S, j: Site, k: Site, l: Site, m: Site) -> C64 {
    let basis = state.fock_basis();
    let jk = fock::transfer_operator(basis, j, k);
    let lm = fock::transfer_operator(basis, l, m);
    state.expect_product(&jk, &lm) - state.expect(&jk) * state.expect(&lm)
}

/// Coefficients `⟨i|σ_α|j⟩` in the site basis written out in terms of the
/// frame amplitudes `(c1, c2)`.
pub fn coefficient_matrices(c: &ModeAmplitudes) -> [Mat2; 3] {
    let (c1, c2) = (c.c1, c.c2);
    let p = c1 * c2;
    let sx = [
        [C64::new(-2.0 * p.im, 0.0), -I * (c1 * c1 + c2.conj() * c2.conj())],
        [I * (c1.conj() * c1.conj() + c2 * c2), C64::new(2.0 * p.im, 0.0)],
    ];
    let sy = [
        [C64::new(2.0 * p.re, 0.0), -(c1 * c1) + c2.conj() * c2.conj()],
        [-(c1.conj() * c1.conj()) + c2 * c2, C64::new(-2.0 * p.re, 0.0)],
    ];
    let d = c1.norm_sqr() - c2.norm_sqr();
    let sz = [[C64::new(d, 0.0), c1 * c2.conj() * 2.0], [c1.conj() * c2 * 2.0, C64::new(-d, 0.0)]];
    [sx, sy, sz]
}

fn outer(a: &ModeAmplitudes, b: &ModeAmplitudes) -> Mat2 {
    let (u, v) = (a.as_array(), b.as_array());
    [[u[0] * v[0].conj(), u[0] * v[1].conj()], [u[1] * v[0].conj(), u[1] * v[1].conj()]]
}

fn combine(terms: &[(C64, Mat2)]) -> Mat2 {
    let mut out = [[ZERO; 2]; 2];
    for (f, m) in terms {
        for r in 0..2 {
            for c in 0..2 {
                out[r][c] += f * m[r][c];
            }
        }
    }
    out
}

/// Bloch-sphere frame: north pole `e1`, south pole `e2`, Pauli matrices in the site basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochFrame {
    pub e1: ModeAmplitudes,
    pub e2: ModeAmplitudes,
    /// `σ_x`, `σ_y`, `σ_z`
    pub sigma: [Mat2; 3],
}

impl BlochFrame {
    /// Frame around the stationary excited state at `(g, γ)`; requires `|γ| < 2`.
    pub fn new(g: f64, gamma: f64) -> Result<Self, MeanFieldError> {
        if !(gamma.abs() < 2.0) {
            return Err(MeanFieldError::BrokenSymmetry(gamma.abs()));
        }
        Ok(Self::from_north_pole(meanfield::stationary_states(g, gamma)?.excited))
    }

    /// Frame with an arbitrary normalized north-pole state.
    pub fn from_north_pole(e1: ModeAmplitudes) -> Self {
        let e2 = ModeAmplitudes::new(-I * e1.c2.conj(), I * e1.c1.conj());
        let (p12, p21) = (outer(&e1, &e2), outer(&e2, &e1));
        let (p11, p22) = (outer(&e1, &e1), outer(&e2, &e2));
        let one = C64::new(1.0, 0.0);
        let sx = combine(&[(one, p12), (one, p21)]);
        let sy = combine(&[(-I, p12), (I, p21)]);
        let sz = combine(&[(one, p11), (-one, p22)]);
        Self { e1, e2, sigma: [sx, sy, sz] }
    }

    /// `b_α = Σ_ij ⟨i|σ_α|j⟩ σ_ij` for a single-particle density matrix.
    pub fn contract(&self, spdm: &Mat2) -> [f64; 3] {
        let mut b = [0.0; 3];
        for (alpha, m) in self.sigma.iter().enumerate() {
            let mut acc = ZERO;
            for i in 0..2 {
                for j in 0..2 {
                    acc += m[i][j] * spdm[i][j];
                }
            }
            b[alpha] = acc.re;
        }
        b
    }
}

/// Time-stamped Bloch vector with its particle number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochSample {
    pub t: f64,
    pub b: [f64; 3],
    pub n_mean: f64,
    /// `b` rescaled to length `⟨N⟩`; `None` when `|b|` vanishes.
    pub normalized: Option<[f64; 3]>,
}

impl BlochSample {
    pub fn from_vector(t: f64, b: [f64; 3], n_mean: f64) -> Self {
        let len = norm3(&b);
        let normalized = (len > 1e-12 * n_mean.abs().max(1.0)).then(|| b.map(|x| x * n_mean / len));
        Self { t, b, n_mean, normalized }
    }

    pub fn length(&self) -> f64 {
        norm3(&self.b)
    }
}

pub fn norm3(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Bloch vector from a single-particle density matrix.
pub fn bloch_from_spdm(spdm: &SinglePartDM, frame: &BlochFrame, t: f64) -> BlochSample {
    BlochSample::from_vector(t, frame.contract(&spdm.sigma), spdm.trace())
}

pub fn bloch_vector<S: QuantumState>(state: &S, frame: &BlochFrame, t: f64) -> BlochSample {
    bloch_from_spdm(&single_particle_dm(state), frame, t)
}

/// Mean-field Bloch vector with `σ_jk = N0 c_j* c_k`; the norm of `c` carries
/// the particle-number change.
pub fn bloch_vector_mf(c: &ModeAmplitudes, n0: usize, frame: &BlochFrame, t: f64) -> BlochSample {
    bloch_from_spdm(&SinglePartDM::from_mean_field(c, n0 as f64), frame, t)
}

/// Second-quantized `Σ_α` as a sparse operator on `basis`.
pub fn collective_spin_operator(basis: &FockBasis, sigma: &Mat2) -> SparseOperator {
    let mut op = SparseOperator::from_triplets(basis.dim(), Vec::new(), false);
    for i in Site::BOTH {
        for j in Site::BOTH {
            let coeff = sigma[i.idx()][j.idx()];
            if coeff != ZERO {
                op = op.add(&fock::transfer_operator(basis, i, j).scaled(coeff));
            }
        }
    }
    op
}
