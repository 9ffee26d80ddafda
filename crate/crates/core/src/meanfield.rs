//! Mean-field limit: the PT-symmetric two-mode Gross-Pitaevskii equation
//!
//! ```text
//! i ċ1 = −c2 + g|c1|² c1 − i(γ/2) c1
//! i ċ2 = −c1 + g|c2|² c2 + i(γ/2) c2
//! ```
//!
//! with unit hopping, its PT-symmetric stationary states and the chemical
//! potential spectrum.

use std::fmt;

use num_complex::Complex64 as C64;

use crate::error::MeanFieldError;
use crate::grid::StepPlan;

const I: C64 = C64::new(0.0, 1.0);

/// Site amplitudes `(c1, c2)` of the condensate wave function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeAmplitudes {
    pub c1: C64,
    pub c2: C64,
}

impl ModeAmplitudes {
    pub fn new(c1: C64, c2: C64) -> Self {
        Self { c1, c2 }
    }

    pub fn real(c1: f64, c2: f64) -> Self {
        Self::new(C64::new(c1, 0.0), C64::new(c2, 0.0))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.c1.norm_sqr() + self.c2.norm_sqr()
    }

    pub fn normalized(&self) -> Self {
        self.scale(C64::new(1.0 / self.norm_sqr().sqrt(), 0.0))
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self::new(self.c1 * factor, self.c2 * factor)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::new(self.c1 + other.c1, self.c2 + other.c2)
    }

    /// `⟨self|other⟩`
    pub fn inner(&self, other: &Self) -> C64 {
        self.c1.conj() * other.c1 + self.c2.conj() * other.c2
    }

    /// Site swap followed by complex conjugation.
    pub fn pt_image(&self) -> Self {
        Self::new(self.c2.conj(), self.c1.conj())
    }

    pub fn as_array(&self) -> [C64; 2] {
        [self.c1, self.c2]
    }

    pub fn is_finite(&self) -> bool {
        self.c1.is_finite() && self.c2.is_finite()
    }
}

/// Time derivative `(ċ1, ċ2)` of the Gross-Pitaevskii equation.
pub fn gpe_rhs(c: &ModeAmplitudes, g: f64, gamma: f64) -> ModeAmplitudes {
    let h1 = -c.c2 + c.c1 * (g * c.c1.norm_sqr()) - I * (0.5 * gamma) * c.c1;
    let h2 = -c.c1 + c.c2 * (g * c.c2.norm_sqr()) + I * (0.5 * gamma) * c.c2;
    ModeAmplitudes::new(-I * h1, -I * h2)
}

/// Closed-form rate of change of `|c1|² + |c2|²`.
pub fn norm_rate(c: &ModeAmplitudes, gamma: f64) -> f64 {
    gamma * (c.c2.norm_sqr() - c.c1.norm_sqr())
}

fn rk4_step(c: &ModeAmplitudes, g: f64, gamma: f64, h: f64) -> ModeAmplitudes {
    let hc = C64::new(h, 0.0);
    let k1 = gpe_rhs(c, g, gamma);
    let k2 = gpe_rhs(&c.add(&k1.scale(hc * 0.5)), g, gamma);
    let k3 = gpe_rhs(&c.add(&k2.scale(hc * 0.5)), g, gamma);
    let k4 = gpe_rhs(&c.add(&k3.scale(hc)), g, gamma);
    let incr = k1.add(&k2.scale(C64::new(2.0, 0.0))).add(&k3.scale(C64::new(2.0, 0.0))).add(&k4);
    c.add(&incr.scale(hc / 6.0))
}

#[derive(Debug, Clone, Copy)]
pub struct GpeOptions {
    pub dt: f64,
    /// Integration stops once `|c1|² + |c2|²` exceeds this value.
    pub norm_limit: f64,
}

impl Default for GpeOptions {
    fn default() -> Self {
        Self { dt: 1e-3, norm_limit: 1e8 }
    }
}

#[derive(Debug, Clone)]
pub struct GpeRun {
    /// Grid times that were reached; shorter than the requested grid on divergence.
    pub times: Vec<f64>,
    pub states: Vec<ModeAmplitudes>,
    /// Time at which the norm limit was crossed or the state became non-finite.
    pub diverged_at: Option<f64>,
}

/// Fixed-step RK4 integration sampled on `t_grid` (which must start at 0).
pub fn integrate_gpe(
    c0: ModeAmplitudes,
    g: f64,
    gamma: f64,
    t_grid: &[f64],
    opts: GpeOptions,
) -> Result<GpeRun, MeanFieldError> {
    if !(opts.dt > 0.0 && opts.dt.is_finite()) {
        return Err(MeanFieldError::BadStep(opts.dt));
    }
    let plan = StepPlan::new(t_grid, opts.dt).ok_or(MeanFieldError::BadTimeGrid)?;
    let mut run = GpeRun { times: vec![0.0], states: vec![c0], diverged_at: None };
    let mut c = c0;
    let mut t = 0.0;
    for (k, (steps, h)) in plan.intervals().enumerate() {
        for _ in 0..steps {
            c = rk4_step(&c, g, gamma, h);
            t += h;
            if !c.is_finite() || c.norm_sqr() > opts.norm_limit {
                run.diverged_at = Some(t);
                return Ok(run);
            }
        }
        run.times.push(t_grid[k + 1]);
        run.states.push(c);
    }
    Ok(run)
}

/// The two PT-symmetric stationary states and their chemical potentials.
#[derive(Debug, Clone, Copy)]
pub struct StationaryStates {
    pub ground: ModeAmplitudes,
    pub excited: ModeAmplitudes,
    pub mu_ground: f64,
    pub mu_excited: f64,
}

/// Normalized stationary states with `c1 = e^{−iδ/2}/√2`, `c2 = e^{iδ/2}/√2`
/// and `sin δ = −γ/2`; `cos δ > 0` is the ground state. The excited state
/// takes `δ = π + asin(γ/2)`, which fixes its overall sign.
pub fn stationary_states(g: f64, gamma: f64) -> Result<StationaryStates, MeanFieldError> {
    if !(gamma.abs() <= 2.0) {
        return Err(MeanFieldError::BrokenSymmetry(gamma.abs()));
    }
    let a = (0.5 * gamma).asin();
    let root = (1.0 - 0.25 * gamma * gamma).max(0.0).sqrt();
    let from_phase = |delta: f64| {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        ModeAmplitudes::new(C64::from_polar(s, -0.5 * delta), C64::from_polar(s, 0.5 * delta))
    };
    Ok(StationaryStates {
        ground: from_phase(-a),
        excited: from_phase(a + std::f64::consts::PI),
        mu_ground: 0.5 * g - root,
        mu_excited: 0.5 * g + root,
    })
}

/// `‖ rhs(c) + iμc ‖` for a stationary candidate.
pub fn stationary_residual(c: &ModeAmplitudes, mu: f64, g: f64, gamma: f64) -> f64 {
    let d = gpe_rhs(c, g, gamma);
    let r1 = d.c1 + I * mu * c.c1;
    let r2 = d.c2 + I * mu * c.c2;
    (r1.norm_sqr() + r2.norm_sqr()).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    SymmetricPlus,
    SymmetricMinus,
    BrokenPlus,
    BrokenMinus,
}

impl Branch {
    pub fn name(self) -> &'static str {
        match self {
            Branch::SymmetricPlus => "symmetric+",
            Branch::SymmetricMinus => "symmetric-",
            Branch::BrokenPlus => "broken+",
            Branch::BrokenMinus => "broken-",
        }
    }

    pub fn is_symmetric(self) -> bool {
        matches!(self, Branch::SymmetricPlus | Branch::SymmetricMinus)
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumPoint {
    pub gamma: f64,
    pub branch: Branch,
    pub mu: C64,
}

/// Chemical potentials of all stationary branches defined at each `γ`.
///
/// PT-symmetric: `μ = g/2 ± √(1 − (γ/2)²)` for `|γ| ≤ 2`.
/// PT-broken: `μ = g ± iγ√(1/4 − 1/(g² + γ²))` for `g² + γ² ≥ 4`.
pub fn spectrum(g: f64, gamma_grid: &[f64]) -> Vec<SpectrumPoint> {
    let mut out = Vec::new();
    for &gamma in gamma_grid {
        if gamma.abs() <= 2.0 {
            let root = (1.0 - 0.25 * gamma * gamma).sqrt();
            for (branch, sign) in [(Branch::SymmetricPlus, 1.0), (Branch::SymmetricMinus, -1.0)] {
                out.push(SpectrumPoint { gamma, branch, mu: C64::new(0.5 * g + sign * root, 0.0) });
            }
        }
        let r2 = g * g + gamma * gamma;
        if r2 >= 4.0 {
            let im = gamma * (0.25 - 1.0 / r2).max(0.0).sqrt();
            for (branch, sign) in [(Branch::BrokenPlus, 1.0), (Branch::BrokenMinus, -1.0)] {
                out.push(SpectrumPoint { gamma, branch, mu: C64::new(g, sign * im) });
            }
        }
    }
    out
}

/// `g = (N0 − 1) U`
pub fn macroscopic_g(u: f64, n0: usize) -> f64 {
    (n0 as f64 - 1.0) * u
}

/// Inverse of [`macroscopic_g`]; zero interaction for a single particle.
pub fn interaction_from_g(g: f64, n0: usize) -> f64 {
    if n0 <= 1 {
        0.0
    } else {
        g / (n0 as f64 - 1.0)
    }
}
