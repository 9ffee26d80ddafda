//! Command-line experiment runner.
//!
//! Each experiment starts from per-experiment defaults, then applies a
//! `key = value` config file, then command-line flags. Results are written as
//! CSV: a `#` comment line with the version and the full configuration, a
//! header row, then data rows. The first column is `t` (`gamma` for the
//! spectrum) and standard errors follow their mean as `<name>,<name>_se`.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use clap::{Parser, ValueEnum};
use log::{info, warn};
use thiserror::Error;

use crate::error::{JumpError, LindbladError, MeanFieldError, ParamError, StateError};
use crate::fock::{self, build_basis, FockBasis, Site};
use crate::grid::uniform;
use crate::jump::{ensemble_average, ensemble_until, EnsembleSeries, JumpOptions, TrajectoryEngine};
use crate::lindblad::{self, DensityMatrix, DimerParams, Lindbladian, MasterOptions};
use crate::meanfield::{self, GpeOptions, GpeRun, ModeAmplitudes};
use crate::observables::{self, BlochFrame, BlochSample};
use crate::states;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Explosion is declared once `⟨N⟩` exceeds this multiple of `N0`.
pub const DIVERGENCE_FACTOR: f64 = 5.0;

/// Smallest cutoff, in units of `N0`, accepted for explosion runs.
pub const EXPLOSION_CUTOFF_FACTOR: usize = 8;

/// Default explosion cutoff; diverging trajectories pass `8·N0` before `⟨N⟩` reaches `5·N0`.
pub const EXPLOSION_DEFAULT_CUTOFF_FACTOR: usize = 20;

/// Largest `N0` for which the dense oracle is run.
pub const ORACLE_MAX_N0: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Spectrum,
    Stationary,
    Pulse,
    Explosion,
    Bloch,
    Oracle,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Spectrum => "spectrum",
            Experiment::Stationary => "stationary",
            Experiment::Pulse => "pulse",
            Experiment::Explosion => "explosion",
            Experiment::Bloch => "bloch",
            Experiment::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Experiment::from_str_ignore_case(s)
    }
}

impl Experiment {
    fn from_str_ignore_case(s: &str) -> Result<Self, CliError> {
        <Experiment as ValueEnum>::from_str(s, true).map_err(|_| CliError::Usage(format!("unknown experiment `{s}`")))
    }
}

/// Which stationary state the `stationary` experiment embeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StationaryBranch {
    Ground,
    Excited,
}

impl fmt::Display for StationaryBranch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StationaryBranch::Ground => "ground",
            StationaryBranch::Excited => "excited",
        })
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("physics failure: {0}")]
    Physics(String),
    #[error("oracle mismatch: {0}")]
    OracleMismatch(String),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) | CliError::Csv(_) => 1,
            CliError::Physics(_) => 2,
            CliError::OracleMismatch(_) => 3,
        }
    }
}

impl From<JumpError> for CliError {
    fn from(e: JumpError) -> Self {
        match e {
            JumpError::NotNormalized(_) | JumpError::NoTrajectories | JumpError::BadTimeGrid | JumpError::BadStep(_) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Physics(e.to_string()),
        }
    }
}

impl From<LindbladError> for CliError {
    fn from(e: LindbladError) -> Self {
        match e {
            LindbladError::NonPhysical { .. } => CliError::Physics(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<MeanFieldError> for CliError {
    fn from(e: MeanFieldError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<StateError> for CliError {
    fn from(e: StateError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<ParamError> for CliError {
    fn from(e: ParamError) -> Self {
        CliError::Usage(e.to_string())
    }
}

/// Full description of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// Macroscopic interaction; exactly one of `g` and `u` is set.
    pub g: Option<f64>,
    /// Microscopic on-site interaction `U`, with `g = (N0 − 1) U`.
    pub u: Option<f64>,
    pub gamma: f64,
    pub n0: usize,
    /// Total-particle cutoff; `None` selects the experiment default.
    pub n_max: Option<usize>,
    pub theta: f64,
    pub t_end: f64,
    pub dt: f64,
    pub n_traj: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Number of grid intervals on `[0, t_end]` (or `[0, gamma_max]`).
    pub samples: usize,
    /// Number of initial states on the great circle.
    pub states: usize,
    pub branch: StationaryBranch,
    pub gamma_max: f64,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let base = Self {
            experiment,
            g: Some(0.5),
            u: None,
            gamma: 0.5,
            n0: 100,
            n_max: None,
            theta: 0.2,
            t_end: 5.0,
            dt: 1e-3,
            n_traj: 500,
            seed: 1,
            out: None,
            samples: 100,
            states: 16,
            branch: StationaryBranch::Ground,
            gamma_max: 3.0,
        };
        match experiment {
            Experiment::Spectrum => Self { samples: 600, ..base },
            Experiment::Stationary => Self { n0: 50, ..base },
            Experiment::Pulse => base,
            Experiment::Explosion => Self { g: Some(1.0), gamma: 1.0, theta: 1.4, ..base },
            Experiment::Bloch => Self { gamma: 0.1, n0: 50, t_end: 10.0, samples: 200, ..base },
            Experiment::Oracle => Self { n0: 4, theta: 0.2, n_traj: 2000, samples: 50, ..base },
        }
    }

    /// Sets one key. Keys are case-insensitive and ignore `_` and `-`, so
    /// `n_max`, `nmax` and `NMax` are the same key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let norm: String = key.chars().filter(|c| *c != '_' && *c != '-').collect::<String>().to_lowercase();
        let value = value.trim();
        match norm.as_str() {
            "experiment" => {
                let e = Experiment::from_str_ignore_case(value)?;
                if e != self.experiment {
                    return Err(CliError::Usage(format!(
                        "config is for `{e}` but the `{}` experiment was requested",
                        self.experiment
                    )));
                }
            }
            "g" => {
                self.g = Some(parse(key, value)?);
                self.u = None;
            }
            "u" => {
                self.u = Some(parse(key, value)?);
                self.g = None;
            }
            "gamma" => self.gamma = parse(key, value)?,
            "n0" => self.n0 = parse(key, value)?,
            "nmax" => self.n_max = Some(parse(key, value)?),
            "theta" => self.theta = parse(key, value)?,
            "tend" => self.t_end = parse(key, value)?,
            "dt" => self.dt = parse(key, value)?,
            "ntraj" => self.n_traj = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            "samples" => self.samples = parse(key, value)?,
            "states" => self.states = parse(key, value)?,
            "branch" => {
                self.branch = <StationaryBranch as ValueEnum>::from_str(value, true)
                    .map_err(|_| CliError::Usage(format!("unknown branch `{value}`")))?
            }
            "gammamax" => self.gamma_max = parse(key, value)?,
            _ => return Err(CliError::Usage(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("line {}: expected key = value", lineno + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Usage(msg));
        for (name, v) in [("gamma", self.gamma), ("theta", self.theta), ("t_end", self.t_end), ("dt", self.dt)] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite, got {v}"));
            }
        }
        if let Some(g) = self.g.filter(|g| !g.is_finite()) {
            return bad(format!("g must be finite, got {g}"));
        }
        if let Some(u) = self.u.filter(|u| !u.is_finite()) {
            return bad(format!("U must be finite, got {u}"));
        }
        if self.gamma < 0.0 {
            return bad(format!("gamma must be non-negative, got {}", self.gamma));
        }
        if !(self.dt > 0.0) || !(self.t_end > 0.0) {
            return bad("dt and t_end must be positive".into());
        }
        if self.n_traj == 0 || self.samples == 0 || self.states == 0 {
            return bad("n_traj, samples and states must be at least 1".into());
        }
        if self.n0 == 0 && self.experiment != Experiment::Spectrum {
            return bad("N0 must be at least 1".into());
        }
        if self.experiment != Experiment::Spectrum && self.n0 > self.cutoff() {
            return bad(format!("N0 = {} exceeds the cutoff n_max = {}", self.n0, self.cutoff()));
        }
        if !(self.gamma_max > 0.0 && self.gamma_max.is_finite()) {
            return bad("gamma_max must be positive".into());
        }
        match self.experiment {
            Experiment::Explosion if self.cutoff() < EXPLOSION_CUTOFF_FACTOR * self.n0 => bad(format!(
                "explosion runs need n_max >= {EXPLOSION_CUTOFF_FACTOR}·N0 = {}",
                EXPLOSION_CUTOFF_FACTOR * self.n0
            )),
            Experiment::Oracle if self.n0 > ORACLE_MAX_N0 => {
                bad(format!("the dense oracle is limited to N0 <= {ORACLE_MAX_N0}"))
            }
            _ => Ok(()),
        }
    }

    /// Macroscopic interaction `g`.
    pub fn g(&self) -> f64 {
        match (self.g, self.u) {
            (Some(g), _) => g,
            (None, Some(u)) => meanfield::macroscopic_g(u, self.n0),
            (None, None) => 0.0,
        }
    }

    /// Microscopic interaction `U`.
    pub fn interaction(&self) -> f64 {
        match (self.u, self.g) {
            (Some(u), _) => u,
            (None, Some(g)) => meanfield::interaction_from_g(g, self.n0),
            (None, None) => 0.0,
        }
    }

    pub fn cutoff(&self) -> usize {
        self.n_max.unwrap_or(match self.experiment {
            Experiment::Explosion => EXPLOSION_DEFAULT_CUTOFF_FACTOR * self.n0,
            Experiment::Oracle => self.n0 + 24,
            Experiment::Pulse => 3 * self.n0,
            Experiment::Bloch => 6 * self.n0,
            _ => 2 * self.n0,
        })
    }

    pub fn time_grid(&self) -> Vec<f64> {
        uniform(self.t_end, self.samples)
    }

    pub fn params(&self) -> Result<DimerParams, CliError> {
        Ok(DimerParams::balanced(self.interaction(), self.gamma, self.n0)?)
    }

    /// Single-line `key=value` rendering of every setting.
    pub fn describe(&self) -> String {
        let interaction = match (self.g, self.u) {
            (_, Some(u)) => format!("U={u} g={}", self.g()),
            _ => format!("g={} U={}", self.g(), self.interaction()),
        };
        format!(
            "experiment={} {interaction} gamma={} N0={} n_max={} theta={} t_end={} dt={} n_traj={} seed={} samples={} states={} branch={} gamma_max={}",
            self.experiment,
            self.gamma,
            self.n0,
            self.cutoff(),
            self.theta,
            self.t_end,
            self.dt,
            self.n_traj,
            self.seed,
            self.samples,
            self.states,
            self.branch,
            self.gamma_max
        )
    }
}

fn opt<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(T::to_string)
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.parse().map_err(|_| CliError::Usage(format!("cannot parse `{value}` for `{key}`")))
}

/// One CSV column.
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Num(Vec<f64>),
    Text(Vec<String>),
}

impl Column {
    fn len(&self) -> usize {
        match self {
            Column::Num(v) => v.len(),
            Column::Text(v) => v.len(),
        }
    }

    fn cell(&self, row: usize) -> String {
        match self {
            Column::Num(v) => v[row].to_string(),
            Column::Text(v) => v[row].clone(),
        }
    }
}

/// Column-oriented table with CSV output.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    names: Vec<String>,
    columns: Vec<Column>,
}

impl Table {
    pub fn push_num(&mut self, name: impl Into<String>, values: Vec<f64>) {
        self.push(name.into(), Column::Num(values));
    }

    pub fn push_text(&mut self, name: impl Into<String>, values: Vec<String>) {
        self.push(name.into(), Column::Text(values));
    }

    /// Pushes `name` and `name_se`.
    pub fn push_pair(&mut self, name: &str, mean: Vec<f64>, se: Vec<f64>) {
        self.push_num(name, mean);
        self.push_num(format!("{name}_se"), se);
    }

    fn push(&mut self, name: String, col: Column) {
        if let Some(first) = self.columns.first() {
            assert_eq!(first.len(), col.len(), "column `{name}` has the wrong length");
        }
        self.names.push(name);
        self.columns.push(col);
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Column::len)
    }

    pub fn num(&self, name: &str) -> Option<&[f64]> {
        let i = self.names.iter().position(|n| n == name)?;
        match &self.columns[i] {
            Column::Num(v) => Some(v),
            Column::Text(_) => None,
        }
    }

    pub fn text(&self, name: &str) -> Option<&[String]> {
        let i = self.names.iter().position(|n| n == name)?;
        match &self.columns[i] {
            Column::Text(v) => Some(v),
            Column::Num(_) => None,
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W, comment: &str) -> Result<(), CliError> {
        writeln!(w, "# {comment}")?;
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.names)?;
        for r in 0..self.n_rows() {
            out.write_record(self.columns.iter().map(|c| c.cell(r)))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Outcome of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub config: ExperimentConfig,
    pub table: Table,
    /// Scalar results, printed to stderr.
    pub summary: Vec<(String, String)>,
    /// Set when an oracle comparison failed; the table is still written.
    pub mismatch: Option<String>,
}

impl Report {
    fn new(config: &ExperimentConfig, table: Table) -> Self {
        Self { config: config.clone(), table, summary: Vec::new(), mismatch: None }
    }

    fn note(&mut self, key: &str, value: impl fmt::Display) {
        self.summary.push((key.to_string(), value.to_string()));
    }

    pub fn summary_value(&self, key: &str) -> Option<&str> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn comment(&self) -> String {
        format!("ptdimer {VERSION} {}", self.config.describe())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), CliError> {
        self.table.write_csv(w, &self.comment())
    }
}

fn jump_options(cfg: &ExperimentConfig) -> JumpOptions {
    JumpOptions { dt: cfg.dt, ..Default::default() }
}

fn gpe_options(cfg: &ExperimentConfig) -> GpeOptions {
    GpeOptions { dt: cfg.dt, ..Default::default() }
}

fn column<'a>(series: &'a EnsembleSeries, name: &str) -> (&'a [f64], &'a [f64]) {
    let c = series.column(name).expect("ensemble column");
    (&c.mean, &c.se)
}

/// `cos θ c_g + sin θ c_e` for the stationary states at `(g, γ)`.
pub fn initial_amplitudes(g: f64, gamma: f64, theta: f64) -> Result<ModeAmplitudes, CliError> {
    let s = meanfield::stationary_states(g, gamma)?;
    Ok(states::mean_field_superposition(&s.ground, &s.excited, theta)?)
}

/// `γ` sweep of the stationary chemical potentials: `gamma, branch, mu_re, mu_im`.
pub fn cmd_spectrum(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    cfg.validate()?;
    let g = cfg.g();
    let grid: Vec<f64> = (0..=cfg.samples).map(|k| cfg.gamma_max * k as f64 / cfg.samples as f64).collect();
    let points = meanfield::spectrum(g, &grid);
    let mut table = Table::default();
    table.push_num("gamma", points.iter().map(|p| p.gamma).collect());
    table.push_text("branch", points.iter().map(|p| p.branch.to_string()).collect());
    table.push_num("mu_re", points.iter().map(|p| p.mu.re).collect());
    table.push_num("mu_im", points.iter().map(|p| p.mu.im).collect());
    let mut report = Report::new(cfg, table);
    report.note("g", g);
    report.note("broken_onset", (4.0 - g * g).max(0.0).sqrt());
    Ok(report)
}

/// Jump ensemble started in an embedded stationary state:
/// `t, n1_rel, n2_rel, N_rel` (populations divided by `N0`).
pub fn cmd_stationary(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    cfg.validate()?;
    let s = meanfield::stationary_states(cfg.g(), cfg.gamma)?;
    let c = match cfg.branch {
        StationaryBranch::Ground => s.ground,
        StationaryBranch::Excited => s.excited,
    };
    let basis = Arc::new(build_basis(cfg.cutoff()));
    let psi = states::embed_mean_field(&c, cfg.n0, &basis)?;
    let engine = TrajectoryEngine::new(basis, cfg.params()?);
    let grid = cfg.time_grid();
    let series = ensemble_average(&engine, &psi, &grid, cfg.n_traj, cfg.seed, jump_options(cfg), None)?;

    let n0 = cfg.n0 as f64;
    let mut table = Table::default();
    table.push_num("t", grid);
    for (name, out) in [("n1", "n1_rel"), ("n2", "n2_rel"), ("N", "N_rel")] {
        let (m, se) = column(&series, name);
        table.push_pair(out, m.iter().map(|v| v / n0).collect(), se.iter().map(|v| v / n0).collect());
    }
    let mut report = Report::new(cfg, table);
    report.note("total_jumps", series.total_jumps);
    Ok(report)
}

/// Ensemble and GPE populations on one grid, plus the divergence detector.
struct Comparison {
    series: EnsembleSeries,
    gpe: GpeRun,
    grid: Vec<f64>,
}

fn compare_engines(cfg: &ExperimentConfig, stop_on_divergence: bool) -> Result<Comparison, CliError> {
    cfg.validate()?;
    let g = cfg.g();
    let c = initial_amplitudes(g, cfg.gamma, cfg.theta)?;
    let basis = Arc::new(build_basis(cfg.cutoff()));
    let psi = states::embed_mean_field(&c, cfg.n0, &basis)?;
    let engine = TrajectoryEngine::new(basis, cfg.params()?);
    let grid = cfg.time_grid();
    let limit = DIVERGENCE_FACTOR * cfg.n0 as f64;
    let series = ensemble_until(&engine, &psi, &grid, cfg.n_traj, cfg.seed, jump_options(cfg), None, |_, n| {
        stop_on_divergence && n > limit
    })?;
    let gpe = meanfield::integrate_gpe(c, g, cfg.gamma, &grid, gpe_options(cfg))?;
    Ok(Comparison { series, gpe, grid })
}

fn pad(values: &[f64], len: usize) -> Vec<f64> {
    let mut v = values.to_vec();
    v.resize(len, f64::NAN);
    v
}

fn comparison_table(cmp: &Comparison, n0: f64) -> Table {
    let len = cmp.grid.len();
    let mut table = Table::default();
    table.push_num("t", cmp.grid.clone());
    for name in ["n1", "n2", "N"] {
        let (m, se) = column(&cmp.series, name);
        table.push_pair(name, pad(m, len), pad(se, len));
    }
    let mf = |f: &dyn Fn(&ModeAmplitudes) -> f64| -> Vec<f64> {
        pad(&cmp.gpe.states.iter().map(|c| n0 * f(c)).collect::<Vec<_>>(), len)
    };
    table.push_num("n1_mf", mf(&|c| c.c1.norm_sqr()));
    table.push_num("n2_mf", mf(&|c| c.c2.norm_sqr()));
    table.push_num("N_mf", mf(&|c| c.norm_sqr()));
    table
}

/// First grid time with `values > limit`.
pub fn first_crossing(t: &[f64], values: &[f64], limit: f64) -> Option<f64> {
    t.iter().zip(values).find(|(_, v)| **v > limit).map(|(t, _)| *t)
}

/// θ-superposition evolved by the jump ensemble and the GPE:
/// `t, n1, n2, N` (ensemble, with standard errors) and `n1_mf, n2_mf, N_mf`.
pub fn cmd_pulse(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let cmp = compare_engines(cfg, false)?;
    let table = comparison_table(&cmp, cfg.n0 as f64);
    let mut report = Report::new(cfg, table);
    report.note("total_jumps", cmp.series.total_jumps);
    if let Some(t) = cmp.gpe.diverged_at {
        report.note("gpe_norm_limit_at", t);
    }
    Ok(report)
}

/// Same pipeline as [`cmd_pulse`], stopped once the ensemble `⟨N⟩` exceeds
/// `5·N0`. Summary keys `jump_divergence_t` and `gpe_divergence_t` hold the
/// first grid time above the threshold, or `none`.
pub fn cmd_explosion(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let cmp = compare_engines(cfg, true)?;
    let table = comparison_table(&cmp, cfg.n0 as f64);
    let limit = DIVERGENCE_FACTOR * cfg.n0 as f64;
    let jump_t = first_crossing(&cmp.series.t_grid, &cmp.series.column("N").expect("N column").mean, limit);
    let gpe_n: Vec<f64> = cmp.gpe.states.iter().map(|c| cfg.n0 as f64 * c.norm_sqr()).collect();
    let gpe_t = first_crossing(&cmp.gpe.times, &gpe_n, limit).or(cmp.gpe.diverged_at);
    let fmt_t = |t: Option<f64>| t.map_or_else(|| "none".to_string(), |t| t.to_string());
    let mut report = Report::new(cfg, table);
    report.note("threshold", limit);
    report.note("jump_divergence_t", fmt_t(jump_t));
    report.note("gpe_divergence_t", fmt_t(gpe_t));
    report.note("jump_max_N", cmp.series.column("N").expect("N column").mean.iter().cloned().fold(0.0, f64::max));
    report.note("gpe_max_N", gpe_n.iter().cloned().fold(0.0, f64::max));
    report.note("total_jumps", cmp.series.total_jumps);
    Ok(report)
}

/// Normalized Bloch vectors of ensemble and GPE for `states` initial states
/// evenly spaced on the xz great circle. Rows are ordered by state, then time.
pub fn cmd_bloch(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    cfg.validate()?;
    let g = cfg.g();
    let frame = BlochFrame::new(g, cfg.gamma)?;
    let basis = Arc::new(build_basis(cfg.cutoff()));
    let engine = TrajectoryEngine::new(basis.clone(), cfg.params()?);
    let grid = cfg.time_grid();
    let len = grid.len();
    let n0 = cfg.n0 as f64;

    let names = ["bx", "by", "bz"];
    let mut t_col = Vec::new();
    let mut state_col = Vec::new();
    let mut phi_col = Vec::new();
    let mut q = vec![Vec::new(); 3];
    let mut q_se = vec![Vec::new(); 3];
    let mut n_col = (Vec::new(), Vec::new());
    let mut mf = vec![Vec::new(); 3];
    let mut n_mf = Vec::new();
    let mut total_jumps = 0;

    for (idx, phi) in states::great_circle_angles(cfg.states).into_iter().enumerate() {
        let c = states::great_circle_state(&frame, phi);
        let psi = states::embed_mean_field(&c, cfg.n0, &basis)?;
        let series = ensemble_average(&engine, &psi, &grid, cfg.n_traj, cfg.seed, jump_options(cfg), Some(&frame))?;
        total_jumps += series.total_jumps;
        let gpe = meanfield::integrate_gpe(c, g, cfg.gamma, &grid, gpe_options(cfg))?;
        let (n_mean, n_se) = column(&series, "N");
        for ti in 0..len {
            let raw = [0, 1, 2].map(|a| column(&series, names[a]).0[ti]);
            let sample = BlochSample::from_vector(grid[ti], raw, n_mean[ti]);
            let scale = n_mean[ti] / observables::norm3(&raw);
            let normalized = sample.normalized.unwrap_or([f64::NAN; 3]);
            for a in 0..3 {
                q[a].push(normalized[a]);
                q_se[a].push(column(&series, names[a]).1[ti] * scale);
            }
            n_col.0.push(n_mean[ti]);
            n_col.1.push(n_se[ti]);
            t_col.push(grid[ti]);
            state_col.push(idx as f64);
            phi_col.push(phi);
            match gpe.states.get(ti) {
                Some(cm) => {
                    let s = observables::bloch_vector_mf(cm, cfg.n0, &frame, grid[ti]);
                    let b = s.normalized.unwrap_or([f64::NAN; 3]);
                    for a in 0..3 {
                        mf[a].push(b[a]);
                    }
                    n_mf.push(n0 * cm.norm_sqr());
                }
                None => {
                    for col in mf.iter_mut() {
                        col.push(f64::NAN);
                    }
                    n_mf.push(f64::NAN);
                }
            }
        }
    }

    let mut table = Table::default();
    table.push_num("t", t_col);
    table.push_num("state", state_col);
    table.push_num("phi", phi_col);
    for (a, (m, se)) in q.into_iter().zip(q_se).enumerate() {
        table.push_pair(names[a], m, se);
    }
    table.push_pair("N", n_col.0, n_col.1);
    for (a, m) in mf.into_iter().enumerate() {
        table.push_num(format!("{}_mf", names[a]), m);
    }
    table.push_num("N_mf", n_mf);
    let mut report = Report::new(cfg, table);
    report.note("total_jumps", total_jumps);
    Ok(report)
}

/// Oracle observables in the order they appear in the CSV.
pub const ORACLE_OBSERVABLES: [&str; 4] = ["n1", "n2", "s12_re", "s12_im"];

/// Absolute slack added to `3σ` so deterministic runs (σ = 0) compare at
/// integrator precision.
const ORACLE_ABS_TOL: f64 = 1e-6;

/// Dense master equation against the jump ensemble for a θ-superposition,
/// plus single-site pure-loss checks against the closed form. Columns per
/// observable: `<obs>_jump, <obs>_jump_se, <obs>_dense, <obs>_z` with
/// `z = |jump − dense| / σ`.
pub fn cmd_oracle(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    cfg.validate()?;
    let g = cfg.g();
    let params = cfg.params()?;
    let basis = Arc::new(build_basis(cfg.cutoff()));
    let c = initial_amplitudes(g, cfg.gamma, cfg.theta)?;
    let psi = states::embed_mean_field(&c, cfg.n0, &basis)?;
    let grid = cfg.time_grid();

    let dense = dense_observables(&basis, &params, &DensityMatrix::pure(&psi), &grid, cfg.dt)?;
    let engine = TrajectoryEngine::new(basis.clone(), params);
    let series = ensemble_average(&engine, &psi, &grid, cfg.n_traj, cfg.seed, jump_options(cfg), None)?;

    let mut table = Table::default();
    table.push_num("t", grid.clone());
    let mut worst_z: f64 = 0.0;
    let mut failures = 0usize;
    for (o, name) in ORACLE_OBSERVABLES.iter().enumerate() {
        let (m, se) = column(&series, name);
        let d: Vec<f64> = dense.iter().map(|row| row[o]).collect();
        let z: Vec<f64> = m.iter().zip(se).zip(&d).map(|((m, s), d)| (m - d).abs() / s.max(ORACLE_ABS_TOL)).collect();
        failures += m
            .iter()
            .zip(se)
            .zip(&d)
            .filter(|((m, s), d)| (*m - *d).abs() > 3.0 * *s + ORACLE_ABS_TOL * d.abs().max(1.0))
            .count();
        worst_z = z.iter().cloned().fold(worst_z, f64::max);
        table.push_pair(&format!("{name}_jump"), m.to_vec(), se.to_vec());
        table.push_num(format!("{name}_dense"), d);
        table.push_num(format!("{name}_z"), z);
    }

    let loss = pure_loss_checks(cfg)?;
    let mut report = Report::new(cfg, table);
    report.note("max_z", worst_z);
    report.note("points_beyond_3se", failures);
    report.note("closed_form_dense_rel_err", loss.dense_rel_err);
    report.note("closed_form_jump_max_z", loss.jump_max_z);
    let mut problems = Vec::new();
    if failures > 0 {
        problems.push(format!("{failures} points differ by more than 3 standard errors (max z = {worst_z:.3})"));
    }
    if loss.dense_rel_err > 1e-6 {
        problems.push(format!("dense pure-loss relative error {:.3e}", loss.dense_rel_err));
    }
    if loss.jump_max_z > 3.0 {
        problems.push(format!("jump pure-loss deviation {:.3} standard errors", loss.jump_max_z));
    }
    if !problems.is_empty() {
        report.mismatch = Some(problems.join("; "));
    }
    Ok(report)
}

/// `[⟨n1⟩, ⟨n2⟩, Re σ12, Im σ12]` of the dense master equation at each grid time.
pub fn dense_observables(
    basis: &Arc<FockBasis>,
    params: &DimerParams,
    rho0: &DensityMatrix,
    grid: &[f64],
    dt: f64,
) -> Result<Vec<[f64; 4]>, CliError> {
    let generator = Lindbladian::dimer(basis, params);
    let n1 = fock::number_operator(basis, Site::One);
    let n2 = fock::number_operator(basis, Site::Two);
    let s12 = fock::transfer_operator(basis, Site::One, Site::Two);
    let mut rows = Vec::with_capacity(grid.len());
    let report = generator.integrate(rho0.matrix().clone(), grid, MasterOptions { dt, ..Default::default() }, |_, rho| {
        let s = lindblad::trace_product(&s12, rho);
        rows.push([lindblad::trace_product(&n1, rho).re, lindblad::trace_product(&n2, rho).re, s.re, s.im]);
    })?;
    if report.truncation_affected() {
        warn!("dense oracle top-shell population {:.3e}", report.max_top_shell);
    }
    Ok(rows)
}

struct PureLossCheck {
    dense_rel_err: f64,
    jump_max_z: f64,
}

/// Single-site loss with hopping removed, compared with `N0 e^{−γt}`.
fn pure_loss_checks(cfg: &ExperimentConfig) -> Result<PureLossCheck, CliError> {
    let gamma = if cfg.gamma > 0.0 { cfg.gamma } else { 0.5 };
    let grid = cfg.time_grid();
    let exact: Vec<f64> = grid.iter().map(|&t| lindblad::single_site_loss_n(cfg.n0, gamma, t)).collect();

    let generator = Lindbladian::single_mode_loss(cfg.n0, gamma);
    let mut rho0 = nalgebra::DMatrix::zeros(cfg.n0 + 1, cfg.n0 + 1);
    rho0[(cfg.n0, cfg.n0)] = crate::C64::new(1.0, 0.0);
    let (lower, raise) = fock::single_mode_ladder(cfg.n0);
    let n_op = raise.matmul(&lower);
    let mut dense = Vec::with_capacity(grid.len());
    generator.integrate(rho0, &grid, MasterOptions { dt: cfg.dt, ..Default::default() }, |_, rho| {
        dense.push(lindblad::trace_product(&n_op, rho).re);
    })?;
    let dense_rel_err = dense.iter().zip(&exact).map(|(d, e)| ((d - e) / e).abs()).fold(0.0, f64::max);

    let basis = Arc::new(build_basis(cfg.n0));
    let params = DimerParams::new(0.0, gamma, 0.0, cfg.n0)?;
    let engine = TrajectoryEngine::with_hamiltonian(basis.clone(), fock::hamiltonian_with_hopping(&basis, 0.0, 0.0), params);
    let psi = crate::jump::ManyBodyState::fock(basis, cfg.n0, 0).expect("N0 within cutoff");
    let series = ensemble_average(&engine, &psi, &grid, cfg.n_traj, cfg.seed, jump_options(cfg), None)?;
    let (m, se) = column(&series, "n1");
    let jump_max_z = m
        .iter()
        .zip(se)
        .zip(&exact)
        .map(|((m, s), e)| (m - e).abs() / s.max(ORACLE_ABS_TOL))
        .fold(0.0, f64::max);
    Ok(PureLossCheck { dense_rel_err, jump_max_z })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    info!("{}", cfg.describe());
    match cfg.experiment {
        Experiment::Spectrum => cmd_spectrum(cfg),
        Experiment::Stationary => cmd_stationary(cfg),
        Experiment::Pulse => cmd_pulse(cfg),
        Experiment::Explosion => cmd_explosion(cfg),
        Experiment::Bloch => cmd_bloch(cfg),
        Experiment::Oracle => cmd_oracle(cfg),
    }
}

/// Two-site condensate with balanced gain and loss: experiment runner.
#[derive(Debug, Parser)]
#[command(name = "ptdimer", version, about, allow_negative_numbers = true)]
pub struct Args {
    /// Experiment to run.
    #[arg(value_enum)]
    pub experiment: Experiment,
    /// key = value configuration file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Macroscopic interaction g = (N0 − 1) U.
    #[arg(long)]
    pub g: Option<f64>,
    /// Microscopic on-site interaction U.
    #[arg(long = "U")]
    pub u: Option<f64>,
    /// Loss rate on site 1; the gain rate follows from the balance condition.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Initial particle number N0.
    #[arg(long)]
    pub n0: Option<usize>,
    /// Total-particle cutoff.
    #[arg(long)]
    pub nmax: Option<usize>,
    /// Superposition angle between ground and excited state.
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub tend: Option<f64>,
    /// Integrator step.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Number of quantum trajectories.
    #[arg(long)]
    pub ntraj: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Grid intervals on [0, tend] (or [0, gamma-max] for the spectrum).
    #[arg(long)]
    pub samples: Option<usize>,
    /// Initial states on the Bloch great circle.
    #[arg(long)]
    pub states: Option<usize>,
    /// Stationary state for the `stationary` experiment.
    #[arg(long, value_enum)]
    pub branch: Option<StationaryBranch>,
    /// Upper end of the spectrum sweep.
    #[arg(long)]
    pub gamma_max: Option<f64>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

impl Args {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = ExperimentConfig::defaults(self.experiment);
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            cfg.apply_text(&text)?;
        }
        let flags: [(&str, Option<String>); 15] = [
            ("g", opt(&self.g)),
            ("U", opt(&self.u)),
            ("gamma", opt(&self.gamma)),
            ("n0", opt(&self.n0)),
            ("nmax", opt(&self.nmax)),
            ("theta", opt(&self.theta)),
            ("tend", opt(&self.tend)),
            ("dt", opt(&self.dt)),
            ("ntraj", opt(&self.ntraj)),
            ("seed", opt(&self.seed)),
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
            ("samples", opt(&self.samples)),
            ("states", opt(&self.states)),
            ("branch", opt(&self.branch)),
            ("gamma_max", opt(&self.gamma_max)),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        if self.g.is_some() && self.u.is_some() {
            return Err(CliError::Usage("give either --g or --U, not both".into()));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Runs a resolved configuration, writes the CSV and returns the exit code.
pub fn execute(cfg: &ExperimentConfig) -> i32 {
    let result = run_experiment(cfg).and_then(|report| {
        match &cfg.out {
            Some(path) => report.write_csv(io::BufWriter::new(fs::File::create(path)?))?,
            None => report.write_csv(io::stdout().lock())?,
        }
        for (k, v) in &report.summary {
            eprintln!("{k} = {v}");
        }
        match report.mismatch {
            Some(msg) => Err(CliError::OracleMismatch(msg)),
            None => Ok(()),
        }
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_value_config_and_flag_precedence() {
        let mut cfg = ExperimentConfig::defaults(Experiment::Pulse);
        cfg.apply_text("# pulse run\ngamma = 1.5\nN0=20   # smaller\n\nseed = 7\n").unwrap();
        assert_eq!((cfg.gamma, cfg.n0, cfg.seed), (1.5, 20, 7));
        cfg.set("gamma", "0.5").unwrap();
        assert_eq!(cfg.gamma, 0.5);
        assert!(cfg.apply_text("gamma 1").is_err());
        assert!(cfg.apply_text("bogus = 1").is_err());
        assert!(cfg.apply_text("experiment = bloch").is_err());
        cfg.apply_text("experiment = pulse").unwrap();
    }

    #[test]
    fn interaction_conversions() {
        let mut cfg = ExperimentConfig::defaults(Experiment::Pulse);
        cfg.set("U", "0.01").unwrap();
        assert!(cfg.g.is_none());
        assert!((cfg.g() - 0.99).abs() < 1e-15);
        cfg.set("g", "0.5").unwrap();
        assert!((cfg.interaction() - 0.5 / 99.0).abs() < 1e-15);
    }

    #[test]
    fn validation() {
        let mut cfg = ExperimentConfig::defaults(Experiment::Pulse);
        cfg.validate().unwrap();
        cfg.dt = 0.0;
        assert!(matches!(cfg.validate(), Err(CliError::Usage(_))));
        let mut cfg = ExperimentConfig::defaults(Experiment::Explosion);
        assert_eq!(cfg.cutoff(), 2000);
        cfg.n_max = Some(200);
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::defaults(Experiment::Oracle);
        cfg.n0 = 7;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::defaults(Experiment::Stationary);
        cfg.n_max = Some(10);
        assert!(cfg.validate().is_err());
        cfg.n_max = None;
        cfg.gamma = f64::NAN;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage(String::new()).exit_code(), 1);
        assert_eq!(CliError::Physics(String::new()).exit_code(), 2);
        assert_eq!(CliError::OracleMismatch(String::new()).exit_code(), 3);
        let trunc = JumpError::Truncation { t: 1.0, n_max: 3 };
        assert_eq!(CliError::from(trunc).exit_code(), 2);
        assert_eq!(CliError::from(LindbladError::NonPhysical { t: 0.0, min_eigenvalue: -1.0 }).exit_code(), 2);
    }

    #[test]
    fn csv_layout() {
        let mut table = Table::default();
        table.push_num("t", vec![0.0, 0.5]);
        table.push_pair("n1", vec![1.0, 2.0], vec![0.0, 0.25]);
        let mut buf = Vec::new();
        table.write_csv(&mut buf, "cfg").unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "# cfg\nt,n1,n1_se\n0,1,0\n0.5,2,0.25\n");
        assert_eq!(table.num("n1_se"), Some(&[0.0, 0.25][..]));
    }

    #[test]
    fn spectrum_onset() {
        let mut cfg = ExperimentConfig::defaults(Experiment::Spectrum);
        cfg.set("g", "0").unwrap();
        let r = cmd_spectrum(&cfg).unwrap();
        assert_eq!(r.summary_value("broken_onset"), Some("2"));
        let branch = r.table.text("branch").unwrap();
        let gamma = r.table.num("gamma").unwrap();
        let first_broken = gamma.iter().zip(branch).find(|(_, b)| b.starts_with("broken")).unwrap().0;
        assert_eq!(*first_broken, 2.0);
    }

    #[test]
    fn first_crossing_examples() {
        assert_eq!(first_crossing(&[0.0, 1.0, 2.0], &[1.0, 6.0, 7.0], 5.0), Some(1.0));
        assert_eq!(first_crossing(&[0.0, 1.0], &[1.0, 2.0], 5.0), None);
    }

    #[test]
    fn args_resolution() {
        let args = Args::try_parse_from(["ptdimer", "pulse", "--gamma", "1.5", "--U", "0.01", "--n0", "10"]).unwrap();
        let cfg = args.resolve().unwrap();
        assert_eq!(cfg.gamma, 1.5);
        assert!((cfg.g() - 0.09).abs() < 1e-15);
        let both = Args::try_parse_from(["ptdimer", "pulse", "--g", "1", "--U", "0.01"]).unwrap();
        assert!(both.resolve().is_err());
        assert!(Args::try_parse_from(["ptdimer", "nonsense"]).is_err());
        let neg = Args::try_parse_from(["ptdimer", "pulse", "--theta", "-0.2"]).unwrap();
        assert_eq!(neg.resolve().unwrap().theta, -0.2);
    }

    #[test]
    fn oracle_small_run_is_consistent() {
        let mut cfg = ExperimentConfig::defaults(Experiment::Oracle);
        cfg.n0 = 2;
        cfg.n_traj = 200;
        cfg.t_end = 1.0;
        cfg.samples = 10;
        cfg.dt = 2e-3;
        let r = cmd_oracle(&cfg).unwrap();
        assert!(r.mismatch.is_none(), "{:?}", r.mismatch);
        // t = 0 is deterministic
        assert_eq!(r.table.num("n1_jump_se").unwrap()[0], 0.0);
    }
}
