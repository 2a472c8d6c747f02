//! Experiment configuration and the four command-line workflows:
//! moment verification, estimator variance grids, optimisation runs and the
//! variance-scaling benchmark.
//!
//! Every command is a pure function of the resolved configuration. Output
//! files are written only after the configuration validates, rows are
//! emitted in (grid index, point, trial) order, and floats use 17 significant
//! digits, so identical inputs give byte-identical files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{run_trials, summarize_trials, EstimatorKind, EstimatorSpec, EstimatorStats};
use crate::mixtures::{mixture_moments, report_from_moments, MixtureChoice, MixtureKind, MomentReport, Perturbation};
use crate::objectives::{with_gaussian_noise, MG1Config, Mg1Queue, Oracle, Quadratic, RosenbrockSimplex, SubprocessOracle};
use crate::optimizers::{interior_bound_holds, run_fwsa, run_mdsa, OptimizerConfig, OptimizerKind, RunError, RunTrace};
use crate::rng::RngStream;
use crate::simplex::{sample_dirichlet, DirichletParam, ProbVector};
use crate::stats::{geometric_grid, loglog_fit, norm2, remove_translation};
use crate::subproblems::{BoxMomentSet, KlBallSet, UncertaintySet};

/// Child streams of the root seed, one per purpose.
const STREAM_POINTS: u64 = 0;
const STREAM_ESTIMATE: u64 = 1;
const STREAM_BASELINE: u64 = 2;
const STREAM_OPTIMIZE: u64 = 3;
const STREAM_MOMENTS: u64 = 4;
const STREAM_BENCH: u64 = 5;

pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Quadratic,
    Rosenbrock,
    Mg1,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub kind: ObjectiveKind,
    /// Coordinates per block (the support size for `mg1`).
    pub n: usize,
    pub blocks: usize,
    /// Standard deviation of additive Gaussian noise.
    pub sigma: f64,
    /// Queue parameters; `n_support` is kept equal to `n`.
    pub mg1: MG1Config,
    /// Shell command for `custom`.
    pub command: Option<String>,
    /// Whether a `custom` program may be called outside the simplex.
    pub accepts_off_simplex: bool,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            kind: ObjectiveKind::Quadratic,
            n: 20,
            blocks: 1,
            sigma: 0.05,
            mg1: MG1Config::default(),
            command: None,
            accepts_off_simplex: false,
        }
    }
}

/// Base points `p ~ Dir(concentration * 1)` for the estimator studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointsConfig {
    pub count: usize,
    pub concentration: f64,
}

impl Default for PointsConfig {
    fn default() -> Self {
        Self { count: 20, concentration: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PointSource {
    /// The first base point drawn as in `points`.
    Dirichlet,
    Explicit { p: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MomentsConfig {
    pub n: usize,
    pub mixture: MixtureChoice,
    pub point: PointSource,
    /// Draws used for the empirical moment estimates.
    pub repetitions: usize,
}

impl Default for MomentsConfig {
    fn default() -> Self {
        Self { n: 10, mixture: MixtureChoice::delta_star(), point: PointSource::Dirichlet, repetitions: 100 }
    }
}

/// One parameter combination of an estimator study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPoint {
    pub sigma: f64,
    pub r: usize,
    pub c: f64,
    pub n: usize,
}

impl GridPoint {
    pub const BENCH_DEFAULT: GridPoint = GridPoint { sigma: 0.05, r: 15, c: 0.05, n: 20 };

    fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidConfig(format!("sigma {} must be nonnegative", self.sigma)));
        }
        if self.r < 1 {
            return Err(Error::InvalidConfig("R must be at least 1".into()));
        }
        if !(self.c > 0.0 && self.c < 1.0) {
            return Err(Error::InvalidConfig(format!("c {} must lie in (0, 1)", self.c)));
        }
        if self.n < 2 {
            return Err(Error::InvalidConfig(format!("n {} must be at least 2", self.n)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    pub estimator: EstimatorKind,
    pub mixture: MixtureChoice,
    pub eps_supp: Option<f64>,
    /// The grid is the Cartesian product of these lists.
    pub sigma: Vec<f64>,
    pub r: Vec<usize>,
    pub c: Vec<f64>,
    pub n: Vec<usize>,
    pub trials: usize,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        let d = GridPoint::BENCH_DEFAULT;
        Self {
            estimator: EstimatorKind::Ffe,
            mixture: MixtureChoice::delta_double_star(),
            eps_supp: None,
            sigma: vec![d.sigma],
            r: vec![d.r],
            c: vec![d.c],
            n: vec![d.n],
            trials: 20,
        }
    }
}

impl EstimateConfig {
    pub fn grid(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &sigma in &self.sigma {
            for &r in &self.r {
                for &c in &self.c {
                    for &n in &self.n {
                        out.push(GridPoint { sigma, r, c, n });
                    }
                }
            }
        }
        out
    }

    fn spec(&self, point: &GridPoint) -> EstimatorSpec {
        EstimatorSpec { kind: self.estimator, c: point.c, r: point.r, mixture: self.mixture, eps_supp: self.eps_supp }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaselineConfig {
    Uniform,
    /// `q_i = 1 + U(0, 1)` normalised, drawn afresh for every trial.
    ShiftedUniform,
    Explicit { p: Vec<f64> },
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig::Uniform
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetConfig {
    Simplex,
    KlBall {
        radius: f64,
        #[serde(default)]
        baseline: BaselineConfig,
    },
    /// `lo_factor * E_b[x^k] <= E_q[x^k] <= hi_factor * E_b[x^k]` for each power `k`.
    BoxMoment {
        powers: Vec<i32>,
        lo_factor: f64,
        hi_factor: f64,
        #[serde(default)]
        baseline: BaselineConfig,
        /// Support values; defaults to the queue support for `mg1`, else `1..=n`.
        #[serde(default)]
        support: Option<Vec<f64>>,
    },
}

impl Default for SetConfig {
    fn default() -> Self {
        SetConfig::Simplex
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StartConfig {
    /// The set's baseline (uniform for the plain simplex).
    Baseline,
    Uniform,
    /// All blocks concatenated.
    Explicit { p: Vec<f64> },
}

impl Default for StartConfig {
    fn default() -> Self {
        StartConfig::Baseline
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeConfig {
    pub method: OptimizerKind,
    pub optimizer: OptimizerConfig,
    pub set: SetConfig,
    pub start: StartConfig,
    pub trials: usize,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            method: OptimizerKind::Mdsa,
            optimizer: OptimizerConfig::default(),
            set: SetConfig::Simplex,
            start: StartConfig::Baseline,
            trials: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Sigma,
    R,
    C,
    N,
}

impl Axis {
    pub fn label(self) -> &'static str {
        match self {
            Axis::Sigma => "sigma",
            Axis::R => "r",
            Axis::C => "c",
            Axis::N => "n",
        }
    }

    fn set(self, at: &GridPoint, x: f64) -> Result<GridPoint> {
        let count = |x: f64| -> Result<usize> {
            if x >= 1.0 && x.fract() == 0.0 && x < u32::MAX as f64 {
                Ok(x as usize)
            } else {
                Err(Error::InvalidConfig(format!("{} grid value {x} is not a positive integer", self.label())))
            }
        };
        let mut g = *at;
        match self {
            Axis::Sigma => g.sigma = x,
            Axis::R => g.r = count(x)?,
            Axis::C => g.c = x,
            Axis::N => g.n = count(x)?,
        }
        Ok(g)
    }
}

/// One axis of the scaling study: vary `axis` over `values`, all else at `at`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisConfig {
    pub axis: Axis,
    pub values: Vec<f64>,
    pub at: GridPoint,
    pub expected_slope: f64,
    pub tolerance: f64,
}

/// Another estimator whose variance must exceed the benchmark estimator's by `min_ratio`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonConfig {
    pub estimator: EstimatorKind,
    pub mixture: MixtureChoice,
    pub min_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub estimator: EstimatorKind,
    pub mixture: MixtureChoice,
    pub eps_supp: Option<f64>,
    pub trials: usize,
    pub axes: Vec<AxisConfig>,
    /// Parameter point at which the comparisons are run.
    pub compare_at: GridPoint,
    pub comparisons: Vec<ComparisonConfig>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        let d = GridPoint::BENCH_DEFAULT;
        Self {
            estimator: EstimatorKind::Ffe,
            mixture: MixtureChoice::delta_double_star(),
            eps_supp: None,
            trials: 20,
            axes: vec![
                AxisConfig {
                    axis: Axis::Sigma,
                    values: (1..=10).map(|i| i as f64 / 100.0).collect(),
                    at: d,
                    expected_slope: 2.0,
                    tolerance: 0.3,
                },
                AxisConfig {
                    axis: Axis::R,
                    values: (0..8).map(|i| (10 + 2 * i) as f64).collect(),
                    at: d,
                    expected_slope: -1.0,
                    tolerance: 0.3,
                },
                AxisConfig {
                    axis: Axis::C,
                    values: geometric_grid(0.0141, 0.1, 33),
                    at: d,
                    expected_slope: -2.0,
                    tolerance: 0.3,
                },
                AxisConfig {
                    axis: Axis::N,
                    values: (1..=9).map(|i| (10 * i) as f64).collect(),
                    at: GridPoint { sigma: 0.05, r: 30, c: 0.1, n: 20 },
                    expected_slope: 2.0,
                    tolerance: 0.4,
                },
            ],
            compare_at: d,
            comparisons: vec![
                ComparisonConfig { estimator: EstimatorKind::Sfe, mixture: MixtureChoice::delta_star(), min_ratio: 10.0 },
                ComparisonConfig { estimator: EstimatorKind::Ffe, mixture: MixtureChoice::delta_star(), min_ratio: 10.0 },
            ],
        }
    }
}

/// The whole experiment description. Every field has a default, and the
/// fully materialised copy is written next to the outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub objective: ObjectiveConfig,
    pub points: PointsConfig,
    pub moments: MomentsConfig,
    pub estimate: EstimateConfig,
    pub optimize: OptimizeConfig,
    pub bench: BenchConfig,
    /// Output directory (overridden by `--out`).
    pub output: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            objective: ObjectiveConfig::default(),
            points: PointsConfig::default(),
            moments: MomentsConfig::default(),
            estimate: EstimateConfig::default(),
            optimize: OptimizeConfig::default(),
            bench: BenchConfig::default(),
            output: "out".into(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Pretty JSON with every default spelled out.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("configuration serialises");
        s.push('\n');
        s
    }

    /// Fills derived fields (the queue support size follows `objective.n`).
    pub fn resolved(mut self) -> Self {
        self.objective.mg1.n_support = self.objective.n;
        self
    }

    /// Rosenbrock on a KL ball of radius 100 with MDSA and FFE/δ**, `n = 40`.
    pub fn rosenbrock_mdsa() -> Self {
        let n = 40;
        let mut cfg = Self::default();
        cfg.objective = ObjectiveConfig { kind: ObjectiveKind::Rosenbrock, n, sigma: 0.01, ..Default::default() };
        cfg.optimize = OptimizeConfig {
            method: OptimizerKind::Mdsa,
            optimizer: OptimizerConfig {
                schedule: crate::optimizers::ScheduleConfig {
                    a: 0.005,
                    alpha_exp: 1.0,
                    b: 4.0 / n as f64,
                    theta_exp: 0.25,
                    beta_exp: 0.0,
                    r0: 10.0,
                    max_iter: 50,
                    ..Default::default()
                },
                probes: 10,
                ..Default::default()
            },
            set: SetConfig::KlBall { radius: 100.0, baseline: BaselineConfig::ShiftedUniform },
            start: StartConfig::Baseline,
            trials: 12,
        };
        cfg.resolved()
    }

    /// M/G/1 waiting time over a moment box (powers 1 and 2, ±20%) with FWSA.
    pub fn mg1_fwsa() -> Self {
        let n = 20;
        let mut cfg = Self::default();
        cfg.objective = ObjectiveConfig { kind: ObjectiveKind::Mg1, n, sigma: 0.0, ..Default::default() };
        cfg.optimize = OptimizeConfig {
            method: OptimizerKind::Fwsa,
            optimizer: OptimizerConfig {
                schedule: crate::optimizers::ScheduleConfig {
                    a: 0.25,
                    alpha_exp: 1.0,
                    b: 0.3,
                    theta_exp: 0.125,
                    beta_exp: 1.0,
                    r0: n as f64 / 5.0,
                    max_iter: 50,
                    ..Default::default()
                },
                probes: 10,
                ..Default::default()
            },
            set: SetConfig::BoxMoment {
                powers: vec![1, 2],
                lo_factor: 0.8,
                hi_factor: 1.2,
                baseline: BaselineConfig::Uniform,
                support: None,
            },
            start: StartConfig::Baseline,
            trials: 5,
        };
        cfg.resolved()
    }

    /// M/G/1 waiting time over a KL ball of radius 0.05 with MDSA.
    pub fn mg1_mdsa() -> Self {
        let n = 20;
        let mut cfg = Self::default();
        cfg.objective = ObjectiveConfig { kind: ObjectiveKind::Mg1, n, sigma: 0.0, ..Default::default() };
        cfg.optimize = OptimizeConfig {
            method: OptimizerKind::Mdsa,
            optimizer: OptimizerConfig {
                schedule: crate::optimizers::ScheduleConfig {
                    a: 0.3,
                    alpha_exp: 1.0,
                    b: 0.3,
                    theta_exp: 0.25,
                    beta_exp: 0.0,
                    r0: n as f64 / 5.0,
                    max_iter: 50,
                    ..Default::default()
                },
                probes: 50,
                ..Default::default()
            },
            set: SetConfig::KlBall { radius: 0.05, baseline: BaselineConfig::Uniform },
            start: StartConfig::Baseline,
            trials: 12,
        };
        cfg.resolved()
    }
}

/// Why a command did not succeed; maps onto the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Unreadable or invalid configuration (exit 1).
    Config(Error),
    /// Oracle, solver or I/O failure while running (exit 2).
    Runtime(Error),
    /// The run completed but a check failed (exit 3).
    Acceptance(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::Acceptance(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "configuration error: {e}"),
            Failure::Runtime(e) => write!(f, "runtime error: {e}"),
            Failure::Acceptance(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl std::error::Error for Failure {}

fn config_err(msg: impl Into<String>) -> Failure {
    Failure::Config(Error::InvalidConfig(msg.into()))
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(";")
}

/// In-memory CSV with a fixed header and LF line endings.
#[derive(Debug, Clone, PartialEq)]
pub struct Csv {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn new(header: Vec<&'static str>) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}

/// Files produced by a command, in write order.
#[derive(Debug, Clone, PartialEq)]
pub struct Outputs {
    pub files: Vec<(String, String)>,
}

impl Outputs {
    fn new(cfg: &ExperimentConfig) -> Self {
        Self { files: vec![(RESOLVED_CONFIG_FILE.into(), cfg.to_json())] }
    }

    fn add(&mut self, name: &str, content: String) {
        self.files.push((name.into(), content));
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_str())
    }

    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        self.files
            .iter()
            .map(|(name, content)| {
                let path = dir.join(name);
                std::fs::write(&path, content)?;
                Ok(path)
            })
            .collect()
    }
}

/// Result of a command: its files plus an optional failure that happened after
/// (some of) them were produced.
pub struct CommandResult {
    pub outputs: Outputs,
    pub failure: Option<Failure>,
}

impl CommandResult {
    fn ok(outputs: Outputs) -> Self {
        Self { outputs, failure: None }
    }
}

pub fn validate_objective(obj: &ObjectiveConfig) -> Result<()> {
    if obj.n < 2 {
        return Err(Error::InvalidConfig(format!("objective.n = {} must be at least 2", obj.n)));
    }
    if obj.blocks < 1 {
        return Err(Error::InvalidConfig("objective.blocks must be at least 1".into()));
    }
    if !(obj.sigma >= 0.0) || !obj.sigma.is_finite() {
        return Err(Error::InvalidConfig(format!("objective.sigma = {} must be nonnegative", obj.sigma)));
    }
    match obj.kind {
        ObjectiveKind::Mg1 => {
            if obj.blocks != 1 {
                return Err(Error::InvalidConfig("the queue objective has a single block".into()));
            }
            obj.mg1.validate().map_err(|e| Error::InvalidConfig(format!("objective.mg1: {e}")))?;
        }
        ObjectiveKind::Custom => {
            if obj.command.as_deref().is_none_or(|c| c.trim().is_empty()) {
                return Err(Error::InvalidConfig("custom objective needs a command".into()));
            }
        }
        _ => {}
    }
    Ok(())
}

/// Builds the oracle for `obj` with `n` coordinates per block and noise `sigma`.
pub fn build_oracle(obj: &ObjectiveConfig, n: usize, sigma: f64) -> Result<Box<dyn Oracle>> {
    let dims = vec![n; obj.blocks];
    let base: Box<dyn Oracle> = match obj.kind {
        ObjectiveKind::Quadratic => Box::new(Quadratic::with_blocks(dims)?),
        ObjectiveKind::Rosenbrock => Box::new(RosenbrockSimplex::with_blocks(dims)?),
        ObjectiveKind::Mg1 => Box::new(Mg1Queue::new(MG1Config { n_support: n, ..obj.mg1.clone() })?),
        ObjectiveKind::Custom => Box::new(SubprocessOracle::new(
            obj.command.clone().unwrap_or_default(),
            dims,
            obj.accepts_off_simplex,
        )?),
    };
    if sigma == 0.0 {
        Ok(base)
    } else {
        Ok(Box::new(with_gaussian_noise(base, sigma)?))
    }
}

/// Base point `i` of dimension `n` per block, `Dir(concentration * 1)` per block.
/// Depends only on (seed, n, i), so different grids share points.
pub fn base_point(root: &RngStream, points: &PointsConfig, n: usize, blocks: usize, i: usize) -> Result<Vec<f64>> {
    let param = DirichletParam::symmetric(n, points.concentration)?;
    let mut rng = root.split(STREAM_POINTS).split(n as u64).split(i as u64).rng();
    let mut out = Vec::with_capacity(n * blocks);
    for _ in 0..blocks {
        out.extend_from_slice(sample_dirichlet(&param, &mut rng).as_slice());
    }
    Ok(out)
}

fn validate_points(points: &PointsConfig) -> Result<()> {
    if points.count < 1 {
        return Err(Error::InvalidConfig("points.count must be at least 1".into()));
    }
    if !(points.concentration > 0.0) || !points.concentration.is_finite() {
        return Err(Error::InvalidConfig("points.concentration must be positive".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------- verify-moments

/// Exact residuals plus Monte Carlo estimates of the first two conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentVerification {
    pub mixture: MixtureKind,
    pub n: usize,
    pub base_point: Vec<f64>,
    pub gamma: f64,
    pub report: MomentReport,
    /// δ*: all three conditions; δ**: the first two.
    pub passed: bool,
    pub repetitions: usize,
    pub empirical_mc1_residual: Option<f64>,
    pub empirical_mc2_residual: Option<f64>,
}

pub fn verify_moments_run(cfg: &ExperimentConfig) -> std::result::Result<MomentVerification, Failure> {
    let m = &cfg.moments;
    let root = RngStream::new(cfg.seed);
    let p = match &m.point {
        PointSource::Dirichlet => {
            if m.n < 2 {
                return Err(config_err(format!("moments.n = {} must be at least 2", m.n)));
            }
            validate_points(&cfg.points).map_err(Failure::Config)?;
            base_point(&root, &cfg.points, m.n, 1, 0).map_err(Failure::Config)?
        }
        PointSource::Explicit { p } => {
            if p.len() != m.n {
                return Err(config_err(format!("moments.point has {} entries but n = {}", p.len(), m.n)));
            }
            p.clone()
        }
    };
    let pv = ProbVector::new(&p).map_err(Failure::Config)?;
    let mix = m.mixture.build(&pv).map_err(Failure::Config)?;
    let exact = mixture_moments(&mix);
    let report = report_from_moments(&exact, mix.gamma());
    let passed = match mix.kind() {
        MixtureKind::DeltaStar => report.passes_all(),
        MixtureKind::DeltaDoubleStar | MixtureKind::Custom => report.passes_first_two(),
    };
    let (emp1, emp2) = if m.repetitions > 0 {
        let n = m.n;
        let stream = root.split(STREAM_MOMENTS);
        let mut mean = vec![0.0; n];
        let mut second = vec![vec![0.0; n]; n];
        for j in 0..m.repetitions {
            let delta = mix.sample(&mut stream.split(j as u64).rng());
            let d: Vec<f64> = delta.iter().zip(&p).map(|(a, b)| a - b).collect();
            for i in 0..n {
                mean[i] += d[i];
                for k in 0..n {
                    second[i][k] += d[i] * d[k];
                }
            }
        }
        let reps = m.repetitions as f64;
        let g = mix.gamma();
        let lambda = 1.0 / n as f64;
        let mc1 = mean.iter().map(|v| (g * v / reps).abs()).fold(0.0, f64::max);
        let mut mc2: f64 = 0.0;
        for i in 0..n {
            for k in 0..n {
                let target = if i == k { 1.0 - lambda } else { -lambda };
                mc2 = mc2.max((g * second[i][k] / reps - target).abs());
            }
        }
        (Some(mc1), Some(mc2))
    } else {
        (None, None)
    };
    Ok(MomentVerification {
        mixture: mix.kind(),
        n: m.n,
        base_point: p,
        gamma: mix.gamma(),
        report,
        passed,
        repetitions: m.repetitions,
        empirical_mc1_residual: emp1,
        empirical_mc2_residual: emp2,
    })
}

pub fn cmd_verify_moments(cfg: &ExperimentConfig) -> std::result::Result<CommandResult, Failure> {
    let cfg = cfg.clone().resolved();
    let v = verify_moments_run(&cfg)?;
    let mut out = Outputs::new(&cfg);
    let mut json = serde_json::to_string_pretty(&v).expect("report serialises");
    json.push('\n');
    out.add("verify_moments.json", json);
    let failure = (!v.passed).then(|| {
        Failure::Acceptance(format!(
            "{} moment residuals exceed tolerance (mc1 {:.3e}, mc2 {:.3e}, mc3 spread {:.3e})",
            v.mixture.label(),
            v.report.mc1_residual,
            v.report.mc2_residual,
            v.report.mc3_spread
        ))
    });
    Ok(CommandResult { outputs: out, failure })
}

// ---------------------------------------------------------------- estimate

/// Raw estimates and summary for one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub point: GridPoint,
    pub stats: EstimatorStats,
    /// `[base point][trial]` estimate vectors.
    pub estimates: Vec<Vec<Vec<f64>>>,
    /// Oracle calls of each trial, same indexing.
    pub budgets: Vec<Vec<usize>>,
}

fn validate_estimate(obj: &ObjectiveConfig, spec_kind: EstimatorKind, grid: &[GridPoint], trials: usize) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("estimator grid is empty".into()));
    }
    for g in grid {
        g.validate()?;
    }
    if trials < 2 {
        return Err(Error::InvalidConfig(format!("trials = {trials} must be at least 2")));
    }
    if spec_kind == EstimatorKind::Cfe && obj.kind == ObjectiveKind::Custom && !obj.accepts_off_simplex {
        return Err(Error::InvalidConfig("cfe needs an objective defined off the simplex".into()));
    }
    if spec_kind == EstimatorKind::Cfe && matches!(obj.kind, ObjectiveKind::Mg1) {
        return Err(Error::InvalidConfig("cfe needs an objective defined off the simplex".into()));
    }
    Ok(())
}

/// Runs `spec_of(point)` at every grid point over the configured base points.
/// Grid point `g` uses stream `stream.split(g)`.
fn run_grid(
    cfg: &ExperimentConfig,
    grid: &[GridPoint],
    trials: usize,
    spec_of: impl Fn(&GridPoint) -> EstimatorSpec,
    stream: &RngStream,
) -> Result<Vec<GridResult>> {
    let root = RngStream::new(cfg.seed);
    grid.iter()
        .enumerate()
        .map(|(g, point)| {
            let oracle = build_oracle(&cfg.objective, point.n, point.sigma)?;
            let points = (0..cfg.points.count)
                .map(|i| base_point(&root, &cfg.points, point.n, cfg.objective.blocks, i))
                .collect::<Result<Vec<_>>>()?;
            let spec = spec_of(point);
            let raw = run_trials(&spec, &oracle, &points, trials, &stream.split(g as u64))?;
            let stats = summarize_trials(&raw)?;
            Ok(GridResult {
                point: *point,
                stats,
                budgets: raw.iter().map(|t| t.iter().map(|e| e.budget_used).collect()).collect(),
                estimates: raw.into_iter().map(|t| t.into_iter().map(|e| e.value).collect()).collect(),
            })
        })
        .collect()
}

pub fn estimate_run(cfg: &ExperimentConfig) -> std::result::Result<Vec<GridResult>, Failure> {
    let e = &cfg.estimate;
    let grid = e.grid();
    validate_objective(&cfg.objective).map_err(Failure::Config)?;
    validate_points(&cfg.points).map_err(Failure::Config)?;
    validate_estimate(&cfg.objective, e.estimator, &grid, e.trials).map_err(Failure::Config)?;
    run_grid(cfg, &grid, e.trials, |p| e.spec(p), &RngStream::new(cfg.seed).split(STREAM_ESTIMATE)).map_err(Failure::Runtime)
}

fn mixture_label(kind: EstimatorKind, mixture: &MixtureChoice) -> &'static str {
    if kind.uses_mixture() {
        mixture.kind().label()
    } else {
        "none"
    }
}

pub fn cmd_estimate(cfg: &ExperimentConfig) -> std::result::Result<CommandResult, Failure> {
    let cfg = cfg.clone().resolved();
    let results = estimate_run(&cfg)?;
    let e = &cfg.estimate;
    let mix = mixture_label(e.estimator, &e.mixture);
    let mut rows = Csv::new(vec![
        "seed", "estimator", "mixture", "sigma", "R", "c", "n", "point", "trial", "budget", "norm", "centered_norm",
        "estimate",
    ]);
    let mut summary = Csv::new(vec![
        "seed", "estimator", "mixture", "sigma", "R", "c", "n", "points", "trials", "v_s", "mean_norm", "budget",
    ]);
    for res in &results {
        let gp = &res.point;
        let dims = vec![gp.n; cfg.objective.blocks];
        let common = |rest: Vec<String>| {
            let mut row = vec![
                cfg.seed.to_string(),
                e.estimator.label().into(),
                mix.into(),
                fmt_f64(gp.sigma),
                gp.r.to_string(),
                fmt_f64(gp.c),
                gp.n.to_string(),
            ];
            row.extend(rest);
            row
        };
        for (i, point) in res.estimates.iter().enumerate() {
            for (j, est) in point.iter().enumerate() {
                rows.push(common(vec![
                    i.to_string(),
                    j.to_string(),
                    res.budgets[i][j].to_string(),
                    fmt_f64(norm2(est)),
                    fmt_f64(norm2(&remove_translation(est, &dims))),
                    fmt_vec(est),
                ]));
            }
        }
        summary.push(common(vec![
            res.estimates.len().to_string(),
            res.stats.trials.to_string(),
            fmt_f64(res.stats.variance_scalar),
            fmt_f64(norm2(&res.stats.mean_estimate)),
            res.stats.budget_used.to_string(),
        ]));
    }
    let mut out = Outputs::new(&cfg);
    out.add("estimate.csv", rows.render());
    out.add("estimate_summary.csv", summary.render());
    Ok(CommandResult::ok(out))
}

// ---------------------------------------------------------------- optimize

/// Resolved per-block sets, baseline and start for an optimisation run.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub sets: Vec<UncertaintySet>,
    pub baseline: Vec<f64>,
    pub start: Vec<f64>,
}

fn resolve_baseline(b: &BaselineConfig, n: usize, stream: &RngStream) -> Result<ProbVector> {
    use rand::Rng;
    match b {
        BaselineConfig::Uniform => ProbVector::uniform(n),
        BaselineConfig::ShiftedUniform => {
            let mut rng = stream.rng();
            let q: Vec<f64> = (0..n).map(|_| 1.0 + rng.random::<f64>()).collect();
            ProbVector::new(&q)
        }
        BaselineConfig::Explicit { p } => {
            if p.len() != n {
                return Err(Error::InvalidConfig(format!("baseline has {} entries, expected {n}", p.len())));
            }
            ProbVector::new(p)
        }
    }
}

/// Sets, baseline and start of trial `trial`. Random baselines of block `b`
/// use stream `root.split(2).split(trial).split(b)`.
pub fn build_problem(cfg: &ExperimentConfig, trial: usize) -> Result<Problem> {
    let obj = &cfg.objective;
    let n = obj.n;
    let root = RngStream::new(cfg.seed).split(STREAM_BASELINE).split(trial as u64);
    let mut sets = Vec::with_capacity(obj.blocks);
    let mut baseline = Vec::with_capacity(n * obj.blocks);
    for b in 0..obj.blocks {
        let stream = root.split(b as u64);
        let (set, pb) = match &cfg.optimize.set {
            SetConfig::Simplex => (UncertaintySet::simplex(n)?, ProbVector::uniform(n)?),
            SetConfig::KlBall { radius, baseline } => {
                let pb = resolve_baseline(baseline, n, &stream)?;
                (UncertaintySet::KlBall(KlBallSet::new(pb.clone(), *radius)?), pb)
            }
            SetConfig::BoxMoment { powers, lo_factor, hi_factor, baseline, support } => {
                let pb = resolve_baseline(baseline, n, &stream)?;
                let support = match support {
                    Some(s) => s.clone(),
                    None if obj.kind == ObjectiveKind::Mg1 => MG1Config { n_support: n, ..obj.mg1.clone() }.support_points(),
                    None => (1..=n).map(|i| i as f64).collect(),
                };
                let set = BoxMomentSet::relative_moments(&support, powers, &pb, *lo_factor, *hi_factor)?;
                (UncertaintySet::BoxMoment(set), pb)
            }
        };
        sets.push(set);
        baseline.extend_from_slice(pb.as_slice());
    }
    let start = match &cfg.optimize.start {
        StartConfig::Baseline => baseline.clone(),
        StartConfig::Uniform => vec![1.0 / n as f64; n * obj.blocks],
        StartConfig::Explicit { p } => p.clone(),
    };
    Ok(Problem { sets, baseline, start })
}

/// Runs every trial; trial `t` uses stream `root.split(3).split(t)`.
/// Setup errors are configuration failures; per-trial errors are returned in place.
pub fn optimize_run(
    cfg: &ExperimentConfig,
) -> std::result::Result<Vec<std::result::Result<RunTrace, RunError>>, Failure> {
    let o = &cfg.optimize;
    validate_objective(&cfg.objective).map_err(Failure::Config)?;
    o.optimizer.schedule.validate().map_err(Failure::Config)?;
    o.optimizer.prox.validate().map_err(Failure::Config)?;
    if o.trials < 1 {
        return Err(config_err("optimize.trials must be at least 1"));
    }
    if o.optimizer.probes < 1 {
        return Err(config_err("optimize.optimizer.probes must be at least 1"));
    }
    let problems = (0..o.trials).map(|t| build_problem(cfg, t)).collect::<Result<Vec<_>>>().map_err(Failure::Config)?;
    let oracle = build_oracle(&cfg.objective, cfg.objective.n, cfg.objective.sigma).map_err(Failure::Config)?;
    if o.optimizer.estimator == EstimatorKind::Cfe && !oracle.spec().accepts_off_simplex {
        return Err(config_err("cfe needs an objective defined off the simplex"));
    }
    for problem in &problems {
        for (b, set) in problem.sets.iter().enumerate() {
            let n = cfg.objective.n;
            let block = &problem.start.get(b * n..(b + 1) * n).ok_or_else(|| {
                config_err(format!("start has {} entries, expected {}", problem.start.len(), n * cfg.objective.blocks))
            })?;
            let v = set.violation(block);
            if v > o.optimizer.prox.lp_tol {
                return Err(config_err(format!("start point violates the {} set by {v:.3e}", set.label())));
            }
        }
    }
    let stream = RngStream::new(cfg.seed).split(STREAM_OPTIMIZE);
    let run_one = |t: usize| {
        let s = stream.split(t as u64);
        let problem = &problems[t];
        match o.method {
            OptimizerKind::Fwsa => run_fwsa(&oracle, &problem.sets, &o.optimizer, &problem.start, &s),
            OptimizerKind::Mdsa => run_mdsa(&oracle, &problem.sets, &o.optimizer, &problem.start, &s),
        }
    };
    Ok(if oracle.spec().concurrent_safe {
        (0..o.trials).into_par_iter().map(run_one).collect()
    } else {
        (0..o.trials).map(run_one).collect()
    })
}

pub fn cmd_optimize(cfg: &ExperimentConfig) -> std::result::Result<CommandResult, Failure> {
    let cfg = cfg.clone().resolved();
    let runs = optimize_run(&cfg)?;
    let method = cfg.optimize.method;
    let criterion = match method {
        OptimizerKind::Fwsa => "fw_gap",
        OptimizerKind::Mdsa => "prox_divergence",
    };
    let mut trace = Csv::new(vec![
        "trial", "k", "objective", criterion, "step", "c", "R", "gamma", "oracle_calls", "min_entry", "interior_bound",
        "kkt_residual", "violation", "p",
    ]);
    let mut finals = Csv::new(vec![
        "trial", "status", "iterations", "initial_objective", "final_objective", "oracle_calls", "probe_calls",
        "interior_ok",
    ]);
    let mut failure = None;
    let traces: Vec<&RunTrace> = runs
        .iter()
        .map(|r| match r {
            Ok(t) => t,
            Err(e) => &e.trace,
        })
        .collect();
    for (t, (run, tr)) in runs.iter().zip(&traces).enumerate() {
        for r in &tr.records {
            trace.push(vec![
                t.to_string(),
                r.k.to_string(),
                fmt_f64(r.objective),
                fmt_f64(r.criterion),
                fmt_f64(r.step),
                fmt_f64(r.c),
                r.r.to_string(),
                fmt_opt(r.gamma),
                r.oracle_calls.to_string(),
                fmt_f64(r.min_entry),
                fmt_opt(r.interior_bound),
                fmt_f64(r.kkt_residual),
                fmt_f64(r.violation),
                fmt_vec(&r.p),
            ]);
        }
        if let Err(e) = run {
            if failure.is_none() {
                failure = Some(Failure::Runtime(Error::OracleFailure(format!("trial {t}: {e}"))));
            }
        }
        if !tr.records.is_empty() {
            finals.push(vec![
                t.to_string(),
                if run.is_ok() { "ok" } else { "error" }.into(),
                tr.records.len().to_string(),
                fmt_opt(tr.initial_objective()),
                fmt_opt(tr.final_objective),
                tr.oracle_calls().to_string(),
                tr.probe_calls.to_string(),
                interior_bound_holds(tr).to_string(),
            ]);
        }
    }
    let mut mean = Csv::new(vec!["k", "trials", "objective_mean", "criterion_mean", "min_entry_mean", "oracle_calls_mean"]);
    let max_k = traces.iter().map(|t| t.records.len()).max().unwrap_or(0);
    for k in 0..max_k {
        let recs: Vec<_> = traces.iter().filter_map(|t| t.records.get(k)).collect();
        let m = |f: &dyn Fn(&crate::optimizers::IterationRecord) -> f64| {
            recs.iter().map(|r| f(r)).sum::<f64>() / recs.len() as f64
        };
        mean.push(vec![
            (k + 1).to_string(),
            recs.len().to_string(),
            fmt_f64(m(&|r| r.objective)),
            fmt_f64(m(&|r| r.criterion)),
            fmt_f64(m(&|r| r.min_entry)),
            fmt_f64(m(&|r| r.oracle_calls as f64)),
        ]);
    }
    let mut out = Outputs::new(&cfg);
    out.add("optimize.csv", trace.render());
    out.add("optimize_mean.csv", mean.render());
    out.add("optimize_final.csv", finals.render());
    let mut warnings = String::new();
    for w in cfg.optimize.optimizer.schedule.warnings(method) {
        let _ = writeln!(warnings, "{w}");
    }
    out.add("warnings.txt", warnings);
    Ok(CommandResult { outputs: out, failure })
}

// ---------------------------------------------------------------- bench

/// Log-log fit of `v_s` against one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeReport {
    pub axis: Axis,
    pub fitted_slope: f64,
    pub r_squared: f64,
    /// `(x, v_s)` pairs.
    pub points: Vec<(f64, f64)>,
    pub expected_slope: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub estimator: EstimatorKind,
    pub mixture: MixtureKind,
    pub variance: f64,
    pub reference_variance: f64,
    pub ratio: f64,
    pub min_ratio: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub slopes: Vec<SlopeReport>,
    pub ratios: Vec<RatioReport>,
}

impl BenchReport {
    pub fn passed(&self) -> bool {
        self.slopes.iter().all(|s| s.passed) && self.ratios.iter().all(|r| r.passed)
    }
}

pub fn fit_slope(axis: &AxisConfig, points: Vec<(f64, f64)>) -> Result<SlopeReport> {
    if points.len() < 3 {
        return Err(Error::InsufficientPoints { need: 3, got: points.len() });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let (fitted_slope, r_squared) = loglog_fit(&xs, &ys).unwrap_or((f64::NAN, f64::NAN));
    Ok(SlopeReport {
        axis: axis.axis,
        fitted_slope,
        r_squared,
        points,
        expected_slope: axis.expected_slope,
        tolerance: axis.tolerance,
        passed: (fitted_slope - axis.expected_slope).abs() <= axis.tolerance,
    })
}

fn validate_bench(cfg: &ExperimentConfig) -> Result<Vec<Vec<GridPoint>>> {
    let b = &cfg.bench;
    validate_objective(&cfg.objective)?;
    validate_points(&cfg.points)?;
    let mut grids = Vec::with_capacity(b.axes.len());
    for a in &b.axes {
        if a.values.len() < 3 {
            return Err(Error::InsufficientPoints { need: 3, got: a.values.len() });
        }
        if !(a.tolerance >= 0.0) {
            return Err(Error::InvalidConfig("slope tolerance must be nonnegative".into()));
        }
        let grid = a.values.iter().map(|&x| a.axis.set(&a.at, x)).collect::<Result<Vec<_>>>()?;
        validate_estimate(&cfg.objective, b.estimator, &grid, b.trials)?;
        grids.push(grid);
    }
    for c in &b.comparisons {
        validate_estimate(&cfg.objective, c.estimator, &[b.compare_at], b.trials)?;
        if !(c.min_ratio > 0.0) {
            return Err(Error::InvalidConfig("min_ratio must be positive".into()));
        }
    }
    Ok(grids)
}

/// Axis `a` uses stream `root.split(5).split(a)`; the comparisons use
/// `root.split(5).split(axes + 1 + j)` and the reference `root.split(5).split(axes)`.
pub fn bench_run(cfg: &ExperimentConfig) -> std::result::Result<BenchReport, Failure> {
    let b = &cfg.bench;
    let grids = validate_bench(cfg).map_err(Failure::Config)?;
    let spec = |kind, mixture, p: &GridPoint| EstimatorSpec { kind, c: p.c, r: p.r, mixture, eps_supp: b.eps_supp };
    let root = RngStream::new(cfg.seed).split(STREAM_BENCH);
    let stream_cfg = |i: usize| root.split(i as u64);
    let mut slopes = Vec::with_capacity(b.axes.len());
    for (a, (axis, grid)) in b.axes.iter().zip(&grids).enumerate() {
        let results = run_grid(cfg, grid, b.trials, |p| spec(b.estimator, b.mixture, p), &stream_cfg(a))
            .map_err(Failure::Runtime)?;
        let points: Vec<(f64, f64)> =
            axis.values.iter().zip(&results).map(|(x, r)| (*x, r.stats.variance_scalar)).collect();
        slopes.push(fit_slope(axis, points).map_err(Failure::Config)?);
    }
    let mut ratios = Vec::with_capacity(b.comparisons.len());
    if !b.comparisons.is_empty() {
        let at = [b.compare_at];
        let reference = run_grid(cfg, &at, b.trials, |p| spec(b.estimator, b.mixture, p), &stream_cfg(b.axes.len()))
            .map_err(Failure::Runtime)?[0]
            .stats
            .variance_scalar;
        for (j, c) in b.comparisons.iter().enumerate() {
            let v = run_grid(cfg, &at, b.trials, |p| spec(c.estimator, c.mixture, p), &stream_cfg(b.axes.len() + 1 + j))
                .map_err(Failure::Runtime)?[0]
                .stats
                .variance_scalar;
            let ratio = v / reference;
            ratios.push(RatioReport {
                estimator: c.estimator,
                mixture: c.mixture.kind(),
                variance: v,
                reference_variance: reference,
                ratio,
                min_ratio: c.min_ratio,
                passed: ratio >= c.min_ratio,
            });
        }
    }
    Ok(BenchReport { slopes, ratios })
}

pub fn cmd_bench(cfg: &ExperimentConfig) -> std::result::Result<CommandResult, Failure> {
    let cfg = cfg.clone().resolved();
    let report = bench_run(&cfg)?;
    let b = &cfg.bench;
    let mut out = Outputs::new(&cfg);
    for s in &report.slopes {
        let mut csv = Csv::new(vec!["x", "v_s"]);
        for (x, v) in &s.points {
            csv.push(vec![fmt_f64(*x), fmt_f64(*v)]);
        }
        out.add(&format!("bench_{}.csv", s.axis.label()), csv.render());
    }
    let mut slopes =
        Csv::new(vec!["axis", "estimator", "mixture", "slope", "r_squared", "expected", "tolerance", "points", "pass"]);
    for s in &report.slopes {
        slopes.push(vec![
            s.axis.label().into(),
            b.estimator.label().into(),
            mixture_label(b.estimator, &b.mixture).into(),
            fmt_f64(s.fitted_slope),
            fmt_f64(s.r_squared),
            fmt_f64(s.expected_slope),
            fmt_f64(s.tolerance),
            s.points.len().to_string(),
            s.passed.to_string(),
        ]);
    }
    out.add("bench_slopes.csv", slopes.render());
    let mut ratios = Csv::new(vec!["estimator", "mixture", "v_s", "reference_v_s", "ratio", "min_ratio", "pass"]);
    for r in &report.ratios {
        ratios.push(vec![
            r.estimator.label().into(),
            r.mixture.label().into(),
            fmt_f64(r.variance),
            fmt_f64(r.reference_variance),
            fmt_f64(r.ratio),
            fmt_f64(r.min_ratio),
            r.passed.to_string(),
        ]);
    }
    out.add("bench_ratios.csv", ratios.render());
    let failure = (!report.passed()).then(|| {
        let bad: Vec<String> = report
            .slopes
            .iter()
            .filter(|s| !s.passed)
            .map(|s| format!("{} slope {:.3} (expected {} ± {})", s.axis.label(), s.fitted_slope, s.expected_slope, s.tolerance))
            .chain(
                report
                    .ratios
                    .iter()
                    .filter(|r| !r.passed)
                    .map(|r| format!("{}/{} ratio {:.3} < {}", r.estimator.label(), r.mixture.label(), r.ratio, r.min_ratio)),
            )
            .collect();
        Failure::Acceptance(bad.join("; "))
    });
    Ok(CommandResult { outputs: out, failure })
}
