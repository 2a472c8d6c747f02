//! Black-box objective oracles.
//!
//! An oracle returns one (possibly noisy) evaluation per call. Randomness comes
//! only from the supplied generator, so evaluation is a pure function of
//! `(input, stream)`.

use std::io::Write as _;
use std::process::{Command, Stdio};

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::simplex::NEGATIVE_TOL;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    Quadratic,
    RosenbrockSimplex,
    Mg1Queue,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    pub kind: OracleKind,
    pub block_dims: Vec<usize>,
    /// Whether inputs off the simplex (needed by the central estimator) are valid.
    pub accepts_off_simplex: bool,
    /// Whether evaluations may run on several threads at once.
    pub concurrent_safe: bool,
    pub noise_sigma: f64,
}

impl OracleSpec {
    pub fn new(kind: OracleKind, block_dims: Vec<usize>) -> Result<Self> {
        if block_dims.is_empty() {
            return Err(Error::InvalidParam("block_dims must be nonempty".into()));
        }
        if let Some(&d) = block_dims.iter().find(|&&d| d < 2) {
            return Err(Error::DimensionTooSmall(d));
        }
        Ok(Self { kind, block_dims, accepts_off_simplex: true, concurrent_safe: true, noise_sigma: 0.0 })
    }

    pub fn dim(&self) -> usize {
        self.block_dims.iter().sum()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(())
    }
}

pub trait Oracle: Sync {
    fn spec(&self) -> &OracleSpec;
    fn evaluate(&self, x: &[f64], rng: &mut StreamRng) -> Result<f64>;
}

impl<O: Oracle + ?Sized> Oracle for &O {
    fn spec(&self) -> &OracleSpec {
        (**self).spec()
    }
    fn evaluate(&self, x: &[f64], rng: &mut StreamRng) -> Result<f64> {
        (**self).evaluate(x, rng)
    }
}

impl<O: Oracle + ?Sized> Oracle for Box<O> {
    fn spec(&self) -> &OracleSpec {
        (**self).spec()
    }
    fn evaluate(&self, x: &[f64], rng: &mut StreamRng) -> Result<f64> {
        (**self).evaluate(x, rng)
    }
}

/// `||p - 1/n||^2` for a single block.
pub fn eval_quadratic(p: &[f64]) -> f64 {
    let center = 1.0 / p.len() as f64;
    p.iter().map(|v| (v - center) * (v - center)).sum()
}

/// Directional gradient of [`eval_quadratic`]: `2p - 2||p||^2 1`.
pub fn quadratic_gradient(p: &[f64]) -> Vec<f64> {
    let sq: f64 = p.iter().map(|v| v * v).sum();
    p.iter().map(|v| 2.0 * v - 2.0 * sq).collect()
}

pub fn rosenbrock(x: &[f64]) -> f64 {
    x.windows(2)
        .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
        .sum()
}

/// Rosenbrock shifted so that the uniform point maps to its minimiser.
pub fn eval_rosenbrock_simplex(p: &[f64]) -> f64 {
    let shift = 1.0 - 1.0 / p.len() as f64;
    let x: Vec<f64> = p.iter().map(|v| v + shift).collect();
    rosenbrock(&x)
}

fn blockwise(spec: &OracleSpec, x: &[f64], f: fn(&[f64]) -> f64) -> f64 {
    let mut offset = 0;
    let mut total = 0.0;
    for &d in &spec.block_dims {
        total += f(&x[offset..offset + d]);
        offset += d;
    }
    total
}

/// Sum over blocks of `||p^i - 1/n_i||^2`. Noiseless, defined off the simplex.
#[derive(Debug, Clone)]
pub struct Quadratic {
    spec: OracleSpec,
}

impl Quadratic {
    pub fn new(n: usize) -> Result<Self> {
        Self::with_blocks(vec![n])
    }

    pub fn with_blocks(block_dims: Vec<usize>) -> Result<Self> {
        Ok(Self { spec: OracleSpec::new(OracleKind::Quadratic, block_dims)? })
    }
}

impl Oracle for Quadratic {
    fn spec(&self) -> &OracleSpec {
        &self.spec
    }
    fn evaluate(&self, x: &[f64], _rng: &mut StreamRng) -> Result<f64> {
        self.spec.check_dim(x)?;
        Ok(blockwise(&self.spec, x, eval_quadratic))
    }
}

/// Sum over blocks of the shifted Rosenbrock function.
#[derive(Debug, Clone)]
pub struct RosenbrockSimplex {
    spec: OracleSpec,
}

impl RosenbrockSimplex {
    pub fn new(n: usize) -> Result<Self> {
        Self::with_blocks(vec![n])
    }

    pub fn with_blocks(block_dims: Vec<usize>) -> Result<Self> {
        Ok(Self { spec: OracleSpec::new(OracleKind::RosenbrockSimplex, block_dims)? })
    }
}

impl Oracle for RosenbrockSimplex {
    fn spec(&self) -> &OracleSpec {
        &self.spec
    }
    fn evaluate(&self, x: &[f64], _rng: &mut StreamRng) -> Result<f64> {
        self.spec.check_dim(x)?;
        Ok(blockwise(&self.spec, x, eval_rosenbrock_simplex))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MG1Config {
    pub n_support: usize,
    pub horizon: usize,
    pub arrival_rate: f64,
    pub support_lo: f64,
    pub support_step_span: f64,
}

impl Default for MG1Config {
    fn default() -> Self {
        Self { n_support: 20, horizon: 500, arrival_rate: 1.0, support_lo: 0.1, support_step_span: 1.1 }
    }
}

impl MG1Config {
    pub fn with_support(n_support: usize) -> Self {
        Self { n_support, ..Self::default() }
    }

    /// `x_i = lo + span (i-1)/(n-1)`.
    pub fn support_points(&self) -> Vec<f64> {
        let n = self.n_support;
        (0..n)
            .map(|i| self.support_lo + self.support_step_span * i as f64 / (n - 1) as f64)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_support < 2 {
            return Err(Error::DimensionTooSmall(self.n_support));
        }
        if self.horizon < 1 {
            return Err(Error::InvalidCount { name: "horizon", min: 1, got: self.horizon });
        }
        if !(self.arrival_rate > 0.0) || !(self.support_step_span > 0.0) || !self.support_lo.is_finite() {
            return Err(Error::InvalidParam("arrival_rate and support span must be positive".into()));
        }
        Ok(())
    }
}

/// Average of `W_1..W_h` under `W_1 = 0`, `W_{k+1} = max(0, W_k + S_k - A_{k+1})`.
/// `interarrivals[k]` is `A_{k+1}` (so `interarrivals[0]` is unused).
pub fn lindley_mean_wait(services: &[f64], interarrivals: &[f64]) -> f64 {
    let h = services.len().min(interarrivals.len());
    if h == 0 {
        return 0.0;
    }
    let mut w = 0.0;
    let mut total = 0.0;
    for k in 0..h {
        total += w;
        if k + 1 < h {
            w = f64::max(0.0, w + services[k] - interarrivals[k + 1]);
        }
    }
    total / h as f64
}

/// Index with `u < F(i)`, skipping zero-mass atoms.
fn inverse_cdf(cum: &[f64], u: f64) -> usize {
    let idx = cum.partition_point(|&c| c <= u);
    if idx < cum.len() {
        idx
    } else {
        // u landed above the rounded total; take the last atom with mass.
        let last = cum[cum.len() - 1];
        cum.iter().position(|&c| c >= last).unwrap_or(cum.len() - 1)
    }
}

/// One sample path of the average wait of the first `horizon` customers.
/// Each step draws the service uniform before the interarrival time, so
/// paired streams couple service times across different pmfs.
pub fn eval_mg1(p: &[f64], cfg: &MG1Config, rng: &mut StreamRng) -> Result<f64> {
    if p.len() != cfg.n_support {
        return Err(Error::DimensionMismatch { expected: cfg.n_support, got: p.len() });
    }
    if let Some(i) = p.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    if let Some(i) = p.iter().position(|v| *v < -NEGATIVE_TOL) {
        return Err(Error::NegativeMass { index: i, value: p[i] });
    }
    let x = cfg.support_points();
    let mut cum = Vec::with_capacity(p.len());
    let mut acc = 0.0;
    for v in p {
        acc += v.max(0.0);
        cum.push(acc);
    }
    if !(acc > 0.0) {
        return Err(Error::ZeroTotal);
    }
    let exp = Exp::new(cfg.arrival_rate).map_err(|e| Error::InvalidParam(e.to_string()))?;
    let mut w = 0.0;
    let mut total = 0.0;
    for k in 0..cfg.horizon {
        total += w;
        if k + 1 < cfg.horizon {
            let u: f64 = rng.random::<f64>() * acc;
            let s = x[inverse_cdf(&cum, u)];
            let a: f64 = exp.sample(rng);
            w = f64::max(0.0, w + s - a);
        }
    }
    Ok(total / cfg.horizon as f64)
}

/// Average customer wait in an M/G/1 queue whose service pmf is the input.
#[derive(Debug, Clone)]
pub struct Mg1Queue {
    spec: OracleSpec,
    cfg: MG1Config,
}

impl Mg1Queue {
    pub fn new(cfg: MG1Config) -> Result<Self> {
        cfg.validate()?;
        let mut spec = OracleSpec::new(OracleKind::Mg1Queue, vec![cfg.n_support])?;
        spec.accepts_off_simplex = false;
        Ok(Self { spec, cfg })
    }

    pub fn config(&self) -> &MG1Config {
        &self.cfg
    }
}

impl Oracle for Mg1Queue {
    fn spec(&self) -> &OracleSpec {
        &self.spec
    }
    fn evaluate(&self, x: &[f64], rng: &mut StreamRng) -> Result<f64> {
        eval_mg1(x, &self.cfg, rng)
    }
}

/// Adds independent `N(0, sigma^2)` noise to every evaluation of `base`.
#[derive(Debug, Clone)]
pub struct NoisyOracle<O> {
    base: O,
    spec: OracleSpec,
    sigma: f64,
}

pub fn with_gaussian_noise<O: Oracle>(base: O, sigma: f64) -> Result<NoisyOracle<O>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParam(format!("sigma = {sigma}")));
    }
    let mut spec = base.spec().clone();
    spec.noise_sigma = (spec.noise_sigma.powi(2) + sigma * sigma).sqrt();
    Ok(NoisyOracle { base, spec, sigma })
}

impl<O> NoisyOracle<O> {
    pub fn inner(&self) -> &O {
        &self.base
    }
}

impl<O: Oracle> Oracle for NoisyOracle<O> {
    fn spec(&self) -> &OracleSpec {
        &self.spec
    }
    fn evaluate(&self, x: &[f64], rng: &mut StreamRng) -> Result<f64> {
        let value = self.base.evaluate(x, rng)?;
        if self.sigma == 0.0 {
            return Ok(value);
        }
        let z: f64 = StandardNormal.sample(rng);
        Ok(value + self.sigma * z)
    }
}

/// Oracle backed by a closure.
pub struct FnOracle<F> {
    spec: OracleSpec,
    f: F,
}

impl<F> FnOracle<F>
where
    F: Fn(&[f64], &mut StreamRng) -> f64 + Sync,
{
    pub fn new(spec: OracleSpec, f: F) -> Self {
        Self { spec, f }
    }
}

impl<F> Oracle for FnOracle<F>
where
    F: Fn(&[f64], &mut StreamRng) -> f64 + Sync,
{
    fn spec(&self) -> &OracleSpec {
        &self.spec
    }
    fn evaluate(&self, x: &[f64], rng: &mut StreamRng) -> Result<f64> {
        self.spec.check_dim(x)?;
        let v = (self.f)(x, rng);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::OracleFailure(format!("non-finite value {v}")))
        }
    }
}

/// Environment variable carrying a per-evaluation seed to external oracles.
pub const ORACLE_SEED_ENV: &str = "DIRMIX_ORACLE_SEED";

/// External program run through `sh -c` once per evaluation. The point is
/// written to stdin as one line of whitespace-separated numbers and a single
/// number is read back from stdout. A nonzero exit status is a failure.
#[derive(Debug, Clone)]
pub struct SubprocessOracle {
    spec: OracleSpec,
    command: String,
}

impl SubprocessOracle {
    pub fn new(command: impl Into<String>, block_dims: Vec<usize>, accepts_off_simplex: bool) -> Result<Self> {
        let mut spec = OracleSpec::new(OracleKind::Custom, block_dims)?;
        spec.accepts_off_simplex = accepts_off_simplex;
        spec.concurrent_safe = false;
        Ok(Self { spec, command: command.into() })
    }
}

impl Oracle for SubprocessOracle {
    fn spec(&self) -> &OracleSpec {
        &self.spec
    }
    fn evaluate(&self, x: &[f64], rng: &mut StreamRng) -> Result<f64> {
        self.spec.check_dim(x)?;
        let seed: u64 = rng.random();
        let line = x.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" ");
        let fail = |what: String| Error::OracleFailure(format!("`{}`: {what}", self.command));
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .env(ORACLE_SEED_ENV, seed.to_string())
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| fail(e.to_string()))?;
        if let Some(mut stdin) = child.stdin.take() {
            // A program that ignores stdin may close it early; that is not an error.
            let _ = writeln!(stdin, "{line}");
        }
        let out = child.wait_with_output().map_err(|e| fail(e.to_string()))?;
        if !out.status.success() {
            return Err(fail(format!("exited with {}", out.status)));
        }
        let text = String::from_utf8_lossy(&out.stdout);
        let value: f64 = text.trim().parse().map_err(|_| fail(format!("unparseable output {:?}", text.trim())))?;
        if !value.is_finite() {
            return Err(fail(format!("non-finite value {value}")));
        }
        Ok(value)
    }
}
