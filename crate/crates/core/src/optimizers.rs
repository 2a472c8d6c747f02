//! Frank-Wolfe (FWSA) and mirror-descent (MDSA) stochastic approximation.
//!
//! Each iteration `k = 1, 2, ...`:
//! 1. builds a Dirichlet mixture at `p_k` (per block, shared multiplier `gamma_k`);
//! 2. estimates the gradient with `c_k = b/k^theta` and `R_k = floor(R0 k^beta) + 1`;
//! 3. FWSA: `q_k = argmin_U psi'q` per block, then `p_{k+1} = (1 - a/k) p_k + (a/k) q_k`;
//!    MDSA: `p_{k+1}` is the entropic prox step with `rho_k = a/k^alpha`.
//!
//! Iteration `k` draws all its randomness from `stream.split(k)`, so a trace is
//! a pure function of the configuration and seed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{EstimatorKind, EstimatorSpec};
use crate::mixtures::{build_multi_with_gamma, gamma_lower_bound, BlockSpec, MixtureChoice, Perturbation};
use crate::objectives::Oracle;
use crate::rng::RngStream;
use crate::simplex::ProbVector;
use crate::stats::CompensatedSum;
use crate::subproblems::{fw_gap, fw_linear_min_detailed, kl_div, md_prox_detailed, ProxConfig, UncertaintySet};

/// Iterates whose smallest entry falls below this are treated as collapsed.
pub const BOUNDARY_TOL: f64 = 1e-12;
/// Relative slack allowed when checking the product lower bound on the smallest entry.
pub const INTERIOR_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    /// Step scale: `eps_k = a/k` (FWSA) or `rho_k = a/k^alpha` (MDSA).
    pub a: f64,
    pub alpha_exp: f64,
    /// Perturbation scale: `c_k = b/k^theta`.
    pub b: f64,
    pub theta_exp: f64,
    /// Replication growth: `R_k = floor(R0 k^beta) + 1`.
    pub beta_exp: f64,
    pub r0: f64,
    pub max_iter: usize,
    /// If set, `gamma_k = gamma0 / min(p_k)^2`; otherwise each block uses its
    /// mixture's own rule and the largest value is shared.
    pub gamma0: Option<f64>,
    /// Assumed decay exponent of `min p_k`, used only for the MDSA exponent check.
    pub decay_exp: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            a: 0.25,
            alpha_exp: 1.0,
            b: 0.3,
            theta_exp: 0.125,
            beta_exp: 1.0,
            r0: 4.0,
            max_iter: 50,
            gamma0: None,
            decay_exp: 0.0,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(format!("schedule: {what}")));
        if !(self.a > 0.0) || !self.a.is_finite() {
            return bad("a must be positive");
        }
        if !(self.b > 0.0) || !self.b.is_finite() {
            return bad("b must be positive");
        }
        if !(self.r0 >= 1.0) || !self.r0.is_finite() {
            return bad("R0 must be at least 1");
        }
        if ![self.alpha_exp, self.theta_exp, self.beta_exp, self.decay_exp].iter().all(|v| v.is_finite()) {
            return bad("exponents must be finite");
        }
        if let Some(g) = self.gamma0 {
            if !(g > 0.0) || !g.is_finite() {
                return bad("gamma0 must be positive");
            }
        }
        Ok(())
    }

    pub fn eps(&self, k: usize) -> f64 {
        self.a / k as f64
    }

    pub fn rho(&self, k: usize) -> f64 {
        self.a / (k as f64).powf(self.alpha_exp)
    }

    pub fn c(&self, k: usize) -> f64 {
        self.b / (k as f64).powf(self.theta_exp)
    }

    pub fn r(&self, k: usize) -> usize {
        (self.r0 * (k as f64).powf(self.beta_exp)).floor() as usize + 1
    }

    /// Sufficient conditions of the convergence results that this schedule violates.
    pub fn warnings(&self, kind: OptimizerKind) -> Vec<String> {
        let mut out = Vec::new();
        match kind {
            OptimizerKind::Fwsa => {
                if self.a > 0.5 {
                    out.push(format!("FWSA step scale a = {} exceeds 1/2", self.a));
                }
                if !(self.beta_exp > 2.0 * (self.a + self.theta_exp)) {
                    out.push(format!(
                        "FWSA replication growth beta = {} is not above 2(a + theta) = {}",
                        self.beta_exp,
                        2.0 * (self.a + self.theta_exp)
                    ));
                }
            }
            OptimizerKind::Mdsa => {
                if !(self.alpha_exp > 0.5 && self.alpha_exp <= 1.0) {
                    out.push(format!("MDSA exponent alpha = {} is outside (1/2, 1]", self.alpha_exp));
                }
                if !(self.alpha_exp + self.theta_exp > 1.0) {
                    out.push(format!("MDSA alpha + theta = {} is not above 1", self.alpha_exp + self.theta_exp));
                }
                let lhs = 2.0 * self.alpha_exp + self.beta_exp - 2.0 * self.decay_exp - 2.0 * self.theta_exp;
                if !(lhs > 1.0) {
                    out.push(format!("MDSA 2 alpha + beta - 2d - 2 theta = {lhs} is not above 1"));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Fwsa,
    Mdsa,
}

impl OptimizerKind {
    pub fn label(self) -> &'static str {
        match self {
            OptimizerKind::Fwsa => "fwsa",
            OptimizerKind::Mdsa => "mdsa",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub schedule: ScheduleConfig,
    pub estimator: EstimatorKind,
    pub mixture: MixtureChoice,
    /// Optional support adjustment of the mixture components.
    pub eps_supp: Option<f64>,
    /// Oracle calls averaged for the reported objective (not counted in the budget).
    pub probes: usize,
    pub prox: ProxConfig,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            schedule: ScheduleConfig::default(),
            estimator: EstimatorKind::Ffe,
            mixture: MixtureChoice::delta_double_star(),
            eps_supp: None,
            probes: 10,
            prox: ProxConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    /// `p_k` (all blocks, flattened).
    pub p: Vec<f64>,
    /// Mean of the probe evaluations at `p_k`.
    pub objective: f64,
    /// FWSA: estimated Frank-Wolfe gap. MDSA: `V(p_k, p_{k+1})`.
    pub criterion: f64,
    /// FWSA: `eps_k`. MDSA: `rho_k`.
    pub step: f64,
    pub c: f64,
    pub r: usize,
    /// Multiplier of the mixture (absent for the finite-difference estimators).
    pub gamma: Option<f64>,
    /// Oracle calls made by the gradient estimates up to and including this iteration.
    pub oracle_calls: usize,
    pub min_entry: f64,
    /// FWSA only: `min p_1 * prod_{l<k} (1 - eps_l)`.
    pub interior_bound: Option<f64>,
    /// Largest KKT residual over the block subproblems.
    pub kkt_residual: f64,
    /// Largest constraint violation of `p_k` over the blocks.
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub kind: OptimizerKind,
    pub block_dims: Vec<usize>,
    pub records: Vec<IterationRecord>,
    /// The iterate after the last completed iteration.
    pub final_p: Vec<f64>,
    /// Probe mean at `final_p`.
    pub final_objective: Option<f64>,
    /// Calls spent on probes (reported separately from the optimiser budget).
    pub probe_calls: usize,
    pub warnings: Vec<String>,
}

impl RunTrace {
    pub fn oracle_calls(&self) -> usize {
        self.records.last().map_or(0, |r| r.oracle_calls)
    }

    pub fn initial_objective(&self) -> Option<f64> {
        self.records.first().map(|r| r.objective)
    }
}

/// A failed run keeps the iterations completed before the error.
#[derive(Debug, Clone, PartialEq)]
pub struct RunError {
    pub trace: RunTrace,
    pub source: Error,
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} iterations)", self.source, self.trace.records.len())
    }
}

impl std::error::Error for RunError {}

/// Mean of `probes` independent oracle calls; call `i` uses `stream.split(i)`.
pub fn probe_objective<O: Oracle + ?Sized>(oracle: &O, p: &[f64], probes: usize, stream: &RngStream) -> Result<f64> {
    if probes == 0 {
        return Err(Error::InvalidCount { name: "probes", min: 1, got: 0 });
    }
    let mut acc = CompensatedSum::default();
    for i in 0..probes {
        acc.add(oracle.evaluate(p, &mut stream.split(i as u64).rng())?);
    }
    Ok(acc.value() / probes as f64)
}

fn blocks<'a>(v: &'a [f64], dims: &[usize]) -> Vec<&'a [f64]> {
    let mut out = Vec::with_capacity(dims.len());
    let mut offset = 0;
    for &d in dims {
        out.push(&v[offset..offset + d]);
        offset += d;
    }
    out
}

fn min_entry(p: &[f64]) -> f64 {
    p.iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn run_fwsa<O: Oracle + ?Sized>(
    oracle: &O,
    sets: &[UncertaintySet],
    cfg: &OptimizerConfig,
    p_init: &[f64],
    stream: &RngStream,
) -> std::result::Result<RunTrace, RunError> {
    run(OptimizerKind::Fwsa, oracle, sets, cfg, p_init, stream)
}

pub fn run_mdsa<O: Oracle + ?Sized>(
    oracle: &O,
    sets: &[UncertaintySet],
    cfg: &OptimizerConfig,
    p_init: &[f64],
    stream: &RngStream,
) -> std::result::Result<RunTrace, RunError> {
    run(OptimizerKind::Mdsa, oracle, sets, cfg, p_init, stream)
}

fn validate_run<O: Oracle + ?Sized>(
    oracle: &O,
    sets: &[UncertaintySet],
    cfg: &OptimizerConfig,
    p_init: &[f64],
) -> Result<()> {
    cfg.schedule.validate()?;
    cfg.prox.validate()?;
    if cfg.probes == 0 {
        return Err(Error::InvalidCount { name: "probes", min: 1, got: 0 });
    }
    let dims = &oracle.spec().block_dims;
    let set_dims: Vec<usize> = sets.iter().map(UncertaintySet::dim).collect();
    if &set_dims != dims {
        return Err(Error::InvalidConfig(format!("set dimensions {set_dims:?} differ from oracle blocks {dims:?}")));
    }
    if p_init.len() != oracle.spec().dim() {
        return Err(Error::DimensionMismatch { expected: oracle.spec().dim(), got: p_init.len() });
    }
    if let Some(i) = p_init.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::NonPositiveIterate(i));
    }
    for (block, set) in blocks(p_init, dims).into_iter().zip(sets) {
        let v = set.violation(block);
        if v > cfg.prox.lp_tol {
            return Err(Error::Infeasible(format!("initial point violates its {} set by {v:.3e}", set.label())));
        }
    }
    Ok(())
}

fn run<O: Oracle + ?Sized>(
    kind: OptimizerKind,
    oracle: &O,
    sets: &[UncertaintySet],
    cfg: &OptimizerConfig,
    p_init: &[f64],
    stream: &RngStream,
) -> std::result::Result<RunTrace, RunError> {
    let dims = oracle.spec().block_dims.clone();
    let warnings = cfg.schedule.warnings(kind);
    for w in &warnings {
        log::warn!("{w}");
    }
    let mut trace = RunTrace {
        kind,
        block_dims: dims.clone(),
        records: Vec::new(),
        final_p: p_init.to_vec(),
        final_objective: None,
        probe_calls: 0,
        warnings,
    };
    if let Err(source) = validate_run(oracle, sets, cfg, p_init) {
        return Err(RunError { trace, source });
    }
    let mut p = p_init.to_vec();
    let mut calls = 0;
    let mut bound = min_entry(&p);
    for k in 1..=cfg.schedule.max_iter {
        match step(kind, oracle, sets, cfg, &p, k, bound, calls, &stream.split(k as u64)) {
            Ok((record, next)) => {
                calls = record.oracle_calls;
                trace.probe_calls += cfg.probes;
                if kind == OptimizerKind::Fwsa {
                    bound *= 1.0 - cfg.schedule.eps(k);
                }
                trace.records.push(record);
                p = next;
                trace.final_p = p.clone();
            }
            Err(source) => return Err(RunError { trace, source }),
        }
    }
    if cfg.schedule.max_iter > 0 {
        let last = stream.split(cfg.schedule.max_iter as u64 + 1).split(1);
        match probe_objective(oracle, &p, cfg.probes, &last) {
            Ok(v) => {
                trace.final_objective = Some(v);
                trace.probe_calls += cfg.probes;
            }
            Err(source) => return Err(RunError { trace, source }),
        }
    }
    Ok(trace)
}

#[allow(clippy::too_many_arguments)]
fn step<O: Oracle + ?Sized>(
    kind: OptimizerKind,
    oracle: &O,
    sets: &[UncertaintySet],
    cfg: &OptimizerConfig,
    p: &[f64],
    k: usize,
    interior: f64,
    calls_before: usize,
    iter_stream: &RngStream,
) -> Result<(IterationRecord, Vec<f64>)> {
    let dims = &oracle.spec().block_dims;
    let s = &cfg.schedule;
    let pmin = min_entry(p);
    if pmin < BOUNDARY_TOL {
        return Err(Error::BoundaryCollapse(pmin));
    }
    let (c, r) = (s.c(k), s.r(k));
    let objective = probe_objective(oracle, p, cfg.probes, &iter_stream.split(1))?;

    let spec = EstimatorSpec { kind: cfg.estimator, c, r, mixture: cfg.mixture, eps_supp: cfg.eps_supp };
    let mix = if cfg.estimator.uses_mixture() {
        let mix = match s.gamma0 {
            Some(g0) => {
                let specs = blocks(p, dims)
                    .into_iter()
                    .map(|b| Ok(BlockSpec { p: ProbVector::new(b)?, choice: cfg.mixture }))
                    .collect::<Result<Vec<_>>>()?;
                let m = build_multi_with_gamma(&specs, g0 / (pmin * pmin))?;
                match cfg.eps_supp {
                    Some(eps) => m.with_support_adjustment(eps)?,
                    None => m,
                }
            }
            None => spec.perturbation(p, dims)?,
        };
        Some(mix)
    } else {
        None
    };
    let gamma = mix.as_ref().map(|m| m.gamma());
    let est = spec.estimate_full(oracle, p, c, r, mix.as_ref(), &iter_stream.split(0))?;
    let grad = est.value;

    let mut next = Vec::with_capacity(p.len());
    let mut criterion = CompensatedSum::default();
    let mut kkt: f64 = 0.0;
    let mut violation: f64 = 0.0;
    let mut offset = 0;
    let step_size = match kind {
        OptimizerKind::Fwsa => s.eps(k),
        OptimizerKind::Mdsa => s.rho(k),
    };
    for (set, &d) in sets.iter().zip(dims) {
        let pb = &p[offset..offset + d];
        let gb = &grad[offset..offset + d];
        violation = violation.max(set.violation(pb));
        let p_k = ProbVector::new(pb)?;
        match kind {
            OptimizerKind::Fwsa => {
                let sol = fw_linear_min_detailed(gb, &p_k, set, &cfg.prox)?;
                criterion.add(fw_gap(gb, pb, sol.q.as_slice()));
                kkt = kkt.max(sol.kkt_residual);
                next.extend(pb.iter().zip(sol.q.as_slice()).map(|(a, q)| (1.0 - step_size) * a + step_size * q));
            }
            OptimizerKind::Mdsa => {
                let sol = md_prox_detailed(gb, &p_k, step_size, set, &cfg.prox)?;
                criterion.add(kl_div(sol.q.as_slice(), pb)?);
                kkt = kkt.max(sol.kkt_residual);
                next.extend_from_slice(sol.q.as_slice());
            }
        }
        offset += d;
    }
    let record = IterationRecord {
        k,
        p: p.to_vec(),
        objective,
        criterion: criterion.value(),
        step: step_size,
        c,
        r,
        gamma,
        oracle_calls: calls_before + est.budget_used,
        min_entry: pmin,
        interior_bound: (kind == OptimizerKind::Fwsa).then_some(interior),
        kkt_residual: kkt,
        violation,
    };
    Ok((record, next))
}

/// True when `min p_k >= min p_1 prod_{l<k}(1 - eps_l)` along the whole trace.
pub fn interior_bound_holds(trace: &RunTrace) -> bool {
    trace
        .records
        .iter()
        .all(|r| r.interior_bound.is_none_or(|b| r.min_entry >= b * (1.0 - INTERIOR_SLACK)))
}

/// True when every recorded multiplier is at least `(n-1)/4` for every block size.
pub fn gamma_bound_holds(trace: &RunTrace) -> bool {
    let nmax = trace.block_dims.iter().copied().max().unwrap_or(2);
    trace.records.iter().all(|r| r.gamma.is_none_or(|g| g >= gamma_lower_bound(nmax)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{FnOracle, OracleKind, OracleSpec, Quadratic};

    fn quad_cfg() -> OptimizerConfig {
        OptimizerConfig {
            schedule: ScheduleConfig { a: 0.25, b: 0.3, theta_exp: 0.125, beta_exp: 1.0, r0: 2.0, max_iter: 50, ..Default::default() },
            probes: 1,
            ..Default::default()
        }
    }

    #[test]
    fn schedules() {
        let s = ScheduleConfig { a: 0.3, alpha_exp: 1.0, b: 0.3, theta_exp: 0.25, beta_exp: 0.0, r0: 4.0, ..Default::default() };
        assert_eq!(s.r(1), 5);
        assert_eq!(s.r(17), 5);
        assert!((s.c(16) - 0.15).abs() < 1e-15);
        assert!((s.rho(3) - 0.1).abs() < 1e-15);
        assert!(s.warnings(OptimizerKind::Mdsa).is_empty());
        assert!(!s.warnings(OptimizerKind::Fwsa).is_empty());
    }

    #[test]
    fn fwsa_decreases_quadratic() {
        let o = Quadratic::new(5).unwrap();
        let p0 = [0.5, 0.2, 0.1, 0.1, 0.1];
        let trace =
            run_fwsa(&o, &[UncertaintySet::simplex(5).unwrap()], &quad_cfg(), &p0, &RngStream::new(1)).unwrap();
        assert_eq!(trace.records.len(), 50);
        assert!(trace.final_objective.unwrap() < trace.initial_objective().unwrap());
        assert!(interior_bound_holds(&trace));
        assert!(gamma_bound_holds(&trace));
        let expected: usize = (1..=50).map(|k| 2 * quad_cfg().schedule.r(k)).sum();
        assert_eq!(trace.oracle_calls(), expected);
    }

    #[test]
    fn mdsa_with_constant_oracle_stays_put() {
        let spec = OracleSpec::new(OracleKind::Custom, vec![3]).unwrap();
        let o = FnOracle::new(spec, |_: &[f64], _: &mut _| 1.5);
        let p0 = [0.2, 0.3, 0.5];
        let mut cfg = quad_cfg();
        cfg.schedule.max_iter = 10;
        let trace = run_mdsa(&o, &[UncertaintySet::simplex(3).unwrap()], &cfg, &p0, &RngStream::new(0)).unwrap();
        for r in &trace.records {
            assert_eq!(r.p, p0.to_vec());
            assert_eq!(r.criterion, 0.0);
        }
    }

    #[test]
    fn traces_are_deterministic() {
        let o = crate::objectives::with_gaussian_noise(Quadratic::new(4).unwrap(), 0.1).unwrap();
        let sets = [UncertaintySet::simplex(4).unwrap()];
        let mut cfg = quad_cfg();
        cfg.schedule.max_iter = 8;
        let p0 = [0.25; 4];
        let a = run_mdsa(&o, &sets, &cfg, &p0, &RngStream::new(3)).unwrap();
        let b = run_mdsa(&o, &sets, &cfg, &p0, &RngStream::new(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn errors_keep_partial_trace() {
        let spec = OracleSpec::new(OracleKind::Custom, vec![3]).unwrap();
        let counter = std::sync::atomic::AtomicUsize::new(0);
        let o = FnOracle::new(spec, |_: &[f64], _: &mut _| {
            if counter.fetch_add(1, std::sync::atomic::Ordering::SeqCst) > 40 {
                f64::NAN
            } else {
                1.0
            }
        });
        let mut cfg = quad_cfg();
        cfg.schedule.beta_exp = 0.0;
        let err = run_fwsa(&o, &[UncertaintySet::simplex(3).unwrap()], &cfg, &[0.2, 0.3, 0.5], &RngStream::new(0))
            .unwrap_err();
        assert!(!err.trace.records.is_empty());
        assert!(matches!(err.source, Error::OracleFailure(_)));
    }

    #[test]
    fn infeasible_start_rejected() {
        let o = Quadratic::new(2).unwrap();
        let set = UncertaintySet::KlBall(crate::subproblems::KlBallSet::new(ProbVector::uniform(2).unwrap(), 0.01).unwrap());
        let err = run_mdsa(&o, &[set], &quad_cfg(), &[0.9, 0.1], &RngStream::new(0)).unwrap_err();
        assert!(matches!(err.source, Error::Infeasible(_)));
    }

    #[test]
    fn zero_iterations_gives_empty_trace() {
        let o = Quadratic::new(3).unwrap();
        let mut cfg = quad_cfg();
        cfg.schedule.max_iter = 0;
        let trace = run_fwsa(&o, &[UncertaintySet::simplex(3).unwrap()], &cfg, &[0.2, 0.3, 0.5], &RngStream::new(0)).unwrap();
        assert!(trace.records.is_empty());
        assert_eq!(trace.final_objective, None);
    }
}
