//! Zeroth-order gradient estimators on products of simplices.
//!
//! With `d = delta - p`, a perturbed point is `(1 - c) p + c delta = p + c d`.
//!
//! | kind        | one replication                                         | calls |
//! |-------------|---------------------------------------------------------|-------|
//! | SFE         | `Z(p + c d) / c * gamma d`                              | 1     |
//! | FFE         | `(Z(p + c d) - Z(p)) / c * gamma d`                     | 2     |
//! | CFE         | `(Z(p + c d) - Z(p - c d)) / (2c) * gamma d`            | 2     |
//! | FD standard | `(Z(p + c(e_i - p)) - Z(p)) / c` for every coordinate   | 2n    |
//! | FD random   | `n (Z(p + c(e_l - p)) - Z(p)) / c * e_l`, `l` uniform   | 2     |
//!
//! Estimates are only defined up to adding a multiple of the all-ones vector
//! per block; compare them after [`remove_translation`](crate::stats::remove_translation).
//!
//! Every replication gets its own child stream, and evaluations draw from
//! further children of it, so results do not depend on thread scheduling.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixtures::{
    build_multi, mixture_moments, BlockMixture, BlockSpec, DirichletMixture, MixtureChoice, Perturbation,
};
use crate::objectives::Oracle;
use crate::rng::RngStream;
use crate::simplex::ProbVector;
use crate::stats::compensated_vec_sum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "sfe")]
    Sfe,
    #[serde(rename = "ffe")]
    Ffe,
    #[serde(rename = "cfe")]
    Cfe,
    #[serde(rename = "fd_standard")]
    FdStandard,
    #[serde(rename = "fd_random")]
    FdRandom,
}

impl EstimatorKind {
    pub fn label(self) -> &'static str {
        match self {
            EstimatorKind::Sfe => "sfe",
            EstimatorKind::Ffe => "ffe",
            EstimatorKind::Cfe => "cfe",
            EstimatorKind::FdStandard => "fd_standard",
            EstimatorKind::FdRandom => "fd_random",
        }
    }

    pub fn uses_mixture(self) -> bool {
        matches!(self, EstimatorKind::Sfe | EstimatorKind::Ffe | EstimatorKind::Cfe)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientEstimate {
    pub value: Vec<f64>,
    pub kind: EstimatorKind,
    pub c: f64,
    /// Replications (per coordinate for FD standard).
    pub r: usize,
    /// Score multiplier; `None` for the finite-difference baselines.
    pub gamma: Option<f64>,
    /// Number of oracle calls actually made.
    pub budget_used: usize,
}

fn check_c(c: f64) -> Result<()> {
    if c > 0.0 && c < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidC(c))
    }
}

fn check_r(name: &'static str, r: usize) -> Result<()> {
    if r >= 1 {
        Ok(())
    } else {
        Err(Error::InvalidCount { name, min: 1, got: r })
    }
}

fn check_dim<O: Oracle + ?Sized>(oracle: &O, n: usize) -> Result<()> {
    let expected = oracle.spec().dim();
    if n == expected {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got: n })
    }
}

/// Runs `f(0..r)` (in parallel when allowed), returning results in index order.
/// On failure the error of the lowest failing index is reported.
fn replicate<T, F>(r: usize, parallel: bool, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let results: Vec<Result<T>> =
        if parallel { (0..r).into_par_iter().map(&f).collect() } else { (0..r).map(&f).collect() };
    results.into_iter().collect()
}

fn eval<O: Oracle + ?Sized>(oracle: &O, x: &[f64], stream: &RngStream) -> Result<f64> {
    let v = oracle.evaluate(x, &mut stream.rng())?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::OracleFailure(format!("non-finite value {v}")))
    }
}

fn average(n: usize, rows: &[Vec<f64>]) -> Vec<f64> {
    let total = compensated_vec_sum(n, rows.iter().map(Vec::as_slice));
    total.into_iter().map(|v| v / rows.len() as f64).collect()
}

fn finalize(value: Vec<f64>) -> Result<Vec<f64>> {
    match value.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(value),
    }
}

#[derive(Clone, Copy)]
enum MixtureRule {
    Single,
    Forward,
    Central,
}

fn mixture_estimate<O, P>(
    oracle: &O,
    mix: &P,
    c: f64,
    r: usize,
    stream: &RngStream,
    rule: MixtureRule,
) -> Result<Vec<f64>>
where
    O: Oracle + ?Sized,
    P: Perturbation + ?Sized,
{
    check_c(c)?;
    check_r("R", r)?;
    let p = mix.base();
    let n = p.len();
    check_dim(oracle, n)?;
    let gamma = mix.gamma();
    let rows = replicate(r, oracle.spec().concurrent_safe, |j| {
        let rep = stream.split(j as u64);
        let delta = mix.sample(&mut rep.split(0).rng());
        let d: Vec<f64> = delta.iter().zip(p).map(|(a, b)| a - b).collect();
        let plus: Vec<f64> = p.iter().zip(&d).map(|(pi, di)| pi + c * di).collect();
        let diff = match rule {
            MixtureRule::Single => eval(oracle, &plus, &rep.split(1))? / c,
            MixtureRule::Forward => (eval(oracle, &plus, &rep.split(1))? - eval(oracle, p, &rep.split(2))?) / c,
            MixtureRule::Central => {
                let minus: Vec<f64> = p.iter().zip(&d).map(|(pi, di)| pi - c * di).collect();
                (eval(oracle, &plus, &rep.split(1))? - eval(oracle, &minus, &rep.split(2))?) / (2.0 * c)
            }
        };
        Ok(d.iter().map(|di| diff * gamma * di).collect::<Vec<f64>>())
    })?;
    finalize(average(n, &rows))
}

pub fn estimate_sfe<O, P>(oracle: &O, mix: &P, c: f64, r: usize, stream: &RngStream) -> Result<GradientEstimate>
where
    O: Oracle + ?Sized,
    P: Perturbation + ?Sized,
{
    let value = mixture_estimate(oracle, mix, c, r, stream, MixtureRule::Single)?;
    Ok(GradientEstimate { value, kind: EstimatorKind::Sfe, c, r, gamma: Some(mix.gamma()), budget_used: r })
}

pub fn estimate_ffe<O, P>(oracle: &O, mix: &P, c: f64, r: usize, stream: &RngStream) -> Result<GradientEstimate>
where
    O: Oracle + ?Sized,
    P: Perturbation + ?Sized,
{
    let value = mixture_estimate(oracle, mix, c, r, stream, MixtureRule::Forward)?;
    Ok(GradientEstimate { value, kind: EstimatorKind::Ffe, c, r, gamma: Some(mix.gamma()), budget_used: 2 * r })
}

/// Requires an oracle that accepts off-simplex inputs, since the mirror point
/// `p - c d` may leave the simplex (see [`mirror_point`]).
pub fn estimate_cfe<O, P>(oracle: &O, mix: &P, c: f64, r: usize, stream: &RngStream) -> Result<GradientEstimate>
where
    O: Oracle + ?Sized,
    P: Perturbation + ?Sized,
{
    if !oracle.spec().accepts_off_simplex {
        return Err(Error::OffSimplexUnsupported);
    }
    let value = mixture_estimate(oracle, mix, c, r, stream, MixtureRule::Central)?;
    Ok(GradientEstimate { value, kind: EstimatorKind::Cfe, c, r, gamma: Some(mix.gamma()), budget_used: 2 * r })
}

/// `(1 + c) p - c delta`.
pub fn mirror_point(p: &[f64], delta: &[f64], c: f64) -> Vec<f64> {
    p.iter().zip(delta).map(|(a, b)| (1.0 + c) * a - c * b).collect()
}

/// Block index and block range for every flat coordinate.
fn block_ranges(block_dims: &[usize]) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for &d in block_dims {
        for _ in 0..d {
            out.push(offset..offset + d);
        }
        offset += d;
    }
    out
}

/// `p + c (e_i - p^b)` where `b` is the block containing coordinate `i`.
fn vertex_step(p: &[f64], range: &std::ops::Range<usize>, i: usize, c: f64) -> Vec<f64> {
    let mut x = p.to_vec();
    for k in range.clone() {
        x[k] -= c * p[k];
    }
    x[i] += c;
    x
}

/// Forward differences toward every vertex, `r_p` replications each.
pub fn estimate_fd_standard<O: Oracle + ?Sized>(
    oracle: &O,
    p: &[f64],
    c: f64,
    r_p: usize,
    stream: &RngStream,
) -> Result<GradientEstimate> {
    check_c(c)?;
    check_r("R_p", r_p)?;
    let n = p.len();
    check_dim(oracle, n)?;
    let ranges = block_ranges(&oracle.spec().block_dims);
    let coords = replicate(n, oracle.spec().concurrent_safe, |i| {
        let x = vertex_step(p, &ranges[i], i, c);
        let coord = stream.split(i as u64);
        let diffs = (0..r_p)
            .map(|j| {
                let rep = coord.split(j as u64);
                Ok((eval(oracle, &x, &rep.split(1))? - eval(oracle, p, &rep.split(2))?) / c)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(crate::stats::mean(&diffs))
    })?;
    Ok(GradientEstimate {
        value: finalize(coords)?,
        kind: EstimatorKind::FdStandard,
        c,
        r: r_p,
        gamma: None,
        budget_used: 2 * n * r_p,
    })
}

/// One forward difference per replication toward a uniformly chosen vertex.
pub fn estimate_fd_random<O: Oracle + ?Sized>(
    oracle: &O,
    p: &[f64],
    c: f64,
    r: usize,
    stream: &RngStream,
) -> Result<GradientEstimate> {
    check_c(c)?;
    check_r("R", r)?;
    let n = p.len();
    check_dim(oracle, n)?;
    let ranges = block_ranges(&oracle.spec().block_dims);
    let rows = replicate(r, oracle.spec().concurrent_safe, |j| {
        let rep = stream.split(j as u64);
        let l = rep.split(0).rng().random_range(0..n);
        let x = vertex_step(p, &ranges[l], l, c);
        let diff = (eval(oracle, &x, &rep.split(1))? - eval(oracle, p, &rep.split(2))?) / c;
        let mut row = vec![0.0; n];
        row[l] = n as f64 * diff;
        Ok(row)
    })?;
    Ok(GradientEstimate {
        value: finalize(average(n, &rows))?,
        kind: EstimatorKind::FdRandom,
        c,
        r,
        gamma: None,
        budget_used: 2 * r,
    })
}

/// Estimator recipe usable at any base point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    pub c: f64,
    /// Replications (per coordinate for FD standard).
    pub r: usize,
    #[serde(default)]
    pub mixture: MixtureChoice,
    /// Optional support adjustment of every mixture component.
    #[serde(default)]
    pub eps_supp: Option<f64>,
}

impl EstimatorSpec {
    pub fn new(kind: EstimatorKind, c: f64, r: usize, mixture: MixtureChoice) -> Self {
        Self { kind, c, r, mixture, eps_supp: None }
    }

    /// Builds the block mixture for `p` (flat, split by `block_dims`).
    pub fn perturbation(&self, p: &[f64], block_dims: &[usize]) -> Result<BlockMixture> {
        let mut specs = Vec::with_capacity(block_dims.len());
        let mut offset = 0;
        for &d in block_dims {
            specs.push(BlockSpec { p: ProbVector::new(&p[offset..offset + d])?, choice: self.mixture });
            offset += d;
        }
        let mix = build_multi(&specs)?;
        match self.eps_supp {
            Some(eps) => mix.with_support_adjustment(eps),
            None => Ok(mix),
        }
    }

    pub fn estimate<O: Oracle + ?Sized>(&self, oracle: &O, p: &[f64], stream: &RngStream) -> Result<GradientEstimate> {
        self.estimate_with_c(oracle, p, self.c, stream)
    }

    pub fn estimate_with_c<O: Oracle + ?Sized>(
        &self,
        oracle: &O,
        p: &[f64],
        c: f64,
        stream: &RngStream,
    ) -> Result<GradientEstimate> {
        self.estimate_full(oracle, p, c, self.r, None, stream)
    }

    /// Like [`estimate_with_c`](Self::estimate_with_c) with an explicit
    /// replication count and an optional prebuilt perturbation.
    pub fn estimate_full<O: Oracle + ?Sized>(
        &self,
        oracle: &O,
        p: &[f64],
        c: f64,
        r: usize,
        mix: Option<&BlockMixture>,
        stream: &RngStream,
    ) -> Result<GradientEstimate> {
        check_dim(oracle, p.len())?;
        if self.kind == EstimatorKind::Cfe && !oracle.spec().accepts_off_simplex {
            return Err(Error::OffSimplexUnsupported);
        }
        let built;
        let mix = match (self.kind.uses_mixture(), mix) {
            (false, _) => None,
            (true, Some(m)) => Some(m),
            (true, None) => {
                built = self.perturbation(p, &oracle.spec().block_dims)?;
                Some(&built)
            }
        };
        match (self.kind, mix) {
            (EstimatorKind::Sfe, Some(m)) => estimate_sfe(oracle, m, c, r, stream),
            (EstimatorKind::Ffe, Some(m)) => estimate_ffe(oracle, m, c, r, stream),
            (EstimatorKind::Cfe, Some(m)) => estimate_cfe(oracle, m, c, r, stream),
            (EstimatorKind::FdStandard, _) => estimate_fd_standard(oracle, p, c, r, stream),
            (EstimatorKind::FdRandom, _) => estimate_fd_random(oracle, p, c, r, stream),
            _ => unreachable!("mixture estimators always have a perturbation"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorStats {
    /// Average of the per-point means.
    pub mean_estimate: Vec<f64>,
    pub point_means: Vec<Vec<f64>>,
    /// Mean over points of the per-point variances.
    pub variance_scalar: f64,
    /// `1/(trials-1) sum_j ||psi_j - mean||^2` for each point.
    pub per_point_variances: Vec<f64>,
    pub trials: usize,
    /// Oracle calls summed over all trials and points.
    pub budget_used: usize,
}

/// Repeats the estimator `trials` times at every base point and returns the
/// raw estimates, indexed `[point][trial]`.
/// Trial `j` at point `i` uses stream `stream.split(i).split(j)`.
pub fn run_trials<O: Oracle + ?Sized>(
    spec: &EstimatorSpec,
    oracle: &O,
    p_list: &[Vec<f64>],
    trials: usize,
    stream: &RngStream,
) -> Result<Vec<Vec<GradientEstimate>>> {
    if trials < 2 {
        return Err(Error::InvalidCount { name: "trials", min: 2, got: trials });
    }
    if p_list.is_empty() {
        return Err(Error::InvalidCount { name: "points", min: 1, got: 0 });
    }
    p_list
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mix =
                if spec.kind.uses_mixture() { Some(spec.perturbation(p, &oracle.spec().block_dims)?) } else { None };
            let point = stream.split(i as u64);
            replicate(trials, oracle.spec().concurrent_safe, |j| {
                spec.estimate_full(oracle, p, spec.c, spec.r, mix.as_ref(), &point.split(j as u64))
            })
        })
        .collect()
}

/// Per-point means and sample variances of raw estimates from [`run_trials`].
pub fn summarize_trials(estimates: &[Vec<GradientEstimate>]) -> Result<EstimatorStats> {
    let first = estimates.first().and_then(|t| t.first()).ok_or(Error::InvalidCount { name: "points", min: 1, got: 0 })?;
    let n = first.value.len();
    let trials = estimates[0].len();
    if trials < 2 || estimates.iter().any(|t| t.len() != trials) {
        return Err(Error::InvalidCount { name: "trials", min: 2, got: trials });
    }
    let mut point_means = Vec::with_capacity(estimates.len());
    let mut per_point_variances = Vec::with_capacity(estimates.len());
    let mut budget_used = 0;
    for point in estimates {
        budget_used += point.iter().map(|e| e.budget_used).sum::<usize>();
        let rows: Vec<Vec<f64>> = point.iter().map(|e| e.value.clone()).collect();
        let m = average(n, &rows);
        let sq: Vec<f64> =
            rows.iter().map(|row| row.iter().zip(&m).map(|(a, b)| (a - b) * (a - b)).sum()).collect();
        per_point_variances.push(crate::stats::mean(&sq) * trials as f64 / (trials - 1) as f64);
        point_means.push(m);
    }
    Ok(EstimatorStats {
        mean_estimate: average(n, &point_means),
        variance_scalar: crate::stats::mean(&per_point_variances),
        point_means,
        per_point_variances,
        trials,
        budget_used,
    })
}

/// Repeats the estimator `trials` times at every base point and summarises.
/// Trial `j` at point `i` uses stream `stream.split(i).split(j)`.
pub fn run_stats<O: Oracle + ?Sized>(
    spec: &EstimatorSpec,
    oracle: &O,
    p_list: &[Vec<f64>],
    trials: usize,
    stream: &RngStream,
) -> Result<EstimatorStats> {
    summarize_trials(&run_trials(spec, oracle, p_list, trials, stream)?)
}

/// Exact expectation of a mixture estimator on the noiseless single-block
/// quadratic `||x - 1/n||^2`, from the analytic mixture moments.
///
/// With `b = E[d]`, `S = E[d d']`, `t_k = E[||d||^2 d_k]` and `u = 1/n`:
/// SFE gives `gamma/c (Z(p) b + 2c S(p-u) + c^2 t)`, FFE gives
/// `gamma (2 S(p-u) + c t)` and CFE gives `2 gamma S(p-u)`.
pub fn quadratic_expected_estimate(kind: EstimatorKind, mix: &DirichletMixture, gamma: f64, c: f64) -> Result<Vec<f64>> {
    let p = mix.base();
    let n = p.len();
    let u = 1.0 / n as f64;
    let m = mixture_moments(mix);
    let b = &m.offset;
    let t = m.trace_third();
    let s_pu: Vec<f64> = (0..n).map(|i| (0..n).map(|j| m.second_at(i, j) * (p[j] - u)).sum()).collect();
    let z = crate::objectives::eval_quadratic(p);
    let value = match kind {
        EstimatorKind::Sfe => {
            (0..n).map(|k| gamma / c * (z * b[k] + 2.0 * c * s_pu[k] + c * c * t[k])).collect()
        }
        EstimatorKind::Ffe => (0..n).map(|k| gamma * (2.0 * s_pu[k] + c * t[k])).collect(),
        EstimatorKind::Cfe => (0..n).map(|k| 2.0 * gamma * s_pu[k]).collect(),
        _ => return Err(Error::WrongKind { expected: "mixture estimator" }),
    };
    Ok(value)
}

/// Exact expectation of FD standard on the noiseless single-block quadratic:
/// `2 (p-u)'(e_i - p) + c ||e_i - p||^2`.
pub fn quadratic_expected_fd(p: &[f64], c: f64) -> Vec<f64> {
    let n = p.len();
    let u = 1.0 / n as f64;
    let sq: f64 = p.iter().map(|v| v * v).sum();
    let pu_p: f64 = p.iter().map(|v| (v - u) * v).sum();
    (0..n).map(|i| 2.0 * ((p[i] - u) - pu_p) + c * (1.0 - 2.0 * p[i] + sq)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixtures::{build_delta_dstar, build_delta_star, verify_moments};
    use crate::objectives::{quadratic_gradient, with_gaussian_noise, FnOracle, Mg1Queue, MG1Config, OracleKind, OracleSpec, Quadratic};
    use crate::stats::remove_translation;

    fn pv(v: &[f64]) -> ProbVector {
        ProbVector::new(v).unwrap()
    }

    fn constant(n: usize, k: f64) -> FnOracle<impl Fn(&[f64], &mut crate::rng::StreamRng) -> f64 + Sync> {
        FnOracle::new(OracleSpec::new(OracleKind::Custom, vec![n]).unwrap(), move |_: &[f64], _: &mut _| k)
    }

    fn linear(v: Vec<f64>) -> FnOracle<impl Fn(&[f64], &mut crate::rng::StreamRng) -> f64 + Sync> {
        let n = v.len();
        FnOracle::new(OracleSpec::new(OracleKind::Custom, vec![n]).unwrap(), move |x: &[f64], _: &mut _| {
            x.iter().zip(&v).map(|(a, b)| a * b).sum()
        })
    }

    fn mean_and_se(samples: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
        let n = samples[0].len();
        let k = samples.len() as f64;
        let mean: Vec<f64> = (0..n).map(|i| samples.iter().map(|s| s[i]).sum::<f64>() / k).collect();
        let se = (0..n)
            .map(|i| (samples.iter().map(|s| (s[i] - mean[i]).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt())
            .collect();
        (mean, se)
    }

    #[test]
    fn constant_oracle_sfe_is_zero_in_mean() {
        let mix = build_delta_dstar(&pv(&[0.2, 0.3, 0.5]), -1.0).unwrap();
        let o = constant(3, 2.0);
        let root = RngStream::new(5);
        let samples: Vec<Vec<f64>> =
            (0..400).map(|j| estimate_sfe(&o, &mix, 0.1, 5, &root.split(j)).unwrap().value).collect();
        let (mean, se) = mean_and_se(&samples);
        for (m, s) in mean.iter().zip(se) {
            assert!(m.abs() < 5.0 * s, "{m} vs {s}");
        }
    }

    #[test]
    fn constant_oracle_differences_are_exactly_zero() {
        let p = [0.2, 0.3, 0.5];
        let mix = build_delta_star(&pv(&p), 2.0).unwrap();
        let o = constant(3, 7.0);
        let s = RngStream::new(1);
        for est in [
            estimate_ffe(&o, &mix, 0.1, 4, &s).unwrap(),
            estimate_cfe(&o, &mix, 0.1, 4, &s).unwrap(),
            estimate_fd_standard(&o, &p, 0.1, 3, &s).unwrap(),
            estimate_fd_random(&o, &p, 0.1, 3, &s).unwrap(),
        ] {
            assert!(est.value.iter().all(|v| *v == 0.0), "{est:?}");
        }
    }

    #[test]
    fn budgets_match_oracle_calls() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        let calls = AtomicUsize::new(0);
        let o = FnOracle::new(OracleSpec::new(OracleKind::Custom, vec![4]).unwrap(), |_: &[f64], _: &mut _| {
            calls.fetch_add(1, Ordering::SeqCst);
            1.0
        });
        let p = [0.1, 0.2, 0.3, 0.4];
        let mix = build_delta_dstar(&pv(&p), -1.0).unwrap();
        let s = RngStream::new(0);
        let runs: [&dyn Fn() -> GradientEstimate; 5] = [
            &|| estimate_sfe(&o, &mix, 0.1, 6, &s).unwrap(),
            &|| estimate_ffe(&o, &mix, 0.1, 6, &s).unwrap(),
            &|| estimate_cfe(&o, &mix, 0.1, 6, &s).unwrap(),
            &|| estimate_fd_standard(&o, &p, 0.1, 3, &s).unwrap(),
            &|| estimate_fd_random(&o, &p, 0.1, 5, &s).unwrap(),
        ];
        for run in runs {
            let est = run();
            assert_eq!(calls.swap(0, Ordering::SeqCst), est.budget_used, "{:?}", est.kind);
        }
    }

    #[test]
    fn linear_objective_ffe_matches_second_moment() {
        let p = [0.1, 0.2, 0.3, 0.4];
        let v = vec![1.0, -2.0, 0.5, 3.0];
        let mix = build_delta_dstar(&pv(&p), -1.0).unwrap();
        assert!(verify_moments(&mix).passes_first_two());
        let o = linear(v.clone());
        let root = RngStream::new(9);
        let samples: Vec<Vec<f64>> =
            (0..400).map(|j| estimate_ffe(&o, &mix, 0.2, 20, &root.split(j)).unwrap().value).collect();
        let (mean, se) = mean_and_se(&samples);
        let vbar = v.iter().sum::<f64>() / 4.0;
        for i in 0..4 {
            let target = v[i] - vbar;
            assert!((mean[i] - target).abs() < 5.0 * se[i], "{i}: {} vs {target}", mean[i]);
        }
    }

    #[test]
    fn quadratic_sfe_approaches_gradient() {
        let p = [0.2, 0.3, 0.5];
        let mix = build_delta_star(&pv(&p), 2.0).unwrap();
        let expect = quadratic_expected_estimate(EstimatorKind::Sfe, &mix, mix.gamma(), 0.01).unwrap();
        let grad = remove_translation(&quadratic_gradient(&p), &[3]);
        let e = remove_translation(&expect, &[3]);
        for (a, b) in e.iter().zip(&grad) {
            assert!((a - b).abs() < 1e-8, "{e:?} vs {grad:?}");
        }
    }

    #[test]
    fn uniform_point_quadratic_estimates_are_centered() {
        let n = 4;
        let p = vec![0.25; 4];
        let o = Quadratic::new(n).unwrap();
        let spec = EstimatorSpec::new(EstimatorKind::Ffe, 0.1, 5, MixtureChoice::delta_star());
        let stats = run_stats(&spec, &o, &[p], 200, &RngStream::new(3)).unwrap();
        let se = (stats.variance_scalar / 200.0).sqrt();
        assert!(stats.mean_estimate.iter().all(|m| m.abs() < 5.0 * se));
    }

    #[test]
    fn cfe_requires_off_simplex_oracle() {
        let o = Mg1Queue::new(MG1Config::with_support(3)).unwrap();
        let mix = build_delta_dstar(&pv(&[0.2, 0.3, 0.5]), -1.0).unwrap();
        assert_eq!(estimate_cfe(&o, &mix, 0.1, 1, &RngStream::new(0)).unwrap_err(), Error::OffSimplexUnsupported);
    }

    #[test]
    fn mirror_point_goes_negative_past_cap() {
        let n = 4;
        let p = vec![0.25; n];
        let mut delta = vec![0.0; n];
        delta[0] = 1.0;
        let cap = (1.0 / n as f64) / (1.0 - 1.0 / n as f64);
        assert!(mirror_point(&p, &delta, cap * 0.99).iter().all(|v| *v >= 0.0));
        assert!(mirror_point(&p, &delta, cap * 1.01)[0] < 0.0);
    }

    #[test]
    fn fd_standard_limit() {
        let p = [0.25, 0.75];
        let o = Quadratic::new(2).unwrap();
        let s = RngStream::new(0);
        let g = quadratic_gradient(&p);
        let gp: f64 = g.iter().zip(&p).map(|(a, b)| a * b).sum();
        let at = |c: f64| estimate_fd_standard(&o, &p, c, 1, &s).unwrap().value;
        let (a, b) = (at(1e-4), at(2e-4));
        for i in 0..2 {
            let rich = 2.0 * a[i] - b[i];
            assert!((rich - (g[i] - gp)).abs() < 1e-8);
            assert!((a[i] - quadratic_expected_fd(&p, 1e-4)[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn fd_standard_noise_variance() {
        let n = 3;
        let (sigma, c, rp) = (0.1, 0.1, 2);
        let o = with_gaussian_noise(Quadratic::new(n).unwrap(), sigma).unwrap();
        let spec = EstimatorSpec::new(EstimatorKind::FdStandard, c, rp, MixtureChoice::default());
        let stats = run_stats(&spec, &o, &[vec![0.2, 0.3, 0.5]], 200, &RngStream::new(4)).unwrap();
        // each coordinate averages r_p differences with variance 2 sigma^2 / c^2
        let expected = 2.0 * n as f64 * sigma * sigma / (rp as f64 * c * c);
        let ratio = stats.variance_scalar / expected;
        assert!((0.5..=2.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn fd_random_matches_fd_standard_in_mean() {
        let p = [0.3, 0.7];
        let o = Quadratic::new(2).unwrap();
        let root = RngStream::new(8);
        let samples: Vec<Vec<f64>> =
            (0..200).map(|j| estimate_fd_random(&o, &p, 0.1, 50, &root.split(j)).unwrap().value).collect();
        let (mean, se) = mean_and_se(&samples);
        let exact = quadratic_expected_fd(&p, 0.1);
        for i in 0..2 {
            assert!((mean[i] - exact[i]).abs() < 5.0 * se[i]);
        }
        let one = estimate_fd_random(&o, &p, 0.1, 1, &root).unwrap();
        assert_eq!(one.value.iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn deterministic_estimator_has_zero_variance() {
        let o = Quadratic::new(3).unwrap();
        let spec = EstimatorSpec::new(EstimatorKind::FdStandard, 0.05, 2, MixtureChoice::default());
        let stats = run_stats(&spec, &o, &[vec![0.2, 0.3, 0.5], vec![0.1, 0.1, 0.8]], 5, &RngStream::new(0)).unwrap();
        assert_eq!(stats.variance_scalar, 0.0);
        assert!(run_stats(&spec, &o, &[vec![0.2, 0.3, 0.5]], 1, &RngStream::new(0)).is_err());
    }

    #[test]
    fn invalid_parameters() {
        let o = Quadratic::new(3).unwrap();
        let mix = build_delta_dstar(&pv(&[0.2, 0.3, 0.5]), -1.0).unwrap();
        let s = RngStream::new(0);
        assert_eq!(estimate_ffe(&o, &mix, 0.0, 1, &s).unwrap_err(), Error::InvalidC(0.0));
        assert_eq!(estimate_ffe(&o, &mix, 1.0, 1, &s).unwrap_err(), Error::InvalidC(1.0));
        assert!(matches!(estimate_sfe(&o, &mix, 0.1, 0, &s), Err(Error::InvalidCount { .. })));
    }

    #[test]
    fn parallel_and_serial_agree() {
        let p = vec![0.1, 0.2, 0.3, 0.4];
        let par = with_gaussian_noise(Quadratic::new(4).unwrap(), 0.1).unwrap();
        let mut serial_spec = par.spec().clone();
        serial_spec.concurrent_safe = false;
        let inner = with_gaussian_noise(Quadratic::new(4).unwrap(), 0.1).unwrap();
        let serial = FnOracle::new(serial_spec, move |x: &[f64], rng: &mut _| inner.evaluate(x, rng).unwrap());
        let spec = EstimatorSpec::new(EstimatorKind::Ffe, 0.1, 32, MixtureChoice::default());
        let a = spec.estimate(&par, &p, &RngStream::new(2)).unwrap();
        let b = spec.estimate(&serial, &p, &RngStream::new(2)).unwrap();
        assert_eq!(a.value, b.value);
    }
}
