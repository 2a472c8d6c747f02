//! Uncertainty sets and the two per-iteration solvers: the linear minimisation
//! step of Frank-Wolfe and the entropic prox step of mirror descent.
//!
//! | set        | `fw_linear_min`                      | `md_prox`                                 |
//! |------------|--------------------------------------|-------------------------------------------|
//! | Simplex    | best vertex (lowest index on ties)   | exponentiated gradient                    |
//! | BoxMoment  | two-phase simplex LP                 | Newton ascent on the moment multipliers   |
//! | KLBall     | exponential tilt of the baseline     | tilted geometric mean, bisection on `lambda` |

mod kl;
pub mod lp;
mod moment;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::ProbVector;

pub use lp::{solve_lp, Constraint, LpSolution, Relation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProxConfig {
    /// Target KKT residual of the prox solvers.
    pub kkt_tol: f64,
    pub max_bisect: usize,
    /// Pivot and feasibility tolerance of the LP solver.
    pub lp_tol: f64,
    pub max_dual_iter: usize,
    pub max_lp_pivots: usize,
}

impl Default for ProxConfig {
    fn default() -> Self {
        Self { kkt_tol: 1e-10, max_bisect: 200, lp_tol: 1e-9, max_dual_iter: 500, max_lp_pivots: 10_000 }
    }
}

impl ProxConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kkt_tol > 0.0 && self.lp_tol > 0.0) || self.max_bisect == 0 || self.max_dual_iter == 0 {
            return Err(Error::InvalidConfig("prox tolerances and iteration caps must be positive".into()));
        }
        Ok(())
    }
}

/// `lo_l <= sum_i F[l][i] q_i <= hi_l` for every row `l`, on the simplex.
/// Either bound may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxMomentSet {
    values: Vec<Vec<f64>>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoxMomentSet {
    /// Validates the data and checks nonemptiness with an LP feasibility solve.
    pub fn new(values: Vec<Vec<f64>>, lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let n = values.first().map_or(0, Vec::len);
        if n < 2 {
            return Err(Error::DimensionTooSmall(n));
        }
        if values.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidParam("constraint rows must have equal length".into()));
        }
        if lo.len() != values.len() || hi.len() != values.len() {
            return Err(Error::DimensionMismatch { expected: values.len(), got: lo.len().min(hi.len()) });
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam("constraint values must be finite".into()));
        }
        for (l, (a, b)) in lo.iter().zip(&hi).enumerate() {
            if a.is_nan() || b.is_nan() || a > b || *a == f64::INFINITY || *b == f64::NEG_INFINITY {
                return Err(Error::InvalidParam(format!("row {l}: bounds [{a}, {b}]")));
            }
        }
        let set = Self { values, lo, hi };
        let cfg = ProxConfig::default();
        solve_lp(&vec![0.0; n], &set.lp_constraints(), cfg.lp_tol, cfg.max_lp_pivots)?;
        Ok(set)
    }

    /// Bounds `lo_factor * E_b[x^k] <= E_q[x^k] <= hi_factor * E_b[x^k]` for each power.
    pub fn relative_moments(
        support: &[f64],
        powers: &[i32],
        baseline: &ProbVector,
        lo_factor: f64,
        hi_factor: f64,
    ) -> Result<Self> {
        if support.len() != baseline.len() {
            return Err(Error::DimensionMismatch { expected: baseline.len(), got: support.len() });
        }
        let mut values = Vec::new();
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        for &k in powers {
            let row: Vec<f64> = support.iter().map(|x| x.powi(k)).collect();
            let m: f64 = row.iter().zip(baseline.as_slice()).map(|(a, b)| a * b).sum();
            lo.push((lo_factor * m).min(hi_factor * m));
            hi.push((lo_factor * m).max(hi_factor * m));
            values.push(row);
        }
        Self::new(values, lo, hi)
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn moments(&self, q: &[f64]) -> Vec<f64> {
        self.values.iter().map(|r| r.iter().zip(q).map(|(a, b)| a * b).sum()).collect()
    }

    fn lp_constraints(&self) -> Vec<Constraint> {
        let n = self.dim();
        let mut out = vec![Constraint::new(vec![1.0; n], Relation::Eq, 1.0)];
        for ((row, &lo), &hi) in self.values.iter().zip(&self.lo).zip(&self.hi) {
            if lo == hi {
                out.push(Constraint::new(row.clone(), Relation::Eq, lo));
                continue;
            }
            if hi.is_finite() {
                out.push(Constraint::new(row.clone(), Relation::Le, hi));
            }
            if lo.is_finite() {
                out.push(Constraint::new(row.clone(), Relation::Ge, lo));
            }
        }
        out
    }
}

/// `{q : KL(q || p_b) <= radius}` with a strictly positive baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct KlBallSet {
    baseline: ProbVector,
    radius: f64,
}

impl KlBallSet {
    pub fn new(baseline: ProbVector, radius: f64) -> Result<Self> {
        if let Some(i) = baseline.as_slice().iter().position(|v| *v <= 0.0) {
            return Err(Error::ZeroEntry(i));
        }
        if !(radius >= 0.0) || radius.is_infinite() {
            return Err(Error::InvalidParam(format!("radius = {radius}")));
        }
        Ok(Self { baseline, radius })
    }

    pub fn baseline(&self) -> &ProbVector {
        &self.baseline
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum UncertaintySet {
    Simplex { n: usize },
    BoxMoment(BoxMomentSet),
    KlBall(KlBallSet),
}

impl UncertaintySet {
    pub fn simplex(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::DimensionTooSmall(n));
        }
        Ok(Self::Simplex { n })
    }

    pub fn label(&self) -> &'static str {
        match self {
            UncertaintySet::Simplex { .. } => "simplex",
            UncertaintySet::BoxMoment(_) => "box_moment",
            UncertaintySet::KlBall(_) => "kl_ball",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            UncertaintySet::Simplex { n } => *n,
            UncertaintySet::BoxMoment(s) => s.dim(),
            UncertaintySet::KlBall(s) => s.baseline.len(),
        }
    }

    /// Largest constraint violation of `q` (zero when feasible).
    pub fn violation(&self, q: &[f64]) -> f64 {
        let simplex = q.iter().fold((q.iter().sum::<f64>() - 1.0).abs(), |acc, v| acc.max(-v));
        match self {
            UncertaintySet::Simplex { .. } => simplex,
            UncertaintySet::BoxMoment(s) => s
                .moments(q)
                .iter()
                .zip(s.lo.iter().zip(&s.hi))
                .fold(simplex, |acc, (m, (lo, hi))| acc.max(m - hi).max(lo - m)),
            UncertaintySet::KlBall(s) => match kl_div(q, s.baseline.as_slice()) {
                Ok(v) => simplex.max(v - s.radius),
                Err(_) => f64::INFINITY,
            },
        }
    }
}

/// Solver output with its optimality certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSolution {
    pub q: ProbVector,
    /// `g'(q - p_k)` for the linear step, `rho g'(q - p_k) + V(p_k, q)` for the prox step.
    pub objective: f64,
    /// Multipliers of the set constraints (LP duals, moment multipliers or `lambda`).
    pub multipliers: Vec<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// `V(p, q) = sum_i q_i ln(q_i / p_i)`, i.e. the KL divergence of `q` from `p`.
/// Terms with `q_i = 0` vanish.
pub fn kl_div(q: &[f64], p: &[f64]) -> Result<f64> {
    if q.len() != p.len() {
        return Err(Error::DimensionMismatch { expected: p.len(), got: q.len() });
    }
    let mut total = 0.0;
    for (i, (&qi, &pi)) in q.iter().zip(p).enumerate() {
        if qi > 0.0 {
            if !(pi > 0.0) {
                return Err(Error::SupportViolation(i));
            }
            total += qi * (qi / pi).ln();
        }
    }
    Ok(total.max(0.0))
}

/// `-g'(q_k - p_k)`, the estimated Frank-Wolfe gap.
pub fn fw_gap(grad: &[f64], p_k: &[f64], q_k: &[f64]) -> f64 {
    -grad.iter().zip(q_k.iter().zip(p_k)).map(|(g, (q, p))| g * (q - p)).sum::<f64>()
}

fn check_inputs(grad: &[f64], p_k: &[f64], set: &UncertaintySet) -> Result<()> {
    let n = set.dim();
    for len in [grad.len(), p_k.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, got: len });
        }
    }
    if let Some(i) = grad.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Normalises `exp(lw)` in log space.
pub(crate) fn softmax(lw: &[f64]) -> (Vec<f64>, f64) {
    let m = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = lw.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    (e.iter().map(|v| v / s).collect(), m + s.ln())
}

/// Minimiser of `grad'q` over the set.
pub fn fw_linear_min(grad: &[f64], p_k: &ProbVector, set: &UncertaintySet) -> Result<ProbVector> {
    Ok(fw_linear_min_detailed(grad, p_k, set, &ProxConfig::default())?.q)
}

pub fn fw_linear_min_detailed(
    grad: &[f64],
    p_k: &ProbVector,
    set: &UncertaintySet,
    cfg: &ProxConfig,
) -> Result<SubproblemSolution> {
    check_inputs(grad, p_k.as_slice(), set)?;
    let sol = match set {
        UncertaintySet::Simplex { n } => {
            let best = (0..*n).fold(0, |b, i| if grad[i] < grad[b] { i } else { b });
            SubproblemSolution {
                q: ProbVector::vertex(*n, best)?,
                objective: 0.0,
                multipliers: vec![grad[best]],
                kkt_residual: 0.0,
                iterations: 0,
            }
        }
        UncertaintySet::BoxMoment(s) => {
            let lp = solve_lp(grad, &s.lp_constraints(), cfg.lp_tol, cfg.max_lp_pivots)?;
            SubproblemSolution {
                q: ProbVector::new(&lp.x)?,
                objective: 0.0,
                multipliers: lp.duals,
                kkt_residual: lp.kkt_residual,
                iterations: lp.pivots,
            }
        }
        UncertaintySet::KlBall(s) => kl::fw_kl_ball(grad, s, cfg)?,
    };
    let objective = dot(grad, sol.q.as_slice()) - dot(grad, p_k.as_slice());
    Ok(SubproblemSolution { objective, ..sol })
}

/// Entropic prox step `argmin_q rho grad'(q - p_k) + V(p_k, q)` over the set.
pub fn md_prox(grad: &[f64], p_k: &ProbVector, rho: f64, set: &UncertaintySet, cfg: &ProxConfig) -> Result<ProbVector> {
    Ok(md_prox_detailed(grad, p_k, rho, set, cfg)?.q)
}

pub fn md_prox_detailed(
    grad: &[f64],
    p_k: &ProbVector,
    rho: f64,
    set: &UncertaintySet,
    cfg: &ProxConfig,
) -> Result<SubproblemSolution> {
    check_inputs(grad, p_k.as_slice(), set)?;
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(Error::InvalidParam(format!("rho = {rho}")));
    }
    if let Some(i) = p_k.as_slice().iter().position(|v| *v <= 0.0) {
        return Err(Error::NonPositiveIterate(i));
    }
    let rho_g: Vec<f64> = grad.iter().map(|g| rho * g).collect();
    let sol = match set {
        UncertaintySet::Simplex { .. } => {
            let q = tilt(p_k, &rho_g, &[], &[]);
            let kkt = stationarity_spread(&rho_g, p_k.as_slice(), q.as_slice(), None);
            SubproblemSolution { q, objective: 0.0, multipliers: vec![], kkt_residual: kkt, iterations: 0 }
        }
        UncertaintySet::BoxMoment(s) => moment::prox_box_moment(s, p_k, &rho_g, cfg)?,
        UncertaintySet::KlBall(s) => kl::prox_kl_ball(s, p_k, &rho_g, cfg)?,
    };
    let objective = dot(&rho_g, sol.q.as_slice()) - dot(&rho_g, p_k.as_slice()) + kl_div(sol.q.as_slice(), p_k.as_slice())?;
    Ok(SubproblemSolution { objective, ..sol })
}

/// `q ∝ p_k exp(-rho_g - F'w)`; returns `p_k` itself when the tilt is constant.
pub(crate) fn tilt(p_k: &ProbVector, rho_g: &[f64], rows: &[Vec<f64>], w: &[f64]) -> ProbVector {
    let shift: Vec<f64> = (0..rho_g.len())
        .map(|i| rho_g[i] + rows.iter().zip(w).map(|(r, wl)| r[i] * wl).sum::<f64>())
        .collect();
    if shift.iter().all(|v| *v == shift[0]) {
        return p_k.clone();
    }
    let lw: Vec<f64> = p_k.as_slice().iter().zip(&shift).map(|(p, s)| p.ln() - s).collect();
    ProbVector::from_normalized(softmax(&lw).0)
}

/// Spread over `i` of `rho_g_i + ln(q_i / p_i) [+ extra_i]`, zero at a stationary point.
pub(crate) fn stationarity_spread(rho_g: &[f64], p: &[f64], q: &[f64], extra: Option<&[f64]>) -> f64 {
    let vals = (0..q.len()).map(|i| rho_g[i] + (q[i] / p[i]).ln() + extra.map_or(0.0, |e| e[i]));
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    hi - lo
}
