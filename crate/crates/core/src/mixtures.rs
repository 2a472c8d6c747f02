//! Dirichlet-mixture perturbations and exact verification of their moments.
//!
//! A perturbation is `delta = sum_k w_k * delta_k` with independent
//! `delta_k ~ Dir(alpha_k)`, paired with the score `S(p, delta) = gamma * (delta - p)`.
//! Two constructions are provided:
//!
//! * [`build_delta_star`]: `n(n-1)/2 + 1` components (one per coordinate pair plus
//!   a vertex). Zero mean score, score covariance `I - 11'/n`, and all mixed
//!   third moments equal to zero. Its multiplier grows like `n^3`.
//! * [`build_delta_dstar`]: `n` components (one symmetric Dirichlet plus point
//!   masses). First two moment conditions only, with a multiplier of order `n`
//!   when `eta = -1`.
//!
//! Both constructions work on the ascending sort of the base point; the
//! permutation is kept so the components are stored in the caller's coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::stats::DoubleDouble;
use crate::simplex::{
    add_dirichlet_sample, dirichlet_cov, dirichlet_mean, dirichlet_third_central, support_adjust,
    DirichletParam, ProbVector,
};

pub const DEFAULT_C_MARGIN: f64 = 2.0;
pub const DEFAULT_ETA: f64 = -1.0;

/// Weights must sum to one within this tolerance.
pub const WEIGHT_TOL: f64 = 1e-10;

/// Thresholds used by [`MomentReport::passes`].
pub const MC1_TOL: f64 = 1e-12;
pub const MC2_TOL: f64 = 1e-10;
pub const MC3_TOL: f64 = 1e-10;
/// `mu` is only reported when the third-moment spread is below this.
pub const MU_REPORT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixtureKind {
    DeltaStar,
    DeltaDoubleStar,
    Custom,
}

impl MixtureKind {
    pub fn label(self) -> &'static str {
        match self {
            MixtureKind::DeltaStar => "delta_star",
            MixtureKind::DeltaDoubleStar => "delta_double_star",
            MixtureKind::Custom => "custom",
        }
    }
}

/// Recipe for building a mixture at an arbitrary base point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MixtureChoice {
    DeltaStar {
        #[serde(default = "default_c_margin")]
        c_margin: f64,
    },
    DeltaDoubleStar {
        #[serde(default = "default_eta")]
        eta: f64,
    },
}

fn default_c_margin() -> f64 {
    DEFAULT_C_MARGIN
}

fn default_eta() -> f64 {
    DEFAULT_ETA
}

impl Default for MixtureChoice {
    fn default() -> Self {
        MixtureChoice::DeltaDoubleStar { eta: DEFAULT_ETA }
    }
}

impl MixtureChoice {
    pub fn delta_star() -> Self {
        MixtureChoice::DeltaStar { c_margin: DEFAULT_C_MARGIN }
    }

    pub fn delta_double_star() -> Self {
        MixtureChoice::DeltaDoubleStar { eta: DEFAULT_ETA }
    }

    pub fn kind(&self) -> MixtureKind {
        match self {
            MixtureChoice::DeltaStar { .. } => MixtureKind::DeltaStar,
            MixtureChoice::DeltaDoubleStar { .. } => MixtureKind::DeltaDoubleStar,
        }
    }

    pub fn build(&self, p: &ProbVector) -> Result<DirichletMixture> {
        match *self {
            MixtureChoice::DeltaStar { c_margin } => build_delta_star(p, c_margin),
            MixtureChoice::DeltaDoubleStar { eta } => build_delta_dstar(p, eta),
        }
    }
}

/// A random perturbation on (a product of) simplices with its score multiplier.
pub trait Perturbation: Sync {
    /// Base point in flat coordinates.
    fn base(&self) -> &[f64];
    fn gamma(&self) -> f64;
    /// Writes one draw of the perturbation into `out` (flat coordinates).
    fn sample_into(&self, out: &mut [f64], rng: &mut StreamRng);
    /// Largest `c` keeping `(1 + c) p - c delta` nonnegative for every draw.
    fn c_cap(&self) -> f64;

    fn dim(&self) -> usize {
        self.base().len()
    }

    fn sample(&self, rng: &mut StreamRng) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.sample_into(&mut out, rng);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirichletMixture {
    weights: Vec<f64>,
    components: Vec<DirichletParam>,
    gamma: f64,
    base: ProbVector,
    kind: MixtureKind,
    eta: Option<f64>,
    scale: Option<f64>,
    levels: Vec<f64>,
    order: Vec<usize>,
    c_cap: f64,
    support_eps: Option<f64>,
}

/// Ascending order of `p`, ties broken by original index.
fn ascending_order(p: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    order
}

fn require_interior(p: &ProbVector) -> Result<()> {
    match p.as_slice().iter().position(|v| *v <= 0.0) {
        Some(i) => Err(Error::ZeroEntry(i)),
        None => Ok(()),
    }
}

fn mirror_cap(p: &[f64], weights: &[f64], components: &[DirichletParam]) -> f64 {
    let n = p.len();
    let mut reach = vec![0.0; n];
    for (w, comp) in weights.iter().zip(components) {
        for i in comp.support() {
            reach[i] += w;
        }
    }
    (0..n)
        .filter(|&i| reach[i] > p[i])
        .map(|i| p[i] / (reach[i] - p[i]))
        .fold(1.0, f64::min)
}

/// The `theta` recursion for the pairwise mixture, on an ascending-sorted point.
/// Returns `(theta^1..theta^{n-1}, theta^n)`.
pub fn delta_star_levels(sorted: &[f64]) -> (Vec<f64>, f64) {
    let n = sorted.len();
    // The running total is kept in double-double so that rounding does not
    // accumulate along the recursion.
    let mut levels = Vec::with_capacity(n - 1);
    let mut acc = DoubleDouble::default();
    for (l, &p_l) in sorted.iter().enumerate().take(n - 1) {
        let mut num = DoubleDouble::new(2.0 * p_l);
        num.add(-acc.hi);
        num.add(-acc.lo);
        let theta = num.value() / (n - 1 - l) as f64;
        levels.push(theta);
        acc.add(theta);
    }
    let mut vertex = DoubleDouble::new(sorted[n - 1]);
    vertex.add(-0.5 * acc.hi);
    vertex.add(-0.5 * acc.lo);
    (levels, vertex.value().max(0.0))
}

/// Smallest admissible scale for the pairwise mixture: `(n-1)^2 / (4 p_min^2)`.
pub fn delta_star_scale_bound(p: &ProbVector) -> f64 {
    let n = p.len() as f64;
    let pmin = p.min_entry();
    (n - 1.0).powi(2) / (4.0 * pmin * pmin)
}

/// Pairwise mixture with `C = c_margin * (n-1)^2 / (4 p_min^2)` and `gamma = 4C/n`.
pub fn build_delta_star(p: &ProbVector, c_margin: f64) -> Result<DirichletMixture> {
    require_interior(p)?;
    if !(c_margin > 1.0) || !c_margin.is_finite() {
        return Err(Error::BadMargin(c_margin));
    }
    build_delta_star_with_scale(p, c_margin * delta_star_scale_bound(p))
}

/// Pairwise mixture for an explicit scale constant `C`.
pub fn build_delta_star_with_scale(p: &ProbVector, scale: f64) -> Result<DirichletMixture> {
    require_interior(p)?;
    let bound = delta_star_scale_bound(p);
    if !(scale > bound) || !scale.is_finite() {
        return Err(Error::BadMargin(scale / bound));
    }
    let n = p.len();
    let order = ascending_order(p.as_slice());
    let sorted: Vec<f64> = order.iter().map(|&i| p.as_slice()[i]).collect();
    let (levels, _) = delta_star_levels(&sorted);

    // Each pair weight is nominally theta_l. Rounding is spread over the pair
    // weights so that every coordinate's mean matches p to one rounding, which
    // matters because gamma amplifies the first-moment error.
    let mut weights = Vec::with_capacity(n * (n - 1) / 2 + 1);
    let mut components = Vec::with_capacity(n * (n - 1) / 2 + 1);
    // received[l]: exact total weight of earlier pairs that include sorted index l.
    let mut received = vec![DoubleDouble::default(); n];
    for (l, &theta) in levels.iter().enumerate() {
        let alpha0 = scale * theta * theta - 1.0;
        let mut remaining = DoubleDouble::new(2.0 * sorted[l]);
        remaining.add(-received[l].hi);
        remaining.add(-received[l].lo);
        for (m, &partner) in order.iter().enumerate().skip(l + 1) {
            let left = (n - m) as f64;
            let w = if left == 1.0 { remaining.value() } else { (remaining.value() / left).max(0.0) };
            remaining.add(-w);
            received[m].add(w);
            let mut alpha = vec![0.0; n];
            alpha[order[l]] = 0.5 * alpha0;
            alpha[partner] = 0.5 * alpha0;
            weights.push(w.max(0.0));
            components.push(DirichletParam::new(alpha)?);
        }
    }
    let mut vertex = DoubleDouble::new(sorted[n - 1]);
    vertex.add(-0.5 * received[n - 1].hi);
    vertex.add(-0.5 * received[n - 1].lo);
    let mut top = vec![0.0; n];
    top[order[n - 1]] = 1.0;
    weights.push(vertex.value().max(0.0));
    components.push(DirichletParam::new(top)?);

    let c_cap = mirror_cap(p.as_slice(), &weights, &components);
    Ok(DirichletMixture {
        weights,
        components,
        gamma: 4.0 * scale / n as f64,
        base: p.clone(),
        kind: MixtureKind::DeltaStar,
        eta: None,
        scale: Some(scale),
        levels,
        order,
        c_cap,
        support_eps: None,
    })
}

/// Multiplier of the symmetric-plus-point-mass mixture.
pub fn delta_dstar_gamma(n: usize, p_min: f64, eta: f64) -> f64 {
    let n = n as f64;
    (n.powf(eta + 1.0) + 1.0) / (n * p_min * p_min)
}

/// Symmetric `Dir(n^eta 1)` component weighted `n p_min` plus point masses at
/// the remaining sorted coordinates weighted `p_(l) - p_min`.
pub fn build_delta_dstar(p: &ProbVector, eta: f64) -> Result<DirichletMixture> {
    require_interior(p)?;
    if !eta.is_finite() {
        return Err(Error::InvalidParam(format!("eta = {eta}")));
    }
    let n = p.len();
    let order = ascending_order(p.as_slice());
    let pmin = p.as_slice()[order[0]];

    let mut weights = Vec::with_capacity(2 * n);
    let mut components = Vec::with_capacity(2 * n);
    let symmetric = DirichletParam::symmetric(n, (n as f64).powf(eta))?;
    let alpha0 = symmetric.alpha0();
    let share = symmetric.alpha()[0];
    // Nominally n p_min; stepped down until the stored component's share of
    // the minimum coordinate does not overshoot it.
    let mut w0 = n as f64 * pmin;
    for _ in 0..8 {
        let mut rest = DoubleDouble::new(pmin);
        rest.add_scaled_ratio(-w0, share, alpha0);
        if rest.value() >= 0.0 {
            break;
        }
        w0 = w0.next_down();
    }
    weights.push(w0);
    components.push(symmetric);
    // Each point mass weight is p_i minus the symmetric component's share of
    // coordinate i. Its rounding error is kept as a second, tiny point mass at
    // the same vertex: a shared multiplier can be large enough to amplify a
    // single rounding past the first-moment tolerance.
    let mut corrections = Vec::new();
    for (rank, &idx) in order.iter().enumerate() {
        let mut exact = DoubleDouble::new(p.as_slice()[idx]);
        exact.add_scaled_ratio(-w0, share, alpha0);
        if rank == 0 {
            let mut alpha = vec![0.0; n];
            alpha[idx] = 1.0;
            if exact.value() > 0.0 {
                corrections.push((exact.value(), alpha));
            }
            continue;
        }
        let (mut hi, mut lo) = (exact.hi, exact.lo);
        if lo < 0.0 && hi > 0.0 {
            let down = hi.next_down();
            lo += hi - down;
            hi = down;
        }
        let mut alpha = vec![0.0; n];
        alpha[idx] = 1.0;
        weights.push(hi.max(0.0));
        components.push(DirichletParam::new(alpha.clone())?);
        if hi > 0.0 && lo > 0.0 {
            corrections.push((lo, alpha));
        }
    }
    let levels = weights.clone();
    for (lo, alpha) in corrections {
        weights.push(lo);
        components.push(DirichletParam::new(alpha)?);
    }
    let c_cap = mirror_cap(p.as_slice(), &weights, &components);
    Ok(DirichletMixture {
        levels,
        weights,
        components,
        gamma: delta_dstar_gamma(n, pmin, eta),
        base: p.clone(),
        kind: MixtureKind::DeltaDoubleStar,
        eta: Some(eta),
        scale: None,
        order,
        c_cap,
        support_eps: None,
    })
}

impl DirichletMixture {
    /// Arbitrary mixture; weights must sum to one and the mixture mean must equal `base`.
    pub fn custom(
        base: ProbVector,
        weights: Vec<f64>,
        components: Vec<DirichletParam>,
        gamma: f64,
    ) -> Result<Self> {
        if weights.len() != components.len() || weights.is_empty() {
            return Err(Error::InvalidParam("one weight per component required".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidParam("weights must be nonnegative".into()));
        }
        if ((weights.iter().sum::<f64>()) - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidParam("weights must sum to 1".into()));
        }
        let n = base.len();
        if let Some(c) = components.iter().find(|c| c.dim() != n) {
            return Err(Error::DimensionMismatch { expected: n, got: c.dim() });
        }
        let mut mean = vec![0.0; n];
        for (w, c) in weights.iter().zip(&components) {
            for (m, v) in mean.iter_mut().zip(dirichlet_mean(c)) {
                *m += w * v;
            }
        }
        if mean.iter().zip(base.as_slice()).any(|(m, p)| (m - p).abs() > WEIGHT_TOL) {
            return Err(Error::InvalidParam("mixture mean differs from the base point".into()));
        }
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidParam(format!("gamma = {gamma}")));
        }
        let c_cap = mirror_cap(base.as_slice(), &weights, &components);
        Ok(Self {
            order: ascending_order(base.as_slice()),
            levels: weights.clone(),
            weights,
            components,
            gamma,
            base,
            kind: MixtureKind::Custom,
            eta: None,
            scale: None,
            c_cap,
            support_eps: None,
        })
    }

    /// Adds `eps` to every concentration entry of every component, so all
    /// components share the full simplex as support. Moments shift slightly;
    /// [`verify_moments`] reports the shifted values.
    pub fn with_support_adjustment(mut self, eps: f64) -> Result<Self> {
        self.components =
            self.components.iter().map(|c| support_adjust(c, eps)).collect::<Result<_>>()?;
        self.support_eps = Some(eps);
        Ok(self)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[DirichletParam] {
        &self.components
    }

    pub fn base_point(&self) -> &ProbVector {
        &self.base
    }

    pub fn kind(&self) -> MixtureKind {
        self.kind
    }

    pub fn eta(&self) -> Option<f64> {
        self.eta
    }

    /// The constant `C` of the pairwise construction.
    pub fn scale(&self) -> Option<f64> {
        self.scale
    }

    /// Weights in the sorted frame: `theta^1..theta^{n-1}` for the pairwise
    /// mixture, all `n` weights otherwise.
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Ascending sort permutation of the base point.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn support_eps(&self) -> Option<f64> {
        self.support_eps
    }

    pub fn n(&self) -> usize {
        self.base.len()
    }

    fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }
}

impl Perturbation for DirichletMixture {
    fn base(&self) -> &[f64] {
        self.base.as_slice()
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn sample_into(&self, out: &mut [f64], rng: &mut StreamRng) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (w, comp) in self.weights.iter().zip(&self.components) {
            if *w > 0.0 {
                add_dirichlet_sample(comp, *w, out, rng);
            }
        }
    }

    fn c_cap(&self) -> f64 {
        self.c_cap
    }
}

/// True iff `theta^1 <= ... <= theta^{n-1}` (up to rounding).
pub fn check_theta_monotone(mix: &DirichletMixture) -> Result<bool> {
    if mix.kind != MixtureKind::DeltaStar {
        return Err(Error::WrongKind { expected: "delta_star" });
    }
    Ok(mix.levels.windows(2).all(|w| w[0] <= w[1] + 1e-12 * w[1].abs().max(1.0)))
}

/// Lower bound on any multiplier compatible with the second moment condition.
pub fn gamma_lower_bound(n: usize) -> f64 {
    (n as f64 - 1.0) / 4.0
}

/// Exact moments of `d = delta - p`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureMoments {
    pub n: usize,
    /// `E[delta]`.
    pub mean: Vec<f64>,
    /// `E[delta] - p`, accumulated in double-double so that it is not
    /// swamped by the rounding of `mean`.
    pub offset: Vec<f64>,
    /// `E[d d']`, row-major `n x n`.
    pub second: Vec<f64>,
    /// `E[d_i d_j d_k]`, flattened as `i*n*n + j*n + k`.
    pub third: Vec<f64>,
}

impl MixtureMoments {
    pub fn second_at(&self, i: usize, j: usize) -> f64 {
        self.second[i * self.n + j]
    }

    pub fn third_at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.third[(i * self.n + j) * self.n + k]
    }

    /// `t_k = sum_i E[d_i d_i d_k]`, i.e. `E[|d|^2 d]`.
    pub fn trace_third(&self) -> Vec<f64> {
        (0..self.n).map(|k| (0..self.n).map(|i| self.third_at(i, i, k)).sum()).collect()
    }
}

/// Sums component-wise analytic moments. Components are independent, so the
/// central second moment is `sum w^2 Cov_k` and the central third moment is
/// `sum w^3 T_k`; the offset `E[delta] - p` is folded back in afterwards.
pub fn mixture_moments(mix: &DirichletMixture) -> MixtureMoments {
    let n = mix.n();
    let mut mean = vec![0.0; n];
    let mut offset: Vec<DoubleDouble> = mix.base.as_slice().iter().map(|p| DoubleDouble::new(-p)).collect();
    let mut cov = vec![0.0; n * n];
    let mut cen3 = vec![0.0; n * n * n];
    for (w, comp) in mix.weights.iter().zip(&mix.components) {
        if *w == 0.0 {
            continue;
        }
        for (m, v) in mean.iter_mut().zip(dirichlet_mean(comp)) {
            *m += w * v;
        }
        let alpha0 = comp.alpha0();
        for i in comp.support() {
            offset[i].add_scaled_ratio(*w, comp.alpha()[i], alpha0);
        }
        let support: Vec<usize> = comp.support().collect();
        if support.len() < 2 {
            continue;
        }
        let c = dirichlet_cov(comp);
        let (w2, w3) = (w * w, w * w * w);
        for &i in &support {
            for &j in &support {
                cov[i * n + j] += w2 * c[i][j];
                for &k in &support {
                    cen3[(i * n + j) * n + k] += w3 * dirichlet_third_central(comp, i, j, k);
                }
            }
        }
    }
    let b: Vec<f64> = offset.iter().map(DoubleDouble::value).collect();
    let mut second = cov.clone();
    for i in 0..n {
        for j in 0..n {
            second[i * n + j] += b[i] * b[j];
        }
    }
    let mut third = cen3;
    if b.iter().any(|v| *v != 0.0) {
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    third[(i * n + j) * n + k] += b[i] * cov[j * n + k]
                        + b[j] * cov[i * n + k]
                        + b[k] * cov[i * n + j]
                        + b[i] * b[j] * b[k];
                }
            }
        }
    }
    MixtureMoments { n, mean, offset: b, second, third }
}

/// Residuals of the three moment conditions for the score `gamma (delta - p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    /// `max |E[S]|`.
    pub mc1_residual: f64,
    /// `max |gamma E[d d'] - (I - lambda 11')|`.
    pub mc2_residual: f64,
    pub lambda: f64,
    /// Max minus min of `gamma E[d_i d_j d_k]` over all index triples.
    pub mc3_spread: f64,
    /// Common third-moment value, present only when the spread is negligible.
    pub mu: Option<f64>,
}

impl MomentReport {
    pub fn passes_first_two(&self) -> bool {
        self.mc1_residual <= MC1_TOL && self.mc2_residual <= MC2_TOL
    }

    pub fn passes_all(&self) -> bool {
        self.passes_first_two() && self.mc3_spread <= MC3_TOL
    }
}

pub fn report_from_moments(moments: &MixtureMoments, gamma: f64) -> MomentReport {
    let n = moments.n;
    let lambda = 1.0 / n as f64;
    let mc1_residual = moments
        .offset
        .iter()
        .map(|b| (gamma * b).abs())
        .fold(0.0, f64::max);
    let mut mc2_residual: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 - lambda } else { -lambda };
            mc2_residual = mc2_residual.max((gamma * moments.second_at(i, j) - target).abs());
        }
    }
    let (lo, hi, sum) = moments.third.iter().fold((f64::INFINITY, f64::NEG_INFINITY, 0.0), |acc, v| {
        let v = gamma * v;
        (acc.0.min(v), acc.1.max(v), acc.2 + v)
    });
    let mc3_spread = hi - lo;
    let mu = (mc3_spread <= MU_REPORT_TOL).then(|| sum / moments.third.len() as f64);
    MomentReport { mc1_residual, mc2_residual, lambda, mc3_spread, mu }
}

pub fn verify_moments(mix: &DirichletMixture) -> MomentReport {
    report_from_moments(&mixture_moments(mix), mix.gamma)
}

/// Per-block recipe for [`build_multi`].
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpec {
    pub p: ProbVector,
    pub choice: MixtureChoice,
}

/// Independent per-block mixtures sharing one multiplier; draws are concatenated.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMixture {
    blocks: Vec<DirichletMixture>,
    gamma: f64,
    flat_base: Vec<f64>,
    c_cap: f64,
}

impl BlockMixture {
    pub fn blocks(&self) -> &[DirichletMixture] {
        &self.blocks
    }

    pub fn block_dims(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.n()).collect()
    }

    fn from_blocks(blocks: Vec<DirichletMixture>, gamma: f64) -> Self {
        let flat_base = blocks.iter().flat_map(|b| b.base().iter().copied()).collect();
        let c_cap = blocks.iter().map(|b| b.c_cap).fold(1.0, f64::min);
        Self { blocks, gamma, flat_base, c_cap }
    }

    pub fn with_support_adjustment(self, eps: f64) -> Result<Self> {
        let blocks =
            self.blocks.into_iter().map(|b| b.with_support_adjustment(eps)).collect::<Result<_>>()?;
        Ok(Self::from_blocks(blocks, self.gamma))
    }
}

impl From<DirichletMixture> for BlockMixture {
    fn from(mix: DirichletMixture) -> Self {
        let gamma = mix.gamma;
        Self::from_blocks(vec![mix], gamma)
    }
}

impl Perturbation for BlockMixture {
    fn base(&self) -> &[f64] {
        &self.flat_base
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn sample_into(&self, out: &mut [f64], rng: &mut StreamRng) {
        let mut offset = 0;
        for block in &self.blocks {
            let n = block.n();
            block.sample_into(&mut out[offset..offset + n], rng);
            offset += n;
        }
    }

    fn c_cap(&self) -> f64 {
        self.c_cap
    }
}

/// Rebuilds one block so its multiplier equals `gamma`.
fn rebuild_block(index: usize, spec: &BlockSpec, gamma: f64) -> Result<DirichletMixture> {
    let n = spec.p.len() as f64;
    let mix = match spec.choice {
        MixtureChoice::DeltaStar { .. } => build_delta_star_with_scale(&spec.p, n * gamma / 4.0)?,
        MixtureChoice::DeltaDoubleStar { .. } => {
            require_interior(&spec.p)?;
            let pmin = spec.p.min_entry();
            let rhs = (gamma * n * pmin * pmin - 1.0) / n;
            if !(rhs > 0.0) {
                return Err(Error::InfeasibleEta { block: index, rhs });
            }
            build_delta_dstar(&spec.p, rhs.ln() / n.ln())?
        }
    };
    Ok(mix.with_gamma(gamma))
}

/// Builds every block with its own recipe, takes the largest multiplier and
/// rebuilds the remaining blocks to share it.
pub fn build_multi(blocks: &[BlockSpec]) -> Result<BlockMixture> {
    if blocks.is_empty() {
        return Err(Error::InvalidParam("at least one block is required".into()));
    }
    let own: Vec<DirichletMixture> =
        blocks.iter().map(|b| b.choice.build(&b.p)).collect::<Result<_>>()?;
    let gamma = own.iter().map(|m| m.gamma).fold(f64::NEG_INFINITY, f64::max);
    let rebuilt = own
        .into_iter()
        .zip(blocks)
        .enumerate()
        .map(|(i, (mix, spec))| if mix.gamma == gamma { Ok(mix) } else { rebuild_block(i, spec, gamma) })
        .collect::<Result<Vec<_>>>()?;
    Ok(BlockMixture::from_blocks(rebuilt, gamma))
}

/// Builds every block for a caller-chosen shared multiplier.
pub fn build_multi_with_gamma(blocks: &[BlockSpec], gamma: f64) -> Result<BlockMixture> {
    if blocks.is_empty() {
        return Err(Error::InvalidParam("at least one block is required".into()));
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidParam(format!("gamma = {gamma}")));
    }
    let rebuilt = blocks
        .iter()
        .enumerate()
        .map(|(i, spec)| rebuild_block(i, spec, gamma))
        .collect::<Result<Vec<_>>>()?;
    Ok(BlockMixture::from_blocks(rebuilt, gamma))
}

/// Per-block moment reports (cross-block terms vanish by independence).
pub fn verify_block_moments(mix: &BlockMixture) -> Vec<MomentReport> {
    mix.blocks
        .iter()
        .map(|b| report_from_moments(&mixture_moments(b), mix.gamma))
        .collect()
}
