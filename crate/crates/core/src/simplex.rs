//! Probability vectors, Dirichlet sampling and exact Dirichlet moments.

use rand::Rng;
use rand_distr::{Open01, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// Tolerance for negative entries accepted (and clamped) at construction.
pub const NEGATIVE_TOL: f64 = 1e-12;

/// Default support adjustment applied to zero concentration entries.
pub const DEFAULT_SUPPORT_EPS: f64 = 1e-6;

/// A point on the probability simplex of dimension `n >= 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Clamps entries in `[-1e-12, 0)` to zero and renormalizes.
    pub fn new(raw: &[f64]) -> Result<Self> {
        if raw.len() < 2 {
            return Err(Error::DimensionTooSmall(raw.len()));
        }
        let mut entries = Vec::with_capacity(raw.len());
        for (index, &value) in raw.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFinite(index));
            }
            if value < -NEGATIVE_TOL {
                return Err(Error::NegativeMass { index, value });
            }
            entries.push(value.max(0.0));
        }
        let total: f64 = entries.iter().sum();
        if total <= 0.0 {
            return Err(Error::ZeroTotal);
        }
        if total != 1.0 {
            entries.iter_mut().for_each(|v| *v /= total);
        }
        Ok(Self(entries))
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::DimensionTooSmall(n));
        }
        Ok(Self(vec![1.0 / n as f64; n]))
    }

    pub fn vertex(n: usize, index: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::DimensionTooSmall(n));
        }
        if index >= n {
            return Err(Error::DimensionMismatch { expected: n, got: index + 1 });
        }
        let mut v = vec![0.0; n];
        v[index] = 1.0;
        Ok(Self(v))
    }

    /// Wraps entries already known to be nonnegative and normalized.
    pub(crate) fn from_normalized(entries: Vec<f64>) -> Self {
        debug_assert!(entries.len() >= 2);
        debug_assert!((entries.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        Self(entries)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn min_entry(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Convex combination `(1 - weight) * self + weight * other`.
    pub fn mix(&self, other: &ProbVector, weight: f64) -> Result<ProbVector> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: other.len() });
        }
        let raw: Vec<f64> =
            self.0.iter().zip(&other.0).map(|(a, b)| (1.0 - weight) * a + weight * b).collect();
        ProbVector::new(&raw)
    }
}

impl AsRef<[f64]> for ProbVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Dirichlet concentration vector. Zero entries pin the coordinate to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletParam {
    alpha: Vec<f64>,
    alpha0: f64,
}

impl DirichletParam {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(Error::DimensionTooSmall(alpha.len()));
        }
        if let Some((i, a)) = alpha.iter().enumerate().find(|(_, a)| !a.is_finite() || **a < 0.0) {
            return Err(Error::InvalidParam(format!("alpha[{i}] = {a}")));
        }
        let alpha0: f64 = alpha.iter().sum();
        if alpha0 <= 0.0 {
            return Err(Error::InvalidParam("all concentration entries are zero".into()));
        }
        Ok(Self { alpha, alpha0 })
    }

    /// `Dir(value * 1)`.
    pub fn symmetric(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    /// Indices with positive concentration.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.alpha.iter().enumerate().filter(|(_, a)| **a > 0.0).map(|(i, _)| i)
    }
}

/// Natural log of a `Gamma(shape, 1)` variate.
///
/// Marsaglia-Tsang for shape >= 1; below that the boost
/// `Gamma(a) = Gamma(a + 1) * U^(1/a)` is applied in log space so tiny shapes
/// do not underflow.
pub fn ln_gamma_variate(shape: f64, rng: &mut StreamRng) -> f64 {
    debug_assert!(shape > 0.0);
    if shape < 1.0 {
        let u: f64 = rng.sample(Open01);
        return ln_gamma_variate(shape + 1.0, rng) + u.ln() / shape;
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x: f64 = rng.sample(StandardNormal);
        let t = 1.0 + c * x;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let u: f64 = rng.sample(Open01);
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d.ln() + v.ln();
        }
    }
}

/// Draws from `Dir(param)` by normalizing independent Gamma variates.
pub fn sample_dirichlet(param: &DirichletParam, rng: &mut StreamRng) -> ProbVector {
    let mut out = vec![0.0; param.dim()];
    add_dirichlet_sample(param, 1.0, &mut out, rng);
    ProbVector::from_normalized(out)
}

/// Adds `weight * x` to `out` for one draw `x ~ Dir(param)`.
pub(crate) fn add_dirichlet_sample(
    param: &DirichletParam,
    weight: f64,
    out: &mut [f64],
    rng: &mut StreamRng,
) {
    let support: Vec<usize> = param.support().collect();
    if support.len() == 1 {
        out[support[0]] += weight;
        return;
    }
    let logs: Vec<f64> = support.iter().map(|&i| ln_gamma_variate(param.alpha[i], rng)).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let draws: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = draws.iter().sum();
    for (&i, w) in support.iter().zip(&draws) {
        out[i] += weight * (w / total);
    }
}

pub fn dirichlet_mean(param: &DirichletParam) -> Vec<f64> {
    param.alpha.iter().map(|a| a / param.alpha0).collect()
}

/// `(diag(m) - m m') / (alpha0 + 1)` with `m = alpha / alpha0`.
pub fn dirichlet_cov(param: &DirichletParam) -> Vec<Vec<f64>> {
    let m = dirichlet_mean(param);
    let scale = 1.0 / (param.alpha0 + 1.0);
    (0..m.len())
        .map(|i| {
            (0..m.len())
                .map(|j| {
                    let diag = if i == j { m[i] } else { 0.0 };
                    (diag - m[i] * m[j]) * scale
                })
                .collect()
        })
        .collect()
}

/// Third central moment `E[(d_i - m_i)(d_j - m_j)(d_k - m_k)]`.
pub fn dirichlet_third_central(param: &DirichletParam, i: usize, j: usize, k: usize) -> f64 {
    let a0 = param.alpha0;
    let m = |idx: usize| param.alpha[idx] / a0;
    let scale = 1.0 / ((a0 + 1.0) * (a0 + 2.0));
    let value = if i == j && j == k {
        let mi = m(i);
        4.0 * mi * mi * mi - 6.0 * mi * mi + 2.0 * mi
    } else if i == j || j == k || i == k {
        // the repeated index and the odd one out
        let (rep, odd) = if i == j {
            (i, k)
        } else if j == k {
            (j, i)
        } else {
            (i, j)
        };
        let (mr, mo) = (m(rep), m(odd));
        4.0 * mr * mr * mo - 2.0 * mr * mo
    } else {
        4.0 * m(i) * m(j) * m(k)
    };
    value * scale
}

/// Adds `eps_supp` to every concentration entry so all components share the
/// full simplex as support.
pub fn support_adjust(param: &DirichletParam, eps_supp: f64) -> Result<DirichletParam> {
    if !(eps_supp > 0.0) || !eps_supp.is_finite() {
        return Err(Error::InvalidParam(format!("support adjustment {eps_supp} must be positive")));
    }
    DirichletParam::new(param.alpha.iter().map(|a| a + eps_supp).collect())
}
