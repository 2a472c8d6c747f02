//! Entropic prox over a box-moment set, solved in the dual.
//!
//! For a multiplier `w` (one per moment row, positive when the upper bound is
//! active, negative for the lower one) the primal minimiser is
//! `q(w) ∝ p_k exp(-rho g - F'w)`. The dual
//! `D(w) = -ln Z(w) - sum_l max(hi_l w_l, lo_l w_l)` is concave with gradient
//! `F q(w) - bound` and Hessian `-Cov_q(F)` on each smooth piece, so a
//! projected Newton ascent with step halving converges quickly.

use super::{softmax, tilt, BoxMomentSet, ProxConfig, SubproblemSolution};
use crate::error::{Error, Result};
use crate::simplex::ProbVector;

/// Relative ridge added to the covariance before solving for the Newton step.
const RIDGE: f64 = 1e-12;
const MAX_HALVINGS: usize = 60;

struct Dual<'a> {
    set: &'a BoxMomentSet,
    base: Vec<f64>,
}

struct Point {
    w: Vec<f64>,
    q: Vec<f64>,
    moments: Vec<f64>,
    value: f64,
    residual: f64,
}

impl<'a> Dual<'a> {
    fn lw(&self, w: &[f64]) -> Vec<f64> {
        let rows = self.set.values();
        (0..self.base.len())
            .map(|i| self.base[i] - rows.iter().zip(w).map(|(r, wl)| r[i] * wl).sum::<f64>())
            .collect()
    }

    fn at(&self, w: Vec<f64>) -> Point {
        let (q, log_z) = softmax(&self.lw(&w));
        let moments = self.set.moments(&q);
        let penalty: f64 = w
            .iter()
            .zip(self.set.lo().iter().zip(self.set.hi()))
            .map(|(wl, (lo, hi))| match wl.partial_cmp(&0.0) {
                Some(std::cmp::Ordering::Greater) => hi * wl,
                Some(std::cmp::Ordering::Less) => lo * wl,
                _ => 0.0,
            })
            .sum();
        let residual = self.residual(&w, &moments);
        Point { w, q, moments, value: -log_z - penalty, residual }
    }

    /// Primal violation and complementary slackness of the moment rows.
    fn residual(&self, w: &[f64], m: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for l in 0..w.len() {
            let (lo, hi) = (self.set.lo()[l], self.set.hi()[l]);
            worst = worst.max(m[l] - hi).max(lo - m[l]);
            if w[l] > 0.0 {
                worst = worst.max((w[l] * (m[l] - hi)).abs()).max((m[l] - hi).abs().min(f64::MAX));
            } else if w[l] < 0.0 {
                worst = worst.max((w[l] * (m[l] - lo)).abs()).max((m[l] - lo).abs());
            }
        }
        worst
    }

    /// Sign limits from infinite bounds: `w_l <= 0` without an upper bound, `w_l >= 0` without a lower one.
    fn project(&self, w_old: &[f64], w: &mut [f64]) {
        for l in 0..w.len() {
            if !self.set.hi()[l].is_finite() && w[l] > 0.0 {
                w[l] = 0.0;
            }
            if self.set.lo()[l] == f64::NEG_INFINITY && w[l] < 0.0 {
                w[l] = 0.0;
            }
            // Stop at the kink rather than jumping across it.
            if w_old[l] * w[l] < 0.0 {
                w[l] = 0.0;
            }
        }
    }
}

/// `Cov_q(F_A)^{-1} r` (lightly regularised) for the free rows `A`.
fn newton_step(set: &BoxMomentSet, pt: &Point, free: &[(usize, f64)]) -> Vec<f64> {
    let rows = set.values();
    let mut cov: Vec<Vec<f64>> = free
        .iter()
        .map(|&(a, _)| {
            free.iter()
                .map(|&(b, _)| {
                    let e: f64 = pt.q.iter().enumerate().map(|(i, qi)| qi * rows[a][i] * rows[b][i]).sum();
                    e - pt.moments[a] * pt.moments[b]
                })
                .collect()
        })
        .collect();
    let trace = (0..free.len()).map(|i| cov[i][i]).sum::<f64>() / free.len() as f64;
    for (i, row) in cov.iter_mut().enumerate() {
        row[i] += RIDGE * trace.max(f64::MIN_POSITIVE);
    }
    let r: Vec<f64> = free.iter().map(|(_, r)| *r).collect();
    solve_dense(cov, r.clone()).unwrap_or(r)
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

pub(super) fn prox_box_moment(
    set: &BoxMomentSet,
    p_k: &ProbVector,
    rho_g: &[f64],
    cfg: &ProxConfig,
) -> Result<SubproblemSolution> {
    let s = set.values().len();
    let dual = Dual { set, base: p_k.as_slice().iter().zip(rho_g).map(|(p, g)| p.ln() - g).collect() };
    let mut pt = dual.at(vec![0.0; s]);
    let mut iterations = 0;
    while pt.residual > cfg.kkt_tol && iterations < cfg.max_dual_iter {
        iterations += 1;
        // Rows that may move, with the bound each one targets.
        let mut free: Vec<(usize, f64)> = Vec::new();
        for l in 0..s {
            let (lo, hi, m, w) = (set.lo()[l], set.hi()[l], pt.moments[l], pt.w[l]);
            if w > 0.0 || (w == 0.0 && m > hi) || lo == hi {
                free.push((l, m - hi));
            } else if w < 0.0 || (w == 0.0 && m < lo) {
                free.push((l, m - lo));
            }
        }
        // Newton step on the free rows; rows sitting at the kink whose step
        // points to the other side are pinned and the step recomputed.
        let step = loop {
            if free.is_empty() {
                break None;
            }
            let step = newton_step(set, &pt, &free);
            let wrong = free.iter().zip(&step).position(|(&(l, r), d)| {
                pt.w[l] == 0.0 && set.lo()[l] != set.hi()[l] && d * r < 0.0
            });
            match wrong {
                Some(k) => {
                    free.remove(k);
                }
                None => break Some(step),
            }
        };
        let Some(step) = step else { break };
        let slope: f64 = step.iter().zip(&free).map(|(d, (_, r))| d * r).sum();

        let mut tau = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let mut w = pt.w.clone();
            for (d, &(l, _)) in step.iter().zip(&free) {
                w[l] += tau * d;
            }
            dual.project(&pt.w, &mut w);
            let cand = dual.at(w);
            let flat = (cand.value - pt.value).abs() <= 1e-14 * (1.0 + pt.value.abs());
            if cand.value >= pt.value + 1e-4 * tau * slope || (flat && cand.residual < pt.residual) {
                accepted = Some(cand);
                break;
            }
            tau *= 0.5;
        }
        match accepted {
            Some(cand) => pt = cand,
            None => break,
        }
    }
    if pt.residual > 10.0 * cfg.kkt_tol {
        return Err(Error::BisectionFailure(format!(
            "moment multipliers did not converge (residual {:.3e} after {iterations} steps)",
            pt.residual
        )));
    }
    let q = if pt.w.iter().all(|w| *w == 0.0) {
        tilt(p_k, rho_g, &[], &[])
    } else {
        ProbVector::from_normalized(pt.q.clone())
    };
    // Stationarity holds by construction; report it anyway as part of the certificate.
    let stationarity = {
        let fw: Vec<f64> = (0..q.len()).map(|i| set.values().iter().zip(&pt.w).map(|(r, w)| r[i] * w).sum()).collect();
        super::stationarity_spread(rho_g, p_k.as_slice(), q.as_slice(), Some(&fw))
    };
    Ok(SubproblemSolution {
        q,
        objective: 0.0,
        multipliers: pt.w,
        kkt_residual: pt.residual.max(stationarity),
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{md_prox_detailed, UncertaintySet};
    use super::*;

    #[test]
    fn dense_solver() {
        let x = solve_dense(vec![vec![2.0, 1.0], vec![1.0, 3.0]], vec![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-15 && (x[1] - 1.4).abs() < 1e-15);
        assert!(solve_dense(vec![vec![0.0]], vec![1.0]).is_none());
    }

    #[test]
    fn binding_moment_prox() {
        let p = ProbVector::uniform(4).unwrap();
        let set = BoxMomentSet::relative_moments(&[1.0, 2.0, 3.0, 4.0], &[1, 2], &p, 0.9, 1.1).unwrap();
        let set = UncertaintySet::BoxMoment(set);
        let sol = md_prox_detailed(&[0.0, 0.0, 0.0, -1.0], &p, 3.0, &set, &ProxConfig::default()).unwrap();
        assert!(sol.kkt_residual <= 1e-9, "{}", sol.kkt_residual);
        assert!(sol.multipliers.iter().any(|w| *w != 0.0));
        assert!(set.violation(sol.q.as_slice()) < 1e-9);
    }

    #[test]
    fn equality_row() {
        let p = ProbVector::new(&[0.2, 0.3, 0.5]).unwrap();
        let set = UncertaintySet::BoxMoment(BoxMomentSet::new(vec![vec![1.0, 2.0, 3.0]], vec![2.3], vec![2.3]).unwrap());
        let sol = md_prox_detailed(&[1.0, -1.0, 0.5], &p, 1.0, &set, &ProxConfig::default()).unwrap();
        let m: f64 = sol.q.as_slice().iter().zip([1.0, 2.0, 3.0]).map(|(a, b)| a * b).sum();
        assert!((m - 2.3).abs() < 1e-10);
    }
}
