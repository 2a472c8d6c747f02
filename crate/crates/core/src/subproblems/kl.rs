//! Solvers over the KL ball `{q : KL(q || p_b) <= eta}` via one-dimensional duals.

use super::{kl_div, softmax, stationarity_spread, tilt, KlBallSet, ProxConfig, SubproblemSolution};
use crate::error::{Error, Result};
use crate::simplex::ProbVector;

/// Cap on bracket doublings/halvings before giving up.
const MAX_BRACKET: usize = 2000;

/// Finds the smallest `lambda > 0` (to machine precision) with `kl(lambda) <= eta`.
/// `kl` must be decreasing, tend to zero as `lambda` grows and exceed `eta` as
/// `lambda -> 0`. Returns the feasible end of the final bracket.
fn bisect_lambda(kl: impl Fn(f64) -> Result<f64>, eta: f64, cfg: &ProxConfig) -> Result<(f64, usize)> {
    let mut iters = 0;
    let mut hi = 1.0;
    while kl(hi)? > eta {
        hi *= 2.0;
        iters += 1;
        if iters > MAX_BRACKET || !hi.is_finite() {
            return Err(Error::BisectionFailure("no feasible multiplier found".into()));
        }
    }
    let mut lo = hi / 2.0;
    if hi == 1.0 {
        while kl(lo)? <= eta {
            hi = lo;
            lo /= 2.0;
            iters += 1;
            if iters > MAX_BRACKET || lo < f64::MIN_POSITIVE {
                lo = 0.0;
                break;
            }
        }
    }
    for _ in 0..cfg.max_bisect {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        iters += 1;
        if kl(mid)? <= eta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((hi, iters))
}

fn baseline_solution(s: &KlBallSet) -> SubproblemSolution {
    SubproblemSolution {
        q: s.baseline().clone(),
        objective: 0.0,
        multipliers: vec![f64::INFINITY],
        kkt_residual: 0.0,
        iterations: 0,
    }
}

/// `argmin g'q` over the ball: `q ∝ p_b exp(-(g - min g)/lambda)`.
pub(super) fn fw_kl_ball(grad: &[f64], s: &KlBallSet, cfg: &ProxConfig) -> Result<SubproblemSolution> {
    let pb = s.baseline().as_slice();
    if s.radius() == 0.0 {
        return Ok(baseline_solution(s));
    }
    let gmin = grad.iter().copied().fold(f64::INFINITY, f64::min);
    let gs: Vec<f64> = grad.iter().map(|g| g - gmin).collect();
    let face_mass: f64 = pb.iter().zip(&gs).filter(|(_, g)| **g == 0.0).map(|(p, _)| p).sum();
    let scale = 1.0 + grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    if -face_mass.ln() <= s.radius() {
        // The baseline restricted to the minimising face is feasible and optimal.
        let q: Vec<f64> = pb.iter().zip(&gs).map(|(p, g)| if *g == 0.0 { p / face_mass } else { 0.0 }).collect();
        let q = ProbVector::new(&q)?;
        let kkt = (kl_div(q.as_slice(), pb)? - s.radius()).max(0.0);
        return Ok(SubproblemSolution { q, objective: 0.0, multipliers: vec![0.0], kkt_residual: kkt, iterations: 0 });
    }
    let ln_pb: Vec<f64> = pb.iter().map(|p| p.ln()).collect();
    let q_at = |lambda: f64| -> Vec<f64> {
        let lw: Vec<f64> = ln_pb.iter().zip(&gs).map(|(l, g)| l - g / lambda).collect();
        softmax(&lw).0
    };
    let kl = |lambda: f64| kl_div(&q_at(lambda), pb);
    let (lambda, iterations) = bisect_lambda(kl, s.radius(), cfg)?;
    let q = ProbVector::from_normalized(q_at(lambda));
    let div = kl_div(q.as_slice(), pb)?;
    // g_i + lambda ln(q_i / p_b,i) must not depend on i.
    // Coordinates that underflowed to zero satisfy the inequality form trivially.
    let (lo, hi) = (0..pb.len())
        .filter(|&i| q.as_slice()[i] > 0.0)
        .map(|i| grad[i] + lambda * (q.as_slice()[i] / pb[i]).ln())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let stationarity = hi - lo;
    let kkt = (stationarity / scale).max(lambda * (div - s.radius()).abs()).max((div - s.radius()).max(0.0));
    Ok(SubproblemSolution { q, objective: 0.0, multipliers: vec![lambda], kkt_residual: kkt, iterations })
}

/// Entropic prox over the ball:
/// `q_i ∝ (p_k,i p_b,i^lambda)^{1/(1+lambda)} exp(-rho g_i / (1 + lambda))`.
pub(super) fn prox_kl_ball(
    s: &KlBallSet,
    p_k: &ProbVector,
    rho_g: &[f64],
    cfg: &ProxConfig,
) -> Result<SubproblemSolution> {
    let pb = s.baseline().as_slice();
    let pk = p_k.as_slice();
    if s.radius() == 0.0 {
        return Ok(baseline_solution(s));
    }
    let q0 = tilt(p_k, rho_g, &[], &[]);
    let div0 = kl_div(q0.as_slice(), pb)?;
    if div0 <= s.radius() {
        let kkt = stationarity_spread(rho_g, pk, q0.as_slice(), None);
        return Ok(SubproblemSolution { q: q0, objective: 0.0, multipliers: vec![0.0], kkt_residual: kkt, iterations: 0 });
    }
    let ln_pk: Vec<f64> = pk.iter().map(|p| p.ln()).collect();
    let ln_pb: Vec<f64> = pb.iter().map(|p| p.ln()).collect();
    let q_at = |lambda: f64| -> Vec<f64> {
        let lw: Vec<f64> =
            (0..pk.len()).map(|i| (ln_pk[i] + lambda * ln_pb[i] - rho_g[i]) / (1.0 + lambda)).collect();
        softmax(&lw).0
    };
    let kl = |lambda: f64| kl_div(&q_at(lambda), pb);
    let (lambda, iterations) = bisect_lambda(kl, s.radius(), cfg)?;
    let q = ProbVector::from_normalized(q_at(lambda));
    let div = kl_div(q.as_slice(), pb)?;
    let extra: Vec<f64> = q.as_slice().iter().zip(pb).map(|(a, b)| lambda * (a / b).ln()).collect();
    let stationarity = stationarity_spread(rho_g, pk, q.as_slice(), Some(&extra)) / (1.0 + lambda);
    let kkt = stationarity.max(lambda * (div - s.radius()).abs()).max((div - s.radius()).max(0.0));
    Ok(SubproblemSolution { q, objective: 0.0, multipliers: vec![lambda], kkt_residual: kkt, iterations })
}

#[cfg(test)]
mod tests {
    use super::super::{fw_linear_min_detailed, md_prox_detailed, UncertaintySet};
    use super::*;

    #[test]
    fn constant_gradient_returns_baseline_value() {
        let pb = ProbVector::new(&[0.2, 0.3, 0.5]).unwrap();
        let set = UncertaintySet::KlBall(KlBallSet::new(pb.clone(), 0.05).unwrap());
        let g = [2.0; 3];
        let sol = fw_linear_min_detailed(&g, &pb, &set, &ProxConfig::default()).unwrap();
        let a: f64 = g.iter().zip(sol.q.as_slice()).map(|(x, y)| x * y).sum();
        assert!((a - 2.0).abs() < 1e-15);
    }

    #[test]
    fn binding_ball_hits_radius() {
        let pb = ProbVector::uniform(4).unwrap();
        let set = UncertaintySet::KlBall(KlBallSet::new(pb.clone(), 0.05).unwrap());
        let cfg = ProxConfig::default();
        let g = [1.0, -2.0, 0.5, 0.3];
        let fw = fw_linear_min_detailed(&g, &pb, &set, &cfg).unwrap();
        assert!((kl_div(fw.q.as_slice(), pb.as_slice()).unwrap() - 0.05).abs() < 1e-12);
        assert!(fw.kkt_residual < 1e-10, "{}", fw.kkt_residual);
        let md = md_prox_detailed(&g, &pb, 5.0, &set, &cfg).unwrap();
        assert!(md.multipliers[0] > 0.0);
        assert!(md.kkt_residual < 1e-10, "{}", md.kkt_residual);
    }

    #[test]
    fn wide_ball_returns_vertex_for_unique_minimum() {
        let pb = ProbVector::uniform(3).unwrap();
        let set = UncertaintySet::KlBall(KlBallSet::new(pb.clone(), 2.0).unwrap());
        let sol = fw_linear_min_detailed(&[3.0, 1.0, 2.0], &pb, &set, &ProxConfig::default()).unwrap();
        assert_eq!(sol.q.as_slice(), &[0.0, 1.0, 0.0]);
    }
}
