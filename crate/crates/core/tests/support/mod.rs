//! Shared brute-force checks for the subproblem solvers on three-point instances.

#![allow(dead_code)]

use dirmix::rng::{RngStream, StreamRng};
use dirmix::simplex::{sample_dirichlet, DirichletParam, ProbVector};
use dirmix::subproblems::{
    fw_linear_min_detailed, kl_div, md_prox_detailed, BoxMomentSet, KlBallSet, ProxConfig, UncertaintySet,
};
use rand::Rng;

pub const INSTANCES: u64 = 50;
const GRID_STEP: f64 = 1e-3;
pub const OBJECTIVE_TOL: f64 = 1e-3;
pub const KKT_TOL: f64 = 1e-9;

/// Minimum of `f` over feasible points of a grid on the 3-simplex, followed by a
/// finer grid in a window around the coarse winner (a coarse grid alone can
/// miss a sharp vertex of a thin feasible region by more than its step).
pub fn grid_min(feasible: impl Fn(&[f64]) -> bool, f: impl Fn(&[f64]) -> f64) -> f64 {
    let eval = |q0: f64, q1: f64| {
        let q2 = 1.0 - q0 - q1;
        let q = [q0, q1, q2.max(0.0)];
        (q0 >= 0.0 && q1 >= 0.0 && q2 >= -1e-15 && feasible(&q)).then(|| f(&q))
    };
    let scan = |c0: f64, c1: f64, half: f64, step: f64| {
        let k = (half / step).round() as i64;
        let mut best = (f64::INFINITY, c0, c1);
        for i in -k..=k {
            for j in -k..=k {
                let (q0, q1) = (c0 + i as f64 * step, c1 + j as f64 * step);
                if let Some(v) = eval(q0, q1) {
                    if v < best.0 {
                        best = (v, q0, q1);
                    }
                }
            }
        }
        best
    };
    let coarse = scan(0.5, 0.5, 0.5, GRID_STEP);
    let fine = scan(coarse.1, coarse.2, 5.0 * GRID_STEP, GRID_STEP / 50.0);
    coarse.0.min(fine.0)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn interior_point(rng: &mut StreamRng) -> ProbVector {
    let p = sample_dirichlet(&DirichletParam::symmetric(3, 3.0).unwrap(), rng);
    let v: Vec<f64> = p.as_slice().iter().map(|x| x + 0.02).collect();
    ProbVector::new(&v).unwrap()
}

pub fn gradient(rng: &mut StreamRng) -> Vec<f64> {
    (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Linear minimisation over a random first/second moment box.
pub fn box_moment_instance(root: &RngStream, t: u64) -> Result<(), String> {
    let cfg = ProxConfig::default();
    let mut rng = root.split(t).rng();
    let baseline = interior_point(&mut rng);
    let support: Vec<f64> = (0..3).map(|i| i as f64 + rng.random_range(0.5..1.5)).collect();
    let lo = rng.random_range(0.6..0.95);
    let hi = rng.random_range(1.05..1.4);
    let set = BoxMomentSet::relative_moments(&support, &[1, 2], &baseline, lo, hi).map_err(|e| e.to_string())?;
    let set = UncertaintySet::BoxMoment(set);
    let g = gradient(&mut rng);
    let sol = fw_linear_min_detailed(&g, &baseline, &set, &cfg).map_err(|e| e.to_string())?;
    if sol.kkt_residual > KKT_TOL {
        return Err(format!("instance {t}: kkt {}", sol.kkt_residual));
    }
    if set.violation(sol.q.as_slice()) > 1e-9 {
        return Err(format!("instance {t}: infeasible"));
    }
    let solver = dot(&g, sol.q.as_slice());
    let brute = grid_min(|q| set.violation(q) <= 0.0, |q| dot(&g, q));
    if solver > brute + 1e-12 || brute - solver > OBJECTIVE_TOL {
        return Err(format!("instance {t}: solver {solver}, grid {brute}"));
    }
    Ok(())
}

/// Entropic prox step over a random KL ball from an iterate inside it.
pub fn kl_ball_instance(root: &RngStream, t: u64) -> Result<(), String> {
    let cfg = ProxConfig::default();
    let mut rng = root.split(t).rng();
    let baseline = interior_point(&mut rng);
    let radius = rng.random_range(0.02..0.5);
    // An iterate strictly inside the ball, pulled from a random point toward the baseline.
    let other = interior_point(&mut rng);
    let mut weight = 1.0;
    let p_k = loop {
        let cand = baseline.mix(&other, weight).unwrap();
        if kl_div(cand.as_slice(), baseline.as_slice()).unwrap() < radius {
            break cand;
        }
        weight *= 0.5;
    };
    let set = UncertaintySet::KlBall(KlBallSet::new(baseline.clone(), radius).map_err(|e| e.to_string())?);
    let g = gradient(&mut rng);
    let rho = rng.random_range(0.1..5.0);
    let sol = md_prox_detailed(&g, &p_k, rho, &set, &cfg).map_err(|e| e.to_string())?;
    if sol.kkt_residual > KKT_TOL {
        return Err(format!("instance {t}: kkt {}", sol.kkt_residual));
    }
    if set.violation(sol.q.as_slice()) > 1e-9 {
        return Err(format!("instance {t}: infeasible"));
    }
    let objective = |q: &[f64]| rho * (dot(&g, q) - dot(&g, p_k.as_slice())) + kl_div(q, p_k.as_slice()).unwrap();
    let solver = objective(sol.q.as_slice());
    if (solver - sol.objective).abs() >= 1e-12 {
        return Err(format!("instance {t}: reported objective {} vs {solver}", sol.objective));
    }
    let brute = grid_min(|q| kl_div(q, baseline.as_slice()).unwrap() <= radius, objective);
    if solver > brute + 1e-9 || brute - solver > OBJECTIVE_TOL {
        return Err(format!("instance {t}: solver {solver}, grid {brute}"));
    }
    Ok(())
}

/// KKT residuals of the remaining solver and set pairs.
pub fn remaining_pairs_instance(root: &RngStream, t: u64) -> Result<(), String> {
    let cfg = ProxConfig::default();
    let mut rng = root.split(t).rng();
    let baseline = interior_point(&mut rng);
    let g = gradient(&mut rng);
    let rho = rng.random_range(0.1..5.0);
    let err = |e: dirmix::error::Error| e.to_string();

    let kl = UncertaintySet::KlBall(KlBallSet::new(baseline.clone(), rng.random_range(0.02..0.5)).map_err(err)?);
    let sol = fw_linear_min_detailed(&g, &baseline, &kl, &cfg).map_err(err)?;
    if sol.kkt_residual > KKT_TOL || kl.violation(sol.q.as_slice()) > 1e-9 {
        return Err(format!("fw kl instance {t}: kkt {}", sol.kkt_residual));
    }

    let bm = BoxMomentSet::relative_moments(&[1.0, 2.0, 3.0], &[1, 2], &baseline, 0.9, 1.1).map_err(err)?;
    let bm = UncertaintySet::BoxMoment(bm);
    let sol = md_prox_detailed(&g, &baseline, rho, &bm, &cfg).map_err(err)?;
    if sol.kkt_residual > KKT_TOL || bm.violation(sol.q.as_slice()) > 1e-9 {
        return Err(format!("md box instance {t}: kkt {}", sol.kkt_residual));
    }

    let simplex = UncertaintySet::simplex(3).map_err(err)?;
    let sol = md_prox_detailed(&g, &baseline, rho, &simplex, &cfg).map_err(err)?;
    if sol.kkt_residual > KKT_TOL {
        return Err(format!("md simplex instance {t}: kkt {}", sol.kkt_residual));
    }
    Ok(())
}
