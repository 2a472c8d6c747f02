//! Compares the scalar variance of every gradient estimator at one parameter
//! point on the noisy quadratic.
//!
//! Usage: `cargo run --release --example estimator_variance`

use dirmix::estimators::{run_stats, EstimatorKind, EstimatorSpec};
use dirmix::mixtures::MixtureChoice;
use dirmix::objectives::{with_gaussian_noise, Quadratic};
use dirmix::rng::RngStream;
use dirmix::simplex::{sample_dirichlet, DirichletParam};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (n, sigma, c, r, trials) = (20, 0.05, 0.05, 15, 200);
    let oracle = with_gaussian_noise(Quadratic::new(n)?, sigma)?;
    let root = RngStream::new(7);
    let points: Vec<Vec<f64>> = (0..5)
        .map(|i| sample_dirichlet(&DirichletParam::symmetric(n, 10.0).unwrap(), &mut root.split(i).rng()).into_vec())
        .collect();
    println!("n = {n}, sigma = {sigma}, c = {c}, R = {r}, {trials} trials at {} base points", points.len());
    println!("{:<14} {:<14} {:>14} {:>10}", "estimator", "mixture", "variance", "calls");
    let cases = [
        (EstimatorKind::Sfe, MixtureChoice::delta_star()),
        (EstimatorKind::Ffe, MixtureChoice::delta_star()),
        (EstimatorKind::Sfe, MixtureChoice::delta_double_star()),
        (EstimatorKind::Ffe, MixtureChoice::delta_double_star()),
        (EstimatorKind::Cfe, MixtureChoice::delta_double_star()),
        (EstimatorKind::FdStandard, MixtureChoice::default()),
        (EstimatorKind::FdRandom, MixtureChoice::default()),
    ];
    for (j, (kind, choice)) in cases.into_iter().enumerate() {
        let spec = EstimatorSpec::new(kind, c, r, choice);
        let stats = run_stats(&spec, &oracle, &points, trials, &root.split(100 + j as u64))?;
        let mixture = match kind {
            EstimatorKind::FdStandard | EstimatorKind::FdRandom => "-",
            _ => choice.kind().label(),
        };
        println!("{:<14} {:<14} {:>14.4e} {:>10}", kind.label(), mixture, stats.variance_scalar, stats.budget_used / (trials * points.len()));
    }
    Ok(())
}
