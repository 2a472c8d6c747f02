//! Exact expectations of the estimators on the noiseless quadratic
//! `||p - 1/n||^2`, computed from the analytic mixture moments, against the
//! directional gradient `2p - 2||p||^2 1`.
//!
//! Estimates are compared after removing their ones-vector component. The
//! mixture estimators come out exact to rounding at every `c` (on a quadratic
//! their `c` term has no component off the ones vector), while the standard
//! finite difference has a bias of first order in `c`.
//!
//! Usage: `cargo run --example bias_orders`

use dirmix::estimators::{quadratic_expected_estimate, quadratic_expected_fd, EstimatorKind, EstimatorSpec};
use dirmix::mixtures::{MixtureChoice, Perturbation};
use dirmix::objectives::quadratic_gradient;
use dirmix::stats::{loglog_fit, remove_translation};

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = vec![0.1, 0.15, 0.2, 0.25, 0.3];
    let n = p.len();
    let grad_rt = remove_translation(&quadratic_gradient(&p), &[n]);
    let grid = [0.2, 0.1, 0.05, 0.025];
    println!("{:<24} {:>10} {:>10} {:>10} {:>10} {:>8}", "estimator", "c=0.2", "0.1", "0.05", "0.025", "slope");
    let cases = [
        (EstimatorKind::Sfe, MixtureChoice::delta_star()),
        (EstimatorKind::Ffe, MixtureChoice::delta_star()),
        (EstimatorKind::Sfe, MixtureChoice::delta_double_star()),
        (EstimatorKind::Ffe, MixtureChoice::delta_double_star()),
        (EstimatorKind::Cfe, MixtureChoice::delta_double_star()),
        (EstimatorKind::FdStandard, MixtureChoice::default()),
    ];
    for (kind, choice) in cases {
        let mut bias = Vec::new();
        for &c in &grid {
            let exact = if kind == EstimatorKind::FdStandard {
                quadratic_expected_fd(&p, c)
            } else {
                let block = EstimatorSpec::new(kind, c, 1, choice).perturbation(&p, &[n])?;
                let mix = &block.blocks()[0];
                quadratic_expected_estimate(kind, mix, mix.gamma(), c)?
            };
            bias.push(norm_diff(&remove_translation(&exact, &[n]), &grad_rt));
        }
        // A slope through rounding noise means nothing.
        let measurable = bias.iter().all(|b| *b > 1e-12);
        let slope = match loglog_fit(&grid, &bias) {
            Some((s, _)) if measurable => format!("{s:.2}"),
            _ => "exact".to_string(),
        };
        let label = match kind {
            EstimatorKind::FdStandard => kind.label().to_string(),
            _ => format!("{}/{}", kind.label(), choice.kind().label()),
        };
        print!("{label:<24}");
        for b in &bias {
            print!(" {b:>10.3e}");
        }
        println!(" {slope:>8}");
    }
    Ok(())
}
