//! Plugs user objectives into the estimators: an in-process closure and an
//! external command that reads a point on stdin and prints its value.
//!
//! Usage: `cargo run --example custom_oracle`

use dirmix::estimators::{EstimatorKind, EstimatorSpec};
use dirmix::mixtures::MixtureChoice;
use dirmix::objectives::{FnOracle, OracleKind, OracleSpec, SubprocessOracle};
use dirmix::optimizers::{run_fwsa, OptimizerConfig, ScheduleConfig};
use dirmix::rng::RngStream;
use dirmix::subproblems::UncertaintySet;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 4;
    let p = vec![0.1, 0.2, 0.3, 0.4];
    let spec = EstimatorSpec::new(EstimatorKind::Ffe, 0.05, 20, MixtureChoice::delta_double_star());

    // Negative entropy as a closure.
    let closure = FnOracle::new(OracleSpec::new(OracleKind::Custom, vec![n])?, |x: &[f64], _: &mut _| {
        x.iter().filter(|v| **v > 0.0).map(|v| v * v.ln()).sum()
    });
    let est = spec.estimate(&closure, &p, &RngStream::new(1))?;
    println!("closure estimate    {:.4?} ({} calls)", est.value, est.budget_used);

    // The same objective evaluated by an external process, one point per line.
    let command = "awk '{s=0; for(i=1;i<=NF;i++) if($i>0) s+=$i*log($i); printf \"%.17g\\n\", s}'";
    let external = SubprocessOracle::new(command, vec![n], false)?;
    let est = spec.estimate(&external, &p, &RngStream::new(1))?;
    println!("subprocess estimate {:.4?} ({} calls)", est.value, est.budget_used);

    // A short Frank-Wolfe run on the closure objective.
    let cfg = OptimizerConfig {
        schedule: ScheduleConfig { a: 0.25, b: 0.3, theta_exp: 0.125, beta_exp: 1.0, r0: 4.0, max_iter: 30, ..Default::default() },
        probes: 1,
        ..Default::default()
    };
    let trace = run_fwsa(&closure, &[UncertaintySet::simplex(n)?], &cfg, &p, &RngStream::new(2))?;
    println!("fwsa: {:.4?} -> {:.4?}", p, trace.final_p);
    Ok(())
}
