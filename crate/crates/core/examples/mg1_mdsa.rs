//! Mirror-descent stochastic approximation on the M/G/1 waiting-time objective
//! over a KL ball; prints the per-trial prox divergence at the first and last
//! iteration.
//!
//! Usage: `cargo run --release --example mg1_mdsa -- [horizon]`

use dirmix::bench::{optimize_run, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = ExperimentConfig::mg1_mdsa();
    if let Some(h) = std::env::args().nth(1) {
        cfg.objective.mg1.horizon = h.parse()?;
    }
    let last = cfg.optimize.optimizer.schedule.max_iter;
    let runs = optimize_run(&cfg).map_err(|e| format!("{e:?}"))?;
    for (t, run) in runs.into_iter().enumerate() {
        let trace = run.map_err(|e| e.source)?;
        let v = |k| trace.records.iter().find(|r| r.k == k).map_or(f64::NAN, |r| r.criterion);
        println!(
            "trial {t:>2}: V at k=1 {:.3e}, at k={last} {:.3e}, objective {:.4} -> {:.4}",
            v(1),
            v(last),
            trace.initial_objective().unwrap_or(f64::NAN),
            trace.final_objective.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
