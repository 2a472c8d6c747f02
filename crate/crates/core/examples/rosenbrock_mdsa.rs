//! Mirror-descent stochastic approximation on the simplex Rosenbrock function
//! over a KL ball (n = 40, 12 trials), using the bundled preset.
//!
//! Usage: `cargo run --release --example rosenbrock_mdsa`

use dirmix::bench::{optimize_run, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig::rosenbrock_mdsa();
    let runs = optimize_run(&cfg).map_err(|e| format!("{e:?}"))?;
    for (t, run) in runs.iter().enumerate() {
        let trace = run.as_ref().map_err(|e| e.source.to_string())?;
        println!(
            "trial {t:>2}: objective {:.4} -> {:.4}, {} oracle calls",
            trace.initial_objective().unwrap_or(f64::NAN),
            trace.final_objective.unwrap_or(f64::NAN),
            trace.oracle_calls()
        );
    }
    Ok(())
}
