//! Frank-Wolfe stochastic approximation on the M/G/1 waiting-time objective
//! over a first/second moment box; prints the mean Frank-Wolfe gap.
//!
//! Usage: `cargo run --release --example mg1_fwsa -- [horizon]`

use dirmix::bench::{optimize_run, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = ExperimentConfig::mg1_fwsa();
    if let Some(h) = std::env::args().nth(1) {
        cfg.objective.mg1.horizon = h.parse()?;
    }
    let runs = optimize_run(&cfg).map_err(|e| format!("{e:?}"))?;
    let traces: Vec<_> = runs.into_iter().map(|r| r.map_err(|e| e.source)).collect::<Result<_, _>>()?;
    for k in [1, 5, 10, 20, 30, 40, 50] {
        let rows: Vec<_> = traces.iter().filter_map(|t| t.records.iter().find(|r| r.k == k)).collect();
        let gap = rows.iter().map(|r| r.criterion).sum::<f64>() / rows.len() as f64;
        let obj = rows.iter().map(|r| r.objective).sum::<f64>() / rows.len() as f64;
        println!("k = {k:>2}: mean objective {obj:.4}, mean FW gap {gap:.4e}");
    }
    Ok(())
}
