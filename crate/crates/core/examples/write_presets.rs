//! Writes the bundled experiment presets as JSON configuration files.
//!
//! Usage: `cargo run --example write_presets -- <dir>` (default `configs`).

use dirmix::bench::ExperimentConfig;

fn main() -> std::io::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "configs".into());
    std::fs::create_dir_all(&dir)?;
    let presets = [
        ("variance_bench.json", ExperimentConfig::default()),
        ("rosenbrock_mdsa.json", ExperimentConfig::rosenbrock_mdsa()),
        ("mg1_fwsa.json", ExperimentConfig::mg1_fwsa()),
        ("mg1_mdsa.json", ExperimentConfig::mg1_mdsa()),
    ];
    for (name, cfg) in presets {
        let path = std::path::Path::new(&dir).join(name);
        std::fs::write(&path, cfg.to_json())?;
        println!("{}", path.display());
    }
    Ok(())
}
