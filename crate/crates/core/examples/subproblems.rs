//! Solves the Frank-Wolfe linear step and the entropic prox step over each
//! kind of uncertainty set and prints the solutions with their KKT residuals.
//!
//! Usage: `cargo run --example subproblems`

use dirmix::simplex::ProbVector;
use dirmix::subproblems::{fw_linear_min_detailed, md_prox_detailed, BoxMomentSet, KlBallSet, ProxConfig, UncertaintySet};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let baseline = ProbVector::new(&[0.2, 0.3, 0.1, 0.4])?;
    let support = [1.0, 2.0, 3.0, 4.0];
    let sets = [
        ("simplex", UncertaintySet::simplex(4)?),
        ("kl ball r=0.1", UncertaintySet::KlBall(KlBallSet::new(baseline.clone(), 0.1)?)),
        ("moment box", UncertaintySet::BoxMoment(BoxMomentSet::relative_moments(&support, &[1, 2], &baseline, 0.9, 1.1)?)),
    ];
    let g = [0.5, -1.0, 0.3, 0.2];
    let cfg = ProxConfig::default();
    for (name, set) in &sets {
        let fw = fw_linear_min_detailed(&g, &baseline, set, &cfg)?;
        let md = md_prox_detailed(&g, &baseline, 3.0, set, &cfg)?;
        println!("{name}");
        println!("  linear step q = {:.4?}  objective {:.4}  kkt {:.1e}", fw.q.as_slice(), fw.objective, fw.kkt_residual);
        println!("  prox step   q = {:.4?}  objective {:.4}  kkt {:.1e}", md.q.as_slice(), md.objective, md.kkt_residual);
    }
    Ok(())
}
