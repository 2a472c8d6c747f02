//! Builds both Dirichlet mixtures at a random interior point and prints the
//! residuals of the three moment conditions.
//!
//! Usage: `cargo run --example moments -- [n] [seed]`

use dirmix::mixtures::{build_delta_dstar, build_delta_star, check_theta_monotone, verify_moments, Perturbation};
use dirmix::rng::RngStream;
use dirmix::simplex::{sample_dirichlet, DirichletParam};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(Ok(10), |s| s.parse())?;
    let seed: u64 = args.next().map_or(Ok(1), |s| s.parse())?;
    let p = sample_dirichlet(&DirichletParam::symmetric(n, 10.0)?, &mut RngStream::new(seed).rng());
    println!("base point (n = {n}, min entry {:.4})", p.min_entry());

    let star = build_delta_star(&p, 2.0)?;
    let r = verify_moments(&star);
    println!(
        "delta*  : {:>3} components, gamma {:>10.3}, mc1 {:.1e}, mc2 {:.1e}, mc3 spread {:.1e}, theta monotone {}",
        star.components().len(),
        star.gamma(),
        r.mc1_residual,
        r.mc2_residual,
        r.mc3_spread,
        check_theta_monotone(&star)?
    );

    let dstar = build_delta_dstar(&p, -1.0)?;
    let r = verify_moments(&dstar);
    println!(
        "delta** : {:>3} components, gamma {:>10.3}, mc1 {:.1e}, mc2 {:.1e}, mc3 spread {:.1e}",
        dstar.components().len(),
        dstar.gamma(),
        r.mc1_residual,
        r.mc2_residual,
        r.mc3_spread
    );
    Ok(())
}
