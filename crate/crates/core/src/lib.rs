//! Zeroth-order gradient estimation on probability simplices with Dirichlet-mixture
//! perturbations, and stochastic approximation optimisers over uncertainty sets.

pub mod error;
pub mod bench;
pub mod estimators;
pub mod mixtures;
pub mod objectives;
pub mod optimizers;
pub mod rng;
pub mod simplex;
pub mod stats;
pub mod subproblems;
