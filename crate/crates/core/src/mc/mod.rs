//! Exact samplers: importance sampling (plain and randomized QMC), random-walk
//! Metropolis, probit Gibbs sampling and Hamiltonian Monte Carlo.

mod gibbs;
mod hmc;
mod importance;
pub mod io;
mod rwmh;
mod sobol;
mod sobol_table;
mod trace;
mod weighted;

pub use gibbs::{gibbs_probit, sample_truncated_normal, GibbsOptions, GibbsSampler, GibbsState};
pub use hmc::{hmc, leapfrog, HmcOptions, PhasePoint};
pub use importance::{gaussian_points, importance_sample, importance_weights, BLOCK};
pub use rwmh::{rwmh, RwmhOptions};
pub use sobol::{owen_scramble, rqmc_importance_sample, rqmc_points, scrambled_sobol, RqmcResult, Sobol};
pub use sobol_table::MAX_SOBOL_DIM;
pub use trace::{batch_means_se, ChainTrace, BATCHES};
pub use weighted::WeightedSample;
