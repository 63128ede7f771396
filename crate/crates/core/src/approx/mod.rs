mod gaussian;
mod laplace;
mod newton;

pub use gaussian::GaussianApprox;
pub use laplace::{
    improved_laplace_marginal, improved_laplace_marginal_from, laplace, laplace_em, laplace_em_step, laplace_with,
    GridSpec, LaplaceEmOptions, LaplaceEmResult, MarginalCurve,
};
pub use newton::{newton_map, ols_init, MapResult, NewtonOptions};
