//! Fixtures shared by the benchmarks.

use accelpd_core::problems;
use accelpd_core::{ProblemInstance, Result, SolverState, Vector};

pub const SIZES: [usize; 3] = [16, 64, 256];

/// Regime S instance with `m = n/2` dual rows.
pub fn reg_s(n: usize) -> Result<ProblemInstance> {
    problems::gen_quadratic_reg_s(n, n / 2, 0.0, 100.0, n as u64)
}

pub fn lasso(n: usize) -> Result<ProblemInstance> {
    problems::gen_lasso_like(n, n, 0.1, n as u64)
}

/// A nonzero starting state so prox and gradient work is not trivial.
pub fn start(p: &ProblemInstance) -> SolverState {
    let x = Vector::from_fn(p.dim(), |i, _| (i as f64 * 0.37).sin());
    let u = Vector::from_fn(p.k.rows(), |i, _| (i as f64 * 0.11).cos());
    SolverState::initial(x, u, 1.0)
}
