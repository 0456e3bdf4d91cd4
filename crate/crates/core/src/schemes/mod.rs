//! Linear diffusion and mass-lumped Stefan / porous-medium schemes.

mod linear;
mod nonlinear;
pub mod sparse;

use thiserror::Error;

use crate::quadrature::QuadratureError;
use crate::space::SpaceError;

pub use linear::{
    assemble_linear, solve_condensed, solve_spd, LinearProblem, ScalarFn, SparseSystem, TensorFn,
    VectorFn,
};
pub use nonlinear::{
    carrier_for, newton_solve, Carrier, NewtonConfig, NewtonSolution, NonlinearProblem,
    NonlinearScheme, SolveReport, Zeta,
};
pub use sparse::{static_condense, CellBlock, Condensed, SolveMethod, SparseMatrix};

#[derive(Debug, Error)]
pub enum SchemeError {
    #[error("cell {cell}: local matrix asymmetry {asymmetry:e}")]
    NonSymmetric { cell: usize, asymmetry: f64 },
    #[error("cell {0}: diffusion tensor outside its declared eigenvalue bounds")]
    InvalidDiffusion(usize),
    #[error("cell {0}: singular cell block in static condensation")]
    SingularCellBlock(usize),
    #[error("solver breakdown: {0}")]
    SolverBreakdown(String),
    #[error("Jacobian row {0} has no positive diagonal")]
    ConventionError(usize),
    #[error("Newton did not converge after {} iterations (residual {:e})", .0.iterations, .0.final_residual)]
    NewtonDiverged(SolveReport),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}
