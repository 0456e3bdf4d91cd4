//! Manufactured test cases, error norms and convergence studies.

pub mod cases;
mod emit;
mod study;

pub use cases::{find_case, registry, CaseKind, TestCase};
pub use emit::{parse_csv, to_csv, to_table, write_csv, CSV_HEADER};
pub use study::{
    fitted_rate, linear_errors, nonlinear_errors, run_family, ConvergenceReport, Errors, Init, Row,
    RunOptions, StudyError, COLUMNS,
};

/// Default refinement levels.
pub const DEFAULT_LEVELS: [usize; 5] = [4, 8, 16, 32, 64];
