//! Small dense semidefinite-program solver.
//!
//! Targets problems with up to a few hundred variables and many small PSD
//! blocks, the shape produced by epigraph reformulations of trace-of-inverse
//! objectives: one `[[B, E'], [E, J(x)]]` block per sample point plus a
//! handful of scalar inequalities. A dense primal-dual interior-point method
//! with Nesterov-Todd scaling solves these to high accuracy in tens of
//! iterations; no sparsity handling is attempted.
//!
//! ```
//! use nalgebra::DMatrix;
//! use sdp::{solve, PsdBlock, SdpProblem, SolveStatus};
//!
//! // min x subject to [x] >= 0
//! let mut p = SdpProblem::new(1);
//! p.set_objective_entry(0, 1.0);
//! let mut b = PsdBlock::new(DMatrix::zeros(1, 1));
//! b.push_coeff(0, DMatrix::identity(1, 1));
//! p.psd_blocks.push(b);
//! let sol = solve(&p, 1e-8, 100).unwrap();
//! assert_eq!(sol.status, SolveStatus::Optimal);
//! assert!(sol.x[0].abs() < 1e-6);
//! ```

mod io;
mod problem;
mod solver;

pub use io::{dump, load};
pub use problem::{
    KktResiduals, LinearConstraint, PsdBlock, SdpError, SdpProblem, SdpSolution, SolveStatus,
};
pub use solver::{kkt_residuals, solve};

/// Default relative-gap tolerance used by callers that do not tune it.
pub const DEFAULT_TOL: f64 = 1e-7;
/// Default iteration cap.
pub const DEFAULT_MAX_ITER: usize = 200;
