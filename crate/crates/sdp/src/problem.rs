//! Problem description for small dense semidefinite programs.
//!
//! A problem is stated in inequality form over a decision vector `x`:
//!
//! ```text
//!   minimize    c' x
//!   subject to  F_j(x) = F_{j,0} + sum_i x_i F_{j,i}  >= 0   (PSD, per block j)
//!               g_r(x) = g_{r,0} + sum_i x_i g_{r,i}  >= 0   (scalar inequalities)
//!               h_r(x) = h_{r,0} + sum_i x_i h_{r,i}   = 0   (scalar equalities)
//! ```
//!
//! All coefficient matrices must be symmetric. Coefficients are stored
//! sparsely per variable so wide problems with per-block variable subsets
//! stay cheap to assemble.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// In-place `y += a * x` for dynamically sized matrices.
pub(crate) fn mat_axpy(y: &mut DMatrix<f64>, a: f64, x: &DMatrix<f64>) {
    debug_assert_eq!(y.shape(), x.shape());
    for (yv, xv) in y.iter_mut().zip(x.iter()) {
        *yv += a * xv;
    }
}

/// A single affine-in-variables PSD constraint block.
#[derive(Debug, Clone)]
pub struct PsdBlock {
    /// Side length of the block.
    pub dim: usize,
    /// Constant term `F_{j,0}` (symmetric `dim x dim`).
    pub constant: DMatrix<f64>,
    /// Per-variable coefficient matrices `(i, F_{j,i})`, each symmetric.
    pub coeffs: Vec<(usize, DMatrix<f64>)>,
}

impl PsdBlock {
    pub fn new(constant: DMatrix<f64>) -> Self {
        let dim = constant.nrows();
        Self {
            dim,
            constant,
            coeffs: Vec::new(),
        }
    }

    pub fn push_coeff(&mut self, var: usize, coeff: DMatrix<f64>) {
        self.coeffs.push((var, coeff));
    }

    /// Evaluates `F_j(x)`.
    pub fn eval(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for (i, f) in &self.coeffs {
            mat_axpy(&mut m, x[*i], f);
        }
        m
    }
}

/// A scalar affine constraint `constant + coeffs' x (>= or =) 0`.
#[derive(Debug, Clone)]
pub struct LinearConstraint {
    pub constant: f64,
    pub coeffs: Vec<(usize, f64)>,
}

impl LinearConstraint {
    pub fn new(constant: f64, coeffs: Vec<(usize, f64)>) -> Self {
        Self { constant, coeffs }
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        self.constant + self.coeffs.iter().map(|(i, g)| g * x[*i]).sum::<f64>()
    }
}

/// Full problem statement.
#[derive(Debug, Clone, Default)]
pub struct SdpProblem {
    pub num_vars: usize,
    /// Linear objective `c` (minimized).
    pub objective: Vec<(usize, f64)>,
    pub psd_blocks: Vec<PsdBlock>,
    pub inequalities: Vec<LinearConstraint>,
    pub equalities: Vec<LinearConstraint>,
}

#[derive(Debug, Error)]
pub enum SdpError {
    #[error("variable index {var} out of range (problem has {num_vars} variables)")]
    VarOutOfRange { var: usize, num_vars: usize },
    #[error("PSD block {block}: coefficient matrix is {rows}x{cols}, expected {dim}x{dim}")]
    BlockDimMismatch {
        block: usize,
        rows: usize,
        cols: usize,
        dim: usize,
    },
    #[error("PSD block {block}: matrix for variable {var:?} is not symmetric (max skew {skew:.3e})")]
    NotSymmetric {
        block: usize,
        var: Option<usize>,
        skew: f64,
    },
    #[error("problem has no constraints")]
    NoConstraints,
    #[error("numerical failure in {0}")]
    Numerical(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn sym_skew(m: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for r in 0..m.nrows() {
        for c in (r + 1)..m.ncols() {
            worst = worst.max((m[(r, c)] - m[(c, r)]).abs());
        }
    }
    worst
}

impl SdpProblem {
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            ..Default::default()
        }
    }

    pub fn set_objective_entry(&mut self, var: usize, value: f64) {
        self.objective.push((var, value));
    }

    pub fn objective_vector(&self) -> DVector<f64> {
        let mut c = DVector::zeros(self.num_vars);
        for (i, v) in &self.objective {
            c[*i] += v;
        }
        c
    }

    pub fn objective_value(&self, x: &DVector<f64>) -> f64 {
        self.objective.iter().map(|(i, v)| v * x[*i]).sum()
    }

    /// Checks index ranges, dimensions and symmetry of all data.
    pub fn validate(&self) -> Result<(), SdpError> {
        let nv = self.num_vars;
        let check_var = |var: usize| {
            if var >= nv {
                Err(SdpError::VarOutOfRange { var, num_vars: nv })
            } else {
                Ok(())
            }
        };
        for (i, _) in &self.objective {
            check_var(*i)?;
        }
        for (j, b) in self.psd_blocks.iter().enumerate() {
            if b.constant.nrows() != b.dim || b.constant.ncols() != b.dim {
                return Err(SdpError::BlockDimMismatch {
                    block: j,
                    rows: b.constant.nrows(),
                    cols: b.constant.ncols(),
                    dim: b.dim,
                });
            }
            let skew = sym_skew(&b.constant);
            let scale = b.constant.norm().max(1.0);
            if skew > 1e-9 * scale {
                return Err(SdpError::NotSymmetric {
                    block: j,
                    var: None,
                    skew,
                });
            }
            for (i, f) in &b.coeffs {
                check_var(*i)?;
                if f.nrows() != b.dim || f.ncols() != b.dim {
                    return Err(SdpError::BlockDimMismatch {
                        block: j,
                        rows: f.nrows(),
                        cols: f.ncols(),
                        dim: b.dim,
                    });
                }
                let skew = sym_skew(f);
                if skew > 1e-9 * f.norm().max(1.0) {
                    return Err(SdpError::NotSymmetric {
                        block: j,
                        var: Some(*i),
                        skew,
                    });
                }
            }
        }
        for c in self.inequalities.iter().chain(self.equalities.iter()) {
            for (i, _) in &c.coeffs {
                check_var(*i)?;
            }
        }
        if self.psd_blocks.is_empty() && self.inequalities.is_empty() && self.equalities.is_empty()
        {
            return Err(SdpError::NoConstraints);
        }
        Ok(())
    }
}

/// Termination status of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// Converged to the requested relative gap and feasibility tolerances.
    Optimal,
    /// A certificate of primal infeasibility was found.
    Infeasible,
    /// The objective appears unbounded below over the feasible set.
    Unbounded,
    /// Iteration limit reached before convergence.
    MaxIter,
}

/// Solver output: primal/dual iterates and certificates.
#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SolveStatus,
    /// Primal decision vector.
    pub x: DVector<f64>,
    /// Dual matrices, one per PSD block.
    pub psd_duals: Vec<DMatrix<f64>>,
    /// Dual multipliers for the scalar inequalities.
    pub ineq_duals: DVector<f64>,
    /// Primal objective `c' x`.
    pub objective: f64,
    /// Absolute complementarity gap `sum_j <Z_j, S_j> + z's`.
    pub gap: f64,
    /// Gap divided by `1 + |primal| + |dual|` objective magnitudes.
    pub relative_gap: f64,
    pub iterations: usize,
}

/// Independent feasibility/optimality diagnostics for a candidate solution.
#[derive(Debug, Clone)]
pub struct KktResiduals {
    /// Most negative eigenvalue over all PSD blocks at `x` (>= 0 when feasible).
    pub min_block_eig: f64,
    /// Most negative scalar-inequality value at `x`.
    pub min_inequality: f64,
    /// Largest absolute equality violation at `x`.
    pub max_equality_violation: f64,
    /// Infinity norm of the dual stationarity residual `c - A*(Z) - G'z`.
    pub dual_residual: f64,
    /// Complementarity `sum_j <Z_j, F_j(x)> + z' g(x)`.
    pub complementarity: f64,
    /// Most negative eigenvalue over all dual matrices (>= 0 when dual feasible).
    pub min_dual_eig: f64,
}
