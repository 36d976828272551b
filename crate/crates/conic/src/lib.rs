//! A small conic modeling layer for linear and semidefinite programs over
//! complex Hermitian matrices, with an embedded primal–dual interior-point
//! solver.
//!
//! ```
//! use dynres_conic::{LinExpr, Program};
//!
//! // min t  s.t.  t ≥ 5
//! let mut p = Program::minimize();
//! let t = p.scalar("t");
//! p.add_ge(t.clone() - 5.0);
//! p.set_objective(t);
//! let sol = p.solve().unwrap();
//! assert!((sol.objective - 5.0).abs() < 1e-7);
//! ```
//!
//! Hermitian variables are parametrised by `d²` real numbers and realified
//! only when the program is compiled for the solver:
//!
//! ```
//! use dynres_conic::{LinExpr, Program};
//! use nalgebra::DMatrix;
//! use num_complex::Complex64 as C64;
//!
//! // max ⟨I/2, X⟩  s.t.  X ⪰ 0, Tr X = 1
//! let mut p = Program::maximize();
//! let x = p.psd("X", 2);
//! p.add_eq(x.trace().re() - 1.0);
//! let half = DMatrix::<C64>::identity(2, 2) * C64::new(0.5, 0.0);
//! p.set_objective(x.inner(&half));
//! assert!((p.solve().unwrap().objective - 0.5).abs() < 1e-7);
//! ```

mod expr;
mod ipm;
mod model;
mod support;
pub mod tensor;

pub use expr::{CExpr, LinExpr, MatExpr};
pub use model::{
    hermitian_dual_basis, hermitian_from_vars, Block, Cone, ConstraintId, Dual, Program, Sense, Settings,
    Solution, Status,
};
pub use support::{orthonormal_span, support_from_generators, MembershipTemplate, TemplateBuilder};

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error("malformed program: {0}")]
    Malformed(String),
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SupportError {
    #[error("descriptor declares no strictly feasible point; supply an explicit generating family instead")]
    MissingSlater,
}
