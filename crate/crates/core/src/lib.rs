//! Shared-weight quadrature rules: given functions X₁,…,Xₙ on a measured
//! domain, find points and one set of convex weights that reproduce every
//! mean E Xₖ at once. At most n points are needed when the functions are
//! continuous on an interval or box, n + 1 otherwise.
//!
//! ```
//! use meanrule::{synthesize, verify, Expr, MeasureSpec, Problem};
//!
//! # fn main() -> Result<(), Box<dyn std::error::Error>> {
//! let fns = vec![Expr::parse("cos(t)")?, Expr::parse("sin(t)")?];
//! let measure = MeasureSpec::interval(0.0, std::f64::consts::TAU)?;
//! let problem = Problem::new(fns, measure);
//! let rule = synthesize(&problem)?;
//! assert!(rule.len() <= 2);
//! assert!(verify(&rule, &problem)?.passed);
//! # Ok(())
//! # }
//! ```

// `!(x <= y)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod axioms;
pub mod caratheodory;
pub mod cli;
pub mod config;
pub mod domain;
pub mod expr;
pub mod integrate;
pub mod linalg;
pub mod path_reduce;
pub mod pipeline;
mod quad;

pub use caratheodory::{prune, ConvexCombination, PruneError, WeightedAtom};
pub use domain::{DomainPoint, MeasureError, MeasureSpec, PathSpec};
pub use expr::{EvalError, Expr, ParseError};
pub use integrate::{mean_vector, riemann_atoms, IntegrateError, MeanVector};
pub use path_reduce::{reduce, ReduceError, ReduceOutcome};
pub use pipeline::{synthesize, verify, Problem, QuadratureRule};
