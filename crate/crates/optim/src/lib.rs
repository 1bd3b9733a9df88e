//! Small exact solvers used by the ridepooling dispatcher: a dense primal
//! simplex, best-first branch-and-bound for 0/1 and integer programs, and
//! min-cost bipartite matching with a cardinality requirement.

mod ip;
mod lp;
mod lpfmt;
mod matching;
mod model;

pub use ip::{solve_ip, Budget};
pub use lp::solve_lp;
pub use lpfmt::write_lp;
pub use matching::{min_cost_matching, Matching, MatchingInstance};
pub use model::{
    Constraint, IpInstance, Relation, SolveResult, SolveStats, SolveStatus, Variable,
};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum OptimError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid bounds on variable {0}")]
    InvalidBounds(usize),
    #[error("non-finite coefficient in {0}")]
    NonFinite(String),
    #[error("simplex exceeded {0} pivots")]
    PivotLimit(u64),
}
