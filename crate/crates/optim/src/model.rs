use std::fmt;

use crate::OptimError;

/// Constraint sense of a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Eq => "=",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub integer: bool,
}

impl Variable {
    pub fn continuous(name: impl Into<String>, lower: f64, upper: f64) -> Self {
        Self {
            name: name.into(),
            lower,
            upper,
            integer: false,
        }
    }

    pub fn binary(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            lower: 0.0,
            upper: 1.0,
            integer: true,
        }
    }
}

/// A sparse linear row `sum(coeff * x[var]) <relation> rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// A minimization problem over bounded, optionally integral variables.
///
/// The same carrier is used for pure LPs; [`crate::solve_lp`] ignores the
/// integrality flags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IpInstance {
    pub vars: Vec<Variable>,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

impl IpInstance {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, var: Variable, cost: f64) -> usize {
        self.vars.push(var);
        self.objective.push(cost);
        self.vars.len() - 1
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        coeffs: Vec<(usize, f64)>,
        relation: Relation,
        rhs: f64,
    ) {
        self.constraints.push(Constraint {
            name: name.into(),
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn validate(&self) -> Result<(), OptimError> {
        if self.objective.len() != self.vars.len() {
            return Err(OptimError::Dimension(format!(
                "{} objective coefficients for {} variables",
                self.objective.len(),
                self.vars.len()
            )));
        }
        for (j, v) in self.vars.iter().enumerate() {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
                return Err(OptimError::InvalidBounds(j));
            }
            if v.lower == f64::INFINITY || v.upper == f64::NEG_INFINITY {
                return Err(OptimError::InvalidBounds(j));
            }
            if !self.objective[j].is_finite() {
                return Err(OptimError::NonFinite(format!("objective of {}", v.name)));
            }
        }
        for c in &self.constraints {
            if !c.rhs.is_finite() {
                return Err(OptimError::NonFinite(format!("rhs of {}", c.name)));
            }
            for &(j, a) in &c.coeffs {
                if j >= self.vars.len() {
                    return Err(OptimError::Dimension(format!(
                        "row {} references variable {j}",
                        c.name
                    )));
                }
                if !a.is_finite() {
                    return Err(OptimError::NonFinite(format!("row {}", c.name)));
                }
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective
            .iter()
            .zip(values)
            .map(|(c, x)| c * x)
            .sum()
    }

    /// Largest absolute violation of any bound or row by `values`.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, &x) in self.vars.iter().zip(values) {
            worst = worst.max(v.lower - x).max(x - v.upper);
        }
        for c in &self.constraints {
            let lhs: f64 = c.coeffs.iter().map(|&(j, a)| a * values[j]).sum();
            let viol = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }

    pub fn is_feasible(&self, values: &[f64], tol: f64) -> bool {
        values.len() == self.vars.len()
            && self.max_violation(values) <= tol
            && self
                .vars
                .iter()
                .zip(values)
                .all(|(v, x)| !v.integer || (x - x.round()).abs() <= tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// Branch-and-bound stopped on its budget; `values` hold the best incumbent.
    IncumbentBudgetExhausted,
    /// Budget ran out before any integral solution was known.
    NoIncumbent,
    Infeasible,
    Unbounded,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::IncumbentBudgetExhausted => "incumbent_budget_exhausted",
            SolveStatus::NoIncumbent => "no_incumbent",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
        }
    }

    pub fn has_solution(&self) -> bool {
        matches!(
            self,
            SolveStatus::Optimal | SolveStatus::IncumbentBudgetExhausted
        )
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Work counters, machine independent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolveStats {
    pub pivots: u64,
    pub nodes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub values: Vec<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    pub stats: SolveStats,
}

impl SolveResult {
    pub(crate) fn without_solution(status: SolveStatus, stats: SolveStats) -> Self {
        Self {
            values: Vec::new(),
            objective: f64::INFINITY,
            status,
            stats,
        }
    }
}
