//! Best-first branch-and-bound over the simplex relaxation.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use crate::lp::solve_with_bounds;
use crate::model::{IpInstance, SolveResult, SolveStats, SolveStatus};
use crate::OptimError;

const INT_TOL: f64 = 1e-9;
const IMPROVE_TOL: f64 = 1e-9;

/// Work allowance for [`solve_ip`]. `Nodes` counts LP relaxations solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Budget {
    Unlimited,
    Nodes(u64),
    WallClock(Duration),
}

struct Meter {
    budget: Budget,
    start: Instant,
    used: u64,
}

impl Meter {
    fn new(budget: Budget) -> Self {
        Self {
            budget,
            start: Instant::now(),
            used: 0,
        }
    }

    fn try_consume(&mut self) -> bool {
        let ok = match self.budget {
            Budget::Unlimited => true,
            Budget::Nodes(n) => self.used < n,
            Budget::WallClock(d) => self.start.elapsed() < d,
        };
        if ok {
            self.used += 1;
        }
        ok
    }
}

struct Node {
    bound: f64,
    seq: u64,
    bounds: Vec<(f64, f64)>,
    values: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap: the smallest bound, then the oldest node, pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

fn most_fractional(inst: &IpInstance, values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, v) in inst.vars.iter().enumerate() {
        if !v.integer {
            continue;
        }
        let x = values[j];
        let frac = (x - x.floor()).min(x.ceil() - x);
        if frac > INT_TOL && best.is_none_or(|(_, f)| frac > f + 1e-12) {
            best = Some((j, frac));
        }
    }
    best.map(|(j, _)| j)
}

fn rounded(inst: &IpInstance, values: &[f64]) -> Vec<f64> {
    inst.vars
        .iter()
        .zip(values)
        .map(|(v, &x)| if v.integer { x.round() } else { x })
        .collect()
}

/// Solves `inst` to integral optimality, or returns the best incumbent when
/// `budget` runs out first.
///
/// A feasible `warm_start` becomes the initial incumbent, so the returned
/// objective is never worse than it. Branching picks the most fractional
/// variable, lowest index on ties; open nodes are explored best-bound first
/// with creation order breaking ties.
pub fn solve_ip(
    inst: &IpInstance,
    warm_start: Option<&[f64]>,
    budget: Budget,
) -> Result<SolveResult, OptimError> {
    inst.validate()?;
    let mut stats = SolveStats::default();
    let mut incumbent: Option<(Vec<f64>, f64)> = None;
    if let Some(ws) = warm_start {
        let ws = rounded(inst, ws);
        if inst.is_feasible(&ws, INT_TOL) {
            let obj = inst.objective_value(&ws);
            incumbent = Some((ws, obj));
        }
    }

    let mut meter = Meter::new(budget);
    let root_bounds: Vec<(f64, f64)> = inst
        .vars
        .iter()
        .map(|v| {
            if v.integer {
                (v.lower.ceil(), v.upper.floor())
            } else {
                (v.lower, v.upper)
            }
        })
        .collect();

    let finish = |incumbent: Option<(Vec<f64>, f64)>, status: SolveStatus, stats: SolveStats| {
        match incumbent {
            Some((values, objective)) => SolveResult {
                values,
                objective,
                status,
                stats,
            },
            None => SolveResult::without_solution(
                if status == SolveStatus::IncumbentBudgetExhausted {
                    SolveStatus::NoIncumbent
                } else {
                    SolveStatus::Infeasible
                },
                stats,
            ),
        }
    };

    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;

    // Solves one relaxation; returns false when the budget is spent.
    let mut expand = |bounds: Vec<(f64, f64)>,
                      heap: &mut BinaryHeap<Node>,
                      incumbent: &mut Option<(Vec<f64>, f64)>,
                      stats: &mut SolveStats|
     -> Result<Option<SolveStatus>, OptimError> {
        if !meter.try_consume() {
            return Ok(None);
        }
        stats.nodes += 1;
        let lp = solve_with_bounds(inst, &bounds)?;
        stats.pivots += lp.stats.pivots;
        match lp.status {
            SolveStatus::Optimal => {}
            SolveStatus::Unbounded => return Ok(Some(SolveStatus::Unbounded)),
            _ => return Ok(Some(SolveStatus::Infeasible)),
        }
        if let Some((_, best)) = incumbent {
            if lp.objective >= *best - IMPROVE_TOL {
                return Ok(Some(SolveStatus::Optimal));
            }
        }
        if most_fractional(inst, &lp.values).is_none() {
            let values = rounded(inst, &lp.values);
            let obj = inst.objective_value(&values);
            *incumbent = Some((values, obj));
        } else {
            heap.push(Node {
                bound: lp.objective,
                seq,
                bounds,
                values: lp.values,
            });
            seq += 1;
        }
        Ok(Some(SolveStatus::Optimal))
    };

    match expand(root_bounds, &mut heap, &mut incumbent, &mut stats)? {
        None => return Ok(finish(incumbent, SolveStatus::IncumbentBudgetExhausted, stats)),
        Some(SolveStatus::Unbounded) => {
            return Ok(SolveResult::without_solution(SolveStatus::Unbounded, stats))
        }
        Some(_) => {}
    }

    while let Some(node) = heap.pop() {
        if let Some((_, best)) = &incumbent {
            if node.bound >= *best - IMPROVE_TOL {
                break;
            }
        }
        let j = most_fractional(inst, &node.values).expect("open nodes are fractional");
        let x = node.values[j];
        let mut down = node.bounds.clone();
        down[j].1 = x.floor();
        let mut up = node.bounds;
        up[j].0 = x.ceil();
        for child in [down, up] {
            if expand(child, &mut heap, &mut incumbent, &mut stats)?.is_none() {
                return Ok(finish(incumbent, SolveStatus::IncumbentBudgetExhausted, stats));
            }
        }
    }
    Ok(finish(incumbent, SolveStatus::Optimal, stats))
}
