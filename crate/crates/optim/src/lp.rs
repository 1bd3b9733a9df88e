//! Dense two-phase primal simplex.
//!
//! Variables are mapped to non-negative standard-form columns (shifted by a
//! finite lower bound, mirrored against a finite upper bound, or split when
//! free). Finite upper bounds become explicit rows unless a row with
//! non-negative coefficients already implies them. Pricing is Dantzig's rule
//! with lowest-index ties; after a run of degenerate pivots the phase falls
//! back to Bland's rule for the rest of that phase, which rules out cycling.

use crate::model::{IpInstance, Relation, SolveResult, SolveStats, SolveStatus};
use crate::OptimError;

const EPS: f64 = 1e-9;
const RATIO_TIE: f64 = 1e-12;
const DEGENERATE_RUN: u32 = 16;
const MAX_PIVOTS: u64 = 500_000;

#[derive(Debug, Clone, Copy)]
enum ColMap {
    Fixed(f64),
    Shifted { col: usize, lower: f64 },
    Mirrored { col: usize, upper: f64 },
    Free { pos: usize, neg: usize },
}

struct StdRow {
    coeffs: Vec<(usize, f64)>,
    relation: Relation,
    rhs: f64,
}

/// Overrides applied on top of the instance's own bounds; used by branching.
pub(crate) type BoundOverride<'a> = &'a [(f64, f64)];

/// Solves the LP relaxation of `inst`, ignoring integrality.
pub fn solve_lp(inst: &IpInstance) -> Result<SolveResult, OptimError> {
    inst.validate()?;
    let bounds: Vec<(f64, f64)> = inst.vars.iter().map(|v| (v.lower, v.upper)).collect();
    solve_with_bounds(inst, &bounds)
}

pub(crate) fn solve_with_bounds(
    inst: &IpInstance,
    bounds: BoundOverride<'_>,
) -> Result<SolveResult, OptimError> {
    let mut stats = SolveStats::default();
    if bounds.iter().any(|&(l, u)| l > u + EPS) {
        return Ok(SolveResult::without_solution(SolveStatus::Infeasible, stats));
    }

    let mut maps = Vec::with_capacity(bounds.len());
    let mut ncols = 0usize;
    let mut col_upper: Vec<f64> = Vec::new();
    for &(l, u) in bounds {
        let m = if l.is_finite() && u.is_finite() && (u - l).abs() <= EPS {
            ColMap::Fixed(l)
        } else if l.is_finite() {
            col_upper.push(u - l);
            ncols += 1;
            ColMap::Shifted {
                col: ncols - 1,
                lower: l,
            }
        } else if u.is_finite() {
            col_upper.push(f64::INFINITY);
            ncols += 1;
            ColMap::Mirrored {
                col: ncols - 1,
                upper: u,
            }
        } else {
            col_upper.push(f64::INFINITY);
            col_upper.push(f64::INFINITY);
            ncols += 2;
            ColMap::Free {
                pos: ncols - 2,
                neg: ncols - 1,
            }
        };
        maps.push(m);
    }

    let mut rows: Vec<StdRow> = Vec::with_capacity(inst.constraints.len());
    for c in &inst.constraints {
        let mut rhs = c.rhs;
        let mut dense: Vec<(usize, f64)> = Vec::with_capacity(c.coeffs.len());
        for &(j, a) in &c.coeffs {
            if a == 0.0 {
                continue;
            }
            match maps[j] {
                ColMap::Fixed(v) => rhs -= a * v,
                ColMap::Shifted { col, lower } => {
                    rhs -= a * lower;
                    dense.push((col, a));
                }
                ColMap::Mirrored { col, upper } => {
                    rhs -= a * upper;
                    dense.push((col, -a));
                }
                ColMap::Free { pos, neg } => {
                    dense.push((pos, a));
                    dense.push((neg, -a));
                }
            }
        }
        dense.sort_by_key(|&(c, _)| c);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(dense.len());
        for (col, a) in dense {
            match merged.last_mut() {
                Some((last, acc)) if *last == col => *acc += a,
                _ => merged.push((col, a)),
            }
        }
        merged.retain(|&(_, a)| a != 0.0);
        if merged.is_empty() {
            let ok = match c.relation {
                Relation::Le => rhs >= -EPS,
                Relation::Ge => rhs <= EPS,
                Relation::Eq => rhs.abs() <= EPS,
            };
            if !ok {
                return Ok(SolveResult::without_solution(SolveStatus::Infeasible, stats));
            }
            continue;
        }
        rows.push(StdRow {
            coeffs: merged,
            relation: c.relation,
            rhs,
        });
    }

    // Upper bounds implied by a <=/= row with non-negative coefficients need no row.
    let mut implied = vec![f64::INFINITY; ncols];
    for r in &rows {
        if r.relation != Relation::Ge && r.coeffs.iter().all(|&(_, a)| a >= 0.0) {
            for &(col, a) in &r.coeffs {
                let ub = r.rhs / a;
                if ub < implied[col] {
                    implied[col] = ub;
                }
            }
        }
    }
    for (col, &u) in col_upper.iter().enumerate() {
        if u.is_finite() && implied[col] > u + RATIO_TIE {
            rows.push(StdRow {
                coeffs: vec![(col, 1.0)],
                relation: Relation::Le,
                rhs: u,
            });
        }
    }

    let mut cost = vec![0.0; ncols];
    for (j, &c) in inst.objective.iter().enumerate() {
        match maps[j] {
            ColMap::Fixed(_) => {}
            ColMap::Shifted { col, .. } => cost[col] += c,
            ColMap::Mirrored { col, .. } => cost[col] -= c,
            ColMap::Free { pos, neg } => {
                cost[pos] += c;
                cost[neg] -= c;
            }
        }
    }

    let mut tab = Tableau::build(ncols, &rows);
    let outcome = tab.solve(&cost, &mut stats)?;
    if outcome != SolveStatus::Optimal {
        return Ok(SolveResult::without_solution(outcome, stats));
    }
    let cols = tab.column_values();
    let values: Vec<f64> = maps
        .iter()
        .map(|m| match *m {
            ColMap::Fixed(v) => v,
            ColMap::Shifted { col, lower } => lower + cols[col],
            ColMap::Mirrored { col, upper } => upper - cols[col],
            ColMap::Free { pos, neg } => cols[pos] - cols[neg],
        })
        .collect();
    let objective = inst.objective_value(&values);
    Ok(SolveResult {
        values,
        objective,
        status: SolveStatus::Optimal,
        stats,
    })
}

struct Tableau {
    /// Row-major `m x (width + 1)`; the last entry of each row is the rhs.
    a: Vec<f64>,
    m: usize,
    width: usize,
    n_struct: usize,
    first_art: usize,
    basis: Vec<usize>,
    active: Vec<bool>,
}

impl Tableau {
    fn build(n_struct: usize, rows: &[StdRow]) -> Self {
        let m = rows.len();
        let n_slack = rows.iter().filter(|r| r.relation != Relation::Eq).count();
        let n_art = rows
            .iter()
            .filter(|r| {
                let flip = r.rhs < 0.0;
                !matches!((r.relation, flip), (Relation::Le, false) | (Relation::Ge, true))
            })
            .count();
        let first_art = n_struct + n_slack;
        let width = first_art + n_art;
        let stride = width + 1;
        let mut a = vec![0.0; m * stride];
        let mut basis = vec![0; m];
        let mut next_slack = n_struct;
        let mut next_art = first_art;
        for (i, r) in rows.iter().enumerate() {
            let flip = r.rhs < 0.0;
            let sign = if flip { -1.0 } else { 1.0 };
            let row = &mut a[i * stride..(i + 1) * stride];
            for &(col, v) in &r.coeffs {
                row[col] = sign * v;
            }
            row[width] = sign * r.rhs;
            let relation = match (r.relation, flip) {
                (Relation::Le, true) => Relation::Ge,
                (Relation::Ge, true) => Relation::Le,
                (rel, _) => rel,
            };
            match relation {
                Relation::Le => {
                    row[next_slack] = 1.0;
                    basis[i] = next_slack;
                    next_slack += 1;
                }
                Relation::Ge => {
                    row[next_slack] = -1.0;
                    next_slack += 1;
                    row[next_art] = 1.0;
                    basis[i] = next_art;
                    next_art += 1;
                }
                Relation::Eq => {
                    row[next_art] = 1.0;
                    basis[i] = next_art;
                    next_art += 1;
                }
            }
        }
        Self {
            a,
            m,
            width,
            n_struct,
            first_art,
            basis,
            active: vec![true; m],
        }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * (self.width + 1) + j]
    }

    #[inline]
    fn rhs(&self, i: usize) -> f64 {
        self.a[i * (self.width + 1) + self.width]
    }

    fn pivot(&mut self, r: usize, e: usize, obj: &mut [f64]) {
        let stride = self.width + 1;
        let p = self.at(r, e);
        let pivot_row = r * stride;
        for k in 0..stride {
            self.a[pivot_row + k] /= p;
        }
        let nz: Vec<usize> = (0..stride)
            .filter(|&k| self.a[pivot_row + k] != 0.0)
            .collect();
        for i in 0..self.m {
            if i == r || !self.active[i] {
                continue;
            }
            let f = self.a[i * stride + e];
            if f == 0.0 {
                continue;
            }
            for &k in &nz {
                let v = self.a[pivot_row + k];
                self.a[i * stride + k] -= f * v;
            }
            self.a[i * stride + e] = 0.0;
        }
        let f = obj[e];
        if f != 0.0 {
            for &k in &nz {
                obj[k] -= f * self.a[pivot_row + k];
            }
            obj[e] = 0.0;
        }
        self.basis[r] = e;
    }

    /// Runs pivots on the reduced-cost row `obj` (length `width + 1`, last
    /// entry is minus the objective) over columns `< allowed`.
    fn iterate(
        &mut self,
        obj: &mut [f64],
        allowed: usize,
        stats: &mut SolveStats,
    ) -> Result<SolveStatus, OptimError> {
        let mut bland = false;
        let mut degenerate = 0u32;
        loop {
            let entering = if bland {
                (0..allowed).find(|&j| obj[j] < -EPS)
            } else {
                let mut best: Option<(usize, f64)> = None;
                for (j, &d) in obj.iter().enumerate().take(allowed) {
                    if d < -EPS && best.is_none_or(|(_, b)| d < b) {
                        best = Some((j, d));
                    }
                }
                best.map(|(j, _)| j)
            };
            let Some(e) = entering else {
                return Ok(SolveStatus::Optimal);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                if !self.active[i] {
                    continue;
                }
                let aie = self.at(i, e);
                if aie <= EPS {
                    continue;
                }
                let ratio = self.rhs(i).max(0.0) / aie;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((bi, br)) => {
                        if ratio < br - RATIO_TIE
                            || (ratio <= br + RATIO_TIE && self.basis[i] < self.basis[bi])
                        {
                            Some((i, ratio))
                        } else {
                            Some((bi, br))
                        }
                    }
                };
            }
            let Some((r, ratio)) = leave else {
                return Ok(SolveStatus::Unbounded);
            };
            if ratio <= EPS {
                degenerate += 1;
                if degenerate > DEGENERATE_RUN {
                    bland = true;
                }
            } else {
                degenerate = 0;
            }
            self.pivot(r, e, obj);
            stats.pivots += 1;
            if stats.pivots > MAX_PIVOTS {
                return Err(OptimError::PivotLimit(MAX_PIVOTS));
            }
        }
    }

    fn solve(&mut self, cost: &[f64], stats: &mut SolveStats) -> Result<SolveStatus, OptimError> {
        let stride = self.width + 1;
        if self.first_art < self.width {
            let mut obj = vec![0.0; stride];
            for j in self.first_art..self.width {
                obj[j] = 1.0;
            }
            for i in 0..self.m {
                if self.basis[i] >= self.first_art {
                    for k in 0..stride {
                        obj[k] -= self.at(i, k);
                    }
                }
            }
            let status = self.iterate(&mut obj, self.width, stats)?;
            debug_assert_eq!(status, SolveStatus::Optimal);
            let infeasibility = -obj[self.width];
            if infeasibility > 1e-7 {
                return Ok(SolveStatus::Infeasible);
            }
            // Drive remaining artificials out of the basis or drop their rows.
            for i in 0..self.m {
                if self.basis[i] < self.first_art {
                    continue;
                }
                match (0..self.first_art).find(|&j| self.at(i, j).abs() > EPS) {
                    Some(j) => {
                        self.pivot(i, j, &mut obj);
                        stats.pivots += 1;
                    }
                    None => self.active[i] = false,
                }
            }
        }

        let mut obj = vec![0.0; stride];
        obj[..self.n_struct].copy_from_slice(cost);
        for i in 0..self.m {
            if !self.active[i] {
                continue;
            }
            let cb = if self.basis[i] < self.n_struct {
                cost[self.basis[i]]
            } else {
                0.0
            };
            if cb != 0.0 {
                for k in 0..stride {
                    obj[k] -= cb * self.at(i, k);
                }
            }
        }
        self.iterate(&mut obj, self.first_art, stats)
    }

    fn column_values(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.n_struct];
        for i in 0..self.m {
            if self.active[i] && self.basis[i] < self.n_struct {
                x[self.basis[i]] = self.rhs(i);
            }
        }
        x
    }
}
