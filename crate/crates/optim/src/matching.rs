//! Minimum-cost bipartite matching of a required cardinality by successive
//! shortest augmenting paths with Johnson potentials.

use crate::model::SolveStatus;

#[derive(Debug, Clone, PartialEq)]
pub struct MatchingInstance {
    /// `costs[row][col]`; `f64::INFINITY` marks a forbidden pair.
    pub costs: Vec<Vec<f64>>,
    pub cardinality: usize,
}

impl MatchingInstance {
    pub fn new(costs: Vec<Vec<f64>>, cardinality: usize) -> Self {
        Self { costs, cardinality }
    }

    pub fn rows(&self) -> usize {
        self.costs.len()
    }

    pub fn cols(&self) -> usize {
        self.costs.first().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// Matched `(row, col)` pairs, sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub cost: f64,
    /// `Optimal` when the requested cardinality was reached. `Infeasible`
    /// otherwise, in which case `pairs` is a minimum-cost matching of the
    /// largest cardinality reachable through finite entries.
    pub status: SolveStatus,
    pub augmentations: u64,
}

/// Each augmentation raises the matching size by one while keeping it
/// minimum-cost for that size, so stopping after `cardinality` steps yields
/// the cheapest matching of exactly that size.
pub fn min_cost_matching(inst: &MatchingInstance) -> Matching {
    let rows = inst.rows();
    let cols = inst.cols();
    assert!(
        inst.costs.iter().all(|r| r.len() == cols),
        "ragged cost matrix"
    );
    assert!(
        inst.costs.iter().flatten().all(|c| !c.is_nan() && *c != f64::NEG_INFINITY),
        "costs must be finite or +inf"
    );
    let target = inst.cardinality.min(rows).min(cols);

    let mut row_match: Vec<Option<usize>> = vec![None; rows];
    let mut col_match: Vec<Option<usize>> = vec![None; cols];
    // Potentials keep reduced costs non-negative; column potentials start at
    // the cheapest finite entry so negative costs are handled too.
    let mut pot_row = vec![0.0; rows];
    let mut pot_col: Vec<f64> = (0..cols)
        .map(|c| {
            (0..rows)
                .map(|r| inst.costs[r][c])
                .fold(f64::INFINITY, f64::min)
                .min(0.0)
        })
        .collect();
    for p in pot_col.iter_mut() {
        if !p.is_finite() {
            *p = 0.0;
        }
    }

    let mut augmentations = 0u64;
    let mut matched = 0usize;
    while matched < target {
        // Dense Dijkstra over columns; rows are entered through their matched column.
        let mut dist_col = vec![f64::INFINITY; cols];
        let mut prev_row = vec![usize::MAX; cols];
        let mut done = vec![false; cols];
        let mut dist_row = vec![f64::INFINITY; rows];
        for r in 0..rows {
            if row_match[r].is_none() {
                dist_row[r] = 0.0;
                relax(inst, r, 0.0, &pot_row, &pot_col, &mut dist_col, &mut prev_row);
            }
        }
        let mut sink: Option<usize> = None;
        loop {
            let mut best: Option<usize> = None;
            for c in 0..cols {
                if !done[c]
                    && dist_col[c].is_finite()
                    && best.is_none_or(|b| dist_col[c] < dist_col[b])
                {
                    best = Some(c);
                }
            }
            let Some(c) = best else { break };
            done[c] = true;
            match col_match[c] {
                None => {
                    sink = Some(c);
                    break;
                }
                Some(r) => {
                    dist_row[r] = dist_col[c];
                    relax(inst, r, dist_col[c], &pot_row, &pot_col, &mut dist_col, &mut prev_row);
                }
            }
        }
        let Some(end) = sink else { break };
        let d_end = dist_col[end];
        for r in 0..rows {
            if dist_row[r] < d_end {
                pot_row[r] += dist_row[r] - d_end;
            }
        }
        for c in 0..cols {
            if done[c] && dist_col[c] < d_end {
                pot_col[c] += dist_col[c] - d_end;
            }
        }
        let mut c = end;
        loop {
            let r = prev_row[c];
            let next = row_match[r];
            row_match[r] = Some(c);
            col_match[c] = Some(r);
            match next {
                Some(c2) => c = c2,
                None => break,
            }
        }
        matched += 1;
        augmentations += 1;
    }

    let pairs: Vec<(usize, usize)> = row_match
        .iter()
        .enumerate()
        .filter_map(|(r, c)| c.map(|c| (r, c)))
        .collect();
    let cost = pairs.iter().map(|&(r, c)| inst.costs[r][c]).sum();
    Matching {
        pairs,
        cost,
        status: if matched == target {
            SolveStatus::Optimal
        } else {
            SolveStatus::Infeasible
        },
        augmentations,
    }
}

fn relax(
    inst: &MatchingInstance,
    r: usize,
    base: f64,
    pot_row: &[f64],
    pot_col: &[f64],
    dist_col: &mut [f64],
    prev_row: &mut [usize],
) {
    for (c, &w) in inst.costs[r].iter().enumerate() {
        if !w.is_finite() {
            continue;
        }
        let reduced = (w + pot_row[r] - pot_col[c]).max(0.0);
        let d = base + reduced;
        if d < dist_col[c] {
            dist_col[c] = d;
            prev_row[c] = r;
        }
    }
}
