//! Variant × seed comparison runs and their table.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Config, Variant};
use crate::error::Result;
use crate::scenario::generate_scenario;
use crate::sim::{DemandFit, RunOutput, RunReport, Simulation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub method: String,
    pub seed: u64,
    pub comp_time_s: f64,
    pub comp_steps: f64,
    pub service_rate: f64,
    pub waiting_s: f64,
    pub total_delay_s: f64,
}

impl ExperimentRow {
    fn from_report(r: &RunReport) -> Self {
        Self {
            method: r.variant.clone(),
            seed: r.seed,
            comp_time_s: r.mean_epoch_seconds,
            comp_steps: r.mean_epoch_steps,
            service_rate: r.service_rate,
            waiting_s: r.mean_waiting_s,
            total_delay_s: r.mean_total_delay_s,
        }
    }

    fn values(&self) -> [f64; 5] {
        [
            self.comp_time_s,
            self.comp_steps,
            self.service_rate,
            self.waiting_s,
            self.total_delay_s,
        ]
    }
}

/// Mean and standard error over seeds, in row column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: String,
    pub runs: usize,
    pub mean: [f64; 5],
    pub stderr: [f64; 5],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTable {
    pub rows: Vec<ExperimentRow>,
    pub aggregates: Vec<Aggregate>,
}

pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

impl ExperimentTable {
    pub fn from_reports(reports: &[RunReport]) -> Self {
        let rows: Vec<ExperimentRow> = reports.iter().map(ExperimentRow::from_report).collect();
        let mut methods: Vec<String> = Vec::new();
        for r in &rows {
            if !methods.contains(&r.method) {
                methods.push(r.method.clone());
            }
        }
        let aggregates = methods
            .into_iter()
            .map(|m| {
                let mine: Vec<&ExperimentRow> = rows.iter().filter(|r| r.method == m).collect();
                let mut mean = [0.0; 5];
                let mut stderr = [0.0; 5];
                for c in 0..5 {
                    let col: Vec<f64> = mine.iter().map(|r| r.values()[c]).collect();
                    (mean[c], stderr[c]) = mean_stderr(&col);
                }
                Aggregate {
                    runs: mine.len(),
                    method: m,
                    mean,
                    stderr,
                }
            })
            .collect();
        Self { rows, aggregates }
    }

    /// Per-seed difference `b - a` of one column (0..5), as mean and stderr.
    pub fn paired_delta(&self, a: &str, b: &str, column: usize) -> (f64, f64) {
        let diffs: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.method == b)
            .filter_map(|rb| {
                self.rows
                    .iter()
                    .find(|ra| ra.method == a && ra.seed == rb.seed)
                    .map(|ra| rb.values()[column] - ra.values()[column])
            })
            .collect();
        mean_stderr(&diffs)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "method\tseed\tcomp_time_s\tcomp_steps\tservice_rate\twaiting_s\ttotal_delay_s"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{}\t{}\t{:.4}\t{:.1}\t{:.4}\t{:.2}\t{:.2}",
                r.method, r.seed, r.comp_time_s, r.comp_steps, r.service_rate, r.waiting_s, r.total_delay_s
            );
        }
        for a in &self.aggregates {
            let cell = |c: usize, p: usize| format!("{:.p$}±{:.p$}", a.mean[c], a.stderr[c], p = p);
            let _ = writeln!(
                s,
                "{}\tmean(n={})\t{}\t{}\t{}\t{}\t{}",
                a.method,
                a.runs,
                cell(0, 4),
                cell(1, 1),
                cell(2, 4),
                cell(3, 2),
                cell(4, 2)
            );
        }
        s
    }
}

/// Generates one scenario per seed and runs every variant on it.
pub fn run_experiment(cfg: &Config, variants: &[Variant], seeds: &[u64]) -> Result<(ExperimentTable, Vec<RunOutput>)> {
    cfg.validate()?;
    let jobs: Vec<(u64, Variant)> = seeds
        .iter()
        .flat_map(|&s| variants.iter().map(move |&v| (s, v)))
        .collect();
    let per_seed: Vec<Result<Vec<RunOutput>>> = seeds
        .par_iter()
        .map(|&seed| {
            let scenario = generate_scenario(cfg, seed)?;
            let mut sim_cfg = cfg.sim.clone();
            sim_cfg.seed = seed;
            let fit = DemandFit::fit(&scenario.net, &sim_cfg, &scenario.history_origins())?;
            variants
                .iter()
                .map(|&v| {
                    let mut c = sim_cfg.clone();
                    c.variant = v;
                    Simulation::new(&scenario.net, &c, scenario.demand.clone(), Some(&fit))?.run()
                })
                .collect()
        })
        .collect();
    let mut outputs = Vec::with_capacity(jobs.len());
    for r in per_seed {
        outputs.extend(r?);
    }
    // Rows grouped by variant, then seed.
    let mut order: Vec<usize> = (0..outputs.len()).collect();
    order.sort_by_key(|&i| (variants.iter().position(|&v| v == jobs[i].1), jobs[i].0));
    let outputs: Vec<RunOutput> = {
        let mut slots: Vec<Option<RunOutput>> = outputs.into_iter().map(Some).collect();
        order.iter().map(|&i| slots[i].take().expect("each run once")).collect()
    };
    let reports: Vec<RunReport> = outputs.iter().map(|o| o.report.clone()).collect();
    Ok((ExperimentTable::from_reports(&reports), outputs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stderr_of_constant_is_zero() {
        assert_eq!(mean_stderr(&[2.0, 2.0, 2.0]), (2.0, 0.0));
        let (m, se) = mean_stderr(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - 1.0).abs() < 1e-12);
    }
}
