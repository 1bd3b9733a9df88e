use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ridepool::config::{Config, Variant};
use ridepool::experiment::run_experiment;
use ridepool::oracle;
use ridepool::scenario::{generate_scenario, Scenario};
use ridepool::sim::{DemandFit, Simulation};
use ridepool::{Error, Result};

#[derive(Parser)]
#[command(name = "ridepool", version, about = "Seeded ridepooling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set fleet_size=60`; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<Config> {
        let mut cfg = match &self.config {
            Some(p) => Config::from_file(p)?,
            None => Config::default(),
        };
        cfg.apply_overrides(&self.overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic grid, a demand day and history days
    Generate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Scenario seed; defaults to the config seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit the per-cluster demand table from a scenario's history days
    FitDemand {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate one variant on a scenario directory
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        scenario: PathBuf,
        /// Demand table from `fit-demand`; fitted from history when absent
        #[arg(long)]
        demand_model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write every epoch's assignment program in LP text form
        #[arg(long)]
        dump_lp: Option<PathBuf>,
    },
    /// Run variants over seeds on generated scenarios and tabulate
    Compare {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_value = "original,speedup,speedup_proactive")]
        variants: Vec<String>,
        /// Seeds as a list (`1,2,5`) or an inclusive range (`1-10`)
        #[arg(long, default_value = "1-5")]
        seeds: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the brute-force verification suites
    Oracle {
        #[arg(long, default_value = "all")]
        suite: String,
        /// Cases per suite; each suite has its own default
        #[arg(long)]
        cases: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("bad seed list {s:?}"));
    if let Some((a, b)) = s.split_once('-') {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect()
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn mkdir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { cfg, out, seed } => {
            let mut cfg = cfg.load()?;
            if let Some(s) = seed {
                cfg.sim.seed = s;
            }
            let sc = generate_scenario(&cfg, cfg.sim.seed)?;
            sc.write(&out)?;
            write(&out.join("config.txt"), &cfg.to_text())?;
            println!(
                "wrote {} nodes, {} edges, {} requests, {} history days to {}",
                sc.net.num_nodes(),
                sc.net.num_edges(),
                sc.demand.len(),
                sc.history.len(),
                out.display()
            );
        }
        Command::FitDemand { cfg, scenario, out } => {
            let cfg = cfg.load()?;
            let sc = Scenario::load(&scenario)?;
            let fit = DemandFit::fit(&sc.net, &cfg.sim, &sc.history_origins())?;
            fit.model.save(&out)?;
            println!(
                "fitted {} clusters over {} days into {}",
                fit.clusters.k(),
                sc.history.len(),
                out.display()
            );
        }
        Command::Run {
            cfg,
            scenario,
            demand_model,
            out,
            dump_lp,
        } => {
            let cfg = cfg.load()?;
            let sc = Scenario::load(&scenario)?;
            let fit = match demand_model {
                Some(p) => Some(DemandFit::load(&sc.net, &cfg.sim, &p)?),
                None if cfg.sim.rebalancer_name() == "proactive" => {
                    Some(DemandFit::fit(&sc.net, &cfg.sim, &sc.history_origins())?)
                }
                None => None,
            };
            let mut sim = Simulation::new(&sc.net, &cfg.sim, sc.demand.clone(), fit.as_ref())?;
            if let Some(dir) = &dump_lp {
                sim.dump_lp_to(dir)?;
            }
            let output = sim.run()?;
            output.write(&out)?;
            print!("{}", output.report.summary());
        }
        Command::Compare {
            cfg,
            variants,
            seeds,
            out,
        } => {
            let cfg = cfg.load()?;
            let variants = variants
                .iter()
                .map(|v| v.parse())
                .collect::<Result<Vec<Variant>>>()?;
            let seeds = parse_seeds(&seeds)?;
            let (table, outputs) = run_experiment(&cfg, &variants, &seeds)?;
            mkdir(&out)?;
            for o in &outputs {
                o.write(&out.join(format!("{}_seed{}", o.report.variant, o.report.seed)))?;
            }
            write(&out.join("table.tsv"), &table.to_text())?;
            write(&out.join("table.json"), &serde_json::to_string_pretty(&table)?)?;
            print!("{}", table.to_text());
        }
        Command::Oracle { suite, cases, seed } => {
            let all = suite == "all";
            let mut failed = false;
            let mut known = all;
            if all || suite == "pdp" {
                known = true;
                let (r, counts, _) = oracle::pdp_suite(cases.unwrap_or(10_000), seed);
                println!("{}", r.line());
                println!("     partial routes pruned/unpruned = {:.4}", counts.ratio());
                failed |= !r.passed();
            }
            if all || suite == "assignment" {
                known = true;
                let r = oracle::assignment_suite(cases.unwrap_or(1000), seed);
                println!("{}", r.line());
                failed |= !r.passed();
            }
            if all || suite == "matching" {
                known = true;
                let r = oracle::matching_suite(cases.unwrap_or(500), seed);
                println!("{}", r.line());
                failed |= !r.passed();
            }
            if all || suite == "marginals" {
                known = true;
                let r = oracle::marginal_suite(cases.unwrap_or(1000), seed);
                println!("{}", r.line());
                failed |= !r.passed();
            }
            if all || suite == "partition" {
                known = true;
                let n = cases.unwrap_or(100);
                let p = oracle::partition_suite(n, 40, 40, 4, seed);
                println!(
                    "INFO partition: kmeans <= random in {}/{}; kmeans optimal in {}/{} small instances",
                    p.kmeans_not_worse, p.instances, p.small_optimal, p.small_instances
                );
            }
            if !known {
                return Err(Error::Config(format!(
                    "unknown suite {suite:?}; use all, pdp, assignment, matching, marginals or partition"
                )));
            }
            if failed {
                return Err(Error::Invariant("an oracle suite disagreed".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
