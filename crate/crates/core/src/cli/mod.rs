//! Command-line front end: `solve`, `oracle` and `bench`.

pub mod hint;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::catalog::{load_workload, Catalog, QuerySpec};
use crate::clock::ClockMode;
use crate::error::Error;
use crate::joingraph::dp_optimal_plan;
use crate::orchestrator::{solve_with_sampler, default_sampler, Mode, Solution, SolveConfig, Strategy, TraceRecord};
use crate::sampler::{RemoteSampler, Sampler, SamplerParams};

#[derive(Debug, Parser)]
#[command(name = "joinqubo", version, about = "Join-order optimization via QUBO sampling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one query under a time budget.
    Solve(SolveArgs),
    /// Exact dynamic-programming plan for one query.
    Oracle(OracleArgs),
    /// Solve every query for several seeds and compare against the oracle.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Auto,
    Direct,
    Relax,
    Decompose,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Auto => Mode::Auto,
            ModeArg::Direct => Mode::Force(Strategy::Direct),
            ModeArg::Relax => Mode::Force(Strategy::Relax),
            ModeArg::Decompose => Mode::Force(Strategy::Decompose),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClockArg {
    Simulated,
    Wall,
}

impl From<ClockArg> for ClockMode {
    fn from(c: ClockArg) -> Self {
        match c {
            ClockArg::Simulated => ClockMode::Simulated,
            ClockArg::Wall => ClockMode::Wall,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 5000.0)]
    pub budget_ms: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::Auto)]
    pub mode: ModeArg,
    /// Largest QUBO (in variables) sampled without decomposition.
    #[arg(long, default_value_t = crate::orchestrator::DEFAULT_CAPACITY)]
    pub capacity: usize,
    /// `simulated` charges modeled time and is reproducible; `wall` measures real time.
    #[arg(long, value_enum, default_value_t = ClockArg::Simulated)]
    pub clock: ClockArg,
    #[arg(long, default_value_t = SamplerParams::default().num_reads)]
    pub reads: usize,
    #[arg(long, default_value_t = SamplerParams::default().sweeps)]
    pub sweeps: usize,
    /// Base URL of a remote sampling service (POST {endpoint}/sample).
    #[arg(long)]
    pub endpoint: Option<String>,
}

impl SolverArgs {
    fn config(&self, seed: u64) -> SolveConfig {
        SolveConfig {
            mode: self.mode.into(),
            capacity: self.capacity,
            seed,
            sampler: SamplerParams { num_reads: self.reads, sweeps: self.sweeps, ..SamplerParams::default() },
            clock: self.clock.into(),
            ..SolveConfig::default()
        }
    }

    fn sampler(&self) -> Box<dyn Sampler> {
        match &self.endpoint {
            Some(url) => Box::new(RemoteSampler::new(url.clone())),
            None => Box::new(default_sampler(self.clock.into())),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub workload: PathBuf,
    #[arg(long)]
    pub query: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-iteration timing breakdown.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Print only the hint.
    #[arg(long)]
    pub emit_hint: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub workload: PathBuf,
    #[arg(long)]
    pub query: String,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub workload: PathBuf,
    /// Seeds 0..K per query.
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

/// Writes trace rows with a header; `kl` is empty where not measured.
pub fn write_trace_csv<W: Write>(out: W, records: &[TraceRecord]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if records.is_empty() {
        w.write_record(TRACE_COLUMNS)?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub const TRACE_COLUMNS: [&str; 12] = [
    "iteration",
    "ingress_ms",
    "solve_ms",
    "egress_ms",
    "end_to_end_ms",
    "qpu_programming_ms",
    "qpu_sampling_ms",
    "qpu_access_ms",
    "refine_ms",
    "kl",
    "best_cost",
    "violations",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub query: String,
    pub seed: u64,
    pub strategy: Strategy,
    pub cost: f64,
    pub oracle_cost: Option<f64>,
    pub ratio: Option<f64>,
    pub degraded: bool,
    pub iterations: usize,
    pub time_quantum_ms: f64,
}

fn read_workload(path: &Path) -> anyhow::Result<(Catalog, Vec<QuerySpec>)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    load_workload(&text).with_context(|| format!("loading {}", path.display()))
}

fn find_query<'a>(queries: &'a [QuerySpec], id: &str) -> Result<&'a QuerySpec, Error> {
    queries.iter().find(|q| q.id == id).ok_or_else(|| Error::UnknownQuery(id.to_string()))
}

fn write_csv_file(path: &Path, write: impl FnOnce(fs::File) -> anyhow::Result<()>) -> anyhow::Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write(file)
}

fn report_solution(out: &mut dyn Write, sol: &Solution, hint_only: bool) -> anyhow::Result<()> {
    if hint_only {
        writeln!(out, "{}", sol.hint)?;
        return Ok(());
    }
    writeln!(out, "hint: {}", sol.hint)?;
    writeln!(out, "plan: {}", sol.plan)?;
    writeln!(out, "cost: {}", sol.cost)?;
    writeln!(out, "strategy: {}", sol.strategy)?;
    writeln!(out, "iterations: {}", sol.trace.len())?;
    writeln!(out, "time_quantum_ms: {}", sol.time_quantum_ms())?;
    Ok(())
}

pub fn run(cli: Cli, out: &mut dyn Write) -> anyhow::Result<()> {
    match cli.command {
        Command::Solve(args) => {
            let (catalog, queries) = read_workload(&args.workload)?;
            let query = find_query(&queries, &args.query)?;
            let config = args.solver.config(args.seed);
            let sampler = args.solver.sampler();
            let sol = solve_with_sampler(query, &catalog, args.solver.budget_ms, &config, sampler.as_ref())?;
            if sol.degraded {
                eprintln!("warning: degraded plan (budget of {} ms too small)", args.solver.budget_ms);
            }
            report_solution(out, &sol, args.emit_hint)?;
            if let Some(path) = &args.csv {
                write_csv_file(path, |f| write_trace_csv(f, &sol.trace))?;
            }
        }
        Command::Oracle(args) => {
            let (catalog, queries) = read_workload(&args.workload)?;
            let query = find_query(&queries, &args.query)?;
            let (plan, cost) = dp_optimal_plan(&catalog, query)?;
            writeln!(out, "plan: {plan}")?;
            writeln!(out, "hint: {}", hint::emit_hint(&plan))?;
            writeln!(out, "cost: {cost}")?;
        }
        Command::Bench(args) => {
            if args.seeds == 0 {
                bail!("--seeds must be at least 1");
            }
            let (catalog, queries) = read_workload(&args.workload)?;
            let rows = bench(&catalog, &queries, &args)?;
            for r in &rows {
                writeln!(
                    out,
                    "{} seed={} strategy={} cost={} oracle={} ratio={}",
                    r.query,
                    r.seed,
                    r.strategy,
                    r.cost,
                    r.oracle_cost.map_or("-".into(), |c| c.to_string()),
                    r.ratio.map_or("-".into(), |c| format!("{c:.4}")),
                )?;
            }
            let mut ratios: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
            if !ratios.is_empty() {
                ratios.sort_by(f64::total_cmp);
                let within = ratios.iter().filter(|&&r| r <= 2.0).count();
                writeln!(
                    out,
                    "runs: {}, median ratio: {:.4}, within 2x: {}/{}",
                    rows.len(),
                    ratios[ratios.len() / 2],
                    within,
                    ratios.len()
                )?;
            }
            if let Some(path) = &args.csv {
                write_csv_file(path, |f| {
                    let mut w = csv::Writer::from_writer(f);
                    for r in &rows {
                        w.serialize(r)?;
                    }
                    w.flush()?;
                    Ok(())
                })?;
            }
        }
    }
    Ok(())
}

/// One row per (query, seed), in workload order then seed order.
pub fn bench(catalog: &Catalog, queries: &[QuerySpec], args: &BenchArgs) -> anyhow::Result<Vec<BenchRow>> {
    let jobs: Vec<(usize, u64)> = (0..queries.len()).flat_map(|q| (0..args.seeds).map(move |s| (q, s))).collect();
    let oracle: Vec<Option<f64>> = queries
        .par_iter()
        .map(|q| match dp_optimal_plan(catalog, q) {
            Ok((_, c)) => Ok(Some(c)),
            Err(Error::OracleLimit { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_, _>>()?;
    let mut rows = jobs
        .par_iter()
        .map(|&(qi, seed)| {
            let q = &queries[qi];
            let sampler = args.solver.sampler();
            let sol = solve_with_sampler(q, catalog, args.solver.budget_ms, &args.solver.config(seed), sampler.as_ref())
                .with_context(|| format!("query {} seed {seed}", q.id))?;
            Ok((
                qi,
                BenchRow {
                    query: q.id.clone(),
                    seed,
                    strategy: sol.strategy,
                    cost: sol.cost,
                    oracle_cost: oracle[qi],
                    ratio: oracle[qi].map(|o| sol.cost / o),
                    degraded: sol.degraded,
                    iterations: sol.trace.len(),
                    time_quantum_ms: sol.time_quantum_ms(),
                },
            ))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    rows.sort_by_key(|(qi, r)| (*qi, r.seed));
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_trace_still_has_header() {
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim_end(), TRACE_COLUMNS.join(","));
    }

    #[test]
    fn header_matches_column_list() {
        let rec = TraceRecord {
            iteration: 1,
            ingress_ms: 1.0,
            solve_ms: 2.0,
            egress_ms: 0.5,
            end_to_end_ms: 3.5,
            qpu_programming_ms: 0.0,
            qpu_sampling_ms: 2.0,
            qpu_access_ms: 2.0,
            refine_ms: 0.25,
            kl: None,
            best_cost: 10.0,
            violations: 3,
        };
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &[rec]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), TRACE_COLUMNS.join(","));
        assert_eq!(lines.next().unwrap(), "1,1.0,2.0,0.5,3.5,0.0,2.0,2.0,0.25,,10.0,3");
    }

    #[test]
    fn cli_parses_solve_flags() {
        let cli = Cli::try_parse_from([
            "joinqubo", "solve", "--workload", "w.json", "--query", "q1", "--budget-ms", "250", "--seed", "3", "--mode",
            "decompose", "--capacity", "40", "--emit-hint",
        ])
        .unwrap();
        let Command::Solve(a) = cli.command else { panic!("expected solve") };
        assert_eq!(a.solver.mode, ModeArg::Decompose);
        assert_eq!(a.solver.capacity, 40);
        assert_eq!(a.solver.budget_ms, 250.0);
        assert!(a.emit_hint);
    }
}
