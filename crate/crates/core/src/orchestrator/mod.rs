//! End-to-end budgeted solve: encode, route, run the chosen strategy, and
//! account every sampling iteration against the time budget.

pub mod budget;

pub use budget::{BudgetClock, IterationRecord, LifecycleSnapshot, EMA_ALPHA};

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::catalog::{Catalog, PlanTree, QuerySpec};
use crate::cli::hint::emit_hint;
use crate::clock::ClockMode;
use crate::decomp::{run_decomposed, DecompConfig};
use crate::error::{Error, Result};
use crate::joingraph::{build_join_graph, JoinGraph, JoinOrderSequence};
use crate::qubo::{encode_join_order, greedy_plan, qubo_metrics, EncodingWeights, JoinOrderEncoding, QuboMetrics};
use crate::relax::{analyze_feedback, default_beta, relax_loop, ReducedQubo, RelaxConfig};
use crate::sampler::{Sampler, SamplerParams, SamplerTiming, SimulatedAnnealer, TimingMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Direct,
    Relax,
    Decompose,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Direct => "direct",
            Strategy::Relax => "relax",
            Strategy::Decompose => "decompose",
        })
    }
}

/// Strategy selection: automatic routing or a forced strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Auto,
    Force(Strategy),
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Mode::Auto),
            "direct" => Ok(Mode::Force(Strategy::Direct)),
            "relax" => Ok(Mode::Force(Strategy::Relax)),
            "decompose" => Ok(Mode::Force(Strategy::Decompose)),
            other => Err(Error::InvalidParam(format!("unknown mode `{other}`"))),
        }
    }
}

pub const DEFAULT_CAPACITY: usize = 128;
pub const DEFAULT_DENSITY_THRESHOLD: f64 = 0.25;

/// DECOMPOSE above capacity, RELAX above the density threshold, else DIRECT.
pub fn route(metrics: &QuboMetrics, capacity: usize, density_threshold: f64) -> Strategy {
    if metrics.variables > capacity {
        Strategy::Decompose
    } else if metrics.density > density_threshold {
        Strategy::Relax
    } else {
        Strategy::Direct
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    pub mode: Mode,
    pub capacity: usize,
    pub density_threshold: f64,
    pub seed: u64,
    pub sampler: SamplerParams,
    pub relax: RelaxConfig,
    /// `max_vars` is always taken from `capacity`.
    pub decomp: DecompConfig,
    pub weights: EncodingWeights,
    pub clock: ClockMode,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Auto,
            capacity: DEFAULT_CAPACITY,
            density_threshold: DEFAULT_DENSITY_THRESHOLD,
            seed: 0,
            sampler: SamplerParams::default(),
            relax: RelaxConfig::default(),
            decomp: DecompConfig::default(),
            weights: EncodingWeights::default(),
            clock: ClockMode::Simulated,
        }
    }
}

/// One row of the per-iteration timing breakdown.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub ingress_ms: f64,
    pub solve_ms: f64,
    pub egress_ms: f64,
    pub end_to_end_ms: f64,
    pub qpu_programming_ms: f64,
    pub qpu_sampling_ms: f64,
    pub qpu_access_ms: f64,
    pub refine_ms: f64,
    pub kl: Option<f64>,
    pub best_cost: f64,
    pub violations: u64,
}

impl TraceRecord {
    fn new(
        iteration: usize,
        t: &SamplerTiming,
        rec: &IterationRecord,
        kl: Option<f64>,
        best_cost: f64,
        violations: u64,
    ) -> Self {
        Self {
            iteration,
            ingress_ms: t.ingress_ms,
            solve_ms: t.solve_ms,
            egress_ms: t.egress_ms,
            end_to_end_ms: t.end_to_end_ms,
            qpu_programming_ms: t.qpu_programming_ms,
            qpu_sampling_ms: t.qpu_sampling_ms,
            qpu_access_ms: t.qpu_access_ms,
            refine_ms: rec.t_r_ms,
            kl,
            best_cost,
            violations,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub plan: PlanTree,
    pub sequence: JoinOrderSequence,
    pub cost: f64,
    pub hint: String,
    /// Strategy that actually ran: `Relax` when decomposition was routed
    /// or forced but its parts could not be partitioned or embedded.
    pub strategy: Strategy,
    pub metrics: QuboMetrics,
    pub lifecycle: LifecycleSnapshot,
    pub trace: Vec<TraceRecord>,
    /// Set when the budget ran out before the first sample completed.
    pub degraded: bool,
}

#[derive(Serialize)]
struct CanonicalSolution<'a> {
    plan: String,
    cost: f64,
    hint: &'a str,
    strategy: Strategy,
    degraded: bool,
    lifecycle: &'a LifecycleSnapshot,
    trace: &'a [TraceRecord],
}

impl Solution {
    pub fn time_quantum_ms(&self) -> f64 {
        self.lifecycle.time_quantum_ms
    }

    /// Stable JSON form for reproducibility checks.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(&CanonicalSolution {
            plan: self.plan.to_string(),
            cost: self.cost,
            hint: &self.hint,
            strategy: self.strategy,
            degraded: self.degraded,
            lifecycle: &self.lifecycle,
            trace: &self.trace,
        })
        .expect("solution serializes")
    }
}

/// Sampler used when none is supplied: simulated annealing whose reported
/// time matches the clock mode.
pub fn default_sampler(clock: ClockMode) -> SimulatedAnnealer {
    match clock {
        ClockMode::Simulated => SimulatedAnnealer::new(TimingMode::modeled()),
        ClockMode::Wall => SimulatedAnnealer::new(TimingMode::Wall),
    }
}

pub fn solve(query: &QuerySpec, catalog: &Catalog, tau_ms: f64, config: &SolveConfig) -> Result<Solution> {
    solve_with_sampler(query, catalog, tau_ms, config, &default_sampler(config.clock))
}

pub fn solve_with_sampler(
    query: &QuerySpec,
    catalog: &Catalog,
    tau_ms: f64,
    config: &SolveConfig,
    sampler: &dyn Sampler,
) -> Result<Solution> {
    if config.capacity == 0 || !(config.density_threshold > 0.0) {
        return Err(Error::InvalidParam("capacity and density threshold must be positive".into()));
    }
    let mut budget = BudgetClock::new(tau_ms, config.clock)?;
    let graph = build_join_graph(query, catalog)?;
    let enc = encode_join_order(&graph, &config.weights)?;
    budget.clock_mut().charge_work(enc.qubo.n() + enc.qubo.quadratic().len());
    let metrics = qubo_metrics(&enc.qubo);
    let strategy = match config.mode {
        Mode::Auto => route(&metrics, config.capacity, config.density_threshold),
        Mode::Force(s) => s,
    };
    let params = SamplerParams { seed: config.seed, ..config.sampler };
    log::debug!("query {}: {} variables, density {:.3}, strategy {strategy}", query.id, metrics.variables, metrics.density);

    let run_relax = |budget: &mut BudgetClock| -> Result<(Best, Vec<TraceRecord>)> {
        let out = relax_loop(&enc.qubo, &enc.varmap, &graph, sampler, &params, budget, &config.relax)?;
        let trace = out
            .trace
            .iter()
            .map(|it| TraceRecord::new(it.iteration, &it.timing, &it.record, Some(it.feedback.kl), it.best_cost, it.feedback.violations))
            .collect();
        Ok((out.best, trace))
    };
    let mut strategy = strategy;
    let (best, trace) = match strategy {
        Strategy::Direct => run_direct(&enc, &graph, sampler, &params, &mut budget)?,
        Strategy::Relax => run_relax(&mut budget)?,
        Strategy::Decompose => {
            let decomp = DecompConfig { max_vars: config.capacity, ..config.decomp.clone() };
            match run_decomposed(&enc.qubo, &enc.varmap, &graph, sampler, &params, &mut budget, &decomp) {
                Ok(out) => {
                    let trace = out
                        .trace
                        .iter()
                        .map(|it| TraceRecord::new(it.iteration, &it.timing, &it.record, None, it.best_cost, it.violations as u64))
                        .collect();
                    (out.best, trace)
                }
                Err(e @ (Error::Embedding(_) | Error::Partition(_))) => {
                    log::warn!("query {}: decomposition not possible ({e}); sampling the full QUBO with relaxation", query.id);
                    strategy = Strategy::Relax;
                    run_relax(&mut budget)?
                }
                Err(e) => return Err(e),
            }
        }
    };

    let late_first = budget.records().first().is_some_and(|r| r.finished_at_ms > tau_ms);
    let (plan, sequence, cost, degraded) = match best {
        Some((plan, seq, cost)) => (plan, seq, cost, late_first),
        None => {
            log::warn!("budget of {tau_ms} ms exhausted before the first sample; returning greedy plan");
            let (plan, seq) = greedy_plan(&graph);
            let cost = graph.model().plan_cost(&plan)?;
            (plan, seq, cost, true)
        }
    };
    let report = graph.validate_plan(&sequence);
    if report.violation_count() != 0 {
        return Err(Error::InvalidPlan(format!("solver produced an invalid plan: {report:?}")));
    }
    Ok(Solution {
        hint: emit_hint(&plan),
        plan,
        sequence,
        cost,
        strategy,
        metrics,
        lifecycle: budget.snapshot(),
        trace,
        degraded,
    })
}

type Best = Option<(PlanTree, JoinOrderSequence, f64)>;

fn run_direct(
    enc: &JoinOrderEncoding,
    graph: &JoinGraph,
    sampler: &dyn Sampler,
    params: &SamplerParams,
    budget: &mut BudgetClock,
) -> Result<(Best, Vec<TraceRecord>)> {
    if !budget.admit(sampler.predict_ms(&enc.qubo, params)) {
        return Ok((None, Vec::new()));
    }
    let admitted_at = budget.elapsed_ms();
    let samples = sampler.sample(&enc.qubo, params)?;
    budget.clock_mut().charge_ms(samples.timing.end_to_end_ms);
    let full = ReducedQubo::full(&enc.qubo);
    let feedback = analyze_feedback(&full, &samples, &enc.varmap, graph, default_beta(&enc.qubo))?;
    budget.clock_mut().charge_work(samples.rows().len() * (enc.qubo.n() + enc.qubo.quadratic().len()));
    let record = budget.finish_iteration(admitted_at, samples.timing.solve_ms, samples.timing.communication_ms());
    let best_cost = feedback.best_cost().unwrap_or(f64::INFINITY);
    let trace = vec![TraceRecord::new(1, &samples.timing, &record, Some(feedback.kl), best_cost, feedback.violations)];
    Ok((feedback.best_plan, trace))
}
