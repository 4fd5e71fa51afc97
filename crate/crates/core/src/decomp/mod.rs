//! Decomposition for QUBOs larger than the simulated hardware: partition
//! the join graph, embed each part onto a king-grid topology, sample the
//! parts, and compose their answers by consensus on shared variables.

mod compose;
mod embed;
mod partition;
mod pathfind;
mod tabu;

pub use compose::{compose_bp, consensus, merge_parts, part_marginals, Merge};
pub use embed::{
    embed, resolve_chains, verify_embedding, ChainResolution, Embedding, EmbeddingCache, HardwareGraph, PhysicalQubo,
    CHAIN_STRENGTH_FACTOR,
};
pub use partition::{kl_bisect, partition_join_graph, split_terms, Part, Partitioning, PART_FILL};
pub use tabu::{tabu_refine, TABU_TENURE};

use std::collections::BTreeMap;

use crate::catalog::PlanTree;
use crate::error::{Error, Result};
use crate::joingraph::{JoinGraph, JoinOrderSequence};
use crate::orchestrator::budget::{BudgetClock, IterationRecord};
use crate::qubo::{decode_and_repair, Assignment, Qubo, VarMap};
use crate::relax::default_beta;
use crate::sampler::{SampleSet, Sampler, SamplerParams, SamplerTiming};

/// Clamp range of the per-part sweep multiplier.
pub const SWEEP_SCALE_RANGE: (f64, f64) = (0.25, 4.0);

/// Per-part sampling parameters. Sweeps scale with
/// (cost_p / mean cost)^gamma, clamped to [0.25, 4] times the base; when the
/// previous round's energy variances are given, parts above the median get
/// twice the reads. Seeds are derived from the base seed and part index.
pub fn allocate_sampling(
    partitioning: &Partitioning,
    base: &SamplerParams,
    gamma: f64,
    prev_variances: Option<&[f64]>,
) -> Vec<SamplerParams> {
    let costs: Vec<f64> = partitioning.parts.iter().map(|p| p.cost_estimate).collect();
    let mean = costs.iter().sum::<f64>() / costs.len().max(1) as f64;
    let median = prev_variances.map(|v| {
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        if s.is_empty() {
            0.0
        } else if s.len() % 2 == 1 {
            s[s.len() / 2]
        } else {
            0.5 * (s[s.len() / 2 - 1] + s[s.len() / 2])
        }
    });
    costs
        .iter()
        .enumerate()
        .map(|(p, &c)| {
            let ratio = if mean > 0.0 { c / mean } else { 1.0 };
            let scale = ratio.powf(gamma).clamp(SWEEP_SCALE_RANGE.0, SWEEP_SCALE_RANGE.1);
            let sweeps = ((base.sweeps as f64 * scale).round() as usize).max(1);
            let noisy = match (prev_variances, median) {
                (Some(v), Some(m)) => v.get(p).is_some_and(|&x| x > m),
                _ => false,
            };
            SamplerParams {
                sweeps,
                num_reads: if noisy { base.num_reads * 2 } else { base.num_reads },
                seed: base.seed.wrapping_add(7919 * p as u64),
                ..*base
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompConfig {
    /// Largest subproblem (in variables) the hardware accepts.
    pub max_vars: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Consensus rounds after the initial sampling.
    pub rounds: usize,
    pub gamma: f64,
    /// Part-weight inverse temperature; `None` uses 1 / max|coefficient|.
    pub beta: Option<f64>,
    /// Tabu move budget; `None` uses 50n.
    pub tabu_moves: Option<usize>,
}

impl Default for DecompConfig {
    fn default() -> Self {
        Self { max_vars: 128, grid_rows: 32, grid_cols: 32, rounds: 3, gamma: 0.5, beta: None, tabu_moves: None }
    }
}

#[derive(Debug, Clone)]
pub struct DecompIteration {
    pub iteration: usize,
    pub timing: SamplerTiming,
    pub record: IterationRecord,
    /// Best plan cost seen up to and including this iteration.
    pub best_cost: f64,
    /// Occurrence-weighted chain breaks across all parts.
    pub broken_chains: u64,
    /// Full-QUBO energy of the merged assignment.
    pub merged_energy: f64,
    /// Constraint violations left in the merged assignment before repair.
    pub violations: usize,
}

#[derive(Debug, Clone)]
pub struct DecompOutcome {
    pub best: Option<(PlanTree, JoinOrderSequence, f64)>,
    pub parts: usize,
    pub shared: usize,
    pub trace: Vec<DecompIteration>,
    pub budget_stopped: bool,
}

/// Samples one part on the hardware and maps the reads back to logical
/// variables of the clamped part QUBO.
fn sample_part(
    sampler: &dyn Sampler,
    clamped: &Qubo,
    physical: &PhysicalQubo,
    emb: &Embedding,
    hw: &HardwareGraph,
    params: &SamplerParams,
) -> Result<(SampleSet, u64)> {
    let raw = sampler.sample(&physical.qubo, params)?;
    let mut counts: BTreeMap<Assignment, u64> = BTreeMap::new();
    let mut broken = 0;
    for row in raw.rows() {
        let bits = physical.to_hardware_bits(&row.assignment, hw.capacity());
        let r = resolve_chains(&bits, emb);
        broken += r.broken_chains as u64 * row.occurrences;
        *counts.entry(r.assignment).or_insert(0) += row.occurrences;
    }
    Ok((SampleSet::from_counts(clamped, counts, raw.timing)?, broken))
}

/// Partitions with `max_vars`, lowering it so the largest part is split
/// again whenever some part fails to embed, until every part has an embedding or the join graph cannot be
/// split further.
fn embeddable_partitioning(
    qubo: &Qubo,
    varmap: &VarMap,
    graph: &JoinGraph,
    hw: &HardwareGraph,
    max_vars: usize,
    cache: &mut EmbeddingCache,
    budget: &mut BudgetClock,
) -> Result<Partitioning> {
    let mut limit = max_vars;
    let mut last_err: Option<Error> = None;
    loop {
        let partitioning = match (partition_join_graph(graph, varmap, qubo, limit), last_err) {
            (Ok(p), _) => p,
            (Err(_), Some(embed_err)) => return Err(embed_err),
            (Err(e), None) => return Err(e),
        };
        budget.clock_mut().charge_work(qubo.quadratic().len() * partitioning.parts.len());
        let zeros = Assignment::zeros(qubo.n());
        let mut failure = None;
        for part in &partitioning.parts {
            let clamped = part.clamped(&zeros);
            let cached = cache.len();
            let res = cache.get_or_embed(&clamped, hw);
            budget.clock_mut().charge_work(if cache.len() > cached || res.is_err() { clamped.n() * hw.capacity() * 16 } else { 0 });
            if let Err(e) = res {
                failure = Some(e);
                break;
            }
        }
        let Some(err) = failure else {
            return Ok(partitioning);
        };
        let largest = partitioning.parts.iter().map(|p| p.vars.len()).max().unwrap_or(0);
        // Largest budget under which that part must be split again.
        let next = (((largest as f64 - 1.0) / PART_FILL).floor() as usize).min(limit - 1);
        if next < varmap.steps() {
            return Err(err);
        }
        log::debug!("part with {largest} variables does not embed; re-partitioning with max_vars {next}");
        limit = next;
        last_err = Some(err);
    }
}

/// Partition, embed, sample, compose and refine under the budget. Each
/// sampling round is one lifecycle iteration: the initial round plus
/// `config.rounds` consensus rounds.
pub fn run_decomposed(
    qubo: &Qubo,
    varmap: &VarMap,
    graph: &JoinGraph,
    sampler: &dyn Sampler,
    params: &SamplerParams,
    budget: &mut BudgetClock,
    config: &DecompConfig,
) -> Result<DecompOutcome> {
    params.validate()?;
    if config.grid_rows == 0 || config.grid_cols == 0 || !(config.gamma >= 0.0) {
        return Err(Error::InvalidParam(format!("invalid decomposition config: {config:?}")));
    }
    let hw = HardwareGraph::king_grid(config.grid_rows, config.grid_cols);
    let mut cache = EmbeddingCache::default();
    let partitioning = embeddable_partitioning(qubo, varmap, graph, &hw, config.max_vars, &mut cache, budget)?;
    let beta = config.beta.unwrap_or_else(|| default_beta(qubo));
    let moves = config.tabu_moves.unwrap_or(50 * qubo.n());

    let mut state = Assignment::zeros(qubo.n());
    let mut variances: Option<Vec<f64>> = None;
    let mut best: Option<(PlanTree, JoinOrderSequence, f64)> = None;
    let mut trace = Vec::new();
    let mut budget_stopped = false;

    for it in 1..=config.rounds + 1 {
        let mut allocated = allocate_sampling(&partitioning, params, config.gamma, variances.as_deref());
        for pp in &mut allocated {
            pp.seed = pp.seed.wrapping_add((it as u64 - 1) * 1_000_003);
        }
        let mut jobs = Vec::with_capacity(partitioning.parts.len());
        for part in &partitioning.parts {
            let clamped = part.clamped(&state);
            let emb = cache.get_or_embed(&clamped, &hw)?;
            let physical = PhysicalQubo::build(&clamped, &hw, &emb);
            jobs.push((clamped, emb, physical));
        }
        let predicted = jobs
            .iter()
            .zip(&allocated)
            .map(|((_, _, phys), pp)| sampler.predict_ms(&phys.qubo, pp))
            .sum::<Option<f64>>();
        if !budget.admit(predicted) {
            budget_stopped = true;
            break;
        }
        let admitted_at = budget.elapsed_ms();

        let mut timing = SamplerTiming::default();
        let mut broken = 0;
        let mut sets = Vec::with_capacity(jobs.len());
        for ((clamped, emb, physical), pp) in jobs.iter().zip(&allocated) {
            let (set, b) = sample_part(sampler, clamped, physical, emb, &hw, pp)?;
            timing.accumulate(&set.timing);
            broken += b;
            sets.push(set);
        }
        budget.clock_mut().charge_ms(timing.end_to_end_ms);

        let merged = merge_parts(&partitioning, &sets, beta)?;
        state = merged.assignment;
        let refined = tabu_refine(qubo, &state, moves);
        let decoded = decode_and_repair(varmap, graph, &refined)?;
        let cost = graph.model().plan_cost(&decoded.plan)?;
        if best.as_ref().is_none_or(|b| cost < b.2) {
            best = Some((decoded.plan, decoded.sequence, cost));
        }
        let raw = decode_and_repair(varmap, graph, &state)?.report.raw_violations();
        budget.clock_mut().charge_work(moves * (1 + qubo.quadratic().len() * 2 / qubo.n().max(1)));
        variances = Some(sets.iter().map(|s| s.energy_moments().1).collect());

        let record = budget.finish_iteration(admitted_at, timing.solve_ms, timing.communication_ms());
        trace.push(DecompIteration {
            iteration: it,
            timing,
            record,
            best_cost: best.as_ref().map_or(f64::INFINITY, |b| b.2),
            broken_chains: broken,
            merged_energy: qubo.energy(&state)?,
            violations: raw,
        });
    }
    Ok(DecompOutcome {
        best,
        parts: partitioning.parts.len(),
        shared: partitioning.shared.len(),
        trace,
        budget_stopped,
    })
}

#[cfg(test)]
mod tests {
    use super::partition::tests::graph_from_edges;
    use super::*;
    use crate::clock::ClockMode;
    use crate::qubo::testutil::random_qubo;
    use crate::sampler::{SimulatedAnnealer, TimingMode};

    fn parts_with_costs(costs: &[f64]) -> Partitioning {
        let (graph, enc) = graph_from_edges(8, &(0..7).map(|i| (i, i + 1)).collect::<Vec<_>>());
        let mut p = partition_join_graph(&graph, &enc.varmap, &enc.qubo, 40).unwrap();
        while p.parts.len() < costs.len() {
            p.parts.push(p.parts[0].clone());
        }
        p.parts.truncate(costs.len());
        for (part, &c) in p.parts.iter_mut().zip(costs) {
            part.cost_estimate = c;
        }
        p
    }

    #[test]
    fn equal_costs_keep_base_sweeps() {
        let p = parts_with_costs(&[3.0, 3.0]);
        let base = SamplerParams { sweeps: 400, ..Default::default() };
        for pp in allocate_sampling(&p, &base, 0.5, None) {
            assert_eq!(pp.sweeps, 400);
            assert_eq!(pp.num_reads, base.num_reads);
        }
    }

    #[test]
    fn sweeps_follow_cost_ratio_and_clamp() {
        // Costs 7 and 1 have mean 4: ratios 1.75 and 0.25.
        let base = SamplerParams { sweeps: 400, ..Default::default() };
        let p = parts_with_costs(&[7.0, 1.0]);
        let out = allocate_sampling(&p, &base, 0.5, None);
        assert_eq!(out[0].sweeps, (400.0 * 1.75f64.sqrt()).round() as usize);
        assert_eq!(out[1].sweeps, 200);

        // One part at 4x the mean: costs (4, 0, 0, 0) have mean 1.
        let p = parts_with_costs(&[4.0, 0.0, 0.0, 0.0]);
        let out = allocate_sampling(&p, &base, 0.5, None);
        assert_eq!(out[0].sweeps, 800);
        assert_eq!(out[1].sweeps, 100);

        // 100x the mean clamps to 4x.
        let mut costs = vec![0.0; 100];
        costs[0] = 100.0;
        let p = parts_with_costs(&costs);
        assert_eq!(allocate_sampling(&p, &base, 0.5, None)[0].sweeps, 1600);
    }

    #[test]
    fn noisy_parts_get_more_reads() {
        let p = parts_with_costs(&[1.0, 1.0, 1.0]);
        let base = SamplerParams { num_reads: 10, ..Default::default() };
        let out = allocate_sampling(&p, &base, 0.5, Some(&[0.5, 2.0, 1.0]));
        assert_eq!(out.iter().map(|p| p.num_reads).collect::<Vec<_>>(), vec![10, 20, 10]);
        assert_ne!(out[0].seed, out[1].seed);
    }

    #[test]
    fn star_encoding_embeds_on_small_grid() {
        let (_, enc) = graph_from_edges(4, &[(0, 1), (0, 2), (0, 3)]);
        let hw = HardwareGraph::king_grid(8, 8);
        let emb = embed(&enc.qubo, &hw).unwrap();
        verify_embedding(&enc.qubo, &hw, &emb).unwrap();
    }

    #[test]
    fn random_embeddings_verify() {
        let hw = HardwareGraph::king_grid(16, 16);
        for seed in 0..10 {
            let q = random_qubo(30, 0.15, 500 + seed);
            let emb = embed(&q, &hw).unwrap();
            verify_embedding(&q, &hw, &emb).unwrap();
        }
    }

    #[test]
    fn failed_embedding_triggers_smaller_parts() {
        let (graph, enc) = graph_from_edges(8, &(0..7).map(|i| (i, i + 1)).collect::<Vec<_>>());
        let sampler = SimulatedAnnealer::new(TimingMode::modeled());
        let params = SamplerParams { num_reads: 8, sweeps: 100, seed: 1, ..Default::default() };
        let mut budget = BudgetClock::new(1e6, ClockMode::Simulated).unwrap();
        let config = DecompConfig { max_vars: 40, grid_rows: 16, grid_cols: 16, rounds: 1, ..Default::default() };
        let out = run_decomposed(&enc.qubo, &enc.varmap, &graph, &sampler, &params, &mut budget, &config).unwrap();
        assert!(out.parts > 2, "{} parts", out.parts);
        let (_, seq, _) = out.best.unwrap();
        assert_eq!(graph.validate_plan(&seq).violation_count(), 0);
    }

    #[test]
    fn decomposed_run_returns_valid_plan() {
        let (graph, enc) = graph_from_edges(8, &(0..7).map(|i| (i, i + 1)).collect::<Vec<_>>());
        let sampler = SimulatedAnnealer::new(TimingMode::modeled());
        let params = SamplerParams { num_reads: 16, sweeps: 200, seed: 1, ..Default::default() };
        let mut budget = BudgetClock::new(1e6, ClockMode::Simulated).unwrap();
        let config = DecompConfig { max_vars: 40, ..Default::default() };
        let out = run_decomposed(&enc.qubo, &enc.varmap, &graph, &sampler, &params, &mut budget, &config).unwrap();
        assert_eq!(out.parts, 2);
        assert_eq!(out.trace.len(), 4);
        let (_, seq, _) = out.best.unwrap();
        assert_eq!(graph.validate_plan(&seq).violation_count(), 0);
        assert!(out.trace.windows(2).all(|w| w[1].best_cost <= w[0].best_cost));
    }
}
