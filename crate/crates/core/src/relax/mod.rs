//! Iterative correlation relaxation.
//!
//! Couplings of the full QUBO are scored, the weakest are deactivated, the
//! reduced problem is sampled, and feedback from the samples decides which
//! couplings come back in the next round. Variables and linear terms are
//! never dropped.

mod divergence;

pub use divergence::{js_divergence, kl_divergence, KL_SMOOTHING};

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::catalog::PlanTree;
use crate::error::{Error, Result};
use crate::joingraph::{JoinGraph, JoinOrderSequence};
use crate::orchestrator::budget::{BudgetClock, IterationRecord};
use crate::qubo::{decode_and_repair, Qubo, Term, TermClass, VarMap};
use crate::sampler::{empirical_distribution, Distribution, SampleSet, Sampler, SamplerParams, SamplerTiming};

pub type Pair = (usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxConfig {
    /// Fraction ρ of couplings kept by the first pruning.
    pub keep_fraction: f64,
    /// Fraction k of inactive couplings reactivated per iteration.
    pub reintroduce_fraction: f64,
    /// Score multiplier κ for constraint couplings.
    pub constraint_protection: f64,
    /// Inverse temperature of the target distribution; `None` uses 1 / max|coefficient|.
    pub beta: Option<f64>,
    pub max_iterations: usize,
    pub stability_epsilon: f64,
    pub patience: usize,
    /// Switch the stopping statistic to Jensen-Shannon when kl oscillates.
    pub entropy_fallback: bool,
}

impl Default for RelaxConfig {
    fn default() -> Self {
        Self {
            keep_fraction: 0.5,
            reintroduce_fraction: 0.1,
            constraint_protection: 10.0,
            beta: None,
            max_iterations: 2,
            stability_epsilon: 0.05,
            patience: 2,
            entropy_fallback: true,
        }
    }
}

impl RelaxConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.keep_fraction > 0.0
            && self.keep_fraction <= 1.0
            && self.reintroduce_fraction > 0.0
            && self.reintroduce_fraction <= 1.0
            && self.constraint_protection >= 1.0
            && self.beta.is_none_or(|b| b > 0.0 && b.is_finite())
            && self.max_iterations >= 1
            && self.stability_epsilon > 0.0
            && self.patience >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!("invalid relaxation config: {self:?}")))
        }
    }
}

/// A full QUBO with a subset of its couplings switched on.
#[derive(Debug, Clone)]
pub struct ReducedQubo<'a> {
    base: &'a Qubo,
    active: BTreeSet<Pair>,
}

impl<'a> ReducedQubo<'a> {
    /// Every coupling active.
    pub fn full(base: &'a Qubo) -> Self {
        Self { base, active: base.quadratic().keys().copied().collect() }
    }

    pub fn base(&self) -> &'a Qubo {
        self.base
    }

    pub fn active_pairs(&self) -> &BTreeSet<Pair> {
        &self.active
    }

    pub fn inactive_pairs(&self) -> impl Iterator<Item = Pair> + '_ {
        self.base.quadratic().keys().copied().filter(|p| !self.active.contains(p))
    }

    pub fn inactive_count(&self) -> usize {
        self.base.quadratic().len() - self.active.len()
    }

    /// The QUBO actually sampled: all linear terms, active couplings only.
    pub fn effective(&self) -> Qubo {
        self.base.filter_quadratic(|p| self.active.contains(p))
    }
}

/// Importance of every coupling. Constraint couplings get κ·|J|; objective
/// couplings get |J| times the estimated cardinality of the relations both
/// joins touch, normalized by the largest such cardinality.
pub fn score_correlations(qubo: &Qubo, varmap: &VarMap, graph: &JoinGraph, kappa: f64) -> BTreeMap<Pair, f64> {
    let model = graph.model();
    let subset_card = |&(i, j): &Pair| {
        let (e, _) = varmap.edge_step(i);
        let (f, _) = varmap.edge_step(j);
        model.cardinality_unchecked(graph.edge(e).relations().union(graph.edge(f).relations()))
    };
    let max_card = qubo
        .quadratic()
        .keys()
        .filter(|&&(i, j)| qubo.class(Term::Pair(i, j)) == Some(TermClass::Objective))
        .map(subset_card)
        .fold(0.0, f64::max);
    qubo.quadratic()
        .iter()
        .map(|(&p, &v)| {
            let factor = match qubo.class(Term::Pair(p.0, p.1)) {
                Some(TermClass::Constraint) => kappa,
                _ if max_card > 0.0 => subset_card(&p) / max_card,
                _ => 1.0,
            };
            (p, v.abs() * factor)
        })
        .collect()
}

/// Keeps the top ⌈ρ·|pairs|⌉ couplings by score, ties by pair order.
pub fn prune<'a>(qubo: &'a Qubo, scores: &BTreeMap<Pair, f64>, keep_fraction: f64) -> ReducedQubo<'a> {
    let mut ranked: Vec<(Pair, f64)> =
        qubo.quadratic().keys().map(|p| (*p, scores.get(p).copied().unwrap_or(0.0))).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let keep = (keep_fraction * ranked.len() as f64).ceil() as usize;
    let active = ranked.into_iter().take(keep).map(|(p, _)| p).collect();
    ReducedQubo { base: qubo, active }
}

/// What one round of samples says about the reduced problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Feedback {
    /// |⟨x_i x_j⟩_P − ⟨x_i x_j⟩_Q|·|J_ij| for every inactive coupling.
    pub moment_gaps: BTreeMap<Pair, f64>,
    /// Empirical rate at which an inactive constraint coupling is violated (both bits set).
    pub attribution: BTreeMap<Pair, f64>,
    /// Occurrence-weighted constraint violations in the raw samples.
    pub violations: u64,
    /// Occurrence-weighted repairs needed to decode the samples.
    pub repairs: u64,
    pub best_plan: Option<(PlanTree, JoinOrderSequence, f64)>,
    pub energy_mean: f64,
    pub energy_variance: f64,
    pub kl: f64,
    pub js: f64,
}

impl Feedback {
    pub fn best_cost(&self) -> Option<f64> {
        self.best_plan.as_ref().map(|b| b.2)
    }
}

/// Default inverse temperature: 1 / max|coefficient|.
pub fn default_beta(qubo: &Qubo) -> f64 {
    let m = qubo.max_abs_coefficient();
    if m > 0.0 {
        1.0 / m
    } else {
        1.0
    }
}

/// Boltzmann weights of the full QUBO over the sampled support.
fn boltzmann_over(full: &Qubo, support: &[&crate::qubo::Assignment], beta: f64) -> Result<Distribution> {
    let energies = support.iter().map(|a| full.energy(a)).collect::<Result<Vec<_>>>()?;
    let min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = energies.iter().map(|e| (-beta * (e - min)).exp()).collect();
    let z: f64 = weights.iter().sum();
    Ok(support.iter().zip(weights).map(|(a, w)| ((*a).clone(), w / z)).collect())
}

pub fn analyze_feedback(
    reduced: &ReducedQubo<'_>,
    samples: &SampleSet,
    varmap: &VarMap,
    graph: &JoinGraph,
    beta: f64,
) -> Result<Feedback> {
    let full = reduced.base();
    let q = empirical_distribution(samples)?;
    let support: Vec<_> = q.keys().collect();
    let p = boltzmann_over(full, &support, beta)?;
    let kl = kl_divergence(&p, &q);
    let js = js_divergence(&p, &q);

    let mut moment_gaps = BTreeMap::new();
    let mut attribution = BTreeMap::new();
    for (i, j) in reduced.inactive_pairs() {
        let both = |d: &Distribution| d.iter().filter(|(a, _)| a.get(i) && a.get(j)).map(|(_, w)| w).sum::<f64>();
        let (ep, eq) = (both(&p), both(&q));
        moment_gaps.insert((i, j), (ep - eq).abs() * full.j(i, j).abs());
        if full.class(Term::Pair(i, j)) == Some(TermClass::Constraint) {
            attribution.insert((i, j), eq);
        }
    }

    let mut violations = 0;
    let mut repairs = 0;
    let mut best_plan: Option<(PlanTree, JoinOrderSequence, f64)> = None;
    for row in samples.rows() {
        let decoded = decode_and_repair(varmap, graph, &row.assignment)?;
        violations += decoded.report.raw_violations() as u64 * row.occurrences;
        repairs += decoded.report.repairs() as u64 * row.occurrences;
        let cost = graph.model().plan_cost(&decoded.plan)?;
        if best_plan.as_ref().is_none_or(|b| cost < b.2) {
            best_plan = Some((decoded.plan, decoded.sequence, cost));
        }
    }
    let (energy_mean, energy_variance) = samples.energy_moments();
    Ok(Feedback { moment_gaps, attribution, violations, repairs, best_plan, energy_mean, energy_variance, kl, js })
}

/// Reactivates the top ⌈k·|inactive|⌉ inactive couplings. Constraint
/// couplings the samples actually violated come first, then the rest by
/// moment gap, ties by pair order.
pub fn reintroduce<'a>(reduced: &ReducedQubo<'a>, feedback: &Feedback, fraction: f64) -> ReducedQubo<'a> {
    let inactive: Vec<Pair> = reduced.inactive_pairs().collect();
    if inactive.is_empty() {
        return reduced.clone();
    }
    let slots = (fraction * inactive.len() as f64).ceil() as usize;
    let mut ranked: Vec<(bool, f64, Pair)> = inactive
        .into_iter()
        .map(|p| {
            let violated = feedback.attribution.get(&p).is_some_and(|&a| a > 0.0);
            (violated, feedback.moment_gaps.get(&p).copied().unwrap_or(0.0), p)
        })
        .collect();
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.total_cmp(&a.1)).then(a.2.cmp(&b.2)));
    let mut active = reduced.active.clone();
    active.extend(ranked.into_iter().take(slots).map(|(_, _, p)| p));
    ReducedQubo { base: reduced.base, active }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIterations,
    Stable,
    Patience,
    Budget,
}

#[derive(Debug, Clone)]
pub struct RelaxIteration {
    pub iteration: usize,
    pub active: BTreeSet<Pair>,
    pub feedback: Feedback,
    /// Best plan cost seen up to and including this iteration.
    pub best_cost: f64,
    pub timing: SamplerTiming,
    pub record: IterationRecord,
}

#[derive(Debug, Clone)]
pub struct RelaxOutcome {
    /// `None` only when the budget denied the first iteration.
    pub best: Option<(PlanTree, JoinOrderSequence, f64)>,
    pub trace: Vec<RelaxIteration>,
    pub stop: StopReason,
    /// Whether the stopping statistic switched to Jensen-Shannon.
    pub used_js: bool,
}

/// Rough count of client-side operations, charged to a simulated clock.
fn feedback_work(reduced: &ReducedQubo<'_>, samples: &SampleSet) -> usize {
    let per_sample = reduced.base().n() + reduced.base().quadratic().len();
    samples.rows().len() * per_sample + reduced.inactive_count() * samples.rows().len()
}

pub fn relax_loop(
    qubo: &Qubo,
    varmap: &VarMap,
    graph: &JoinGraph,
    sampler: &dyn Sampler,
    params: &SamplerParams,
    budget: &mut BudgetClock,
    config: &RelaxConfig,
) -> Result<RelaxOutcome> {
    config.validate()?;
    let beta = config.beta.unwrap_or_else(|| default_beta(qubo));
    let mut trace: Vec<RelaxIteration> = Vec::new();
    let mut best: Option<(PlanTree, JoinOrderSequence, f64)> = None;
    let mut reduced: Option<ReducedQubo<'_>> = None;
    let mut stale = 0usize;
    let mut use_js = false;
    let mut last_sign: Option<bool> = None;
    let mut alternations = 0usize;
    let mut stop = StopReason::MaxIterations;

    for it in 1..=config.max_iterations {
        let mut it_params = *params;
        it_params.seed = params.seed.wrapping_add((it as u64 - 1) * 1_000_003);
        let next = match (&reduced, trace.last()) {
            (Some(r), Some(last)) => reintroduce(r, &last.feedback, config.reintroduce_fraction),
            _ => {
                let scores = score_correlations(qubo, varmap, graph, config.constraint_protection);
                budget.clock_mut().charge_work(scores.len() * 4);
                prune(qubo, &scores, config.keep_fraction)
            }
        };
        let effective = next.effective();
        if !budget.admit(sampler.predict_ms(&effective, &it_params)) {
            stop = StopReason::Budget;
            break;
        }
        let admitted_at = budget.elapsed_ms();
        let samples = sampler.sample(&effective, &it_params)?;
        budget.clock_mut().charge_ms(samples.timing.end_to_end_ms);
        let feedback = analyze_feedback(&next, &samples, varmap, graph, beta)?;
        budget.clock_mut().charge_work(feedback_work(&next, &samples));

        let improved = match (&feedback.best_plan, &best) {
            (Some(f), Some(b)) => f.2 < b.2,
            (Some(_), None) => true,
            _ => false,
        };
        if improved {
            best = feedback.best_plan.clone();
        }
        stale = if improved { 0 } else { stale + 1 };

        let record = budget.finish_iteration(admitted_at, samples.timing.solve_ms, samples.timing.communication_ms());
        let prev = trace.last().map(|t| &t.feedback);
        let stable = match prev {
            Some(prev) => {
                let (now, before) = if use_js { (feedback.js, prev.js) } else { (feedback.kl, prev.kl) };
                let change = (now - before) / before.abs().max(1e-12);
                if config.entropy_fallback && !use_js && change != 0.0 {
                    let sign = change > 0.0;
                    if last_sign.is_some_and(|s| s != sign) {
                        alternations += 1;
                        if alternations >= 2 {
                            use_js = true;
                        }
                    }
                    last_sign = Some(sign);
                }
                change.abs() < config.stability_epsilon
            }
            None => false,
        };
        trace.push(RelaxIteration {
            iteration: it,
            active: next.active_pairs().clone(),
            feedback,
            best_cost: best.as_ref().map_or(f64::INFINITY, |b| b.2),
            timing: samples.timing,
            record,
        });
        reduced = Some(next);

        if it == config.max_iterations {
            stop = StopReason::MaxIterations;
            break;
        }
        if stale >= config.patience {
            stop = StopReason::Patience;
            break;
        }
        if stable {
            stop = StopReason::Stable;
            break;
        }
    }
    Ok(RelaxOutcome { best, trace, stop, used_js: use_js })
}
