//! Time-indexed join-order encoding.
//!
//! Variable `x[e, t]` is 1 when base edge `e` is the join performed at step
//! `t` (1-based, `t < relations`). Penalties force exactly one edge per step
//! and each edge at most once. Connectivity is not encoded; the decoder
//! repairs any sequence into a valid plan.

use crate::catalog::{PlanTree, RelSet};
use crate::error::{Error, Result};
use crate::joingraph::{DisjointSets, JoinGraph, JoinOrderSequence};

use super::{Assignment, Qubo, TermClass};

/// Bijection between variable indices and `(edge, step)` pairs, step-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarMap {
    edges: usize,
    steps: usize,
}

impl VarMap {
    pub fn new(edges: usize, steps: usize) -> Self {
        assert!(edges >= 1 && steps >= 1);
        Self { edges, steps }
    }

    pub fn edges(&self) -> usize {
        self.edges
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn len(&self) -> usize {
        self.edges * self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Variable for edge `e` at step `t` (1-based).
    pub fn var(&self, edge: usize, step: usize) -> usize {
        debug_assert!(edge < self.edges && (1..=self.steps).contains(&step));
        (step - 1) * self.edges + edge
    }

    /// `(edge, step)` of a variable.
    pub fn edge_step(&self, var: usize) -> (usize, usize) {
        (var % self.edges, var / self.edges + 1)
    }

    /// All variables of one edge across every step.
    pub fn column(&self, edge: usize) -> impl Iterator<Item = usize> + '_ {
        (1..=self.steps).map(move |t| self.var(edge, t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodingWeights {
    /// Scale of the log-cardinality placement bias.
    pub cost: f64,
    /// Reward for consecutive joins that share a relation.
    pub adjacency: f64,
    /// Penalty weight as a multiple of the largest objective coefficient.
    pub penalty_factor: f64,
}

impl Default for EncodingWeights {
    fn default() -> Self {
        Self { cost: 1.0, adjacency: 0.5, penalty_factor: 2.0 }
    }
}

#[derive(Debug, Clone)]
pub struct JoinOrderEncoding {
    pub qubo: Qubo,
    pub varmap: VarMap,
    /// Constraint terms alone (one-edge-per-step and edge-at-most-once).
    pub penalty: Qubo,
    /// Objective terms alone.
    pub objective: Qubo,
    pub penalty_weight: f64,
}

pub fn encode_join_order(graph: &JoinGraph, weights: &EncodingWeights) -> Result<JoinOrderEncoding> {
    if !(weights.cost >= 0.0 && weights.adjacency >= 0.0 && weights.penalty_factor > 0.0) {
        return Err(Error::InvalidParam(format!("encoding weights must be non-negative: {weights:?}")));
    }
    let n_rel = graph.relation_count();
    let steps = n_rel - 1;
    let varmap = VarMap::new(graph.edges().len(), steps);
    let n = varmap.len();

    let mut objective = Qubo::new(n);
    for e in 0..varmap.edges() {
        let log_card = graph.pair_cardinality(e).ln();
        for t in 1..=steps {
            let remaining = (n_rel - t) as f64;
            objective.add_linear(varmap.var(e, t), weights.cost * log_card * remaining, TermClass::Objective);
        }
    }
    for t in 1..steps {
        for &(a, b) in graph.op_links() {
            objective.add_quadratic(varmap.var(a, t), varmap.var(b, t + 1), -weights.adjacency, TermClass::Objective);
            objective.add_quadratic(varmap.var(b, t), varmap.var(a, t + 1), -weights.adjacency, TermClass::Objective);
        }
    }

    let max_obj = objective.max_abs_coefficient();
    let penalty_weight = weights.penalty_factor * if max_obj > 0.0 { max_obj } else { 1.0 };

    let mut penalty = Qubo::new(n);
    // P * (sum_e x[e,t] - 1)^2 = P * (1 - sum_e x + 2 sum_{e<f} x x) for binary x.
    for t in 1..=steps {
        penalty.add_offset(penalty_weight);
        for e in 0..varmap.edges() {
            penalty.add_linear(varmap.var(e, t), -penalty_weight, TermClass::Constraint);
            for f in e + 1..varmap.edges() {
                penalty.add_quadratic(varmap.var(e, t), varmap.var(f, t), 2.0 * penalty_weight, TermClass::Constraint);
            }
        }
    }
    for e in 0..varmap.edges() {
        for t in 1..=steps {
            for u in t + 1..=steps {
                penalty.add_quadratic(varmap.var(e, t), varmap.var(e, u), penalty_weight, TermClass::Constraint);
            }
        }
    }

    let mut qubo = penalty.clone();
    qubo.add_qubo(&objective);
    Ok(JoinOrderEncoding { qubo, varmap, penalty, objective, penalty_weight })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DecodeReport {
    /// Selected edges dropped because the edge was already applied.
    pub skipped_duplicate: usize,
    /// Selected edges dropped because both ends were already connected.
    pub skipped_redundant: usize,
    /// Edges added greedily to complete the tree.
    pub added_greedy: usize,
    /// Steps with a selection count other than one.
    pub h1_violations: usize,
    /// Edges selected at more than one step.
    pub h2_violations: usize,
}

impl DecodeReport {
    pub fn repairs(&self) -> usize {
        self.skipped_duplicate + self.skipped_redundant + self.added_greedy
    }

    pub fn raw_violations(&self) -> usize {
        self.h1_violations + self.h2_violations
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub plan: PlanTree,
    pub sequence: JoinOrderSequence,
    pub report: DecodeReport,
}

struct Forest<'g> {
    graph: &'g JoinGraph,
    sets: DisjointSets,
    parts: Vec<Option<(PlanTree, RelSet)>>,
    components: usize,
    used: Vec<bool>,
    sequence: Vec<usize>,
}

impl<'g> Forest<'g> {
    fn new(graph: &'g JoinGraph) -> Self {
        let model = graph.model();
        let parts = (0..model.len())
            .map(|i| Some((PlanTree::leaf(model.name(i)), RelSet::single(i))))
            .collect();
        Self {
            graph,
            sets: DisjointSets::new(model.len()),
            parts,
            components: model.len(),
            used: vec![false; graph.edges().len()],
            sequence: Vec::new(),
        }
    }

    /// Applies edge `e`; the larger component goes left, ties keep the
    /// component of the edge's left relation on the left.
    fn apply(&mut self, e: usize) {
        let edge = self.graph.edge(e);
        let (a, b) = (self.sets.find(edge.left), self.sets.find(edge.right));
        debug_assert_ne!(a, b);
        let (ta, sa) = self.parts[a].take().expect("root holds its component");
        let (tb, sb) = self.parts[b].take().expect("root holds its component");
        let plan = if sb.len() > sa.len() { PlanTree::join(tb, ta) } else { PlanTree::join(ta, tb) };
        self.sets.union(a, b);
        let root = self.sets.find(a);
        self.parts[root] = Some((plan, sa.union(sb)));
        self.components -= 1;
        self.used[e] = true;
        self.sequence.push(e);
    }

    fn connects(&mut self, e: usize) -> bool {
        let edge = self.graph.edge(e);
        self.sets.find(edge.left) != self.sets.find(edge.right)
    }

    fn component_set(&mut self, rel: usize) -> RelSet {
        let r = self.sets.find(rel);
        self.parts[r].as_ref().expect("root holds its component").1
    }

    fn complete_greedily(&mut self) -> usize {
        let mut added = 0;
        while self.components > 1 {
            let mut best: Option<(f64, usize)> = None;
            for e in 0..self.graph.edges().len() {
                if !self.connects(e) {
                    continue;
                }
                let edge = self.graph.edge(e);
                let joined = self.component_set(edge.left).union(self.component_set(edge.right));
                let card = self.graph.model().cardinality_unchecked(joined);
                if best.is_none_or(|(c, _)| card < c) {
                    best = Some((card, e));
                }
            }
            let (_, e) = best.expect("connected query always has a joining edge");
            self.apply(e);
            added += 1;
        }
        added
    }

    fn finish(mut self) -> (PlanTree, JoinOrderSequence) {
        let root = self.sets.find(0);
        let (plan, _) = self.parts[root].take().expect("single component remains");
        (plan, JoinOrderSequence(self.sequence))
    }
}

/// Decodes an assignment into a valid plan, repairing as needed.
pub fn decode_and_repair(varmap: &VarMap, graph: &JoinGraph, s: &Assignment) -> Result<Decoded> {
    if s.len() != varmap.len() {
        return Err(Error::LengthMismatch { expected: varmap.len(), got: s.len() });
    }
    let mut report = DecodeReport::default();
    let mut per_step = vec![0usize; varmap.steps() + 1];
    let mut per_edge = vec![0usize; varmap.edges()];
    // Step-major layout: iterating set bits visits (t, e) in ascending order.
    let selected: Vec<(usize, usize)> = s.ones().map(|v| varmap.edge_step(v)).collect();
    for &(e, t) in &selected {
        per_step[t] += 1;
        per_edge[e] += 1;
    }
    report.h1_violations = per_step[1..].iter().filter(|&&c| c != 1).count();
    report.h2_violations = per_edge.iter().filter(|&&c| c > 1).count();

    let mut forest = Forest::new(graph);
    for &(e, _) in &selected {
        if forest.used[e] {
            report.skipped_duplicate += 1;
        } else if !forest.connects(e) {
            report.skipped_redundant += 1;
        } else {
            forest.apply(e);
        }
    }
    report.added_greedy = forest.complete_greedily();
    let (plan, sequence) = forest.finish();
    Ok(Decoded { plan, sequence, report })
}

/// Plan produced by greedy completion alone (the repair of an empty assignment).
pub fn greedy_plan(graph: &JoinGraph) -> (PlanTree, JoinOrderSequence) {
    let mut forest = Forest::new(graph);
    forest.complete_greedily();
    forest.finish()
}
