//! Join graph, plan validity checks, and the exact DP oracle.

use std::collections::HashMap;

use crate::catalog::{Catalog, CostModel, PlanTree, QuerySpec, RelSet};
use crate::error::{Error, Result};

pub const DEFAULT_ORACLE_LIMIT: usize = 12;

/// A join predicate between two query relations (local indices, `left` has
/// the lexicographically smaller name). Parallel predicates on the same pair
/// are merged into one edge.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseEdge {
    pub left: usize,
    pub right: usize,
    pub predicates: Vec<usize>,
}

impl BaseEdge {
    pub fn relations(&self) -> RelSet {
        RelSet::single(self.left).union(RelSet::single(self.right))
    }

    pub fn touches(&self, rel: usize) -> bool {
        self.left == rel || self.right == rel
    }

    pub fn shares_relation(&self, other: &BaseEdge) -> bool {
        self.touches(other.left) || self.touches(other.right)
    }
}

#[derive(Debug, Clone)]
pub struct JoinGraph {
    model: CostModel,
    edges: Vec<BaseEdge>,
    op_links: Vec<(usize, usize)>,
}

/// Ordered base-edge ids; complete when it has `relations - 1` entries.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct JoinOrderSequence(pub Vec<usize>);

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ViolationReport {
    /// Step positions (0-based) whose edge already appeared earlier.
    pub duplicates: Vec<usize>,
    /// Step positions whose edge id is not in the graph.
    pub unknown: Vec<usize>,
    /// Step positions whose edge joins two relations already in one component.
    pub redundant: Vec<usize>,
    pub spanning_tree: bool,
}

impl ViolationReport {
    pub fn violation_count(&self) -> usize {
        self.duplicates.len() + self.unknown.len() + self.redundant.len()
    }
}

pub fn build_join_graph(query: &QuerySpec, catalog: &Catalog) -> Result<JoinGraph> {
    JoinGraph::new(CostModel::new(catalog, query)?)
}

impl JoinGraph {
    pub fn new(model: CostModel) -> Result<Self> {
        let mut by_pair: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for &(l, r, _, pi) in model.predicates() {
            let (a, b) = if model.name(l) <= model.name(r) { (l, r) } else { (r, l) };
            by_pair.entry((a, b)).or_default().push(pi);
        }
        let mut edges: Vec<BaseEdge> = by_pair
            .into_iter()
            .map(|((left, right), mut predicates)| {
                predicates.sort_unstable();
                BaseEdge { left, right, predicates }
            })
            .collect();
        edges.sort_by(|x, y| {
            (model.name(x.left), model.name(x.right)).cmp(&(model.name(y.left), model.name(y.right)))
        });
        if !model.is_connected(model.all()) {
            return Err(Error::Validation("join graph is disconnected".into()));
        }
        let mut op_links = Vec::new();
        for i in 0..edges.len() {
            for j in i + 1..edges.len() {
                if edges[i].shares_relation(&edges[j]) {
                    op_links.push((i, j));
                }
            }
        }
        Ok(Self { model, edges, op_links })
    }

    pub fn model(&self) -> &CostModel {
        &self.model
    }

    pub fn relation_count(&self) -> usize {
        self.model.len()
    }

    pub fn edges(&self) -> &[BaseEdge] {
        &self.edges
    }

    pub fn edge(&self, id: usize) -> &BaseEdge {
        &self.edges[id]
    }

    /// Links of the line graph: pairs of base edges sharing a relation.
    pub fn op_links(&self) -> &[(usize, usize)] {
        &self.op_links
    }

    pub fn edge_label(&self, id: usize) -> String {
        let e = &self.edges[id];
        format!("{}{}", self.model.name(e.left), self.model.name(e.right))
    }

    pub fn edge_by_names(&self, a: &str, b: &str) -> Option<usize> {
        let ia = self.model.index_of(a)?;
        let ib = self.model.index_of(b)?;
        self.edges.iter().position(|e| e.touches(ia) && e.touches(ib))
    }

    /// Estimated cardinality of the two relations an edge joins.
    pub fn pair_cardinality(&self, id: usize) -> f64 {
        self.model.cardinality_unchecked(self.edges[id].relations())
    }

    pub fn degree(&self, rel: usize) -> usize {
        self.edges.iter().filter(|e| e.touches(rel)).count()
    }

    /// Lowest-id edge joining a relation of `a` with one of `b`.
    pub fn connecting_edge(&self, a: RelSet, b: RelSet) -> Option<usize> {
        self.edges.iter().position(|e| {
            (a.contains(e.left) && b.contains(e.right)) || (a.contains(e.right) && b.contains(e.left))
        })
    }

    pub fn validate_plan(&self, sequence: &JoinOrderSequence) -> ViolationReport {
        validate_plan(self, sequence)
    }

    /// Post-order join sequence of a plan; each join maps to the lowest-id
    /// edge connecting its two inputs.
    pub fn plan_to_sequence(&self, plan: &PlanTree) -> Result<JoinOrderSequence> {
        let mut seq = Vec::with_capacity(self.relation_count().saturating_sub(1));
        self.walk_plan(plan, &mut seq)?;
        Ok(JoinOrderSequence(seq))
    }

    fn walk_plan(&self, plan: &PlanTree, seq: &mut Vec<usize>) -> Result<RelSet> {
        match plan {
            PlanTree::Leaf(_) => self.model.plan_set(plan),
            PlanTree::Join(l, r) => {
                let a = self.walk_plan(l, seq)?;
                let b = self.walk_plan(r, seq)?;
                let e = self.connecting_edge(a, b).ok_or_else(|| {
                    Error::InvalidPlan(format!(
                        "cross product between {} and {}",
                        self.model.describe(a),
                        self.model.describe(b)
                    ))
                })?;
                seq.push(e);
                Ok(a.union(b))
            }
        }
    }
}

pub(crate) struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    pub(crate) fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false if `a` and `b` were already joined.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[rb] = ra;
        true
    }
}

pub fn validate_plan(graph: &JoinGraph, sequence: &JoinOrderSequence) -> ViolationReport {
    let mut report = ViolationReport::default();
    let mut used = vec![false; graph.edges.len()];
    let mut sets = DisjointSets::new(graph.relation_count());
    let mut merges = 0;
    for (pos, &e) in sequence.0.iter().enumerate() {
        let Some(edge) = graph.edges.get(e) else {
            report.unknown.push(pos);
            continue;
        };
        if used[e] {
            report.duplicates.push(pos);
            continue;
        }
        used[e] = true;
        if sets.union(edge.left, edge.right) {
            merges += 1;
        } else {
            report.redundant.push(pos);
        }
    }
    report.spanning_tree =
        report.violation_count() == 0 && merges + 1 == graph.relation_count();
    report
}

/// Exact bushy, cross-product-free optimum under C_out.
pub fn dp_optimal_plan(catalog: &Catalog, query: &QuerySpec) -> Result<(PlanTree, f64)> {
    dp_optimal_plan_with_limit(catalog, query, DEFAULT_ORACLE_LIMIT)
}

pub fn dp_optimal_plan_with_limit(
    catalog: &Catalog,
    query: &QuerySpec,
    limit: usize,
) -> Result<(PlanTree, f64)> {
    let model = CostModel::new(catalog, query)?;
    dp_optimal_for_model(&model, limit)
}

struct DpEntry {
    cost: f64,
    text: String,
    split: Option<(u64, u64)>,
}

pub fn dp_optimal_for_model(model: &CostModel, limit: usize) -> Result<(PlanTree, f64)> {
    let n = model.len();
    if n > limit {
        return Err(Error::OracleLimit { relations: n, limit });
    }
    let full = model.all().0;
    let mut table: HashMap<u64, DpEntry> = HashMap::new();
    for i in 0..n {
        table.insert(1 << i, DpEntry { cost: 0.0, text: model.name(i).to_string(), split: None });
    }
    // Masks in increasing numeric order: every proper submask is visited first.
    for set in 1..=full {
        if set.count_ones() < 2 || !model.is_connected(RelSet(set)) {
            continue;
        }
        let card = model.cardinality_unchecked(RelSet(set));
        let mut best: Option<DpEntry> = None;
        let mut left = (set - 1) & set;
        while left != 0 {
            let right = set ^ left;
            if let (Some(l), Some(r)) = (table.get(&left), table.get(&right)) {
                let cost = card + l.cost + r.cost;
                let better = match &best {
                    None => true,
                    Some(b) => {
                        let tol = 1e-12 * b.cost.abs().max(1.0);
                        if cost < b.cost - tol {
                            true
                        } else if cost <= b.cost + tol {
                            let text = format!("({} {})", l.text, r.text);
                            text < b.text
                        } else {
                            false
                        }
                    }
                };
                if better {
                    best = Some(DpEntry {
                        cost,
                        text: format!("({} {})", l.text, r.text),
                        split: Some((left, right)),
                    });
                }
            }
            left = (left - 1) & set;
        }
        if let Some(b) = best {
            table.insert(set, b);
        }
    }
    let root = table
        .get(&full)
        .ok_or_else(|| Error::Validation("query is disconnected".into()))?;
    Ok((rebuild(model, &table, full), root.cost))
}

fn rebuild(model: &CostModel, table: &HashMap<u64, DpEntry>, set: u64) -> PlanTree {
    match table[&set].split {
        None => PlanTree::leaf(model.name(set.trailing_zeros() as usize)),
        Some((l, r)) => PlanTree::join(rebuild(model, table, l), rebuild(model, table, r)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{load_workload, Predicate, Relation};

    fn catalog_from(cards: &[(&str, u64)], preds: &[(&str, &str, f64)]) -> (Catalog, QuerySpec) {
        let rels = cards.iter().map(|&(n, c)| Relation { name: n.into(), cardinality: c }).collect();
        let ps: Vec<Predicate> = preds
            .iter()
            .map(|&(l, r, s)| Predicate { left: l.into(), right: r.into(), selectivity: s })
            .collect();
        let q = QuerySpec {
            id: "q".into(),
            relations: cards.iter().map(|c| c.0.to_string()).collect(),
            predicates: (0..ps.len()).collect(),
        };
        let cat = Catalog::new(rels, ps).unwrap();
        cat.validate_query(&q).unwrap();
        (cat, q)
    }

    #[test]
    fn line_graph_shapes() {
        let (c, q) = catalog_from(&[("a", 10), ("b", 10), ("c", 10)], &[("a", "b", 0.1), ("b", "c", 0.1)]);
        let g = build_join_graph(&q, &c).unwrap();
        assert_eq!(g.edges().len(), 2);
        assert_eq!(g.op_links().len(), 1);

        let (c, q) = catalog_from(
            &[("a", 10), ("b", 10), ("c", 10), ("d", 10)],
            &[("a", "b", 0.1), ("a", "c", 0.1), ("a", "d", 0.1)],
        );
        let g = build_join_graph(&q, &c).unwrap();
        assert_eq!(g.edges().len(), 3);
        assert_eq!(g.op_links(), &[(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn clique_line_graph_has_twelve_links() {
        // K4: every vertex has degree 3, so sum_v C(3,2) = 4 * 3 = 12.
        let names = ["a", "b", "c", "d"];
        let mut preds = Vec::new();
        for i in 0..4 {
            for j in i + 1..4 {
                preds.push((names[i], names[j], 0.5));
            }
        }
        let (c, q) = catalog_from(&[("a", 10), ("b", 10), ("c", 10), ("d", 10)], &preds);
        let g = build_join_graph(&q, &c).unwrap();
        assert_eq!(g.edges().len(), 6);
        assert_eq!(g.op_links().len(), 12);
    }

    #[test]
    fn edges_sorted_by_name_pair() {
        let (c, q) = catalog_from(&[("c", 10), ("b", 10), ("a", 10)], &[("c", "b", 0.1), ("b", "a", 0.1)]);
        let g = build_join_graph(&q, &c).unwrap();
        assert_eq!(g.edge_label(0), "ab");
        assert_eq!(g.edge_label(1), "bc");
    }

    #[test]
    fn parallel_predicates_merge() {
        let (c, q) = catalog_from(&[("a", 100), ("b", 100)], &[("a", "b", 0.1), ("b", "a", 0.5)]);
        let g = build_join_graph(&q, &c).unwrap();
        assert_eq!(g.edges().len(), 1);
        assert_eq!(g.edges()[0].predicates, vec![0, 1]);
        assert!((g.pair_cardinality(0) - 500.0).abs() < 1e-9);
    }

    #[test]
    fn validate_plan_examples() {
        let (c, q) = catalog_from(&[("a", 10), ("b", 10), ("c", 10)], &[("a", "b", 0.1), ("b", "c", 0.1)]);
        let g = build_join_graph(&q, &c).unwrap();
        let ok = g.validate_plan(&JoinOrderSequence(vec![0, 1]));
        assert_eq!(ok.violation_count(), 0);
        assert!(ok.spanning_tree);

        let dup = g.validate_plan(&JoinOrderSequence(vec![0, 0]));
        assert_eq!(dup.duplicates, vec![1]);
        assert!(!dup.spanning_tree);

        let unknown = g.validate_plan(&JoinOrderSequence(vec![0, 7]));
        assert_eq!(unknown.unknown, vec![1]);

        let (c, q) = catalog_from(
            &[("a", 10), ("b", 10), ("c", 10)],
            &[("a", "b", 0.1), ("a", "c", 0.1), ("b", "c", 0.1)],
        );
        let g = build_join_graph(&q, &c).unwrap();
        let ab = g.edge_by_names("a", "b").unwrap();
        let bc = g.edge_by_names("b", "c").unwrap();
        let ac = g.edge_by_names("a", "c").unwrap();
        let cyc = g.validate_plan(&JoinOrderSequence(vec![ab, bc, ac]));
        assert_eq!(cyc.redundant, vec![2]);
        assert!(!cyc.spanning_tree);
    }

    #[test]
    fn dp_two_relations() {
        let (c, q) = catalog_from(&[("a", 1000), ("b", 100)], &[("a", "b", 0.01)]);
        let (plan, cost) = dp_optimal_plan(&c, &q).unwrap();
        assert_eq!(plan.to_string(), "(a b)");
        assert_eq!(cost, 1000.0);
    }

    #[test]
    fn dp_three_chain_matches_enumeration() {
        let (c, q) = catalog_from(
            &[("a", 1000), ("b", 100), ("c", 10)],
            &[("a", "b", 0.01), ("b", "c", 0.1)],
        );
        let (plan, cost) = dp_optimal_plan(&c, &q).unwrap();
        assert_eq!(plan.to_string(), "((b c) a)");
        assert_eq!(cost, 1100.0);
    }

    #[test]
    fn dp_limit_enforced() {
        let names: Vec<String> = (0..13).map(|i| format!("r{i}")).collect();
        let rels: Vec<(&str, u64)> = names.iter().map(|n| (n.as_str(), 10)).collect();
        let preds: Vec<(&str, &str, f64)> =
            (0..12).map(|i| (names[i].as_str(), names[i + 1].as_str(), 0.1)).collect();
        let (c, q) = catalog_from(&rels, &preds);
        assert!(matches!(dp_optimal_plan(&c, &q), Err(Error::OracleLimit { relations: 13, limit: 12 })));
    }

    #[test]
    fn plan_to_sequence_post_order() {
        let (c, q) = load_workload(
            r#"{"relations":[{"name":"a","cardinality":10},{"name":"b","cardinality":10},
            {"name":"c","cardinality":10},{"name":"d","cardinality":10},{"name":"e","cardinality":10}],
            "predicates":[{"left":"a","right":"b","selectivity":0.1},{"left":"b","right":"c","selectivity":0.1},
            {"left":"c","right":"d","selectivity":0.1},{"left":"d","right":"e","selectivity":0.1}],
            "queries":[{"id":"q","relations":["a","b","c","d","e"],"predicates":[0,1,2,3]}]}"#,
        )
        .map(|(c, mut q)| (c, q.remove(0)))
        .unwrap();
        let g = build_join_graph(&q, &c).unwrap();
        let l = PlanTree::leaf;
        let plan = PlanTree::join(
            PlanTree::join(l("a"), PlanTree::join(l("b"), l("c"))),
            PlanTree::join(l("d"), l("e")),
        );
        let seq = g.plan_to_sequence(&plan).unwrap();
        let labels: Vec<String> = seq.0.iter().map(|&e| g.edge_label(e)).collect();
        assert_eq!(labels, vec!["bc", "ab", "de", "cd"]);
        assert!(g.validate_plan(&seq).spanning_tree);

        let cross = PlanTree::join(PlanTree::join(l("a"), l("c")), PlanTree::join(l("b"), PlanTree::join(l("d"), l("e"))));
        assert!(g.plan_to_sequence(&cross).is_err());
    }
}
