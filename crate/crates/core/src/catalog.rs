//! Workload ingestion and the cardinality cost model.
//!
//! A workload document is JSON with three top-level lists:
//!
//! ```json
//! {
//!   "relations":  [{"name": "a", "cardinality": 1000}, ...],
//!   "predicates": [{"left": "a", "right": "b", "selectivity": 0.01}, ...],
//!   "queries":    [{"id": "q1", "relations": ["a", "b"], "predicates": [0]}, ...]
//! }
//! ```
//!
//! Cardinalities follow the independence model: the size of a connected
//! relation set is the product of its base cardinalities and the
//! selectivities of every predicate internal to the set, clamped at 1.
//! Plan cost is C_out, the sum of all intermediate result sizes.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum number of relations in a single query (relation sets are `u64` masks).
pub const MAX_QUERY_RELATIONS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Relation {
    pub name: String,
    pub cardinality: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Predicate {
    pub left: String,
    pub right: String,
    pub selectivity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    relations: Vec<Relation>,
    predicates: Vec<Predicate>,
    by_name: HashMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuerySpec {
    pub id: String,
    pub relations: Vec<String>,
    pub predicates: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorkloadDoc {
    relations: Vec<Relation>,
    predicates: Vec<Predicate>,
    #[serde(default)]
    queries: Vec<QuerySpec>,
}

impl Catalog {
    pub fn new(relations: Vec<Relation>, predicates: Vec<Predicate>) -> Result<Self> {
        let mut by_name = HashMap::with_capacity(relations.len());
        for (i, r) in relations.iter().enumerate() {
            if r.name.is_empty() || !r.name.chars().all(|c| c.is_alphanumeric() || c == '_') {
                return Err(Error::Validation(format!(
                    "relation name `{}` must be a non-empty identifier",
                    r.name
                )));
            }
            if r.cardinality == 0 {
                return Err(Error::Validation(format!(
                    "relation `{}` has cardinality 0",
                    r.name
                )));
            }
            if by_name.insert(r.name.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate relation `{}`", r.name)));
            }
        }
        for (i, p) in predicates.iter().enumerate() {
            for side in [&p.left, &p.right] {
                if !by_name.contains_key(side) {
                    return Err(Error::Validation(format!(
                        "predicate {i} references unknown relation `{side}`"
                    )));
                }
            }
            if p.left == p.right {
                return Err(Error::Validation(format!(
                    "predicate {i} joins `{}` with itself",
                    p.left
                )));
            }
            if !(p.selectivity > 0.0 && p.selectivity <= 1.0) {
                return Err(Error::Validation(format!(
                    "predicate {i} selectivity {} outside (0, 1]",
                    p.selectivity
                )));
            }
        }
        Ok(Self { relations, predicates, by_name })
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn predicates(&self) -> &[Predicate] {
        &self.predicates
    }

    pub fn relation(&self, name: &str) -> Option<&Relation> {
        self.by_name.get(name).map(|&i| &self.relations[i])
    }

    /// Checks that `query` is well-formed against this catalog.
    pub fn validate_query(&self, query: &QuerySpec) -> Result<()> {
        let q = &query.id;
        if query.relations.len() < 2 {
            return Err(Error::Validation(format!("query `{q}` needs at least 2 relations")));
        }
        if query.relations.len() > MAX_QUERY_RELATIONS {
            return Err(Error::Validation(format!(
                "query `{q}` has {} relations, limit is {MAX_QUERY_RELATIONS}",
                query.relations.len()
            )));
        }
        let mut seen = HashSet::new();
        for r in &query.relations {
            if self.relation(r).is_none() {
                return Err(Error::Validation(format!("query `{q}` references unknown relation `{r}`")));
            }
            if !seen.insert(r.as_str()) {
                return Err(Error::Validation(format!("query `{q}` lists `{r}` twice")));
            }
        }
        let mut seen_pred = HashSet::new();
        for &pi in &query.predicates {
            let p = self.predicates.get(pi).ok_or_else(|| {
                Error::Validation(format!("query `{q}` references unknown predicate {pi}"))
            })?;
            if !seen_pred.insert(pi) {
                return Err(Error::Validation(format!("query `{q}` lists predicate {pi} twice")));
            }
            if !seen.contains(p.left.as_str()) || !seen.contains(p.right.as_str()) {
                return Err(Error::Validation(format!(
                    "query `{q}` predicate {pi} ({}, {}) is not internal to the query",
                    p.left, p.right
                )));
            }
        }
        let model = CostModel::new_unchecked(self, query);
        if !model.is_connected(model.all()) {
            return Err(Error::Validation(format!(
                "query `{q}` is disconnected (cross products are not allowed)"
            )));
        }
        Ok(())
    }
}

/// Parses and validates a workload document.
pub fn load_workload(text: &str) -> Result<(Catalog, Vec<QuerySpec>)> {
    let doc: WorkloadDoc = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let catalog = Catalog::new(doc.relations, doc.predicates)?;
    let mut ids = HashSet::new();
    for q in &doc.queries {
        if !ids.insert(q.id.as_str()) {
            return Err(Error::Validation(format!("duplicate query id `{}`", q.id)));
        }
        catalog.validate_query(q)?;
    }
    Ok((catalog, doc.queries))
}

/// Canonical serialization of a workload: pretty JSON, fields in schema order.
pub fn serialize_workload(catalog: &Catalog, queries: &[QuerySpec]) -> String {
    let doc = WorkloadDoc {
        relations: catalog.relations.clone(),
        predicates: catalog.predicates.clone(),
        queries: queries.to_vec(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("workload is always serializable");
    s.push('\n');
    s
}

/// A set of query-local relation indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct RelSet(pub u64);

impl RelSet {
    pub fn single(i: usize) -> Self {
        RelSet(1 << i)
    }
    pub fn union(self, other: RelSet) -> RelSet {
        RelSet(self.0 | other.0)
    }
    pub fn contains(self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }
    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
    pub fn is_disjoint(self, other: RelSet) -> bool {
        self.0 & other.0 == 0
    }
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let i = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(i)
            }
        })
    }
}

/// Query-local view of the catalog used for all cardinality arithmetic.
#[derive(Debug, Clone)]
pub struct CostModel {
    names: Vec<String>,
    cards: Vec<f64>,
    /// (left, right, selectivity, catalog predicate index), local indices.
    preds: Vec<(usize, usize, f64, usize)>,
    adjacency: Vec<u64>,
}

impl CostModel {
    pub fn new(catalog: &Catalog, query: &QuerySpec) -> Result<Self> {
        catalog.validate_query(query)?;
        Ok(Self::new_unchecked(catalog, query))
    }

    fn new_unchecked(catalog: &Catalog, query: &QuerySpec) -> Self {
        let local: HashMap<&str, usize> = query
            .relations
            .iter()
            .enumerate()
            .map(|(i, r)| (r.as_str(), i))
            .collect();
        let cards = query
            .relations
            .iter()
            .map(|r| catalog.relation(r).map_or(1.0, |rel| rel.cardinality as f64))
            .collect();
        let mut adjacency = vec![0u64; query.relations.len()];
        let mut preds = Vec::with_capacity(query.predicates.len());
        for &pi in &query.predicates {
            let Some(p) = catalog.predicates.get(pi) else { continue };
            let (Some(&l), Some(&r)) = (local.get(p.left.as_str()), local.get(p.right.as_str())) else {
                continue;
            };
            adjacency[l] |= 1 << r;
            adjacency[r] |= 1 << l;
            preds.push((l, r, p.selectivity, pi));
        }
        Self { names: query.relations.clone(), cards, preds, adjacency }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn base_cardinality(&self, i: usize) -> f64 {
        self.cards[i]
    }

    /// Local predicates as (left, right, selectivity, catalog index).
    pub fn predicates(&self) -> &[(usize, usize, f64, usize)] {
        &self.preds
    }

    pub fn all(&self) -> RelSet {
        if self.names.len() == 64 {
            RelSet(u64::MAX)
        } else {
            RelSet((1u64 << self.names.len()) - 1)
        }
    }

    pub fn neighbors(&self, i: usize) -> RelSet {
        RelSet(self.adjacency[i])
    }

    pub fn set_of(&self, names: &[&str]) -> Result<RelSet> {
        let mut s = RelSet::default();
        for n in names {
            let i = self.index_of(n).ok_or_else(|| {
                Error::Validation(format!("relation `{n}` is not part of the query"))
            })?;
            s = s.union(RelSet::single(i));
        }
        Ok(s)
    }

    pub fn is_connected(&self, set: RelSet) -> bool {
        let Some(start) = set.iter().next() else { return false };
        let mut seen = RelSet::single(start);
        let mut frontier = seen;
        while !frontier.is_empty() {
            let mut next = 0u64;
            for i in frontier.iter() {
                next |= self.adjacency[i];
            }
            let next = RelSet(next & set.0 & !seen.0);
            seen = seen.union(next);
            frontier = next;
        }
        seen == set
    }

    /// True if some predicate joins a relation of `a` with one of `b`.
    pub fn joinable(&self, a: RelSet, b: RelSet) -> bool {
        a.iter().any(|i| self.adjacency[i] & b.0 != 0)
    }

    /// Independence-model cardinality without the connectivity check.
    pub fn cardinality_unchecked(&self, set: RelSet) -> f64 {
        let mut card = 1.0;
        for i in set.iter() {
            card *= self.cards[i];
        }
        for &(l, r, sel, _) in &self.preds {
            if set.contains(l) && set.contains(r) {
                card *= sel;
            }
        }
        card.max(1.0)
    }

    pub fn cardinality(&self, set: RelSet) -> Result<f64> {
        if set.0 & !self.all().0 != 0 || set.is_empty() {
            return Err(Error::Validation(format!(
                "relation set {:#x} is not a non-empty subset of the query",
                set.0
            )));
        }
        if !self.is_connected(set) {
            return Err(Error::Disconnected(self.describe(set)));
        }
        Ok(self.cardinality_unchecked(set))
    }

    /// C_out cost of a plan: the sum of intermediate cardinalities.
    pub fn plan_cost(&self, plan: &PlanTree) -> Result<f64> {
        let root = self.plan_set(plan)?;
        if root != self.all() {
            return Err(Error::InvalidPlan(format!(
                "plan covers {} but the query has {}",
                self.describe(root),
                self.describe(self.all())
            )));
        }
        let mut total = 0.0;
        self.accumulate_cost(plan, &mut total)?;
        Ok(total)
    }

    fn accumulate_cost(&self, plan: &PlanTree, total: &mut f64) -> Result<RelSet> {
        match plan {
            PlanTree::Leaf(name) => Ok(RelSet::single(self.index_of(name).expect("checked by plan_set"))),
            PlanTree::Join(l, r) => {
                let set = self.accumulate_cost(l, total)?.union(self.accumulate_cost(r, total)?);
                *total += self.cardinality(set)?;
                Ok(set)
            }
        }
    }

    /// Relation set covered by `plan`, rejecting unknown or repeated leaves.
    pub fn plan_set(&self, plan: &PlanTree) -> Result<RelSet> {
        match plan {
            PlanTree::Leaf(name) => self
                .index_of(name)
                .map(RelSet::single)
                .ok_or_else(|| Error::InvalidPlan(format!("leaf `{name}` is not in the query"))),
            PlanTree::Join(l, r) => {
                let a = self.plan_set(l)?;
                let b = self.plan_set(r)?;
                if !a.is_disjoint(b) {
                    return Err(Error::InvalidPlan(format!(
                        "relations {} appear more than once",
                        self.describe(RelSet(a.0 & b.0))
                    )));
                }
                Ok(a.union(b))
            }
        }
    }

    pub fn describe(&self, set: RelSet) -> String {
        let names: Vec<&str> = set.iter().filter(|&i| i < self.names.len()).map(|i| self.name(i)).collect();
        format!("{{{}}}", names.join(", "))
    }
}

pub fn estimate_cardinality(catalog: &Catalog, query: &QuerySpec, subset: &[&str]) -> Result<f64> {
    let model = CostModel::new(catalog, query)?;
    let set = model.set_of(subset)?;
    model.cardinality(set)
}

pub fn plan_cost(catalog: &Catalog, query: &QuerySpec, plan: &PlanTree) -> Result<f64> {
    CostModel::new(catalog, query)?.plan_cost(plan)
}

/// Binary join tree. Child order is significant.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PlanTree {
    Leaf(String),
    Join(Box<PlanTree>, Box<PlanTree>),
}

impl PlanTree {
    pub fn leaf(name: impl Into<String>) -> Self {
        PlanTree::Leaf(name.into())
    }

    pub fn join(left: PlanTree, right: PlanTree) -> Self {
        PlanTree::Join(Box::new(left), Box::new(right))
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, PlanTree::Leaf(_))
    }

    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            PlanTree::Leaf(n) => out.push(n),
            PlanTree::Join(l, r) => {
                l.collect_leaves(out);
                r.collect_leaves(out);
            }
        }
    }

    pub fn join_count(&self) -> usize {
        match self {
            PlanTree::Leaf(_) => 0,
            PlanTree::Join(l, r) => 1 + l.join_count() + r.join_count(),
        }
    }
}

/// Canonical text: leaves by name, joins as `(left right)`.
impl fmt::Display for PlanTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanTree::Leaf(n) => f.write_str(n),
            PlanTree::Join(l, r) => write!(f, "({l} {r})"),
        }
    }
}
