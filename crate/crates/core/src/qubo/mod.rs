//! Sparse QUBO representation and energy evaluation.
//!
//! Energy of a binary assignment `s`:
//! `E(s) = offset + sum_i h_i s_i + sum_{i<j} J_ij s_i s_j`.

mod encode;

pub use encode::{
    decode_and_repair, encode_join_order, greedy_plan, DecodeReport, Decoded, EncodingWeights, JoinOrderEncoding, VarMap,
};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TermClass {
    Constraint,
    Objective,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Linear(usize),
    Pair(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assignment(Vec<bool>);

impl Assignment {
    pub fn zeros(n: usize) -> Self {
        Assignment(vec![false; n])
    }

    pub fn from_bits(bits: &[u8]) -> Self {
        Assignment(bits.iter().map(|&b| b != 0).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn set(&mut self, i: usize, v: bool) {
        self.0[i] = v;
    }

    pub fn flip(&mut self, i: usize) {
        self.0[i] = !self.0[i];
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.0.iter().map(|&b| b as u8).collect()
    }
}

impl From<Vec<bool>> for Assignment {
    fn from(v: Vec<bool>) -> Self {
        Assignment(v)
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Qubo {
    n: usize,
    linear: BTreeMap<usize, f64>,
    quadratic: BTreeMap<(usize, usize), f64>,
    classes: BTreeMap<Term, TermClass>,
    offset: f64,
}

impl Qubo {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "a qubo needs at least one variable");
        Self {
            n,
            linear: BTreeMap::new(),
            quadratic: BTreeMap::new(),
            classes: BTreeMap::new(),
            offset: 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn linear(&self) -> &BTreeMap<usize, f64> {
        &self.linear
    }

    pub fn quadratic(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.quadratic
    }

    pub fn h(&self, i: usize) -> f64 {
        self.linear.get(&i).copied().unwrap_or(0.0)
    }

    pub fn j(&self, i: usize, j: usize) -> f64 {
        self.quadratic.get(&ordered(i, j)).copied().unwrap_or(0.0)
    }

    /// Class of a stored term. A term that received any constraint
    /// contribution is classed as a constraint.
    pub fn class(&self, term: Term) -> Option<TermClass> {
        self.classes.get(&term).copied()
    }

    pub fn classes(&self) -> &BTreeMap<Term, TermClass> {
        &self.classes
    }

    pub fn add_offset(&mut self, v: f64) {
        self.offset += v;
    }

    pub fn add_linear(&mut self, i: usize, v: f64, class: TermClass) {
        assert!(i < self.n, "variable {i} out of range");
        if v == 0.0 {
            return;
        }
        let slot = self.linear.entry(i).or_insert(0.0);
        *slot += v;
        if *slot == 0.0 {
            self.linear.remove(&i);
            self.classes.remove(&Term::Linear(i));
        } else {
            merge_class(&mut self.classes, Term::Linear(i), class);
        }
    }

    pub fn add_quadratic(&mut self, i: usize, j: usize, v: f64, class: TermClass) {
        assert!(i != j, "self-coupling ({i}, {i}) must be expressed as a linear term");
        assert!(i < self.n && j < self.n, "pair ({i}, {j}) out of range");
        if v == 0.0 {
            return;
        }
        let key = ordered(i, j);
        let slot = self.quadratic.entry(key).or_insert(0.0);
        *slot += v;
        if *slot == 0.0 {
            self.quadratic.remove(&key);
            self.classes.remove(&Term::Pair(key.0, key.1));
        } else {
            merge_class(&mut self.classes, Term::Pair(key.0, key.1), class);
        }
    }

    /// Adds every term of `other` (same variable count) into `self`.
    pub fn add_qubo(&mut self, other: &Qubo) {
        assert_eq!(self.n, other.n);
        self.offset += other.offset;
        for (&i, &v) in &other.linear {
            self.add_linear(i, v, other.classes[&Term::Linear(i)]);
        }
        for (&(i, j), &v) in &other.quadratic {
            self.add_quadratic(i, j, v, other.classes[&Term::Pair(i, j)]);
        }
    }

    /// Copy of this QUBO keeping only the couplings accepted by `keep`.
    pub fn filter_quadratic(&self, mut keep: impl FnMut(&(usize, usize)) -> bool) -> Qubo {
        let quadratic: BTreeMap<_, _> =
            self.quadratic.iter().filter(|(k, _)| keep(k)).map(|(k, v)| (*k, *v)).collect();
        let classes = self
            .classes
            .iter()
            .filter(|(t, _)| match t {
                Term::Linear(_) => true,
                Term::Pair(i, j) => quadratic.contains_key(&(*i, *j)),
            })
            .map(|(t, c)| (*t, *c))
            .collect();
        Qubo { n: self.n, linear: self.linear.clone(), quadratic, classes, offset: self.offset }
    }

    pub fn energy(&self, s: &Assignment) -> Result<f64> {
        if s.len() != self.n {
            return Err(Error::LengthMismatch { expected: self.n, got: s.len() });
        }
        Ok(self.energy_unchecked(s.bits()))
    }

    pub(crate) fn energy_unchecked(&self, s: &[bool]) -> f64 {
        let mut e = self.offset;
        for (&i, &h) in &self.linear {
            if s[i] {
                e += h;
            }
        }
        for (&(i, j), &v) in &self.quadratic {
            if s[i] && s[j] {
                e += v;
            }
        }
        e
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.linear
            .values()
            .chain(self.quadratic.values())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_coupling(&self) -> f64 {
        self.quadratic.values().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Row-compressed neighbour lists for fast local-field updates.
    pub fn adjacency(&self) -> Adjacency {
        let mut degree = vec![0usize; self.n];
        for &(i, j) in self.quadratic.keys() {
            degree[i] += 1;
            degree[j] += 1;
        }
        let mut offsets = Vec::with_capacity(self.n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets.clone();
        let mut neighbors = vec![(0usize, 0.0f64); offsets[self.n]];
        for (&(i, j), &v) in &self.quadratic {
            neighbors[fill[i]] = (j, v);
            fill[i] += 1;
            neighbors[fill[j]] = (i, v);
            fill[j] += 1;
        }
        let linear = (0..self.n).map(|i| self.h(i)).collect();
        Adjacency { linear, offsets, neighbors }
    }

    pub fn to_interchange(&self) -> QuboInterchange {
        QuboInterchange {
            n: self.n,
            linear: self.linear.iter().map(|(&i, &v)| (i, v)).collect(),
            quadratic: self.quadratic.iter().map(|(&(i, j), &v)| (i, j, v)).collect(),
            offset: self.offset,
        }
    }

    /// Builds a QUBO from the wire form; every term is classed as objective.
    pub fn from_interchange(wire: &QuboInterchange) -> Result<Qubo> {
        if wire.n == 0 {
            return Err(Error::Protocol("qubo must have n >= 1".into()));
        }
        let mut q = Qubo::new(wire.n);
        q.offset = wire.offset;
        for &(i, v) in &wire.linear {
            if i >= wire.n {
                return Err(Error::Protocol(format!("linear index {i} out of range")));
            }
            q.add_linear(i, v, TermClass::Objective);
        }
        for &(i, j, v) in &wire.quadratic {
            if i >= j || j >= wire.n {
                return Err(Error::Protocol(format!("invalid coupling index pair ({i}, {j})")));
            }
            q.add_quadratic(i, j, v, TermClass::Objective);
        }
        Ok(q)
    }
}

fn ordered(i: usize, j: usize) -> (usize, usize) {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

fn merge_class(classes: &mut BTreeMap<Term, TermClass>, term: Term, class: TermClass) {
    let slot = classes.entry(term).or_insert(class);
    if class == TermClass::Constraint {
        *slot = TermClass::Constraint;
    }
}

/// Sparse QUBO wire form: `{n, linear: [[i, h]], quadratic: [[i, j, J]], offset}` with `i < j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuboInterchange {
    pub n: usize,
    pub linear: Vec<(usize, f64)>,
    pub quadratic: Vec<(usize, usize, f64)>,
    pub offset: f64,
}

#[derive(Debug, Clone)]
pub struct Adjacency {
    pub linear: Vec<f64>,
    pub offsets: Vec<usize>,
    pub neighbors: Vec<(usize, f64)>,
}

impl Adjacency {
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    /// h_i + sum_j J_ij s_j for every i.
    pub fn local_fields(&self, s: &[bool]) -> Vec<f64> {
        (0..self.linear.len())
            .map(|i| {
                self.linear[i]
                    + self.neighbors(i).iter().filter(|(j, _)| s[*j]).map(|(_, v)| v).sum::<f64>()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuboMetrics {
    pub variables: usize,
    pub couplings: usize,
    pub density: f64,
}

pub fn energy(qubo: &Qubo, s: &Assignment) -> Result<f64> {
    qubo.energy(s)
}

pub fn qubo_metrics(qubo: &Qubo) -> QuboMetrics {
    let n = qubo.n();
    let couplings = qubo.quadratic().len();
    let possible = n * n.saturating_sub(1) / 2;
    let density = if possible == 0 { 0.0 } else { couplings as f64 / possible as f64 };
    QuboMetrics { variables: n, couplings, density }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Random QUBO with coefficients uniform in [-1, 1] and the given coupling density.
    pub fn random_qubo(n: usize, density: f64, seed: u64) -> Qubo {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut q = Qubo::new(n);
        for i in 0..n {
            q.add_linear(i, rng.gen_range(-1.0..1.0), TermClass::Objective);
        }
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen_bool(density) {
                    q.add_quadratic(i, j, rng.gen_range(-1.0..1.0), TermClass::Objective);
                }
            }
        }
        q.add_offset(rng.gen_range(-1.0..1.0));
        q
    }

    pub fn all_assignments(n: usize) -> impl Iterator<Item = Assignment> {
        (0u64..1 << n).map(move |m| Assignment((0..n).map(|i| m >> i & 1 == 1).collect()))
    }
}
