//! Minor-embedding search in the style of Cai, Macready and Roy: every chain
//! is a rooted tree; a variable is (re)placed by running node-weighted
//! Dijkstra from each embedded neighbour's chain, picking the root with the
//! smallest summed distance, and linking the root to every neighbour along
//! the shortest paths. Path segments that serve a single neighbour are handed
//! to that neighbour's chain. Qubits used by several chains cost
//! `base^fill`, so overlaps dominate path length; passes tear out and
//! replace chains until no qubit is shared.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::embed::HardwareGraph;

const NO_NODE: usize = usize::MAX;
const TRIES: usize = 8;
const MAX_NO_IMPROVEMENT: usize = 10;
const INNER_ROUNDS: usize = 200;
const CHAINLENGTH_PATIENCE: usize = 4;
/// Dijkstra runs (each over the whole topology) allowed before the search
/// gives up; keeps hopeless instances from taking minutes.
const WORK_LIMIT: usize = 40_000;
/// Qubits at or above this fill are never traversed.
const FILL_BOUND: u32 = 64;

/// Tree-shaped chain. `data[q] = (parent, refs)`, where `refs` counts
/// children and links held at `q`; the root is its own parent.
#[derive(Debug, Clone, Default)]
struct Chain {
    data: BTreeMap<usize, (usize, u32)>,
    /// Neighbour variable (or the chain's own label, for the root) -> node.
    links: BTreeMap<usize, usize>,
}

impl Chain {
    fn len(&self) -> usize {
        self.data.len()
    }

    fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn contains(&self, q: usize) -> bool {
        self.data.contains_key(&q)
    }

    fn bump(&mut self, q: usize, delta: i32) {
        let e = self.data.get_mut(&q).expect("node in chain");
        e.1 = (e.1 as i32 + delta) as u32;
    }

    fn link(&self, x: usize) -> Option<usize> {
        self.links.get(&x).copied()
    }

    fn set_link(&mut self, x: usize, q: usize) {
        self.links.insert(x, q);
        self.bump(q, 1);
    }

    fn drop_link(&mut self, x: usize) -> Option<usize> {
        let q = self.links.remove(&x)?;
        self.bump(q, -1);
        Some(q)
    }

    fn set_root(&mut self, label: usize, q: usize, fill: &mut [u32]) {
        self.links.insert(label, q);
        self.data.insert(q, (q, 2));
        fill[q] += 1;
    }

    fn clear(&mut self, fill: &mut [u32]) {
        for &q in self.data.keys() {
            fill[q] -= 1;
        }
        self.data.clear();
        self.links.clear();
    }

    fn add_leaf(&mut self, q: usize, parent: usize, fill: &mut [u32]) {
        self.data.insert(q, (parent, 0));
        fill[q] += 1;
        self.bump(parent, 1);
    }

    /// Removes `q` if nothing hangs off it; returns its parent, or `q` when kept.
    fn trim_leaf(&mut self, q: usize, fill: &mut [u32]) -> usize {
        let (parent, refs) = self.data[&q];
        if refs != 0 {
            return q;
        }
        fill[q] -= 1;
        self.data.remove(&q);
        self.bump(parent, -1);
        parent
    }

    fn trim_branch(&mut self, mut q: usize, fill: &mut [u32]) -> usize {
        let mut p = self.trim_leaf(q, fill);
        while p != q {
            q = p;
            p = self.trim_leaf(q, fill);
        }
        q
    }

    /// Drops every unreferenced leaf.
    fn trim_all(&mut self, fill: &mut [u32]) {
        let leaves: Vec<usize> = self.data.iter().filter(|(_, &(_, r))| r == 0).map(|(&q, _)| q).collect();
        for q in leaves {
            if self.contains(q) {
                self.trim_branch(q, fill);
            }
        }
    }

    fn nodes(&self) -> Vec<usize> {
        self.data.keys().copied().collect()
    }
}

/// Moves the part of `other`'s link path to `this` that serves only that
/// link into `this`.
fn steal(this: &mut Chain, this_label: usize, other: &mut Chain, other_label: usize, fill: &mut [u32]) {
    let (Some(mut q), Some(mut p)) = (this.drop_link(other_label), other.drop_link(this_label)) else {
        return;
    };
    loop {
        let r = other.trim_leaf(p, fill);
        if r == p {
            break;
        }
        if !this.contains(p) {
            this.add_leaf(p, q, fill);
        } else if p != q {
            this.bump(p, 1);
            this.trim_branch(q, fill);
            this.bump(p, -1);
        }
        q = p;
        p = r;
    }
    this.set_link(other_label, q);
    other.set_link(this_label, p);
}

/// Extends `this` from node `q` along `parents` until it touches `other`.
fn link_path(
    this: &mut Chain,
    this_label: usize,
    other: &mut Chain,
    other_label: usize,
    mut q: usize,
    parents: &[usize],
    fill: &mut [u32],
) {
    let mut p = parents[q];
    if p == NO_NODE {
        p = q;
    } else {
        while !other.contains(p) {
            if this.contains(p) {
                this.trim_branch(q, fill);
            } else {
                this.add_leaf(p, q, fill);
            }
            q = p;
            p = parents[p];
        }
    }
    this.set_link(other_label, q);
    other.set_link(this_label, p);
}

struct Frozen {
    chain: Chain,
    held: Vec<(usize, usize)>,
}

struct Search<'a> {
    hw: &'a HardwareGraph,
    nb: Vec<Vec<usize>>,
    chains: Vec<Chain>,
    fill: Vec<u32>,
    rng: ChaCha8Rng,
    weight: Vec<f64>,
    total: Vec<f64>,
    dist: Vec<Vec<f64>>,
    parents: Vec<Vec<usize>>,
    best: Option<(Vec<usize>, Vec<Chain>)>,
    embedded: bool,
    /// Dijkstra runs so far.
    work: usize,
}

type Stats = Vec<usize>;

/// `true` when `a` is strictly better: shorter histogram, then fewer
/// entries at the highest differing level.
fn better(a: &Stats, b: &Stats) -> bool {
    if a.len() != b.len() {
        return a.len() < b.len();
    }
    for k in (0..a.len()).rev() {
        if a[k] != b[k] {
            return a[k] < b[k];
        }
    }
    false
}

impl<'a> Search<'a> {
    fn new(nb: &[Vec<usize>], hw: &'a HardwareGraph, seed: u64) -> Self {
        let n = nb.len();
        let nq = hw.capacity();
        let mut nb: Vec<Vec<usize>> = nb.to_vec();
        for list in &mut nb {
            list.sort_unstable();
            list.dedup();
        }
        Self {
            hw,
            nb,
            chains: vec![Chain::default(); n],
            fill: vec![0; nq],
            rng: ChaCha8Rng::seed_from_u64(seed),
            weight: vec![1.0; nq],
            total: vec![0.0; nq],
            dist: vec![Vec::new(); n],
            parents: vec![Vec::new(); n],
            best: None,
            embedded: false,
            work: 0,
        }
    }

    fn n(&self) -> usize {
        self.nb.len()
    }

    /// Overfill histogram while chains overlap (index k counts qubits in
    /// k + 2 chains); chain-length histogram once they are disjoint.
    fn stats(&self) -> (bool, Stats) {
        let max_fill = self.fill.iter().copied().max().unwrap_or(0);
        if max_fill > 1 {
            let mut h = vec![0; max_fill as usize - 1];
            for &f in &self.fill {
                if f > 1 {
                    h[f as usize - 2] += 1;
                }
            }
            (false, h)
        } else {
            let longest = self.chains.iter().map(Chain::len).max().unwrap_or(0);
            let mut h = vec![0; longest + 1];
            for c in &self.chains {
                h[c.len()] += 1;
            }
            (true, h)
        }
    }

    fn check_improvement(&mut self) -> bool {
        let (embedded, stats) = self.stats();
        if self.embedded && !embedded {
            return false;
        }
        let improved = match &self.best {
            None => true,
            Some(_) if embedded && !self.embedded => true,
            Some((b, _)) => better(&stats, b),
        };
        if improved {
            self.embedded = embedded;
            self.best = Some((stats, self.chains.clone()));
        }
        improved
    }

    fn restore_best(&mut self) {
        if let Some((_, chains)) = &self.best {
            self.chains = chains.clone();
            self.fill.iter_mut().for_each(|f| *f = 0);
            for c in &self.chains {
                for &q in c.data.keys() {
                    self.fill[q] += 1;
                }
            }
        }
    }

    fn compute_weights(&mut self) {
        let max_fill = self.fill.iter().copied().max().unwrap_or(0).max(1);
        let base = 2f64.powf((900.0 / max_fill as f64).min(30.0));
        for (w, &f) in self.weight.iter_mut().zip(&self.fill) {
            *w = if f >= FILL_BOUND { f64::INFINITY } else { base.powi(f as i32) };
        }
    }

    /// Node-weighted Dijkstra out of `v`'s chain with random tie-breaking.
    fn distances_from(&mut self, v: usize, bound: u32) {
        self.work += 1;
        let nq = self.hw.capacity();
        let tie: Vec<u32> = (0..nq).map(|_| self.rng.gen()).collect();
        let mut dist = vec![f64::INFINITY; nq];
        let mut parent = vec![NO_NODE; nq];
        let mut done = vec![false; nq];
        let mut heap = BinaryHeap::new();
        for &q in self.chains[v].data.keys() {
            dist[q] = 0.0;
            heap.push(Reverse((Key(0.0), tie[q], q)));
        }
        while let Some(Reverse((Key(d), _, q))) = heap.pop() {
            if done[q] {
                continue;
            }
            done[q] = true;
            for &p in self.hw.neighbors(q) {
                if done[p] || self.fill[p] >= bound {
                    continue;
                }
                let nd = d + self.weight[p];
                if nd < dist[p] {
                    dist[p] = nd;
                    parent[p] = q;
                    heap.push(Reverse((Key(nd), tie[p], p)));
                }
            }
        }
        self.dist[v] = dist;
        self.parents[v] = parent;
    }

    fn prepare_root_distances(&mut self, u: usize, bound: u32) {
        self.compute_weights();
        let nq = self.hw.capacity();
        self.total.iter_mut().for_each(|t| *t = 0.0);
        let mut any = false;
        for k in 0..self.nb[u].len() {
            let v = self.nb[u][k];
            if self.chains[v].is_empty() {
                continue;
            }
            any = true;
            self.distances_from(v, bound);
            for q in 0..nq {
                let d = self.dist[v][q];
                self.total[q] = if d.is_finite() && self.fill[q] < bound { self.total[q] + d } else { f64::INFINITY };
            }
            for &q in self.chains[v].data.keys() {
                if self.fill[q] < bound {
                    self.total[q] += self.weight[q];
                } else {
                    self.total[q] = f64::INFINITY;
                }
            }
        }
        if !any {
            for q in 0..nq {
                self.total[q] = if self.fill[q] < bound { self.weight[q] } else { f64::INFINITY };
            }
        }
    }

    /// Places `u` (whose chain must be empty); false when no root is reachable.
    fn find_chain(&mut self, u: usize, bound: u32) -> bool {
        self.nb[u].shuffle(&mut self.rng);
        self.prepare_root_distances(u, bound);
        let min = self.total.iter().copied().fold(f64::INFINITY, f64::min);
        if !min.is_finite() {
            return false;
        }
        let roots: Vec<usize> = (0..self.total.len()).filter(|&q| self.total[q] == min).collect();
        let root = roots[self.rng.gen_range(0..roots.len())];
        self.construct(u, root);
        self.flip_back(u);
        true
    }

    fn construct(&mut self, u: usize, root: usize) {
        let mut chain = std::mem::take(&mut self.chains[u]);
        chain.set_root(u, root, &mut self.fill);
        for k in 0..self.nb[u].len() {
            let v = self.nb[u][k];
            if self.chains[v].is_empty() {
                continue;
            }
            let dist = &self.dist[v];
            let mut qv = root;
            let mut dq = dist[root];
            for (&p, &(_, refs)) in &chain.data {
                if refs > 1 && dist[p] < dq {
                    dq = dist[p];
                    qv = p;
                }
            }
            let mut other = std::mem::take(&mut self.chains[v]);
            link_path(&mut chain, u, &mut other, v, qv, &self.parents[v], &mut self.fill);
            self.chains[v] = other;
        }
        self.chains[u] = chain;
    }

    fn flip_back(&mut self, u: usize) {
        for k in 0..self.nb[u].len() {
            let v = self.nb[u][k];
            if self.chains[v].is_empty() {
                continue;
            }
            let mut this = std::mem::take(&mut self.chains[v]);
            let mut other = std::mem::take(&mut self.chains[u]);
            steal(&mut this, v, &mut other, u, &mut self.fill);
            self.chains[v] = this;
            self.chains[u] = other;
        }
    }

    fn steal_all(&mut self, u: usize) {
        for k in 0..self.nb[u].len() {
            let v = self.nb[u][k];
            if self.chains[u].link(v).is_none() || self.chains[v].link(u).is_none() {
                continue;
            }
            let mut this = std::mem::take(&mut self.chains[u]);
            let mut other = std::mem::take(&mut self.chains[v]);
            steal(&mut this, u, &mut other, v, &mut self.fill);
            self.chains[u] = this;
            self.chains[v] = other;
        }
    }

    fn tear_out(&mut self, u: usize) {
        self.chains[u].clear(&mut self.fill);
        for k in 0..self.nb[u].len() {
            let v = self.nb[u][k];
            self.chains[v].drop_link(u);
        }
    }

    fn freeze_out(&mut self, u: usize) -> Frozen {
        let mut held = Vec::new();
        for k in 0..self.nb[u].len() {
            let v = self.nb[u][k];
            if let Some(q) = self.chains[v].drop_link(u) {
                held.push((v, q));
            }
        }
        let chain = std::mem::take(&mut self.chains[u]);
        for &q in chain.data.keys() {
            self.fill[q] -= 1;
        }
        Frozen { chain, held }
    }

    fn thaw_back(&mut self, u: usize, frozen: Frozen) {
        for &q in frozen.chain.data.keys() {
            self.fill[q] += 1;
        }
        self.chains[u] = frozen.chain;
        for (v, q) in frozen.held {
            self.chains[v].set_link(u, q);
        }
    }

    /// Priority-first order: next is the variable with the most already
    /// ordered neighbours; components start at random.
    fn var_order(&mut self) -> Vec<usize> {
        let n = self.n();
        let key: Vec<u32> = (0..n).map(|_| self.rng.gen()).collect();
        let mut placed = vec![false; n];
        let mut score = vec![0usize; n];
        let mut order = Vec::with_capacity(n);
        while order.len() < n {
            let v = (0..n)
                .filter(|&v| !placed[v])
                .max_by_key(|&v| (score[v], key[v]))
                .expect("unplaced variable");
            placed[v] = true;
            order.push(v);
            for &u in &self.nb[v] {
                score[u] += 1;
            }
        }
        order
    }

    fn initialize(&mut self) -> bool {
        for c in &mut self.chains {
            c.clear(&mut self.fill);
        }
        self.best = None;
        self.embedded = false;
        for u in self.var_order() {
            if !self.find_chain(u, FILL_BOUND) {
                return false;
            }
        }
        self.check_improvement();
        true
    }

    /// Returns Some(improved) or None when a chain could not be placed.
    fn improve_pass(&mut self) -> Option<bool> {
        let mut improved = false;
        for u in self.var_order() {
            self.tear_out(u);
            if !self.find_chain(u, FILL_BOUND) {
                return None;
            }
            improved |= self.check_improvement();
            if self.embedded {
                break;
            }
        }
        Some(improved)
    }

    /// Re-places every chain under a fill bound equal to the worst fill it
    /// currently sees, so no chain gets worse; failed placements are undone.
    fn pushdown_pass(&mut self, pushback: &mut usize) -> Option<bool> {
        let n = self.n();
        let mut improved = false;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.rng);
        for u in order {
            if *pushback < n {
                self.steal_all(u);
                let max_fill = self.chains[u].data.keys().map(|&q| self.fill[q]).max().unwrap_or(0);
                let frozen = self.freeze_out(u);
                if !self.find_chain(u, max_fill) {
                    *pushback += 3;
                    self.thaw_back(u, frozen);
                    self.flip_back(u);
                }
            } else {
                self.steal_all(u);
                self.tear_out(u);
                if !self.find_chain(u, FILL_BOUND) {
                    return None;
                }
            }
            improved |= self.check_improvement();
            if self.embedded {
                break;
            }
        }
        if !improved {
            *pushback += (2 * n) / INNER_ROUNDS.max(1);
        }
        Some(improved)
    }

    /// Disjoint-only re-placement of each chain, kept when the total chain
    /// length does not grow.
    fn shorten_chains(&mut self) {
        let mut patience = CHAINLENGTH_PATIENCE;
        while patience > 0 {
            let before = self.total_len();
            let mut order: Vec<usize> = (0..self.n()).collect();
            order.shuffle(&mut self.rng);
            for u in order {
                let snapshot = (self.chains.clone(), self.fill.clone());
                let old = self.total_len();
                self.steal_all(u);
                self.freeze_out(u);
                let placed = self.find_chain(u, 1);
                if !placed || self.total_len() > old {
                    (self.chains, self.fill) = snapshot;
                }
            }
            if self.total_len() < before {
                patience = CHAINLENGTH_PATIENCE;
            } else {
                patience -= 1;
            }
        }
    }

    /// Chain sizes after dropping unreferenced leaves.
    fn total_len(&mut self) -> usize {
        for c in &mut self.chains {
            c.trim_all(&mut self.fill);
        }
        self.chains.iter().map(Chain::len).sum()
    }

    fn run(&mut self) -> Option<Vec<Vec<usize>>> {
        for _ in 0..TRIES {
            if self.work >= WORK_LIMIT {
                break;
            }
            if !self.initialize() {
                continue;
            }
            let mut patience = MAX_NO_IMPROVEMENT;
            let mut pushback = 0;
            let mut rounds = 0;
            while !self.embedded && patience > 0 && rounds < INNER_ROUNDS && self.work < WORK_LIMIT {
                rounds += 1;
                let r = if pushback < self.n() {
                    self.pushdown_pass(&mut pushback)
                } else {
                    pushback -= 1;
                    self.improve_pass()
                };
                match r {
                    Some(true) => {
                        patience = MAX_NO_IMPROVEMENT;
                        pushback = 0;
                    }
                    Some(false) => patience -= 1,
                    None => {
                        self.restore_best();
                        patience -= 1;
                    }
                }
            }
            if self.embedded {
                self.restore_best();
                self.shorten_chains();
                for c in &mut self.chains {
                    c.trim_all(&mut self.fill);
                }
                if self.fill.iter().all(|&f| f <= 1) {
                    return Some(self.chains.iter().map(Chain::nodes).collect());
                }
            }
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Disjoint connected chains for the logical graph `nb`, or `None` when the
/// search gives up.
pub(crate) fn find_embedding(nb: &[Vec<usize>], hw: &HardwareGraph, seed: u64) -> Option<Vec<Vec<usize>>> {
    if nb.is_empty() {
        return Some(Vec::new());
    }
    Search::new(nb, hw, seed).run()
}
