use std::collections::{BTreeSet, HashMap, VecDeque};
use std::sync::{Arc, Mutex, OnceLock};

use super::pathfind;
use crate::error::{Error, Result};
use crate::qubo::{Assignment, Qubo, TermClass};

/// Simulated annealer topology: an undirected, degree-bounded graph of qubits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HardwareGraph {
    adjacency: Vec<Vec<usize>>,
    rows: usize,
    cols: usize,
}

impl HardwareGraph {
    /// `rows x cols` grid where each qubit couples to its 8 surrounding cells.
    pub fn king_grid(rows: usize, cols: usize) -> Self {
        let mut adjacency = vec![Vec::new(); rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                for (dr, dc) in [(-1i64, -1i64), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)] {
                    let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                    if nr >= 0 && nc >= 0 && (nr as usize) < rows && (nc as usize) < cols {
                        adjacency[r * cols + c].push(nr as usize * cols + nc as usize);
                    }
                }
            }
        }
        Self { adjacency, rows, cols }
    }

    /// Arbitrary topology from an edge list.
    pub fn from_edges(nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adjacency = vec![BTreeSet::new(); nodes];
        for &(a, b) in edges {
            if a >= nodes || b >= nodes || a == b {
                return Err(Error::Embedding(format!("invalid hardware link ({a}, {b})")));
            }
            adjacency[a].insert(b);
            adjacency[b].insert(a);
        }
        let adjacency = adjacency.into_iter().map(|s| s.into_iter().collect()).collect();
        Ok(Self { adjacency, rows: 1, cols: nodes })
    }

    pub fn capacity(&self) -> usize {
        self.adjacency.len()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn has_link(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].contains(&b)
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn is_connected(&self) -> bool {
        let n = self.capacity();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == n
    }
}

/// Logical variable `i` is represented by the physical chain `chains[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub chains: Vec<Vec<usize>>,
    pub chain_strength: f64,
}

/// Chain strength as a multiple of the largest logical coupling.
pub const CHAIN_STRENGTH_FACTOR: f64 = 1.5;

/// Heuristic placement first, then the crossing-block clique template when
/// the grid is large enough for it.
pub fn embed(qubo: &Qubo, hw: &HardwareGraph) -> Result<Embedding> {
    let n = qubo.n();
    if n > hw.capacity() {
        return Err(Error::Embedding(format!("{n} variables exceed hardware capacity {}", hw.capacity())));
    }
    let nb = logical_neighbors(qubo);
    let Some(chains) = place_chains(nb, hw) else {
        return Err(Error::Embedding(format!("no disjoint placement for {n} variables on {} qubits", hw.capacity())));
    };
    let max_j = qubo.max_abs_coupling();
    let emb = Embedding { chains, chain_strength: CHAIN_STRENGTH_FACTOR * if max_j > 0.0 { max_j } else { 1.0 } };
    verify_embedding(qubo, hw, &emb).map_err(Error::Embedding)?;
    Ok(emb)
}

const EMBED_SEED: u64 = 0x5eed;

type PlacementKey = (Vec<Vec<usize>>, Vec<Vec<usize>>);
type Placement = Option<Vec<Vec<usize>>>;

/// The search is a pure function of the two graphs, so results (including
/// failures) are shared by every run in the process; concurrent requests for
/// the same key wait for a single search.
fn place_chains(nb: Vec<Vec<usize>>, hw: &HardwareGraph) -> Placement {
    static MEMO: OnceLock<Mutex<HashMap<PlacementKey, Arc<OnceLock<Placement>>>>> = OnceLock::new();
    let key = (nb, hw.adjacency.clone());
    let slot = {
        let mut memo = MEMO.get_or_init(Default::default).lock().unwrap_or_else(|e| e.into_inner());
        memo.entry(key.clone()).or_default().clone()
    };
    slot.get_or_init(|| pathfind::find_embedding(&key.0, hw, EMBED_SEED).or_else(|| clique_template(&key.0, hw)))
        .clone()
}

fn logical_neighbors(qubo: &Qubo) -> Vec<Vec<usize>> {
    let mut nb = vec![Vec::new(); qubo.n()];
    for &(i, j) in qubo.quadratic().keys() {
        nb[i].push(j);
        nb[j].push(i);
    }
    nb
}

/// Complete-graph layout on a king grid of 2x2 blocks. Variables are put in
/// reverse Cuthill-McKee order; variable `k` runs down block column `k` to
/// the diagonal, then right along block row `k`. In block (r, c) with r < c
/// the two chains cross on the block's diagonals and touch. Parts of the
/// L-shapes no coupling needs are left out.
fn clique_template(nb: &[Vec<usize>], hw: &HardwareGraph) -> Option<Vec<Vec<usize>>> {
    let n = nb.len();
    let (rows, cols) = hw.dims();
    if rows * cols != hw.capacity() || 2 * n > rows.min(cols) || rows < 2 {
        return None;
    }
    let order = cuthill_mckee(nb);
    let mut pos = vec![0; n];
    for (k, &v) in order.iter().enumerate() {
        pos[v] = k;
    }
    let cell = |r: usize, c: usize| r * cols + c;
    let mut chains = Vec::with_capacity(n);
    for v in 0..n {
        let k = pos[v];
        let top = nb[v].iter().map(|&u| pos[u]).filter(|&p| p < k).min().unwrap_or(k);
        let right = nb[v].iter().map(|&u| pos[u]).filter(|&p| p > k).max().unwrap_or(k);
        let mut chain = vec![cell(2 * k, 2 * k), cell(2 * k, 2 * k + 1), cell(2 * k + 1, 2 * k), cell(2 * k + 1, 2 * k + 1)];
        for r in top..k {
            chain.push(cell(2 * r, 2 * k + 1));
            chain.push(cell(2 * r + 1, 2 * k));
        }
        for c in k + 1..=right {
            chain.push(cell(2 * k, 2 * c));
            chain.push(cell(2 * k + 1, 2 * c + 1));
        }
        chain.sort_unstable();
        chains.push(chain);
    }
    Some(chains)
}

/// Breadth-first order from a minimum-degree vertex per component, reversed.
fn cuthill_mckee(nb: &[Vec<usize>]) -> Vec<usize> {
    let n = nb.len();
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let start = (0..n).filter(|&v| !seen[v]).min_by_key(|&v| (nb[v].len(), v)).expect("unvisited vertex");
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = nb[v].iter().copied().filter(|&u| !seen[u]).collect();
            next.sort_by_key(|&u| (nb[u].len(), u));
            next.dedup();
            for u in next {
                seen[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

/// Checks chain disjointness, chain connectivity and coupling coverage.
pub fn verify_embedding(qubo: &Qubo, hw: &HardwareGraph, emb: &Embedding) -> std::result::Result<(), String> {
    if emb.chains.len() != qubo.n() {
        return Err(format!("{} chains for {} variables", emb.chains.len(), qubo.n()));
    }
    if !(emb.chain_strength > 0.0) {
        return Err("chain strength must be positive".into());
    }
    let mut owner = HashMap::new();
    for (v, chain) in emb.chains.iter().enumerate() {
        if chain.is_empty() {
            return Err(format!("variable {v} has an empty chain"));
        }
        for &q in chain {
            if q >= hw.capacity() {
                return Err(format!("qubit {q} does not exist"));
            }
            if let Some(other) = owner.insert(q, v) {
                return Err(format!("qubit {q} shared by variables {other} and {v}"));
            }
        }
        let members: BTreeSet<usize> = chain.iter().copied().collect();
        let mut seen = BTreeSet::from([chain[0]]);
        let mut stack = vec![chain[0]];
        while let Some(a) = stack.pop() {
            for &b in hw.neighbors(a) {
                if members.contains(&b) && seen.insert(b) {
                    stack.push(b);
                }
            }
        }
        if seen.len() != members.len() {
            return Err(format!("chain of variable {v} is disconnected"));
        }
    }
    for &(i, j) in qubo.quadratic().keys() {
        let linked = emb.chains[i].iter().any(|&a| emb.chains[j].iter().any(|&b| hw.has_link(a, b)));
        if !linked {
            return Err(format!("coupling ({i}, {j}) has no physical link"));
        }
    }
    Ok(())
}

/// Logical QUBO expressed on physical qubits, over the used qubits only.
#[derive(Debug, Clone)]
pub struct PhysicalQubo {
    pub qubo: Qubo,
    /// Physical qubit id of each index of `qubo`.
    pub nodes: Vec<usize>,
}

impl PhysicalQubo {
    /// Spreads linear terms evenly along each chain, places each coupling on
    /// the first physical link between the two chains, and ties chain
    /// members together with `strength * (a - b)^2` along a spanning tree.
    pub fn build(logical: &Qubo, hw: &HardwareGraph, emb: &Embedding) -> Self {
        let nodes: Vec<usize> = emb.chains.iter().flatten().copied().collect();
        let index: HashMap<usize, usize> = nodes.iter().enumerate().map(|(k, &q)| (q, k)).collect();
        let mut q = Qubo::new(nodes.len().max(1));
        q.add_offset(logical.offset());
        for (&i, &h) in logical.linear() {
            let chain = &emb.chains[i];
            for node in chain {
                q.add_linear(index[node], h / chain.len() as f64, TermClass::Objective);
            }
        }
        for (&(i, j), &v) in logical.quadratic() {
            let link = emb.chains[i]
                .iter()
                .flat_map(|&a| emb.chains[j].iter().map(move |&b| (a, b)))
                .find(|&(a, b)| hw.has_link(a, b))
                .expect("verified embedding covers every coupling");
            q.add_quadratic(index[&link.0], index[&link.1], v, TermClass::Objective);
        }
        let s = emb.chain_strength;
        for chain in &emb.chains {
            let members: BTreeSet<usize> = chain.iter().copied().collect();
            let mut seen = BTreeSet::from([chain[0]]);
            let mut queue = VecDeque::from([chain[0]]);
            while let Some(a) = queue.pop_front() {
                for &b in hw.neighbors(a) {
                    if members.contains(&b) && seen.insert(b) {
                        queue.push_back(b);
                        q.add_linear(index[&a], s, TermClass::Constraint);
                        q.add_linear(index[&b], s, TermClass::Constraint);
                        q.add_quadratic(index[&a], index[&b], -2.0 * s, TermClass::Constraint);
                    }
                }
            }
        }
        Self { qubo: q, nodes }
    }

    /// Expands a sample over `qubo` into per-qubit bits (unused qubits are 0).
    pub fn to_hardware_bits(&self, sample: &Assignment, capacity: usize) -> Vec<bool> {
        let mut bits = vec![false; capacity];
        for (k, &node) in self.nodes.iter().enumerate() {
            bits[node] = sample.get(k);
        }
        bits
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainResolution {
    pub assignment: Assignment,
    pub broken_chains: usize,
}

/// Majority vote over each chain's qubits; an exact tie resolves to 0.
pub fn resolve_chains(bits: &[bool], emb: &Embedding) -> ChainResolution {
    let mut broken_chains = 0;
    let values = emb
        .chains
        .iter()
        .map(|chain| {
            let ones = chain.iter().filter(|&&q| bits[q]).count();
            if ones != 0 && ones != chain.len() {
                broken_chains += 1;
            }
            2 * ones > chain.len()
        })
        .collect::<Vec<_>>();
    ChainResolution { assignment: Assignment::from(values), broken_chains }
}

/// In-run memo of embeddings keyed by coupling structure and topology size.
#[derive(Debug, Default)]
pub struct EmbeddingCache {
    entries: HashMap<(usize, Vec<(usize, usize)>, (usize, usize), usize), Embedding>,
}

impl EmbeddingCache {
    pub fn get_or_embed(&mut self, qubo: &Qubo, hw: &HardwareGraph) -> Result<Embedding> {
        let key = (qubo.n(), qubo.quadratic().keys().copied().collect(), hw.dims(), hw.capacity());
        if let Some(e) = self.entries.get(&key) {
            let max_j = qubo.max_abs_coupling();
            let strength = CHAIN_STRENGTH_FACTOR * if max_j > 0.0 { max_j } else { 1.0 };
            return Ok(Embedding { chains: e.chains.clone(), chain_strength: strength });
        }
        let e = embed(qubo, hw)?;
        self.entries.insert(key, e.clone());
        Ok(e)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qubo::testutil::{all_assignments, random_qubo};

    #[test]
    fn king_grid_shape() {
        let hw = HardwareGraph::king_grid(8, 8);
        assert_eq!(hw.capacity(), 64);
        assert_eq!(hw.max_degree(), 8);
        assert_eq!(hw.neighbors(0).len(), 3);
        assert!(hw.is_connected());
    }

    #[test]
    fn single_coupling_gives_adjacent_singletons() {
        let mut q = Qubo::new(2);
        q.add_quadratic(0, 1, 1.0, TermClass::Objective);
        let hw = HardwareGraph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let emb = embed(&q, &hw).unwrap();
        assert_eq!(emb.chains.iter().map(Vec::len).collect::<Vec<_>>(), vec![1, 1]);
        assert!(hw.has_link(emb.chains[0][0], emb.chains[1][0]));
    }

    #[test]
    fn triangle_on_cycle_needs_a_chain() {
        let mut q = Qubo::new(3);
        q.add_quadratic(0, 1, 1.0, TermClass::Objective);
        q.add_quadratic(1, 2, 1.0, TermClass::Objective);
        q.add_quadratic(0, 2, 1.0, TermClass::Objective);
        let hw = HardwareGraph::from_edges(6, &(0..6).map(|i| (i, (i + 1) % 6)).collect::<Vec<_>>()).unwrap();
        let emb = embed(&q, &hw).unwrap();
        assert!(verify_embedding(&q, &hw, &emb).is_ok());
        assert!(emb.chains.iter().any(|c| c.len() >= 2));
    }

    #[test]
    fn verifier_catches_violations() {
        let mut q = Qubo::new(2);
        q.add_quadratic(0, 1, 1.0, TermClass::Objective);
        let hw = HardwareGraph::king_grid(3, 3);
        let ok = Embedding { chains: vec![vec![0], vec![1]], chain_strength: 1.0 };
        assert!(verify_embedding(&q, &hw, &ok).is_ok());
        let shared = Embedding { chains: vec![vec![0, 1], vec![1]], chain_strength: 1.0 };
        assert!(verify_embedding(&q, &hw, &shared).unwrap_err().contains("shared"));
        let split = Embedding { chains: vec![vec![0, 8], vec![1]], chain_strength: 1.0 };
        assert!(verify_embedding(&q, &hw, &split).unwrap_err().contains("disconnected"));
        let far = Embedding { chains: vec![vec![0], vec![8]], chain_strength: 1.0 };
        assert!(verify_embedding(&q, &hw, &far).unwrap_err().contains("no physical link"));
    }

    #[test]
    fn random_sparse_qubos_embed_on_grid() {
        let hw = HardwareGraph::king_grid(12, 12);
        for seed in 0..20 {
            let q = random_qubo(20, 0.2, seed);
            let emb = embed(&q, &hw).unwrap();
            verify_embedding(&q, &hw, &emb).unwrap();
            assert_eq!(emb.chain_strength, 1.5 * q.max_abs_coupling());
        }
    }

    #[test]
    fn majority_vote_and_ties() {
        let emb = Embedding { chains: vec![vec![0, 1, 2], vec![3, 4], vec![5]], chain_strength: 1.0 };
        let r = resolve_chains(&[true, true, false, true, false, true], &emb);
        assert_eq!(r.assignment, Assignment::from_bits(&[1, 0, 1]));
        assert_eq!(r.broken_chains, 2);
        let intact = resolve_chains(&[false, false, false, true, true, false], &emb);
        assert_eq!(intact.assignment, Assignment::from_bits(&[0, 1, 0]));
        assert_eq!(intact.broken_chains, 0);
    }

    #[test]
    fn physical_energy_matches_logical_on_intact_chains() {
        let hw = HardwareGraph::king_grid(6, 6);
        let q = random_qubo(8, 0.6, 4);
        let emb = embed(&q, &hw).unwrap();
        let phys = PhysicalQubo::build(&q, &hw, &emb);
        for logical in all_assignments(8) {
            let bits: Vec<bool> = phys.nodes.iter().map(|node| {
                let v = emb.chains.iter().position(|c| c.contains(node)).unwrap();
                logical.get(v)
            }).collect();
            let e = phys.qubo.energy(&Assignment::from(bits.clone())).unwrap();
            assert!((e - q.energy(&logical).unwrap()).abs() < 1e-9);
            let hw_bits = phys.to_hardware_bits(&Assignment::from(bits), hw.capacity());
            assert_eq!(resolve_chains(&hw_bits, &emb).assignment, logical);
        }
    }

    #[test]
    fn cache_reuses_structure() {
        let hw = HardwareGraph::king_grid(6, 6);
        let q = random_qubo(6, 0.5, 1);
        let mut cache = EmbeddingCache::default();
        let a = cache.get_or_embed(&q, &hw).unwrap();
        let mut scaled = Qubo::new(6);
        for (&(i, j), &v) in q.quadratic() {
            scaled.add_quadratic(i, j, 2.0 * v, TermClass::Objective);
        }
        let b = cache.get_or_embed(&scaled, &hw).unwrap();
        assert_eq!(cache.len(), 1);
        assert_eq!(a.chains, b.chains);
        assert_eq!(b.chain_strength, 2.0 * a.chain_strength);
    }
}

