use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::catalog::RelSet;
use crate::error::{Error, Result};
use crate::joingraph::JoinGraph;
use crate::qubo::{Assignment, Qubo, Term, TermClass, VarMap};

/// Fraction of `max_vars` each part must fit into once splitting starts.
pub const PART_FILL: f64 = 0.8;

/// One subproblem: a set of relations and the variables of every join edge
/// touching it.
#[derive(Debug, Clone)]
pub struct Part {
    pub relations: RelSet,
    pub edges: Vec<usize>,
    /// Owned variables (global ids, ascending); local index = position.
    pub vars: Vec<usize>,
    /// Foreign variables referenced by cross-part terms; local index = vars.len() + position.
    pub halo: Vec<usize>,
    /// Sub-QUBO over `vars` followed by `halo`.
    pub qubo: Qubo,
    pub cost_estimate: f64,
}

impl Part {
    pub fn local_of(&self, global: usize) -> Option<usize> {
        self.vars
            .binary_search(&global)
            .ok()
            .or_else(|| self.halo.binary_search(&global).ok().map(|k| self.vars.len() + k))
    }

    fn global_of(&self, local: usize) -> usize {
        if local < self.vars.len() {
            self.vars[local]
        } else {
            self.halo[local - self.vars.len()]
        }
    }

    /// Sub-QUBO over the owned variables only, with halo variables fixed to
    /// their values in `state` and folded into linear terms and the offset.
    pub fn clamped(&self, state: &Assignment) -> Qubo {
        let own = self.vars.len();
        let value = |local: usize| state.get(self.global_of(local));
        let mut q = Qubo::new(own);
        q.add_offset(self.qubo.offset());
        for (&i, &h) in self.qubo.linear() {
            let class = self.qubo.class(Term::Linear(i)).unwrap_or(TermClass::Objective);
            if i < own {
                q.add_linear(i, h, class);
            } else if value(i) {
                q.add_offset(h);
            }
        }
        for (&(i, j), &v) in self.qubo.quadratic() {
            let class = self.qubo.class(Term::Pair(i, j)).unwrap_or(TermClass::Objective);
            match (i < own, j < own) {
                (true, true) => q.add_quadratic(i, j, v, class),
                (true, false) if value(j) => q.add_linear(i, v, class),
                (false, true) if value(i) => q.add_linear(j, v, class),
                (false, false) if value(i) && value(j) => q.add_offset(v),
                _ => {}
            }
        }
        q
    }
}

#[derive(Debug, Clone)]
pub struct Partitioning {
    pub n: usize,
    pub parts: Vec<Part>,
    /// Variables owned by more than one part (the columns of cut edges).
    pub shared: BTreeSet<usize>,
    pub cut_edges: Vec<usize>,
}

impl Partitioning {
    /// Parts owning each variable.
    pub fn owners(&self) -> Vec<Vec<usize>> {
        let mut owners = vec![Vec::new(); self.n];
        for (p, part) in self.parts.iter().enumerate() {
            for &v in &part.vars {
                owners[v].push(p);
            }
        }
        owners
    }

    /// Sum of every part's sub-QUBO mapped back to global indices.
    pub fn reconstruct(&self) -> Qubo {
        let mut q = Qubo::new(self.n);
        for part in &self.parts {
            q.add_offset(part.qubo.offset());
            for (&i, &h) in part.qubo.linear() {
                q.add_linear(part.global_of(i), h, part.qubo.class(Term::Linear(i)).unwrap());
            }
            for (&(i, j), &v) in part.qubo.quadratic() {
                q.add_quadratic(part.global_of(i), part.global_of(j), v, part.qubo.class(Term::Pair(i, j)).unwrap());
            }
        }
        q
    }
}

/// Edges with at least one endpoint in `rels`.
fn part_edges(graph: &JoinGraph, rels: RelSet) -> Vec<usize> {
    (0..graph.edges().len()).filter(|&e| !graph.edge(e).relations().is_disjoint(rels)).collect()
}

fn part_var_count(graph: &JoinGraph, rels: RelSet, steps: usize) -> usize {
    part_edges(graph, rels).len() * steps
}

/// Balanced two-way split of `rels` minimizing cut edges: Kernighan-Lin
/// passes from a BFS-grown start at every vertex, best result kept.
pub fn kl_bisect(graph: &JoinGraph, rels: RelSet) -> (RelSet, RelSet) {
    let verts: Vec<usize> = rels.iter().collect();
    let n = verts.len();
    assert!(n >= 2, "cannot bisect fewer than two relations");
    let index: BTreeMap<usize, usize> = verts.iter().enumerate().map(|(k, &v)| (v, k)).collect();
    let mut w = vec![vec![0i64; n]; n];
    for e in graph.edges() {
        if let (Some(&a), Some(&b)) = (index.get(&e.left), index.get(&e.right)) {
            w[a][b] += 1;
            w[b][a] += 1;
        }
    }
    let half = n / 2;
    let cut = |side: &[bool]| -> i64 {
        let mut c = 0;
        for a in 0..n {
            for b in a + 1..n {
                if side[a] != side[b] {
                    c += w[a][b];
                }
            }
        }
        c
    };

    let mut best: Option<(i64, Vec<bool>)> = None;
    for start in 0..n {
        let mut side = vec![false; n];
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        let mut taken = 0;
        while taken < half {
            let u = match queue.pop_front() {
                Some(u) => u,
                None => {
                    let u = (0..n).find(|&k| !seen[k]).expect("enough vertices");
                    seen[u] = true;
                    u
                }
            };
            side[u] = true;
            taken += 1;
            for v in 0..n {
                if w[u][v] > 0 && !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        kl_refine(&w, &mut side);
        let c = cut(&side);
        if best.as_ref().is_none_or(|(bc, _)| c < *bc) {
            best = Some((c, side));
        }
    }
    let (_, side) = best.expect("at least one start");
    let mut a = RelSet(0);
    let mut b = RelSet(0);
    for (k, &v) in verts.iter().enumerate() {
        if side[k] {
            a = a.union(RelSet::single(v));
        } else {
            b = b.union(RelSet::single(v));
        }
    }
    (a, b)
}

fn kl_refine(w: &[Vec<i64>], side: &mut [bool]) {
    let n = side.len();
    loop {
        let mut locked = vec![false; n];
        let mut trial = side.to_vec();
        let mut swaps = Vec::new();
        let mut gains = Vec::new();
        loop {
            let d: Vec<i64> = (0..n)
                .map(|a| (0..n).map(|b| if trial[a] != trial[b] { w[a][b] } else { -w[a][b] }).sum())
                .collect();
            let mut pick: Option<(i64, usize, usize)> = None;
            for a in (0..n).filter(|&a| trial[a] && !locked[a]) {
                for b in (0..n).filter(|&b| !trial[b] && !locked[b]) {
                    let g = d[a] + d[b] - 2 * w[a][b];
                    if pick.is_none_or(|(pg, _, _)| g > pg) {
                        pick = Some((g, a, b));
                    }
                }
            }
            let Some((g, a, b)) = pick else { break };
            trial[a] = false;
            trial[b] = true;
            locked[a] = true;
            locked[b] = true;
            swaps.push((a, b));
            gains.push(g);
        }
        let mut acc = 0;
        let mut best_k = 0;
        let mut best_acc = 0;
        for (k, g) in gains.iter().enumerate() {
            acc += g;
            if acc > best_acc {
                best_acc = acc;
                best_k = k + 1;
            }
        }
        if best_k == 0 {
            return;
        }
        for &(a, b) in &swaps[..best_k] {
            side[a] = false;
            side[b] = true;
        }
    }
}

/// Recursively bisects the join graph until every part's variable count
/// fits in `PART_FILL * max_vars`, then splits the QUBO terms among parts.
/// A graph already within `max_vars` stays whole.
pub fn partition_join_graph(graph: &JoinGraph, varmap: &VarMap, qubo: &Qubo, max_vars: usize) -> Result<Partitioning> {
    let steps = varmap.steps();
    if steps > max_vars {
        return Err(Error::Partition(format!("one edge needs {steps} variables, more than max_vars {max_vars}")));
    }
    let all = graph.model().all();
    let mut parts = vec![all];
    if varmap.len() > max_vars {
        let limit = PART_FILL * max_vars as f64;
        let mut k = 0;
        while k < parts.len() {
            let rels = parts[k];
            if part_var_count(graph, rels, steps) as f64 <= limit {
                k += 1;
                continue;
            }
            if rels.len() < 2 {
                return Err(Error::Partition(format!(
                    "part {} needs {} variables and cannot be split further",
                    graph.model().describe(rels),
                    part_var_count(graph, rels, steps)
                )));
            }
            let (a, b) = kl_bisect(graph, rels);
            parts[k] = a;
            parts.insert(k + 1, b);
        }
    }
    Ok(split_terms(graph, varmap, qubo, &parts))
}

/// Distributes QUBO terms: a term whose variables all lie in some parts is
/// split evenly among those parts; a coupling spanning parts goes half to
/// the parts owning each endpoint, where the other endpoint becomes a halo
/// variable. The offset is split evenly.
pub fn split_terms(graph: &JoinGraph, varmap: &VarMap, qubo: &Qubo, part_rels: &[RelSet]) -> Partitioning {
    let n = qubo.n();
    let mut owners = vec![Vec::new(); n];
    let mut parts: Vec<Part> = part_rels
        .iter()
        .enumerate()
        .map(|(p, &rels)| {
            let edges = part_edges(graph, rels);
            let mut vars: Vec<usize> = edges.iter().flat_map(|&e| varmap.column(e)).collect();
            vars.sort_unstable();
            for &v in &vars {
                owners[v].push(p);
            }
            let cost_estimate = edges.iter().map(|&e| 1.0 + graph.pair_cardinality(e).ln()).sum();
            Part { relations: rels, edges, vars, halo: Vec::new(), qubo: Qubo::new(1), cost_estimate }
        })
        .collect();

    // Halo sets first so local indices are fixed before terms are added.
    let mut halos = vec![BTreeSet::new(); parts.len()];
    for &(i, j) in qubo.quadratic().keys() {
        if !owners[i].iter().any(|p| owners[j].contains(p)) {
            for &p in &owners[i] {
                halos[p].insert(j);
            }
            for &p in &owners[j] {
                halos[p].insert(i);
            }
        }
    }
    for (part, halo) in parts.iter_mut().zip(halos) {
        part.halo = halo.into_iter().collect();
        part.qubo = Qubo::new((part.vars.len() + part.halo.len()).max(1));
    }

    let k = parts.len() as f64;
    for part in &mut parts {
        part.qubo.add_offset(qubo.offset() / k);
    }
    for (&i, &h) in qubo.linear() {
        let class = qubo.class(Term::Linear(i)).unwrap_or(TermClass::Objective);
        let share = h / owners[i].len() as f64;
        for &p in &owners[i] {
            let li = parts[p].local_of(i).unwrap();
            parts[p].qubo.add_linear(li, share, class);
        }
    }
    for (&(i, j), &v) in qubo.quadratic() {
        let class = qubo.class(Term::Pair(i, j)).unwrap_or(TermClass::Objective);
        let common: Vec<usize> = owners[i].iter().copied().filter(|p| owners[j].contains(p)).collect();
        let mut add = |p: usize, w: f64| {
            let part = &mut parts[p];
            let (li, lj) = (part.local_of(i).unwrap(), part.local_of(j).unwrap());
            part.qubo.add_quadratic(li, lj, w, class);
        };
        if common.is_empty() {
            for &p in &owners[i] {
                add(p, 0.5 * v / owners[i].len() as f64);
            }
            for &p in &owners[j] {
                add(p, 0.5 * v / owners[j].len() as f64);
            }
        } else {
            for &p in &common {
                add(p, v / common.len() as f64);
            }
        }
    }

    let shared: BTreeSet<usize> = (0..n).filter(|&v| owners[v].len() > 1).collect();
    let cut_edges = (0..graph.edges().len())
        .filter(|&e| part_rels.iter().filter(|r| !r.is_disjoint(graph.edge(e).relations())).count() > 1)
        .collect();
    Partitioning { n, parts, shared, cut_edges }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::catalog::load_workload;
    use crate::joingraph::build_join_graph;
    use crate::qubo::{encode_join_order, EncodingWeights, JoinOrderEncoding};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Number of edges with one endpoint on each side.
    fn cut_size(graph: &JoinGraph, side_a: RelSet, within: RelSet) -> usize {
        graph
            .edges()
            .iter()
            .filter(|e| {
                let r = e.relations();
                r.union(within) == within && !r.is_disjoint(side_a) && r.union(side_a) != side_a
            })
            .count()
    }

    pub(crate) fn graph_from_edges(n: usize, edges: &[(usize, usize)]) -> (JoinGraph, JoinOrderEncoding) {
        let name = |i: usize| format!("r{i}");
        let rels: Vec<String> =
            (0..n).map(|i| format!(r#"{{"name":"{}","cardinality":{}}}"#, name(i), 10 + 37 * i)).collect();
        let preds: Vec<String> = edges
            .iter()
            .map(|&(a, b)| format!(r#"{{"left":"{}","right":"{}","selectivity":0.05}}"#, name(a), name(b)))
            .collect();
        let text = format!(
            r#"{{"relations":[{}],"predicates":[{}],"queries":[{{"id":"q","relations":[{}],"predicates":[{}]}}]}}"#,
            rels.join(","),
            preds.join(","),
            (0..n).map(|i| format!("\"{}\"", name(i))).collect::<Vec<_>>().join(","),
            (0..edges.len()).map(|i| i.to_string()).collect::<Vec<_>>().join(",")
        );
        let (cat, qs) = load_workload(&text).unwrap();
        let graph = build_join_graph(&qs[0], &cat).unwrap();
        let enc = encode_join_order(&graph, &EncodingWeights::default()).unwrap();
        (graph, enc)
    }

    fn chain(n: usize) -> (JoinGraph, JoinOrderEncoding) {
        graph_from_edges(n, &(0..n - 1).map(|i| (i, i + 1)).collect::<Vec<_>>())
    }

    #[test]
    fn small_graph_stays_whole() {
        let (graph, enc) = chain(4);
        let p = partition_join_graph(&graph, &enc.varmap, &enc.qubo, 128).unwrap();
        assert_eq!(p.parts.len(), 1);
        assert!(p.shared.is_empty());
        assert!(p.parts[0].halo.is_empty());
        assert_eq!(p.reconstruct(), enc.qubo);
    }

    #[test]
    fn six_chain_single_cut() {
        let (graph, enc) = chain(6);
        // 5 edges x 5 steps = 25 variables; halves hold 3 edges (15 vars) each.
        let p = partition_join_graph(&graph, &enc.varmap, &enc.qubo, 20).unwrap();
        assert_eq!(p.parts.len(), 2);
        assert_eq!(p.cut_edges.len(), 1);
        assert_eq!(p.shared.len(), enc.varmap.steps());
        let cut = p.cut_edges[0];
        assert_eq!(p.shared, enc.varmap.column(cut).collect());
        for part in &p.parts {
            assert!(part.vars.len() as f64 <= PART_FILL * 20.0);
        }
    }

    #[test]
    fn oversized_column_is_rejected() {
        let (graph, enc) = chain(6);
        assert!(matches!(partition_join_graph(&graph, &enc.varmap, &enc.qubo, 4), Err(Error::Partition(_))));
    }

    #[test]
    fn kl_matches_brute_force_on_random_trees() {
        for seed in 0..30u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let edges: Vec<(usize, usize)> = (1..8).map(|v| (rng.gen_range(0..v), v)).collect();
            let (graph, _) = graph_from_edges(8, &edges);
            let all = graph.model().all();
            let (a, b) = kl_bisect(&graph, all);
            assert_eq!(a.len(), 4);
            assert_eq!(b.len(), 4);
            let kl_cut = cut_size(&graph, a, all);
            let brute = (0u64..256)
                .filter(|m| m.count_ones() == 4)
                .map(|m| cut_size(&graph, RelSet(m), all))
                .min()
                .unwrap();
            assert!(kl_cut <= brute, "seed {seed}: kl {kl_cut} vs brute {brute}");
        }
    }

    #[test]
    fn terms_are_conserved() {
        for (n, edges) in [
            (8, (0..7).map(|i| (i, i + 1)).collect::<Vec<_>>()),
            (7, vec![(0, 1), (0, 2), (0, 3), (3, 4), (4, 5), (5, 6), (6, 3)]),
            (6, vec![(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3), (2, 3)]),
        ] {
            let (graph, enc) = graph_from_edges(n, &edges);
            for max_vars in [enc.varmap.len() - 1, enc.varmap.len() / 2 + enc.varmap.steps()] {
                let Ok(p) = partition_join_graph(&graph, &enc.varmap, &enc.qubo, max_vars) else { continue };
                assert!(p.parts.len() >= 2);
                let back = p.reconstruct();
                assert!((back.offset() - enc.qubo.offset()).abs() < 1e-12);
                for (&i, &h) in enc.qubo.linear() {
                    assert!((back.h(i) - h).abs() < 1e-12);
                }
                for (&(i, j), &v) in enc.qubo.quadratic() {
                    assert!((back.j(i, j) - v).abs() < 1e-12);
                }
                assert_eq!(back.quadratic().len(), enc.qubo.quadratic().len());
                let covered: BTreeSet<usize> = p.parts.iter().flat_map(|q| q.vars.iter().copied()).collect();
                assert_eq!(covered.len(), enc.qubo.n());
            }
        }
    }

    #[test]
    fn clamped_energy_tracks_full_part_energy() {
        let (graph, enc) = chain(6);
        let p = partition_join_graph(&graph, &enc.varmap, &enc.qubo, 20).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let state = Assignment::from((0..enc.qubo.n()).map(|_| rng.gen_bool(0.3)).collect::<Vec<_>>());
            for part in &p.parts {
                let clamped = part.clamped(&state);
                let local: Vec<bool> = part.vars.iter().chain(&part.halo).map(|&g| state.get(g)).collect();
                let own = Assignment::from(local[..part.vars.len()].to_vec());
                let full = part.qubo.energy(&Assignment::from(local)).unwrap();
                assert!((clamped.energy(&own).unwrap() - full).abs() < 1e-9);
            }
        }
    }
}
