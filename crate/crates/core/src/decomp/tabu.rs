use crate::qubo::{Assignment, Qubo};

pub const TABU_TENURE: usize = 7;

/// Single-bit-flip tabu search from `start`. A flipped bit stays tabu for
/// [`TABU_TENURE`] moves unless flipping it beats the best energy so far.
/// Stops after `move_budget` moves or max(200, 20n) moves without a new best.
/// Returns the best assignment visited, never worse than `start`.
pub fn tabu_refine(qubo: &Qubo, start: &Assignment, move_budget: usize) -> Assignment {
    let n = qubo.n();
    assert_eq!(start.len(), n, "start assignment has wrong length");
    let adj = qubo.adjacency();
    let mut s = start.bits().to_vec();
    let mut fields = adj.local_fields(&s);
    let mut current = 0.0;
    let mut best = 0.0;
    let mut best_s = s.clone();
    let mut tabu_until = vec![0usize; n];
    let patience = (20 * n).max(200);
    let mut stale = 0;

    for mv in 0..move_budget {
        let mut pick: Option<(usize, f64)> = None;
        for i in 0..n {
            let delta = if s[i] { -fields[i] } else { fields[i] };
            let allowed = tabu_until[i] <= mv || current + delta < best - 1e-12;
            if allowed && pick.is_none_or(|(_, d)| delta < d) {
                pick = Some((i, delta));
            }
        }
        let Some((i, delta)) = pick else { break };
        s[i] = !s[i];
        let sign = if s[i] { 1.0 } else { -1.0 };
        for &(j, v) in adj.neighbors(i) {
            fields[j] += sign * v;
        }
        current += delta;
        tabu_until[i] = mv + 1 + TABU_TENURE;
        if current < best - 1e-12 {
            best = current;
            best_s.clone_from(&s);
            stale = 0;
        } else {
            stale += 1;
            if stale >= patience {
                break;
            }
        }
    }
    Assignment::from(best_s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qubo::testutil::{all_assignments, random_qubo};
    use crate::qubo::TermClass;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_variable_flips_off() {
        let mut q = Qubo::new(1);
        q.add_linear(0, 5.0, TermClass::Objective);
        let out = tabu_refine(&q, &Assignment::from_bits(&[1]), 100);
        assert_eq!(out, Assignment::from_bits(&[0]));
    }

    #[test]
    fn ground_state_start_is_kept() {
        for seed in 0..10 {
            let q = random_qubo(8, 0.5, seed);
            let ground = all_assignments(8).min_by(|a, b| q.energy(a).unwrap().total_cmp(&q.energy(b).unwrap())).unwrap();
            let out = tabu_refine(&q, &ground, 1000);
            assert_eq!(q.energy(&out).unwrap(), q.energy(&ground).unwrap());
        }
    }

    #[test]
    fn never_worse_and_usually_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut optimal = 0;
        for trial in 0..100 {
            let q = random_qubo(10, 0.5, 1000 + trial);
            let start = Assignment::from((0..10).map(|_| rng.gen_bool(0.5)).collect::<Vec<_>>());
            let out = tabu_refine(&q, &start, 10_000);
            let (e0, e1) = (q.energy(&start).unwrap(), q.energy(&out).unwrap());
            assert!(e1 <= e0);
            let ground = all_assignments(10).map(|a| q.energy(&a).unwrap()).fold(f64::INFINITY, f64::min);
            if (e1 - ground).abs() < 1e-9 {
                optimal += 1;
            }
        }
        assert!(optimal >= 80, "reached ground state in {optimal}/100");
    }

    #[test]
    fn zero_budget_returns_start() {
        let q = random_qubo(5, 0.5, 3);
        let start = Assignment::from_bits(&[1, 0, 1, 1, 0]);
        assert_eq!(tabu_refine(&q, &start, 0), start);
    }
}
