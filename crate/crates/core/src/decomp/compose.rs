use std::collections::BTreeMap;

use super::partition::Partitioning;
use crate::error::{Error, Result};
use crate::qubo::{Assignment, Qubo};
use crate::sampler::SampleSet;

/// Weighted average of part marginals: Σ w_p m_p / Σ w_p.
pub fn consensus(votes: &[(f64, f64)]) -> f64 {
    let total: f64 = votes.iter().map(|(w, _)| w).sum();
    if total <= 0.0 {
        return 0.0;
    }
    votes.iter().map(|(w, m)| w * m).sum::<f64>() / total
}

/// Boltzmann-weighted frequency of each local variable being 1.
pub fn part_marginals(samples: &SampleSet, beta: f64) -> Result<Vec<f64>> {
    let best = samples.best().ok_or(Error::EmptySamples)?;
    let n = best.assignment.len();
    let mut ones = vec![0.0; n];
    let mut z = 0.0;
    for row in samples.rows() {
        let w = (-beta * (row.energy - best.energy)).exp() * row.occurrences as f64;
        z += w;
        for i in row.assignment.ones() {
            ones[i] += w;
        }
    }
    Ok(ones.into_iter().map(|o| o / z).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Merge {
    pub assignment: Assignment,
    /// Consensus probability of every shared variable.
    pub consensus: BTreeMap<usize, f64>,
}

/// One composition step. Each part votes on its shared variables with its
/// marginals, weighted by exp(−β·best part energy); a shared variable is set
/// when the consensus reaches 0.5. Every other variable takes its value from
/// its part's lowest-energy sample.
pub fn merge_parts(partitioning: &Partitioning, samples: &[SampleSet], beta: f64) -> Result<Merge> {
    if samples.len() != partitioning.parts.len() {
        return Err(Error::InvalidParam(format!(
            "{} sample sets for {} parts",
            samples.len(),
            partitioning.parts.len()
        )));
    }
    let bests = samples.iter().map(|s| s.best().ok_or(Error::EmptySamples)).collect::<Result<Vec<_>>>()?;
    let floor = bests.iter().map(|b| b.energy).fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = bests.iter().map(|b| (-beta * (b.energy - floor)).exp()).collect();
    let marginals = samples.iter().map(|s| part_marginals(s, beta)).collect::<Result<Vec<_>>>()?;

    let mut bits = vec![false; partitioning.n];
    let mut votes: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for (p, part) in partitioning.parts.iter().enumerate() {
        for (local, &v) in part.vars.iter().enumerate() {
            if partitioning.shared.contains(&v) {
                votes.entry(v).or_default().push((weights[p], marginals[p][local]));
            } else {
                bits[v] = bests[p].assignment.get(local);
            }
        }
    }
    let mut agreed = BTreeMap::new();
    for (v, vs) in votes {
        let c = consensus(&vs);
        bits[v] = c >= 0.5;
        agreed.insert(v, c);
    }
    Ok(Merge { assignment: Assignment::from(bits), consensus: agreed })
}

/// Runs `rounds` of consensus: merge, re-sample every part with foreign
/// variables clamped to the merged state, repeat; then merges once more.
/// `resample(part, clamped_qubo, round)` draws a fresh sample set.
pub fn compose_bp(
    partitioning: &Partitioning,
    initial: Vec<SampleSet>,
    full: &Qubo,
    rounds: usize,
    beta: f64,
    mut resample: impl FnMut(usize, &Qubo, usize) -> Result<SampleSet>,
) -> Result<Assignment> {
    if full.n() != partitioning.n {
        return Err(Error::LengthMismatch { expected: partitioning.n, got: full.n() });
    }
    let mut samples = initial;
    for round in 1..=rounds {
        let merged = merge_parts(partitioning, &samples, beta)?;
        samples = partitioning
            .parts
            .iter()
            .enumerate()
            .map(|(p, part)| resample(p, &part.clamped(&merged.assignment), round))
            .collect::<Result<Vec<_>>>()?;
    }
    Ok(merge_parts(partitioning, &samples, beta)?.assignment)
}
