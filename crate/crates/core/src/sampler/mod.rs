//! Sampling layer standing in for the annealer.

mod anneal;
pub mod remote;

pub use anneal::{sa_sample, SimulatedAnnealer, TimingMode};
pub use remote::{remote_roundtrip, LoopbackServer, RemoteSampler};

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::qubo::{Assignment, Qubo};

pub const EXHAUSTIVE_LIMIT: usize = 20;
pub const DEFAULT_T_END: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRow {
    pub assignment: Assignment,
    pub energy: f64,
    pub occurrences: u64,
}

/// Per-call timing, mirroring the annealing service's breakdown (ms).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct SamplerTiming {
    pub ingress_ms: f64,
    pub solve_ms: f64,
    pub egress_ms: f64,
    pub end_to_end_ms: f64,
    pub qpu_programming_ms: f64,
    pub qpu_sampling_ms: f64,
    pub qpu_access_ms: f64,
}

impl SamplerTiming {
    /// Timing with the derived totals filled in.
    pub fn new(ingress_ms: f64, solve_ms: f64, egress_ms: f64, qpu_programming_ms: f64, qpu_sampling_ms: f64) -> Self {
        Self {
            ingress_ms,
            solve_ms,
            egress_ms,
            end_to_end_ms: ingress_ms + solve_ms + egress_ms,
            qpu_programming_ms,
            qpu_sampling_ms,
            qpu_access_ms: qpu_programming_ms + qpu_sampling_ms,
        }
    }

    pub fn local(solve_ms: f64) -> Self {
        Self::new(0.0, solve_ms, 0.0, 0.0, solve_ms)
    }

    pub fn communication_ms(&self) -> f64 {
        self.ingress_ms + self.egress_ms
    }

    /// Component-wise sum, used when several calls make up one iteration.
    pub fn accumulate(&mut self, other: &SamplerTiming) {
        *self = SamplerTiming::new(
            self.ingress_ms + other.ingress_ms,
            self.solve_ms + other.solve_ms,
            self.egress_ms + other.egress_ms,
            self.qpu_programming_ms + other.qpu_programming_ms,
            self.qpu_sampling_ms + other.qpu_sampling_ms,
        );
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    rows: Vec<SampleRow>,
    pub timing: SamplerTiming,
}

impl SampleSet {
    /// Aggregates raw reads into rows sorted by (energy, assignment).
    pub fn from_reads(qubo: &Qubo, reads: impl IntoIterator<Item = Assignment>, timing: SamplerTiming) -> Result<Self> {
        let mut counts: BTreeMap<Assignment, u64> = BTreeMap::new();
        for a in reads {
            if a.len() != qubo.n() {
                return Err(Error::LengthMismatch { expected: qubo.n(), got: a.len() });
            }
            *counts.entry(a).or_insert(0) += 1;
        }
        Self::from_counts(qubo, counts, timing)
    }

    pub fn from_counts(qubo: &Qubo, counts: BTreeMap<Assignment, u64>, timing: SamplerTiming) -> Result<Self> {
        let mut rows = Vec::with_capacity(counts.len());
        for (assignment, occurrences) in counts {
            if occurrences == 0 {
                continue;
            }
            let energy = qubo.energy(&assignment)?;
            rows.push(SampleRow { assignment, energy, occurrences });
        }
        rows.sort_by(|a, b| a.energy.total_cmp(&b.energy).then_with(|| a.assignment.cmp(&b.assignment)));
        Ok(Self { rows, timing })
    }

    pub fn rows(&self) -> &[SampleRow] {
        &self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn best(&self) -> Option<&SampleRow> {
        self.rows.first()
    }

    pub fn total_occurrences(&self) -> u64 {
        self.rows.iter().map(|r| r.occurrences).sum()
    }

    /// Occurrence-weighted mean and variance of the stored energies.
    pub fn energy_moments(&self) -> (f64, f64) {
        let total = self.total_occurrences() as f64;
        if total == 0.0 {
            return (0.0, 0.0);
        }
        let mean = self.rows.iter().map(|r| r.energy * r.occurrences as f64).sum::<f64>() / total;
        let var = self
            .rows
            .iter()
            .map(|r| (r.energy - mean).powi(2) * r.occurrences as f64)
            .sum::<f64>()
            / total;
        (mean, var)
    }

    /// Stable text form used for determinism checks (excludes timing).
    pub fn canonical_string(&self) -> String {
        self.rows
            .iter()
            .map(|r| format!("{} {:e} {}\n", r.assignment, r.energy, r.occurrences))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerParams {
    pub num_reads: usize,
    pub sweeps: usize,
    /// Initial temperature; `None` uses the largest absolute coefficient.
    pub t_start: Option<f64>,
    /// Final temperature; `None` uses 1e-2.
    pub t_end: Option<f64>,
    pub seed: u64,
}

impl Default for SamplerParams {
    fn default() -> Self {
        Self { num_reads: 64, sweeps: 1000, t_start: None, t_end: None, seed: 0 }
    }
}

impl SamplerParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_reads == 0 || self.sweeps == 0 {
            return Err(Error::InvalidParam("num_reads and sweeps must be at least 1".into()));
        }
        for t in [self.t_start, self.t_end].into_iter().flatten() {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::InvalidParam(format!("temperature {t} must be positive")));
            }
        }
        if let (Some(a), Some(b)) = (self.t_start, self.t_end) {
            if a < b {
                return Err(Error::InvalidParam(format!("t_start {a} below t_end {b}")));
            }
        }
        Ok(())
    }

    /// Concrete `(t_start, t_end)` for a given QUBO.
    pub fn schedule_for(&self, qubo: &Qubo) -> (f64, f64) {
        let t_end = self.t_end.unwrap_or(DEFAULT_T_END);
        let t_start = self.t_start.unwrap_or_else(|| {
            let m = qubo.max_abs_coefficient();
            if m > 0.0 {
                m
            } else {
                1.0
            }
        });
        (t_start.max(t_end), t_end)
    }
}

/// Anything that can draw low-energy samples from a QUBO.
pub trait Sampler: Send + Sync {
    fn sample(&self, qubo: &Qubo, params: &SamplerParams) -> Result<SampleSet>;

    /// Expected end-to-end duration of one call, when the sampler can tell.
    fn predict_ms(&self, _qubo: &Qubo, _params: &SamplerParams) -> Option<f64> {
        None
    }
}

pub type Distribution = BTreeMap<Assignment, f64>;

pub fn empirical_distribution(set: &SampleSet) -> Result<Distribution> {
    let total = set.total_occurrences();
    if total == 0 {
        return Err(Error::EmptySamples);
    }
    Ok(set
        .rows()
        .iter()
        .map(|r| (r.assignment.clone(), r.occurrences as f64 / total as f64))
        .collect())
}

/// Every minimum-energy assignment, by Gray-code enumeration.
pub fn exhaustive_ground_states(qubo: &Qubo) -> Result<SampleSet> {
    let n = qubo.n();
    if n > EXHAUSTIVE_LIMIT {
        return Err(Error::TooLarge { n, limit: EXHAUSTIVE_LIMIT });
    }
    let adj = qubo.adjacency();
    let mut s = vec![false; n];
    let mut fields = adj.linear.clone();
    let mut e = qubo.offset();
    let mut energies = Vec::with_capacity(1 << n);
    let mut states = Vec::with_capacity(1 << n);
    energies.push(e);
    states.push(0u64);
    let mut code = 0u64;
    for k in 1u64..(1u64 << n) {
        let i = k.trailing_zeros() as usize;
        let delta = if s[i] { -fields[i] } else { fields[i] };
        e += delta;
        s[i] = !s[i];
        code ^= 1 << i;
        let sign = if s[i] { 1.0 } else { -1.0 };
        for &(j, v) in adj.neighbors(i) {
            fields[j] += sign * v;
        }
        energies.push(e);
        states.push(code);
    }
    let min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = 1e-9 * (1.0 + min.abs());
    let ground = states
        .into_iter()
        .zip(energies)
        .filter(|&(_, en)| en <= min + tol)
        .map(|(c, _)| Assignment::from((0..n).map(|i| c >> i & 1 == 1).collect::<Vec<_>>()));
    let set = SampleSet::from_reads(qubo, ground, SamplerTiming::default())?;
    // Exact re-evaluation may separate near-ties left by the incremental sums.
    let best = set.best().map(|r| r.energy).unwrap_or(min);
    let rows = set.rows.into_iter().filter(|r| r.energy <= best + 1e-12 * (1.0 + best.abs())).collect();
    Ok(SampleSet { rows, timing: set.timing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qubo::testutil::{all_assignments, random_qubo};
    use crate::qubo::TermClass;

    #[test]
    fn exhaustive_examples() {
        let mut q = Qubo::new(2);
        q.add_linear(0, 1.0, TermClass::Objective);
        q.add_linear(1, -2.0, TermClass::Objective);
        q.add_quadratic(0, 1, 3.0, TermClass::Objective);
        let gs = exhaustive_ground_states(&q).unwrap();
        assert_eq!(gs.rows().len(), 1);
        assert_eq!(gs.rows()[0].assignment, Assignment::from_bits(&[0, 1]));
        assert_eq!(gs.rows()[0].energy, -2.0);

        let mut z = Qubo::new(3);
        z.add_offset(1.5);
        let gs = exhaustive_ground_states(&z).unwrap();
        assert_eq!(gs.rows().len(), 8);
        assert!(gs.rows().iter().all(|r| r.energy == 1.5));

        assert!(matches!(exhaustive_ground_states(&Qubo::new(21)), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn exhaustive_matches_naive_enumeration() {
        for seed in 0..20 {
            let q = random_qubo(9, 0.5, seed);
            let naive = all_assignments(9).map(|s| q.energy(&s).unwrap()).fold(f64::INFINITY, f64::min);
            let gs = exhaustive_ground_states(&q).unwrap();
            assert!((gs.best().unwrap().energy - naive).abs() < 1e-12);
        }
    }

    #[test]
    fn distribution_examples() {
        let q = Qubo::new(1);
        let one = SampleSet::from_reads(&q, vec![Assignment::from_bits(&[1]); 5], SamplerTiming::default()).unwrap();
        let d = empirical_distribution(&one).unwrap();
        assert_eq!(d.values().copied().collect::<Vec<_>>(), vec![1.0]);

        let mut reads = vec![Assignment::from_bits(&[0])];
        reads.extend(vec![Assignment::from_bits(&[1]); 3]);
        let two = SampleSet::from_reads(&q, reads, SamplerTiming::default()).unwrap();
        let d = empirical_distribution(&two).unwrap();
        assert_eq!(d[&Assignment::from_bits(&[0])], 0.25);
        assert_eq!(d[&Assignment::from_bits(&[1])], 0.75);

        let empty = SampleSet::from_reads(&q, Vec::new(), SamplerTiming::default()).unwrap();
        assert!(matches!(empirical_distribution(&empty), Err(Error::EmptySamples)));
    }

    #[test]
    fn large_sample_distribution_normalizes() {
        let q = random_qubo(10, 0.3, 2);
        let set = sa_sample(&q, &SamplerParams { num_reads: 500, sweeps: 5, seed: 3, ..Default::default() }).unwrap();
        let total: f64 = empirical_distribution(&set).unwrap().values().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn timing_identity() {
        let t = SamplerTiming::new(87.896, 361.214, 122.164, 15.760, 26.356);
        assert!((t.end_to_end_ms - 571.274).abs() < 1e-6);
        assert!((t.qpu_access_ms - 42.116).abs() < 1e-9);
        let mut acc = SamplerTiming::local(2.0);
        acc.accumulate(&t);
        assert!((acc.end_to_end_ms - (acc.ingress_ms + acc.solve_ms + acc.egress_ms)).abs() < 1e-9);
    }

    #[test]
    fn params_validation() {
        assert!(SamplerParams { num_reads: 0, ..Default::default() }.validate().is_err());
        assert!(SamplerParams { t_start: Some(0.1), t_end: Some(1.0), ..Default::default() }.validate().is_err());
        assert!(SamplerParams { t_end: Some(-1.0), ..Default::default() }.validate().is_err());
        assert!(SamplerParams::default().validate().is_ok());
    }
}
