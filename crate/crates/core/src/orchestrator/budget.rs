use serde::Serialize;

use crate::clock::{Clock, ClockMode};
use crate::error::{Error, Result};

/// Smoothing factor of the iteration-duration average used for admission.
pub const EMA_ALPHA: f64 = 0.5;

/// One sampling iteration of the quantum lifecycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    /// Solver compute time.
    pub t_q_ms: f64,
    /// Communication time (ingress + egress).
    pub t_c_ms: f64,
    /// Client-side refinement time.
    pub t_r_ms: f64,
    /// End of the previous iteration (0 for the first), so records tile the timeline.
    pub started_at_ms: f64,
    /// When the admission check let this iteration's sampling begin.
    pub admitted_at_ms: f64,
    pub finished_at_ms: f64,
}

impl IterationRecord {
    pub fn total_ms(&self) -> f64 {
        self.t_q_ms + self.t_c_ms + self.t_r_ms
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LifecycleSnapshot {
    pub tau_ms: f64,
    pub records: Vec<IterationRecord>,
    pub time_quantum_ms: f64,
    pub elapsed_ms: f64,
}

/// Time budget with per-iteration lifecycle accounting.
#[derive(Debug, Clone)]
pub struct BudgetClock {
    tau_ms: f64,
    clock: Clock,
    records: Vec<IterationRecord>,
    ema_ms: Option<f64>,
}

impl BudgetClock {
    pub fn new(tau_ms: f64, mode: ClockMode) -> Result<Self> {
        if !(tau_ms > 0.0 && tau_ms.is_finite()) {
            return Err(Error::InvalidParam(format!("time budget {tau_ms} must be positive")));
        }
        Ok(Self { tau_ms, clock: Clock::new(mode), records: Vec::new(), ema_ms: None })
    }

    pub fn tau_ms(&self) -> f64 {
        self.tau_ms
    }

    pub fn elapsed_ms(&self) -> f64 {
        self.clock.now_ms()
    }

    pub fn exhausted(&self) -> bool {
        self.elapsed_ms() > self.tau_ms
    }

    pub fn clock_mut(&mut self) -> &mut Clock {
        &mut self.clock
    }

    pub fn mode(&self) -> ClockMode {
        self.clock.mode()
    }

    /// Whether a new iteration may start: elapsed time plus the expected
    /// iteration duration must fit in the budget. Before any iteration has
    /// completed, `predicted_ms` stands in for the running average.
    pub fn admit(&self, predicted_ms: Option<f64>) -> bool {
        let expected = self.ema_ms.or(predicted_ms).unwrap_or(0.0);
        self.elapsed_ms() + expected <= self.tau_ms
    }

    /// Start of the next iteration: the end of the previous one, or 0.
    pub fn iteration_start(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.finished_at_ms)
    }

    /// Closes the current iteration. Refinement time is whatever part of the
    /// iteration was not solver or communication time.
    pub fn finish_iteration(&mut self, admitted_at_ms: f64, t_q_ms: f64, t_c_ms: f64) -> IterationRecord {
        let started_at_ms = self.iteration_start();
        let finished_at_ms = self.elapsed_ms();
        let duration = finished_at_ms - started_at_ms;
        let t_r_ms = (duration - t_q_ms - t_c_ms).max(0.0);
        let rec = IterationRecord { t_q_ms, t_c_ms, t_r_ms, started_at_ms, admitted_at_ms, finished_at_ms };
        let d = rec.total_ms();
        self.ema_ms = Some(match self.ema_ms {
            None => d,
            Some(prev) => EMA_ALPHA * d + (1.0 - EMA_ALPHA) * prev,
        });
        self.records.push(rec);
        rec
    }

    pub fn records(&self) -> &[IterationRecord] {
        &self.records
    }

    /// Sum of T_Q + T_C + T_R over all iterations.
    pub fn time_quantum_ms(&self) -> f64 {
        self.records.iter().map(IterationRecord::total_ms).sum()
    }

    pub fn snapshot(&self) -> LifecycleSnapshot {
        LifecycleSnapshot {
            tau_ms: self.tau_ms,
            records: self.records.clone(),
            time_quantum_ms: self.time_quantum_ms(),
            elapsed_ms: self.elapsed_ms(),
        }
    }
}
