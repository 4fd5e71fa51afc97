//! Time sources for budgeted solving.
//!
//! The wall clock measures real elapsed time. The simulated clock only moves
//! when work is charged to it, which makes budget decisions and timing
//! output reproducible across runs.

use std::time::Instant;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ClockMode {
    Wall,
    #[default]
    Simulated,
}

/// Modeled cost of one unit of client-side work on the simulated clock.
pub const SIM_NS_PER_WORK_UNIT: f64 = 20.0;

#[derive(Debug, Clone)]
pub struct Clock {
    kind: Kind,
}

#[derive(Debug, Clone)]
enum Kind {
    Wall(Instant),
    Simulated(f64),
}

impl Clock {
    pub fn new(mode: ClockMode) -> Self {
        match mode {
            ClockMode::Wall => Self::wall(),
            ClockMode::Simulated => Self::simulated(),
        }
    }

    pub fn wall() -> Self {
        Self { kind: Kind::Wall(Instant::now()) }
    }

    pub fn simulated() -> Self {
        Self { kind: Kind::Simulated(0.0) }
    }

    pub fn mode(&self) -> ClockMode {
        match self.kind {
            Kind::Wall(_) => ClockMode::Wall,
            Kind::Simulated(_) => ClockMode::Simulated,
        }
    }

    /// Milliseconds since the clock was created.
    pub fn now_ms(&self) -> f64 {
        match self.kind {
            Kind::Wall(start) => start.elapsed().as_secs_f64() * 1e3,
            Kind::Simulated(t) => t,
        }
    }

    /// Advances a simulated clock by `ms`; no effect on the wall clock.
    pub fn charge_ms(&mut self, ms: f64) {
        if let Kind::Simulated(t) = &mut self.kind {
            *t += ms.max(0.0);
        }
    }

    /// Charges `units` of client-side work at the modeled rate.
    pub fn charge_work(&mut self, units: usize) {
        self.charge_ms(units as f64 * SIM_NS_PER_WORK_UNIT * 1e-6);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simulated_clock_moves_only_when_charged() {
        let mut c = Clock::simulated();
        assert_eq!(c.now_ms(), 0.0);
        c.charge_ms(2.5);
        c.charge_work(1_000_000);
        assert!((c.now_ms() - 22.5).abs() < 1e-12);
        c.charge_ms(-4.0);
        assert!((c.now_ms() - 22.5).abs() < 1e-12);
    }

    #[test]
    fn wall_clock_ignores_charges() {
        let mut c = Clock::wall();
        c.charge_ms(1e9);
        assert!(c.now_ms() < 1e6);
    }
}
