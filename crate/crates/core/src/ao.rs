//! Settings and trace helpers shared by the alternating solvers.

use serde::{Deserialize, Serialize};

use crate::conic::SolverSettings;
use crate::sdr::RandomizationSettings;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveSettings {
    /// Relative objective gain below which the outer loop stops.
    pub outer_tol: f64,
    pub max_outer: usize,
    pub inner_tol: f64,
    pub max_inner: usize,
    pub conic: SolverSettings,
    pub randomization: RandomizationSettings,
    /// Seed of the random initial phases.
    pub init_seed: u64,
    /// Additional randomly seeded starts tried by the sum-rate solver.
    #[serde(default = "default_extra_starts")]
    pub extra_starts: usize,
}

fn default_extra_starts() -> usize {
    4
}

impl Default for SolveSettings {
    fn default() -> Self {
        Self {
            outer_tol: 1e-4,
            max_outer: 30,
            inner_tol: 1e-4,
            max_inner: 20,
            conic: SolverSettings::default(),
            randomization: RandomizationSettings::default(),
            init_seed: 0,
            extra_starts: default_extra_starts(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Convergence {
    Converged,
    IterationLimit,
}

/// `(new - old) / max(|old|, floor)`.
pub fn relative_gain(old: f64, new: f64) -> f64 {
    (new - old) / old.abs().max(1e-300)
}

/// Largest relative drop between consecutive entries (0 for monotone traces).
pub fn max_relative_decrease(trace: &[f64]) -> f64 {
    trace
        .windows(2)
        .map(|w| ((w[0] - w[1]) / w[0].abs().max(1e-300)).max(0.0))
        .fold(0.0, f64::max)
}
