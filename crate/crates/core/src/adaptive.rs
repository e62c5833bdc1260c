//! Adaptive step selection `tau = max(tau_min, tau_max / sqrt(1 + eta |d_tau phi|^2))`.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::timemesh::make_graded;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptivePolicy {
    pub tau_min: f64,
    pub tau_max: f64,
    pub eta: f64,
}

impl Default for AdaptivePolicy {
    fn default() -> Self {
        AdaptivePolicy { tau_min: 1e-3, tau_max: 0.1, eta: 1e3 }
    }
}

impl AdaptivePolicy {
    pub fn new(tau_min: f64, tau_max: f64, eta: f64) -> Result<Self> {
        if !(tau_min > 0.0 && tau_min <= tau_max && tau_max.is_finite()) {
            return param(format!("need 0 < tau_min <= tau_max, got {tau_min}, {tau_max}"));
        }
        if !(eta > 0.0) {
            return param(format!("eta must be positive, got {eta}"));
        }
        Ok(AdaptivePolicy { tau_min, tau_max, eta })
    }

    pub fn next_step(&self, dphi_dt_l2: f64, restriction_bound: Option<f64>) -> f64 {
        next_step(self, dphi_dt_l2, restriction_bound)
    }
}

/// The controller formula, clamped to `restriction_bound` when one is given.
pub fn next_step(policy: &AdaptivePolicy, dphi_dt_l2: f64, restriction_bound: Option<f64>) -> f64 {
    let raw = policy.tau_max / (1.0 + policy.eta * dphi_dt_l2 * dphi_dt_l2).sqrt();
    let tau = policy.tau_min.max(raw);
    match restriction_bound {
        Some(b) => tau.min(b),
        None => tau,
    }
}

/// Graded start `t_k = T_0 (k / N_0)^gamma` taken before the controller is switched on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Warmup {
    pub gamma: f64,
    pub n0: usize,
    pub t0: f64,
}

impl Default for Warmup {
    fn default() -> Self {
        Warmup { gamma: 3.0, n0: 30, t0: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveSchedule {
    pub policy: AdaptivePolicy,
    pub warmup: Option<Warmup>,
    pub t_final: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepPhase {
    Warmup,
    Adaptive,
}

/// Produces the step sequence of an [`AdaptiveSchedule`] one step at a time.
#[derive(Debug, Clone)]
pub struct StepController {
    schedule: AdaptiveSchedule,
    warmup_steps: Vec<f64>,
    taken: usize,
    adaptive_started: bool,
}

impl StepController {
    pub fn new(schedule: AdaptiveSchedule) -> Result<Self> {
        if !(schedule.t_final > 0.0 && schedule.t_final.is_finite()) {
            return param(format!("final time must be positive, got {}", schedule.t_final));
        }
        let warmup_steps = match schedule.warmup {
            Some(w) => {
                if w.t0 >= schedule.t_final {
                    return param(format!("warm-up end {} must precede the final time {}", w.t0, schedule.t_final));
                }
                make_graded(w.t0, w.n0, w.gamma)?.steps().to_vec()
            }
            None => Vec::new(),
        };
        Ok(StepController { schedule, warmup_steps, taken: 0, adaptive_started: false })
    }

    /// The next step from time `t`, given `|d_tau phi|` of the step just taken, or `None` once `T` is reached.
    pub fn next(&mut self, t: f64, last_rate: Option<f64>, restriction_bound: Option<f64>) -> Option<(f64, StepPhase)> {
        let t_final = self.schedule.t_final;
        let remaining = t_final - t;
        if remaining <= 1e-12 * t_final {
            return None;
        }
        if self.taken < self.warmup_steps.len() {
            let tau = self.warmup_steps[self.taken];
            self.taken += 1;
            return Some((tau, StepPhase::Warmup));
        }
        let policy = &self.schedule.policy;
        let tau = if self.adaptive_started {
            next_step(policy, last_rate.unwrap_or(0.0), restriction_bound)
        } else {
            self.adaptive_started = true;
            match restriction_bound {
                Some(b) => policy.tau_min.min(b),
                None => policy.tau_min,
            }
        };
        self.taken += 1;
        let cap = restriction_bound.map_or(policy.tau_max, |b| b.min(policy.tau_max));
        // land exactly on T without leaving a sliver shorter than tau_min
        let tau = if remaining <= tau {
            remaining
        } else if remaining < tau + policy.tau_min {
            if remaining <= cap {
                remaining
            } else {
                0.5 * remaining
            }
        } else {
            tau
        };
        Some((tau, StepPhase::Adaptive))
    }
}
