//! Nonuniform time meshes `0 = t_0 < t_1 < ... < t_N`.
//!
//! Steps are stored exactly as generated and levels are accumulated with
//! compensated summation, so tiny late steps (e.g. on a contracting
//! fixed-ratio mesh) keep full relative precision.

use std::fmt::Write as _;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeMesh {
    levels: Vec<f64>,
    steps: Vec<f64>,
    ratios: Vec<f64>,
    // running compensation term of the level sum
    #[serde(skip)]
    carry: f64,
}

impl Default for TimeMesh {
    fn default() -> Self {
        Self::empty()
    }
}

impl TimeMesh {
    /// A mesh holding only `t_0 = 0`; steps are appended with [`TimeMesh::push_step`].
    pub fn empty() -> Self {
        TimeMesh { levels: vec![0.0], steps: Vec::new(), ratios: Vec::new(), carry: 0.0 }
    }

    pub fn from_steps<I: IntoIterator<Item = f64>>(steps: I) -> Result<Self> {
        let mut mesh = Self::empty();
        for tau in steps {
            mesh.push_step(tau)?;
        }
        Ok(mesh)
    }

    /// Appends a step `tau_{N+1}` and the level `t_{N+1} = t_N + tau_{N+1}`.
    pub fn push_step(&mut self, tau: f64) -> Result<()> {
        if !(tau.is_finite() && tau > 0.0) {
            return param(format!("time step must be positive and finite, got {tau}"));
        }
        // Neumaier summation
        let t = *self.levels.last().unwrap();
        let sum = t + tau;
        if t.abs() >= tau {
            self.carry += (t - sum) + tau;
        } else {
            self.carry += (tau - sum) + t;
        }
        let level = sum + self.carry;
        if level <= t {
            return param(format!("step {tau:e} too small to advance from t = {t}"));
        }
        if let Some(&prev) = self.steps.last() {
            self.ratios.push(tau / prev);
        }
        self.steps.push(tau);
        self.levels.push(level);
        Ok(())
    }

    /// Number of steps N.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    /// Ratios `r_2..r_N`.
    pub fn ratios(&self) -> &[f64] {
        &self.ratios
    }

    /// Level `t_k`, `0 <= k <= N`.
    pub fn t(&self, k: usize) -> f64 {
        self.levels[k]
    }

    /// Step `tau_k`, `1 <= k <= N`.
    pub fn tau(&self, k: usize) -> f64 {
        self.steps[k - 1]
    }

    /// Ratio `r_k = tau_k / tau_{k-1}`, `2 <= k <= N`.
    pub fn ratio(&self, k: usize) -> f64 {
        self.ratios[k - 2]
    }

    pub fn final_time(&self) -> f64 {
        *self.levels.last().unwrap()
    }

    pub fn max_step(&self) -> f64 {
        self.steps.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_ratio(&self) -> Option<f64> {
        self.ratios.iter().copied().reduce(f64::max)
    }

    /// Half-level `t_{k-1/2}`.
    pub fn t_half(&self, k: usize) -> f64 {
        self.levels[k - 1] + 0.5 * self.steps[k - 1]
    }

    /// The first `n` steps as a new mesh.
    pub fn prefix(&self, n: usize) -> TimeMesh {
        TimeMesh {
            levels: self.levels[..=n].to_vec(),
            steps: self.steps[..n].to_vec(),
            ratios: self.ratios[..n.saturating_sub(1)].to_vec(),
            carry: 0.0,
        }
    }

    /// CSV dump with header `k,t_k,tau_k,r_k`; `r_1` is left empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,t_k,tau_k,r_k\n");
        for k in 1..=self.len() {
            let r = if k >= 2 { self.ratio(k).to_string() } else { String::new() };
            let _ = writeln!(out, "{k},{},{},{r}", self.t(k), self.tau(k));
        }
        out
    }
}

fn check_common(t_final: f64, n: usize) -> Result<()> {
    if !(t_final.is_finite() && t_final > 0.0) {
        return param(format!("final time must be positive, got {t_final}"));
    }
    if n == 0 {
        return param("number of steps must be at least 1");
    }
    Ok(())
}

/// `t_k = kT/N`.
pub fn make_uniform(t_final: f64, n: usize) -> Result<TimeMesh> {
    make_graded(t_final, n, 1.0)
}

/// Graded mesh `t_k = T (k/N)^gamma`, `gamma >= 1`.
pub fn make_graded(t_final: f64, n: usize, gamma: f64) -> Result<TimeMesh> {
    check_common(t_final, n)?;
    if !(gamma >= 1.0 && gamma.is_finite()) {
        return param(format!("grading exponent must be >= 1, got {gamma}"));
    }
    Ok(graded_from_levels(t_final, n, gamma))
}

fn graded_from_levels(t_final: f64, n: usize, gamma: f64) -> TimeMesh {
    let nf = n as f64;
    let level = |k: usize| {
        if gamma == 1.0 {
            t_final * k as f64 / nf
        } else {
            t_final * (k as f64 / nf).powf(gamma)
        }
    };
    let levels: Vec<f64> = (0..=n).map(level).collect();
    if gamma == 1.0 {
        // exact Toeplitz structure on uniform meshes
        let steps = vec![t_final / nf; n];
        let ratios = vec![1.0; n - 1];
        return TimeMesh { levels, steps, ratios, carry: 0.0 };
    }
    let steps: Vec<f64> = levels.windows(2).map(|w| w[1] - w[0]).collect();
    let ratios = steps.windows(2).map(|w| w[1] / w[0]).collect();
    TimeMesh { levels, steps, ratios, carry: 0.0 }
}

/// Geometric mesh `tau_k = tau_1 r^{k-1}` with `sum tau_k = T`.
pub fn make_fixed_ratio(t_final: f64, n: usize, ratio: f64) -> Result<TimeMesh> {
    check_common(t_final, n)?;
    if !(ratio > 0.0 && ratio.is_finite()) {
        return param(format!("step ratio must be positive, got {ratio}"));
    }
    if ratio == 1.0 {
        return make_uniform(t_final, n);
    }
    let powers: Vec<f64> = (0..n).map(|k| ratio.powi(k as i32)).collect();
    let total: f64 = powers.iter().sum();
    let tau1 = t_final / total;
    let mut mesh = TimeMesh::from_steps(powers.iter().map(|p| tau1 * p))?;
    mesh.ratios.iter_mut().for_each(|r| *r = ratio);
    Ok(mesh)
}

/// Seeded random weights `s_k` uniform on the open interval `(0, 1)`.
pub fn random_weights(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.sample::<f64, _>(Open01)).collect()
}

/// Random mesh `tau_k = T s_k / sum_j s_j` with `s_k ~ U(0, 1)` drawn from a seeded ChaCha8 stream.
pub fn make_random(t_final: f64, n: usize, seed: u64) -> Result<TimeMesh> {
    check_common(t_final, n)?;
    let s = random_weights(n, seed);
    let total: f64 = s.iter().sum();
    TimeMesh::from_steps(s.iter().map(|w| t_final * w / total))
}

/// Head and tail sizes of the composite mesh: `(T_0, N_0, N_1)`.
pub fn composite_split(t_final: f64, n: usize, gamma: f64) -> Result<(f64, usize, usize)> {
    check_common(t_final, n)?;
    if !(gamma >= 1.0 && gamma.is_finite()) {
        return param(format!("grading exponent must be >= 1, got {gamma}"));
    }
    let t0 = (1.0 / gamma).min(t_final);
    let n0 = (n as f64 / (t_final + 1.0 - 1.0 / gamma)).ceil() as usize;
    if n0 > n || n0 == 0 {
        return param(format!("graded head needs N_0 = {n0} steps but only N = {n} are available"));
    }
    if n0 == n && t0 < t_final {
        return param("random tail is empty but the graded head stops before T");
    }
    Ok((t0, n0, n - n0))
}

/// Graded head `t_k = T_0 (k/N_0)^gamma` on `[0, T_0]`, `T_0 = min(1/gamma, T)`,
/// followed by `N - N_0` normalized random steps on `[T_0, T]`.
pub fn make_composite(t_final: f64, n: usize, gamma: f64, seed: u64) -> Result<TimeMesh> {
    let (t0, n0, n1) = composite_split(t_final, n, gamma)?;
    let head = graded_from_levels(t0, n0, gamma);
    let mut mesh = TimeMesh::from_steps(head.steps.iter().copied())?;
    if n1 > 0 {
        let s = random_weights(n1, seed);
        let total: f64 = s.iter().sum();
        let span = t_final - t0;
        for w in s {
            mesh.push_step(span * w / total)?;
        }
    }
    Ok(mesh)
}
