//! Special functions: the fractional kernel `omega_beta`, Gamma, and the
//! Dirichlet eta function needed for the polylogarithm bound.

use crate::error::{Error, Result};

pub use statrs::function::gamma::{gamma, ln_gamma};

/// `omega_beta(t) = t^(beta-1) / Gamma(beta)` for `t > 0`, evaluated in log space.
pub fn omega(beta: f64, t: f64) -> f64 {
    debug_assert!(beta > 0.0 && t > 0.0);
    ((beta - 1.0) * t.ln() - ln_gamma(beta)).exp()
}

/// `B^p - (B - d)^p` for `0 <= d <= B`, without cancellation when `d << B`.
pub(crate) fn power_gap(b: f64, d: f64, p: f64) -> f64 {
    let lo = b - d;
    if lo <= 0.0 {
        return b.powf(p);
    }
    // B^p - L^p = L^p * expm1(p * ln(1 + d/L))
    lo.powf(p) * (p * (d / lo).ln_1p()).exp_m1()
}

/// Dirichlet eta `eta(s) = sum_{k>=1} (-1)^(k-1) k^(-s)` (analytically continued),
/// summed with the Cohen-Villegas-Zagier acceleration of alternating series.
///
/// The number of accelerated terms is doubled until two successive values agree
/// to `tol` (relative); `max_terms` bounds the search.
pub fn dirichlet_eta(s: f64, tol: f64, max_terms: usize) -> Result<f64> {
    if s == 1.0 {
        return Ok(std::f64::consts::LN_2);
    }
    let mut n = 16;
    let mut prev = cvz_eta(s, n);
    // (3 + sqrt 8)^n overflows beyond n ~ 400
    let cap = max_terms.min(384);
    while n * 2 <= cap {
        n *= 2;
        let next = cvz_eta(s, n);
        if (next - prev).abs() <= tol * next.abs().max(f64::MIN_POSITIVE) {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Numerical { what: format!("eta({s}) did not settle to {tol:e}"), iterations: n })
}

fn cvz_eta(s: f64, n: usize) -> f64 {
    let nf = n as f64;
    let mut d = (3.0 + 8f64.sqrt()).powi(n as i32);
    d = 0.5 * (d + 1.0 / d);
    let mut b = -1.0;
    let mut c = -d;
    let mut sum = 0.0;
    for k in 0..n {
        let kf = k as f64;
        c = b - c;
        sum += c * (kf + 1.0).powf(-s);
        b *= (kf + nf) * (kf - nf) / ((kf + 0.5) * (kf + 1.0));
    }
    sum / d
}

/// `Li_beta(-1) = sum_{k>=1} (-1)^k k^(-beta) = -eta(beta)`.
pub fn polylog_minus_one(beta: f64) -> Result<f64> {
    Ok(-dirichlet_eta(beta, 1e-12, 1 << 20)?)
}
