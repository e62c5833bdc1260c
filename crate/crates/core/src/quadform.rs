//! The real quadratic form `2 sum_k w_k sum_j a_{k-j}^{(k)} w_j` of a kernel
//! table, its minimum eigenvalue, and the closed-form lower bounds it is
//! compared against.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::kernels::{check_alpha, CompanionKernels, KernelFamily, KernelTable};
use crate::special::{gamma, polylog_minus_one};

/// The symmetric matrix `B = A + A^T`, `A_{kj} = a_{k-j}^{(k)}` for `j <= k`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadFormMatrix {
    pub matrix: DMatrix<f64>,
}

impl QuadFormMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `w^T B w`.
    pub fn eval(&self, w: &[f64]) -> f64 {
        let v = nalgebra::DVector::from_column_slice(w);
        v.dot(&(&self.matrix * &v))
    }
}

pub fn assemble(table: &KernelTable, n: usize) -> Result<QuadFormMatrix> {
    if n == 0 || n > table.len() {
        return param(format!("need 1 <= n <= {} rows, got {n}", table.len()));
    }
    let mut m = DMatrix::zeros(n, n);
    for k in 1..=n {
        let row = &table.row(k).weights;
        for j in 1..=k {
            let a = row[k - j];
            m[(k - 1, j - 1)] += a;
            m[(j - 1, k - 1)] += a;
        }
    }
    Ok(QuadFormMatrix { matrix: m })
}

/// `2 sum_{k=1}^n w_k sum_{j=1}^k a_{k-j}^{(k)} w_j`, evaluated directly from the table.
pub fn quadratic_form(table: &KernelTable, w: &[f64]) -> f64 {
    let n = w.len();
    2.0 * (1..=n)
        .map(|k| {
            let row = &table.row(k).weights;
            w[k - 1] * (1..=k).map(|j| row[k - j] * w[j - 1]).sum::<f64>()
        })
        .sum::<f64>()
}

pub const DEFAULT_EIGEN_TOL: f64 = 1e-8;
const EIGEN_MAX_ITER: usize = 10_000;

/// Smallest eigenvalue of `B`; negative values are returned as they are.
///
/// `tol` is the relative deflation threshold of the implicit QR sweep; it is
/// tightened to machine precision because eigenvalues far below the matrix
/// norm (fixed-ratio meshes) otherwise lose all digits.
pub fn min_eigenvalue(b: &QuadFormMatrix, tol: f64) -> Result<f64> {
    if b.dim() == 0 {
        return param("empty matrix");
    }
    let eps = (tol * 1e-8).max(f64::EPSILON);
    let eig = b.matrix.clone().try_symmetric_eigen(eps, EIGEN_MAX_ITER).ok_or_else(|| Error::Numerical {
        what: "symmetric eigensolver did not converge".into(),
        iterations: EIGEN_MAX_ITER,
    })?;
    Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

/// `min_{1<=k<=n} a_0^{(k)}`.
pub fn sigma_l1(table: &KernelTable, n: usize) -> f64 {
    (1..=n.min(table.len())).map(|k| table.weight(k, 0)).fold(f64::INFINITY, f64::min)
}

fn check_uniform_args(alpha: f64, tau: f64) -> Result<()> {
    check_alpha(alpha)?;
    if !(tau > 0.0 && tau.is_finite()) {
        return param(format!("step must be positive, got {tau}"));
    }
    Ok(())
}

/// Earlier uniform-mesh bound `(2/(n+1))^alpha / (tau^alpha Gamma(1-alpha))`.
pub fn sigma_star(alpha: f64, tau: f64, n: usize) -> Result<f64> {
    check_uniform_args(alpha, tau)?;
    Ok((2.0 / (n as f64 + 1.0)).powf(alpha) / (tau.powf(alpha) * gamma(1.0 - alpha)))
}

/// Uniform-mesh bound from the polylogarithm at `-1`, scaled for the matrix `A + A^T`:
/// `-4 Li_{alpha-1}(-1) / (Gamma(2-alpha) tau^alpha)`.
///
/// This is the value at `theta = pi` of the symbol `2 a_0 + 2 sum_j a_j cos(j theta)` of the
/// uniform Toeplitz matrix, hence the infimum of its spectrum.
pub fn sigma_star_polylog(alpha: f64, tau: f64) -> Result<f64> {
    check_uniform_args(alpha, tau)?;
    let li = polylog_minus_one(alpha - 1.0)?;
    Ok(-4.0 * li / (gamma(2.0 - alpha) * tau.powf(alpha)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub family: KernelFamily,
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    /// `min_k a_0^{(k)}`; only meaningful for the L1 family.
    pub sigma_l1: Option<f64>,
    /// Trials with `w^T B w < sigma_l1 |w|^2` beyond round-off.
    pub sigma_violations: usize,
    /// Trials violating the sharper inequality with the DCC-weighted remainder.
    pub remainder_violations: usize,
    /// Smallest `(w^T B w - rhs) / |w|^2` over the trials, for the remainder inequality.
    pub min_margin: f64,
}

impl BoundReport {
    pub fn passed(&self) -> bool {
        self.sigma_violations == 0 && self.remainder_violations == 0
    }
}

/// Checks the kernel lower bounds on random vectors `w`, entries uniform in (-1, 1).
///
/// For L1: `w^T B w >= sum_k a_0^{(k)} w_k^2 + sum_k p_{n-k}^{(n)} (sum_j a_{k-j}^{(k)} w_j)^2`
/// and `w^T B w >= sigma_l1 |w|^2`. For L1h the remainder uses the auxiliary kernels and their
/// DCC kernels and there is no `a_0` term. Violations are counted, not raised.
pub fn verify_lower_bound(table: &KernelTable, n: usize, trials: usize, seed: u64) -> Result<BoundReport> {
    let family = table.family();
    let (weights_table, leading) = match family {
        KernelFamily::L1 => (table.clone(), true),
        KernelFamily::L1h => (table.auxiliary()?, false),
        other => return Err(Error::Usage(format!("lower-bound check is defined for l1 and l1h tables, not {other}"))),
    };
    if n == 0 || n > table.len() {
        return param(format!("need 1 <= n <= {} rows, got {n}", table.len()));
    }
    let comp = CompanionKernels::build(&weights_table, n)?;
    let sigma = leading.then(|| sigma_l1(table, n));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = BoundReport {
        family,
        n,
        trials,
        seed,
        sigma_l1: sigma,
        sigma_violations: 0,
        remainder_violations: 0,
        min_margin: f64::INFINITY,
    };
    for _ in 0..trials {
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm2: f64 = w.iter().map(|x| x * x).sum();
        let form = quadratic_form(table, &w);
        let mut rhs = 0.0;
        for k in 1..=n {
            let conv: f64 = (1..=k).map(|j| weights_table.weight(k, k - j) * w[j - 1]).sum();
            rhs += comp.p(n, n - k) * conv * conv;
            if leading {
                rhs += table.weight(k, 0) * w[k - 1] * w[k - 1];
            }
        }
        let slack = 1e-10 * (form.abs() + rhs.abs()).max(norm2);
        if form < rhs - slack {
            report.remainder_violations += 1;
        }
        if let Some(s) = sigma {
            if form < s * norm2 - 1e-10 * norm2 * s.max(1.0) {
                report.sigma_violations += 1;
            }
        }
        if norm2 > 0.0 {
            report.min_margin = report.min_margin.min((form - rhs) / norm2);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timemesh::{make_graded, make_random, make_uniform};

    fn table(family: KernelFamily, alpha: f64, mesh: crate::TimeMesh) -> KernelTable {
        KernelTable::new(family, alpha, mesh).unwrap()
    }

    #[test]
    fn assemble_small_cases() {
        let t = table(KernelFamily::L1, 0.5, make_uniform(2.0, 2).unwrap());
        let b1 = assemble(&t, 1).unwrap();
        assert_eq!(b1.matrix[(0, 0)], 2.0 * t.weight(1, 0));
        let b = assemble(&t, 2).unwrap();
        assert_eq!(b.matrix[(0, 1)], t.weight(2, 1));
        assert_eq!(b.matrix[(1, 0)], t.weight(2, 1));
        assert_eq!(b.matrix[(1, 1)], 2.0 * t.weight(2, 0));
        assert_eq!(b.eval(&[1.0, 0.0]), 2.0 * t.weight(1, 0));
        assert!(assemble(&t, 3).is_err());
    }

    #[test]
    fn two_by_two_eigenvalue() {
        let t = table(KernelFamily::L1, 0.5, make_uniform(2.0, 2).unwrap());
        let lam = min_eigenvalue(&assemble(&t, 2).unwrap(), DEFAULT_EIGEN_TOL).unwrap();
        let a0 = 1.0 / gamma(1.5);
        let a1 = (2f64.sqrt() - 1.0) / gamma(1.5);
        assert!((lam - (2.0 * a0 - a1)).abs() < 1e-12);
        assert!((lam - 1.789368).abs() < 1e-6);
        let two_i = QuadFormMatrix { matrix: DMatrix::identity(3, 3) * 2.0 };
        assert!((min_eigenvalue(&two_i, 1e-8).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn form_matches_matrix_on_random_vectors() {
        let t = table(KernelFamily::L1h, 0.3, make_random(1.0, 30, 8).unwrap());
        let b = assemble(&t, 30).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let w: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
            let direct = quadratic_form(&t, &w);
            assert!((direct - b.eval(&w)).abs() <= 1e-12 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn sigma_l1_uniform_closed_form() {
        for alpha in [0.1, 0.5, 0.9] {
            let t = table(KernelFamily::L1, alpha, make_uniform(1.0, 100).unwrap());
            let want = 1.0 / (gamma(2.0 - alpha) * 0.01f64.powf(alpha));
            assert!((sigma_l1(&t, 100) - want).abs() < 1e-10 * want);
        }
    }

    #[test]
    fn graded_sigma_l1() {
        let t = table(KernelFamily::L1, 0.5, make_graded(1.0, 100, 2.0).unwrap());
        assert!((sigma_l1(&t, 100) - 8.00).abs() < 0.005);
    }

    #[test]
    fn sigma_star_value_and_ratio() {
        let s = sigma_star(0.5, 0.01, 100).unwrap();
        let direct = (2.0f64 / 101.0).sqrt() / (0.1 * std::f64::consts::PI.sqrt());
        assert!((s - direct).abs() < 1e-14);
        assert!((s - 0.7940).abs() < 1e-4);
        for alpha in [0.1, 0.5, 0.9] {
            for n in [10usize, 100, 400] {
                let tau = 1.0 / n as f64;
                let l1 = 1.0 / (gamma(2.0 - alpha) * tau.powf(alpha));
                let ratio = l1 / sigma_star(alpha, tau, n).unwrap();
                let want = 2f64.powf(-alpha) * (n as f64 + 1.0).powf(alpha) / (1.0 - alpha);
                assert!((ratio - want).abs() < 1e-10 * want);
            }
        }
    }

    #[test]
    fn polylog_bound_matches_uniform_spectrum() {
        // eta(-1/2) = 0.3801048126...
        let s = sigma_star_polylog(0.5, 0.01).unwrap();
        let want = 4.0 * 0.380_104_812_609_684 / (gamma(1.5) * 0.1);
        assert!((s - want).abs() < 1e-8 * want);
        assert!((s - 17.156).abs() < 1e-3);
        for alpha in [0.1, 0.5, 0.9] {
            let t = table(KernelFamily::L1, alpha, make_uniform(1.0, 200).unwrap());
            let lam = min_eigenvalue(&assemble(&t, 200).unwrap(), 1e-10).unwrap();
            let star = sigma_star_polylog(alpha, 1.0 / 200.0).unwrap();
            assert!(lam >= star, "alpha={alpha}: {lam} < {star}");
            assert!(lam - star < 0.01 * star);
            assert!(sigma_l1(&t, 200) <= star);
        }
    }

    #[test]
    fn lower_bounds_hold_on_random_vectors() {
        for seed in 0..5 {
            let mesh = make_random(1.0, 40, seed).unwrap();
            for alpha in [0.1, 0.5, 0.9] {
                let t = table(KernelFamily::L1, alpha, mesh.clone());
                let r = verify_lower_bound(&t, 40, 40, seed).unwrap();
                assert!(r.passed(), "{r:?}");
                let t = table(KernelFamily::L1h, alpha, mesh.clone());
                let r = verify_lower_bound(&t, 40, 40, seed).unwrap();
                assert!(r.passed(), "{r:?}");
                assert!(r.sigma_l1.is_none());
            }
        }
        let t = table(KernelFamily::L1a, 0.5, make_uniform(1.0, 5).unwrap());
        assert!(matches!(verify_lower_bound(&t, 5, 1, 0), Err(Error::Usage(_))));
    }

    #[test]
    fn tiny_vectors_pass() {
        let t = table(KernelFamily::L1, 0.5, make_uniform(1.0, 10).unwrap());
        let w = vec![1e-300; 10];
        let s = sigma_l1(&t, 10);
        let form = quadratic_form(&t, &w);
        assert!(form >= s * w.iter().map(|x| x * x).sum::<f64>() - 1e-300);
    }
}
