//! Fourier pseudo-spectral operators on the periodic square `(0, L)^2`.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{param, Error, Result};

/// Uniform `M x M` periodic grid with cached wavenumbers and FFT plans.
#[derive(Clone)]
pub struct Grid2D {
    length: f64,
    m: usize,
    /// `|k|^2` for every mode, row-major, same layout as the physical field.
    k2: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Grid2D {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid2D").field("length", &self.length).field("m", &self.m).finish()
    }
}

/// A real field on a [`Grid2D`], stored row-major (`values[i * M + j]` at `(x_j, y_i)`).
#[derive(Debug, Clone, PartialEq)]
pub struct Field2D {
    m: usize,
    values: Vec<f64>,
}

impl Grid2D {
    pub fn new(m: usize, length: f64) -> Result<Self> {
        if m < 4 || !m.is_multiple_of(2) {
            return param(format!("grid size must be even and >= 4, got {m}"));
        }
        if !(length > 0.0 && length.is_finite()) {
            return param(format!("domain length must be positive, got {length}"));
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        let scale = 2.0 * std::f64::consts::PI / length;
        let wave = |i: usize| {
            let p = if i < m / 2 { i as f64 } else { i as f64 - m as f64 };
            p * scale
        };
        let mut k2 = Vec::with_capacity(m * m);
        for i in 0..m {
            for j in 0..m {
                let (ky, kx) = (wave(i), wave(j));
                k2.push(kx * kx + ky * ky);
            }
        }
        Ok(Grid2D { length, m, k2, forward, inverse })
    }

    /// The `(0, 2 pi)^2` grid.
    pub fn periodic_2pi(m: usize) -> Result<Self> {
        Self::new(m, 2.0 * std::f64::consts::PI)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.m as f64
    }

    pub fn area(&self) -> f64 {
        self.length * self.length
    }

    /// `|k|^2` for every mode, row-major.
    pub fn k2(&self) -> &[f64] {
        &self.k2
    }

    pub fn coord(&self, j: usize) -> f64 {
        j as f64 * self.spacing()
    }

    pub fn zeros(&self) -> Field2D {
        Field2D { m: self.m, values: vec![0.0; self.m * self.m] }
    }

    pub fn constant(&self, c: f64) -> Field2D {
        Field2D { m: self.m, values: vec![c; self.m * self.m] }
    }

    /// Samples `f(x, y)` at the grid points.
    pub fn sample<F: Fn(f64, f64) -> f64>(&self, f: F) -> Field2D {
        let mut values = Vec::with_capacity(self.m * self.m);
        for i in 0..self.m {
            let y = self.coord(i);
            for j in 0..self.m {
                values.push(f(self.coord(j), y));
            }
        }
        Field2D { m: self.m, values }
    }

    pub fn field(&self, values: Vec<f64>) -> Result<Field2D> {
        if values.len() != self.m * self.m {
            return param(format!("expected {} values, got {}", self.m * self.m, values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return param("field has non-finite entries");
        }
        Ok(Field2D { m: self.m, values })
    }

    fn check(&self, u: &Field2D) {
        assert_eq!(u.m, self.m, "field does not belong to this grid");
    }

    // 2-D transform: FFT along rows, transpose, FFT along rows, transpose back.
    fn transform(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let m = self.m;
        plan.process(buf);
        transpose_in_place(buf, m);
        plan.process(buf);
        transpose_in_place(buf, m);
    }

    /// Unnormalized forward DFT.
    pub fn forward(&self, u: &Field2D) -> Vec<Complex64> {
        self.check(u);
        let mut buf: Vec<Complex64> = u.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut buf, &self.forward);
        buf
    }

    /// Inverse of [`Grid2D::forward`]; the imaginary part is discarded.
    pub fn inverse(&self, mut spec: Vec<Complex64>) -> Field2D {
        self.transform(&mut spec, &self.inverse);
        let norm = 1.0 / (self.m * self.m) as f64;
        Field2D { m: self.m, values: spec.iter().map(|c| c.re * norm).collect() }
    }

    /// Multiplies every mode by `symbol(|k|^2)`.
    pub fn apply_symbol<F: Fn(f64) -> f64>(&self, u: &Field2D, symbol: F) -> Field2D {
        let mut spec = self.forward(u);
        for (c, &q) in spec.iter_mut().zip(&self.k2) {
            *c *= symbol(q);
        }
        self.inverse(spec)
    }

    pub fn laplacian(&self, u: &Field2D) -> Field2D {
        self.apply_symbol(u, |q| -q)
    }

    /// `(-Delta)^{-1} u` on zero-mean fields; the zero mode of the result is 0.
    pub fn inv_neg_laplacian(&self, u: &Field2D) -> Result<Field2D> {
        self.check_zero_mean(u)?;
        Ok(self.apply_symbol(u, |q| if q > 0.0 { 1.0 / q } else { 0.0 }))
    }

    fn check_zero_mean(&self, u: &Field2D) -> Result<()> {
        let mean = u.mean();
        if mean.abs() > 1e-10 * u.max_abs().max(1.0) {
            return Err(Error::Domain(format!("(-Delta)^-1 needs a zero-mean field, mean is {mean:e}")));
        }
        Ok(())
    }

    /// Grid inner product `h^2 sum u v`.
    pub fn inner(&self, u: &Field2D, v: &Field2D) -> f64 {
        self.check(u);
        self.check(v);
        let h = self.spacing();
        h * h * u.values.iter().zip(&v.values).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn norm_sq(&self, u: &Field2D) -> f64 {
        self.inner(u, u)
    }

    pub fn norm(&self, u: &Field2D) -> f64 {
        self.norm_sq(u).sqrt()
    }

    /// `|grad u|^2 = (L^2 / M^4) sum |k|^2 |u_k|^2`.
    pub fn h1_semi_sq(&self, u: &Field2D) -> f64 {
        let spec = self.forward(u);
        self.parseval_scale() * spec.iter().zip(&self.k2).map(|(c, q)| q * c.norm_sqr()).sum::<f64>()
    }

    /// `h^2 sum u^4`.
    pub fn l4_pow4(&self, u: &Field2D) -> f64 {
        let h = self.spacing();
        h * h * u.values.iter().map(|v| (v * v) * (v * v)).sum::<f64>()
    }

    /// `|u|_{-1}^2 = ((-Delta)^{-1} u, u)`.
    pub fn hminus1_sq(&self, u: &Field2D) -> Result<f64> {
        self.check_zero_mean(u)?;
        let spec = self.forward(u);
        Ok(self.parseval_scale()
            * spec.iter().zip(&self.k2).filter(|(_, &q)| q > 0.0).map(|(c, q)| c.norm_sqr() / q).sum::<f64>())
    }

    /// `(u, 1)`.
    pub fn volume(&self, u: &Field2D) -> f64 {
        let h = self.spacing();
        h * h * u.values.iter().sum::<f64>()
    }

    /// `|u|^2` evaluated from the spectrum; equals the grid sum by Parseval.
    pub fn spectral_norm_sq(&self, u: &Field2D) -> f64 {
        self.parseval_scale() * self.forward(u).iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    fn parseval_scale(&self) -> f64 {
        let m2 = (self.m * self.m) as f64;
        self.area() / (m2 * m2)
    }

    /// All norms of `u` and the inner product with `v`; `hminus1` is `None` off the zero-mean space.
    pub fn norms(&self, u: &Field2D, v: &Field2D) -> Norms {
        Norms {
            l2_inner: self.inner(u, v),
            l2: self.norm(u),
            h1_semi: self.h1_semi_sq(u).sqrt(),
            l4_pow4: self.l4_pow4(u),
            hminus1: self.hminus1_sq(u).ok().map(f64::sqrt),
            volume: self.volume(u),
        }
    }

    /// Row-major CSV dump preceded by a `# M=..,L=..` comment line.
    pub fn to_csv(&self, u: &Field2D) -> String {
        use std::fmt::Write as _;
        let mut out = format!("# M={},L={}\n", self.m, self.length);
        for row in u.values.chunks(self.m) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub l2_inner: f64,
    pub l2: f64,
    pub h1_semi: f64,
    pub l4_pow4: f64,
    pub hminus1: Option<f64>,
    pub volume: f64,
}

fn transpose_in_place(buf: &mut [Complex64], m: usize) {
    for i in 0..m {
        for j in i + 1..m {
            buf.swap(i * m + j, j * m + i);
        }
    }
}

impl Field2D {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// `max |self - other|`.
    pub fn max_diff(&self, other: &Field2D) -> f64 {
        self.values.iter().zip(&other.values).fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Field2D {
        Field2D { m: self.m, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map<F: Fn(f64, f64) -> f64>(&self, other: &Field2D, f: F) -> Field2D {
        assert_eq!(self.m, other.m);
        Field2D { m: self.m, values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect() }
    }

    /// `self += c * other`.
    pub fn axpy(&mut self, c: f64, other: &Field2D) {
        assert_eq!(self.m, other.m);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
    }

    pub fn sub(&self, other: &Field2D) -> Field2D {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Field2D) -> Field2D {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn scale(&self, c: f64) -> Field2D {
        self.map(|v| c * v)
    }

    pub fn subtract_mean(&mut self) {
        let mean = self.mean();
        self.values.iter_mut().for_each(|v| *v -= mean);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_field(grid: &Grid2D, seed: u64) -> Field2D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        grid.field((0..grid.m() * grid.m()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid2D::new(6, 1.0).is_ok());
        assert!(Grid2D::new(5, 1.0).is_err());
        assert!(Grid2D::new(2, 1.0).is_err());
        assert!(Grid2D::new(8, 0.0).is_err());
        let g = Grid2D::new(8, 3.0).unwrap();
        assert!((g.spacing() * 8.0 - 3.0).abs() < 1e-15);
    }

    #[test]
    fn laplacian_of_eigenfunctions() {
        let g = Grid2D::periodic_2pi(32).unwrap();
        let u = g.sample(|x, y| x.sin() * y.sin());
        let lap = g.laplacian(&u);
        assert!(lap.max_diff(&u.scale(-2.0)) < 1e-10);
        assert!(g.laplacian(&g.constant(3.0)).max_abs() < 1e-12);
        let c = g.sample(|x, _| (3.0 * x).cos());
        assert!(g.laplacian(&c).max_diff(&c.scale(-9.0)) < 1e-10);
        // wavenumbers scale with the domain length
        let g = Grid2D::new(16, 1.0).unwrap();
        let u = g.sample(|x, _| (2.0 * PI * x).sin());
        assert!(g.laplacian(&u).max_diff(&u.scale(-4.0 * PI * PI)) < 1e-9);
    }

    #[test]
    fn inverse_laplacian() {
        let g = Grid2D::periodic_2pi(32).unwrap();
        let u = g.sample(|x, y| x.sin() * y.sin());
        assert!(g.inv_neg_laplacian(&u).unwrap().max_diff(&u.scale(0.5)) < 1e-12);
        assert!(matches!(g.inv_neg_laplacian(&g.constant(0.5)), Err(Error::Domain(_))));
        let mut r = random_field(&g, 3);
        r.subtract_mean();
        let back = g.laplacian(&g.inv_neg_laplacian(&r).unwrap()).scale(-1.0);
        assert!(back.max_diff(&r) < 1e-10);
    }

    #[test]
    fn norms_of_trig_field() {
        let g = Grid2D::periodic_2pi(32).unwrap();
        let u = g.sample(|x, y| x.sin() * y.sin());
        let n = g.norms(&u, &u);
        assert!((n.l2 * n.l2 - PI * PI).abs() < 1e-8);
        assert!((n.h1_semi * n.h1_semi - 2.0 * PI * PI).abs() < 1e-8);
        assert!((n.l2_inner - PI * PI).abs() < 1e-8);
        // |u|_{-1}^2 = |u|^2 / 2
        assert!((n.hminus1.unwrap().powi(2) - PI * PI / 2.0).abs() < 1e-8);
        // integral of sin^4 x sin^4 y = (3 pi / 4)^2
        assert!((n.l4_pow4 - (0.75 * PI).powi(2)).abs() < 1e-8);
        assert!(n.volume.abs() < 1e-12);
        assert!((g.volume(&g.constant(1.0)) - 4.0 * PI * PI).abs() < 1e-12);
        assert!(g.norms(&g.constant(1.0), &u).hminus1.is_none());
    }

    #[test]
    fn parseval_and_self_adjointness() {
        let g = Grid2D::new(16, 3.0).unwrap();
        for seed in 0..5 {
            let u = random_field(&g, seed);
            let v = random_field(&g, seed + 100);
            assert!((g.spectral_norm_sq(&u) - g.norm_sq(&u)).abs() < 1e-10 * g.norm_sq(&u));
            let a = g.inner(&g.laplacian(&u), &v);
            let b = g.inner(&u, &g.laplacian(&v));
            assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
            // |grad u|^2 = -(Delta u, u)
            let grad = g.h1_semi_sq(&u);
            assert!((grad + g.inner(&g.laplacian(&u), &u)).abs() < 1e-10 * grad);
        }
    }

    #[test]
    fn interpolation_inequality() {
        let g = Grid2D::periodic_2pi(16).unwrap();
        for seed in 0..10 {
            let mut u = random_field(&g, seed);
            u.subtract_mean();
            let lhs = g.norm_sq(&u);
            let rhs = g.h1_semi_sq(&u).sqrt() * g.hminus1_sq(&u).unwrap().sqrt();
            assert!(lhs <= rhs * (1.0 + 1e-12));
        }
    }

    #[test]
    fn csv_layout() {
        let g = Grid2D::new(4, 1.0).unwrap();
        let csv = g.to_csv(&g.constant(0.5));
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("# M=4,L=1"));
        assert_eq!(lines.next(), Some("0.5,0.5,0.5,0.5"));
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn grid_is_shareable_across_threads() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<Grid2D>();
        assert_send_sync::<Field2D>();
    }
}
