//! Time stepping of the time-fractional Cahn-Hilliard equation
//! `D^alpha phi = kappa Lap mu`, `mu = phi^3 - phi - eps^2 Lap phi`,
//! with the backward-Euler type L1 scheme and the Crank-Nicolson type
//! L1h and L1a schemes.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::adaptive::{AdaptiveSchedule, StepController, StepPhase};
use crate::error::{param, Error, Result};
use crate::kernels::{check_alpha, CompanionKernels, KernelFamily, KernelTable};
use crate::special::gamma;
use crate::spectral::{Field2D, Grid2D};
use crate::timemesh::TimeMesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    L1,
    L1h,
    L1a,
}

impl Scheme {
    pub fn family(self) -> KernelFamily {
        match self {
            Scheme::L1 => KernelFamily::L1,
            Scheme::L1h => KernelFamily::L1h,
            Scheme::L1a => KernelFamily::L1a,
        }
    }

    /// Weight of the new level in the implicit terms: 1 at `t_n`, 1/2 at `t_{n-1/2}`.
    fn implicit_weight(self) -> f64 {
        match self {
            Scheme::L1 => 1.0,
            Scheme::L1h | Scheme::L1a => 0.5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::L1 => "l1",
            Scheme::L1h => "l1h",
            Scheme::L1a => "l1a",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Scheme::L1),
            "l1h" => Ok(Scheme::L1h),
            "l1a" => Ok(Scheme::L1a),
            other => param(format!("unknown scheme '{other}'")),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub kappa: f64,
    pub epsilon: f64,
    pub alpha: f64,
}

impl ModelParams {
    pub fn new(kappa: f64, epsilon: f64, alpha: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return param(format!("mobility must be positive, got {kappa}"));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return param(format!("interface width must be positive, got {epsilon}"));
        }
        check_alpha(alpha)?;
        Ok(ModelParams { kappa, epsilon, alpha })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Restriction {
    pub ok: bool,
    pub bound: f64,
}

/// Largest step for which the scheme's nonlinear equation is uniquely solvable:
/// `(4 eps^2 / (kappa Gamma(2 - alpha)))^(1/alpha)` for L1, twice that for L1h/L1a.
pub fn restriction_bound(scheme: Scheme, params: &ModelParams) -> f64 {
    let e2 = params.epsilon * params.epsilon;
    let base = (4.0 * e2 / (params.kappa * gamma(2.0 - params.alpha))).powf(1.0 / params.alpha);
    match scheme {
        Scheme::L1 => base,
        Scheme::L1h | Scheme::L1a => 2.0 * base,
    }
}

pub fn check_restriction(scheme: Scheme, params: &ModelParams, tau: f64) -> Restriction {
    let bound = restriction_bound(scheme, params);
    Restriction { ok: tau <= bound, bound }
}

/// `f(phi) = phi^3 - phi`.
pub fn bulk_force(phi: &Field2D) -> Field2D {
    phi.map(|v| v * v * v - v)
}

/// `(phi_n^3)/3 + phi_n phi_p^2 / 2 + (phi_p^3)/6 - (phi_n + phi_p)/2`.
pub fn nonlinear_midpoint(phi_n: &Field2D, phi_prev: &Field2D) -> Field2D {
    phi_n.zip_map(phi_prev, |n, p| n * n * n / 3.0 + 0.5 * n * p * p + p * p * p / 6.0 - 0.5 * (n + p))
}

/// `E = (eps^2/2) |grad phi|^2 + (F(phi), 1)`, `F = (phi^2 - 1)^2 / 4`.
pub fn energy_original(grid: &Grid2D, phi: &Field2D, params: &ModelParams) -> f64 {
    let h = grid.spacing();
    let bulk: f64 = phi.values().iter().map(|v| 0.25 * (v * v - 1.0) * (v * v - 1.0)).sum();
    0.5 * params.epsilon * params.epsilon * grid.h1_semi_sq(phi) + h * h * bulk
}

/// Chemical potential `mu = f(phi) - eps^2 Lap phi`.
pub fn chemical_potential(grid: &Grid2D, phi: &Field2D, params: &ModelParams) -> Field2D {
    let e2 = params.epsilon * params.epsilon;
    let lap = grid.laplacian(phi);
    bulk_force(phi).zip_map(&lap, |f, l| f - e2 * l)
}

/// `sqrt(|phi|^2 + |grad phi|^2)`.
pub fn h1_norm(grid: &Grid2D, phi: &Field2D) -> f64 {
    (grid.norm_sq(phi) + grid.h1_semi_sq(phi)).sqrt()
}

/// Energy-based bound `sqrt((4 E_0 + (2 eps^2 + eps^4) |Omega|) / (2 eps^2))` on `|phi^n|_{H^1}`.
pub fn h1_bound(grid: &Grid2D, initial_energy: f64, params: &ModelParams) -> f64 {
    let e2 = params.epsilon * params.epsilon;
    ((4.0 * initial_energy + (2.0 * e2 + e2 * e2) * grid.area()) / (2.0 * e2)).sqrt()
}

/// Explicit right-hand side re-evaluated at each fixed-point iterate.
pub type IterateRhs<'a> = &'a dyn Fn(&Field2D) -> Vec<Complex64>;

#[derive(Debug, Clone)]
pub struct FixedPointOutcome {
    pub phi: Field2D,
    pub iterations: usize,
    /// Max-norm difference of the last two iterates.
    pub last_update: f64,
}

/// Solves `symbol * phi_hat = constant_rhs + iterate_rhs(phi)` by fixed-point iteration.
///
/// Each sweep is one diagonal solve in Fourier space. With no iterate-dependent
/// part the problem is linear and one sweep is exact. Stops when successive
/// iterates differ by at most `tol` in the maximum norm.
pub fn fixed_point_solve(
    grid: &Grid2D,
    symbol: &[f64],
    constant_rhs: &[Complex64],
    iterate_rhs: Option<IterateRhs<'_>>,
    guess: &Field2D,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPointOutcome> {
    let min_symbol = symbol.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min_symbol > 0.0) {
        return Err(Error::Splitting { min_symbol });
    }
    let solve = |extra: Option<Vec<Complex64>>| {
        let mut spec: Vec<Complex64> = constant_rhs.to_vec();
        if let Some(e) = extra {
            spec.iter_mut().zip(e).for_each(|(s, e)| *s += e);
        }
        spec.iter_mut().zip(symbol).for_each(|(s, &d)| *s /= d);
        grid.inverse(spec)
    };
    let Some(rhs) = iterate_rhs else {
        let phi = solve(None);
        let last_update = phi.max_diff(guess);
        return Ok(FixedPointOutcome { phi, iterations: 1, last_update });
    };
    let mut phi = guess.clone();
    let mut update = f64::INFINITY;
    for it in 1..=max_iter {
        let next = solve(Some(rhs(&phi)));
        update = next.max_diff(&phi);
        phi = next;
        if !update.is_finite() {
            break;
        }
        if update <= tol {
            return Ok(FixedPointOutcome { phi, iterations: it, last_update: update });
        }
    }
    Err(Error::Solver { iterations: max_iter, residual: update })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Take L1 steps beyond the solvability restriction instead of failing.
    pub allow_restriction_violation: bool,
    /// Maintain the companion kernels and evaluate the variational energy each step.
    pub track_variational: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-12, max_iter: 500, allow_restriction_violation: false, track_variational: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyRecord {
    pub n: usize,
    pub t: f64,
    pub tau: f64,
    pub volume: f64,
    pub energy: f64,
    /// Variational energy; `None` for L1a or when not tracked.
    pub energy_var: Option<f64>,
    pub fp_iters: usize,
    /// Max-norm residual of the full discrete equation at the accepted iterate.
    pub residual: f64,
    pub restriction_ok: bool,
}

/// State of one time-stepping run.
#[derive(Debug, Clone)]
pub struct Solver {
    scheme: Scheme,
    params: ModelParams,
    opts: SolverOptions,
    grid: Grid2D,
    table: KernelTable,
    /// AuxL1h kernels (L1h only).
    aux: Option<KernelTable>,
    companions: CompanionKernels,
    phi: Field2D,
    initial_energy: f64,
    increments: Vec<Field2D>,
    grad_mu_sq: Vec<f64>,
    weighted_increment_hminus1: Vec<f64>,
}

impl Solver {
    pub fn new(
        scheme: Scheme,
        params: ModelParams,
        grid: Grid2D,
        initial: Field2D,
        opts: SolverOptions,
    ) -> Result<Self> {
        if initial.m() != grid.m() {
            return param("initial field does not match the grid");
        }
        let table = KernelTable::empty(scheme.family(), params.alpha)?;
        let aux = match scheme {
            Scheme::L1h => Some(KernelTable::empty(KernelFamily::AuxL1h, params.alpha)?),
            _ => None,
        };
        let initial_energy = energy_original(&grid, &initial, &params);
        Ok(Solver {
            scheme,
            params,
            opts,
            grid,
            table,
            aux,
            companions: CompanionKernels::new(),
            phi: initial,
            initial_energy,
            increments: Vec::new(),
            grad_mu_sq: Vec::new(),
            weighted_increment_hminus1: Vec::new(),
        })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn phi(&self) -> &Field2D {
        &self.phi
    }

    pub fn mesh(&self) -> &TimeMesh {
        self.table.mesh()
    }

    pub fn steps_taken(&self) -> usize {
        self.table.len()
    }

    pub fn time(&self) -> f64 {
        self.table.mesh().final_time()
    }

    pub fn initial_energy(&self) -> f64 {
        self.initial_energy
    }

    pub fn increments(&self) -> &[Field2D] {
        &self.increments
    }

    pub fn grad_mu_sq(&self) -> &[f64] {
        &self.grad_mu_sq
    }

    pub fn weighted_increment_hminus1(&self) -> &[f64] {
        &self.weighted_increment_hminus1
    }

    pub fn kernel_table(&self) -> &KernelTable {
        &self.table
    }

    /// Time at which a step of length `tau` from the current level collocates the equation.
    pub fn collocation_time(&self, tau: f64) -> f64 {
        match self.scheme {
            Scheme::L1 => self.time() + tau,
            Scheme::L1h | Scheme::L1a => self.time() + 0.5 * tau,
        }
    }

    pub fn restriction_bound(&self) -> f64 {
        restriction_bound(self.scheme, &self.params)
    }

    pub fn initial_record(&self) -> EnergyRecord {
        EnergyRecord {
            n: 0,
            t: 0.0,
            tau: 0.0,
            volume: self.grid.volume(&self.phi),
            energy: self.initial_energy,
            energy_var: (self.scheme != Scheme::L1a && self.opts.track_variational).then_some(self.initial_energy),
            fp_iters: 0,
            residual: 0.0,
            restriction_ok: true,
        }
    }

    fn stabilization(&self) -> f64 {
        let m2 = self.phi.max_abs().powi(2).max(1.0);
        // half the spread of the derivative of the explicit cubic part
        match self.scheme {
            Scheme::L1 => 1.5 * m2,
            Scheme::L1h | Scheme::L1a => 0.75 * m2,
        }
    }

    /// Advances one step of length `tau`; `forcing` is the source sampled at [`Solver::collocation_time`].
    pub fn step(&mut self, tau: f64, forcing: Option<&Field2D>) -> Result<EnergyRecord> {
        let restriction = check_restriction(self.scheme, &self.params, tau);
        if self.scheme == Scheme::L1 && !restriction.ok && !self.opts.allow_restriction_violation {
            return Err(Error::StepRestriction { tau, bound: restriction.bound });
        }
        let mut table = self.table.clone();
        table.push_step(tau)?;
        let n = table.len();
        let row = &table.row(n).weights;
        let a0 = row[0];
        let mut history = self.grid.zeros();
        for (k, inc) in self.increments.iter().enumerate() {
            history.axpy(row[n - 1 - k], inc);
        }

        let kappa = self.params.kappa;
        let e2 = self.params.epsilon * self.params.epsilon;
        let c = self.scheme.implicit_weight();
        let s = self.stabilization();
        let prev = self.phi.clone();
        let k2 = self.grid.k2().to_vec();

        let mut known = prev.scale(a0).sub(&history);
        if let Some(g) = forcing {
            known.axpy(1.0, g);
        }
        let mut constant = self.grid.forward(&known);
        if c < 1.0 {
            // explicit half of the linear terms at t_{n-1}: kappa Lap(-phi_p) - kappa eps^2 Lap^2 phi_p
            let prev_hat = self.grid.forward(&prev);
            for ((cst, p), &q) in constant.iter_mut().zip(&prev_hat).zip(&k2) {
                *cst += (1.0 - c) * kappa * (q - e2 * q * q) * p;
            }
        }
        let symbol: Vec<f64> = k2.iter().map(|&q| a0 + kappa * (s - c) * q + c * kappa * e2 * q * q).collect();
        let scheme = self.scheme;
        let grid = &self.grid;
        let cubic = |phi: &Field2D| -> Field2D {
            match scheme {
                Scheme::L1 => phi.map(|v| v * v * v),
                Scheme::L1h | Scheme::L1a => {
                    phi.zip_map(&prev, |n, p| n * n * n / 3.0 + 0.5 * n * p * p + p * p * p / 6.0)
                }
            }
        };
        let explicit = |phi: &Field2D| -> Vec<Complex64> {
            let stab = cubic(phi).zip_map(phi, |nl, v| nl - s * v);
            let mut spec = grid.forward(&stab);
            spec.iter_mut().zip(&k2).for_each(|(z, &q)| *z *= -kappa * q);
            spec
        };
        let outcome =
            fixed_point_solve(grid, &symbol, &constant, Some(&explicit), &prev, self.opts.tol, self.opts.max_iter)?;

        // residual of the unsplit equation
        let lhs_hat = grid.forward(&outcome.phi);
        let mut res_hat = explicit(&outcome.phi);
        for (((r, l), cst), d) in res_hat.iter_mut().zip(&lhs_hat).zip(&constant).zip(&symbol) {
            *r = d * l - cst - *r;
        }
        let residual = grid.inverse(res_hat).max_abs();

        let phi = outcome.phi;
        let increment = phi.sub(&prev);
        match self.scheme {
            Scheme::L1 => {
                let mu = chemical_potential(grid, &phi, &self.params);
                self.grad_mu_sq.push(grid.h1_semi_sq(&mu));
            }
            Scheme::L1h => {
                let aux = self.aux.as_mut().expect("L1h keeps auxiliary kernels");
                aux.push_step(tau)?;
                // sum_l a^_{n-l} d_tau phi^l = history + 2 a_0 d_tau phi^n
                let mut weighted = history.clone();
                weighted.axpy(aux.weight(n, 0), &increment);
                let value = grid.hminus1_sq(&weighted).unwrap_or(f64::NAN);
                self.weighted_increment_hminus1.push(value);
            }
            Scheme::L1a => {}
        }
        self.table = table;
        self.increments.push(increment);
        self.phi = phi;

        let energy = energy_original(&self.grid, &self.phi, &self.params);
        let energy_var = if self.opts.track_variational { self.variational_energy(energy)? } else { None };
        Ok(EnergyRecord {
            n,
            t: self.time(),
            tau,
            volume: self.grid.volume(&self.phi),
            energy,
            energy_var,
            fp_iters: outcome.iterations,
            residual,
            restriction_ok: restriction.ok,
        })
    }

    fn variational_energy(&mut self, energy: f64) -> Result<Option<f64>> {
        let n = self.table.len();
        match self.scheme {
            Scheme::L1 => {
                self.companions.extend_to(&self.table, n)?;
                let dcc = self.companions.dcc_row(n);
                let sum: f64 = (1..=n).map(|j| dcc[n - j] * self.grad_mu_sq[j - 1]).sum();
                Ok(Some(energy + 0.5 * self.params.kappa * sum))
            }
            Scheme::L1h => {
                let aux = self.aux.as_ref().expect("L1h keeps auxiliary kernels");
                self.companions.extend_to(aux, n)?;
                let dcc = self.companions.dcc_row(n);
                let sum: f64 = (1..=n).map(|j| dcc[n - j] * self.weighted_increment_hminus1[j - 1]).sum();
                Ok(sum.is_finite().then(|| energy + sum / (2.0 * self.params.kappa)))
            }
            Scheme::L1a => Ok(None),
        }
    }

    /// Companion kernels behind the variational energy (of the auxiliary table for L1h).
    pub fn companions(&self) -> &CompanionKernels {
        &self.companions
    }
}

/// How the run chooses its steps.
#[derive(Debug, Clone)]
pub enum Stepping {
    Mesh(TimeMesh),
    Adaptive(AdaptiveSchedule),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverTrace {
    pub scheme: Scheme,
    pub records: Vec<EnergyRecord>,
    /// Phase of each step (record `n` corresponds to entry `n - 1`).
    pub phases: Vec<StepPhase>,
}

impl SolverTrace {
    /// CSV `n,t,tau,volume,E,E_var,fp_iters` preceded by `#` comment lines.
    pub fn to_csv(&self, header_comments: &[String]) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        for line in header_comments {
            let _ = writeln!(out, "# {line}");
        }
        out.push_str("n,t,tau,volume,E,E_var,fp_iters\n");
        for r in &self.records {
            let var = r.energy_var.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{},{},{},{}", r.n, r.t, r.tau, r.volume, r.energy, var, r.fp_iters);
        }
        out
    }

    pub fn steps(&self) -> usize {
        self.records.len().saturating_sub(1)
    }
}

pub type Forcing<'a> = &'a (dyn Fn(f64) -> Field2D + Sync);

/// Runs `solver` over the given steps; `observer` sees the solver after every accepted step.
///
/// The source is sampled at [`Solver::collocation_time`], except for L1a which uses the mean of
/// its values at both ends of the step, so `forcing` must also accept `t = 0` there.
pub fn run(
    solver: &mut Solver,
    stepping: &Stepping,
    forcing: Option<Forcing<'_>>,
    observer: &mut dyn FnMut(&Solver, &EnergyRecord) -> Result<()>,
) -> Result<SolverTrace> {
    let mut trace = SolverTrace { scheme: solver.scheme(), records: vec![solver.initial_record()], phases: Vec::new() };
    let mut advance = |solver: &mut Solver, tau: f64, trace: &mut SolverTrace, phase| -> Result<()> {
        let g = forcing.map(|f| match solver.scheme() {
            // the averaged operator pairs with the averaged source
            Scheme::L1a => {
                let t = solver.time();
                let mut g = f(t);
                g.axpy(1.0, &f(t + tau));
                g.scale(0.5)
            }
            _ => f(solver.collocation_time(tau)),
        });
        let rec = solver.step(tau, g.as_ref())?;
        observer(solver, &rec)?;
        trace.records.push(rec);
        trace.phases.push(phase);
        Ok(())
    };
    match stepping {
        Stepping::Mesh(mesh) => {
            for &tau in mesh.steps() {
                advance(solver, tau, &mut trace, StepPhase::Adaptive)?;
            }
        }
        Stepping::Adaptive(schedule) => {
            let mut ctrl = StepController::new(*schedule)?;
            let bound = (solver.scheme() == Scheme::L1 && !solver.opts.allow_restriction_violation)
                .then(|| solver.restriction_bound());
            let mut rate = None;
            while let Some((tau, phase)) = ctrl.next(solver.time(), rate, bound) {
                advance(solver, tau, &mut trace, phase)?;
                let inc = solver.increments.last().expect("a step was taken");
                rate = Some(solver.grid.norm(inc) / tau);
            }
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timemesh::{make_random, make_uniform};

    fn params() -> ModelParams {
        ModelParams::new(0.01, 0.05, 0.5).unwrap()
    }

    #[test]
    fn midpoint_nonlinearity() {
        let g = Grid2D::new(4, 1.0).unwrap();
        let c = g.constant(0.7);
        let f = nonlinear_midpoint(&c, &c);
        assert!(f.max_diff(&g.constant(0.7f64.powi(3) - 0.7)) < 1e-15);
        let v = nonlinear_midpoint(&g.constant(1.0), &g.constant(-1.0));
        assert!(v.max_diff(&g.constant(2.0 / 3.0)) < 1e-15);
        assert_eq!(nonlinear_midpoint(&g.zeros(), &g.zeros()).max_abs(), 0.0);
    }

    #[test]
    fn restriction_bounds() {
        let b = restriction_bound(Scheme::L1, &params());
        assert!((b - (1.0 / gamma(1.5)).powi(2)).abs() < 1e-12);
        assert!((b - 1.2732).abs() < 1e-4);
        assert!((restriction_bound(Scheme::L1h, &params()) - 2.0 * b).abs() < 1e-12);
        assert_eq!(restriction_bound(Scheme::L1a, &params()), restriction_bound(Scheme::L1h, &params()));
        let p = ModelParams::new(0.01, 0.05, 1.0 - 1e-8).unwrap();
        assert!((restriction_bound(Scheme::L1, &p) - 4.0 * 0.0025 / 0.01).abs() < 1e-6);
        assert!(check_restriction(Scheme::L1, &params(), 1.0).ok);
        assert!(!check_restriction(Scheme::L1, &params(), 1.3).ok);
    }

    #[test]
    fn energies_of_simple_fields() {
        let g = Grid2D::periodic_2pi(32).unwrap();
        let p = params();
        assert!(energy_original(&g, &g.constant(1.0), &p).abs() < 1e-14);
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((energy_original(&g, &g.zeros(), &p) - pi2).abs() < 1e-12);
        let u = g.sample(|x, y| x.sin() * y.sin());
        let q = ModelParams::new(1.0, 0.5, 0.5).unwrap();
        let h = g.spacing();
        let quartic: f64 = u.values().iter().map(|v| 0.25 * (v * v - 1.0).powi(2)).sum::<f64>() * h * h;
        assert!((energy_original(&g, &u, &q) - (0.125 * 2.0 * pi2 + quartic)).abs() < 1e-10);
    }

    #[test]
    fn fixed_point_linear_and_splitting_errors() {
        let g = Grid2D::new(8, 1.0).unwrap();
        let rhs = g.sample(|x, _| (2.0 * std::f64::consts::PI * x).cos());
        let symbol: Vec<f64> = g.k2().iter().map(|q| 1.0 + q).collect();
        let out = fixed_point_solve(&g, &symbol, &g.forward(&rhs), None, &g.zeros(), 1e-12, 10).unwrap();
        assert_eq!(out.iterations, 1);
        let q = 4.0 * std::f64::consts::PI.powi(2);
        assert!(out.phi.max_diff(&rhs.scale(1.0 / (1.0 + q))) < 1e-14);
        let mut bad = symbol.clone();
        bad[0] = 0.0;
        let err = fixed_point_solve(&g, &bad, &g.forward(&rhs), None, &g.zeros(), 1e-12, 10).unwrap_err();
        assert!(matches!(err, Error::Splitting { .. }));
    }

    #[test]
    fn fixed_point_reports_non_convergence() {
        let g = Grid2D::new(4, 1.0).unwrap();
        let symbol = vec![1.0; 16];
        let rhs = g.forward(&g.constant(0.5));
        // phi = 0.5 + 2 phi diverges under iteration
        let expand = |phi: &Field2D| g.forward(&phi.scale(2.0));
        let err = fixed_point_solve(&g, &symbol, &rhs, Some(&expand), &g.zeros(), 1e-12, 20).unwrap_err();
        assert!(matches!(err, Error::Solver { iterations: 20, .. }));
    }

    #[test]
    fn constant_roots_are_stationary() {
        let g = Grid2D::periodic_2pi(16).unwrap();
        for scheme in [Scheme::L1, Scheme::L1h, Scheme::L1a] {
            for c in [-1.0, 0.0, 1.0] {
                let mut solver =
                    Solver::new(scheme, params(), g.clone(), g.constant(c), SolverOptions::default()).unwrap();
                let trace =
                    run(&mut solver, &Stepping::Mesh(make_uniform(1.0, 5).unwrap()), None, &mut |_, _| Ok(())).unwrap();
                assert!(solver.phi().max_diff(&g.constant(c)) < 1e-14);
                if scheme == Scheme::L1 {
                    let e = trace.records.last().unwrap();
                    assert!((e.energy_var.unwrap() - e.energy).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn restriction_violation_is_an_error_unless_overridden() {
        let g = Grid2D::periodic_2pi(8).unwrap();
        let mut solver = Solver::new(Scheme::L1, params(), g.clone(), g.zeros(), SolverOptions::default()).unwrap();
        assert!(matches!(solver.step(2.0, None), Err(Error::StepRestriction { .. })));
        assert_eq!(solver.steps_taken(), 0);
        let opts = SolverOptions { allow_restriction_violation: true, ..Default::default() };
        let mut solver = Solver::new(Scheme::L1, params(), g.clone(), g.zeros(), opts).unwrap();
        let rec = solver.step(2.0, None).unwrap();
        assert!(!rec.restriction_ok);
        let mut solver = Solver::new(Scheme::L1h, params(), g.clone(), g.zeros(), SolverOptions::default()).unwrap();
        assert!(solver.step(2.0, None).unwrap().restriction_ok);
    }

    #[test]
    fn zero_steps_leave_only_initial_record() {
        let g = Grid2D::periodic_2pi(8).unwrap();
        let mut solver = Solver::new(Scheme::L1h, params(), g.clone(), g.zeros(), SolverOptions::default()).unwrap();
        let trace = run(&mut solver, &Stepping::Mesh(TimeMesh::empty()), None, &mut |_, _| Ok(())).unwrap();
        assert_eq!(trace.records.len(), 1);
        assert_eq!(trace.records[0].energy_var, Some(trace.records[0].energy));
        let csv = trace.to_csv(&["scheme=l1h".into()]);
        assert!(csv.starts_with("# scheme=l1h\nn,t,tau,volume,E,E_var,fp_iters\n0,0,0,"));
    }

    #[test]
    fn short_coarsening_runs_conserve_volume() {
        let g = Grid2D::periodic_2pi(16).unwrap();
        let init = g.sample(|x, y| 0.1 * (2.0 * x).cos() * y.sin() + 0.05 * (3.0 * y).cos() + 0.2);
        let mesh = make_random(1.0, 20, 1).unwrap();
        for scheme in [Scheme::L1, Scheme::L1h, Scheme::L1a] {
            let mut solver = Solver::new(scheme, params(), g.clone(), init.clone(), SolverOptions::default()).unwrap();
            let trace = run(&mut solver, &Stepping::Mesh(mesh.clone()), None, &mut |_, _| Ok(())).unwrap();
            let v0 = trace.records[0].volume;
            for r in &trace.records {
                assert!((r.volume - v0).abs() <= 1e-9 * g.area());
                assert!(r.residual < 1e-9, "{scheme}: {}", r.residual);
            }
            assert_eq!(trace.records.last().unwrap().energy_var.is_none(), scheme == Scheme::L1a);
        }
    }
}
