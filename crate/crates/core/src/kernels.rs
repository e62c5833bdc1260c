//! Discrete convolution kernels of the L1-type Caputo approximations on
//! nonuniform meshes, their DOC/DCC companions, and the algebraic
//! positivity/monotonicity/convexity criteria.
//!
//! A kernel row for step `n` stores `a_j^{(n)}` indexed by lag `j = n - k`,
//! so that `(D^alpha v)^n = sum_{k=1}^n a_{n-k}^{(n)} (v^k - v^{k-1})`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::special::{gamma, power_gap};
use crate::timemesh::TimeMesh;

pub const ALPHA_MIN: f64 = 1e-3;
pub const ALPHA_MAX: f64 = 1.0 - 1e-10;

/// Validates a fractional order for kernel evaluation.
pub fn check_alpha(alpha: f64) -> Result<()> {
    if (ALPHA_MIN..=ALPHA_MAX).contains(&alpha) {
        Ok(())
    } else {
        param(format!("fractional order must lie in [{ALPHA_MIN}, 1 - 1e-10], got {alpha}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    L1,
    L1h,
    L1a,
    /// L1h with the lag-0 weight doubled.
    AuxL1h,
    /// L1a with the lag-0 weight doubled.
    AuxL1a,
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::L1 => "l1",
            KernelFamily::L1h => "l1h",
            KernelFamily::L1a => "l1a",
            KernelFamily::AuxL1h => "auxl1h",
            KernelFamily::AuxL1a => "auxl1a",
        }
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(KernelFamily::L1),
            "l1h" => Ok(KernelFamily::L1h),
            "l1a" => Ok(KernelFamily::L1a),
            "auxl1h" | "aux-l1h" => Ok(KernelFamily::AuxL1h),
            "auxl1a" | "aux-l1a" => Ok(KernelFamily::AuxL1a),
            other => param(format!("unknown kernel family '{other}'")),
        }
    }
}

impl std::fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelRow {
    pub n: usize,
    pub family: KernelFamily,
    /// `weights[j] = a_j^{(n)}`, `0 <= j < n`.
    pub weights: Vec<f64>,
}

impl KernelRow {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn lag(&self, j: usize) -> f64 {
        self.weights[j]
    }
}

fn check_index(mesh: &TimeMesh, n: usize) -> Result<()> {
    if n == 0 || n > mesh.len() {
        return param(format!("step index {n} outside 1..={}", mesh.len()));
    }
    Ok(())
}

/// L1 kernels `a_{n-k}^{(n)} = [omega_{2-a}(t_n - t_{k-1}) - omega_{2-a}(t_n - t_k)] / tau_k`.
pub fn l1_row(mesh: &TimeMesh, alpha: f64, n: usize) -> Result<KernelRow> {
    check_alpha(alpha)?;
    check_index(mesh, n)?;
    Ok(KernelRow { n, family: KernelFamily::L1, weights: l1_weights(mesh, alpha, n) })
}

fn l1_weights(mesh: &TimeMesh, alpha: f64, n: usize) -> Vec<f64> {
    let beta = 1.0 - alpha;
    let scale = 1.0 / gamma(2.0 - alpha);
    let mut weights = Vec::with_capacity(n);
    // dist = t_n - t_k, accumulated from the steps to avoid cancellation in level differences
    let mut dist = 0.0;
    for k in (1..=n).rev() {
        let tau = mesh.tau(k);
        let far = dist + tau;
        weights.push(scale * power_gap(far, tau, beta) / tau);
        dist = far;
    }
    weights
}

/// L1h kernels collocated at `t_{n-1/2}`; the last interval is integrated only up to the half level.
pub fn l1h_row(mesh: &TimeMesh, alpha: f64, n: usize) -> Result<KernelRow> {
    check_alpha(alpha)?;
    check_index(mesh, n)?;
    let beta = 1.0 - alpha;
    let scale = 1.0 / gamma(2.0 - alpha);
    let half = 0.5 * mesh.tau(n);
    let mut weights = Vec::with_capacity(n);
    weights.push(scale * half.powf(beta) / mesh.tau(n));
    let mut dist = half;
    for k in (1..n).rev() {
        let tau = mesh.tau(k);
        let far = dist + tau;
        weights.push(scale * power_gap(far, tau, beta) / tau);
        dist = far;
    }
    Ok(KernelRow { n, family: KernelFamily::L1h, weights })
}

/// L1a kernels: the average of the L1 rows `n` and `n - 1`, with `a_0^{(a,n)} = a_0^{(n)} / 2`.
pub fn l1a_row(mesh: &TimeMesh, alpha: f64, n: usize) -> Result<KernelRow> {
    check_alpha(alpha)?;
    check_index(mesh, n)?;
    let cur = l1_weights(mesh, alpha, n);
    let mut weights = Vec::with_capacity(n);
    weights.push(0.5 * cur[0]);
    if n >= 2 {
        let prev = l1_weights(mesh, alpha, n - 1);
        weights.extend((1..n).map(|j| 0.5 * (cur[j] + prev[j - 1])));
    }
    Ok(KernelRow { n, family: KernelFamily::L1a, weights })
}

/// Doubles the lag-0 weight of an L1h or L1a row.
pub fn auxiliary_row(row: &KernelRow) -> Result<KernelRow> {
    let family = match row.family {
        KernelFamily::L1h => KernelFamily::AuxL1h,
        KernelFamily::L1a => KernelFamily::AuxL1a,
        other => return Err(Error::Usage(format!("auxiliary kernels are defined only for l1h/l1a rows, not {other}"))),
    };
    let mut weights = row.weights.clone();
    if let Some(w0) = weights.first_mut() {
        *w0 *= 2.0;
    }
    Ok(KernelRow { n: row.n, family, weights })
}

/// Row `n` of any family.
pub fn kernel_row(family: KernelFamily, mesh: &TimeMesh, alpha: f64, n: usize) -> Result<KernelRow> {
    match family {
        KernelFamily::L1 => l1_row(mesh, alpha, n),
        KernelFamily::L1h => l1h_row(mesh, alpha, n),
        KernelFamily::L1a => l1a_row(mesh, alpha, n),
        KernelFamily::AuxL1h => auxiliary_row(&l1h_row(mesh, alpha, n)?),
        KernelFamily::AuxL1a => auxiliary_row(&l1a_row(mesh, alpha, n)?),
    }
}

/// The triangular family `{a_{n-k}^{(n)}}` for `n = 1..N` on a mesh.
#[derive(Debug, Clone)]
pub struct KernelTable {
    family: KernelFamily,
    alpha: f64,
    mesh: TimeMesh,
    rows: Vec<KernelRow>,
}

impl KernelTable {
    pub fn new(family: KernelFamily, alpha: f64, mesh: TimeMesh) -> Result<Self> {
        check_alpha(alpha)?;
        let rows = (1..=mesh.len())
            .into_par_iter()
            .map(|n| kernel_row(family, &mesh, alpha, n))
            .collect::<Result<Vec<_>>>()?;
        Ok(KernelTable { family, alpha, mesh, rows })
    }

    /// An empty table on `t_0 = 0`, grown with [`KernelTable::push_step`].
    pub fn empty(family: KernelFamily, alpha: f64) -> Result<Self> {
        Self::new(family, alpha, TimeMesh::empty())
    }

    /// Appends a step to the mesh and computes the new row.
    pub fn push_step(&mut self, tau: f64) -> Result<&KernelRow> {
        self.mesh.push_step(tau)?;
        let n = self.mesh.len();
        let row = kernel_row(self.family, &self.mesh, self.alpha, n)?;
        self.rows.push(row);
        Ok(&self.rows[n - 1])
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn mesh(&self) -> &TimeMesh {
        &self.mesh
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Row `n`, `1 <= n <= N`.
    pub fn row(&self, n: usize) -> &KernelRow {
        &self.rows[n - 1]
    }

    /// `a_j^{(n)}`.
    pub fn weight(&self, n: usize, j: usize) -> f64 {
        self.rows[n - 1].weights[j]
    }

    /// Same mesh and order, lag-0 weights doubled (L1h/L1a tables only).
    pub fn auxiliary(&self) -> Result<KernelTable> {
        let rows = self.rows.iter().map(auxiliary_row).collect::<Result<Vec<_>>>()?;
        let family = rows.first().map(|r| r.family).unwrap_or(match self.family {
            KernelFamily::L1h => KernelFamily::AuxL1h,
            KernelFamily::L1a => KernelFamily::AuxL1a,
            other => return Err(Error::Usage(format!("no auxiliary family for {other}"))),
        });
        Ok(KernelTable { family, alpha: self.alpha, mesh: self.mesh.clone(), rows })
    }

    /// CSV dump `n,j,a_j` of rows `1..=n_max`.
    pub fn to_csv(&self, n_max: usize) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("n,j,a_j\n");
        for row in self.rows.iter().take(n_max) {
            for (j, a) in row.weights.iter().enumerate() {
                let _ = writeln!(out, "{},{j},{a}", row.n);
            }
        }
        out
    }
}

/// DOC kernels `theta_{n-k}^{(n)}` and DCC kernels `p_{n-k}^{(n)}` of a kernel table,
/// both stored by lag.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CompanionKernels {
    doc: Vec<Vec<f64>>,
    dcc: Vec<Vec<f64>>,
}

impl CompanionKernels {
    pub fn new() -> Self {
        Self::default()
    }

    /// DOC and DCC rows `1..=n`.
    pub fn build(table: &KernelTable, n: usize) -> Result<Self> {
        let mut c = Self::new();
        c.extend_to(table, n)?;
        Ok(c)
    }

    /// Extends both DOC and DCC rows up to `n`.
    pub fn extend_to(&mut self, table: &KernelTable, n: usize) -> Result<()> {
        self.extend_doc(table, n)?;
        self.extend_dcc(n)
    }

    fn extend_doc(&mut self, table: &KernelTable, n: usize) -> Result<()> {
        if n > table.len() {
            return param(format!("kernel rows only available up to {}", table.len()));
        }
        for m in self.doc.len() + 1..=n {
            self.doc.push(doc_row(table, m)?);
        }
        Ok(())
    }

    fn extend_dcc(&mut self, n: usize) -> Result<()> {
        if n > self.doc.len() {
            return param(format!("DOC rows only available up to {}", self.doc.len()));
        }
        for m in self.dcc.len() + 1..=n {
            let theta = &self.doc[m - 1];
            let mut row = Vec::with_capacity(m);
            row.push(theta[0]);
            if m >= 2 {
                let prev = &self.dcc[m - 2];
                row.extend((1..m).map(|lag| prev[lag - 1] + theta[lag]));
            }
            self.dcc.push(row);
        }
        Ok(())
    }

    pub fn doc_len(&self) -> usize {
        self.doc.len()
    }

    pub fn dcc_len(&self) -> usize {
        self.dcc.len()
    }

    /// `theta_j^{(n)}`.
    pub fn theta(&self, n: usize, j: usize) -> f64 {
        self.doc[n - 1][j]
    }

    /// `p_j^{(n)}`.
    pub fn p(&self, n: usize, j: usize) -> f64 {
        self.dcc[n - 1][j]
    }

    pub fn doc_row(&self, n: usize) -> &[f64] {
        &self.doc[n - 1]
    }

    pub fn dcc_row(&self, n: usize) -> &[f64] {
        &self.dcc[n - 1]
    }
}

// theta_0 = 1/a_0^{(n)},  theta_{n-k} = -(1/a_0^{(k)}) sum_{j=k+1}^n theta_{n-j} a_{j-k}^{(j)}
fn doc_row(table: &KernelTable, n: usize) -> Result<Vec<f64>> {
    let lag0 = |m: usize| {
        let a0 = table.weight(m, 0);
        if a0 > 0.0 && a0.is_finite() {
            Ok(a0)
        } else {
            Err(Error::SingularKernel { n: m, value: a0 })
        }
    };
    let mut theta = vec![0.0; n];
    theta[0] = 1.0 / lag0(n)?;
    for k in (1..n).rev() {
        let s: f64 = (k + 1..=n).map(|j| theta[n - j] * table.weight(j, j - k)).sum();
        theta[n - k] = -s / lag0(k)?;
    }
    Ok(theta)
}

/// DOC rows `1..=n`; the DCC part is left empty.
pub fn doc_kernels(table: &KernelTable, n: usize) -> Result<CompanionKernels> {
    let mut c = CompanionKernels::new();
    c.extend_doc(table, n)?;
    Ok(c)
}

/// Adds DCC rows `1..=n` to a set of DOC kernels.
pub fn dcc_kernels(mut doc: CompanionKernels, n: usize) -> Result<CompanionKernels> {
    doc.extend_dcc(n)?;
    Ok(doc)
}

/// `sum_{j=k}^n theta_{n-j}^{(n)} a_{j-k}^{(j)} - delta_{nk}`.
pub fn orthogonal_residual(table: &KernelTable, comp: &CompanionKernels, n: usize, k: usize) -> f64 {
    let s: f64 = (k..=n).map(|j| comp.theta(n, n - j) * table.weight(j, j - k)).sum();
    s - if n == k { 1.0 } else { 0.0 }
}

/// `sum_{j=k}^n p_{n-j}^{(n)} a_{j-k}^{(j)} - 1`.
pub fn complementary_residual(table: &KernelTable, comp: &CompanionKernels, n: usize, k: usize) -> f64 {
    let s: f64 = (k..=n).map(|j| comp.p(n, n - j) * table.weight(j, j - k)).sum();
    s - 1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriteriaVariant {
    /// Positive, decreasing and convex weights of a single (Toeplitz) row.
    Uniform,
    /// The three variable-step conditions linking rows `n-1` and `n`.
    Nonuniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub n: usize,
    pub j: usize,
    pub condition: String,
    /// The two sides were exactly equal.
    pub tie: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionOutcome {
    pub condition: String,
    pub passed: bool,
    pub first_violation: Option<Violation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriteriaReport {
    pub family: KernelFamily,
    pub variant: CriteriaVariant,
    pub n: usize,
    pub passes: Vec<ConditionOutcome>,
    pub first_violation: Option<Violation>,
}

impl CriteriaReport {
    pub fn all_pass(&self) -> bool {
        self.passes.iter().all(|c| c.passed)
    }

    pub fn condition(&self, name: &str) -> Option<&ConditionOutcome> {
        self.passes.iter().find(|c| c.condition == name)
    }
}

pub const COND_POSITIVE: &str = "positive";
pub const COND_DECREASING: &str = "decreasing";
pub const COND_CONVEX: &str = "convex";
pub const COND_HISTORY: &str = "history_decreasing";
pub const COND_LOG_CONVEX: &str = "product_convex";

struct Tracker {
    name: &'static str,
    first: Option<Violation>,
}

impl Tracker {
    fn new(name: &'static str) -> Self {
        Tracker { name, first: None }
    }

    // strict `lhs > rhs`; equality is a failure flagged as a tie
    fn check(&mut self, lhs: f64, rhs: f64, n: usize, j: usize) {
        if self.first.is_none() && !(lhs > rhs) {
            self.first = Some(Violation { n, j, condition: self.name.to_string(), tie: lhs == rhs });
        }
    }

    fn finish(self) -> ConditionOutcome {
        ConditionOutcome { condition: self.name.to_string(), passed: self.first.is_none(), first_violation: self.first }
    }
}

/// Evaluates the algebraic sufficient conditions over rows `1..=n`. Violations are reported, never raised.
pub fn check_criteria(table: &KernelTable, n: usize, variant: CriteriaVariant) -> CriteriaReport {
    let n = n.min(table.len());
    let mut trackers = match variant {
        CriteriaVariant::Uniform => {
            vec![Tracker::new(COND_POSITIVE), Tracker::new(COND_DECREASING), Tracker::new(COND_CONVEX)]
        }
        CriteriaVariant::Nonuniform => {
            vec![
                Tracker::new(COND_POSITIVE),
                Tracker::new(COND_DECREASING),
                Tracker::new(COND_HISTORY),
                Tracker::new(COND_LOG_CONVEX),
            ]
        }
    };
    for m in 1..=n {
        let a = &table.row(m).weights;
        for (j, &w) in a.iter().enumerate() {
            trackers[0].check(w, 0.0, m, j);
        }
        for j in 1..m {
            trackers[1].check(a[j - 1], a[j], m, j);
        }
        match variant {
            CriteriaVariant::Uniform => {
                for j in 1..m.saturating_sub(1) {
                    trackers[2].check(a[j - 1] - a[j], a[j] - a[j + 1], m, j);
                }
            }
            CriteriaVariant::Nonuniform if m >= 2 => {
                let prev = &table.row(m - 1).weights;
                for j in 1..m {
                    trackers[2].check(prev[j - 1], a[j], m, j);
                }
                for j in 1..m - 1 {
                    trackers[3].check(prev[j - 1] * a[j + 1], prev[j] * a[j], m, j);
                }
            }
            CriteriaVariant::Nonuniform => {}
        }
    }
    let passes: Vec<_> = trackers.into_iter().map(Tracker::finish).collect();
    let first_violation = passes.iter().filter_map(|c| c.first_violation.clone()).min_by_key(|v| (v.n, v.j));
    CriteriaReport { family: table.family(), variant, n, passes, first_violation }
}
