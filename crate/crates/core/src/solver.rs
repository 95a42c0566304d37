//! Sparse multinomial logistic MAP core over ELM features.
//!
//! The negative log-likelihood Hessian is lower-bounded by the fixed matrix
//! B = A (x) Phi Phi^T with A = -1/2 (I - 11^T/M), which never has to be
//! materialized: A's spectrum is analytic (eigenvalue 0 on the all-ones
//! direction, -1/2 on its complement) and Phi Phi^T gets one symmetric
//! eigendecomposition up front. Every shifted solve (B - gamma I)^-1 then
//! reduces to a pair of basis changes and a pointwise scaling.
//!
//! Two fitting modes share this machinery: a pure majorize-minimize
//! iteration with the Laplacian-prior diagonal (Lambda), and the
//! variable-splitting / augmented-Lagrangian loop whose v-step is the
//! soft-threshold rule.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients are R x M matrices; the stacked vector view
/// [beta_1; ...; beta_M] is exactly the column-major storage.
pub type Coefficients = DMatrix<f64>;

/// Stable log-sum-exp over a slice.
fn logsumexp(scores: &[f64]) -> f64 {
    let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    mx + scores.iter().map(|s| (s - mx).exp()).sum::<f64>().ln()
}

/// Multinomial logistic log-likelihood of Y given scores beta^T Phi.
pub fn log_likelihood(beta: &Coefficients, phi: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let scores = beta.transpose() * phi; // M x N
    let m = scores.nrows();
    let mut ll = 0.0;
    for i in 0..scores.ncols() {
        let col = scores.column(i);
        let lse = logsumexp(col.as_slice());
        for j in 0..m {
            ll += y[(j, i)] * col[j];
        }
        ll -= lse;
    }
    ll
}

/// Class posteriors, M x N; columns sum to 1.
pub fn softmax_probs(beta: &Coefficients, phi: &DMatrix<f64>) -> DMatrix<f64> {
    let mut scores = beta.transpose() * phi;
    for mut col in scores.column_iter_mut() {
        let mx = col.max();
        let mut sum = 0.0;
        for v in col.iter_mut() {
            *v = (*v - mx).exp();
            sum += *v;
        }
        col /= sum;
    }
    scores
}

/// Gradient of the log-likelihood, R x M: block j = Phi (Y_j - P_j)^T.
pub fn grad_loglik(beta: &Coefficients, phi: &DMatrix<f64>, y: &DMatrix<f64>) -> Coefficients {
    let p = softmax_probs(beta, phi);
    phi * (y - p).transpose()
}

/// Eigendecomposition pair representing B = A (x) Phi Phi^T.
#[derive(Debug, Clone)]
pub struct BoundFactorization {
    /// Eigenvalues of Phi Phi^T, clamped at 0.
    pub eigvals_r: Vec<f64>,
    /// Orthogonal R x R eigenvector matrix.
    pub eigvecs_r: DMatrix<f64>,
    /// Analytic eigenvalues of A: 0 once, then -1/2 with multiplicity M-1.
    pub eigvals_a: Vec<f64>,
    /// Orthogonal M x M basis with first column 1/sqrt(M).
    pub eigvecs_a: DMatrix<f64>,
}

/// Cap on the feature dimension of the one-time eigensolve.
pub const DEFAULT_DIM_CAP: usize = 4096;

/// Orthonormal basis diagonalizing A: column 0 spans the all-ones
/// direction, the rest are the Helmert contrasts.
fn helmert_basis(m: usize) -> DMatrix<f64> {
    let mut u = DMatrix::zeros(m, m);
    let root = 1.0 / (m as f64).sqrt();
    for i in 0..m {
        u[(i, 0)] = root;
    }
    for k in 1..m {
        let norm = 1.0 / ((k * (k + 1)) as f64).sqrt();
        for i in 0..k {
            u[(i, k)] = norm;
        }
        u[(k, k)] = -(k as f64) * norm;
    }
    u
}

/// One-time factorization of the bound for a design matrix Phi (R x N).
pub fn build_bound(phi: &DMatrix<f64>, num_classes: usize) -> Result<BoundFactorization> {
    build_bound_capped(phi, num_classes, DEFAULT_DIM_CAP)
}

pub fn build_bound_capped(
    phi: &DMatrix<f64>,
    num_classes: usize,
    dim_cap: usize,
) -> Result<BoundFactorization> {
    let r = phi.nrows();
    if r > dim_cap {
        return Err(Error::invalid(format!(
            "design dimension {r} exceeds eigensolve cap {dim_cap}"
        )));
    }
    if num_classes < 2 {
        return Err(Error::invalid("bound needs at least 2 classes"));
    }
    let gram = phi * phi.transpose();
    let eig = gram.symmetric_eigen();
    let eigvals_r: Vec<f64> = eig.eigenvalues.iter().map(|&v| v.max(0.0)).collect();
    let mut eigvals_a = vec![-0.5; num_classes];
    eigvals_a[0] = 0.0;
    Ok(BoundFactorization {
        eigvals_r,
        eigvecs_r: eig.eigenvectors,
        eigvals_a,
        eigvecs_a: helmert_basis(num_classes),
    })
}

impl BoundFactorization {
    pub fn feature_dim(&self) -> usize {
        self.eigvals_r.len()
    }

    pub fn num_classes(&self) -> usize {
        self.eigvals_a.len()
    }

    /// Applies B to a coefficient matrix: B vec(D) = vec(R_hat D A).
    pub fn apply(&self, delta: &Coefficients) -> Coefficients {
        let g = scale_in_basis(self, delta, |sr, sa| sr * sa);
        &self.eigvecs_r * g * self.eigvecs_a.transpose()
    }

    /// Quadratic form delta^T B delta through the eigenbasis.
    pub fn quadratic(&self, delta: &Coefficients) -> f64 {
        let g = self.eigvecs_r.transpose() * delta * &self.eigvecs_a;
        let mut total = 0.0;
        for (jm, &sa) in self.eigvals_a.iter().enumerate() {
            for (ir, &sr) in self.eigvals_r.iter().enumerate() {
                total += sa * sr * g[(ir, jm)] * g[(ir, jm)];
            }
        }
        total
    }

    /// Solves (B - gamma I) x = rhs; nonsingular for any gamma > 0 because
    /// every eigenvalue of B is <= 0.
    pub fn solve_shifted(&self, gamma: f64, rhs: &Coefficients) -> Result<Coefficients> {
        if gamma <= 0.0 {
            return Err(Error::invalid(format!("gamma must be > 0, got {gamma}")));
        }
        let g = scale_in_basis(self, rhs, |sr, sa| 1.0 / (sr * sa - gamma));
        Ok(&self.eigvecs_r * g * self.eigvecs_a.transpose())
    }

    /// Pseudo-solve B^+ rhs, zeroing null-space components; used only by
    /// the unpenalized (lambda = 0) MM step.
    fn solve_pseudo(&self, rhs: &Coefficients) -> Coefficients {
        let smax = self.eigvals_r.iter().cloned().fold(0.0, f64::max);
        let cutoff = 1e-12 * smax.max(1.0);
        let g = scale_in_basis(self, rhs, |sr, sa| {
            let s = sr * sa;
            if s.abs() > cutoff { 1.0 / s } else { 0.0 }
        });
        &self.eigvecs_r * g * self.eigvecs_a.transpose()
    }
}

fn scale_in_basis(
    bf: &BoundFactorization,
    x: &Coefficients,
    f: impl Fn(f64, f64) -> f64,
) -> Coefficients {
    let mut g = bf.eigvecs_r.transpose() * x * &bf.eigvecs_a;
    for (jm, &sa) in bf.eigvals_a.iter().enumerate() {
        for (ir, &sr) in bf.eigvals_r.iter().enumerate() {
            g[(ir, jm)] *= f(sr, sa);
        }
    }
    g
}

/// Elementwise sign(e) * max(0, |e| - t), the proximal map of t |.|.
pub fn soft_threshold(e: &Coefficients, t: f64) -> Coefficients {
    e.map(|v| v.signum() * (v.abs() - t).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    Mm,
    Admm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Laplacian prior weight, lambda = 2^a.
    pub lambda: f64,
    /// Augmented-Lagrangian weight; defaults to 10*lambda.
    pub gamma: f64,
    pub max_iters: usize,
    /// Relative beta-change stopping tolerance.
    pub tol_beta: f64,
    pub tol_grad: f64,
    /// Floor on |beta_l| in the Lambda diagonal of the MM step.
    pub lambda_floor_eps: f64,
    pub mode: SolverMode,
}

impl SolverConfig {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            gamma: 10.0 * lambda,
            max_iters: 200,
            tol_beta: 1e-6,
            tol_grad: 1e-5,
            lambda_floor_eps: 1e-8,
            mode: SolverMode::Admm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 {
            return Err(Error::invalid("lambda must be >= 0"));
        }
        if self.mode == SolverMode::Admm && self.gamma <= 0.0 {
            return Err(Error::invalid("gamma must be > 0 for the split iteration"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be >= 1"));
        }
        Ok(())
    }
}

/// One iteration record of the fit.
#[derive(Debug, Clone, Copy)]
pub struct TraceRow {
    pub iter: usize,
    pub loglik: f64,
    /// L(beta) - lambda ||beta||_1.
    pub penalized_obj: f64,
    pub grad_norm: f64,
    /// ||beta - v||_2; zero in MM mode.
    pub split_gap: f64,
    /// Count of |coef| > 1e-10 (v in split mode, beta in MM mode).
    pub nnz: usize,
}

#[derive(Debug, Clone, Default)]
pub struct SolverTrace {
    pub rows: Vec<TraceRow>,
    /// Lemma 1(b) quantity per MM step.
    pub q1_values: Vec<f64>,
    /// Final split variable, retained for sparsity reporting.
    pub final_v: Option<Coefficients>,
}

impl SolverTrace {
    /// Comma-separated export: iter, loglik, objective, grad_norm,
    /// split_gap, nnz. LF line endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,loglik,objective,grad_norm,split_gap,nnz\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.iter, r.loglik, r.penalized_obj, r.grad_norm, r.split_gap, r.nnz
            ));
        }
        out
    }
}

const NNZ_EPS: f64 = 1e-10;

fn count_nnz(m: &Coefficients) -> usize {
    m.iter().filter(|v| v.abs() > NNZ_EPS).count()
}

fn l1_norm(m: &Coefficients) -> f64 {
    m.iter().map(|v| v.abs()).sum()
}

/// One bound-majorized MM update: beta' = (B - lambda Lambda)^-1 (B beta - grad L).
///
/// Lambda breaks the Kronecker structure, so the system is solved by
/// conjugate gradients on the SPD negation (lambda Lambda - B), with
/// matrix-vector products through the factorized B.
pub fn mm_step(
    beta: &Coefficients,
    phi: &DMatrix<f64>,
    y: &DMatrix<f64>,
    bf: &BoundFactorization,
    lambda: f64,
    eps_floor: f64,
) -> Result<Coefficients> {
    let grad = grad_loglik(beta, phi, y);
    let rhs = bf.apply(beta) - &grad;
    if lambda == 0.0 {
        // Unpenalized update; B is singular so use the pseudo-solve.
        return Ok(bf.solve_pseudo(&rhs));
    }
    let lam_diag = beta.map(|v| lambda / v.abs().max(eps_floor));
    // (B - lambda Lambda) x = rhs  <=>  (lambda Lambda - B) x = -rhs
    let neg_rhs = -rhs;
    let matvec = |x: &Coefficients| lam_diag.component_mul(x) - bf.apply(x);
    conjugate_gradient(matvec, &neg_rhs, 1e-10, 10 * beta.len())
}

/// The Q1 surrogate's maximizer beta' - (B - lambda Lambda)^-1 grad and
/// its value -1/2 grad^T (B - lambda Lambda)^-1 grad, which is always
/// nonnegative because (lambda Lambda - B) is positive semi-definite.
pub fn lemma1_step(
    beta: &Coefficients,
    grad: &Coefficients,
    bf: &BoundFactorization,
    lambda: f64,
    eps_floor: f64,
) -> Result<(Coefficients, f64)> {
    // h = (lambda Lambda - B)^-1 grad = -(B - lambda Lambda)^-1 grad
    let h = if lambda == 0.0 {
        -bf.solve_pseudo(grad)
    } else {
        let lam_diag = beta.map(|v| lambda / v.abs().max(eps_floor));
        let matvec = |x: &Coefficients| lam_diag.component_mul(x) - bf.apply(x);
        conjugate_gradient(matvec, grad, 1e-10, 10 * beta.len())?
    };
    let q1 = 0.5 * grad.dot(&h);
    Ok((beta + &h, q1))
}

fn conjugate_gradient(
    matvec: impl Fn(&Coefficients) -> Coefficients,
    rhs: &Coefficients,
    rel_tol: f64,
    max_iters: usize,
) -> Result<Coefficients> {
    let mut x = Coefficients::zeros(rhs.nrows(), rhs.ncols());
    let mut r = rhs.clone();
    let mut p = r.clone();
    let rhs_norm = rhs.norm();
    if rhs_norm == 0.0 {
        return Ok(x);
    }
    let mut rs = r.dot(&r);
    for _ in 0..max_iters {
        let ap = matvec(&p);
        let alpha = rs / p.dot(&ap);
        x += &p * alpha;
        r -= ap * alpha;
        let rs_new = r.dot(&r);
        if rs_new.sqrt() <= rel_tol * rhs_norm {
            return Ok(x);
        }
        p = &r + &p * (rs_new / rs);
        rs = rs_new;
    }
    let final_res = r.norm() / rhs_norm;
    if final_res <= 1e-8 {
        // Stalled but effectively converged.
        return Ok(x);
    }
    Err(Error::NonConvergence(format!(
        "conjugate gradients: relative residual {final_res:.3e} after {max_iters} iterations"
    )))
}

/// Fits coefficients from an initialization, in either MM or split mode.
///
/// Split mode iterates: a single bound-majorized beta-step through the
/// shifted Kronecker solve, the soft-threshold v-step with threshold
/// lambda/gamma, and the dual update b <- b - beta + v.
pub fn fit(
    beta0: &Coefficients,
    phi: &DMatrix<f64>,
    y: &DMatrix<f64>,
    cfg: &SolverConfig,
) -> Result<(Coefficients, SolverTrace)> {
    cfg.validate()?;
    if beta0.nrows() != phi.nrows() {
        return Err(Error::invalid(format!(
            "beta has {} rows but Phi has {}",
            beta0.nrows(),
            phi.nrows()
        )));
    }
    let bf = build_bound(phi, y.nrows())?;
    match cfg.mode {
        SolverMode::Mm => fit_mm(beta0, phi, y, &bf, cfg),
        SolverMode::Admm => fit_admm(beta0, phi, y, &bf, cfg),
    }
}

#[allow(clippy::too_many_arguments)]
fn record(
    trace: &mut SolverTrace,
    iter: usize,
    beta: &Coefficients,
    phi: &DMatrix<f64>,
    y: &DMatrix<f64>,
    lambda: f64,
    split_gap: f64,
    nnz_of: &Coefficients,
) -> Result<(f64, f64)> {
    let ll = log_likelihood(beta, phi, y);
    let obj = ll - lambda * l1_norm(beta);
    if !obj.is_finite() {
        return Err(Error::NonConvergence(format!(
            "non-finite objective at iteration {iter}"
        )));
    }
    let gnorm = grad_loglik(beta, phi, y).norm();
    trace.rows.push(TraceRow {
        iter,
        loglik: ll,
        penalized_obj: obj,
        grad_norm: gnorm,
        split_gap,
        nnz: count_nnz(nnz_of),
    });
    Ok((obj, gnorm))
}

fn fit_mm(
    beta0: &Coefficients,
    phi: &DMatrix<f64>,
    y: &DMatrix<f64>,
    bf: &BoundFactorization,
    cfg: &SolverConfig,
) -> Result<(Coefficients, SolverTrace)> {
    let mut beta = beta0.clone();
    let mut trace = SolverTrace::default();
    for t in 0..cfg.max_iters {
        record(&mut trace, t, &beta, phi, y, cfg.lambda, 0.0, &beta)?;
        let grad = grad_loglik(&beta, phi, y);
        let next = mm_step(&beta, phi, y, bf, cfg.lambda, cfg.lambda_floor_eps)?;
        let (_, q1) = lemma1_step(&beta, &grad, bf, cfg.lambda, cfg.lambda_floor_eps)?;
        trace.q1_values.push(q1);
        let rel = (&next - &beta).norm() / beta.norm().max(1e-30);
        beta = next;
        if rel < cfg.tol_beta {
            break;
        }
    }
    Ok((beta, trace))
}

fn fit_admm(
    beta0: &Coefficients,
    phi: &DMatrix<f64>,
    y: &DMatrix<f64>,
    bf: &BoundFactorization,
    cfg: &SolverConfig,
) -> Result<(Coefficients, SolverTrace)> {
    let gamma = cfg.gamma;
    let threshold = if gamma > 0.0 { cfg.lambda / gamma } else { 0.0 };
    let mut beta = beta0.clone();
    let mut v = beta0.clone();
    let mut dual = Coefficients::zeros(beta0.nrows(), beta0.ncols());
    let mut trace = SolverTrace::default();
    for t in 0..cfg.max_iters {
        let grad = grad_loglik(&beta, phi, y);
        let rhs = bf.apply(&beta) - &grad - (&v + &dual) * gamma;
        let next = bf.solve_shifted(gamma, &rhs)?;
        let rel = (&next - &beta).norm() / beta.norm().max(1e-30);
        beta = next;
        let e = &beta - &dual;
        v = soft_threshold(&e, threshold);
        dual = dual - &beta + &v;
        let gap = (&beta - &v).norm();
        record(&mut trace, t, &beta, phi, y, cfg.lambda, gap, &v)?;
        if rel < cfg.tol_beta {
            break;
        }
    }
    trace.final_v = Some(v);
    Ok((beta, trace))
}

/// Post-hoc checks of the Lemma 1/2 behavior of a recorded trace.
#[derive(Debug, Clone)]
pub struct DiagnosticsReport {
    /// (iteration, size) of the worst monotonicity violation beyond 1e-9.
    pub monotonicity_violation: Option<(usize, f64)>,
    /// Final gradient norm fell to at most a tenth of the initial one.
    pub grad_trend_ok: bool,
    /// Minimum Q1 over MM steps; must stay >= -1e-12.
    pub min_q1: Option<f64>,
}

pub fn lemma_diagnostics(trace: &SolverTrace) -> Result<DiagnosticsReport> {
    if trace.rows.is_empty() {
        return Err(Error::invalid("empty trace"));
    }
    let mut violation: Option<(usize, f64)> = None;
    for w in trace.rows.windows(2) {
        let drop = w[0].penalized_obj - w[1].penalized_obj;
        if drop > 1e-9 && violation.is_none_or(|(_, d)| drop > d) {
            violation = Some((w[1].iter, drop));
        }
    }
    let first = trace.rows.first().unwrap().grad_norm;
    let last = trace.rows.last().unwrap().grad_norm;
    Ok(DiagnosticsReport {
        monotonicity_violation: violation,
        grad_trend_ok: last <= 0.1 * first,
        min_q1: trace
            .q1_values
            .iter()
            .cloned()
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v)))),
    })
}
