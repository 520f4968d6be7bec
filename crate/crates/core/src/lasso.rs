//! ℓ₁-penalised least squares by cyclic coordinate descent.
//!
//! Every fit minimises
//!
//! ```text
//! (1/2n) ‖y − Xβ‖² + λ ‖β‖₁
//! ```
//!
//! The solver works on the covariance form `G = X'X/n`, `c = X'y/n`, keeping the
//! residual correlations `c − Gβ` up to date. Coordinate `j` is updated as
//!
//! ```text
//! β_j ← S(c_j − (Gβ)_j + G_jj β_j, λ) / G_jj
//! ```
//!
//! with `S` the soft-thresholding operator. Sweeps alternate between the full
//! variable set and the current active set; a fit is converged once a *full*
//! sweep moves no coefficient by more than `tol`. Sharing one Gram matrix across
//! many problems (cross-validation folds, nodewise regressions) is what keeps
//! the Monte Carlo harness affordable.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg::Cholesky;

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITER: usize = 100_000;
pub const DEFAULT_N_POINTS: usize = 100;
pub const DEFAULT_MIN_RATIO: f64 = 1e-3;

/// `sign(z) · max(|z| − γ, 0)`.
#[inline]
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    debug_assert!(gamma >= 0.0);
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Stopping rule and finishing step for coordinate descent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Largest coefficient change tolerated in a full sweep at convergence.
    pub tol: f64,
    /// Cap on the number of sweeps (full and active-set sweeps both count).
    pub max_iter: usize,
    /// After convergence, solve the stationarity equations on the active set
    /// exactly and keep the result if it is sign-consistent and reduces the
    /// KKT residual.
    pub polish: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            polish: true,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// A single Lasso problem on raw data.
#[derive(Debug, Clone, Copy)]
pub struct LassoProblem<'a> {
    pub design: ArrayView2<'a, f64>,
    pub response: ArrayView1<'a, f64>,
    pub lambda: f64,
    /// Scale columns to unit mean square before solving. Coefficients are
    /// always reported on the original scale.
    pub standardize: bool,
}

impl<'a> LassoProblem<'a> {
    pub fn new(
        design: ArrayView2<'a, f64>,
        response: ArrayView1<'a, f64>,
        lambda: f64,
        standardize: bool,
    ) -> Result<Self> {
        let problem = Self {
            design,
            response,
            lambda,
            standardize,
        };
        problem.validate()?;
        Ok(problem)
    }

    fn validate(&self) -> Result<()> {
        let (n, p) = self.design.dim();
        if self.response.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "response has length {}, design has {} rows",
                self.response.len(),
                n
            )));
        }
        if n < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 observations, got {n}")));
        }
        if p < 1 {
            return Err(Error::InvalidParameter("design has no columns".into()));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "lambda must be finite and nonnegative, got {}",
                self.lambda
            )));
        }
        if self.design.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("design".into()));
        }
        if self.response.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("response".into()));
        }
        Ok(())
    }

    pub fn n_obs(&self) -> usize {
        self.design.nrows()
    }

    pub fn n_vars(&self) -> usize {
        self.design.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub beta: Array1<f64>,
    pub lambda: f64,
    /// `(1/2n)‖y − Xβ‖² + λ‖β‖₁` evaluated at `beta` on the original scale.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub active_set: Vec<usize>,
}

/// `(1/2n)‖y − Xβ‖² + λ‖β‖₁`.
pub fn objective(
    design: ArrayView2<f64>,
    response: ArrayView1<f64>,
    beta: ArrayView1<f64>,
    lambda: f64,
) -> f64 {
    let n = design.nrows() as f64;
    let r = &response - &design.dot(&beta);
    r.dot(&r) / (2.0 * n) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

pub fn active_set(beta: ArrayView1<f64>) -> Vec<usize> {
    beta.iter()
        .enumerate()
        .filter(|(_, b)| **b != 0.0)
        .map(|(i, _)| i)
        .collect()
}

/// Smallest penalty at which the all-zero vector is optimal: `‖X'y‖_∞ / n`.
pub fn lambda_max(problem: &LassoProblem) -> Result<f64> {
    problem.validate()?;
    let n = problem.n_obs() as f64;
    let xty = problem.design.t().dot(&problem.response);
    let scales = problem.standardize.then(|| column_scales(problem.design));
    Ok(xty
        .iter()
        .enumerate()
        .map(|(j, v)| match &scales {
            Some(s) => (v / s[j]).abs() / n,
            None => v.abs() / n,
        })
        .fold(0.0, f64::max))
}

/// `n_points` log-spaced penalties from `lam_max` down to `lam_max · min_ratio`.
pub fn lambda_grid(lam_max: f64, n_points: usize, min_ratio: f64) -> Result<Vec<f64>> {
    if !(lam_max > 0.0) || !lam_max.is_finite() {
        return Err(Error::InvalidParameter(format!("lam_max must be positive, got {lam_max}")));
    }
    if n_points < 2 {
        return Err(Error::InvalidParameter(format!("n_points must be >= 2, got {n_points}")));
    }
    if !(min_ratio > 0.0 && min_ratio < 1.0) {
        return Err(Error::InvalidParameter(format!("min_ratio must lie in (0,1), got {min_ratio}")));
    }
    let step = min_ratio.ln() / (n_points - 1) as f64;
    Ok((0..n_points)
        .map(|k| {
            if k == n_points - 1 {
                lam_max * min_ratio
            } else {
                lam_max * (step * k as f64).exp()
            }
        })
        .collect())
}

/// Root mean square of each column; zero columns get scale 1.
fn column_scales(x: ArrayView2<f64>) -> Array1<f64> {
    let n = x.nrows() as f64;
    x.columns()
        .into_iter()
        .map(|c| {
            let s = (c.dot(&c) / n).sqrt();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect()
}

/// Solves a single Lasso problem, optionally from a warm start (original scale).
pub fn lasso_fit(
    problem: &LassoProblem,
    warm_start: Option<ArrayView1<f64>>,
    options: &SolverOptions,
) -> Result<LassoFit> {
    problem.validate()?;
    options.validate()?;
    let (n, p) = problem.design.dim();
    if let Some(w) = &warm_start {
        if w.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "warm start has length {}, expected {p}",
                w.len()
            )));
        }
    }
    let nf = n as f64;
    let mut gram = problem.design.t().dot(&problem.design) / nf;
    let mut xty = problem.design.t().dot(&problem.response) / nf;
    let yty = problem.response.dot(&problem.response) / nf;

    let scales = problem.standardize.then(|| column_scales(problem.design));
    if let Some(s) = &scales {
        for i in 0..p {
            xty[i] /= s[i];
            for j in 0..p {
                gram[[i, j]] /= s[i] * s[j];
            }
        }
    }

    let cov = CovarianceLasso::new(gram.view(), xty.view(), yty)?;
    let start = warm_start.map(|w| match &scales {
        Some(s) => &w * s,
        None => w.to_owned(),
    });
    let vars: Vec<usize> = (0..p).collect();
    let mut state = match start {
        Some(b) => cov.state_from(b),
        None => cov.zero_state(),
    };
    let outcome = cov.solve(&vars, problem.lambda, &mut state, options, None);

    let mut beta = state.beta;
    if let Some(s) = &scales {
        beta /= s;
    }
    Ok(LassoFit {
        objective: objective(problem.design, problem.response, beta.view(), problem.lambda),
        active_set: active_set(beta.view()),
        beta,
        lambda: problem.lambda,
        iterations: outcome.iterations,
        converged: outcome.converged,
    })
}

/// Sup-norm violation of the Lasso stationarity conditions at `fit.beta`.
pub fn kkt_residual(fit: &LassoFit, problem: &LassoProblem) -> f64 {
    let n = problem.n_obs() as f64;
    let r = &problem.response - &problem.design.dot(&fit.beta);
    let corr = problem.design.t().dot(&r) / n;
    kkt_from_corr(corr.view(), fit.beta.view(), problem.lambda, None)
}

fn kkt_from_corr(
    corr: ArrayView1<f64>,
    beta: ArrayView1<f64>,
    lambda: f64,
    vars: Option<&[usize]>,
) -> f64 {
    let viol = |j: usize| {
        let b = beta[j];
        let c = corr[j];
        if b != 0.0 {
            (c - lambda * b.signum()).abs()
        } else {
            (c.abs() - lambda).max(0.0)
        }
    };
    match vars {
        Some(v) => v.iter().map(|&j| viol(j)).fold(0.0, f64::max),
        None => (0..beta.len()).map(viol).fold(0.0, f64::max),
    }
}

/// Coefficients plus the residual correlations `c − Gβ` they imply.
#[derive(Debug, Clone)]
pub struct CdState {
    pub beta: Array1<f64>,
    pub corr: Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CdOutcome {
    pub iterations: usize,
    pub converged: bool,
}

/// A Lasso problem in covariance form: `G = X'X/n`, `c = X'y/n`, `y'y/n`.
///
/// The variable set is chosen per solve, so one Gram matrix serves every
/// nodewise regression (variables `≠ i`, response column `i`).
#[derive(Debug, Clone, Copy)]
pub struct CovarianceLasso<'a> {
    gram: ArrayView2<'a, f64>,
    xty: ArrayView1<'a, f64>,
    yty: f64,
}

impl<'a> CovarianceLasso<'a> {
    pub fn new(gram: ArrayView2<'a, f64>, xty: ArrayView1<'a, f64>, yty: f64) -> Result<Self> {
        let p = gram.nrows();
        if gram.ncols() != p || xty.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "gram is {:?}, xty has length {}",
                gram.dim(),
                xty.len()
            )));
        }
        Ok(Self { gram, xty, yty })
    }

    pub fn n_vars(&self) -> usize {
        self.xty.len()
    }

    pub fn zero_state(&self) -> CdState {
        CdState {
            beta: Array1::zeros(self.n_vars()),
            corr: self.xty.to_owned(),
        }
    }

    pub fn state_from(&self, beta: Array1<f64>) -> CdState {
        let corr = &self.xty - &self.gram.dot(&beta);
        CdState { beta, corr }
    }

    /// `max_{j ∈ vars} |c_j|`.
    pub fn lambda_max(&self, vars: &[usize]) -> f64 {
        vars.iter().map(|&j| self.xty[j].abs()).fold(0.0, f64::max)
    }

    /// Objective value `(1/2)(y'y/n − β'c − β'(c − Gβ)) + λ‖β‖₁`.
    pub fn objective(&self, state: &CdState, lambda: f64) -> f64 {
        let fit = state.beta.dot(&self.xty) + state.beta.dot(&state.corr);
        0.5 * (self.yty - fit) + lambda * state.beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    pub fn kkt_residual(&self, state: &CdState, vars: &[usize], lambda: f64) -> f64 {
        kkt_from_corr(state.corr.view(), state.beta.view(), lambda, Some(vars))
    }

    /// One cyclic pass over `order`; returns the largest coefficient change.
    fn sweep(&self, order: &[usize], all_vars: &[usize], lambda: f64, state: &mut CdState) -> f64 {
        let mut max_change = 0.0f64;
        for &j in order {
            let gjj = self.gram[[j, j]];
            if gjj <= 0.0 {
                continue;
            }
            let old = state.beta[j];
            let new = soft_threshold(state.corr[j] + gjj * old, lambda) / gjj;
            let delta = new - old;
            if delta != 0.0 {
                state.beta[j] = new;
                // G is symmetric: row j is column j
                let row = self.gram.row(j);
                match (row.as_slice(), state.corr.as_slice_mut()) {
                    (Some(g), Some(c)) => {
                        for (ck, gk) in c.iter_mut().zip(g) {
                            *ck -= gk * delta;
                        }
                    }
                    _ => {
                        let col = self.gram.column(j);
                        for &k in all_vars {
                            state.corr[k] -= col[k] * delta;
                        }
                    }
                }
                max_change = max_change.max(delta.abs());
            }
        }
        max_change
    }

    /// Runs coordinate descent over `vars` from `state`. Coefficients outside
    /// `vars` are left untouched (callers keep them at zero).
    ///
    /// When `trace` is given, the objective after every sweep is appended.
    pub fn solve(
        &self,
        vars: &[usize],
        lambda: f64,
        state: &mut CdState,
        options: &SolverOptions,
        mut trace: Option<&mut Vec<f64>>,
    ) -> CdOutcome {
        let mut iterations = 0;
        let mut converged = false;
        let mut active: Vec<usize> = Vec::with_capacity(vars.len());
        while iterations < options.max_iter {
            let change = self.sweep(vars, vars, lambda, state);
            iterations += 1;
            if let Some(t) = trace.as_deref_mut() {
                t.push(self.objective(state, lambda));
            }
            if change <= options.tol {
                converged = true;
                break;
            }
            active.clear();
            active.extend(vars.iter().copied().filter(|&j| state.beta[j] != 0.0));
            if trace.is_none() {
                iterations += self.solve_active(&active, lambda, state, options.tol, options.max_iter - iterations);
                continue;
            }
            while iterations < options.max_iter {
                let change = self.sweep(&active, vars, lambda, state);
                iterations += 1;
                if let Some(t) = trace.as_deref_mut() {
                    t.push(self.objective(state, lambda));
                }
                if change <= options.tol {
                    break;
                }
            }
        }
        if converged && options.polish {
            self.polish(vars, lambda, state);
        }
        CdOutcome {
            iterations,
            converged,
        }
    }

    /// Sweeps restricted to `active` on a gathered copy of `G_AA`, then brings
    /// every entry of `corr` up to date. Returns the number of sweeps.
    fn solve_active(&self, active: &[usize], lambda: f64, state: &mut CdState, tol: f64, budget: usize) -> usize {
        let k = active.len();
        if k == 0 || budget == 0 {
            return 0;
        }
        let mut g = vec![0.0; k * k];
        for (a, &i) in active.iter().enumerate() {
            for (b, &j) in active.iter().enumerate() {
                g[a * k + b] = self.gram[[i, j]];
            }
        }
        let start: Vec<f64> = active.iter().map(|&j| state.beta[j]).collect();
        let mut beta = start.clone();
        let mut corr: Vec<f64> = active.iter().map(|&j| state.corr[j]).collect();
        let mut sweeps = 0;
        while sweeps < budget {
            sweeps += 1;
            let mut max_change = 0.0f64;
            for a in 0..k {
                let gaa = g[a * k + a];
                if gaa <= 0.0 {
                    continue;
                }
                let old = beta[a];
                let new = soft_threshold(corr[a] + gaa * old, lambda) / gaa;
                let delta = new - old;
                if delta != 0.0 {
                    beta[a] = new;
                    for (c, gk) in corr.iter_mut().zip(&g[a * k..(a + 1) * k]) {
                        *c -= gk * delta;
                    }
                    max_change = max_change.max(delta.abs());
                }
            }
            if max_change <= tol {
                break;
            }
        }
        for (a, &j) in active.iter().enumerate() {
            let delta = beta[a] - start[a];
            state.beta[j] = beta[a];
            if delta == 0.0 {
                continue;
            }
            let row = self.gram.row(j);
            match (row.as_slice(), state.corr.as_slice_mut()) {
                (Some(gr), Some(c)) => {
                    for (ck, gk) in c.iter_mut().zip(gr) {
                        *ck -= gk * delta;
                    }
                }
                _ => {
                    let col = self.gram.column(j);
                    for kk in 0..state.corr.len() {
                        state.corr[kk] -= col[kk] * delta;
                    }
                }
            }
        }
        for (a, &j) in active.iter().enumerate() {
            state.corr[j] = corr[a];
        }
        sweeps
    }

    /// Replaces the active coefficients by the exact solution of
    /// `G_AA β_A = c_A − λ sign(β_A)` when that keeps every sign and lowers
    /// the KKT residual.
    fn polish(&self, vars: &[usize], lambda: f64, state: &mut CdState) {
        let active: Vec<usize> = vars.iter().copied().filter(|&j| state.beta[j] != 0.0).collect();
        if active.is_empty() {
            return;
        }
        let k = active.len();
        let mut g = Array2::<f64>::zeros((k, k));
        let mut rhs = Array1::<f64>::zeros(k);
        for (a, &i) in active.iter().enumerate() {
            rhs[a] = self.xty[i] - lambda * state.beta[i].signum();
            for (b, &j) in active.iter().enumerate() {
                g[[a, b]] = self.gram[[i, j]];
            }
        }
        let Ok(chol) = Cholesky::factor(g.view()) else {
            return;
        };
        let sol = chol.solve(rhs.view());
        if active
            .iter()
            .zip(sol.iter())
            .any(|(&j, &v)| v == 0.0 || v.signum() != state.beta[j].signum())
        {
            return;
        }
        let mut candidate = state.beta.clone();
        for (&j, &v) in active.iter().zip(sol.iter()) {
            candidate[j] = v;
        }
        let candidate = self.state_from(candidate);
        if self.kkt_residual(&candidate, vars, lambda) <= self.kkt_residual(state, vars, lambda) {
            *state = candidate;
        }
    }

    /// Warm-started solutions along a decreasing penalty grid.
    pub fn path(&self, vars: &[usize], grid: &[f64], options: &SolverOptions) -> Vec<(Array1<f64>, CdOutcome)> {
        let mut state = self.zero_state();
        grid.iter()
            .map(|&lam| {
                let out = self.solve(vars, lam, &mut state, options, None);
                (state.beta.clone(), out)
            })
            .collect()
    }
}
