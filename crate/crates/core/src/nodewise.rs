//! Approximate inverse covariance of a (whitened) design by nodewise Lasso
//! regressions.
//!
//! Column `i` is regressed on the remaining columns,
//! `γ̂_i = argmin (1/2n)‖x_i − X_{−i}γ‖² + λ_i‖γ‖₁`, and
//!
//! ```text
//! τ̂_i² = (1/n)‖x_i − X_{−i}γ̂_i‖² + λ_i‖γ̂_i‖₁
//! Θ̂_i  = (−γ̂_{i,1}, …, 1, …, −γ̂_{i,p}) / τ̂_i²
//! ```
//!
//! The KKT conditions of each regression give `‖Θ̂_iΣ̂ − e_i‖_∞ ≤ λ_i/τ̂_i²`
//! with `Σ̂ = X'X/n`; fits are polished on their active set so the bound holds
//! to rounding error.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;

use crate::crossval::{self, BlockFolds, CvCurve};
use crate::error::{Error, Result};
use crate::lasso::{self, CovarianceLasso, SolverOptions};

/// Penalties for the nodewise regressions.
#[derive(Debug, Clone, PartialEq)]
pub enum NodePenalty {
    /// One penalty per column.
    PerColumn(Vec<f64>),
    /// The same penalty for every column.
    Shared(f64),
    /// Per-column blocked cross-validation over a log grid from each column's
    /// own `λ_max`. With `patience = Some(m)` a column's path stops once `m`
    /// consecutive grid points fail to lower its cross-validation loss;
    /// skipped points get infinite loss.
    CrossValidated {
        k_folds: usize,
        n_lambdas: usize,
        min_ratio: f64,
        patience: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodewiseResult {
    /// `γ̂_i` with the `i`-th entry removed (length `p − 1`).
    pub gamma: Vec<Array1<f64>>,
    pub tau2: Array1<f64>,
    pub lambdas: Array1<f64>,
    /// `Θ̂ = M̂⁻²Ĉ`, dense `p × p`.
    pub theta: Array2<f64>,
    pub converged: Vec<bool>,
}

impl NodewiseResult {
    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|c| *c)
    }

    /// `max_i ‖Θ̂_iΣ̂ − e_i‖_∞ − λ_i/τ̂_i²`; nonpositive when every row
    /// satisfies the nodewise KKT bound.
    pub fn kkt_bound_excess(&self, sigma_hat: ArrayView2<f64>) -> f64 {
        let prod = self.theta.dot(&sigma_hat);
        (0..self.tau2.len())
            .map(|i| {
                let dev = prod
                    .row(i)
                    .iter()
                    .enumerate()
                    .map(|(j, v)| (v - if i == j { 1.0 } else { 0.0 }).abs())
                    .fold(0.0, f64::max);
                dev - self.lambdas[i] / self.tau2[i]
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `(1/n)‖column − rest·γ‖² + λ‖γ‖₁`.
pub fn tau_sq(column: ArrayView1<f64>, rest: ArrayView2<f64>, gamma: ArrayView1<f64>, lambda: f64) -> f64 {
    let r = &column - &rest.dot(&gamma);
    r.dot(&r) / column.len() as f64 + lambda * gamma.iter().map(|g| g.abs()).sum::<f64>()
}

/// Row `i` of `Θ̂`: `1/τ̂_i²` on the diagonal, `−γ̂_{i,k}/τ̂_i²` elsewhere.
pub fn theta_row(gamma_i: ArrayView1<f64>, tau2_i: f64, i: usize, p: usize) -> Result<Array1<f64>> {
    if !(tau2_i > 0.0) {
        return Err(Error::InvalidParameter(format!("tau2 for row {i} must be positive, got {tau2_i}")));
    }
    if gamma_i.len() + 1 != p || i >= p {
        return Err(Error::DimensionMismatch(format!(
            "gamma of length {} does not fit row {i} of a {p}-column design",
            gamma_i.len()
        )));
    }
    let mut row = Array1::<f64>::zeros(p);
    for k in 0..p {
        row[k] = match k.cmp(&i) {
            std::cmp::Ordering::Less => -gamma_i[k] / tau2_i,
            std::cmp::Ordering::Equal => 1.0 / tau2_i,
            std::cmp::Ordering::Greater => -gamma_i[k - 1] / tau2_i,
        };
    }
    Ok(row)
}

/// Drops entry `i`.
fn without(v: ArrayView1<f64>, i: usize) -> Array1<f64> {
    v.iter()
        .enumerate()
        .filter(|(k, _)| *k != i)
        .map(|(_, x)| *x)
        .collect()
}

/// Runs all `p` nodewise regressions on `design` (`n × p`).
pub fn nodewise_fit(design: ArrayView2<f64>, penalty: &NodePenalty, solver: &SolverOptions) -> Result<NodewiseResult> {
    let (n, p) = design.dim();
    if n < 10 {
        return Err(Error::InvalidParameter(format!("nodewise regressions need n >= 10, got {n}")));
    }
    if p < 2 {
        return Err(Error::InvalidParameter(format!("nodewise regressions need p >= 2, got {p}")));
    }
    if design.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("nodewise design".into()));
    }
    let gram = design.t().dot(&design) / n as f64;
    if let Some(i) = (0..p).find(|&i| gram[[i, i]] <= 0.0) {
        return Err(Error::ZeroColumn(i));
    }

    let lambdas: Vec<f64> = match penalty {
        NodePenalty::PerColumn(l) => {
            if l.len() != p {
                return Err(Error::DimensionMismatch(format!("{} penalties for {p} columns", l.len())));
            }
            l.clone()
        }
        NodePenalty::Shared(l) => vec![*l; p],
        NodePenalty::CrossValidated {
            k_folds,
            n_lambdas,
            min_ratio,
            patience,
        } => {
            let folds = crossval::make_blocks(n, *k_folds)?;
            nodewise_cv(design, gram.view(), &folds, *n_lambdas, *min_ratio, *patience, solver)?
                .iter()
                .map(|c| c.best_lambda())
                .collect::<Result<Vec<_>>>()?
        }
    };
    if let Some(l) = lambdas.iter().find(|l| !(**l >= 0.0)) {
        return Err(Error::InvalidParameter(format!("nodewise penalty must be nonnegative, got {l}")));
    }

    let fits: Vec<(Array1<f64>, f64, bool)> = (0..p)
        .into_par_iter()
        .map(|i| {
            let vars: Vec<usize> = (0..p).filter(|&j| j != i).collect();
            let cov = CovarianceLasso::new(gram.view(), gram.column(i), gram[[i, i]])?;
            let mut state = cov.zero_state();
            let out = cov.solve(&vars, lambdas[i], &mut state, solver, None);
            let beta = state.beta.clone();
            // (1/n)‖x_i − X_{−i}γ‖² from the covariance form
            let rss = gram[[i, i]] - beta.dot(&gram.column(i)) - beta.dot(&state.corr);
            let tau2 = rss + lambdas[i] * beta.iter().map(|b| b.abs()).sum::<f64>();
            if !(tau2 > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "nodewise regression {i} produced nonpositive tau2 {tau2}; column is reproduced exactly by the others"
                )));
            }
            Ok((without(beta.view(), i), tau2, out.converged))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut theta = Array2::<f64>::zeros((p, p));
    let mut gamma = Vec::with_capacity(p);
    let mut tau2 = Array1::<f64>::zeros(p);
    let mut converged = Vec::with_capacity(p);
    for (i, (g, t2, c)) in fits.into_iter().enumerate() {
        theta.row_mut(i).assign(&theta_row(g.view(), t2, i, p)?);
        tau2[i] = t2;
        gamma.push(g);
        converged.push(c);
    }
    Ok(NodewiseResult {
        gamma,
        tau2,
        lambdas: Array1::from(lambdas),
        theta,
        converged,
    })
}

/// Cross-validation curves of every nodewise regression. Held-out loss of
/// node `i` on block `B` is `Σ_{t∈B}(x_{ti} − x_{t,−i}'γ)²`, evaluated through
/// the block Gram matrix.
pub fn nodewise_cv(
    design: ArrayView2<f64>,
    gram: ArrayView2<f64>,
    folds: &BlockFolds,
    n_lambdas: usize,
    min_ratio: f64,
    patience: Option<usize>,
    solver: &SolverOptions,
) -> Result<Vec<CvCurve>> {
    let (n, p) = design.dim();
    if folds.len() != n {
        return Err(Error::DimensionMismatch("folds do not match design rows".into()));
    }
    let block_grams: Vec<Array2<f64>> = folds
        .blocks()
        .iter()
        .map(|r| {
            let xb = design.slice(s![r.clone(), ..]);
            xb.t().dot(&xb)
        })
        .collect();
    let total = &gram * n as f64;
    let mut train_grams = Vec::with_capacity(folds.k());
    for (b, block) in folds.blocks().iter().enumerate() {
        let n_train = n - block.len();
        if n_train < 2 {
            return Err(Error::CrossValidation(format!("block {b} leaves too few training rows")));
        }
        train_grams.push((&total - &block_grams[b]) / n_train as f64);
    }
    let path_opts = SolverOptions {
        polish: false,
        ..*solver
    };

    (0..p)
        .into_par_iter()
        .map(|i| {
            let vars: Vec<usize> = (0..p).filter(|&j| j != i).collect();
            let lam_max = vars.iter().map(|&j| gram[[j, i]].abs()).fold(0.0, f64::max);
            let lambdas = if lam_max > 0.0 {
                lasso::lambda_grid(lam_max, n_lambdas, min_ratio)?
            } else {
                vec![0.0]
            };
            let covs = train_grams
                .iter()
                .map(|g| CovarianceLasso::new(g.view(), g.column(i), g[[i, i]]))
                .collect::<Result<Vec<_>>>()?;
            let mut states: Vec<_> = covs.iter().map(|c| c.zero_state()).collect();
            let mut losses = vec![f64::INFINITY; lambdas.len()];
            let mut best = f64::INFINITY;
            let mut stale = 0;
            for (g, &lam) in lambdas.iter().enumerate() {
                let mut sse = 0.0;
                for ((cov, state), gb) in covs.iter().zip(states.iter_mut()).zip(&block_grams) {
                    cov.solve(&vars, lam, state, &path_opts, None);
                    sse += held_out_node_sse(gb.view(), i, state.beta.view());
                }
                losses[g] = sse / n as f64;
                if losses[g] < best {
                    best = losses[g];
                    stale = 0;
                } else {
                    stale += 1;
                    if patience.is_some_and(|m| stale >= m) {
                        break;
                    }
                }
            }
            Ok(CvCurve { lambdas, losses })
        })
        .collect()
}

/// `G_ii − 2γ'G_{·i} + γ'Gγ` over the nonzero entries of `γ` (full-length, `γ_i = 0`).
fn held_out_node_sse(gb: ArrayView2<f64>, i: usize, gamma: ArrayView1<f64>) -> f64 {
    let active: Vec<(usize, f64)> = gamma
        .iter()
        .enumerate()
        .filter(|(_, g)| **g != 0.0)
        .map(|(j, g)| (j, *g))
        .collect();
    let mut v = gb[[i, i]];
    for &(j, gj) in &active {
        v -= 2.0 * gj * gb[[j, i]];
        for &(k, gk) in &active {
            v += gj * gk * gb[[j, k]];
        }
    }
    v.max(0.0)
}
