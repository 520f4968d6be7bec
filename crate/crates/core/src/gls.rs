//! The feasible GLS-Lasso pipeline.
//!
//! 1. preliminary Lasso `β̃` on `(y, X)`;
//! 2. residuals `ũ = y − Xβ̃`;
//! 3. AR(q̂) fit on `ũ`, order chosen by sequential top-lag tests;
//! 4. whitening `ỹ = L̂y`, `X̃ = L̂X`;
//! 5. Lasso `β̂` on `(ỹ, X̃)`.
//!
//! Either penalty may be fixed or chosen by blocked cross-validation. For the
//! second-stage penalty the preliminary fit, the AR coefficients and the
//! whitening are re-estimated inside every training split (unless
//! [`CvWhitening::Global`] is requested), and held-out loss is measured on
//! whitened observations.

use ndarray::{s, Array1, ArrayView1};

use crate::ar::{self, ArFit};
use crate::crossval::{self, BlockFolds, CvCurve};
use crate::data::{residuals, Dataset};
use crate::error::{Error, Result};
use crate::lasso::{self, CovarianceLasso, LassoFit, LassoProblem, SolverOptions};
use crate::whitening::{self, build_whitening, whiten};

/// A penalty level or a request to cross-validate it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty {
    Fixed(f64),
    CrossValidated,
}

/// How the AR structure of the errors is obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum ArSpec {
    /// Sequential lag selection with the given test level and optional cap.
    Select { alpha: f64, q_max: Option<usize> },
    /// OLS fit at a fixed order.
    Order(usize),
    /// Coefficients supplied directly; no estimation.
    Known(Array1<f64>),
}

/// Where the AR coefficients used during second-stage cross-validation come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CvWhitening {
    /// Re-estimate `β̃`, `φ̂` and the whitening on each training split.
    #[default]
    PerFold,
    /// Whiten once with the full-sample `φ̂` and cross-validate on the result.
    Global,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlsSettings {
    pub lambda_prelim: Penalty,
    pub lambda_gls: Penalty,
    pub ar: ArSpec,
    pub k_folds: usize,
    pub n_lambdas: usize,
    pub min_ratio: f64,
    pub cv_whitening: CvWhitening,
    pub solver: SolverOptions,
}

impl Default for GlsSettings {
    fn default() -> Self {
        Self {
            lambda_prelim: Penalty::CrossValidated,
            lambda_gls: Penalty::CrossValidated,
            ar: ArSpec::Select {
                alpha: ar::DEFAULT_ALPHA_Q,
                q_max: None,
            },
            k_folds: crossval::DEFAULT_K,
            n_lambdas: lasso::DEFAULT_N_POINTS,
            min_ratio: lasso::DEFAULT_MIN_RATIO,
            cv_whitening: CvWhitening::PerFold,
            solver: SolverOptions::default(),
        }
    }
}

/// Every intermediate of the pipeline.
#[derive(Debug, Clone)]
pub struct GlsLassoFit {
    /// Preliminary Lasso `β̃` on the raw data.
    pub prelim: LassoFit,
    /// AR fit on the preliminary residuals.
    pub ar: ArFit,
    /// `(ỹ, X̃)`, `T − q̂` rows.
    pub whitened: Dataset,
    /// GLS Lasso `β̂` on the whitened data.
    pub whitened_fit: LassoFit,
    pub q_selected: usize,
    pub lambda_prelim: f64,
    pub lambda_gls: f64,
    pub prelim_cv: Option<CvCurve>,
    pub gls_cv: Option<CvCurve>,
}

impl GlsLassoFit {
    pub fn converged(&self) -> bool {
        self.prelim.converged && self.whitened_fit.converged
    }

    /// Residuals of the whitened model `ỹ − X̃β̂`.
    pub fn whitened_residuals(&self) -> Array1<f64> {
        &self.whitened.y - &self.whitened.x.dot(&self.whitened_fit.beta)
    }
}

fn grid_for(lam_max: f64, settings: &GlsSettings) -> Result<Option<Vec<f64>>> {
    if lam_max <= 0.0 {
        return Ok(None);
    }
    lasso::lambda_grid(lam_max, settings.n_lambdas, settings.min_ratio).map(Some)
}

/// Preliminary Lasso with its penalty (cross-validated if requested).
pub fn preliminary_lasso(dataset: &Dataset, settings: &GlsSettings) -> Result<(LassoFit, Option<CvCurve>)> {
    let (lambda, curve) = match settings.lambda_prelim {
        Penalty::Fixed(l) => (l, None),
        Penalty::CrossValidated => {
            let problem = LassoProblem::new(dataset.x(), dataset.y(), 0.0, false)?;
            match grid_for(lasso::lambda_max(&problem)?, settings)? {
                None => (0.0, None),
                Some(grid) => {
                    let folds = crossval::make_blocks(dataset.n_obs(), settings.k_folds)?;
                    let curve = crossval::cv_lasso_curve(dataset, &grid, &folds, &settings.solver)?;
                    (curve.best_lambda()?, Some(curve))
                }
            }
        }
    };
    let problem = LassoProblem::new(dataset.x(), dataset.y(), lambda, false)?;
    Ok((lasso::lasso_fit(&problem, None, &settings.solver)?, curve))
}

/// AR coefficients for a residual series according to `spec`.
pub fn fit_ar(resid: ArrayView1<f64>, spec: &ArSpec) -> Result<ArFit> {
    match spec {
        ArSpec::Select { alpha, q_max } => ar::select_ar_fit(resid, *alpha, *q_max),
        ArSpec::Order(q) => ar::ar_ols_fit(resid, *q),
        ArSpec::Known(phi) => known_ar(resid, phi.view()),
    }
}

fn known_ar(resid: ArrayView1<f64>, phi: ArrayView1<f64>) -> Result<ArFit> {
    let q = phi.len();
    let op = build_whitening(phi, resid.len())?;
    let eps = op.apply(resid)?;
    let n = eps.len() as f64;
    Ok(ArFit {
        q,
        sigma2: eps.dot(&eps) / n,
        residuals: eps,
        phi: phi.to_owned(),
        std_errors: Array1::from_elem(q, f64::NAN),
        spectral_radius: crate::linalg::companion_spectral_radius(&phi.to_vec()),
    })
}

/// Runs the full pipeline.
pub fn gls_lasso(dataset: &Dataset, settings: &GlsSettings) -> Result<GlsLassoFit> {
    dataset.ensure_finite()?;
    let (prelim, prelim_cv) = preliminary_lasso(dataset, settings)?;
    gls_lasso_from_prelim(dataset, prelim, prelim_cv, settings)
}

/// Steps 2–5 of the pipeline given an existing preliminary fit.
pub fn gls_lasso_from_prelim(
    dataset: &Dataset,
    prelim: LassoFit,
    prelim_cv: Option<CvCurve>,
    settings: &GlsSettings,
) -> Result<GlsLassoFit> {
    if prelim.beta.len() != dataset.n_vars() {
        return Err(Error::DimensionMismatch("preliminary fit does not match the dataset".into()));
    }
    let u_tilde = residuals(dataset, prelim.beta.view())?;
    let ar_fit = fit_ar(u_tilde.view(), &settings.ar)?;
    let op = build_whitening(ar_fit.phi.view(), dataset.n_obs())?;
    let whitened = whiten(dataset, &op)?;

    let (lambda_gls, gls_cv) = match settings.lambda_gls {
        Penalty::Fixed(l) => (l, None),
        Penalty::CrossValidated => {
            let problem = LassoProblem::new(whitened.x(), whitened.y(), 0.0, false)?;
            match grid_for(lasso::lambda_max(&problem)?, settings)? {
                None => (0.0, None),
                Some(grid) => {
                    let curve = match settings.cv_whitening {
                        CvWhitening::PerFold => {
                            let folds = crossval::make_blocks(dataset.n_obs(), settings.k_folds)?;
                            cv_gls_curve(dataset, &grid, &folds, prelim.lambda, ar_fit.q, settings)?
                        }
                        CvWhitening::Global => {
                            let folds = crossval::make_blocks(whitened.n_obs(), settings.k_folds)?;
                            crossval::cv_lasso_curve(&whitened, &grid, &folds, &settings.solver)?
                        }
                    };
                    (curve.best_lambda()?, Some(curve))
                }
            }
        }
    };
    let problem = LassoProblem::new(whitened.x(), whitened.y(), lambda_gls, false)?;
    let whitened_fit = lasso::lasso_fit(&problem, None, &settings.solver)?;
    Ok(GlsLassoFit {
        q_selected: ar_fit.q,
        lambda_prelim: prelim.lambda,
        prelim,
        ar: ar_fit,
        whitened,
        whitened_fit,
        lambda_gls,
        prelim_cv,
        gls_cv,
    })
}

/// GLS Lasso on data whitened with known AR coefficients.
pub fn gls_lasso_known_phi(
    dataset: &Dataset,
    phi: ArrayView1<f64>,
    lambda: f64,
    options: &SolverOptions,
) -> Result<(Dataset, LassoFit)> {
    let op = build_whitening(phi, dataset.n_obs())?;
    let whitened = whiten(dataset, &op)?;
    let problem = LassoProblem::new(whitened.x(), whitened.y(), lambda, false)?;
    let fit = lasso::lasso_fit(&problem, None, options)?;
    Ok((whitened, fit))
}

/// Second-stage cross-validation with per-fold re-estimation of `β̃` (at
/// `lambda_prelim`) and of `φ̂` (at order `q`).
///
/// Training segments are whitened separately; the held-out block is whitened
/// with the fold's `φ̂` using observed lags, and the loss is the mean squared
/// whitened prediction error over all held-out rows with `t ≥ q`.
pub fn cv_gls_curve(
    dataset: &Dataset,
    grid: &[f64],
    folds: &BlockFolds,
    lambda_prelim: f64,
    q: usize,
    settings: &GlsSettings,
) -> Result<CvCurve> {
    let vars: Vec<usize> = (0..dataset.n_vars()).collect();
    let path_opts = SolverOptions {
        polish: false,
        ..settings.solver
    };
    let mut sse = vec![0.0; grid.len()];
    let mut count = 0usize;
    for (b, block) in folds.blocks().iter().enumerate() {
        let segments = folds.training_segments(b);
        let train_rows = folds.training_rows(b);
        if train_rows.len() < 2 {
            return Err(Error::CrossValidation(format!("block {b} leaves too few training rows")));
        }
        let train = Dataset {
            y: dataset.y.select(ndarray::Axis(0), &train_rows),
            x: dataset.x.select(ndarray::Axis(0), &train_rows),
        };
        let problem = LassoProblem::new(train.x(), train.y(), lambda_prelim, false)?;
        let prelim = lasso::lasso_fit(&problem, None, &path_opts)?;
        let resid = residuals(dataset, prelim.beta.view())?;
        let seg_views: Vec<ArrayView1<f64>> = segments.iter().map(|&(a, e)| resid.slice(s![a..e])).collect();
        let phi = match &settings.ar {
            ArSpec::Known(phi) => phi.clone(),
            _ => ar::ar_ols_fit_pooled(&seg_views, q)?.phi,
        };
        let q = phi.len();
        let wtrain = whitening::whiten_segments(dataset, phi.view(), &segments);
        let n_train = wtrain.n_obs();
        if n_train < 2 {
            return Err(Error::CrossValidation(format!("block {b}: whitened training set is empty")));
        }
        let nf = n_train as f64;
        let g = wtrain.x.t().dot(&wtrain.x) / nf;
        let c = wtrain.x.t().dot(&wtrain.y) / nf;
        let yy = wtrain.y.dot(&wtrain.y) / nf;
        let cov = CovarianceLasso::new(g.view(), c.view(), yy)?;

        let held_rows: Vec<usize> = block.clone().filter(|&t| t >= q).collect();
        let held = Dataset {
            y: whitening::whiten_vector_rows(dataset.y(), phi.view(), held_rows.iter().copied()),
            x: whitening::whiten_matrix_rows(dataset.x(), phi.view(), held_rows.iter().copied()),
        };
        count += held.n_obs();
        for (i, (beta, _)) in cov.path(&vars, grid, &path_opts).into_iter().enumerate() {
            sse[i] += crossval::block_sse(&held, 0..held.n_obs(), beta.view());
        }
    }
    Ok(CvCurve {
        lambdas: grid.to_vec(),
        losses: sse.into_iter().map(|s| s / count as f64).collect(),
    })
}
