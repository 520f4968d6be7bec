//! Replicated experiments comparing the Lasso, the GLS Lasso and their
//! debiased versions on shared simulated data.
//!
//! Replication `r` of cell `c` draws its data from stream `(c, r)` of the
//! configured seed, so a cell's results do not depend on the thread count or
//! on which other cells run.

use ndarray::Array1;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gls::{self, GlsLassoFit, GlsSettings};
use crate::inference::{self, DebiasOptions};
use crate::lasso::SolverOptions;
use crate::nodewise::{self, NodePenalty};
use crate::sim::{self, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Estimator {
    Lasso,
    GlsLasso,
    DebiasedLasso,
    DebiasedGls,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [
        Estimator::Lasso,
        Estimator::GlsLasso,
        Estimator::DebiasedLasso,
        Estimator::DebiasedGls,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Lasso => "lasso",
            Estimator::GlsLasso => "gls_lasso",
            Estimator::DebiasedLasso => "debiased_lasso",
            Estimator::DebiasedGls => "debiased_gls_lasso",
        }
    }

    pub fn is_debiased(&self) -> bool {
        matches!(self, Estimator::DebiasedLasso | Estimator::DebiasedGls)
    }

    pub fn parse(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown estimator {s:?}")))
    }
}

/// Grid points without improvement before a nodewise path is cut short.
pub const DEFAULT_PATIENCE: usize = 10;

/// Everything that is held fixed across replications.
#[derive(Debug, Clone, PartialEq)]
pub struct McSettings {
    pub gls: GlsSettings,
    pub nodewise: NodePenalty,
    pub debias: DebiasOptions,
    pub alpha: f64,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            gls: GlsSettings::default(),
            nodewise: NodePenalty::CrossValidated {
                k_folds: crate::crossval::DEFAULT_K,
                n_lambdas: crate::lasso::DEFAULT_N_POINTS,
                min_ratio: crate::lasso::DEFAULT_MIN_RATIO,
                patience: Some(DEFAULT_PATIENCE),
            },
            debias: DebiasOptions::default(),
            alpha: 0.05,
        }
    }
}

impl McSettings {
    /// Coarser penalty grids for large grids of cells.
    pub fn fast() -> Self {
        let mut s = Self::default();
        s.gls.n_lambdas = 50;
        s.gls.min_ratio = 1e-2;
        s.nodewise = NodePenalty::CrossValidated {
            k_folds: crate::crossval::DEFAULT_K,
            n_lambdas: 30,
            min_ratio: 1e-2,
            patience: Some(DEFAULT_PATIENCE),
        };
        s
    }
}

/// Debiased estimates with their intervals and statistics against zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DebiasedRecord {
    pub b: Array1<f64>,
    pub var_diag: Array1<f64>,
    pub ci_lower: Array1<f64>,
    pub ci_upper: Array1<f64>,
    pub tstat: Array1<f64>,
    /// Whitened (or raw, for the Lasso) sample size.
    pub n: usize,
}

/// Work performed, for plumbing checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CallCounts {
    pub lasso_fits: usize,
    pub ar_fits: usize,
    pub nodewise_fits: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationResult {
    pub rep: usize,
    pub beta_true: Array1<f64>,
    pub active_set: Vec<usize>,
    pub lasso: Option<Array1<f64>>,
    pub gls_lasso: Option<Array1<f64>>,
    pub debiased_lasso: Option<DebiasedRecord>,
    pub debiased_gls: Option<DebiasedRecord>,
    pub q_hat: Option<usize>,
    pub phi_hat: Option<Array1<f64>>,
    pub converged: bool,
    pub calls: CallCounts,
    /// Reason the replication is excluded from metrics.
    pub failure: Option<String>,
}

impl ReplicationResult {
    pub fn estimate(&self, e: Estimator) -> Option<&Array1<f64>> {
        match e {
            Estimator::Lasso => self.lasso.as_ref(),
            Estimator::GlsLasso => self.gls_lasso.as_ref(),
            Estimator::DebiasedLasso => self.debiased_lasso.as_ref().map(|d| &d.b),
            Estimator::DebiasedGls => self.debiased_gls.as_ref().map(|d| &d.b),
        }
    }

    pub fn debiased(&self, e: Estimator) -> Option<&DebiasedRecord> {
        match e {
            Estimator::DebiasedLasso => self.debiased_lasso.as_ref(),
            Estimator::DebiasedGls => self.debiased_gls.as_ref(),
            _ => None,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.failure.is_none()
    }
}

/// Simulates replication `rep` of cell `cell` and fits the requested estimators.
pub fn run_replication(
    config: &SimConfig,
    cell: u32,
    rep: usize,
    estimators: &[Estimator],
    settings: &McSettings,
) -> Result<ReplicationResult> {
    let mut rng = sim::replication_rng(config.seed, cell, rep as u32);
    let simulated = sim::simulate_dataset(config, &mut rng)?;
    let mut out = ReplicationResult {
        rep,
        beta_true: simulated.beta_true,
        active_set: simulated.active_set,
        lasso: None,
        gls_lasso: None,
        debiased_lasso: None,
        debiased_gls: None,
        q_hat: None,
        phi_hat: None,
        converged: true,
        calls: CallCounts::default(),
        failure: None,
    };
    if let Err(e) = fit_estimators(&simulated.dataset, estimators, settings, &mut out) {
        out.failure = Some(e.to_string());
    } else if !out.converged {
        out.failure = Some("solver did not converge".into());
    }
    Ok(out)
}

fn record(fit: &inference::DebiasedFit, alpha: f64) -> Result<DebiasedRecord> {
    let summary = inference::confidence_intervals(fit, alpha)?;
    Ok(DebiasedRecord {
        b: fit.b.clone(),
        var_diag: fit.var_diag.clone(),
        ci_lower: summary.ci_lower,
        ci_upper: summary.ci_upper,
        tstat: summary.tstat,
        n: fit.n,
    })
}

fn fit_estimators(
    data: &Dataset,
    estimators: &[Estimator],
    settings: &McSettings,
    out: &mut ReplicationResult,
) -> Result<()> {
    let want = |e: Estimator| estimators.contains(&e);
    let solver: SolverOptions = settings.gls.solver;

    let (prelim, prelim_cv) = gls::preliminary_lasso(data, &settings.gls)?;
    out.calls.lasso_fits += 1;
    out.converged &= prelim.converged;
    if want(Estimator::Lasso) {
        out.lasso = Some(prelim.beta.clone());
    }
    let needs_ar = want(Estimator::GlsLasso) || want(Estimator::DebiasedGls) || want(Estimator::DebiasedLasso);
    if !needs_ar {
        return Ok(());
    }

    let gls_fit: GlsLassoFit = gls::gls_lasso_from_prelim(data, prelim.clone(), prelim_cv, &settings.gls)?;
    out.calls.ar_fits += 1;
    out.calls.lasso_fits += 1;
    out.converged &= gls_fit.converged();
    out.q_hat = Some(gls_fit.q_selected);
    out.phi_hat = Some(gls_fit.ar.phi.clone());
    if want(Estimator::GlsLasso) {
        out.gls_lasso = Some(gls_fit.whitened_fit.beta.clone());
    }

    if want(Estimator::DebiasedGls) {
        let nw = nodewise::nodewise_fit(gls_fit.whitened.x(), &settings.nodewise, &solver)?;
        out.calls.nodewise_fits += 1;
        out.converged &= nw.all_converged();
        let fit = inference::debias(&gls_fit, &nw, &settings.debias)?;
        out.debiased_gls = Some(record(&fit, settings.alpha)?);
    }
    if want(Estimator::DebiasedLasso) {
        let nw = nodewise::nodewise_fit(data.x(), &settings.nodewise, &solver)?;
        out.calls.nodewise_fits += 1;
        out.converged &= nw.all_converged();
        // same noise scale as the GLS debiasing
        let sigma_u2 = inference::noise_variance(&gls_fit, settings.debias.noise_scale)?;
        let fit = inference::debias_design(
            data.x(),
            data.y(),
            prelim.beta.view(),
            nw.theta.view(),
            sigma_u2,
            settings.debias.variance_form,
        )?;
        out.debiased_lasso = Some(record(&fit, settings.alpha)?);
    }
    Ok(())
}

/// Runs `reps` replications of one cell on up to `parallelism` threads.
/// Per-replication failures are recorded, never raised.
pub fn run_cell(
    config: &SimConfig,
    cell: u32,
    reps: usize,
    estimators: &[Estimator],
    settings: &McSettings,
    parallelism: usize,
) -> Result<Vec<ReplicationResult>> {
    config.validate()?;
    if reps == 0 {
        return Err(Error::InvalidParameter("reps must be at least 1".into()));
    }
    if estimators.is_empty() {
        return Err(Error::InvalidParameter("no estimators requested".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(|| {
        (0..reps)
            .into_par_iter()
            .map(|r| run_replication(config, cell, r, estimators, settings))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimConfig {
        SimConfig::gaussian(60, 8, 2, 0.5, 17)
    }

    fn quick() -> McSettings {
        let mut s = McSettings::fast();
        s.gls.n_lambdas = 10;
        s.gls.k_folds = 5;
        s.nodewise = NodePenalty::CrossValidated {
            k_folds: 5,
            n_lambdas: 8,
            min_ratio: 1e-2,
            patience: None,
        };
        s
    }

    #[test]
    fn lasso_only_skips_ar_and_nodewise() {
        let r = run_cell(&small(), 0, 1, &[Estimator::Lasso], &quick(), 1).unwrap();
        assert_eq!(r[0].calls.ar_fits, 0);
        assert_eq!(r[0].calls.nodewise_fits, 0);
        assert!(r[0].lasso.is_some() && r[0].gls_lasso.is_none());
    }

    #[test]
    fn all_estimators_present() {
        let r = run_cell(&small(), 0, 2, &Estimator::ALL, &quick(), 2).unwrap();
        for rep in &r {
            assert!(rep.is_ok(), "{:?}", rep.failure);
            for e in Estimator::ALL {
                assert_eq!(rep.estimate(e).unwrap().len(), 8);
            }
            assert_eq!(rep.calls.nodewise_fits, 2);
        }
    }

    #[test]
    fn repeat_and_thread_count_invariance() {
        let a = run_cell(&small(), 3, 3, &Estimator::ALL, &quick(), 1).unwrap();
        let b = run_cell(&small(), 3, 3, &Estimator::ALL, &quick(), 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn estimator_names_round_trip() {
        for e in Estimator::ALL {
            assert_eq!(Estimator::parse(e.name()).unwrap(), e);
        }
        assert!(Estimator::parse("ols").is_err());
    }
}
