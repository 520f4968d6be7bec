//! Autoregressive fits of residual series by least squares, sequential lag
//! order selection, and the stationary variance implied by a fitted AR(q).

use ndarray::{Array1, Array2, ArrayView1};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::linalg::{self, Cholesky};

/// Default per-family significance level of the lag-order tests.
pub const DEFAULT_ALPHA_Q: f64 = 0.05;

/// Least-squares AR(q) fit `u_t = Σ_j φ_j u_{t−j} + ε_t` (no intercept).
#[derive(Debug, Clone, PartialEq)]
pub struct ArFit {
    pub q: usize,
    /// `φ̂_1, …, φ̂_q`.
    pub phi: Array1<f64>,
    /// Innovation variance `RSS / (T − q)`.
    pub sigma2: f64,
    /// Regression residuals for `t = q+1..T`.
    pub residuals: Array1<f64>,
    /// OLS standard errors of `φ̂`, using `RSS / (T − 2q)`.
    pub std_errors: Array1<f64>,
    /// Spectral radius of the companion matrix of `φ̂`.
    pub spectral_radius: f64,
}

impl ArFit {
    pub fn is_stationary(&self) -> bool {
        self.spectral_radius < 1.0
    }

    /// `φ̂_j / se(φ̂_j)`.
    pub fn t_stats(&self) -> Array1<f64> {
        &self.phi / &self.std_errors
    }
}

/// Regresses `series[q..]` on its first `q` lags.
pub fn ar_ols_fit(series: ArrayView1<f64>, q: usize) -> Result<ArFit> {
    ar_ols_fit_pooled(&[series], q)
}

/// AR(q) least squares pooled over several contiguous segments of one series;
/// lags never reach across segment boundaries. Residuals are concatenated in
/// segment order.
pub fn ar_ols_fit_pooled(segments: &[ArrayView1<f64>], q: usize) -> Result<ArFit> {
    if q == 0 {
        return Err(Error::InvalidParameter("AR order must be at least 1".into()));
    }
    let usable: usize = segments.iter().map(|s| s.len().saturating_sub(q)).sum();
    let total: usize = usable + q;
    if total <= 2 * q + 2 {
        return Err(Error::InvalidParameter(format!(
            "AR({q}) needs more than {} observations, got {}",
            2 * q + 2,
            segments.iter().map(|s| s.len()).sum::<usize>()
        )));
    }
    if segments.iter().any(|s| s.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite("AR series".into()));
    }
    let mut zz = Array2::<f64>::zeros((q, q));
    let mut zy = Array1::<f64>::zeros(q);
    for series in segments {
        for s in q..series.len() {
            for a in 0..q {
                let la = series[s - 1 - a];
                zy[a] += la * series[s];
                for b in a..q {
                    zz[[a, b]] += la * series[s - 1 - b];
                }
            }
        }
    }
    for a in 0..q {
        for b in 0..a {
            zz[[a, b]] = zz[[b, a]];
        }
    }
    let chol = Cholesky::factor(zz.view()).map_err(|_| {
        Error::Singular(format!("lagged Gram matrix of AR({q}) regression (constant or degenerate series)"))
    })?;
    let phi = chol.solve(zy.view());

    let mut residuals = Array1::<f64>::zeros(usable);
    let mut o = 0;
    for series in segments {
        for s in q..series.len() {
            let mut fitted = 0.0;
            for j in 0..q {
                fitted += phi[j] * series[s - 1 - j];
            }
            residuals[o] = series[s] - fitted;
            o += 1;
        }
    }
    let rss = residuals.dot(&residuals);
    let sigma2 = rss / usable as f64;
    let s2 = rss / (usable - q) as f64;
    let inv = chol.inverse();
    let std_errors = (0..q).map(|j| (s2 * inv[[j, j]]).sqrt()).collect();
    let spectral_radius = linalg::companion_spectral_radius(phi.as_slice().expect("contiguous"));
    Ok(ArFit {
        q,
        phi,
        sigma2,
        residuals,
        std_errors,
        spectral_radius,
    })
}

/// Largest admissible order: `⌊√T⌋ − 1`, further reduced until `T > 2q + 2`.
pub fn max_order(t: usize) -> usize {
    let mut q = ((t as f64).sqrt().floor() as usize).saturating_sub(1);
    while q > 0 && t <= 2 * q + 2 {
        q -= 1;
    }
    q
}

/// General-to-specific lag selection.
///
/// Starts from `q_max` (default `⌊√T⌋ − 1`, capped there) and drops the top lag
/// while its t-statistic is insignificant. Each test runs at level
/// `alpha / q_max` so that the chance of stopping at a spurious high lag is at
/// most `alpha`. Never returns less than 1.
pub fn select_ar_order(series: ArrayView1<f64>, alpha: f64, q_max: Option<usize>) -> Result<usize> {
    Ok(select_ar_fit(series, alpha, q_max)?.q)
}

/// [`select_ar_order`] returning the fit at the selected order.
pub fn select_ar_fit(series: ArrayView1<f64>, alpha: f64, q_max: Option<usize>) -> Result<ArFit> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let t = series.len();
    let cap = max_order(t);
    if cap == 0 {
        return Err(Error::InvalidParameter(format!(
            "series of length {t} is too short for lag selection"
        )));
    }
    let top = q_max.map_or(cap, |q| q.clamp(1, cap));
    let level = alpha / top as f64;
    let mut q = top;
    loop {
        let fit = ar_ols_fit(series, q)?;
        if q == 1 {
            return Ok(fit);
        }
        let df = (t - 2 * q) as f64;
        let crit = StudentsT::new(0.0, 1.0, df)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?
            .inverse_cdf(1.0 - level / 2.0);
        let tstat = fit.phi[q - 1] / fit.std_errors[q - 1];
        if tstat.abs() > crit || !tstat.is_finite() {
            return Ok(fit);
        }
        q -= 1;
    }
}

/// Stationary variance `γ_0` of the AR(q) process with coefficients `phi` and
/// innovation variance `sigma2`, from the Yule–Walker equations
/// `γ_0 = Σ φ_j γ_j + σ²`, `γ_k = Σ φ_j γ_{|k−j|}`.
pub fn long_run_variance(phi: ArrayView1<f64>, sigma2: f64) -> Result<f64> {
    let q = phi.len();
    let radius = linalg::companion_spectral_radius(phi.as_slice().unwrap_or(&phi.to_vec()));
    if radius >= 1.0 {
        return Err(Error::NonStationary { spectral_radius: radius });
    }
    let mut a = Array2::<f64>::zeros((q + 1, q + 1));
    let mut b = Array1::<f64>::zeros(q + 1);
    b[0] = sigma2;
    for k in 0..=q {
        a[[k, k]] += 1.0;
        for j in 1..=q {
            let lag = k.abs_diff(j);
            a[[k, lag]] -= phi[j - 1];
        }
    }
    let gamma = linalg::solve_general(a.view(), b.view())?;
    Ok(gamma[0])
}
