//! One-step debiasing of the GLS Lasso and the resulting confidence intervals
//! and t-tests.
//!
//! With `n = T − q̂` whitened observations, `r = ỹ − X̃β̂` and `Θ̂` from the
//! nodewise regressions,
//!
//! ```text
//! b̂ = β̂ + Θ̂X̃'r/n
//! ```
//!
//! and the variance of `b̂_i` is estimated by `σ̂_u²(Θ̂ŜΘ̂')_ii/n`, where `Ŝ`
//! is selected by [`VarianceForm`] and `σ̂_u²` by [`NoiseScale`].

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::ar::{self, ArFit};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gls::GlsLassoFit;
use crate::linalg::Cholesky;
use crate::nodewise::NodewiseResult;

/// The middle matrix of the variance sandwich.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VarianceForm {
    /// Observation-level score covariance
    /// `(1/n)Σ_t (r_t²/mean(r²)) x̃_t x̃_t'`.
    #[default]
    SigmaXu,
    /// `Σ̂ = X̃'X̃/n`.
    Sigma,
}

/// Source of `σ̂_u²`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum NoiseScale {
    /// Mean square of the whitened GLS residuals `ỹ − X̃β̂`.
    #[default]
    Sample,
    /// Innovation variance of the AR model fitted to the preliminary residuals.
    Innovation,
    /// Stationary variance of the fitted AR process, see [`sigma_u_hat2`].
    ArLongRun,
    /// A given value.
    Value(f64),
}

/// Reference distribution for t-statistics and interval quantiles.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Reference {
    #[default]
    Normal,
    StudentT { df: f64 },
}

impl Reference {
    fn quantile(&self, prob: f64) -> Result<f64> {
        match *self {
            Reference::Normal => Ok(Normal::standard().inverse_cdf(prob)),
            Reference::StudentT { df } => Ok(StudentsT::new(0.0, 1.0, df)
                .map_err(|e| Error::InvalidParameter(format!("Student-t reference: {e}")))?
                .inverse_cdf(prob)),
        }
    }

    fn two_sided_p(&self, stat: f64) -> Result<f64> {
        let upper = match *self {
            Reference::Normal => Normal::standard().sf(stat.abs()),
            Reference::StudentT { df } => StudentsT::new(0.0, 1.0, df)
                .map_err(|e| Error::InvalidParameter(format!("Student-t reference: {e}")))?
                .sf(stat.abs()),
        };
        Ok((2.0 * upper).clamp(0.0, 1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DebiasOptions {
    pub variance_form: VarianceForm,
    pub noise_scale: NoiseScale,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DebiasedFit {
    /// `b̂`.
    pub b: Array1<f64>,
    /// `β̂` that was debiased.
    pub beta_hat: Array1<f64>,
    /// `Θ̂X̃'r/n`.
    pub correction: Array1<f64>,
    /// `r = ỹ − X̃β̂`.
    pub residuals: Array1<f64>,
    /// Estimated variance of each `b̂_i`, already divided by `n`.
    pub var_diag: Array1<f64>,
    pub sigma_u2: f64,
    /// Rank-one `v v'/n` with `v = X̃'r`.
    pub sigma_xu: Array2<f64>,
    pub theta: Array2<f64>,
    pub n: usize,
    pub variance_form: VarianceForm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceSummary {
    pub ci_lower: Array1<f64>,
    pub ci_upper: Array1<f64>,
    pub tstat: Array1<f64>,
    pub pvalue: Array1<f64>,
    pub alpha: f64,
    /// `z_{α/2}` (or the Student-t counterpart).
    pub critical_value: f64,
}

impl InferenceSummary {
    /// `|Ŝ_i| > z_{α/2}`.
    pub fn rejects(&self) -> Vec<bool> {
        self.tstat.iter().map(|s| s.abs() > self.critical_value).collect()
    }

    pub fn lengths(&self) -> Array1<f64> {
        &self.ci_upper - &self.ci_lower
    }

    pub fn covers(&self, i: usize, value: f64) -> bool {
        self.ci_lower[i] <= value && value <= self.ci_upper[i]
    }
}

/// `v v'/n` with `v = X̃'r`.
pub fn sigma_xu_hat(whitened_design: ArrayView2<f64>, whitened_residuals: ArrayView1<f64>) -> Array2<f64> {
    let n = whitened_design.nrows() as f64;
    let v = whitened_design.t().dot(&whitened_residuals);
    let col = v.view().insert_axis(Axis(1));
    let row = v.view().insert_axis(Axis(0));
    col.dot(&row) / n
}

/// `(1/n)Σ_t w_t x̃_t x̃_t'` with `w_t = r_t²/mean(r²)` (all ones when `r = 0`).
pub fn score_covariance(whitened_design: ArrayView2<f64>, whitened_residuals: ArrayView1<f64>) -> Array2<f64> {
    let n = whitened_design.nrows();
    let w = score_weights(whitened_residuals);
    let mut xw = whitened_design.to_owned();
    for (mut row, wt) in xw.axis_iter_mut(Axis(0)).zip(w.iter()) {
        row *= *wt;
    }
    xw.t().dot(&whitened_design) / n as f64
}

fn score_weights(r: ArrayView1<f64>) -> Array1<f64> {
    let ms = r.dot(&r) / r.len() as f64;
    if ms > 0.0 {
        r.mapv(|v| v * v / ms)
    } else {
        Array1::ones(r.len())
    }
}

/// Stationary variance of the AR process in `ar`.
pub fn sigma_u_hat2(ar: &ArFit) -> Result<f64> {
    if !ar.is_stationary() {
        return Err(Error::NonStationary {
            spectral_radius: ar.spectral_radius,
        });
    }
    ar::long_run_variance(ar.phi.view(), ar.sigma2)
}

/// Debiases the GLS-Lasso fit using nodewise results built on its whitened design.
pub fn debias(gls: &GlsLassoFit, nw: &NodewiseResult, options: &DebiasOptions) -> Result<DebiasedFit> {
    debias_design(
        gls.whitened.x(),
        gls.whitened.y(),
        gls.whitened_fit.beta.view(),
        nw.theta.view(),
        noise_variance(gls, options.noise_scale)?,
        options.variance_form,
    )
}

/// `σ̂_u²` from a GLS-Lasso fit.
pub fn noise_variance(gls: &GlsLassoFit, scale: NoiseScale) -> Result<f64> {
    Ok(match scale {
        NoiseScale::Sample => {
            let r = gls.whitened_residuals();
            r.dot(&r) / r.len() as f64
        }
        NoiseScale::Innovation => gls.ar.sigma2,
        NoiseScale::ArLongRun => sigma_u_hat2(&gls.ar)?,
        NoiseScale::Value(v) => v,
    })
}

/// Debiasing for any `(design, response, β̂, Θ̂)`.
pub fn debias_design(
    design: ArrayView2<f64>,
    response: ArrayView1<f64>,
    beta_hat: ArrayView1<f64>,
    theta: ArrayView2<f64>,
    sigma_u2: f64,
    form: VarianceForm,
) -> Result<DebiasedFit> {
    let (n, p) = design.dim();
    if response.len() != n || beta_hat.len() != p || theta.dim() != (p, p) {
        return Err(Error::DimensionMismatch(format!(
            "design {n}x{p}, response {}, beta {}, theta {:?}",
            response.len(),
            beta_hat.len(),
            theta.dim()
        )));
    }
    if !(sigma_u2 > 0.0) || !sigma_u2.is_finite() {
        return Err(Error::InvalidParameter(format!("noise variance must be positive, got {sigma_u2}")));
    }
    let residuals = &response - &design.dot(&beta_hat);
    let score = design.t().dot(&residuals);
    let correction = theta.dot(&score) / n as f64;
    let b = &beta_hat + &correction;
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("debiased coefficients".into()));
    }

    // diag(Θ̂ŜΘ̂') = (1/n)Σ_t w_t (Θ̂x̃_t)_i²
    let xt = design.dot(&theta.t());
    let w = match form {
        VarianceForm::SigmaXu => score_weights(residuals.view()),
        VarianceForm::Sigma => Array1::ones(n),
    };
    let mut quad = Array1::<f64>::zeros(p);
    for (row, wt) in xt.axis_iter(Axis(0)).zip(w.iter()) {
        quad.zip_mut_with(&row, |q, v| *q += wt * v * v);
    }
    let var_diag = quad.mapv(|v| sigma_u2 * v / (n as f64 * n as f64));

    Ok(DebiasedFit {
        b,
        beta_hat: beta_hat.to_owned(),
        correction,
        sigma_xu: sigma_xu_hat(design, residuals.view()),
        residuals,
        var_diag,
        sigma_u2,
        theta: theta.to_owned(),
        n,
        variance_form: form,
    })
}

/// Intervals and statistics against `null_values` at level `alpha`.
pub fn inference_summary(
    fit: &DebiasedFit,
    null_values: ArrayView1<f64>,
    alpha: f64,
    reference: Reference,
) -> Result<InferenceSummary> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let p = fit.b.len();
    if null_values.len() != p {
        return Err(Error::DimensionMismatch(format!("{} null values for {p} coefficients", null_values.len())));
    }
    if null_values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("null values".into()));
    }
    if let Some(i) = fit.var_diag.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "variance of coefficient {i} is {}, cannot studentise",
            fit.var_diag[i]
        )));
    }
    let z = reference.quantile(1.0 - alpha / 2.0)?;
    let se = fit.var_diag.mapv(f64::sqrt);
    let tstat = (&fit.b - &null_values) / &se;
    let pvalue = tstat
        .iter()
        .map(|s| reference.two_sided_p(*s))
        .collect::<Result<Array1<f64>>>()?;
    Ok(InferenceSummary {
        ci_lower: &fit.b - &(&se * z),
        ci_upper: &fit.b + &(&se * z),
        tstat,
        pvalue,
        alpha,
        critical_value: z,
    })
}

/// Normal-reference intervals `b̂_i ± z_{α/2}√var_i`; statistics test zero.
pub fn confidence_intervals(fit: &DebiasedFit, alpha: f64) -> Result<InferenceSummary> {
    inference_summary(fit, Array1::zeros(fit.b.len()).view(), alpha, Reference::Normal)
}

/// `Ŝ_i = (b̂_i − null_i)/√var_i` with normal p-values, at `α = 0.05`.
pub fn t_statistics(fit: &DebiasedFit, null_values: ArrayView1<f64>) -> Result<InferenceSummary> {
    inference_summary(fit, null_values, 0.05, Reference::Normal)
}

/// OLS on the selected columns of the whitened data, zeros elsewhere.
/// The flag is true when the active set is empty.
pub fn post_lasso_ols(whitened: &Dataset, active_set: &[usize]) -> Result<(Array1<f64>, bool)> {
    let (n, p) = (whitened.n_obs(), whitened.n_vars());
    let mut beta = Array1::<f64>::zeros(p);
    if active_set.is_empty() {
        return Ok((beta, true));
    }
    if let Some(j) = active_set.iter().find(|j| **j >= p) {
        return Err(Error::DimensionMismatch(format!("active index {j} out of range for {p} columns")));
    }
    if active_set.len() >= n {
        return Err(Error::InvalidParameter(format!(
            "{} selected columns need more than {n} observations",
            active_set.len()
        )));
    }
    let xa = whitened.x.select(Axis(1), active_set);
    let g = xa.t().dot(&xa);
    let chol = Cholesky::factor(g.view()).map_err(|e| match e {
        Error::RankDeficient { columns } => Error::RankDeficient {
            columns: columns.into_iter().map(|c| active_set[c]).collect(),
        },
        other => other,
    })?;
    let coef = chol.solve(xa.t().dot(&whitened.y).view());
    for (k, &j) in active_set.iter().enumerate() {
        beta[j] = coef[k];
    }
    Ok((beta, false))
}

/// Terms of `√n(b̂ − β) = Θ̂X̃'ε/√n − δ` at a reference `β`, with
/// `ε = ỹ − X̃β` and `δ = √n(Θ̂Σ̂ − I)(β̂ − β)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub scaled_error: Array1<f64>,
    pub score: Array1<f64>,
    pub delta: Array1<f64>,
}

impl Decomposition {
    /// `max_i |lhs_i − (score_i − δ_i)|`.
    pub fn max_gap(&self) -> f64 {
        self.scaled_error
            .iter()
            .zip(self.score.iter().zip(self.delta.iter()))
            .map(|(l, (s, d))| (l - (s - d)).abs())
            .fold(0.0, f64::max)
    }
}

pub fn decomposition(
    fit: &DebiasedFit,
    design: ArrayView2<f64>,
    response: ArrayView1<f64>,
    beta: ArrayView1<f64>,
) -> Result<Decomposition> {
    let (n, p) = design.dim();
    if beta.len() != p || response.len() != n || fit.b.len() != p {
        return Err(Error::DimensionMismatch("decomposition inputs".into()));
    }
    let rn = (n as f64).sqrt();
    let eps = &response - &design.dot(&beta);
    let score = fit.theta.dot(&design.t().dot(&eps)) / rn;
    let sigma = design.t().dot(&design) / n as f64;
    let diff = &fit.beta_hat - &beta;
    let delta = (fit.theta.dot(&sigma.dot(&diff)) - &diff) * rn;
    Ok(Decomposition {
        scaled_error: (&fit.b - &beta) * rn,
        score,
        delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy() -> (Array2<f64>, Array1<f64>) {
        let x = Array2::from_shape_fn((12, 2), |(t, j)| ((t * 7 + j * 3) % 5) as f64 - 2.0 + 0.1 * j as f64);
        let y = Array1::from_shape_fn(12, |t| (t % 4) as f64 - 1.5);
        (x, y)
    }

    #[test]
    fn ols_with_exact_inverse_is_fixed_point() {
        let (x, y) = toy();
        let d = Dataset::new(y.clone(), x.clone()).unwrap();
        let (ols, _) = post_lasso_ols(&d, &[0, 1]).unwrap();
        let theta = Cholesky::factor((x.t().dot(&x) / 12.0).view()).unwrap().inverse();
        let fit = debias_design(x.view(), y.view(), ols.view(), theta.view(), 1.0, VarianceForm::SigmaXu).unwrap();
        assert!(fit.correction.iter().all(|c| c.abs() < 1e-12));
    }

    #[test]
    fn zero_beta_with_exact_inverse_gives_ols() {
        let (x, y) = toy();
        let d = Dataset::new(y.clone(), x.clone()).unwrap();
        let (ols, _) = post_lasso_ols(&d, &[0, 1]).unwrap();
        let theta = Cholesky::factor((x.t().dot(&x) / 12.0).view()).unwrap().inverse();
        let fit = debias_design(x.view(), y.view(), array![0.0, 0.0].view(), theta.view(), 1.0, VarianceForm::Sigma)
            .unwrap();
        assert!((&fit.b - &ols).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn sigma_xu_rank_one_scalar() {
        let x = array![[1.0], [2.0], [3.0]];
        let r = array![1.0, -1.0, 2.0];
        let s = sigma_xu_hat(x.view(), r.view());
        assert!((s[[0, 0]] - 25.0 / 3.0).abs() < 1e-14);
        assert!(sigma_xu_hat(x.view(), Array1::zeros(3).view()).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn score_covariance_with_constant_residuals_is_gram() {
        let (x, _) = toy();
        let s = score_covariance(x.view(), Array1::from_elem(12, -0.7).view());
        let g = x.t().dot(&x) / 12.0;
        assert!((&s - &g).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn sigma_u_hat2_closed_forms() {
        let mut ar = ArFit {
            q: 1,
            phi: array![0.5],
            sigma2: 0.75,
            residuals: Array1::zeros(3),
            std_errors: array![0.1],
            spectral_radius: 0.5,
        };
        assert!((sigma_u_hat2(&ar).unwrap() - 1.0).abs() < 1e-14);
        ar.phi = array![0.0];
        ar.sigma2 = 1.0;
        ar.spectral_radius = 0.0;
        assert!((sigma_u_hat2(&ar).unwrap() - 1.0).abs() < 1e-14);
        ar.phi = array![1.01];
        ar.spectral_radius = 1.01;
        assert!(matches!(sigma_u_hat2(&ar), Err(Error::NonStationary { .. })));
    }

    fn fit_with(b: Array1<f64>, var: Array1<f64>) -> DebiasedFit {
        let p = b.len();
        DebiasedFit {
            beta_hat: b.clone(),
            b,
            correction: Array1::zeros(p),
            residuals: Array1::zeros(1),
            var_diag: var,
            sigma_u2: 1.0,
            sigma_xu: Array2::zeros((p, p)),
            theta: Array2::eye(p),
            n: 100,
            variance_form: VarianceForm::SigmaXu,
        }
    }

    #[test]
    fn ci_arithmetic() {
        let fit = fit_with(array![0.0], array![0.04 / 100.0]);
        let s = confidence_intervals(&fit, 0.05).unwrap();
        assert!((s.critical_value - 1.959964).abs() < 1e-5);
        assert!((s.ci_lower[0] + 0.0392).abs() < 1e-4);
        assert!((s.ci_upper[0] - 0.0392).abs() < 1e-4);
        assert!(confidence_intervals(&fit, 0.0).is_err());
        assert!(confidence_intervals(&fit, 1.0).is_err());
    }

    #[test]
    fn tstat_at_null_is_zero_with_unit_pvalue() {
        let fit = fit_with(array![0.3], array![0.01]);
        let s = t_statistics(&fit, array![0.3].view()).unwrap();
        assert_eq!(s.tstat[0], 0.0);
        assert!((s.pvalue[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_variance_rejected() {
        let fit = fit_with(array![0.3], array![0.0]);
        assert!(t_statistics(&fit, array![0.0].view()).is_err());
    }

    #[test]
    fn student_reference_is_wider() {
        let fit = fit_with(array![0.0], array![1.0]);
        let n = inference_summary(&fit, array![0.0].view(), 0.05, Reference::Normal).unwrap();
        let t = inference_summary(&fit, array![0.0].view(), 0.05, Reference::StudentT { df: 10.0 }).unwrap();
        assert!(t.critical_value > n.critical_value);
    }

    #[test]
    fn post_ols_empty_and_full() {
        let (x, y) = toy();
        let d = Dataset::new(y, x).unwrap();
        let (b, warn) = post_lasso_ols(&d, &[]).unwrap();
        assert!(warn && b.iter().all(|v| *v == 0.0));
        let (b, warn) = post_lasso_ols(&d, &[1]).unwrap();
        assert!(!warn && b[0] == 0.0 && b[1] != 0.0);
    }

    #[test]
    fn post_ols_reports_collinear_columns() {
        let mut x = Array2::from_shape_fn((10, 3), |(t, j)| ((t + 2 * j) % 4) as f64 + t as f64 * 0.1 * j as f64);
        let c0 = x.column(0).to_owned();
        x.column_mut(2).assign(&(&c0 * 2.0));
        let d = Dataset::new(Array1::ones(10), x).unwrap();
        match post_lasso_ols(&d, &[0, 1, 2]) {
            Err(Error::RankDeficient { columns }) => assert!(columns.contains(&2) || columns.contains(&0)),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }
}
