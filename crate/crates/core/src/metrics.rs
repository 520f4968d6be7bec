//! Performance measures over replication results: average coverage and
//! interval length on the active set and its complement, RMSE and RMSE
//! ratios, size and size-adjusted power, and studentised deviations.
//!
//! Every measure is a pure fold over the successful replications; failed
//! replications are counted and excluded.

use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::statistics::{Data, OrderStatistics};

use crate::error::{Error, Result};
use crate::montecarlo::{Estimator, ReplicationResult};
use crate::sim::SimConfig;

/// Largest tolerated share of failed replications in a cell.
pub const MAX_FAILURE_SHARE: f64 = 0.05;

/// Probabilities reported for studentised deviations.
pub const QQ_PROBS: [f64; 7] = [0.01, 0.025, 0.05, 0.5, 0.95, 0.975, 0.99];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefSet {
    /// The true support `S₀`.
    Active,
    /// Its complement `S₀ᶜ`.
    Inactive,
}

fn members(rep: &ReplicationResult, set: CoefSet) -> Vec<usize> {
    let p = rep.beta_true.len();
    match set {
        CoefSet::Active => rep.active_set.clone(),
        CoefSet::Inactive => (0..p).filter(|j| rep.active_set.binary_search(j).is_err()).collect(),
    }
}

fn ok(results: &[ReplicationResult]) -> impl Iterator<Item = &ReplicationResult> {
    results.iter().filter(|r| r.is_ok())
}

/// Number of replications that failed.
pub fn exclusions(results: &[ReplicationResult]) -> usize {
    results.iter().filter(|r| !r.is_ok()).count()
}

/// Errors when more than 5% of the replications failed.
pub fn check_failures(results: &[ReplicationResult]) -> Result<()> {
    let failed = exclusions(results);
    if failed as f64 > MAX_FAILURE_SHARE * results.len() as f64 {
        return Err(Error::TooManyFailures {
            failed,
            total: results.len(),
        });
    }
    Ok(())
}

fn pooled<F>(results: &[ReplicationResult], estimator: Estimator, set: CoefSet, f: F) -> Result<f64>
where
    F: Fn(&crate::montecarlo::DebiasedRecord, &ReplicationResult, usize) -> f64,
{
    let mut sum = 0.0;
    let mut count = 0usize;
    for rep in ok(results) {
        let rec = rep
            .debiased(estimator)
            .ok_or_else(|| Error::InvalidParameter(format!("no intervals for {}", estimator.name())))?;
        for j in members(rep, set) {
            sum += f(rec, rep, j);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::InvalidParameter("coefficient set is empty".into()));
    }
    Ok(sum / count as f64)
}

/// Share of (replication, coefficient) pairs in `set` whose interval covers the truth.
pub fn avg_cov(results: &[ReplicationResult], estimator: Estimator, set: CoefSet) -> Result<f64> {
    pooled(results, estimator, set, |rec, rep, j| {
        let b = rep.beta_true[j];
        f64::from(u8::from(rec.ci_lower[j] <= b && b <= rec.ci_upper[j]))
    })
}

/// Mean interval length over (replication, coefficient) pairs in `set`.
pub fn avg_length(results: &[ReplicationResult], estimator: Estimator, set: CoefSet) -> Result<f64> {
    pooled(results, estimator, set, |rec, _, j| rec.ci_upper[j] - rec.ci_lower[j])
}

/// Mean over replications of `√((1/p)‖β̂ − β‖²)`.
pub fn rmse(results: &[ReplicationResult], estimator: Estimator) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for rep in ok(results) {
        let est = rep
            .estimate(estimator)
            .ok_or_else(|| Error::InvalidParameter(format!("no estimates for {}", estimator.name())))?;
        let d = est - &rep.beta_true;
        sum += (d.dot(&d) / d.len() as f64).sqrt();
        count += 1;
    }
    if count == 0 {
        return Err(Error::InvalidParameter("no successful replications".into()));
    }
    Ok(sum / count as f64)
}

/// `RMSE(num) / RMSE(den)`.
pub fn rmse_ratio(results: &[ReplicationResult], num: Estimator, den: Estimator) -> Result<f64> {
    let d = rmse(results, den)?;
    if d == 0.0 {
        return Err(Error::InvalidParameter(format!("RMSE of {} is zero", den.name())));
    }
    Ok(rmse(results, num)? / d)
}

/// Empirical quantile (linear interpolation between order statistics).
pub fn quantile(values: &[f64], prob: f64) -> f64 {
    Data::new(values.to_vec()).quantile(prob)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizePower {
    pub size: f64,
    pub power: f64,
    /// Power at the nominal cutoff.
    pub raw_power: f64,
    /// Cutoff applied to `|statistic|` for `power`.
    pub cutoff: f64,
    pub adjusted: bool,
}

/// Rejection rates of two-sided tests at level `alpha`. When the null
/// rejection rate exceeds `alpha`, power is recomputed at the `1 − alpha`
/// empirical quantile of the absolute null statistics.
pub fn size_and_power(null_stats: &[f64], alt_stats: &[f64], alpha: f64) -> Result<SizePower> {
    if null_stats.is_empty() || alt_stats.is_empty() {
        return Err(Error::InvalidParameter("size and power need statistics under both hypotheses".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let z = Normal::standard().inverse_cdf(1.0 - alpha / 2.0);
    let rate = |s: &[f64], c: f64| s.iter().filter(|v| v.abs() > c).count() as f64 / s.len() as f64;
    let size = rate(null_stats, z);
    let raw_power = rate(alt_stats, z);
    if size <= alpha {
        return Ok(SizePower {
            size,
            power: raw_power,
            raw_power,
            cutoff: z,
            adjusted: false,
        });
    }
    let abs: Vec<f64> = null_stats.iter().map(|v| v.abs()).collect();
    // interpolation can dip below z when few nulls exceed it; never loosen the test
    let cutoff = quantile(&abs, 1.0 - alpha).max(z);
    Ok(SizePower {
        size,
        power: rate(alt_stats, cutoff),
        raw_power,
        cutoff,
        adjusted: true,
    })
}

/// t-statistics against zero on `S₀ᶜ` (null) and `S₀` (alternative).
pub fn null_and_alt_stats(results: &[ReplicationResult], estimator: Estimator) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut null = Vec::new();
    let mut alt = Vec::new();
    for rep in ok(results) {
        let rec = rep
            .debiased(estimator)
            .ok_or_else(|| Error::InvalidParameter(format!("no statistics for {}", estimator.name())))?;
        for j in members(rep, CoefSet::Inactive) {
            null.push(rec.tstat[j]);
        }
        for &j in &rep.active_set {
            alt.push(rec.tstat[j]);
        }
    }
    Ok((null, alt))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentisedSample {
    pub values: Vec<f64>,
    /// `(probability, quantile)` at [`QQ_PROBS`].
    pub quantiles: Vec<(f64, f64)>,
}

/// Pooled `(b̂_i − β_i)/√var_i` over all coefficients of successful replications.
pub fn studentised_distribution(results: &[ReplicationResult], estimator: Estimator) -> Result<StudentisedSample> {
    let mut values = Vec::new();
    for rep in ok(results) {
        let rec = rep
            .debiased(estimator)
            .ok_or_else(|| Error::InvalidParameter(format!("no debiased fit for {}", estimator.name())))?;
        for j in 0..rec.b.len() {
            let v = rec.var_diag[j];
            if !(v > 0.0) {
                return Err(Error::InvalidParameter(format!("variance of coefficient {j} is {v}")));
            }
            values.push((rec.b[j] - rep.beta_true[j]) / v.sqrt());
        }
    }
    if values.is_empty() {
        return Err(Error::InvalidParameter("no studentised deviations".into()));
    }
    let quantiles = QQ_PROBS.iter().map(|&q| (q, quantile(&values, q))).collect();
    Ok(StudentisedSample { values, quantiles })
}

/// One `(cell, estimator, metric)` value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub p: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub phi: f64,
    pub dgp: String,
    pub estimator: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsTable {
    pub rows: Vec<MetricRow>,
}

impl MetricsTable {
    pub fn push(&mut self, config: &SimConfig, estimator: &str, metric: &str, value: f64) {
        self.rows.push(MetricRow {
            p: config.p,
            t: config.t,
            phi: config.phi,
            dgp: config.dgp.name().to_string(),
            estimator: estimator.to_string(),
            metric: metric.to_string(),
            value,
        });
    }

    pub fn extend(&mut self, other: MetricsTable) {
        self.rows.extend(other.rows);
    }

    pub fn get(&self, estimator: &str, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator && r.metric == metric)
            .map(|r| r.value)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Every metric of one cell for the estimators present in `results`.
pub fn cell_metrics(config: &SimConfig, results: &[ReplicationResult], alpha: f64) -> Result<MetricsTable> {
    check_failures(results)?;
    let mut table = MetricsTable::default();
    table.push(config, "all", "replications", results.len() as f64);
    table.push(config, "all", "excluded", exclusions(results) as f64);
    let present: Vec<Estimator> = Estimator::ALL
        .into_iter()
        .filter(|e| ok(results).next().is_some_and(|r| r.estimate(*e).is_some()))
        .collect();
    for &e in &present {
        table.push(config, e.name(), "rmse", rmse(results, e)?);
    }
    if present.contains(&Estimator::GlsLasso) {
        for (num, den) in [
            (Estimator::Lasso, Estimator::GlsLasso),
            (Estimator::DebiasedLasso, Estimator::DebiasedGls),
        ] {
            if present.contains(&num) && present.contains(&den) {
                table.push(config, num.name(), "rmse_ratio", rmse_ratio(results, num, den)?);
            }
        }
    }
    for &e in present.iter().filter(|e| e.is_debiased()) {
        let has_active = ok(results).any(|r| !r.active_set.is_empty());
        let has_inactive = ok(results).any(|r| r.active_set.len() < r.beta_true.len());
        if has_active {
            table.push(config, e.name(), "avg_cov_s0", avg_cov(results, e, CoefSet::Active)?);
            table.push(config, e.name(), "avg_len_s0", avg_length(results, e, CoefSet::Active)?);
        }
        if has_inactive {
            table.push(config, e.name(), "avg_cov_s0c", avg_cov(results, e, CoefSet::Inactive)?);
            table.push(config, e.name(), "avg_len_s0c", avg_length(results, e, CoefSet::Inactive)?);
        }
        if has_active && has_inactive {
            let (null, alt) = null_and_alt_stats(results, e)?;
            let sp = size_and_power(&null, &alt, alpha)?;
            table.push(config, e.name(), "size", sp.size);
            table.push(config, e.name(), "power", sp.raw_power);
            table.push(config, e.name(), "size_adjusted_power", sp.power);
        }
    }
    if let Some(q) = mean_of(ok(results).filter_map(|r| r.q_hat.map(|q| q as f64))) {
        table.push(config, "gls_lasso", "mean_q_hat", q);
    }
    if let Some(f) = mean_of(ok(results).filter_map(|r| r.phi_hat.as_ref().map(|p| p.first().copied().unwrap_or(0.0)))) {
        // an AR(0) fit counts as a zero first coefficient
        table.push(config, "gls_lasso", "mean_phi1_hat", f);
    }
    Ok(table)
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::{CallCounts, DebiasedRecord};
    use ndarray::{array, Array1};

    fn rep(beta: Array1<f64>, active: Vec<usize>, est: Array1<f64>, lo: Array1<f64>, hi: Array1<f64>) -> ReplicationResult {
        let p = beta.len();
        ReplicationResult {
            rep: 0,
            beta_true: beta,
            active_set: active,
            lasso: Some(est.clone()),
            gls_lasso: Some(est.clone()),
            debiased_lasso: None,
            debiased_gls: Some(DebiasedRecord {
                b: est.clone(),
                var_diag: Array1::ones(p),
                ci_lower: lo,
                ci_upper: hi,
                tstat: est,
                n: 10,
            }),
            q_hat: Some(1),
            phi_hat: Some(array![0.5]),
            converged: true,
            calls: CallCounts::default(),
            failure: None,
        }
    }

    #[test]
    fn full_and_empty_coverage() {
        let beta = array![1.0, 0.0, 0.0];
        let all = rep(beta.clone(), vec![0], beta.clone(), array![0.5, -1.0, -1.0], array![1.5, 1.0, 1.0]);
        let none = rep(beta.clone(), vec![0], beta.clone(), array![2.0, 1.0, 1.0], array![3.0, 2.0, 2.0]);
        let e = Estimator::DebiasedGls;
        assert_eq!(avg_cov(&[all.clone()], e, CoefSet::Active).unwrap(), 1.0);
        assert_eq!(avg_cov(&[all.clone()], e, CoefSet::Inactive).unwrap(), 1.0);
        assert_eq!(avg_cov(&[none.clone()], e, CoefSet::Inactive).unwrap(), 0.0);
        assert_eq!(avg_cov(&[all.clone(), none], e, CoefSet::Active).unwrap(), 0.5);
        assert_eq!(avg_length(&[all], e, CoefSet::Inactive).unwrap(), 2.0);
    }

    #[test]
    fn empty_set_is_error() {
        let beta = array![0.0, 0.0];
        let r = rep(beta.clone(), vec![], beta.clone(), beta.clone(), beta);
        assert!(avg_cov(&[r], Estimator::DebiasedGls, CoefSet::Active).is_err());
    }

    #[test]
    fn exact_estimates_have_zero_rmse_and_unit_ratio() {
        let beta = array![1.0, 0.0];
        let r = rep(beta.clone(), vec![0], beta.clone(), beta.clone(), beta.clone());
        assert_eq!(rmse(&[r.clone()], Estimator::Lasso).unwrap(), 0.0);
        assert!(rmse_ratio(&[r.clone()], Estimator::Lasso, Estimator::GlsLasso).is_err());
        let r = rep(beta.clone(), vec![0], array![0.0, 1.0], beta.clone(), beta);
        assert_eq!(rmse_ratio(&[r], Estimator::Lasso, Estimator::GlsLasso).unwrap(), 1.0);
    }

    #[test]
    fn size_zero_means_unadjusted() {
        let sp = size_and_power(&[0.0; 10], &[3.0, 1.0], 0.05).unwrap();
        assert_eq!(sp.size, 0.0);
        assert!(!sp.adjusted);
        assert_eq!(sp.power, 0.5);
    }

    #[test]
    fn oversized_test_is_adjusted_downward() {
        let null: Vec<f64> = (0..100).map(|i| i as f64 * 0.03).collect();
        let alt = vec![2.5, 2.9, 3.5, 2.1];
        let sp = size_and_power(&null, &alt, 0.05).unwrap();
        assert!(sp.size > 0.05 && sp.adjusted);
        assert!(sp.power <= sp.raw_power);
        assert!(sp.cutoff > 1.96);
        assert!(size_and_power(&[], &alt, 0.05).is_err());
    }

    #[test]
    fn failure_threshold() {
        let beta = array![1.0];
        let good = rep(beta.clone(), vec![0], beta.clone(), beta.clone(), beta.clone());
        let mut bad = good.clone();
        bad.failure = Some("x".into());
        let mut v = vec![good.clone(); 19];
        v.push(bad.clone());
        assert!(check_failures(&v).is_ok());
        v.push(bad);
        assert!(matches!(check_failures(&v), Err(Error::TooManyFailures { failed: 2, total: 21 })));
    }

    #[test]
    fn csv_layout() {
        let c = SimConfig::gaussian(20, 3, 1, 0.5, 1);
        let mut t = MetricsTable::default();
        t.push(&c, "lasso", "rmse", 0.25);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "p,T,phi,dgp,estimator,metric,value\n3,20,0.5,gaussian,lasso,rmse,0.25\n");
    }
}
