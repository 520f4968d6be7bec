//! The `fit`, `infer`, `simulate` and `report` commands.
//!
//! Each command writes its outputs through temporary files that are renamed
//! into place only once complete, and reports whether every fit converged.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array1;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gls::{self, ArSpec, GlsLassoFit, GlsSettings, Penalty};
use crate::inference::{self, DebiasOptions, NoiseScale, Reference, VarianceForm};
use crate::io::{self, RunMetadata};
use crate::metrics::{self, MetricRow, MetricsTable};
use crate::montecarlo::{self, Estimator, McSettings, DEFAULT_PATIENCE};
use crate::nodewise::{self, NodePenalty};
use crate::{ar, crossval, lasso};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Fit,
    Infer,
    Simulate,
    Report,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Fit => "fit",
            Command::Infer => "infer",
            Command::Simulate => "simulate",
            Command::Report => "report",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaChoice {
    Cv,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceChoice {
    SigmaXu,
    Sigma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaUChoice {
    /// Mean square of the whitened GLS residuals.
    Sample,
    /// Stationary variance of the fitted AR process.
    Ar,
    /// Innovation variance of the fitted AR process.
    ArInnovation,
}

/// Parsed command line. Output paths and thread counts are left out of the
/// embedded metadata so that outputs only depend on what was computed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliConfig {
    pub command: Command,
    pub inputs: Vec<PathBuf>,
    #[serde(skip)]
    pub output: PathBuf,
    pub alpha: f64,
    pub k_folds: usize,
    pub q_max: Option<usize>,
    pub lambda: LambdaChoice,
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    #[serde(skip)]
    pub parallelism: usize,
    pub variance_form: VarianceChoice,
    pub sigma_u: SigmaUChoice,
    /// Rescale covariates to unit mean square before fitting.
    pub standardize: bool,
    /// Coarser penalty grids in `simulate`.
    pub fast: bool,
    pub allow_nonconvergence: bool,
}

impl CliConfig {
    pub fn new(command: Command, inputs: Vec<PathBuf>, output: PathBuf) -> Self {
        Self {
            command,
            inputs,
            output,
            alpha: 0.05,
            k_folds: crossval::DEFAULT_K,
            q_max: None,
            lambda: LambdaChoice::Cv,
            seed: None,
            reps: None,
            parallelism: 1,
            variance_form: VarianceChoice::SigmaXu,
            sigma_u: SigmaUChoice::Sample,
            standardize: true,
            fast: false,
            allow_nonconvergence: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha must lie in (0,1), got {}", self.alpha)));
        }
        if self.k_folds < 2 {
            return Err(Error::InvalidParameter(format!("k-folds must be at least 2, got {}", self.k_folds)));
        }
        if let LambdaChoice::Fixed(l) = self.lambda {
            if !(l.is_finite() && l >= 0.0) {
                return Err(Error::InvalidParameter(format!("lambda must be a non-negative number, got {l}")));
            }
        }
        if self.parallelism == 0 {
            return Err(Error::InvalidParameter("threads must be at least 1".into()));
        }
        if self.reps == Some(0) {
            return Err(Error::InvalidParameter("reps must be at least 1".into()));
        }
        match (self.command, self.inputs.len()) {
            (Command::Report, 0) => return Err(Error::InvalidParameter("report needs at least one input".into())),
            (Command::Report, _) | (_, 1) => {}
            (c, n) => {
                return Err(Error::InvalidParameter(format!("{} takes exactly one input, got {n}", c.name())));
            }
        }
        for p in &self.inputs {
            if !p.is_file() {
                return Err(Error::InvalidParameter(format!("input {} does not exist", p.display())));
            }
        }
        let parent = self.output.parent().filter(|d| !d.as_os_str().is_empty());
        if let Some(dir) = parent {
            if !dir.is_dir() {
                return Err(Error::InvalidParameter(format!("output directory {} does not exist", dir.display())));
            }
        }
        Ok(())
    }

    fn penalty(&self) -> Penalty {
        match self.lambda {
            LambdaChoice::Cv => Penalty::CrossValidated,
            LambdaChoice::Fixed(l) => Penalty::Fixed(l),
        }
    }

    pub fn gls_settings(&self) -> GlsSettings {
        GlsSettings {
            lambda_prelim: self.penalty(),
            lambda_gls: self.penalty(),
            ar: ArSpec::Select {
                alpha: ar::DEFAULT_ALPHA_Q,
                q_max: self.q_max,
            },
            k_folds: self.k_folds,
            ..GlsSettings::default()
        }
    }

    pub fn nodewise_penalty(&self) -> NodePenalty {
        NodePenalty::CrossValidated {
            k_folds: self.k_folds,
            n_lambdas: lasso::DEFAULT_N_POINTS,
            min_ratio: lasso::DEFAULT_MIN_RATIO,
            patience: Some(DEFAULT_PATIENCE),
        }
    }

    pub fn debias_options(&self) -> DebiasOptions {
        DebiasOptions {
            variance_form: match self.variance_form {
                VarianceChoice::SigmaXu => VarianceForm::SigmaXu,
                VarianceChoice::Sigma => VarianceForm::Sigma,
            },
            noise_scale: match self.sigma_u {
                SigmaUChoice::Sample => NoiseScale::Sample,
                SigmaUChoice::Ar => NoiseScale::ArLongRun,
                SigmaUChoice::ArInnovation => NoiseScale::Innovation,
            },
        }
    }

    pub fn mc_settings(&self) -> McSettings {
        let mut s = if self.fast { McSettings::fast() } else { McSettings::default() };
        s.gls.lambda_prelim = self.penalty();
        s.gls.lambda_gls = self.penalty();
        s.gls.k_folds = self.k_folds;
        s.gls.ar = ArSpec::Select {
            alpha: ar::DEFAULT_ALPHA_Q,
            q_max: self.q_max,
        };
        if let NodePenalty::CrossValidated { k_folds, .. } = &mut s.nodewise {
            *k_folds = self.k_folds;
        }
        s.debias = self.debias_options();
        s.alpha = self.alpha;
        s
    }

    fn metadata(&self, seed: Option<u64>, extra: Option<serde_json::Value>) -> Result<RunMetadata> {
        let mut config = serde_json::to_value(self)?;
        if let (Some(extra), serde_json::Value::Object(map)) = (extra, &mut config) {
            map.insert("cells".into(), extra);
        }
        Ok(RunMetadata::new(self.command.name(), seed, config))
    }
}

/// How a command finished when it did not fail outright.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Outputs were written but some fit did not converge.
    NotConverged,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

pub fn exit_code(result: &Result<Outcome>) -> i32 {
    match result {
        Ok(Outcome::Success) => EXIT_OK,
        Ok(Outcome::NotConverged) => EXIT_NOT_CONVERGED,
        Err(Error::InvalidParameter(_) | Error::Parse { .. } | Error::Format { .. }) => EXIT_USAGE,
        Err(_) => EXIT_FAILURE,
    }
}

pub fn run(config: &CliConfig) -> Result<Outcome> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(|| match config.command {
        Command::Fit => cmd_fit(config),
        Command::Infer => cmd_infer(config),
        Command::Simulate => cmd_simulate(config),
        Command::Report => cmd_report(config),
    })
}

fn outcome(converged: bool, config: &CliConfig) -> Outcome {
    if converged || config.allow_nonconvergence {
        Outcome::Success
    } else {
        Outcome::NotConverged
    }
}

/// Column means and scales `sqrt(mean (x_j − x̄_j)²)`; constant columns keep scale 1.
pub fn column_moments(dataset: &Dataset) -> (Array1<f64>, Array1<f64>) {
    let means = dataset.x.mean_axis(ndarray::Axis(0)).expect("dataset has rows");
    let n = dataset.n_obs() as f64;
    let scales = dataset
        .x
        .columns()
        .into_iter()
        .zip(means.iter())
        .map(|(c, m)| {
            let s = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    (means, scales)
}

/// The dataset as fitted and the covariate scales to undo afterwards.
/// Standardizing centers `y` and every covariate and rescales covariates
/// to unit variance; slopes are unaffected by the centering.
fn prepared(config: &CliConfig) -> Result<(Dataset, Array1<f64>)> {
    let data = io::parse_dataset(&config.inputs[0])?;
    if !config.standardize {
        let ones = Array1::ones(data.n_vars());
        return Ok((data, ones));
    }
    let (means, scales) = column_moments(&data);
    let x = (&data.x - &means) / &scales;
    let y = &data.y - data.y.mean().expect("dataset has rows");
    Ok((Dataset::new(y, x)?, scales))
}

#[derive(Debug, Serialize)]
struct Convergence {
    prelim: bool,
    prelim_iterations: usize,
    gls: bool,
    gls_iterations: usize,
}

#[derive(Debug, Serialize)]
struct FitOutput {
    metadata: RunMetadata,
    n_obs: usize,
    n_vars: usize,
    beta_hat: Vec<f64>,
    beta_prelim: Vec<f64>,
    support: Vec<usize>,
    phi_hat: Vec<f64>,
    q_hat: usize,
    sigma2_innovation: f64,
    /// Penalties on the scale the Lasso saw (standardized covariates when
    /// `column_scales` is not all ones).
    lambda_prelim: f64,
    lambda_gls: f64,
    column_scales: Vec<f64>,
    convergence: Convergence,
}

fn fit_output(config: &CliConfig, data: &Dataset, scales: &Array1<f64>, fit: &GlsLassoFit) -> Result<FitOutput> {
    let beta_hat = &fit.whitened_fit.beta / scales;
    Ok(FitOutput {
        metadata: config.metadata(config.seed, None)?,
        n_obs: data.n_obs(),
        n_vars: data.n_vars(),
        support: lasso::active_set(beta_hat.view()),
        beta_hat: beta_hat.to_vec(),
        beta_prelim: (&fit.prelim.beta / scales).to_vec(),
        phi_hat: fit.ar.phi.to_vec(),
        q_hat: fit.q_selected,
        sigma2_innovation: fit.ar.sigma2,
        lambda_prelim: fit.lambda_prelim,
        lambda_gls: fit.lambda_gls,
        column_scales: scales.to_vec(),
        convergence: Convergence {
            prelim: fit.prelim.converged,
            prelim_iterations: fit.prelim.iterations,
            gls: fit.whitened_fit.converged,
            gls_iterations: fit.whitened_fit.iterations,
        },
    })
}

/// GLS Lasso with cross-validated penalties; writes a JSON summary.
pub fn cmd_fit(config: &CliConfig) -> Result<Outcome> {
    let (data, scales) = prepared(config)?;
    let fit = gls::gls_lasso(&data, &config.gls_settings())?;
    io::write_json(&config.output, &fit_output(config, &data, &scales, &fit)?)?;
    Ok(outcome(fit.converged(), config))
}

#[derive(Debug, Serialize)]
struct InferRow {
    index: usize,
    estimate: f64,
    debiased: f64,
    ci_lower: f64,
    ci_upper: f64,
    tstat: f64,
    pvalue: f64,
}

/// Fit plus nodewise regressions and debiasing; writes one CSV row per
/// coefficient. Indices are 1-based covariate positions.
pub fn cmd_infer(config: &CliConfig) -> Result<Outcome> {
    let (data, scales) = prepared(config)?;
    let fit = gls::gls_lasso(&data, &config.gls_settings())?;
    let nw = nodewise::nodewise_fit(fit.whitened.x(), &config.nodewise_penalty(), &fit_solver(config))?;
    let deb = inference::debias(&fit, &nw, &config.debias_options())?;
    let summary = inference::inference_summary(
        &deb,
        Array1::zeros(data.n_vars()).view(),
        config.alpha,
        Reference::Normal,
    )?;
    let header = config.metadata(config.seed, None)?.csv_comment()?;
    io::atomic_write(&config.output, |w| {
        w.write_all(header.as_bytes())?;
        let mut csv = csv::Writer::from_writer(w);
        for j in 0..data.n_vars() {
            let s = scales[j];
            csv.serialize(InferRow {
                index: j + 1,
                estimate: fit.whitened_fit.beta[j] / s,
                debiased: deb.b[j] / s,
                ci_lower: summary.ci_lower[j] / s,
                ci_upper: summary.ci_upper[j] / s,
                tstat: summary.tstat[j],
                pvalue: summary.pvalue[j],
            })?;
        }
        csv.flush()?;
        Ok(())
    })?;
    Ok(outcome(fit.converged() && nw.all_converged(), config))
}

fn fit_solver(config: &CliConfig) -> lasso::SolverOptions {
    config.gls_settings().solver
}

#[derive(Debug, Serialize)]
struct QuantileRow<'a> {
    p: usize,
    #[serde(rename = "T")]
    t: usize,
    phi: f64,
    dgp: &'a str,
    estimator: &'a str,
    prob: f64,
    quantile: f64,
}

/// Sibling path for the studentised-quantile table of a metrics file.
pub fn quantiles_path(metrics: &Path) -> PathBuf {
    metrics.with_extension("quantiles.csv")
}

/// Monte Carlo over every cell of a simulation config file. Cell `i` of the
/// file uses stream family `i` of its seed; `--seed` and `--reps` override
/// every cell.
pub fn cmd_simulate(config: &CliConfig) -> Result<Outcome> {
    let mut cells = io::read_sim_configs(&config.inputs[0])?;
    for c in &mut cells {
        if let Some(seed) = config.seed {
            c.seed = seed;
        }
        if let Some(reps) = config.reps {
            c.reps = reps;
        }
    }
    let settings = config.mc_settings();
    let mut table = MetricsTable::default();
    let mut quantiles = Vec::new();
    let mut all_ok = true;
    for (i, cell) in cells.iter().enumerate() {
        let cell_id = u32::try_from(i).map_err(|_| Error::InvalidParameter("too many cells".into()))?;
        let results = montecarlo::run_cell(cell, cell_id, cell.reps, &Estimator::ALL, &settings, config.parallelism)?;
        all_ok &= results.iter().all(|r| r.is_ok());
        table.extend(metrics::cell_metrics(cell, &results, config.alpha)?);
        for e in [Estimator::DebiasedLasso, Estimator::DebiasedGls] {
            let sample = metrics::studentised_distribution(&results, e)?;
            for (prob, q) in sample.quantiles {
                quantiles.push((i, e, prob, q));
            }
        }
    }

    let seed = if cells.iter().all(|c| c.seed == cells[0].seed) {
        Some(cells[0].seed)
    } else {
        None
    };
    let header = config
        .metadata(seed, Some(serde_json::to_value(&cells)?))?
        .csv_comment()?;
    let metrics_file = io::stage(&config.output, |w| {
        w.write_all(header.as_bytes())?;
        table.write_csv(w)
    })?;
    let quantile_file = io::stage(&quantiles_path(&config.output), |w| {
        w.write_all(header.as_bytes())?;
        let mut csv = csv::Writer::from_writer(w);
        for (i, e, prob, quantile) in &quantiles {
            let c = &cells[*i];
            csv.serialize(QuantileRow {
                p: c.p,
                t: c.t,
                phi: c.phi,
                dgp: c.dgp.name(),
                estimator: e.name(),
                prob: *prob,
                quantile: *quantile,
            })?;
        }
        csv.flush()?;
        Ok(())
    })?;
    metrics_file.commit()?;
    quantile_file.commit()?;
    Ok(outcome(all_ok, config))
}

/// Reads every input table and writes the text report.
pub fn cmd_report(config: &CliConfig) -> Result<Outcome> {
    let mut rows = Vec::new();
    for p in &config.inputs {
        rows.extend(io::read_metrics(p)?);
    }
    if rows.is_empty() {
        return Err(Error::InvalidParameter("no metric rows in the inputs".into()));
    }
    let text = config.metadata(None, None)?.csv_comment()? + "\n" + &render_report(&rows);
    io::atomic_write(&config.output, |w| Ok(w.write_all(text.as_bytes())?))?;
    Ok(Outcome::Success)
}

const LABEL_WIDTH: usize = 44;
const COL_WIDTH: usize = 9;

/// Value formatting used in reports.
pub fn format_value(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.3}"),
        None => "-".into(),
    }
}

fn lookup(rows: &[&MetricRow], p: usize, t: usize, phi: f64, estimator: &str, metric: &str) -> Option<f64> {
    rows.iter()
        .find(|r| r.p == p && r.t == t && r.phi == phi && r.estimator == estimator && r.metric == metric)
        .map(|r| r.value)
}

/// Report lines: one block per DGP with a Table-1 panel pair (RMSE ratios
/// and the GLS RMSE) and a Table-2 panel (coverage, length, power, size).
/// Rows are values of `p`, columns are `(T, φ)` pairs.
pub fn render_report(rows: &[MetricRow]) -> String {
    let dgps: BTreeSet<&str> = rows.iter().map(|r| r.dgp.as_str()).collect();
    let mut out = String::new();
    for dgp in dgps {
        let rows: Vec<&MetricRow> = rows.iter().filter(|r| r.dgp == dgp).collect();
        let ps: BTreeSet<usize> = rows.iter().map(|r| r.p).collect();
        let mut cols: Vec<(usize, f64)> = rows.iter().map(|r| (r.t, r.phi)).collect();
        cols.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        cols.dedup();

        let head = |out: &mut String| {
            let _ = write!(out, "{:<LABEL_WIDTH$}", "T");
            for (t, _) in &cols {
                let _ = write!(out, "{t:>COL_WIDTH$}");
            }
            out.push('\n');
            let _ = write!(out, "{:<LABEL_WIDTH$}", "phi");
            for (_, phi) in &cols {
                let _ = write!(out, "{phi:>COL_WIDTH$}");
            }
            out.push('\n');
        };
        let line = |out: &mut String, label: String, p: usize, estimator: &str, metric: &str| {
            let _ = write!(out, "{label:<LABEL_WIDTH$}");
            for (t, phi) in &cols {
                let v = format_value(lookup(&rows, p, *t, *phi, estimator, metric));
                let _ = write!(out, "{v:>COL_WIDTH$}");
            }
            out.push('\n');
        };

        let _ = writeln!(out, "== dgp {dgp}: RMSE relative to the GLS Lasso ==");
        head(&mut out);
        let _ = writeln!(out, "Panel I");
        for &p in &ps {
            line(&mut out, format!("Lasso/GLS Lasso  p={p}"), p, "lasso", "rmse_ratio");
            line(&mut out, "  GLS Lasso RMSE".into(), p, "gls_lasso", "rmse");
        }
        let _ = writeln!(out, "Panel II");
        for &p in &ps {
            line(&mut out, format!("Debiased Lasso/Debiased GLS  p={p}"), p, "debiased_lasso", "rmse_ratio");
            line(&mut out, "  Debiased GLS RMSE".into(), p, "debiased_gls_lasso", "rmse");
        }
        out.push('\n');

        let _ = writeln!(out, "== dgp {dgp}: coverage, length, size-adjusted power and size ==");
        head(&mut out);
        for &p in &ps {
            for (estimator, name) in [
                ("debiased_lasso", "Debiased Lasso"),
                ("debiased_gls_lasso", "Debiased GLS"),
            ] {
                for (metric, label) in [
                    ("avg_cov_s0", "AvgCov S0"),
                    ("avg_cov_s0c", "AvgCov S0c"),
                    ("avg_len_s0c", "AvgLength"),
                    ("size_adjusted_power", "Size-adj. power"),
                    ("size", "Size"),
                ] {
                    line(&mut out, format!("{name} {label}  p={p}"), p, estimator, metric);
                }
            }
        }
        out.push('\n');
    }
    out
}
