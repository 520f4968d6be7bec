//! Synthetic data for the Monte Carlo designs:
//! `y_t = x_t'β + u_t`, `u_t = φu_{t−1} + ε_t`, with `s₀` nonzero
//! coefficients drawn from `U[0,1]` on a uniformly drawn support.
//!
//! | dgp      | `x_t`    | `ε_t`    |
//! |----------|----------|----------|
//! | gaussian | N(0,1)   | N(0,1)   |
//! | dgp1     | N(0,1)   | t_d      |
//! | dgp2     | t_d      | t_d      |
//! | dgp3     | t_d      | N(0,1)   |
//!
//! All randomness comes from ChaCha20 seeded with the configured seed; each
//! replication of each cell reads its own stream.

use ndarray::{Array1, Array2};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Identifier of the generator, recorded in output metadata.
pub const RNG_NAME: &str = "ChaCha20 (rand_chacha 0.9, seed_from_u64, stream = cell << 32 | replication)";

pub const DEFAULT_BURN_IN: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dgp {
    Gaussian,
    Dgp1,
    Dgp2,
    Dgp3,
}

impl Dgp {
    pub fn name(&self) -> &'static str {
        match self {
            Dgp::Gaussian => "gaussian",
            Dgp::Dgp1 => "dgp1",
            Dgp::Dgp2 => "dgp2",
            Dgp::Dgp3 => "dgp3",
        }
    }

    fn heavy_covariates(&self) -> bool {
        matches!(self, Dgp::Dgp2 | Dgp::Dgp3)
    }

    fn heavy_innovations(&self) -> bool {
        matches!(self, Dgp::Dgp1 | Dgp::Dgp2)
    }
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

fn default_reps() -> usize {
    1
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(rename = "T")]
    pub t: usize,
    pub p: usize,
    pub s0: usize,
    pub phi: f64,
    pub dgp: Dgp,
    #[serde(default)]
    pub df: Option<u32>,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    pub seed: u64,
    #[serde(default = "default_reps")]
    pub reps: usize,
    /// Rescale t draws to unit variance (requires df > 2).
    #[serde(default, skip_serializing_if = "is_false")]
    pub standardize_t: bool,
}

impl SimConfig {
    pub fn gaussian(t: usize, p: usize, s0: usize, phi: f64, seed: u64) -> Self {
        Self {
            t,
            p,
            s0,
            phi,
            dgp: Dgp::Gaussian,
            df: None,
            burn_in: DEFAULT_BURN_IN,
            seed,
            reps: 1,
            standardize_t: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t < 2 || self.p == 0 {
            return Err(Error::InvalidParameter(format!(
                "need T >= 2 and p >= 1, got T={} p={}",
                self.t, self.p
            )));
        }
        if self.s0 > self.p {
            return Err(Error::InvalidParameter(format!("s0={} exceeds p={}", self.s0, self.p)));
        }
        if !(self.phi.abs() < 1.0) {
            return Err(Error::InvalidParameter(format!("|phi| must be below 1, got {}", self.phi)));
        }
        match (self.dgp, self.df) {
            (Dgp::Gaussian, Some(_)) => {
                return Err(Error::InvalidParameter("df must be omitted for the gaussian design".into()))
            }
            (Dgp::Gaussian, None) => {}
            (_, None) => {
                return Err(Error::InvalidParameter(format!("df is required for {}", self.dgp.name())))
            }
            (_, Some(0)) => return Err(Error::InvalidParameter("df must be positive".into())),
            (_, Some(d)) if self.standardize_t && d <= 2 => {
                return Err(Error::InvalidParameter("standardised t draws need df > 2".into()))
            }
            _ => {}
        }
        if self.reps == 0 {
            return Err(Error::InvalidParameter("reps must be at least 1".into()));
        }
        Ok(())
    }

    fn t_draw(&self) -> Innovation {
        Innovation::StudentT {
            df: self.df.unwrap_or(1) as f64,
            standardize: self.standardize_t,
        }
    }

    pub fn innovation(&self) -> Innovation {
        if self.dgp.heavy_innovations() {
            self.t_draw()
        } else {
            Innovation::Gaussian
        }
    }

    pub fn covariate(&self) -> Innovation {
        if self.dgp.heavy_covariates() {
            self.t_draw()
        } else {
            Innovation::Gaussian
        }
    }
}

/// A scalar draw distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Innovation {
    Gaussian,
    StudentT { df: f64, standardize: bool },
    /// Every draw is zero.
    Zero,
}

impl Innovation {
    pub fn sampler(&self) -> Result<Sampler> {
        Ok(match *self {
            Innovation::Gaussian => Sampler::Gaussian,
            Innovation::Zero => Sampler::Zero,
            Innovation::StudentT { df, standardize } => {
                let dist = StudentT::new(df).map_err(|e| Error::InvalidParameter(format!("t distribution: {e}")))?;
                let scale = if standardize { ((df - 2.0) / df).sqrt() } else { 1.0 };
                Sampler::StudentT(dist, scale)
            }
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Sampler {
    Gaussian,
    StudentT(StudentT<f64>, f64),
    Zero,
}

impl Sampler {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Gaussian => StandardNormal.sample(rng),
            Sampler::StudentT(d, s) => d.sample(rng) * s,
            Sampler::Zero => 0.0,
        }
    }
}

/// Generator for replication `rep` of cell `cell`.
pub fn replication_rng(seed: u64, cell: u32, rep: u32) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(((cell as u64) << 32) | rep as u64);
    rng
}

/// `burn_in + t` steps of `u_s = φu_{s−1} + ε_s` from `u_0 = 0`; the first
/// `burn_in` are discarded.
pub fn simulate_ar_errors<R: Rng + ?Sized>(
    phi: f64,
    t: usize,
    innovation: Innovation,
    burn_in: usize,
    rng: &mut R,
) -> Result<Array1<f64>> {
    if !(phi.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!("|phi| must be below 1, got {phi}")));
    }
    let sampler = innovation.sampler()?;
    let mut u = 0.0;
    for _ in 0..burn_in {
        u = phi * u + sampler.draw(rng);
    }
    let mut out = Array1::<f64>::zeros(t);
    for v in out.iter_mut() {
        u = phi * u + sampler.draw(rng);
        *v = u;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedDataset {
    pub dataset: Dataset,
    pub beta_true: Array1<f64>,
    /// Sorted support of `beta_true`.
    pub active_set: Vec<usize>,
    /// The AR errors `u`.
    pub errors: Array1<f64>,
}

/// Draws `X` (row by row), the support, the coefficients and then the errors,
/// in that order.
pub fn simulate_dataset<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Result<SimulatedDataset> {
    config.validate()?;
    let (t, p) = (config.t, config.p);
    let xs = config.covariate().sampler()?;
    let mut x = Array2::<f64>::zeros((t, p));
    for v in x.iter_mut() {
        *v = xs.draw(rng);
    }
    let mut active_set = index::sample(rng, p, config.s0).into_vec();
    active_set.sort_unstable();
    let mut beta_true = Array1::<f64>::zeros(p);
    for &j in &active_set {
        beta_true[j] = rng.random::<f64>();
    }
    let errors = simulate_ar_errors(config.phi, t, config.innovation(), config.burn_in, rng)?;
    let y = x.dot(&beta_true) + &errors;
    Ok(SimulatedDataset {
        dataset: Dataset::new(y, x)?,
        beta_true,
        active_set,
        errors,
    })
}
