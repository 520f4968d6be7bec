//! Blocked k-fold cross-validation.
//!
//! Folds are contiguous, non-overlapping blocks of time indices taken in
//! order; no shuffling. The test loss for penalty `λ` is
//!
//! ```text
//! L_CV(λ) = (1/T) Σ_blocks Σ_{j ∈ block} (y_j − x_j' β̂_λ^{(−block)})²
//! ```
//!
//! where `β̂^{(−block)}` is fitted on every observation outside the block.

use std::ops::Range;

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::lasso::{CovarianceLasso, SolverOptions};

/// Default number of folds.
pub const DEFAULT_K: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockFolds {
    t: usize,
    blocks: Vec<Range<usize>>,
}

/// Splits `0..t` into `k` contiguous blocks whose sizes differ by at most one;
/// the remainder goes to the earliest blocks.
pub fn make_blocks(t: usize, k: usize) -> Result<BlockFolds> {
    if k < 2 || k > t {
        return Err(Error::InvalidParameter(format!(
            "number of folds must satisfy 2 <= k <= T, got k={k}, T={t}"
        )));
    }
    let base = t / k;
    let extra = t % k;
    let mut blocks = Vec::with_capacity(k);
    let mut start = 0;
    for b in 0..k {
        let len = base + usize::from(b < extra);
        blocks.push(start..start + len);
        start += len;
    }
    Ok(BlockFolds { t, blocks })
}

impl BlockFolds {
    pub fn k(&self) -> usize {
        self.blocks.len()
    }

    pub fn len(&self) -> usize {
        self.t
    }

    pub fn is_empty(&self) -> bool {
        self.t == 0
    }

    pub fn blocks(&self) -> &[Range<usize>] {
        &self.blocks
    }

    /// Contiguous training segments when `block` is held out.
    pub fn training_segments(&self, block: usize) -> Vec<(usize, usize)> {
        let held = &self.blocks[block];
        let mut segs = Vec::with_capacity(2);
        if held.start > 0 {
            segs.push((0, held.start));
        }
        if held.end < self.t {
            segs.push((held.end, self.t));
        }
        segs
    }

    pub fn training_rows(&self, block: usize) -> Vec<usize> {
        self.training_segments(block)
            .into_iter()
            .flat_map(|(a, b)| a..b)
            .collect()
    }

    fn check_training(&self, block: usize) -> Result<()> {
        let held = self.blocks[block].len();
        if self.t - held < 2 {
            return Err(Error::CrossValidation(format!(
                "block {block} holds out {held} of {} observations, leaving too few to fit",
                self.t
            )));
        }
        Ok(())
    }
}

fn select_rows(dataset: &Dataset, rows: &[usize]) -> Dataset {
    Dataset {
        y: dataset.y.select(Axis(0), rows),
        x: dataset.x.select(Axis(0), rows),
    }
}

/// Held-out squared error of `beta` on rows `range`.
pub fn block_sse(dataset: &Dataset, range: Range<usize>, beta: ArrayView1<f64>) -> f64 {
    let active: Vec<usize> = beta
        .iter()
        .enumerate()
        .filter(|(_, b)| **b != 0.0)
        .map(|(j, _)| j)
        .collect();
    range
        .map(|t| {
            let row = dataset.x.row(t);
            let fitted: f64 = active.iter().map(|&j| row[j] * beta[j]).sum();
            let e = dataset.y[t] - fitted;
            e * e
        })
        .sum()
}

/// `L_CV(λ)` for an arbitrary fitting procedure `(training data, λ) → β̂`.
pub fn cv_loss<F>(lambda: f64, dataset: &Dataset, folds: &BlockFolds, fitter: F) -> Result<f64>
where
    F: Fn(&Dataset, f64) -> Result<Array1<f64>>,
{
    if folds.len() != dataset.n_obs() {
        return Err(Error::DimensionMismatch(format!(
            "folds cover {} observations, dataset has {}",
            folds.len(),
            dataset.n_obs()
        )));
    }
    let mut total = 0.0;
    for (b, block) in folds.blocks().iter().enumerate() {
        folds.check_training(b)?;
        let train = select_rows(dataset, &folds.training_rows(b));
        let beta = fitter(&train, lambda)?;
        if beta.len() != dataset.n_vars() {
            return Err(Error::DimensionMismatch("fitter returned wrong coefficient length".into()));
        }
        total += block_sse(dataset, block.clone(), beta.view());
    }
    Ok(total / dataset.n_obs() as f64)
}

/// Cross-validation losses along a penalty grid (grid in decreasing order).
#[derive(Debug, Clone, PartialEq)]
pub struct CvCurve {
    pub lambdas: Vec<f64>,
    pub losses: Vec<f64>,
}

impl CvCurve {
    /// Index of the smallest finite loss; ties go to the larger penalty.
    pub fn argmin(&self) -> Result<usize> {
        self.extreme(|a, b| a < b)
    }

    /// Index of the largest finite loss; ties go to the larger penalty.
    pub fn argmax(&self) -> Result<usize> {
        self.extreme(|a, b| a > b)
    }

    fn extreme(&self, better: impl Fn(f64, f64) -> bool) -> Result<usize> {
        let mut best: Option<usize> = None;
        for (i, &l) in self.losses.iter().enumerate() {
            if !l.is_finite() {
                continue;
            }
            best = match best {
                None => Some(i),
                Some(b) => {
                    let (lb, li) = (self.losses[b], l);
                    if better(li, lb) || (li == lb && self.lambdas[i] > self.lambdas[b]) {
                        Some(i)
                    } else {
                        Some(b)
                    }
                }
            };
        }
        best.ok_or_else(|| Error::CrossValidation("every cross-validation loss is non-finite".into()))
    }

    pub fn best_lambda(&self) -> Result<f64> {
        Ok(self.lambdas[self.argmin()?])
    }

    pub fn worst_lambda(&self) -> Result<f64> {
        Ok(self.lambdas[self.argmax()?])
    }
}

/// Evaluates `cv_loss` at every grid point with the given fitter and returns
/// the minimiser (ties toward the larger penalty).
pub fn select_lambda<F>(dataset: &Dataset, grid: &[f64], folds: &BlockFolds, fitter: F) -> Result<f64>
where
    F: Fn(&Dataset, f64) -> Result<Array1<f64>>,
{
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty penalty grid".into()));
    }
    let losses = grid
        .iter()
        .map(|&lam| cv_loss(lam, dataset, folds, &fitter).unwrap_or(f64::NAN))
        .collect();
    CvCurve {
        lambdas: grid.to_vec(),
        losses,
    }
    .best_lambda()
}

/// Per-block sufficient statistics `X_B'X_B`, `X_B'y_B`, `y_B'y_B`, so that
/// training-set Gram matrices are totals minus one block.
#[derive(Debug, Clone)]
pub struct BlockGrams {
    pub blocks: Vec<(Array2<f64>, Array1<f64>, f64)>,
    pub total: (Array2<f64>, Array1<f64>, f64),
}

impl BlockGrams {
    pub fn new(dataset: &Dataset, folds: &BlockFolds) -> Self {
        let p = dataset.n_vars();
        let mut total = (Array2::<f64>::zeros((p, p)), Array1::<f64>::zeros(p), 0.0);
        let blocks = folds
            .blocks()
            .iter()
            .map(|r| {
                let xb = dataset.x.slice(ndarray::s![r.clone(), ..]);
                let yb = dataset.y.slice(ndarray::s![r.clone()]);
                let g = xb.t().dot(&xb);
                let c = xb.t().dot(&yb);
                let yy = yb.dot(&yb);
                total.0 += &g;
                total.1 += &c;
                total.2 += yy;
                (g, c, yy)
            })
            .collect();
        Self { blocks, total }
    }

    /// `(G, c, y'y)` of the training set for `block`, divided by its size.
    pub fn training(&self, block: usize, n_train: usize) -> (Array2<f64>, Array1<f64>, f64) {
        let (g, c, yy) = &self.blocks[block];
        let n = n_train as f64;
        (
            (&self.total.0 - g) / n,
            (&self.total.1 - c) / n,
            (self.total.2 - yy) / n,
        )
    }
}

/// Lasso cross-validation curve over `grid` using block Gram matrices.
pub fn cv_lasso_curve(
    dataset: &Dataset,
    grid: &[f64],
    folds: &BlockFolds,
    options: &SolverOptions,
) -> Result<CvCurve> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty penalty grid".into()));
    }
    if folds.len() != dataset.n_obs() {
        return Err(Error::DimensionMismatch("folds do not match dataset length".into()));
    }
    let grams = BlockGrams::new(dataset, folds);
    let vars: Vec<usize> = (0..dataset.n_vars()).collect();
    let mut sse = vec![0.0; grid.len()];
    let path_opts = SolverOptions {
        polish: false,
        ..*options
    };
    for (b, block) in folds.blocks().iter().enumerate() {
        folds.check_training(b)?;
        let (g, c, yy) = grams.training(b, folds.len() - block.len());
        let cov = CovarianceLasso::new(g.view(), c.view(), yy)?;
        for (i, (beta, _)) in cov.path(&vars, grid, &path_opts).into_iter().enumerate() {
            sse[i] += block_sse(dataset, block.clone(), beta.view());
        }
    }
    let t = dataset.n_obs() as f64;
    Ok(CvCurve {
        lambdas: grid.to_vec(),
        losses: sse.into_iter().map(|s| s / t).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn even_and_uneven_blocks() {
        let f = make_blocks(10, 2).unwrap();
        assert_eq!(f.blocks(), &[0..5, 5..10]);
        let f = make_blocks(10, 3).unwrap();
        assert_eq!(f.blocks(), &[0..4, 4..7, 7..10]);
    }

    #[test]
    fn k_out_of_range() {
        assert!(make_blocks(10, 1).is_err());
        assert!(make_blocks(10, 11).is_err());
        assert!(make_blocks(10, 10).is_ok());
    }

    #[test]
    fn training_segments_surround_block() {
        let f = make_blocks(10, 3).unwrap();
        assert_eq!(f.training_segments(0), vec![(4, 10)]);
        assert_eq!(f.training_segments(1), vec![(0, 4), (7, 10)]);
        assert_eq!(f.training_segments(2), vec![(0, 7)]);
    }

    #[test]
    fn single_point_grid() {
        let c = CvCurve { lambdas: vec![0.3], losses: vec![1.0] };
        assert_eq!(c.best_lambda().unwrap(), 0.3);
    }

    #[test]
    fn ties_prefer_larger_lambda() {
        let c = CvCurve {
            lambdas: vec![1.0, 0.5, 0.25, 0.1],
            losses: vec![2.0, 1.0, 1.0, 3.0],
        };
        assert_eq!(c.best_lambda().unwrap(), 0.5);
        let c = CvCurve {
            lambdas: vec![1.0, 0.5, 0.25],
            losses: vec![2.0, 2.0, 1.0],
        };
        assert_eq!(c.worst_lambda().unwrap(), 1.0);
    }

    #[test]
    fn monotone_losses_pick_endpoint() {
        let lambdas = vec![1.0, 0.5, 0.25, 0.1];
        let c = CvCurve { lambdas: lambdas.clone(), losses: vec![4.0, 3.0, 2.0, 1.0] };
        assert_eq!(c.best_lambda().unwrap(), 0.1);
        let c = CvCurve { lambdas, losses: vec![1.0, 2.0, 3.0, 4.0] };
        assert_eq!(c.best_lambda().unwrap(), 1.0);
    }

    #[test]
    fn all_nonfinite_is_error() {
        let c = CvCurve { lambdas: vec![1.0, 0.5], losses: vec![f64::NAN, f64::INFINITY] };
        assert!(c.argmin().is_err());
    }
}
