//! The banded `(T−q)×T` whitening operator `L̂`.
//!
//! Row `s` of `L̂` carries `(−φ̂_q, …, −φ̂_1, 1)` in columns `s..=s+q`, so
//! `(L̂v)_s = v_{s+q} − Σ_j φ̂_j v_{s+q−j}`. It is never materialised except
//! for inspection via [`WhiteningOperator::to_dense`].

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningOperator {
    phi: Array1<f64>,
    t: usize,
}

/// Builds `L̂` for a series of length `t`.
pub fn build_whitening(phi: ArrayView1<f64>, t: usize) -> Result<WhiteningOperator> {
    let q = phi.len();
    if q == 0 {
        return Err(Error::InvalidParameter("whitening needs at least one AR coefficient".into()));
    }
    if q >= t {
        return Err(Error::InvalidParameter(format!(
            "AR order {q} must be smaller than the series length {t}"
        )));
    }
    Ok(WhiteningOperator {
        phi: phi.to_owned(),
        t,
    })
}

impl WhiteningOperator {
    pub fn q(&self) -> usize {
        self.phi.len()
    }

    pub fn phi(&self) -> ArrayView1<'_, f64> {
        self.phi.view()
    }

    /// Input length `T`.
    pub fn input_len(&self) -> usize {
        self.t
    }

    /// Output length `T − q`.
    pub fn output_len(&self) -> usize {
        self.t - self.q()
    }

    /// The `q + 1` band entries of every row, `(−φ̂_q, …, −φ̂_1, 1)`.
    pub fn band(&self) -> Vec<f64> {
        let mut band: Vec<f64> = self.phi.iter().rev().map(|v| -v).collect();
        band.push(1.0);
        band
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let band = self.band();
        let mut l = Array2::<f64>::zeros((self.output_len(), self.t));
        for s in 0..self.output_len() {
            for (k, &v) in band.iter().enumerate() {
                l[[s, s + k]] = v;
            }
        }
        l
    }

    pub fn apply(&self, v: ArrayView1<f64>) -> Result<Array1<f64>> {
        if v.len() != self.t {
            return Err(Error::DimensionMismatch(format!(
                "whitening operator expects length {}, got {}",
                self.t,
                v.len()
            )));
        }
        Ok(whiten_vector_rows(v, self.phi.view(), self.q()..self.t))
    }

    pub fn apply_matrix(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.nrows() != self.t {
            return Err(Error::DimensionMismatch(format!(
                "whitening operator expects {} rows, got {}",
                self.t,
                x.nrows()
            )));
        }
        Ok(whiten_matrix_rows(x, self.phi.view(), self.q()..self.t))
    }
}

/// `(L̂y, L̂X)` via the scalar recurrence.
pub fn whiten(dataset: &Dataset, op: &WhiteningOperator) -> Result<Dataset> {
    if dataset.n_obs() != op.input_len() {
        return Err(Error::DimensionMismatch(format!(
            "dataset has {} observations, operator expects {}",
            dataset.n_obs(),
            op.input_len()
        )));
    }
    Dataset::new(op.apply(dataset.y())?, op.apply_matrix(dataset.x())?)
}

/// `v_t − Σ_j φ_j v_{t−j}` for every `t` in `rows` (each `t ≥ q`).
pub fn whiten_vector_rows(
    v: ArrayView1<f64>,
    phi: ArrayView1<f64>,
    rows: impl IntoIterator<Item = usize>,
) -> Array1<f64> {
    rows.into_iter()
        .map(|t| {
            let mut acc = v[t];
            for (j, &f) in phi.iter().enumerate() {
                acc -= f * v[t - 1 - j];
            }
            acc
        })
        .collect()
}

/// Row-wise matrix counterpart of [`whiten_vector_rows`].
pub fn whiten_matrix_rows(
    x: ArrayView2<f64>,
    phi: ArrayView1<f64>,
    rows: impl IntoIterator<Item = usize>,
) -> Array2<f64> {
    let rows: Vec<usize> = rows.into_iter().collect();
    let mut out = Array2::<f64>::zeros((rows.len(), x.ncols()));
    for (o, &t) in out.axis_iter_mut(Axis(0)).zip(rows.iter()) {
        let mut o = o;
        o.assign(&x.row(t));
        for (j, &f) in phi.iter().enumerate() {
            o.scaled_add(-f, &x.row(t - 1 - j));
        }
    }
    out
}

/// Whitens each contiguous segment `[start, end)` separately, dropping the
/// first `q` rows of every segment. Segments shorter than `q + 1` contribute
/// nothing.
pub fn whiten_segments(dataset: &Dataset, phi: ArrayView1<f64>, segments: &[(usize, usize)]) -> Dataset {
    let q = phi.len();
    let rows: Vec<usize> = segments
        .iter()
        .flat_map(|&(a, b)| (a + q).min(b)..b)
        .collect();
    Dataset {
        y: whiten_vector_rows(dataset.y(), phi, rows.iter().copied()),
        x: whiten_matrix_rows(dataset.x(), phi, rows.iter().copied()),
    }
}
