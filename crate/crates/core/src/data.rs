//! Time-ordered regression data.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Response vector and design matrix; row `t` is observation `t` in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: Array1<f64>,
    pub x: Array2<f64>,
}

impl Dataset {
    pub fn new(y: Array1<f64>, x: Array2<f64>) -> Result<Self> {
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "response has {} rows, design has {}",
                y.len(),
                x.nrows()
            )));
        }
        Ok(Self { y, x })
    }

    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    pub fn n_vars(&self) -> usize {
        self.x.ncols()
    }

    pub fn ensure_finite(&self) -> Result<()> {
        if self.y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("response".into()));
        }
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("design".into()));
        }
        Ok(())
    }

    /// Rows `start..end` as a new dataset.
    pub fn rows(&self, start: usize, end: usize) -> Dataset {
        Dataset {
            y: self.y.slice(s![start..end]).to_owned(),
            x: self.x.slice(s![start..end, ..]).to_owned(),
        }
    }

    pub fn y(&self) -> ArrayView1<'_, f64> {
        self.y.view()
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }
}

/// `y - X beta`.
pub fn residuals(dataset: &Dataset, beta: ArrayView1<f64>) -> Result<Array1<f64>> {
    if beta.len() != dataset.n_vars() {
        return Err(Error::DimensionMismatch(format!(
            "beta has length {}, design has {} columns",
            beta.len(),
            dataset.n_vars()
        )));
    }
    Ok(&dataset.y - &dataset.x.dot(&beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn residuals_of_zero_beta_is_response() {
        let d = Dataset::new(array![1.0, 2.0, 3.0], array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]).unwrap();
        let r = residuals(&d, array![0.0, 0.0].view()).unwrap();
        assert_eq!(r, d.y);
    }

    #[test]
    fn residuals_of_exact_fit_vanish() {
        let x = array![[1.0, 2.0], [0.5, -1.0], [3.0, 0.25]];
        let beta = array![0.75, -2.0];
        let d = Dataset::new(x.dot(&beta), x).unwrap();
        let r = residuals(&d, beta.view()).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn residuals_reject_bad_length() {
        let d = Dataset::new(array![1.0, 2.0], array![[1.0], [2.0]]).unwrap();
        assert!(residuals(&d, array![1.0, 2.0].view()).is_err());
    }

    #[test]
    fn mismatched_rows_rejected() {
        assert!(Dataset::new(array![1.0], array![[1.0], [2.0]]).is_err());
    }
}
