//! Small dense solvers used by the OLS-type steps (AR fits, post-selection OLS).

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Relative pivot threshold below which a column is treated as collinear.
const PIVOT_RTOL: f64 = 1e-10;

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Array2<f64>,
}

impl Cholesky {
    /// Factorises `a`. Columns whose pivot collapses relative to their own
    /// diagonal entry are reported as collinear with the preceding columns.
    pub fn factor(a: ArrayView2<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch("Cholesky needs a square matrix".into()));
        }
        let mut l = Array2::<f64>::zeros((n, n));
        let mut collinear = Vec::new();
        for j in 0..n {
            let mut d = a[[j, j]];
            for k in 0..j {
                d -= l[[j, k]] * l[[j, k]];
            }
            let scale = a[[j, j]].abs().max(f64::MIN_POSITIVE);
            if !(d > PIVOT_RTOL * scale) {
                collinear.push(j);
                continue;
            }
            let djj = d.sqrt();
            l[[j, j]] = djj;
            for i in (j + 1)..n {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s -= l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = s / djj;
            }
        }
        if !collinear.is_empty() {
            return Err(Error::RankDeficient { columns: collinear });
        }
        Ok(Self { l })
    }

    pub fn solve(&self, b: ArrayView1<f64>) -> Array1<f64> {
        let n = self.l.nrows();
        let mut z = b.to_owned();
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s -= self.l[[i, k]] * z[k];
            }
            z[i] = s / self.l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in (i + 1)..n {
                s -= self.l[[k, i]] * z[k];
            }
            z[i] = s / self.l[[i, i]];
        }
        z
    }

    pub fn inverse(&self) -> Array2<f64> {
        let n = self.l.nrows();
        let mut inv = Array2::<f64>::zeros((n, n));
        let mut e = Array1::<f64>::zeros(n);
        for j in 0..n {
            e.fill(0.0);
            e[j] = 1.0;
            inv.column_mut(j).assign(&self.solve(e.view()));
        }
        inv
    }
}

/// `X'X`.
pub fn gram(x: ArrayView2<f64>) -> Array2<f64> {
    x.t().dot(&x)
}

/// Solves a general square system by partial-pivot LU.
pub fn solve_general(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Result<Array1<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::DimensionMismatch("solve_general shape".into()));
    }
    let m = DMatrix::from_fn(n, n, |i, j| a[[i, j]]);
    let v = DVector::from_iterator(n, b.iter().copied());
    let sol = m
        .lu()
        .solve(&v)
        .ok_or_else(|| Error::Singular("LU solve".into()))?;
    Ok(Array1::from_iter(sol.iter().copied()))
}

/// Spectral radius of the companion matrix of `x_t = sum_j phi_j x_{t-j}`.
pub fn companion_spectral_radius(phi: &[f64]) -> f64 {
    let q = phi.len();
    if q == 0 {
        return 0.0;
    }
    if q == 1 {
        return phi[0].abs();
    }
    let mut c = DMatrix::<f64>::zeros(q, q);
    for (j, &v) in phi.iter().enumerate() {
        c[(0, j)] = v;
    }
    for i in 1..q {
        c[(i, i - 1)] = 1.0;
    }
    c.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}
