//! Independent reference computations for the integration tests. Nothing
//! here calls into the solver code paths being checked.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut impl Rng, n: usize, p: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |_| rng.sample(StandardNormal))
}

pub fn normal_vector(rng: &mut impl Rng, n: usize) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| rng.sample(StandardNormal))
}

pub fn to_na(a: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub fn to_na_vec(a: ArrayView1<f64>) -> DVector<f64> {
    DVector::from_iterator(a.len(), a.iter().copied())
}

pub fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

pub fn max_abs_diff(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn max_abs_diff2(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `(1/2n)‖y − Xβ‖² + λ‖β‖₁` by explicit loops.
pub fn lasso_objective(x: ArrayView2<f64>, y: ArrayView1<f64>, beta: &[f64], lambda: f64) -> f64 {
    let n = x.nrows();
    let mut rss = 0.0;
    for t in 0..n {
        let fit: f64 = (0..x.ncols()).map(|j| x[[t, j]] * beta[j]).sum();
        rss += (y[t] - fit).powi(2);
    }
    rss / (2.0 * n as f64) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// Exact Lasso minimiser by enumerating all 3^p sign patterns: for each,
/// solve the stationarity system on the nonzero block, keep candidates that
/// reproduce their signs and satisfy the inactive KKT band, return the one
/// with the smallest objective.
pub fn lasso_sign_enumeration(x: ArrayView2<f64>, y: ArrayView1<f64>, lambda: f64) -> Vec<f64> {
    let (n, p) = x.dim();
    assert!(p <= 10, "enumeration oracle is exponential in p");
    let xm = to_na(x);
    let yv = to_na_vec(y);
    let g = xm.transpose() * &xm / n as f64;
    let c = xm.transpose() * &yv / n as f64;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let total = 3usize.pow(p as u32);
    for code in 0..total {
        let mut signs = vec![0i32; p];
        let mut k = code;
        for s in signs.iter_mut() {
            *s = (k % 3) as i32 - 1;
            k /= 3;
        }
        let active: Vec<usize> = (0..p).filter(|&j| signs[j] != 0).collect();
        let mut beta = vec![0.0; p];
        if !active.is_empty() {
            let m = active.len();
            let gaa = DMatrix::from_fn(m, m, |a, b| g[(active[a], active[b])]);
            let rhs = DVector::from_fn(m, |a, _| c[active[a]] - lambda * signs[active[a]] as f64);
            let Some(sol) = gaa.lu().solve(&rhs) else { continue };
            if active.iter().enumerate().any(|(a, &j)| sol[a] * signs[j] as f64 <= 0.0) {
                continue;
            }
            for (a, &j) in active.iter().enumerate() {
                beta[j] = sol[a];
            }
        }
        let b = DVector::from_column_slice(&beta);
        let grad = &c - &g * &b;
        let feasible = (0..p)
            .filter(|&j| signs[j] == 0)
            .all(|j| grad[j].abs() <= lambda * (1.0 + 1e-9) + 1e-12);
        if !feasible {
            continue;
        }
        let obj = lasso_objective(x, y, &beta, lambda);
        if best.as_ref().is_none_or(|(o, _)| obj < *o) {
            best = Some((obj, beta));
        }
    }
    best.expect("some sign pattern is optimal").1
}

/// The `(T−q)×T` matrix of the whitening operator written out entry by entry.
pub fn dense_whitening(phi: &[f64], t: usize) -> Array2<f64> {
    let q = phi.len();
    let mut l = Array2::zeros((t - q, t));
    for s in 0..t - q {
        l[[s, s + q]] = 1.0;
        for j in 1..=q {
            l[[s, s + q - j]] = -phi[j - 1];
        }
    }
    l
}

/// `Θ̂ = M̂⁻² Ĉ` from nodewise coefficients (each `γ̂_i` of length `p − 1`).
pub fn dense_theta(gamma: &[Array1<f64>], tau2: ArrayView1<f64>) -> Array2<f64> {
    let p = gamma.len();
    let mut c = Array2::<f64>::eye(p);
    for i in 0..p {
        let mut k = 0;
        for j in 0..p {
            if j == i {
                continue;
            }
            c[[i, j]] = -gamma[i][k];
            k += 1;
        }
    }
    let m_inv2 = Array2::from_diag(&tau2.mapv(|t| 1.0 / t));
    m_inv2.dot(&c)
}

/// OLS coefficients of `y` on `x` via an SVD least-squares solve.
pub fn ols(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Array1<f64> {
    let sol = to_na(x)
        .svd(true, true)
        .solve(&to_na_vec(y), 1e-12)
        .expect("SVD solve");
    Array1::from_iter(sol.iter().copied())
}

/// Inverse via LU.
pub fn inverse(a: ArrayView2<f64>) -> Array2<f64> {
    from_na(&to_na(a).try_inverse().expect("invertible"))
}

/// AR(p) path by the plain recursion with a long burn-in.
pub fn ar_path(phi: &[f64], sigma: f64, n: usize, burn: usize, rng: &mut impl Rng) -> Vec<f64> {
    let q = phi.len();
    let mut u = vec![0.0; n + burn + q];
    for t in q..u.len() {
        let e: f64 = rng.sample(StandardNormal);
        u[t] = (1..=q).map(|j| phi[j - 1] * u[t - j]).sum::<f64>() + sigma * e;
    }
    u[burn + q..].to_vec()
}

pub fn sample_variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
}
