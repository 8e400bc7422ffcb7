//! Small dense linear-algebra helpers shared by the filter, the dominance
//! test and the collision estimator.

use nalgebra::{DMatrix, Matrix2, SymmetricEigen, Vector2};

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// True when `M + slack·I` admits a Cholesky factorization, i.e. the
/// smallest eigenvalue of the symmetric part exceeds `-slack`.
pub fn is_psd_with_slack(m: &DMatrix<f64>, slack: f64) -> bool {
    let n = m.nrows();
    let mut shifted = symmetrize(m);
    for i in 0..n {
        shifted[(i, i)] += slack;
    }
    if slack > 0.0 {
        return shifted.cholesky().is_some();
    }
    // Cholesky rejects singular PSD matrices; fall back to the spectrum.
    shifted.clone().cholesky().is_some() || min_eigenvalue(&shifted) >= 0.0
}

/// Symmetrizes and clamps eigenvalues below zero. Cheap when the matrix is
/// already numerically PSD.
pub fn clamp_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = symmetrize(m);
    let n = sym.nrows();
    if n == 0 {
        return sym;
    }
    let scale = 1.0 + sym.trace().abs();
    let mut probe = sym.clone();
    for i in 0..n {
        probe[(i, i)] += 1e-14 * scale;
    }
    if probe.cholesky().is_some() {
        return sym;
    }
    let eig = SymmetricEigen::new(sym.clone());
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return sym;
    }
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    let v = &eig.eigenvectors;
    symmetrize(&(v * DMatrix::from_diagonal(&clamped) * v.transpose()))
}

/// Upper-left 2×2 block (position marginal of a state covariance).
pub fn position_block(m: &DMatrix<f64>) -> Matrix2<f64> {
    Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)])
}

/// Eigenvalues of a symmetric 2×2 matrix, largest first.
pub fn eig2_sym(m: &Matrix2<f64>) -> (f64, f64) {
    let a = m[(0, 0)];
    let d = m[(1, 1)];
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let mean = 0.5 * (a + d);
    let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    (mean + rad, mean - rad)
}

/// Lower-triangular factor `L` with `L Lᵀ = M` for a symmetric PSD 2×2
/// matrix. Singular directions are handled without failing.
pub fn chol2_psd(m: &Matrix2<f64>) -> Option<Matrix2<f64>> {
    let a = m[(0, 0)];
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let d = m[(1, 1)];
    let tol = 1e-12 * (1.0 + a.abs() + d.abs());
    if a < -tol || d < -tol {
        return None;
    }
    if a <= tol {
        if b.abs() > tol.sqrt() * (1.0 + d.abs()).sqrt() {
            return None;
        }
        return Some(Matrix2::new(0.0, 0.0, 0.0, d.max(0.0).sqrt()));
    }
    let l11 = a.sqrt();
    let l21 = b / l11;
    let rem = d - l21 * l21;
    if rem < -tol {
        return None;
    }
    Some(Matrix2::new(l11, 0.0, l21, rem.max(0.0).sqrt()))
}

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    use std::f64::consts::PI;
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    t
}

pub fn vec2(x: f64, y: f64) -> Vector2<f64> {
    Vector2::new(x, y)
}
