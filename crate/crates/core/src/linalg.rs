//! Small dense complex linear algebra helpers on top of nalgebra.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

pub fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn zeros(n: usize) -> CMat {
    CMat::zeros(n, n)
}

pub fn trace(m: &CMat) -> C64 {
    let n = m.nrows().min(m.ncols());
    let mut s = C64::new(0.0, 0.0);
    for i in 0..n {
        s += m[(i, i)];
    }
    s
}

/// Trace of a product without forming it.
pub fn trace_prod(a: &CMat, b: &CMat) -> C64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut s = C64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            s += a[(i, k)] * b[(k, i)];
        }
    }
    s
}

pub fn fro(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

pub fn adjoint(m: &CMat) -> CMat {
    m.adjoint()
}

/// Inverse with an explicit singularity check; `at` labels the failure.
pub fn inv(m: &CMat, at: impl FnOnce() -> String) -> Result<CMat> {
    let n = m.nrows();
    if n == 0 {
        return Ok(m.clone());
    }
    if n == 1 {
        let z = m[(0, 0)];
        if z.norm() < 1e-300 || !z.is_finite() {
            return Err(Error::Singular { at: at() });
        }
        return Ok(CMat::from_element(1, 1, z.inv()));
    }
    if n == 2 {
        let (a, b, cc, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
        let det = a * d - b * cc;
        let scale = fro(m).max(1e-300);
        if det.norm() <= 1e-14 * scale * scale || !det.is_finite() {
            return Err(Error::Singular { at: at() });
        }
        let r = det.inv();
        return Ok(CMat::from_row_slice(2, 2, &[d * r, -b * r, -cc * r, a * r]));
    }
    let lu = m.clone().lu();
    match lu.try_inverse() {
        Some(x) if x.iter().all(|z| z.is_finite()) => {
            // reject numerically singular input
            if fro(&x) * fro(m) > 1e14 * (n as f64) {
                Err(Error::Singular { at: at() })
            } else {
                Ok(x)
            }
        }
        _ => Err(Error::Singular { at: at() }),
    }
}

pub fn det(m: &CMat) -> C64 {
    match m.nrows() {
        0 => C64::new(1.0, 0.0),
        1 => m[(0, 0)],
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        _ => m.clone().lu().determinant(),
    }
}

/// Singular values (descending).
pub fn singular_values(m: &CMat) -> Vec<f64> {
    let sv = m.clone().svd(false, false).singular_values;
    let mut v: Vec<f64> = sv.iter().copied().collect();
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    v
}

pub fn smallest_singular_value(m: &CMat) -> f64 {
    singular_values(m).last().copied().unwrap_or(0.0)
}

pub fn is_hermitian(m: &CMat, tol: f64) -> f64 {
    let d = m - m.adjoint();
    let scale = fro(m).max(1.0);
    let defect = fro(&d) / scale;
    let _ = tol;
    defect
}

/// Eigenvalues of a Hermitian matrix (ascending).
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

/// Rank-one outer product u v^*.
pub fn outer(u: &[C64], v: &[C64]) -> CMat {
    CMat::from_fn(u.len(), v.len(), |i, j| u[i] * v[j].conj())
}

pub fn scale(m: &CMat, z: C64) -> CMat {
    m * z
}

/// Unwrapped winding number of a closed sequence of nonzero complex values.
pub fn winding_of(values: &[C64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for k in 0..n {
        let a = values[k];
        let b = values[(k + 1) % n];
        total += (b / a).arg();
    }
    total / (2.0 * std::f64::consts::PI)
}

/// Pauli matrices.
pub fn pauli() -> [CMat; 3] {
    let o = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    [
        CMat::from_row_slice(2, 2, &[o, one, one, o]),
        CMat::from_row_slice(2, 2, &[o, -I, I, o]),
        CMat::from_row_slice(2, 2, &[one, o, o, -one]),
    ]
}
