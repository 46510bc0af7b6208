//! Dense helpers on top of `nalgebra`, plus allocation-free Cholesky kernels on
//! flat row-major slices for the sampler hot loops.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Factor an SPD matrix, reporting the condition number on failure.
pub fn cholesky<T: Real>(m: &DMatrix<T>, what: &str) -> Result<Cholesky<T, Dyn>> {
    if !m.is_square() {
        return Err(Error::domain(format!("{what} must be square, got {}x{}", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("{what} has non-finite entries")));
    }
    Cholesky::new(m.clone()).ok_or_else(|| Error::NotPositiveDefinite {
        what: what.to_string(),
        condition: condition_number(m),
    })
}

/// Ratio of largest to smallest absolute eigenvalue of the symmetric part.
pub fn condition_number<T: Real>(m: &DMatrix<T>) -> f64 {
    if m.nrows() == 0 || !m.is_square() {
        return f64::NAN;
    }
    let sym = (m + m.transpose()) * T::lit(0.5);
    let eig = sym.symmetric_eigen();
    let abs: Vec<f64> = eig.eigenvalues.iter().map(|v| v.f64().abs()).collect();
    let max = abs.iter().cloned().fold(0.0, f64::max);
    let min = abs.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn ln_det<T: Real>(chol: &Cholesky<T, Dyn>) -> T {
    let l = chol.l_dirty();
    (0..l.nrows()).fold(T::zero(), |acc, i| acc + l[(i, i)].ln()) * T::lit(2.0)
}

pub fn symmetrize<T: Real>(m: &mut DMatrix<T>) {
    let n = m.nrows();
    let half = T::lit(0.5);
    for i in 0..n {
        for j in 0..i {
            let v = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn is_symmetric<T: Real>(m: &DMatrix<T>, tol: f64) -> bool {
    m.is_square()
        && (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs().f64() <= tol))
}

pub fn is_identity<T: Real>(m: &DMatrix<T>, tol: f64) -> bool {
    m.is_square()
        && m.iter().enumerate().all(|(idx, v)| {
            let (i, j) = (idx % m.nrows(), idx / m.nrows());
            let target = if i == j { 1.0 } else { 0.0 };
            (v.f64() - target).abs() <= tol
        })
}

/// `‖L⁻¹ v‖²`, i.e. `vᵀ A⁻¹ v` for `A = L Lᵀ`.
pub fn inverse_quadratic<T: Real>(chol: &Cholesky<T, Dyn>, v: &DVector<T>) -> T {
    let w = chol.l_dirty().solve_lower_triangular(v).expect("cholesky factor has nonzero diagonal");
    w.norm_squared()
}

/// Log density of `N(x | mean, L Lᵀ)`.
pub fn mvn_ln_pdf<T: Real>(x: &DVector<T>, mean: &DVector<T>, chol: &Cholesky<T, Dyn>) -> T {
    let d = T::from_usize_lossy(x.len());
    let diff = x - mean;
    let quad = inverse_quadratic(chol, &diff);
    -T::lit(0.5) * (d * T::lit(crate::special::LN_SQRT_2PI * 2.0) + ln_det(chol) + quad)
}

// -- flat kernels ---------------------------------------------------------

/// In-place lower Cholesky of a row-major `n×n` matrix. Only the lower
/// triangle is read; the upper triangle is left untouched. Returns `false` if
/// a non-positive pivot is met.
pub fn chol_in_place<T: Real>(a: &mut [T], n: usize) -> bool {
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= a[j * n + k] * a[j * n + k];
        }
        if !(diag > T::zero()) || !diag.is_finite() {
            return false;
        }
        let ljj = diag.sqrt();
        a[j * n + j] = ljj;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / ljj;
        }
    }
    true
}

/// `2 Σ ln L_ii` of a flat lower factor.
pub fn flat_ln_det<T: Real>(l: &[T], n: usize) -> T {
    (0..n).fold(T::zero(), |acc, i| acc + l[i * n + i].ln()) * T::lit(2.0)
}

/// `‖L⁻¹ b‖²` for the leading `m×m` block of a flat lower factor with row stride `n`.
/// `scratch` must hold at least `m` entries.
pub fn flat_inverse_quadratic<T: Real>(l: &[T], n: usize, m: usize, b: &[T], scratch: &mut [T]) -> T {
    let mut acc = T::zero();
    for i in 0..m {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * scratch[k];
        }
        let w = s / l[i * n + i];
        scratch[i] = w;
        acc += w * w;
    }
    acc
}

pub fn to_flat<T: Real>(m: &DMatrix<T>) -> Vec<T> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * m.ncols());
    for i in 0..n {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}
