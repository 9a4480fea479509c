//! Dense linear-algebra helpers shared by the solvers and the certificates.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::Real;

/// Relative tolerance used for rank, symmetry and definiteness tests.
pub const REL_TOL: f64 = 1e-10;

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn sym_extremes<T: Real>(m: &DMatrix<T>) -> (T, T) {
    if m.nrows() == 0 {
        return (T::zero(), T::zero());
    }
    let ev = m.clone().symmetric_eigen().eigenvalues;
    (ev.min(), ev.max())
}

pub fn lambda_min<T: Real>(m: &DMatrix<T>) -> T {
    sym_extremes(m).0
}

pub fn lambda_max<T: Real>(m: &DMatrix<T>) -> T {
    sym_extremes(m).1
}

/// Largest singular value.
pub fn spectral_norm<T: Real>(m: &DMatrix<T>) -> T {
    if m.nrows() == 0 || m.ncols() == 0 {
        return T::zero();
    }
    m.clone().singular_values().max()
}

pub fn is_symmetric<T: Real>(m: &DMatrix<T>) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.norm().max(T::one());
    (m - m.transpose()).norm() <= T::lit(REL_TOL) * scale
}

/// Symmetric and no eigenvalue below `-REL_TOL * ||m||`.
pub fn is_psd<T: Real>(m: &DMatrix<T>) -> bool {
    if !is_symmetric(m) {
        return false;
    }
    let scale = m.norm().max(T::one());
    lambda_min(m) >= -T::lit(REL_TOL) * scale
}

pub fn is_pd<T: Real>(m: &DMatrix<T>) -> bool {
    if !is_symmetric(m) {
        return false;
    }
    let scale = m.norm().max(T::one());
    lambda_min(m) > T::lit(REL_TOL) * scale
}

/// Numerical rank with the singular-value cut `REL_TOL * sigma_max`.
pub fn rank<T: Real>(m: &DMatrix<T>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    let cut = sv.max() * T::lit(REL_TOL);
    sv.iter().filter(|&&s| s > cut).count()
}

pub fn has_full_row_rank<T: Real>(m: &DMatrix<T>) -> bool {
    rank(m) == m.nrows()
}

/// Returns `s` when `m == s * I` exactly (off-diagonals zero, equal diagonal).
pub fn scaled_identity<T: Real>(m: &DMatrix<T>) -> Option<T> {
    if !m.is_square() {
        return None;
    }
    let n = m.nrows();
    if n == 0 {
        return Some(T::zero());
    }
    let s = m[(0, 0)];
    for j in 0..n {
        for i in 0..n {
            let expect = if i == j { s } else { T::zero() };
            if m[(i, j)] != expect {
                return None;
            }
        }
    }
    Some(s)
}

fn is_diagonal<T: Real>(m: &DMatrix<T>) -> bool {
    m.is_square()
        && (0..m.ncols()).all(|j| (0..m.nrows()).all(|i| i == j || m[(i, j)] == T::zero()))
}

/// The fixed quadratic part `rho A^T A + P` of an inner subproblem.
///
/// Stored in the cheapest form that represents it exactly so that the
/// inner stochastic loop costs `O(n)` when the coupling is an identity.
#[derive(Debug, Clone, PartialEq)]
pub enum Curvature<T: Real> {
    Scaled(usize, T),
    Diagonal(DVector<T>),
    Dense(DMatrix<T>),
}

impl<T: Real> Curvature<T> {
    pub fn from_matrix(m: DMatrix<T>) -> Self {
        if let Some(s) = scaled_identity(&m) {
            Curvature::Scaled(m.nrows(), s)
        } else if is_diagonal(&m) {
            Curvature::Diagonal(m.diagonal())
        } else {
            Curvature::Dense(m)
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Curvature::Scaled(n, _) => *n,
            Curvature::Diagonal(d) => d.len(),
            Curvature::Dense(m) => m.nrows(),
        }
    }

    /// `out += M x`
    #[inline]
    pub fn add_apply(&self, x: &DVector<T>, out: &mut DVector<T>) {
        match self {
            Curvature::Scaled(_, s) => out.axpy(*s, x, T::one()),
            Curvature::Diagonal(d) => out.zip_zip_apply(x, d, |o, xi, di| *o += xi * di),
            Curvature::Dense(m) => out.gemv(T::one(), m, x, T::one()),
        }
    }

    /// `out += M x + h` in a single pass where possible.
    #[inline]
    pub fn add_apply_shift(&self, x: &DVector<T>, h: &DVector<T>, out: &mut DVector<T>) {
        match self {
            Curvature::Scaled(_, s) => {
                let s = *s;
                for ((o, xi), hi) in out.as_mut_slice().iter_mut().zip(x.as_slice()).zip(h.as_slice()) {
                    *o += s * *xi + *hi;
                }
            }
            Curvature::Diagonal(d) => {
                for (((o, xi), hi), di) in out
                    .as_mut_slice()
                    .iter_mut()
                    .zip(x.as_slice())
                    .zip(h.as_slice())
                    .zip(d.as_slice())
                {
                    *o += *di * *xi + *hi;
                }
            }
            Curvature::Dense(m) => {
                out.gemv(T::one(), m, x, T::one());
                *out += h;
            }
        }
    }

    pub fn to_matrix(&self) -> DMatrix<T> {
        match self {
            Curvature::Scaled(n, s) => DMatrix::from_diagonal_element(*n, *n, *s),
            Curvature::Diagonal(d) => DMatrix::from_diagonal(d),
            Curvature::Dense(m) => m.clone(),
        }
    }

    pub fn extremes(&self) -> (T, T) {
        match self {
            Curvature::Scaled(_, s) => (*s, *s),
            Curvature::Diagonal(d) if d.is_empty() => (T::zero(), T::zero()),
            Curvature::Diagonal(d) => (d.min(), d.max()),
            Curvature::Dense(m) => sym_extremes(m),
        }
    }
}

/// Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct SpdSolver<T: Real> {
    chol: Cholesky<T, Dyn>,
}

impl<T: Real> SpdSolver<T> {
    pub fn new(m: DMatrix<T>, what: &str) -> Result<Self> {
        Cholesky::new(m)
            .map(|chol| Self { chol })
            .ok_or_else(|| Error::Singular(what.to_string()))
    }

    pub fn solve(&self, rhs: &DVector<T>) -> DVector<T> {
        self.chol.solve(rhs)
    }

    pub fn lower(&self) -> DMatrix<T> {
        self.chol.l()
    }
}

pub(crate) fn check_dims(what: &str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::Dimension(format!("{what}: expected {want}, got {got}")))
    }
}
