//! Stochastic approximation `x_{j+1} = x_j - (gamma0 / j) g(x_j, xi_j)` and
//! the constants of its mean-squared `Q / k` rate.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::Real;

/// Moduli of an unconstrained strongly convex stochastic problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaProblem<T: Real> {
    pub c: T,
    pub l: T,
    pub v1: T,
    pub v2: T,
    pub r: T,
}

impl<T: Real> SaProblem<T> {
    pub fn new(c: T, l: T, v1: T, v2: T, r: T) -> Result<Self> {
        if !(c > T::zero() && c <= l) {
            return Err(Error::InvalidParameter(format!("need 0 < c <= L, got c = {c}, L = {l}")));
        }
        if !(v1 >= T::zero() && v2 >= T::zero()) {
            return Err(Error::InvalidParameter("variance coefficients must be >= 0".into()));
        }
        if !(r > T::zero()) {
            return Err(Error::InvalidParameter(format!("R = {r} must be positive")));
        }
        Ok(Self { c, l, v1, v2, r })
    }

    pub fn rate_constants(&self, gamma0: T) -> Result<SaRateConstants<T>> {
        compute_rate_constants(self.c, self.l, self.v1, self.v2, self.r, gamma0)
    }
}

const FINITE_CHECK_EVERY: u64 = 1024;

/// Runs `num_steps - 1` SA steps from `x_init` with steps `gamma0 / j`, `j = 1, 2, ...`.
///
/// `grad(x, stream, out)` must overwrite `out` with one sampled gradient.
pub fn sa_run<T, G>(
    mut grad: G,
    x_init: &DVector<T>,
    gamma0: T,
    num_steps: u64,
    stream: &mut Stream,
) -> Result<DVector<T>>
where
    T: Real,
    G: FnMut(&DVector<T>, &mut Stream, &mut DVector<T>),
{
    if !(gamma0 > T::zero()) {
        return Err(Error::InvalidParameter(format!("gamma0 = {gamma0} must be positive")));
    }
    if num_steps == 0 {
        return Err(Error::InvalidParameter("num_steps must be >= 1".into()));
    }
    let mut x = x_init.clone();
    let mut g = DVector::zeros(x.len());
    for j in 1..num_steps {
        grad(&x, stream, &mut g);
        let step = gamma0 / T::lit(j as f64);
        x.axpy(-step, &g, T::one());
        // A non-finite gradient poisons x for good, so a sparse check suffices.
        if j % FINITE_CHECK_EVERY == 0 && !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteGradient { step: j as usize });
        }
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteGradient { step: num_steps.saturating_sub(1) as usize });
    }
    Ok(x)
}

/// Rate constants of SA with steps `gamma0 / k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaRateConstants<T: Real> {
    pub gamma0: T,
    pub c: T,
    pub l: T,
    pub v1: T,
    pub v2: T,
    pub r: T,
    /// `L^2 + v1 (1 + 1/R)`
    pub m: T,
    /// `ceil(gamma0^2 M / (2 c gamma0 - 1)) + 1`
    pub k: usize,
    /// `prod_{i<K} a_i`
    pub a_hat: T,
    pub b_hat: T,
}

impl<T: Real> SaRateConstants<T> {
    /// `C = v1 (1 + R) |x*|^2 + v2`
    pub fn c_of(&self, x_star_norm_sq: T) -> T {
        self.v1 * (T::one() + self.r) * x_star_norm_sq + self.v2
    }

    /// `2 c gamma0 - 1 - gamma0^2 M / K`
    pub fn q_denominator(&self) -> T {
        let two = T::lit(2.0);
        two * self.c * self.gamma0 - T::one() - self.gamma0 * self.gamma0 * self.m / T::from_usize_lossy(self.k)
    }

    /// `gamma0^2 / (2 c gamma0 - 1 - gamma0^2 M / K) + K b_hat`, the factor
    /// multiplying `C` in the bound on `Q / T`.
    pub fn h(&self) -> Result<T> {
        let den = self.q_denominator();
        if !(den > T::zero()) {
            return Err(Error::Denominator { name: "2 c gamma - 1 - gamma^2 M / K", value: den.as_f64() });
        }
        Ok(self.gamma0 * self.gamma0 / den + T::from_usize_lossy(self.k) * self.b_hat)
    }

    /// `a_i = 1 - 2 c gamma0 / i + (gamma0 / i)^2 M`
    pub fn a_i(&self, i: usize) -> T {
        let g = self.gamma0 / T::from_usize_lossy(i);
        T::one() - T::lit(2.0) * self.c * g + g * g * self.m
    }
}

/// Computes `M`, `K`, `a_hat`, `b_hat` for the step scale `gamma0`.
pub fn compute_rate_constants<T: Real>(c: T, l: T, v1: T, v2: T, r: T, gamma0: T) -> Result<SaRateConstants<T>> {
    SaProblem::new(c, l, v1, v2, r)?;
    let two = T::lit(2.0);
    if !(gamma0 * two * c > T::one()) {
        return Err(Error::RateRegime { gamma0: gamma0.as_f64(), threshold: 1.0 / (2.0 * c.as_f64()) });
    }
    let m = l * l + v1 * (T::one() + T::one() / r);
    let ratio = gamma0 * gamma0 * m / (two * c * gamma0 - T::one());
    let ratio = ratio.as_f64();
    if !ratio.is_finite() || ratio > 1e12 {
        return Err(Error::InvalidParameter(format!("burn-in index overflows ({ratio})")));
    }
    let k = ratio.ceil() as usize + 1;
    let mut out = SaRateConstants { gamma0, c, l, v1, v2, r, m, k, a_hat: T::one(), b_hat: T::zero() };
    // b_i = b_{i-1} a_i + gamma_i^2 unrolls to the two-case sum for b_hat.
    let mut a_hat = T::one();
    let mut b_hat = T::zero();
    for i in 1..k {
        let a = out.a_i(i);
        if !(a > T::zero()) {
            return Err(Error::NonPositiveFactor { index: i, value: a.as_f64() });
        }
        let g = gamma0 / T::from_usize_lossy(i);
        a_hat *= a;
        b_hat = b_hat * a + g * g;
    }
    out.a_hat = a_hat;
    out.b_hat = b_hat;
    Ok(out)
}

/// The bound `e_k <= Q(gamma0, K) / k`, valid for `k >= K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QBound<T: Real> {
    pub q: T,
    pub burn_in: usize,
}

impl<T: Real> QBound<T> {
    pub fn eval(&self, k: usize) -> Result<T> {
        if k < self.burn_in {
            return Err(Error::BeforeBurnIn { k, burn_in: self.burn_in });
        }
        Ok(self.q / T::from_usize_lossy(k))
    }
}

/// `Q = max{gamma0^2 C / (2 c gamma0 - gamma0^2 M / K - 1), K e_K}` with
/// `e_K` replaced by its upper bound `a_hat e1 + b_hat C`.
pub fn q_bound<T: Real>(consts: &SaRateConstants<T>, e1: T, x_star_norm_sq: T) -> Result<QBound<T>> {
    if !(e1 >= T::zero() && x_star_norm_sq >= T::zero()) {
        return Err(Error::InvalidParameter("e1 and |x*|^2 must be nonnegative".into()));
    }
    let den = consts.q_denominator();
    if !(den > T::zero()) {
        return Err(Error::Denominator { name: "2 c gamma - 1 - gamma^2 M / K", value: den.as_f64() });
    }
    let c = consts.c_of(x_star_norm_sq);
    let e_k = consts.a_hat * e1 + consts.b_hat * c;
    let first = consts.gamma0 * consts.gamma0 * c / den;
    let second = T::from_usize_lossy(consts.k) * e_k;
    Ok(QBound { q: first.max(second), burn_in: consts.k })
}
