//! Synthetic test problems: the expectation-valued LASSO and the two-agent
//! distributed regression, with closed-form fourth moments and known solutions.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::baselines::prox_grad_reference;
use crate::error::{Error, Result};
use crate::linalg::{self, SpdSolver};
use crate::problem::{
    GComponent, GradientOracle, KktPoint, L1Prox, ProblemConstants, StochasticProblem,
};
use crate::rng::Stream;
use crate::Real;

/// Default `sigma_l^2 = sigma_s^2`.
pub const DEFAULT_SIGMA2: f64 = 5.0;
/// Default l1 weight of the LASSO.
pub const DEFAULT_GAMMA_BAR: f64 = 0.1;
/// Default success probability of the last coordinate of `x_true`.
pub const DEFAULT_BERNOULLI_P: f64 = 0.5;
/// Tolerance of the reference proximal-gradient solve.
pub const REFERENCE_TOL: f64 = 1e-10;

/// `(sigma^2 * 0.5^|i-j|)_{ij}`
pub fn ar_covariance<T: Real>(n: usize, sigma2: T) -> DMatrix<T> {
    let half = T::lit(0.5);
    DMatrix::from_fn(n, n, |i, j| sigma2 * half.powi(i.abs_diff(j) as i32))
}

/// `rs ~ U[-50, 50]` kept when `|rs| <= 5`, zero otherwise.
fn truncated_uniform(stream: &mut Stream) -> f64 {
    let rs = stream.uniform(-50.0, 50.0);
    if rs.abs() <= 5.0 {
        rs
    } else {
        0.0
    }
}

fn check_symmetric<T: Real>(m: &DMatrix<T>, what: &str) -> Result<()> {
    if linalg::is_symmetric(m) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{what} must be symmetric")))
    }
}

/// `E[(l l' - Sigma)^2]` for `l = (l_bar; 1)` with `l_bar ~ N(0, Sigma_l)`.
pub fn isserlis_v_affine<T: Real>(sigma_l: &DMatrix<T>) -> Result<DMatrix<T>> {
    check_symmetric(sigma_l, "Sigma_l")?;
    let d = sigma_l.nrows();
    let tr = sigma_l.trace();
    let top = sigma_l * tr + sigma_l * sigma_l + sigma_l;
    let mut v = DMatrix::zeros(d + 1, d + 1);
    v.view_mut((0, 0), (d, d)).copy_from(&top);
    v[(d, d)] = tr;
    Ok(v)
}

/// `E[(l l' - Sigma)^2] = Sigma tr(Sigma) + Sigma^2` for `l ~ N(0, Sigma)`.
pub fn isserlis_v_centered<T: Real>(sigma: &DMatrix<T>) -> Result<DMatrix<T>> {
    check_symmetric(sigma, "Sigma")?;
    Ok(sigma * sigma.trace() + sigma * sigma)
}

/// Sampled gradient `2 (l'x - s) l` of `E[(l'x - s)^2]` with
/// `l = (L z; 1)` or `l = L z`, and `s = l' target + eps`.
#[derive(Debug, Clone)]
pub struct RegressionOracle<T: Real> {
    /// Lower Cholesky factor of the Gaussian block of `l`.
    pub chol: DMatrix<T>,
    /// Appends a constant 1 to `l`.
    pub intercept: bool,
    pub target: DVector<T>,
    pub sigma_s: T,
    /// `E[l l']`
    pub sigma: DMatrix<T>,
    /// Incremented once per drawn `(l, s)` when present.
    pub counter: Option<Arc<AtomicU64>>,
}

impl<T: Real> RegressionOracle<T> {
    pub fn with_counter(mut self, counter: Arc<AtomicU64>) -> Self {
        self.counter = Some(counter);
        self
    }

    /// Draws one `(l, s)`; `l` is written into `l_out`.
    pub fn sample(&self, stream: &mut Stream, l_out: &mut DVector<T>) -> T {
        if let Some(c) = &self.counter {
            c.fetch_add(1, Ordering::Relaxed);
        }
        let d = self.chol.nrows();
        for i in 0..d {
            l_out[i] = T::lit(stream.normal());
        }
        // In-place l = L z, running down so z_j (j < i) is still unread.
        for i in (0..d).rev() {
            let mut acc = T::zero();
            for j in 0..=i {
                acc += self.chol[(i, j)] * l_out[j];
            }
            l_out[i] = acc;
        }
        if self.intercept {
            l_out[d] = T::one();
        }
        let eps = T::lit(stream.normal());
        l_out.dot(&self.target) + self.sigma_s * eps
    }

    /// `E[(l'x - s)^2] = (x - target)' Sigma (x - target) + sigma_s^2`
    pub fn value(&self, x: &DVector<T>) -> T {
        let d = x - &self.target;
        d.dot(&(&self.sigma * &d)) + self.sigma_s * self.sigma_s
    }
}

impl<T: Real> GradientOracle<T> for RegressionOracle<T> {
    fn dim(&self) -> usize {
        self.target.len()
    }

    fn sample_gradient(&self, x: &DVector<T>, stream: &mut Stream, out: &mut DVector<T>) {
        let s = self.sample(stream, out);
        let r = out.dot(x) - s;
        *out *= T::lit(2.0) * r;
    }

    fn exact_gradient(&self, x: &DVector<T>) -> Option<DVector<T>> {
        Some(&self.sigma * (x - &self.target) * T::lit(2.0))
    }
}

/// Counts oracle calls of a wrapped oracle.
pub struct CountingOracle<T: Real> {
    inner: Arc<dyn GradientOracle<T>>,
    calls: AtomicU64,
}

impl<T: Real> CountingOracle<T> {
    pub fn new(inner: Arc<dyn GradientOracle<T>>) -> Self {
        Self { inner, calls: AtomicU64::new(0) }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

impl<T: Real> GradientOracle<T> for CountingOracle<T> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn sample_gradient(&self, x: &DVector<T>, stream: &mut Stream, out: &mut DVector<T>) {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.sample_gradient(x, stream, out);
    }

    fn exact_gradient(&self, x: &DVector<T>) -> Option<DVector<T>> {
        self.inner.exact_gradient(x)
    }
}

/// Generation parameters of a LASSO instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoParams {
    pub n: usize,
    pub sigma_l2: f64,
    pub sigma_s2: f64,
    pub gamma_bar: f64,
    pub bernoulli_p: f64,
}

impl LassoParams {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            sigma_l2: DEFAULT_SIGMA2,
            sigma_s2: DEFAULT_SIGMA2,
            gamma_bar: DEFAULT_GAMMA_BAR,
            bernoulli_p: DEFAULT_BERNOULLI_P,
        }
    }
}

/// `min E[(l'x - s)^2] + gamma_bar |y|_1  s.t.  x - y = 0`.
#[derive(Debug, Clone)]
pub struct LassoInstance<T: Real> {
    pub params: LassoParams,
    pub n: usize,
    pub sigma_l: DMatrix<T>,
    pub sigma: DMatrix<T>,
    pub chol_l: DMatrix<T>,
    pub x_true: DVector<T>,
    pub gamma_bar: T,
    pub sigma_s2: T,
    /// `E[(l l' - Sigma)^2]`
    pub v: DMatrix<T>,
    pub v1_x: T,
    pub v2_x: T,
    pub x_star: DVector<T>,
    /// `2 Sigma (x* - x_true)`
    pub lambda_star: DVector<T>,
    pub f_star: T,
}

/// Draws `x_true` and builds every derived quantity of a LASSO instance.
pub fn gen_lasso<T: Real>(params: LassoParams, stream: &mut Stream) -> Result<LassoInstance<T>> {
    let LassoParams { n, sigma_l2, sigma_s2, gamma_bar, bernoulli_p } = params;
    if n < 2 {
        return Err(Error::InvalidParameter(format!("LASSO needs n >= 2, got {n}")));
    }
    if !(sigma_l2 > 0.0 && sigma_s2 >= 0.0 && gamma_bar >= 0.0 && (0.0..=1.0).contains(&bernoulli_p)) {
        return Err(Error::InvalidParameter(
            "need sigma_l2 > 0, sigma_s2 >= 0, gamma_bar >= 0 and p in [0, 1]".into(),
        ));
    }
    let mut x_true = DVector::zeros(n);
    for i in 0..n - 1 {
        x_true[i] = T::lit(truncated_uniform(stream));
    }
    x_true[n - 1] = if stream.bernoulli(bernoulli_p) { T::one() } else { T::zero() };

    let sigma_l: DMatrix<T> = ar_covariance(n - 1, T::lit(sigma_l2));
    let chol_l = SpdSolver::new(sigma_l.clone(), "Sigma_l")?.lower();
    let mut sigma = DMatrix::zeros(n, n);
    sigma.view_mut((0, 0), (n - 1, n - 1)).copy_from(&sigma_l);
    sigma[(n - 1, n - 1)] = T::one();
    let v = isserlis_v_affine(&sigma_l)?;
    let gb = T::lit(gamma_bar);
    let s2 = T::lit(sigma_s2);
    let (v1_x, v2_x) = variance_constants(&v, &x_true, s2, sigma.trace());
    let x_star = prox_grad_reference(&sigma, &x_true, gb, T::lit(REFERENCE_TOL), 1_000_000)?;
    let d = &x_star - &x_true;
    let lambda_star = &sigma * &d * T::lit(2.0);
    let f_star = d.dot(&(&sigma * &d)) + s2 + gb * x_star.lp_norm(1);
    Ok(LassoInstance {
        params,
        n,
        sigma_l,
        sigma,
        chol_l,
        x_true,
        gamma_bar: gb,
        sigma_s2: s2,
        v,
        v1_x,
        v2_x,
        x_star,
        lambda_star,
        f_star,
    })
}

/// `(8 lmax(V), 8 t'Vt + 4 sigma_s^2 tr)`; `tr` is `E|l|^2`.
fn variance_constants<T: Real>(v: &DMatrix<T>, target: &DVector<T>, sigma_s2: T, tr: T) -> (T, T) {
    let eight = T::lit(8.0);
    let v1 = eight * linalg::lambda_max(v).max(T::zero());
    let v2 = eight * target.dot(&(v * target)) + T::lit(4.0) * sigma_s2 * tr;
    (v1, v2)
}

/// `(v1_x, v2_x)` of a LASSO instance: `E|w|^2 <= v1_x |x|^2 + v2_x`.
pub fn variance_constants_lasso<T: Real>(inst: &LassoInstance<T>) -> (T, T) {
    variance_constants(&inst.v, &inst.x_true, inst.sigma_s2, inst.sigma_l.trace() + T::one())
}

impl<T: Real> LassoInstance<T> {
    /// `2 lmin(Sigma)`
    pub fn mu_f(&self) -> T {
        T::lit(2.0) * linalg::lambda_min(&self.sigma)
    }

    /// `2 lmax(Sigma)`
    pub fn l_f(&self) -> T {
        T::lit(2.0) * linalg::lambda_max(&self.sigma)
    }

    /// `E[(l'x - s)^2] + gamma_bar |x|_1`
    pub fn objective(&self, x: &DVector<T>) -> T {
        let d = x - &self.x_true;
        d.dot(&(&self.sigma * &d)) + self.sigma_s2 + self.gamma_bar * x.lp_norm(1)
    }

    pub fn oracle(&self) -> RegressionOracle<T> {
        RegressionOracle {
            chol: self.chol_l.clone(),
            intercept: true,
            target: self.x_true.clone(),
            sigma_s: self.sigma_s2.sqrt(),
            sigma: self.sigma.clone(),
            counter: None,
        }
    }

    pub fn constants(&self) -> ProblemConstants<T> {
        ProblemConstants {
            mu_f: self.mu_f(),
            l_f: self.l_f(),
            sigma_g: T::zero(),
            l_g: T::zero(),
            v1_x: self.v1_x,
            v2_x: self.v2_x,
            v1_y: T::zero(),
            v2_y: T::zero(),
        }
    }

    pub fn kkt(&self) -> KktPoint<T> {
        KktPoint {
            x_star: self.x_star.clone(),
            y_star: self.x_star.clone(),
            lambda_star: self.lambda_star.clone(),
        }
    }

    /// `A = I`, `B = -I`, `b = 0`, with the l1 term handled by its prox.
    pub fn problem(&self) -> Result<StochasticProblem<T>> {
        self.problem_with_oracle(Arc::new(self.oracle()))
    }

    /// As [`Self::problem`] with a caller-supplied `f` oracle (e.g. a counting wrapper).
    pub fn problem_with_oracle(&self, oracle: Arc<dyn GradientOracle<T>>) -> Result<StochasticProblem<T>> {
        let n = self.n;
        let prox = L1Prox { dim: n, weight: self.gamma_bar };
        StochasticProblem::new(
            DMatrix::identity(n, n),
            -DMatrix::identity(n, n),
            DVector::zeros(n),
            oracle,
            GComponent::Prox(Arc::new(prox)),
            self.constants(),
        )?
        .with_kkt(self.kkt())
    }

    /// Largest violation of `-lambda* in gamma_bar d|y*|_1`, the y-stationarity of the split form.
    pub fn y_stationarity_defect(&self) -> T {
        let prox = L1Prox { dim: self.n, weight: self.gamma_bar };
        use crate::problem::ProxOperator;
        prox.subdifferential_distance(&self.x_star, &(-&self.lambda_star))
    }
}

/// Generation parameters of a distributed regression instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistRegParams {
    pub n: usize,
    pub sigma_l2: f64,
    pub sigma_s2: f64,
}

impl DistRegParams {
    pub fn new(n: usize) -> Self {
        Self { n, sigma_l2: DEFAULT_SIGMA2, sigma_s2: DEFAULT_SIGMA2 }
    }
}

/// `min E[(l1'x - s1)^2] + E[(l2'y - s2)^2]  s.t.  Ax - y = 0`.
#[derive(Debug, Clone)]
pub struct DistRegInstance<T: Real> {
    pub params: DistRegParams,
    pub n: usize,
    pub sigma: DMatrix<T>,
    pub chol: DMatrix<T>,
    pub a_mat: DMatrix<T>,
    pub beta1: DVector<T>,
    pub beta2: DVector<T>,
    pub sigma_s2: T,
    /// `Sigma tr(Sigma) + Sigma^2`
    pub v: DMatrix<T>,
    pub v1: T,
    pub v2_x: T,
    pub v2_y: T,
    pub f_star: T,
}

const DISTREG_RETRIES: usize = 8;

/// Draws `A` and `beta2`, then sets `beta1 = A^{-1} beta2`.
pub fn gen_distreg<T: Real>(params: DistRegParams, stream: &mut Stream) -> Result<DistRegInstance<T>> {
    let DistRegParams { n, sigma_l2, sigma_s2 } = params;
    if n < 1 {
        return Err(Error::InvalidParameter("distributed regression needs n >= 1".into()));
    }
    if !(sigma_l2 > 0.0 && sigma_s2 >= 0.0) {
        return Err(Error::InvalidParameter("need sigma_l2 > 0 and sigma_s2 >= 0".into()));
    }
    let mut built = None;
    for _ in 0..DISTREG_RETRIES {
        let mut a_mat = DMatrix::<T>::identity(n, n) * T::lit(3.0);
        for j in 0..n {
            for i in 0..j {
                a_mat[(i, j)] = T::lit(0.1 * stream.normal());
            }
        }
        let beta2 = DVector::<T>::from_fn(n, |_, _| T::lit(truncated_uniform(stream)));
        if let Some(beta1) = a_mat.solve_upper_triangular(&beta2) {
            let resid = (&a_mat * &beta1 - &beta2).amax();
            if beta1.iter().all(|v| v.is_finite()) && resid <= T::lit(1e-10) * (T::one() + beta2.amax()) {
                built = Some((a_mat, beta1, beta2));
                break;
            }
        }
    }
    let (a_mat, beta1, beta2) = built.ok_or_else(|| Error::Singular("A".into()))?;
    let sigma: DMatrix<T> = ar_covariance(n, T::lit(sigma_l2));
    let chol = SpdSolver::new(sigma.clone(), "Sigma")?.lower();
    let v = isserlis_v_centered(&sigma)?;
    let s2 = T::lit(sigma_s2);
    let tr = sigma.trace();
    let (v1, v2_x) = variance_constants(&v, &beta1, s2, tr);
    let (_, v2_y) = variance_constants(&v, &beta2, s2, tr);
    Ok(DistRegInstance {
        params,
        n,
        sigma,
        chol,
        a_mat,
        beta1,
        beta2,
        sigma_s2: s2,
        v,
        v1,
        v2_x,
        v2_y,
        f_star: T::lit(2.0) * s2,
    })
}

impl<T: Real> DistRegInstance<T> {
    /// `mu_f = sigma_g = 2 lmin(Sigma)`
    pub fn mu(&self) -> T {
        T::lit(2.0) * linalg::lambda_min(&self.sigma)
    }

    /// `L_f = L_g = 2 lmax(Sigma)`
    pub fn l(&self) -> T {
        T::lit(2.0) * linalg::lambda_max(&self.sigma)
    }

    fn oracle_for(&self, target: &DVector<T>) -> RegressionOracle<T> {
        RegressionOracle {
            chol: self.chol.clone(),
            intercept: false,
            target: target.clone(),
            sigma_s: self.sigma_s2.sqrt(),
            sigma: self.sigma.clone(),
            counter: None,
        }
    }

    pub fn oracle_x(&self) -> RegressionOracle<T> {
        self.oracle_for(&self.beta1)
    }

    pub fn oracle_y(&self) -> RegressionOracle<T> {
        self.oracle_for(&self.beta2)
    }

    /// `F(x, y) = f(x) + g(y)`
    pub fn objective(&self, x: &DVector<T>, y: &DVector<T>) -> T {
        self.oracle_x().value(x) + self.oracle_y().value(y)
    }

    pub fn z_star(&self) -> DVector<T> {
        let mut z = DVector::zeros(2 * self.n);
        z.rows_mut(0, self.n).copy_from(&self.beta1);
        z.rows_mut(self.n, self.n).copy_from(&self.beta2);
        z
    }

    pub fn constants(&self) -> ProblemConstants<T> {
        ProblemConstants {
            mu_f: self.mu(),
            l_f: self.l(),
            sigma_g: self.mu(),
            l_g: self.l(),
            v1_x: self.v1,
            v2_x: self.v2_x,
            v1_y: self.v1,
            v2_y: self.v2_y,
        }
    }

    /// Both gradients vanish at `(beta1, beta2)`, so `A'lambda* = 0` and `lambda* = 0`.
    pub fn kkt(&self) -> KktPoint<T> {
        KktPoint {
            x_star: self.beta1.clone(),
            y_star: self.beta2.clone(),
            lambda_star: DVector::zeros(self.n),
        }
    }

    pub fn problem(&self) -> Result<StochasticProblem<T>> {
        self.problem_with_oracles(Arc::new(self.oracle_x()), Arc::new(self.oracle_y()))
    }

    pub fn problem_with_oracles(
        &self,
        fx: Arc<dyn GradientOracle<T>>,
        gy: Arc<dyn GradientOracle<T>>,
    ) -> Result<StochasticProblem<T>> {
        let n = self.n;
        StochasticProblem::new(
            self.a_mat.clone(),
            -DMatrix::identity(n, n),
            DVector::zeros(n),
            fx,
            GComponent::Stochastic(gy),
            self.constants(),
        )?
        .with_kkt(self.kkt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_v_scalar_case() {
        let s2 = 1.7_f64;
        let v = isserlis_v_affine(&DMatrix::from_element(1, 1, s2)).unwrap();
        // E[l^4] = 3 s^4, so E[(l^2 - s2)^2] + E[l^2] = 2 s2^2 + s2.
        assert!((v[(0, 0)] - (2.0 * s2 * s2 + s2)).abs() < 1e-12);
        assert_eq!(v[(0, 1)], 0.0);
        assert_eq!(v[(1, 1)], s2);
    }

    #[test]
    fn centered_v_identity() {
        let v = isserlis_v_centered(&DMatrix::<f64>::identity(4, 4)).unwrap();
        assert!((v - DMatrix::identity(4, 4) * 5.0).amax() < 1e-14);
    }

    #[test]
    fn asymmetric_input_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.0, 1.0]);
        assert!(isserlis_v_affine(&m).is_err());
        assert!(isserlis_v_centered(&m).is_err());
    }

    #[test]
    fn noiseless_zero_target_has_no_v2() {
        let v = isserlis_v_affine(&ar_covariance::<f64>(3, 5.0)).unwrap();
        let (_, v2) = variance_constants(&v, &DVector::zeros(4), 0.0, 16.0);
        assert_eq!(v2, 0.0);
    }
}
