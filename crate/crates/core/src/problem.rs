//! Problem model: oracles, constraint data, iterates and the G-metric.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, check_dims};
use crate::rng::Stream;
use crate::si_admm::AlgorithmConfig;
use crate::Real;

/// Stochastic first-order oracle for a smooth convex function.
pub trait GradientOracle<T: Real>: Send + Sync {
    fn dim(&self) -> usize;

    /// Writes one sampled gradient at `x` into `out`, drawing from `stream`.
    fn sample_gradient(&self, x: &DVector<T>, stream: &mut Stream, out: &mut DVector<T>);

    /// Deterministic gradient, when known in closed form.
    fn exact_gradient(&self, _x: &DVector<T>) -> Option<DVector<T>> {
        None
    }
}

/// Exact proximal map of a closed convex `g`.
pub trait ProxOperator<T: Real>: Send + Sync {
    fn dim(&self) -> usize;

    /// `argmin_y g(y) + |y - v|^2 / (2 t)`
    fn prox(&self, v: &DVector<T>, t: T) -> DVector<T>;

    /// Infinity-norm distance from `s` to the subdifferential of `g` at `y`.
    fn subdifferential_distance(&self, y: &DVector<T>, s: &DVector<T>) -> T;

    fn value(&self, y: &DVector<T>) -> T;
}

/// How the `g` block is accessed.
#[derive(Clone)]
pub enum GComponent<T: Real> {
    Stochastic(Arc<dyn GradientOracle<T>>),
    Prox(Arc<dyn ProxOperator<T>>),
}

impl<T: Real> GComponent<T> {
    pub fn dim(&self) -> usize {
        match self {
            GComponent::Stochastic(o) => o.dim(),
            GComponent::Prox(p) => p.dim(),
        }
    }

    pub fn is_prox(&self) -> bool {
        matches!(self, GComponent::Prox(_))
    }
}

/// Moduli and variance coefficients supplied with a problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemConstants<T: Real> {
    pub mu_f: T,
    pub l_f: T,
    pub sigma_g: T,
    pub l_g: T,
    pub v1_x: T,
    pub v2_x: T,
    pub v1_y: T,
    pub v2_y: T,
}

impl<T: Real> ProblemConstants<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu_f > T::zero()) {
            return Err(Error::InvalidParameter(format!("mu_f = {} must be positive", self.mu_f)));
        }
        if self.l_f < self.mu_f {
            return Err(Error::InvalidParameter(format!(
                "L_f = {} is smaller than mu_f = {}",
                self.l_f, self.mu_f
            )));
        }
        let nonneg = [
            ("sigma_g", self.sigma_g),
            ("L_g", self.l_g),
            ("v1_x", self.v1_x),
            ("v2_x", self.v2_x),
            ("v1_y", self.v1_y),
            ("v2_y", self.v2_y),
        ];
        for (name, v) in nonneg {
            if !(v >= T::zero()) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be nonnegative")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktPoint<T: Real> {
    pub x_star: DVector<T>,
    pub y_star: DVector<T>,
    pub lambda_star: DVector<T>,
}

impl<T: Real> KktPoint<T> {
    pub fn as_iterate(&self) -> Iterate<T> {
        Iterate {
            x: self.x_star.clone(),
            y: self.y_star.clone(),
            lambda: self.lambda_star.clone(),
        }
    }
}

/// The triple `u = (x, y, lambda)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Iterate<T: Real> {
    pub x: DVector<T>,
    pub y: DVector<T>,
    pub lambda: DVector<T>,
}

impl<T: Real> Iterate<T> {
    pub fn new(x: DVector<T>, y: DVector<T>, lambda: DVector<T>) -> Self {
        Self { x, y, lambda }
    }

    pub fn zeros(n: usize, m: usize, p: usize) -> Self {
        Self { x: DVector::zeros(n), y: DVector::zeros(m), lambda: DVector::zeros(p) }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            x: &self.x - &other.x,
            y: &self.y - &other.y,
            lambda: &self.lambda - &other.lambda,
        }
    }

    pub fn scale(&self, c: T) -> Self {
        Self { x: &self.x * c, y: &self.y * c, lambda: &self.lambda * c }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            x: &self.x + &other.x,
            y: &self.y + &other.y,
            lambda: &self.lambda + &other.lambda,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.y.iter()).chain(self.lambda.iter()).all(|v| v.is_finite())
    }
}

/// `|u|_G^2 = x' P_hat x + y' Q y + |lambda|^2 / (rho gamma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GMetric<T: Real> {
    pub p_hat: DMatrix<T>,
    pub q: DMatrix<T>,
    pub rho_gamma: T,
}

impl<T: Real> GMetric<T> {
    pub fn new(p_hat: DMatrix<T>, q: DMatrix<T>, rho_gamma: T) -> Result<Self> {
        if !(rho_gamma > T::zero()) {
            return Err(Error::InvalidParameter(format!("rho*gamma = {rho_gamma} must be positive")));
        }
        if !linalg::is_psd(&p_hat) {
            return Err(Error::NotPositiveDefinite("P_hat is not symmetric PSD".into()));
        }
        if !linalg::is_psd(&q) {
            return Err(Error::NotPositiveDefinite("Q is not symmetric PSD".into()));
        }
        Ok(Self { p_hat, q, rho_gamma })
    }

    /// Metric of a configuration: `P_hat = P + rho A'A`, `Q`, `rho gamma`.
    pub fn from_config(a: &DMatrix<T>, cfg: &AlgorithmConfig<T>) -> Result<Self> {
        let p_hat = &cfg.p + a.tr_mul(a) * cfg.rho;
        Self::new(p_hat, cfg.q.clone(), cfg.rho * cfg.gamma)
    }

    pub fn g_norm_sq(&self, u: &Iterate<T>) -> Result<T> {
        check_dims("x", u.x.len(), self.p_hat.nrows())?;
        check_dims("y", u.y.len(), self.q.nrows())?;
        let xp = self.p_hat.dot_quadratic(&u.x);
        let yq = self.q.dot_quadratic(&u.y);
        Ok(xp + yq + u.lambda.norm_squared() / self.rho_gamma)
    }

    pub fn g_dist_sq(&self, u: &Iterate<T>, v: &Iterate<T>) -> Result<T> {
        check_dims("lambda", u.lambda.len(), v.lambda.len())?;
        self.g_norm_sq(&u.sub(v))
    }
}

trait Quadratic<T: Real> {
    fn dot_quadratic(&self, v: &DVector<T>) -> T;
}

impl<T: Real> Quadratic<T> for DMatrix<T> {
    fn dot_quadratic(&self, v: &DVector<T>) -> T {
        if v.is_empty() {
            return T::zero();
        }
        v.dot(&(self * v))
    }
}

/// `min E[f(x, xi)] + E[g(y, xi)]  s.t.  Ax + By = b`.
#[derive(Clone)]
pub struct StochasticProblem<T: Real> {
    pub a_mat: DMatrix<T>,
    pub b_mat: DMatrix<T>,
    pub b_vec: DVector<T>,
    pub oracle_f: Arc<dyn GradientOracle<T>>,
    pub g: GComponent<T>,
    pub constants: ProblemConstants<T>,
    pub known_kkt: Option<KktPoint<T>>,
}

impl<T: Real> StochasticProblem<T> {
    pub fn new(
        a_mat: DMatrix<T>,
        b_mat: DMatrix<T>,
        b_vec: DVector<T>,
        oracle_f: Arc<dyn GradientOracle<T>>,
        g: GComponent<T>,
        constants: ProblemConstants<T>,
    ) -> Result<Self> {
        let p = a_mat.nrows();
        check_dims("rows of B", b_mat.nrows(), p)?;
        check_dims("length of b", b_vec.len(), p)?;
        check_dims("oracle_f dimension", oracle_f.dim(), a_mat.ncols())?;
        check_dims("g dimension", g.dim(), b_mat.ncols())?;
        constants.validate()?;
        let mut ab = DMatrix::zeros(p, a_mat.ncols() + b_mat.ncols());
        ab.view_mut((0, 0), (p, a_mat.ncols())).copy_from(&a_mat);
        ab.view_mut((0, a_mat.ncols()), (p, b_mat.ncols())).copy_from(&b_mat);
        if !linalg::has_full_row_rank(&ab) {
            return Err(Error::RankDeficient("[A B] must have full row rank".into()));
        }
        Ok(Self { a_mat, b_mat, b_vec, oracle_f, g, constants, known_kkt: None })
    }

    pub fn with_kkt(mut self, kkt: KktPoint<T>) -> Result<Self> {
        check_dims("x_star", kkt.x_star.len(), self.dim_x())?;
        check_dims("y_star", kkt.y_star.len(), self.dim_y())?;
        check_dims("lambda_star", kkt.lambda_star.len(), self.dim_c())?;
        self.known_kkt = Some(kkt);
        Ok(self)
    }

    pub fn dim_x(&self) -> usize {
        self.a_mat.ncols()
    }

    pub fn dim_y(&self) -> usize {
        self.b_mat.ncols()
    }

    pub fn dim_c(&self) -> usize {
        self.a_mat.nrows()
    }

    /// `Ax + By - b`
    pub fn residual(&self, x: &DVector<T>, y: &DVector<T>) -> DVector<T> {
        let mut r = &self.a_mat * x;
        r.gemv(T::one(), &self.b_mat, y, T::one());
        r -= &self.b_vec;
        r
    }

    fn check_iterate(&self, x: &DVector<T>, y: &DVector<T>, lambda: &DVector<T>) -> Result<()> {
        check_dims("x", x.len(), self.dim_x())?;
        check_dims("y", y.len(), self.dim_y())?;
        check_dims("lambda", lambda.len(), self.dim_c())
    }
}

/// Sampled gradient in `x` of the augmented Lagrangian plus the proximal term:
/// `grad f(x, xi) - A'lambda + rho A'(Ax + By - b) + P (x - x_anchor)`.
#[allow(clippy::too_many_arguments)]
pub fn grad_l1_tilde<T: Real>(
    prob: &StochasticProblem<T>,
    cfg: &AlgorithmConfig<T>,
    x: &DVector<T>,
    y: &DVector<T>,
    lambda: &DVector<T>,
    x_anchor: &DVector<T>,
    stream: &mut Stream,
) -> Result<DVector<T>> {
    prob.check_iterate(x, y, lambda)?;
    check_dims("x_anchor", x_anchor.len(), prob.dim_x())?;
    let mut out = DVector::zeros(prob.dim_x());
    prob.oracle_f.sample_gradient(x, stream, &mut out);
    let w = prob.residual(x, y) * cfg.rho - lambda;
    out.gemv_tr(T::one(), &prob.a_mat, &w, T::one());
    out.gemv(T::one(), &cfg.p, &(x - x_anchor), T::one());
    Ok(out)
}

/// Sampled gradient in `y`:
/// `grad g(y, xi) - B'lambda + rho B'(Ax + By - b) + Q (y - y_anchor)`.
#[allow(clippy::too_many_arguments)]
pub fn grad_l2_tilde<T: Real>(
    prob: &StochasticProblem<T>,
    cfg: &AlgorithmConfig<T>,
    x: &DVector<T>,
    y: &DVector<T>,
    lambda: &DVector<T>,
    y_anchor: &DVector<T>,
    stream: &mut Stream,
) -> Result<DVector<T>> {
    prob.check_iterate(x, y, lambda)?;
    check_dims("y_anchor", y_anchor.len(), prob.dim_y())?;
    let oracle = match &prob.g {
        GComponent::Stochastic(o) => o,
        GComponent::Prox(_) => {
            return Err(Error::InvalidParameter("g has no gradient oracle".into()))
        }
    };
    let mut out = DVector::zeros(prob.dim_y());
    oracle.sample_gradient(y, stream, &mut out);
    let w = prob.residual(x, y) * cfg.rho - lambda;
    out.gemv_tr(T::one(), &prob.b_mat, &w, T::one());
    out.gemv(T::one(), &cfg.q, &(y - y_anchor), T::one());
    Ok(out)
}

/// Largest infinity-norm among the three KKT defects
/// `grad f(x) - A'lambda`, `grad g(y) - B'lambda` (or its subdifferential
/// distance for a prox `g`) and `Ax + By - b`.
pub fn kkt_residual<T: Real>(prob: &StochasticProblem<T>, u: &Iterate<T>) -> Result<T> {
    prob.check_iterate(&u.x, &u.y, &u.lambda)?;
    let gf = prob.oracle_f.exact_gradient(&u.x).ok_or(Error::MissingExactGradient)?;
    let dx = gf - prob.a_mat.tr_mul(&u.lambda);
    let bl = prob.b_mat.tr_mul(&u.lambda);
    let dy = match &prob.g {
        GComponent::Stochastic(o) => {
            let gg = o.exact_gradient(&u.y).ok_or(Error::MissingExactGradient)?;
            (gg - bl).amax()
        }
        GComponent::Prox(p) => p.subdifferential_distance(&u.y, &bl),
    };
    let dc = prob.residual(&u.x, &u.y).amax();
    Ok(dx.amax().max(dy).max(dc))
}

/// Gradient oracle of `x'Hx/2 + c'x` corrupted by i.i.d. Gaussian noise.
#[derive(Debug, Clone)]
pub struct QuadraticOracle<T: Real> {
    pub h: DMatrix<T>,
    pub c: DVector<T>,
    pub noise_std: T,
}

impl<T: Real> QuadraticOracle<T> {
    pub fn new(h: DMatrix<T>, c: DVector<T>, noise_std: T) -> Self {
        Self { h, c, noise_std }
    }

    /// `E|w|^2 = n * noise_std^2`, independent of `x`.
    pub fn noise_second_moment(&self) -> T {
        T::from_usize_lossy(self.c.len()) * self.noise_std * self.noise_std
    }
}

impl<T: Real> GradientOracle<T> for QuadraticOracle<T> {
    fn dim(&self) -> usize {
        self.c.len()
    }

    fn sample_gradient(&self, x: &DVector<T>, stream: &mut Stream, out: &mut DVector<T>) {
        out.copy_from(&self.c);
        out.gemv(T::one(), &self.h, x, T::one());
        if self.noise_std != T::zero() {
            for o in out.iter_mut() {
                *o += self.noise_std * T::lit(stream.normal());
            }
        }
    }

    fn exact_gradient(&self, x: &DVector<T>) -> Option<DVector<T>> {
        Some(&self.h * x + &self.c)
    }
}

/// `g(y) = weight * |y|_1`.
#[derive(Debug, Clone)]
pub struct L1Prox<T: Real> {
    pub dim: usize,
    pub weight: T,
}

impl<T: Real> ProxOperator<T> for L1Prox<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn prox(&self, v: &DVector<T>, t: T) -> DVector<T> {
        crate::baselines::soft_threshold(v, t * self.weight)
    }

    fn subdifferential_distance(&self, y: &DVector<T>, s: &DVector<T>) -> T {
        let w = self.weight;
        y.iter().zip(s.iter()).fold(T::zero(), |acc, (&yi, &si)| {
            let d = if yi > T::zero() {
                (si - w).abs()
            } else if yi < T::zero() {
                (si + w).abs()
            } else {
                (si.abs() - w).max(T::zero())
            };
            acc.max(d)
        })
    }

    fn value(&self, y: &DVector<T>) -> T {
        self.weight * y.lp_norm(1)
    }
}
