//! Certificate algebra: contraction gaps, the zeta constants of the error
//! recursion, the recursive bound curves and the total sample bound `N(eps)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::problem::StochasticProblem;
use crate::sa::SaRateConstants;
use crate::si_admm::{AlgorithmConfig, DerivedConstants};
use crate::Real;

/// `2 (rho |A|^2 / mu_f + L_f / (rho lmin(A A')))^{-1}` for `P = 0`, `gamma = 1`, `Q = 0`.
pub fn delta_simple<T: Real>(mu_f: T, l_f: T, rho: T, a: &DMatrix<T>) -> Result<T> {
    if !(mu_f > T::zero() && l_f >= mu_f && rho > T::zero()) {
        return Err(Error::InvalidParameter("need mu_f > 0, L_f >= mu_f, rho > 0".into()));
    }
    let aat = a * a.transpose();
    let (lmin, lmax) = linalg::sym_extremes(&aat);
    if !(lmin > T::lit(linalg::REL_TOL) * lmax.max(T::one())) {
        return Err(Error::RankDeficient(format!("lmin(AA') = {lmin}")));
    }
    let a_norm_sq = linalg::spectral_norm(a).powi(2);
    Ok(T::lit(2.0) / (rho * a_norm_sq / mu_f + l_f / (rho * lmin)))
}

/// `min{delta_0, 2 sigma_g / |Q|}` for a strongly convex `g` and `Q > 0`.
pub fn delta_strongly_convex_g<T: Real>(mu_f: T, l_f: T, sigma_g: T, rho: T, a: &DMatrix<T>, q: &DMatrix<T>) -> Result<T> {
    if !linalg::is_pd(q) {
        return Err(Error::NotPositiveDefinite("Q".into()));
    }
    if !(sigma_g > T::zero()) {
        return Err(Error::InvalidParameter(format!("sigma_g = {sigma_g} must be positive")));
    }
    let d0 = delta_simple(mu_f, l_f, rho, a)?;
    let second = T::lit(2.0) * sigma_g / linalg::spectral_norm(q);
    Ok(d0.min(second))
}

/// Constants of the recursion when `y` is updated exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimpleZeta<T: Real> {
    pub c11_x: T,
    pub c12_x: T,
    pub zeta1: T,
    pub zeta2: T,
}

/// Constants of the recursion when both blocks are sampled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullZeta<T: Real> {
    /// `C_1^x = C_2^x`
    pub c1_x: T,
    pub c12_x_bar: T,
    /// `hat C_{1,2}^x = hat C_{1,1}^x`
    pub c12_x_hat: T,
    pub c12_y: T,
    /// `C_1^y = C_2^y`
    pub c1_y: T,
    pub c11_x_bar: T,
    pub c11_y: T,
    pub zeta1_x: T,
    pub zeta1_y: T,
    pub zeta1_xy: T,
    pub zeta2_x: T,
    pub zeta2_y: T,
    pub zeta2_xy: T,
}

fn rate_h<T: Real>(sa: &SaRateConstants<T>) -> Result<T> {
    sa.h()
}

fn p_hat<T: Real>(prob: &StochasticProblem<T>, cfg: &AlgorithmConfig<T>) -> DMatrix<T> {
    &cfg.p + prob.a_mat.tr_mul(&prob.a_mat) * cfg.rho
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Denominator { name, value: v })
    }
}

/// `zeta_2 = (lmax(P_hat) + rho gamma |A|^2) C_{1,2}^x`, `zeta_1` likewise with `C_{1,1}^x`.
pub fn zeta_simple<T: Real>(
    consts: &DerivedConstants<T>,
    prob: &StochasticProblem<T>,
    cfg: &AlgorithmConfig<T>,
    delta: T,
    x_star_norm_sq: T,
) -> Result<SimpleZeta<T>> {
    let sa = &consts.sa_x;
    let h = rate_h(sa)?;
    let (lmin_p, lmax_p) = linalg::sym_extremes(&p_hat(prob, cfg));
    positive("lmin(P_hat)", lmin_p.as_f64())?;
    let one = T::one();
    let two = T::lit(2.0);
    let k = T::from_usize_lossy(sa.k);
    let v1 = prob.constants.v1_x;
    let v2 = prob.constants.v2_x;
    let c12_x = h * v1 * (one + cfg.r) * two / (lmin_p * (one + delta))
        + k * sa.a_hat * (two / lmin_p) * (one + one / (one + delta));
    let c11_x = h * (v1 * (one + cfg.r) * two * x_star_norm_sq + v2);
    let a_norm_sq = linalg::spectral_norm(&prob.a_mat).powi(2);
    let factor = lmax_p + cfg.rho * cfg.gamma * a_norm_sq;
    Ok(SimpleZeta { c11_x, c12_x, zeta1: factor * c11_x, zeta2: factor * c12_x })
}

/// Every constant of the fully stochastic recursion and the six zeta products.
pub fn zeta_full<T: Real>(
    prob: &StochasticProblem<T>,
    cfg: &AlgorithmConfig<T>,
    consts: &DerivedConstants<T>,
    delta: T,
    x_star: &DVector<T>,
    y_star: &DVector<T>,
) -> Result<FullZeta<T>> {
    let sa_x = &consts.sa_x;
    let sa_y = consts.sa_y.as_ref().ok_or_else(|| {
        Error::InvalidParameter("the full recursion needs a sampled y-update".into())
    })?;
    let hx = rate_h(sa_x)?;
    let hy = rate_h(sa_y)?;
    let (lmin_p, lmax_p) = linalg::sym_extremes(&p_hat(prob, cfg));
    let (lmin_q, lmax_q) = linalg::sym_extremes(&cfg.q);
    positive("lmin(P_hat)", lmin_p.as_f64())?;
    positive("lmin(Q)", lmin_q.as_f64())?;
    let c = &prob.constants;
    let (one, two, three, four) = (T::one(), T::lit(2.0), T::lit(3.0), T::lit(4.0));
    let r = cfg.r;
    let rg = cfg.rho * cfg.gamma;
    let ata_max = linalg::lambda_max(&prob.a_mat.tr_mul(&prob.a_mat));
    let btb_max = linalg::lambda_max(&prob.b_mat.tr_mul(&prob.b_mat));
    let atb = linalg::spectral_norm(&prob.a_mat.tr_mul(&prob.b_mat));
    let kappa = (cfg.rho * atb / consts.c_x).powi(2);
    let kx = T::from_usize_lossy(sa_x.k);
    let ky = T::from_usize_lossy(sa_y.k);
    let od = one / (one + delta);

    let c1_x = two * lmax_p + four * rg * ata_max;
    let c12_x_bar = hx * c.v1_x * (one + r) * three / (lmin_p * (one + delta))
        + kx * sa_x.a_hat * (three / lmin_p) * (one + od);
    let c12_x_hat = hx * c.v1_x * three * (one + r) * kappa + three * kx * sa_x.a_hat * kappa;
    let c12_y = hy * c.v1_y * (one + r) * two / (lmin_q * (one + delta))
        + ky * sa_y.a_hat * (two / lmin_q) * (one + od);
    let c1_y = two * lmax_p * kappa + lmax_q + four * kappa * rg * ata_max + two * rg * btb_max;
    let c11_x_bar = hx * (c.v1_x * (one + r) * three * x_star.norm_squared() + c.v2_x);
    let c11_y = hy * (c.v1_y * (one + r) * two * y_star.norm_squared() + c.v2_y);

    Ok(FullZeta {
        c1_x,
        c12_x_bar,
        c12_x_hat,
        c12_y,
        c1_y,
        c11_x_bar,
        c11_y,
        zeta2_x: c1_x * c12_x_bar,
        zeta2_y: c1_y * c12_y,
        zeta2_xy: c1_x * c12_x_hat * c12_y,
        zeta1_x: c1_x * c11_x_bar,
        zeta1_y: c1_y * c11_y,
        zeta1_xy: c1_x * c12_x_hat * c11_y,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Zeta<T: Real> {
    Simple(SimpleZeta<T>),
    Full(FullZeta<T>),
}

impl<T: Real> Zeta<T> {
    /// Coefficients `(z2, z2xy, z1, z1xy)` of `s` and `s^2` in the recursion, `s = eta^k / T`.
    pub fn parts(&self) -> (T, T, T, T) {
        match self {
            Zeta::Simple(z) => (z.zeta2, T::zero(), z.zeta1, T::zero()),
            Zeta::Full(z) => (z.zeta2_x + z.zeta2_y, z.zeta2_xy, z.zeta1_x + z.zeta1_y, z.zeta1_xy),
        }
    }
}

/// Everything needed to evaluate the bound recursion and `N(eps)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCertificate<T: Real> {
    pub delta: T,
    pub t: T,
    pub eta: T,
    pub r: T,
    pub a_x: T,
    pub b_x: T,
    pub a_y: Option<T>,
    pub b_y: Option<T>,
    pub k_x: usize,
    pub k_y: Option<usize>,
    pub zeta: Zeta<T>,
    /// Divides a G-norm bound into a bound on the iterate error:
    /// `lmin(P_hat)` with an exact `y`, `min{lmin(Q), lmin(P_hat)}` otherwise.
    pub iterate_divisor: T,
}

impl<T: Real> BoundCertificate<T> {
    /// Builds the certificate of a problem with a known solution, choosing the
    /// simple recursion for a prox `g` and the full one otherwise.
    pub fn for_problem(prob: &StochasticProblem<T>, cfg: &AlgorithmConfig<T>, consts: &DerivedConstants<T>) -> Result<Self> {
        let kkt = prob
            .known_kkt
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("a certificate needs the solution".into()))?;
        let delta = consts
            .delta
            .ok_or_else(|| Error::InvalidParameter("no contraction gap for this configuration".into()))?;
        let (lmin_p, _) = linalg::sym_extremes(&p_hat(prob, cfg));
        let (zeta, divisor) = if prob.g.is_prox() {
            let z = zeta_simple(consts, prob, cfg, delta, kkt.x_star.norm_squared())?;
            (Zeta::Simple(z), lmin_p)
        } else {
            let z = zeta_full(prob, cfg, consts, delta, &kkt.x_star, &kkt.y_star)?;
            (Zeta::Full(z), lmin_p.min(linalg::lambda_min(&cfg.q)))
        };
        Ok(Self {
            delta,
            t: cfg.t,
            eta: consts.eta,
            r: cfg.r,
            a_x: consts.sa_x.a_hat,
            b_x: consts.sa_x.b_hat,
            a_y: consts.sa_y.as_ref().map(|s| s.a_hat),
            b_y: consts.sa_y.as_ref().map(|s| s.b_hat),
            k_x: consts.sa_x.k,
            k_y: consts.sa_y.as_ref().map(|s| s.k),
            zeta,
            iterate_divisor: divisor,
        })
    }

    pub fn with_t(mut self, t: T) -> Self {
        self.t = t;
        self
    }

    /// One step of the recursion at outer index `k` from the level `e`,
    /// using the minimizing split `R_{0,k} = sqrt(e / (1 + delta) / D)`.
    pub fn step(&self, k: usize, e: T) -> T {
        let s = self.eta.powi(k as i32) / self.t;
        let (z2, z2xy, z1, z1xy) = self.zeta.parts();
        let d = (z2 * s + z2xy * s * s) * e + z1 * s + z1xy * s * s;
        let c = e / (T::one() + self.delta);
        // (1 + R) D + (1 + 1/R) c at R = sqrt(c / D); also the D -> 0 limit.
        let root = d.max(T::zero()).sqrt() + c.max(T::zero()).sqrt();
        root * root
    }

    /// The recursion evaluated at a fixed split `R0` (no minimization).
    pub fn step_fixed(&self, k: usize, e: T, r0: T) -> T {
        let s = self.eta.powi(k as i32) / self.t;
        let (z2, z2xy, z1, z1xy) = self.zeta.parts();
        let one = T::one();
        ((one + r0) * (z2 * s + z2xy * s * s) + (one + one / r0) / (one + self.delta)) * e
            + (one + r0) * (z1 * s + z1xy * s * s)
    }
}

/// How the unknown expectation inside the recursion is supplied.
#[derive(Debug, Clone, Copy)]
pub enum BoundMode<'a, T: Real> {
    /// Feed each bound value back in; sample-free.
    Certified,
    /// Use a measured mean error sequence `E_0, E_1, ...` at each step.
    Empirical(&'a [T]),
}

/// Bounds on `E|u_k - u*|_G^2` for `k = 0..=num_outer`, starting from `r0`.
pub fn bound_curve<T: Real>(cert: &BoundCertificate<T>, r0: T, num_outer: usize, mode: BoundMode<'_, T>) -> Result<Vec<T>> {
    if !(r0 >= T::zero()) {
        return Err(Error::InvalidParameter(format!("r0 = {r0} must be nonnegative")));
    }
    if let BoundMode::Empirical(m) = mode {
        if m.len() < num_outer {
            return Err(Error::Dimension(format!(
                "empirical mode needs {num_outer} measured values, got {}",
                m.len()
            )));
        }
    }
    let mut out = Vec::with_capacity(num_outer + 1);
    out.push(r0);
    for k in 0..num_outer {
        let e = match mode {
            BoundMode::Certified => out[k],
            BoundMode::Empirical(m) => m[k],
        };
        out.push(cert.step(k, e));
    }
    Ok(out)
}

/// Converts a G-norm bound curve into an iterate-error bound curve.
pub fn iterate_bound<T: Real>(cert: &BoundCertificate<T>, curve: &[T]) -> Vec<T> {
    curve.iter().map(|v| *v / cert.iterate_divisor).collect()
}

/// Outcome of the geometric-schedule complexity estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexityBound<T: Real> {
    /// Outer iterations after which `E|u_k - u*|_G^2 <= eps` is guaranteed.
    pub k_bar: usize,
    /// Closed-form upper bound on the total number of oracle calls.
    /// Infinite when the certificate constants exceed the exponent range,
    /// in which case `ln_leading - ln(eps)` still gives its leading term.
    pub n_bound: T,
    pub l_ratio: T,
    pub r0_split: T,
    pub a: T,
    pub alpha: T,
    pub beta: T,
    pub c1: T,
    pub c2: T,
    pub c3: T,
    pub c4: T,
    /// `e^alpha r0 / L + C34 e^beta / (eta (1 - 1/L))`; infinite when it overflows.
    pub w: T,
    pub ln_w: T,
    /// Coefficient of `1/eps` in `n_bound`; infinite when it overflows.
    pub leading: T,
    pub ln_leading: T,
}

/// The `L` used when none is given: the geometric midpoint of `(1, eta (1 + delta))`.
pub fn default_l_ratio<T: Real>(cert: &BoundCertificate<T>) -> T {
    (cert.eta * (T::one() + cert.delta)).sqrt()
}

/// `K_bar` and the `N(eps)` bound for the schedule `T / eta^k`.
///
/// `L` splits `eta = L a` with `a = (1 + 1/R0)/(1 + delta)`, so it must lie in
/// `(1, eta (1 + delta))`.
pub fn complexity_bound<T: Real>(cert: &BoundCertificate<T>, r0: T, l_ratio: Option<T>, eps: T) -> Result<ComplexityBound<T>> {
    let one = T::one();
    let eta = cert.eta;
    let delta = cert.delta;
    if !(eta > one / (one + delta)) {
        return Err(Error::InvalidParameter(format!(
            "eta = {eta} must exceed 1/(1+delta) = {}",
            one / (one + delta)
        )));
    }
    if !(eps > T::zero() && eps <= (-one).exp()) {
        return Err(Error::InvalidParameter(format!("eps = {eps} must lie in (0, 1/e]")));
    }
    if !(r0 >= T::zero()) {
        return Err(Error::InvalidParameter(format!("r0 = {r0} must be nonnegative")));
    }
    let l = l_ratio.unwrap_or_else(|| default_l_ratio(cert));
    if !(l > one && l < eta * (one + delta)) {
        return Err(Error::InvalidParameter(format!(
            "L = {l} must lie in (1, eta (1 + delta)) = (1, {})",
            eta * (one + delta)
        )));
    }
    let a = eta / l;
    let r0_split = one / (a * (one + delta) - one);
    let (z2, z2xy, z1, z1xy) = cert.zeta.parts();
    let t = cert.t;
    let c1 = (one + r0_split) * z2 / t;
    let c2 = (one + r0_split) * z2xy / (t * t);
    let c3 = (one + r0_split) * z1 / t;
    let c4 = (one + r0_split) * z1xy / (t * t);
    let alpha = (c1 * (one + eta) + c2) / (a * (one - eta * eta));
    let beta = (c1 + c2) * eta / (a * (one - eta));
    // W = e^alpha r0 / L + C34 e^beta / (eta (1 - 1/L)), kept in logs because
    // alpha and beta routinely exceed the exponent range.
    let mut terms = Vec::with_capacity(2);
    if r0 > T::zero() {
        terms.push(alpha + r0.ln() - l.ln());
    }
    if c3 + c4 > T::zero() {
        terms.push((c3 + c4).ln() + beta - (eta * (one - one / l)).ln());
    }
    let ln_w = match terms.as_slice() {
        [] => return Err(Error::InvalidParameter("r0 = 0 with zero noise constants: nothing to bound".into())),
        [t] => *t,
        [a, b] => {
            let m = a.max(*b);
            m + ((*a - m).exp() + (*b - m).exp()).ln()
        }
        _ => unreachable!(),
    };
    if !ln_w.is_finite() {
        return Err(Error::InvalidParameter(format!("ln W = {ln_w} is not finite")));
    }
    let w = ln_w.exp();
    let kb = ((eps.ln() - ln_w) / eta.ln()).ceil().as_f64().max(1.0);
    let k_bar = if kb >= usize::MAX as f64 { usize::MAX } else { kb as usize };
    let two_blocks = matches!(cert.zeta, Zeta::Full(_));
    let (batch, burn) = if two_blocks {
        (T::lit(2.0) * t, T::from_usize_lossy(cert.k_x + cert.k_y.unwrap_or(0)))
    } else {
        (t, T::from_usize_lossy(cert.k_x))
    };
    let ln_leading = (batch / (one - eta)).ln() + ln_w;
    let leading = ln_leading.exp();
    let log_eta_w = ln_w / eta.ln();
    let log_inv_eps = (one / eps).ln();
    let n_bound = leading / eps + ((one - log_eta_w) * burn + burn / (one / eta).ln()) * log_inv_eps;
    Ok(ComplexityBound {
        k_bar,
        n_bound,
        l_ratio: l,
        r0_split,
        a,
        alpha,
        beta,
        c1,
        c2,
        c3,
        c4,
        w,
        ln_w,
        leading,
        ln_leading,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_delta() {
        let a = DMatrix::<f64>::identity(3, 3);
        assert!((delta_simple(1.0, 1.0, 1.0, &a).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rank_deficient_delta_errors() {
        let a = DMatrix::<f64>::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(delta_simple(1.0, 1.0, 1.0, &a), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn strongly_convex_delta_saturates() {
        let a = DMatrix::<f64>::identity(2, 2);
        let q = DMatrix::<f64>::identity(2, 2) * 3.0;
        let d0 = delta_simple(1.0, 2.0, 1.5, &a).unwrap();
        assert_eq!(delta_strongly_convex_g(1.0, 2.0, 1e12, 1.5, &a, &q).unwrap(), d0);
        let tiny = delta_strongly_convex_g(1.0, 2.0, 1e-9, 1.5, &a, &q).unwrap();
        assert!((tiny - 2e-9 / 3.0).abs() < 1e-20);
        assert!(delta_strongly_convex_g(1.0, 2.0, 1.0, 1.5, &a, &DMatrix::zeros(2, 2)).is_err());
    }
}
