//! The SI-ADMM outer loop: inexact `y` and `x` updates by stochastic
//! approximation with geometrically growing sample counts, then a multiplier step.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::bounds;
use crate::error::{Error, Result};
use crate::linalg::{self, check_dims, Curvature};
use crate::problem::{GComponent, GMetric, Iterate, KktPoint, StochasticProblem};
use crate::rng::Stream;
use crate::sa::{compute_rate_constants, sa_run, SaRateConstants};
use crate::Real;

/// Largest per-subproblem sample count the schedule may produce.
pub const SCHEDULE_CAP: f64 = 9.0e15;

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmConfig<T: Real> {
    pub rho: T,
    /// Multiplier step.
    pub gamma: T,
    pub p: DMatrix<T>,
    pub q: DMatrix<T>,
    /// Splitting scalar used in `M = L^2 + v1 (1 + 1/R)`.
    pub r: T,
    /// Base batch size of the schedule.
    pub t: T,
    /// Schedule ratio; `None` picks `(1 + delta/2) / (1 + delta)`.
    pub eta: Option<T>,
    pub max_outer: usize,
    pub sample_budget: Option<u64>,
    /// Inner step scales; `None` picks `1 / c_x` and `1 / c_y`.
    pub gamma_x: Option<T>,
    pub gamma_y: Option<T>,
}

impl<T: Real> AlgorithmConfig<T> {
    /// Defaults: `gamma = 1`, `P = 0`, `Q = 0`, `R = 1`, `T = 1000`, 100 outer iterations.
    pub fn new(rho: T, n: usize, m: usize) -> Self {
        Self {
            rho,
            gamma: T::one(),
            p: DMatrix::zeros(n, n),
            q: DMatrix::zeros(m, m),
            r: T::one(),
            t: T::lit(1000.0),
            eta: None,
            max_outer: 100,
            sample_budget: None,
            gamma_x: None,
            gamma_y: None,
        }
    }

    pub fn with_q(mut self, q: DMatrix<T>) -> Self {
        self.q = q;
        self
    }

    pub fn with_p(mut self, p: DMatrix<T>) -> Self {
        self.p = p;
        self
    }

    pub fn with_gamma(mut self, gamma: T) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_eta(mut self, eta: T) -> Self {
        self.eta = Some(eta);
        self
    }

    pub fn with_t(mut self, t: T) -> Self {
        self.t = t;
        self
    }

    pub fn with_r(mut self, r: T) -> Self {
        self.r = r;
        self
    }

    pub fn with_max_outer(mut self, k: usize) -> Self {
        self.max_outer = k;
        self
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.sample_budget = Some(budget);
        self
    }

    pub fn with_inner_steps(mut self, gamma_x: Option<T>, gamma_y: Option<T>) -> Self {
        self.gamma_x = gamma_x;
        self.gamma_y = gamma_y;
        self
    }

    pub fn validate(&self, n: usize, m: usize) -> Result<()> {
        let pos = [("rho", self.rho), ("gamma", self.gamma), ("R", self.r), ("T", self.t)];
        for (name, v) in pos {
            if !(v > T::zero() && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be positive")));
            }
        }
        if let Some(eta) = self.eta {
            if !(eta > T::zero() && eta < T::one()) {
                return Err(Error::InvalidParameter(format!("eta = {eta} must lie in (0, 1)")));
            }
        }
        check_dims("P", self.p.nrows(), n)?;
        check_dims("Q", self.q.nrows(), m)?;
        if !linalg::is_psd(&self.p) {
            return Err(Error::NotPositiveDefinite("P must be symmetric PSD".into()));
        }
        if !linalg::is_psd(&self.q) {
            return Err(Error::NotPositiveDefinite("Q must be symmetric PSD".into()));
        }
        for g in [self.gamma_x, self.gamma_y].into_iter().flatten() {
            if !(g > T::zero()) {
                return Err(Error::InvalidParameter(format!("inner step {g} must be positive")));
            }
        }
        Ok(())
    }

    /// FNV-1a hash of the debug rendering, stable for a given build.
    pub fn fingerprint(&self) -> u64 {
        fnv1a(format!("{self:?}").as_bytes())
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Subproblem moduli, rate constants and schedule parameters.
#[derive(Debug, Clone)]
pub struct DerivedConstants<T: Real> {
    pub c_x: T,
    pub l_x: T,
    pub c_y: T,
    pub l_y: T,
    pub gamma_x: T,
    pub gamma_y: T,
    pub sa_x: SaRateConstants<T>,
    /// Absent when `g` is handled by its proximal map.
    pub sa_y: Option<SaRateConstants<T>>,
    pub delta: Option<T>,
    pub eta: T,
    /// `rho A'A + P`
    pub curvature_x: Curvature<T>,
    /// `rho B'B + Q`
    pub curvature_y: Curvature<T>,
    pub warnings: Vec<String>,
}

impl<T: Real> DerivedConstants<T> {
    pub fn k_x(&self) -> usize {
        self.sa_x.k
    }

    pub fn m_x(&self) -> T {
        self.sa_x.m
    }

    pub fn k_y(&self) -> Option<usize> {
        self.sa_y.as_ref().map(|s| s.k)
    }

    pub fn m_y(&self) -> Option<T> {
        self.sa_y.as_ref().map(|s| s.m)
    }
}

/// Contraction gap for the `P = 0, gamma = 1` regimes, `None` otherwise.
pub fn contraction_gap<T: Real>(prob: &StochasticProblem<T>, cfg: &AlgorithmConfig<T>) -> Option<T> {
    if cfg.gamma != T::one() || cfg.p.iter().any(|v| *v != T::zero()) {
        return None;
    }
    let c = &prob.constants;
    if cfg.q.iter().all(|v| *v == T::zero()) {
        bounds::delta_simple(c.mu_f, c.l_f, cfg.rho, &prob.a_mat).ok()
    } else if c.sigma_g > T::zero() {
        bounds::delta_strongly_convex_g(c.mu_f, c.l_f, c.sigma_g, cfg.rho, &prob.a_mat, &cfg.q).ok()
    } else {
        None
    }
}

/// `c_x = mu_f + lmin(rho A'A + P)`, `L_x = L_f + lmax(rho A'A + P)` and the
/// `y` analogues, followed by `M`, `K` of each stochastic subproblem.
pub fn derive_constants<T: Real>(prob: &StochasticProblem<T>, cfg: &AlgorithmConfig<T>) -> Result<DerivedConstants<T>> {
    cfg.validate(prob.dim_x(), prob.dim_y())?;
    let k = &prob.constants;
    let hx = prob.a_mat.tr_mul(&prob.a_mat) * cfg.rho + &cfg.p;
    let hy = prob.b_mat.tr_mul(&prob.b_mat) * cfg.rho + &cfg.q;
    if !linalg::is_pd(&hx) {
        return Err(Error::NotPositiveDefinite("P + rho A'A must be positive definite".into()));
    }
    let curvature_x = Curvature::from_matrix(hx);
    let curvature_y = Curvature::from_matrix(hy);
    let (hx_min, hx_max) = curvature_x.extremes();
    let (hy_min, hy_max) = curvature_y.extremes();
    let c_x = k.mu_f + hx_min;
    let l_x = k.l_f + hx_max;
    let c_y = k.sigma_g + hy_min;
    let l_y = k.l_g + hy_max;
    let gamma_x = cfg.gamma_x.unwrap_or(T::one() / c_x);
    let sa_x = compute_rate_constants(c_x, l_x, k.v1_x, k.v2_x, cfg.r, gamma_x)?;
    let (sa_y, gamma_y) = match &prob.g {
        GComponent::Prox(_) => (None, cfg.gamma_y.unwrap_or(T::one() / c_y.max(T::lit(f64::MIN_POSITIVE)))),
        GComponent::Stochastic(_) => {
            if !(k.sigma_g > T::zero()) {
                return Err(Error::InvalidParameter(
                    "a stochastic g requires sigma_g > 0".into(),
                ));
            }
            let gamma_y = cfg.gamma_y.unwrap_or(T::one() / c_y);
            (Some(compute_rate_constants(c_y, l_y, k.v1_y, k.v2_y, cfg.r, gamma_y)?), gamma_y)
        }
    };
    let delta = contraction_gap(prob, cfg);
    let mut warnings = Vec::new();
    let eta = match (cfg.eta, delta) {
        (Some(eta), Some(d)) => {
            let edge = T::one() / (T::one() + d);
            if eta <= edge * (T::one() + T::lit(1e-12)) {
                warnings.push(format!(
                    "eta = {eta} does not exceed 1/(1+delta) = {edge}; the O(1/eps) sample bound does not apply"
                ));
            }
            eta
        }
        (Some(eta), None) => eta,
        (None, Some(d)) => (T::one() + d / T::lit(2.0)) / (T::one() + d),
        (None, None) => {
            return Err(Error::InvalidParameter(
                "eta must be given when no contraction gap is available".into(),
            ))
        }
    };
    Ok(DerivedConstants {
        c_x,
        l_x,
        c_y,
        l_y,
        gamma_x,
        gamma_y,
        sa_x,
        sa_y,
        delta,
        eta,
        curvature_x,
        curvature_y,
        warnings,
    })
}

/// `max{K, ceil(T / eta^k)}`.
pub fn sample_schedule<T: Real>(burn_in: usize, t: T, eta: T, k: usize) -> Result<u64> {
    let (t, eta) = (t.as_f64(), eta.as_f64());
    if !(t > 0.0) || !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidParameter(format!("need T > 0 and eta in (0,1), got {t}, {eta}")));
    }
    let k_i32 = i32::try_from(k).map_err(|_| Error::ScheduleOverflow(k))?;
    let v = (t / eta.powi(k_i32)).ceil();
    if !v.is_finite() || v > SCHEDULE_CAP {
        return Err(Error::ScheduleOverflow(k));
    }
    Ok((v as u64).max(burn_in as u64))
}

fn y_update_sa<T: Real>(
    prob: &StochasticProblem<T>,
    cfg: &AlgorithmConfig<T>,
    consts: &DerivedConstants<T>,
    u: &Iterate<T>,
    t_y: u64,
    stream: &mut Stream,
) -> Result<DVector<T>> {
    let oracle = match &prob.g {
        GComponent::Stochastic(o) => o,
        GComponent::Prox(_) => {
            return Err(Error::InvalidParameter("g has no gradient oracle".into()))
        }
    };
    // grad = g~(y) + (rho B'B + Q) y + h,  h = -B'lambda + rho B'(A x_k - b) - Q y_k
    let mut w = &prob.a_mat * &u.x - &prob.b_vec;
    w *= cfg.rho;
    w -= &u.lambda;
    let mut h = prob.b_mat.tr_mul(&w);
    h.gemv(-T::one(), &cfg.q, &u.y, T::one());
    let curv = &consts.curvature_y;
    sa_run(
        |y, s, g| {
            oracle.sample_gradient(y, s, g);
            curv.add_apply_shift(y, &h, g);
        },
        &u.y,
        consts.gamma_y,
        t_y,
        stream,
    )
}

fn x_update_sa<T: Real>(
    prob: &StochasticProblem<T>,
    cfg: &AlgorithmConfig<T>,
    consts: &DerivedConstants<T>,
    u: &Iterate<T>,
    y_next: &DVector<T>,
    t_x: u64,
    stream: &mut Stream,
) -> Result<DVector<T>> {
    // grad = f~(x) + (rho A'A + P) x + h,  h = -A'lambda + rho A'(B y_{k+1} - b) - P x_k
    let mut w = &prob.b_mat * y_next - &prob.b_vec;
    w *= cfg.rho;
    w -= &u.lambda;
    let mut h = prob.a_mat.tr_mul(&w);
    h.gemv(-T::one(), &cfg.p, &u.x, T::one());
    let curv = &consts.curvature_x;
    let oracle = &*prob.oracle_f;
    sa_run(
        |x, s, g| {
            oracle.sample_gradient(x, s, g);
            curv.add_apply_shift(x, &h, g);
        },
        &u.x,
        consts.gamma_x,
        t_x,
        stream,
    )
}

fn lambda_update<T: Real>(
    prob: &StochasticProblem<T>,
    cfg: &AlgorithmConfig<T>,
    lambda: &DVector<T>,
    x: &DVector<T>,
    y: &DVector<T>,
) -> DVector<T> {
    lambda - prob.residual(x, y) * (cfg.gamma * cfg.rho)
}

fn check_iterate<T: Real>(prob: &StochasticProblem<T>, u: &Iterate<T>) -> Result<()> {
    check_dims("x", u.x.len(), prob.dim_x())?;
    check_dims("y", u.y.len(), prob.dim_y())?;
    check_dims("lambda", u.lambda.len(), prob.dim_c())
}

/// One outer iteration with both blocks solved by SA (`T_y - 1` then `T_x - 1` oracle calls).
pub fn si_admm_step<T: Real>(
    prob: &StochasticProblem<T>,
    cfg: &AlgorithmConfig<T>,
    consts: &DerivedConstants<T>,
    u_k: &Iterate<T>,
    t_y: u64,
    t_x: u64,
    stream: &mut Stream,
) -> Result<Iterate<T>> {
    check_iterate(prob, u_k)?;
    let y = y_update_sa(prob, cfg, consts, u_k, t_y, stream)?;
    let x = x_update_sa(prob, cfg, consts, u_k, &y, t_x, stream)?;
    let lambda = lambda_update(prob, cfg, &u_k.lambda, &x, &y);
    Ok(Iterate { x, y, lambda })
}

/// Exact `y` minimizer of `L_rho(x_k, y, lambda_k) + |y - y_k|_Q^2 / 2` for a
/// prox-friendly `g`, which requires `rho B'B + Q = s I`.
pub fn exact_y<T: Real>(
    prob: &StochasticProblem<T>,
    cfg: &AlgorithmConfig<T>,
    consts: &DerivedConstants<T>,
    u: &Iterate<T>,
) -> Result<DVector<T>> {
    let prox = match &prob.g {
        GComponent::Prox(p) => p,
        GComponent::Stochastic(_) => return Err(Error::MissingProx),
    };
    let s = match consts.curvature_y {
        Curvature::Scaled(_, s) if s > T::zero() => s,
        _ => {
            return Err(Error::InvalidParameter(
                "exact y-update needs rho B'B + Q to be a positive multiple of the identity".into(),
            ))
        }
    };
    let mut w = &prob.a_mat * &u.x - &prob.b_vec;
    w *= cfg.rho;
    w -= &u.lambda;
    let mut v = prob.b_mat.tr_mul(&w);
    v.neg_mut();
    v.gemv(T::one(), &cfg.q, &u.y, T::one());
    v /= s;
    Ok(prox.prox(&v, T::one() / s))
}

/// One outer iteration with the `y` block solved exactly (`T_x - 1` oracle calls).
pub fn si_admm_step_exact_y<T: Real>(
    prob: &StochasticProblem<T>,
    cfg: &AlgorithmConfig<T>,
    consts: &DerivedConstants<T>,
    u_k: &Iterate<T>,
    t_x: u64,
    stream: &mut Stream,
) -> Result<Iterate<T>> {
    check_iterate(prob, u_k)?;
    let y = exact_y(prob, cfg, consts, u_k)?;
    let x = x_update_sa(prob, cfg, consts, u_k, &y, t_x, stream)?;
    let lambda = lambda_update(prob, cfg, &u_k.lambda, &x, &y);
    Ok(Iterate { x, y, lambda })
}

/// One row per completed outer iteration (or per recorded step for baselines).
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow<T: Real> {
    pub k: usize,
    pub samples_x: u64,
    pub samples_y: u64,
    pub wall_ms: f64,
    pub err_u_g: Option<T>,
    pub err_x: Option<T>,
    pub err_y: Option<T>,
    pub iterate: Option<Iterate<T>>,
}

impl<T: Real> RunRow<T> {
    pub fn samples_total(&self) -> u64 {
        self.samples_x + self.samples_y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord<T: Real> {
    pub algorithm: String,
    pub seed: u64,
    pub config_hash: u64,
    pub rows: Vec<RunRow<T>>,
    pub wall_ms: f64,
}

impl<T: Real> RunRecord<T> {
    pub fn last(&self) -> &RunRow<T> {
        self.rows.last().expect("a record always holds its initial row")
    }

    pub fn final_iterate(&self) -> Option<&Iterate<T>> {
        self.rows.iter().rev().find_map(|r| r.iterate.as_ref())
    }
}

/// Distances of an iterate to a known KKT point.
#[derive(Debug, Clone)]
pub struct ErrorProbe<T: Real> {
    pub kkt: KktPoint<T>,
    pub metric: Option<GMetric<T>>,
}

impl<T: Real> ErrorProbe<T> {
    pub fn measure(&self, x: &DVector<T>, y: &DVector<T>, lambda: Option<&DVector<T>>) -> (Option<T>, T, T) {
        let ex = (x - &self.kkt.x_star).norm_squared();
        let ey = (y - &self.kkt.y_star).norm_squared();
        let eu = match (&self.metric, lambda) {
            (Some(m), Some(l)) => {
                let u = Iterate::new(x.clone(), y.clone(), l.clone());
                m.g_dist_sq(&u, &self.kkt.as_iterate()).ok()
            }
            _ => None,
        };
        (eu, ex, ey)
    }

    pub fn row(&self, k: usize, sx: u64, sy: u64, wall_ms: f64, u: &Iterate<T>, keep: bool) -> RunRow<T> {
        let (eu, ex, ey) = self.measure(&u.x, &u.y, Some(&u.lambda));
        RunRow {
            k,
            samples_x: sx,
            samples_y: sy,
            wall_ms,
            err_u_g: eu,
            err_x: Some(ex),
            err_y: Some(ey),
            iterate: keep.then(|| u.clone()),
        }
    }
}

fn plain_row<T: Real>(k: usize, sx: u64, sy: u64, wall_ms: f64, u: &Iterate<T>) -> RunRow<T> {
    RunRow {
        k,
        samples_x: sx,
        samples_y: sy,
        wall_ms,
        err_u_g: None,
        err_x: None,
        err_y: None,
        iterate: Some(u.clone()),
    }
}

/// Runs SI-ADMM from `u0` until `max_outer` or the sample budget is reached.
///
/// With a budget, the run stops after the first outer iteration whose
/// completion meets or exceeds it.
pub fn solve<T: Real>(
    prob: &StochasticProblem<T>,
    cfg: &AlgorithmConfig<T>,
    u0: &Iterate<T>,
    stream: &mut Stream,
) -> Result<RunRecord<T>> {
    let consts = derive_constants(prob, cfg)?;
    solve_with(prob, cfg, &consts, u0, stream)
}

/// [`solve`] with precomputed constants.
pub fn solve_with<T: Real>(
    prob: &StochasticProblem<T>,
    cfg: &AlgorithmConfig<T>,
    consts: &DerivedConstants<T>,
    u0: &Iterate<T>,
    stream: &mut Stream,
) -> Result<RunRecord<T>> {
    check_iterate(prob, u0)?;
    let start = Instant::now();
    let probe = match &prob.known_kkt {
        Some(kkt) => Some(ErrorProbe {
            kkt: kkt.clone(),
            metric: Some(GMetric::from_config(&prob.a_mat, cfg)?),
        }),
        None => None,
    };
    let make_row = |k, sx, sy, ms, u: &Iterate<T>| match &probe {
        Some(p) => p.row(k, sx, sy, ms, u, true),
        None => plain_row(k, sx, sy, ms, u),
    };
    let exact = prob.g.is_prox();
    let mut rows = vec![make_row(0, 0, 0, 0.0, u0)];
    let mut u = u0.clone();
    let (mut sx, mut sy) = (0u64, 0u64);
    for k in 0..cfg.max_outer {
        let t_x = sample_schedule(consts.k_x(), cfg.t, consts.eta, k)?;
        let t_y = match consts.k_y() {
            Some(k_y) if !exact => sample_schedule(k_y, cfg.t, consts.eta, k)?,
            _ => 1,
        };
        if let Some(budget) = cfg.sample_budget {
            let needed = (t_x - 1) + (t_y - 1);
            if k == 0 && needed > budget {
                return Err(Error::BudgetTooSmall { budget, needed });
            }
        }
        u = if exact {
            si_admm_step_exact_y(prob, cfg, consts, &u, t_x, stream)?
        } else {
            si_admm_step(prob, cfg, consts, &u, t_y, t_x, stream)?
        };
        sx += t_x - 1;
        sy += t_y - 1;
        let ms = start.elapsed().as_secs_f64() * 1e3;
        rows.push(make_row(k + 1, sx, sy, ms, &u));
        if cfg.sample_budget.is_some_and(|b| sx + sy >= b) {
            break;
        }
    }
    Ok(RunRecord {
        algorithm: "si-admm".into(),
        seed: stream.seed(),
        config_hash: cfg.fingerprint(),
        rows,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}
