//! Competitor schemes: two stochastic ADMM variants with averaging, a
//! projected distributed SA, plus soft-thresholding and a deterministic
//! proximal-gradient reference solver.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, SpdSolver};
use crate::problem::Iterate;
use crate::rng::Stream;
use crate::si_admm::{RunRecord, RunRow};
use crate::synthetic::{DistRegInstance, LassoInstance, RegressionOracle};
use crate::Real;

#[inline]
fn shrink<T: Real>(v: T, alpha: T) -> T {
    if v > alpha {
        v - alpha
    } else if v < -alpha {
        v + alpha
    } else {
        T::zero()
    }
}

/// Componentwise `sign(v_i) max(|v_i| - alpha, 0)`.
pub fn soft_threshold<T: Real>(v: &DVector<T>, alpha: T) -> DVector<T> {
    v.map(|vi| shrink(vi, alpha))
}

/// Current iterate plus weighted running averages of `x` and `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedIterate<T: Real> {
    pub x: DVector<T>,
    pub y: DVector<T>,
    pub lambda: DVector<T>,
    pub x_bar: DVector<T>,
    pub y_bar: DVector<T>,
    /// Total weight in `x_bar`; `x_0` enters with weight 1.
    pub wx: T,
    /// Total weight in `y_bar`; zero until the first update.
    pub wy: T,
    /// Completed updates.
    pub k: usize,
}

impl<T: Real> AveragedIterate<T> {
    pub fn new(x0: DVector<T>, y0: DVector<T>, lambda0: DVector<T>) -> Self {
        Self {
            x_bar: x0.clone(),
            y_bar: y0.clone(),
            x: x0,
            y: y0,
            lambda: lambda0,
            wx: T::one(),
            wy: T::zero(),
            k: 0,
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(DVector::zeros(n), DVector::zeros(n), DVector::zeros(n))
    }

    fn absorb(&mut self, w_x: T, w_y: T) {
        self.wx += w_x;
        let frac = w_x / self.wx;
        self.x_bar.zip_apply(&self.x, |b, v| *b += (v - *b) * frac);
        self.wy += w_y;
        let frac = w_y / self.wy;
        self.y_bar.zip_apply(&self.y, |b, v| *b += (v - *b) * frac);
    }

    /// Shared linearized x-update, soft-threshold y-update and multiplier step.
    fn sadm_update(&mut self, l: &DVector<T>, s: T, rho: T, gamma_bar: T, prox_w: T) {
        let r = T::lit(2.0) * (l.dot(&self.x) - s);
        // x <- (-r l + lambda + rho y + w x) / (rho + w)
        self.x *= prox_w;
        self.x += &self.lambda;
        self.x.axpy(rho, &self.y, T::one());
        self.x.axpy(-r, l, T::one());
        self.x /= rho + prox_w;
        let alpha = gamma_bar / rho;
        for i in 0..self.x.len() {
            let yi = shrink(self.x[i] - self.lambda[i] / rho, alpha);
            self.y[i] = yi;
            self.lambda[i] -= rho * (self.x[i] - yi);
        }
        self.k += 1;
    }
}

/// One SADM0 step with proximal weight `eta_k` and uniform averages
/// `x_bar = mean(x_0..x_{k+1})`, `y_bar = mean(y_1..y_{k+1})`.
pub fn sadm0_step<T: Real>(
    state: &mut AveragedIterate<T>,
    l: &DVector<T>,
    s: T,
    rho: T,
    gamma_bar: T,
    eta_k: T,
) -> Result<()> {
    if !(eta_k > T::zero()) {
        return Err(Error::InvalidParameter(format!("eta_k = {eta_k} must be positive")));
    }
    state.sadm_update(l, s, rho, gamma_bar, eta_k);
    state.absorb(T::one(), T::one());
    Ok(())
}

/// One SADM1 step: proximal weight `(k+2)/2 mu_f`, `x_j` averaged with
/// weight `j+1` and `y_j` with weight `j`.
pub fn sadm1_step<T: Real>(
    state: &mut AveragedIterate<T>,
    l: &DVector<T>,
    s: T,
    rho: T,
    gamma_bar: T,
    mu_f: T,
) -> Result<()> {
    if !(mu_f > T::zero()) {
        return Err(Error::InvalidParameter(format!("mu_f = {mu_f} must be positive")));
    }
    let k = T::from_usize_lossy(state.k);
    let two = T::lit(2.0);
    state.sadm_update(l, s, rho, gamma_bar, (k + two) / two * mu_f);
    state.absorb(k + two, k + T::one());
    Ok(())
}

/// Projected distributed SA with a cached factorization of `I + A'A`.
#[derive(Debug, Clone)]
pub struct Dsa<T: Real> {
    pub a_mat: DMatrix<T>,
    solver: SpdSolver<T>,
    pub mu_f: T,
    pub sigma_g: T,
    /// `Gamma |z*|^2`, or `None` for no ball projection.
    pub radius_sq: Option<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsaState<T: Real> {
    pub x: DVector<T>,
    pub y: DVector<T>,
    /// Completed steps; the next step uses index `k + 1`.
    pub k: usize,
}

impl<T: Real> DsaState<T> {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self { x: DVector::zeros(n), y: DVector::zeros(m), k: 0 }
    }
}

impl<T: Real> Dsa<T> {
    pub fn new(a_mat: DMatrix<T>, mu_f: T, sigma_g: T, gamma: Option<T>, z_star_norm_sq: T) -> Result<Self> {
        if !(mu_f > T::zero() && sigma_g > T::zero()) {
            return Err(Error::InvalidParameter("DSA needs mu_f > 0 and sigma_g > 0".into()));
        }
        let radius_sq = match gamma {
            Some(g) if !(g > T::zero()) => {
                return Err(Error::InvalidParameter(format!("Gamma = {g} must be positive")))
            }
            Some(g) => Some(g * z_star_norm_sq),
            None => None,
        };
        let n = a_mat.ncols();
        let m = DMatrix::identity(n, n) + a_mat.tr_mul(&a_mat);
        let solver = SpdSolver::new(m, "I + A'A")?;
        Ok(Self { a_mat, solver, mu_f, sigma_g, radius_sq })
    }

    /// `argmin_x |x - xt|^2 + |Ax - yt|^2`, returned with `y = Ax`.
    pub fn project_subspace(&self, xt: &DVector<T>, yt: &DVector<T>) -> (DVector<T>, DVector<T>) {
        let rhs = xt + self.a_mat.tr_mul(yt);
        let x = self.solver.solve(&rhs);
        let y = &self.a_mat * &x;
        (x, y)
    }

    /// Radial projection of `(x; y)` onto `{z : |z|^2 <= radius_sq}`.
    pub fn project_ball(&self, x: &mut DVector<T>, y: &mut DVector<T>) {
        if let Some(r2) = self.radius_sq {
            let nsq = x.norm_squared() + y.norm_squared();
            if nsq > r2 {
                let c = (r2 / nsq).sqrt();
                *x *= c;
                *y *= c;
            }
        }
    }

    /// Gradient steps `1/(mu_f k)` and `1/(sigma_g k)`, subspace projection, ball projection.
    pub fn step(&self, state: &mut DsaState<T>, lx: &DVector<T>, sx: T, ly: &DVector<T>, sy: T) {
        let k = T::from_usize_lossy(state.k + 1);
        let two = T::lit(2.0);
        let rx = two * (lx.dot(&state.x) - sx);
        let ry = two * (ly.dot(&state.y) - sy);
        let xt = &state.x - lx * (rx / (self.mu_f * k));
        let yt = &state.y - ly * (ry / (self.sigma_g * k));
        let (mut x, mut y) = self.project_subspace(&xt, &yt);
        self.project_ball(&mut x, &mut y);
        state.x = x;
        state.y = y;
        state.k += 1;
    }
}

/// Free-function form of [`Dsa::step`].
pub fn dsa_step<T: Real>(
    dsa: &Dsa<T>,
    state: &mut DsaState<T>,
    sample_x: (&DVector<T>, T),
    sample_y: (&DVector<T>, T),
) {
    dsa.step(state, sample_x.0, sample_x.1, sample_y.0, sample_y.1);
}

/// Proximal gradient on `(x - x_true)' Sigma (x - x_true) + gamma_bar |x|_1`
/// with step `1 / (2 lmax(Sigma))`, stopped on the fixed-point residual.
pub fn prox_grad_reference<T: Real>(
    sigma: &DMatrix<T>,
    x_true: &DVector<T>,
    gamma_bar: T,
    tol: T,
    max_iters: usize,
) -> Result<DVector<T>> {
    linalg::check_dims("x_true", x_true.len(), sigma.nrows())?;
    if !linalg::is_psd(sigma) {
        return Err(Error::NotPositiveDefinite("Sigma must be positive semidefinite".into()));
    }
    let lmax = linalg::lambda_max(sigma);
    if !(lmax > T::zero()) {
        return Err(Error::InvalidParameter("Sigma must be nonzero".into()));
    }
    let two = T::lit(2.0);
    let t = T::one() / (two * lmax);
    let mut x = x_true.clone();
    let mut residual = T::zero();
    for _ in 0..max_iters {
        let grad = sigma * (&x - x_true) * two;
        let next = soft_threshold(&(&x - grad * t), gamma_bar * t);
        residual = (&next - &x).amax();
        x = next;
        if residual <= tol {
            return Ok(x);
        }
    }
    Err(Error::NoConvergence { iters: max_iters, residual: residual.as_f64() })
}

/// Proximal weight rule of a stochastic ADMM baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SadmVariant<T: Real> {
    /// SADM0 with `eta_k = scale * sqrt(k)`.
    Sadm0Sqrt { scale: T },
    /// SADM0 with `eta_k = mu * k`.
    Sadm0Linear { mu: T },
    /// SADM1 with weight `(k+2)/2 mu_f`.
    Sadm1 { mu_f: T },
}

impl<T: Real> SadmVariant<T> {
    pub fn name(&self) -> &'static str {
        match self {
            SadmVariant::Sadm0Sqrt { .. } | SadmVariant::Sadm0Linear { .. } => "sadm0",
            SadmVariant::Sadm1 { .. } => "sadm1",
        }
    }
}

/// Which point a baseline reports as its solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Report {
    Last,
    Average,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SadmConfig<T: Real> {
    pub rho: T,
    pub variant: SadmVariant<T>,
    pub report: Report,
    /// One sample per step.
    pub num_steps: u64,
    /// Record every `record_stride` steps; the last step is always recorded.
    pub record_stride: u64,
}

fn stride_hit(step: u64, stride: u64, last: u64) -> bool {
    step == last || step.is_multiple_of(stride.max(1))
}

fn elapsed_ms(start: &Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Runs SADM0 or SADM1 on a LASSO instance from the origin.
pub fn run_sadm<T: Real>(inst: &LassoInstance<T>, cfg: &SadmConfig<T>, stream: &mut Stream) -> Result<RunRecord<T>> {
    run_sadm_with_oracle(inst, &inst.oracle(), cfg, stream)
}

/// [`run_sadm`] drawing from a caller-supplied sampler of the instance.
pub fn run_sadm_with_oracle<T: Real>(
    inst: &LassoInstance<T>,
    oracle: &RegressionOracle<T>,
    cfg: &SadmConfig<T>,
    stream: &mut Stream,
) -> Result<RunRecord<T>> {
    if !(cfg.rho > T::zero()) {
        return Err(Error::InvalidParameter(format!("rho = {} must be positive", cfg.rho)));
    }
    let start = Instant::now();
    let n = inst.n;
    let mut state = AveragedIterate::zeros(n);
    let mut l = DVector::zeros(n);
    let reported = |st: &AveragedIterate<T>| match cfg.report {
        Report::Last => (st.x.clone(), st.y.clone()),
        Report::Average if st.k == 0 => (st.x_bar.clone(), st.y.clone()),
        Report::Average => (st.x_bar.clone(), st.y_bar.clone()),
    };
    let row = |st: &AveragedIterate<T>, step: u64, ms: f64, keep: bool| {
        let (x, y) = reported(st);
        RunRow {
            k: step as usize,
            samples_x: step,
            samples_y: 0,
            wall_ms: ms,
            err_u_g: None,
            err_x: Some((&x - &inst.x_star).norm_squared()),
            err_y: Some((&y - &inst.x_star).norm_squared()),
            iterate: keep.then(|| Iterate::new(x, y, st.lambda.clone())),
        }
    };
    let mut rows = vec![row(&state, 0, 0.0, false)];
    for step in 1..=cfg.num_steps {
        let s = oracle.sample(stream, &mut l);
        match cfg.variant {
            SadmVariant::Sadm0Sqrt { scale } => {
                let eta = scale * T::lit((step as f64).sqrt());
                sadm0_step(&mut state, &l, s, cfg.rho, inst.gamma_bar, eta)?
            }
            SadmVariant::Sadm0Linear { mu } => {
                let eta = mu * T::lit(step as f64);
                sadm0_step(&mut state, &l, s, cfg.rho, inst.gamma_bar, eta)?
            }
            SadmVariant::Sadm1 { mu_f } => sadm1_step(&mut state, &l, s, cfg.rho, inst.gamma_bar, mu_f)?,
        }
        if stride_hit(step, cfg.record_stride, cfg.num_steps) {
            let last = step == cfg.num_steps;
            rows.push(row(&state, step, elapsed_ms(&start), last));
        }
    }
    Ok(RunRecord {
        algorithm: cfg.variant.name().into(),
        seed: stream.seed(),
        config_hash: crate::si_admm::fnv1a(format!("{cfg:?}").as_bytes()),
        rows,
        wall_ms: elapsed_ms(&start),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DsaConfig<T: Real> {
    /// Ball factor `Gamma`; `None` disables the ball projection.
    pub gamma: Option<T>,
    /// Each step draws one `x` sample and one `y` sample.
    pub num_steps: u64,
    pub record_stride: u64,
}

/// Runs DSA on a distributed regression instance from the origin.
pub fn run_dsa<T: Real>(inst: &DistRegInstance<T>, cfg: &DsaConfig<T>, stream: &mut Stream) -> Result<RunRecord<T>> {
    run_dsa_with_oracles(inst, &inst.oracle_x(), &inst.oracle_y(), cfg, stream)
}

/// [`run_dsa`] drawing from caller-supplied samplers of the two agents.
pub fn run_dsa_with_oracles<T: Real>(
    inst: &DistRegInstance<T>,
    ox: &RegressionOracle<T>,
    oy: &RegressionOracle<T>,
    cfg: &DsaConfig<T>,
    stream: &mut Stream,
) -> Result<RunRecord<T>> {
    let start = Instant::now();
    let n = inst.n;
    let z_star_sq = inst.z_star().norm_squared();
    let dsa = Dsa::new(inst.a_mat.clone(), inst.mu(), inst.mu(), cfg.gamma, z_star_sq)?;
    let mut state = DsaState::zeros(n, n);
    let mut lx = DVector::zeros(n);
    let mut ly = DVector::zeros(n);
    let row = |st: &DsaState<T>, step: u64, ms: f64, keep: bool| RunRow {
        k: step as usize,
        samples_x: step,
        samples_y: step,
        wall_ms: ms,
        err_u_g: None,
        err_x: Some((&st.x - &inst.beta1).norm_squared()),
        err_y: Some((&st.y - &inst.beta2).norm_squared()),
        iterate: keep.then(|| Iterate::new(st.x.clone(), st.y.clone(), DVector::zeros(n))),
    };
    let mut rows = vec![row(&state, 0, 0.0, false)];
    for step in 1..=cfg.num_steps {
        let sx = ox.sample(stream, &mut lx);
        let sy = oy.sample(stream, &mut ly);
        dsa.step(&mut state, &lx, sx, &ly, sy);
        if stride_hit(step, cfg.record_stride, cfg.num_steps) {
            let last = step == cfg.num_steps;
            rows.push(row(&state, step, elapsed_ms(&start), last));
        }
    }
    let name = match cfg.gamma {
        Some(g) => format!("dsa-{g}"),
        None => "dsa-pf".into(),
    };
    Ok(RunRecord {
        algorithm: name,
        seed: stream.seed(),
        config_hash: crate::si_admm::fnv1a(format!("{cfg:?}").as_bytes()),
        rows,
        wall_ms: elapsed_ms(&start),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_threshold_examples() {
        let v = DVector::from_vec(vec![0.5, -0.05, -0.3]);
        let s = soft_threshold(&v, 0.1);
        let want = [0.4_f64, 0.0, -0.2];
        for i in 0..3 {
            assert!((s[i] - want[i]).abs() < 1e-15);
        }
        assert_eq!(soft_threshold(&v, 0.0), v);
    }

    #[test]
    fn scalar_reference_solution() {
        let sigma = DMatrix::<f64>::from_element(1, 1, 1.0);
        let xt = DVector::from_element(1, 3.0);
        let x = prox_grad_reference(&sigma, &xt, 2.0, 1e-12, 1000).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-10);
        let x0 = prox_grad_reference(&sigma, &xt, 0.0, 1e-12, 1000).unwrap();
        assert_eq!(x0, xt);
    }

    #[test]
    fn sadm1_first_average() {
        let mut st = AveragedIterate::new(
            DVector::from_element(1, 3.0),
            DVector::zeros(1),
            DVector::zeros(1),
        );
        let x0 = st.x.clone();
        sadm1_step(&mut st, &DVector::from_element(1, 1.0), 0.5, 2.0, 0.1, 1.0).unwrap();
        let want = (&x0 + &st.x * 2.0) / 3.0;
        assert!((&st.x_bar - want).amax() < 1e-14);
        assert_eq!(st.y_bar, st.y);
    }

    #[test]
    fn sadm0_stationary_residual() {
        let x = DVector::from_vec(vec![1.0, -2.0]);
        let mut st = AveragedIterate::new(x.clone(), x.clone(), DVector::zeros(2));
        let l = DVector::from_vec(vec![0.3, 0.7]);
        let s = l.dot(&x);
        sadm0_step(&mut st, &l, s, 5.0, 0.0, 10.0).unwrap();
        assert!((&st.x - &x).amax() < 1e-15);
    }

    #[test]
    fn dsa_rejects_bad_gamma() {
        let a = DMatrix::<f64>::identity(2, 2);
        assert!(Dsa::new(a, 1.0, 1.0, Some(0.0), 1.0).is_err());
    }
}
