//! Deterministic generalized ADMM on quadratic objectives, solved in closed form.
//! Serves as the contraction reference for SI-ADMM.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, check_dims, SpdSolver};
use crate::problem::{GMetric, Iterate};
use crate::rng::Stream;
use crate::si_admm::AlgorithmConfig;
use crate::Real;

/// `f(x) = x'H_f x / 2 + c_f'x`, `g(y) = y'H_g y / 2 + c_g'y`, `Ax + By = b`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticInstance<T: Real> {
    pub h_f: DMatrix<T>,
    pub c_f: DVector<T>,
    pub h_g: DMatrix<T>,
    pub c_g: DVector<T>,
    pub a_mat: DMatrix<T>,
    pub b_mat: DMatrix<T>,
    pub b_vec: DVector<T>,
}

impl<T: Real> QuadraticInstance<T> {
    pub fn new(
        h_f: DMatrix<T>,
        c_f: DVector<T>,
        h_g: DMatrix<T>,
        c_g: DVector<T>,
        a_mat: DMatrix<T>,
        b_mat: DMatrix<T>,
        b_vec: DVector<T>,
    ) -> Result<Self> {
        let (n, m, p) = (a_mat.ncols(), b_mat.ncols(), a_mat.nrows());
        check_dims("H_f", h_f.nrows(), n)?;
        check_dims("c_f", c_f.len(), n)?;
        check_dims("H_g", h_g.nrows(), m)?;
        check_dims("c_g", c_g.len(), m)?;
        check_dims("rows of B", b_mat.nrows(), p)?;
        check_dims("b", b_vec.len(), p)?;
        if !linalg::is_pd(&h_f) {
            return Err(Error::NotPositiveDefinite("H_f".into()));
        }
        if !linalg::is_psd(&h_g) {
            return Err(Error::NotPositiveDefinite("H_g must be PSD".into()));
        }
        Ok(Self { h_f, c_f, h_g, c_g, a_mat, b_mat, b_vec })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.a_mat.ncols(), self.b_mat.ncols(), self.a_mat.nrows())
    }

    /// Solves the KKT system
    /// `[H_f 0 -A'; 0 H_g -B'; A B 0] [x; y; lambda] = [-c_f; -c_g; b]`.
    pub fn kkt_solution(&self) -> Result<Iterate<T>> {
        let (n, m, p) = self.dims();
        let d = n + m + p;
        let mut k = DMatrix::zeros(d, d);
        k.view_mut((0, 0), (n, n)).copy_from(&self.h_f);
        k.view_mut((n, n), (m, m)).copy_from(&self.h_g);
        k.view_mut((0, n + m), (n, p)).copy_from(&(-self.a_mat.transpose()));
        k.view_mut((n, n + m), (m, p)).copy_from(&(-self.b_mat.transpose()));
        k.view_mut((n + m, 0), (p, n)).copy_from(&self.a_mat);
        k.view_mut((n + m, n), (p, m)).copy_from(&self.b_mat);
        let mut rhs = DVector::zeros(d);
        rhs.rows_mut(0, n).copy_from(&(-&self.c_f));
        rhs.rows_mut(n, m).copy_from(&(-&self.c_g));
        rhs.rows_mut(n + m, p).copy_from(&self.b_vec);
        let sol = k.lu().solve(&rhs).ok_or_else(|| Error::Singular("KKT matrix".into()))?;
        Ok(Iterate {
            x: sol.rows(0, n).into_owned(),
            y: sol.rows(n, m).into_owned(),
            lambda: sol.rows(n + m, p).into_owned(),
        })
    }

    /// `mu_f = lmin(H_f)`, `L_f = lmax(H_f)`, `sigma_g = lmin(H_g)`, `L_g = lmax(H_g)`.
    pub fn moduli(&self) -> (T, T, T, T) {
        let (mu_f, l_f) = linalg::sym_extremes(&self.h_f);
        let (s_g, l_g) = linalg::sym_extremes(&self.h_g);
        (mu_f, l_f, s_g.max(T::zero()), l_g)
    }

    /// Random instance: Hessians with eigenvalues log-uniform in `[1, 100]`
    /// (or `H_g = 0`), coupling matrices as requested, `c_f, c_g, b` standard normal.
    pub fn random(n: usize, m: usize, p: usize, spec: RandomSpec, stream: &mut Stream) -> Result<Self> {
        let h_f = random_spd(n, 1.0, 100.0, stream);
        let h_g = if spec.g_strongly_convex {
            random_spd(m, 1.0, 100.0, stream)
        } else {
            DMatrix::zeros(m, m)
        };
        let a_mat = spec.a.build(p, n, stream);
        let b_mat = spec.b.build(p, m, stream);
        let c_f = gaussian_vec(n, stream);
        let c_g = gaussian_vec(m, stream);
        let b_vec = gaussian_vec(p, stream);
        Self::new(h_f, c_f, h_g, c_g, a_mat, b_mat, b_vec)
    }
}

/// Coupling-matrix family for random instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coupling {
    Identity,
    NegIdentity,
    /// `U diag(s) V'` with `s` uniform in `[1, 10]`: full rank, well conditioned.
    Random,
}

impl Coupling {
    fn build<T: Real>(self, rows: usize, cols: usize, stream: &mut Stream) -> DMatrix<T> {
        match self {
            Coupling::Identity => DMatrix::identity(rows, cols),
            Coupling::NegIdentity => -DMatrix::identity(rows, cols),
            Coupling::Random => {
                let u: DMatrix<T> = random_orthogonal(rows, stream);
                let v: DMatrix<T> = random_orthogonal(cols, stream);
                let mut s = DMatrix::zeros(rows, cols);
                for i in 0..rows.min(cols) {
                    s[(i, i)] = T::lit(stream.uniform(1.0, 10.0));
                }
                u * s * v.transpose()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomSpec {
    pub a: Coupling,
    pub b: Coupling,
    pub g_strongly_convex: bool,
}

fn gaussian_vec<T: Real>(n: usize, stream: &mut Stream) -> DVector<T> {
    DVector::from_fn(n, |_, _| T::lit(stream.normal()))
}

fn random_orthogonal<T: Real>(n: usize, stream: &mut Stream) -> DMatrix<T> {
    let g = DMatrix::from_fn(n, n, |_, _| T::lit(stream.normal()));
    g.qr().q()
}

/// `V diag(e) V'` with `e` log-uniform in `[lo, hi]`.
pub fn random_spd<T: Real>(n: usize, lo: f64, hi: f64, stream: &mut Stream) -> DMatrix<T> {
    let v: DMatrix<T> = random_orthogonal(n, stream);
    let e = DVector::from_fn(n, |_, _| T::lit((stream.uniform(lo.ln(), hi.ln())).exp()));
    let m = &v * DMatrix::from_diagonal(&e) * v.transpose();
    (&m + m.transpose()) * T::lit(0.5)
}

/// Pre-factored g-ADMM iteration for one instance and configuration.
#[derive(Debug, Clone)]
pub struct ExactAdmm<T: Real> {
    inst: QuadraticInstance<T>,
    rho: T,
    gamma: T,
    p: DMatrix<T>,
    q: DMatrix<T>,
    solve_y: SpdSolver<T>,
    solve_x: SpdSolver<T>,
}

impl<T: Real> ExactAdmm<T> {
    pub fn new(inst: &QuadraticInstance<T>, cfg: &AlgorithmConfig<T>) -> Result<Self> {
        let (n, m, _) = inst.dims();
        cfg.validate(n, m)?;
        let sy = &inst.h_g + inst.b_mat.tr_mul(&inst.b_mat) * cfg.rho + &cfg.q;
        let sx = &inst.h_f + inst.a_mat.tr_mul(&inst.a_mat) * cfg.rho + &cfg.p;
        Ok(Self {
            inst: inst.clone(),
            rho: cfg.rho,
            gamma: cfg.gamma,
            p: cfg.p.clone(),
            q: cfg.q.clone(),
            solve_y: SpdSolver::new(sy, "H_g + rho B'B + Q")?,
            solve_x: SpdSolver::new(sx, "H_f + rho A'A + P")?,
        })
    }

    pub fn step(&self, u: &Iterate<T>) -> Iterate<T> {
        let i = &self.inst;
        // (H_g + rho B'B + Q) y = B'lambda - c_g - rho B'(A x_k - b) + Q y_k
        let w = (&i.a_mat * &u.x - &i.b_vec) * self.rho - &u.lambda;
        let mut ry = i.b_mat.tr_mul(&w);
        ry.neg_mut();
        ry -= &i.c_g;
        ry.gemv(T::one(), &self.q, &u.y, T::one());
        let y = self.solve_y.solve(&ry);
        // (H_f + rho A'A + P) x = A'lambda - c_f - rho A'(B y_{k+1} - b) + P x_k
        let w = (&i.b_mat * &y - &i.b_vec) * self.rho - &u.lambda;
        let mut rx = i.a_mat.tr_mul(&w);
        rx.neg_mut();
        rx -= &i.c_f;
        rx.gemv(T::one(), &self.p, &u.x, T::one());
        let x = self.solve_x.solve(&rx);
        let r = &i.a_mat * &x + &i.b_mat * &y - &i.b_vec;
        let lambda = &u.lambda - r * (self.gamma * self.rho);
        Iterate { x, y, lambda }
    }
}

/// One g-ADMM iteration with exact minimizers.
pub fn exact_admm_step<T: Real>(inst: &QuadraticInstance<T>, cfg: &AlgorithmConfig<T>, u_k: &Iterate<T>) -> Result<Iterate<T>> {
    Ok(ExactAdmm::new(inst, cfg)?.step(u_k))
}

/// Checks the step-size conditions under which the G-norm contraction holds:
/// `P != 0` and `(2 - gamma) P > (gamma - 1) rho A'A`, or `P = 0` and `gamma = 1`.
pub fn check_step_condition<T: Real>(a_mat: &DMatrix<T>, cfg: &AlgorithmConfig<T>) -> Result<()> {
    let p_zero = cfg.p.iter().all(|v| *v == T::zero());
    if p_zero {
        if cfg.gamma == T::one() {
            return Ok(());
        }
        return Err(Error::StepCondition(format!("P = 0 requires gamma = 1, got {}", cfg.gamma)));
    }
    let two = T::lit(2.0);
    let lhs = &cfg.p * (two - cfg.gamma) - a_mat.tr_mul(a_mat) * ((cfg.gamma - T::one()) * cfg.rho);
    if linalg::is_pd(&lhs) {
        Ok(())
    } else {
        Err(Error::StepCondition("(2 - gamma) P - (gamma - 1) rho A'A is not positive definite".into()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport<T: Real> {
    pub delta: T,
    /// `|u_k - u*|_G^2` for `k = 0..=num_iters`.
    pub errors: Vec<T>,
    /// `errors[k+1] / errors[k]`, `None` once `errors[k]` is below the rounding floor.
    pub ratios: Vec<Option<T>>,
    /// Every defined ratio is at most `1/(1+delta) + 1e-10`.
    pub passed: bool,
    /// The G-distance never increased (up to the same floor).
    pub monotone: bool,
}

impl<T: Real> ContractionReport<T> {
    pub fn max_ratio(&self) -> Option<T> {
        self.ratios.iter().flatten().copied().reduce(|a, b| a.max(b))
    }
}

/// Runs `num_iters` exact iterations from `u0` and tests
/// `|u_{k+1} - u*|_G^2 <= |u_k - u*|_G^2 / (1 + delta)` at every step.
///
/// Ratios are reported only while `|u_k - u*|_G^2` exceeds `1e6 eps` times the
/// scale of the problem; below that the quotient is rounding noise.
pub fn contraction_check<T: Real>(
    inst: &QuadraticInstance<T>,
    cfg: &AlgorithmConfig<T>,
    delta: T,
    u0: &Iterate<T>,
    num_iters: usize,
) -> Result<ContractionReport<T>> {
    if !(delta > T::zero()) {
        return Err(Error::InvalidParameter(format!("delta = {delta} must be positive")));
    }
    check_step_condition(&inst.a_mat, cfg)?;
    let admm = ExactAdmm::new(inst, cfg)?;
    let u_star = inst.kkt_solution()?;
    let metric = GMetric::from_config(&inst.a_mat, cfg)?;
    let mut errors = Vec::with_capacity(num_iters + 1);
    let mut u = u0.clone();
    errors.push(metric.g_dist_sq(&u, &u_star)?);
    for _ in 0..num_iters {
        u = admm.step(&u);
        errors.push(metric.g_dist_sq(&u, &u_star)?);
    }
    let scale = metric.g_norm_sq(&u_star)? + errors[0];
    let floor = T::default_epsilon() * T::lit(1e6) * scale;
    let bound = T::one() / (T::one() + delta) + T::lit(1e-10);
    let mut passed = true;
    let mut monotone = true;
    let ratios = errors
        .windows(2)
        .map(|w| {
            if w[0] <= floor || w[0] == T::zero() {
                None
            } else {
                let r = w[1] / w[0];
                passed &= r <= bound;
                monotone &= r <= T::one() + T::lit(1e-10);
                Some(r)
            }
        })
        .collect();
    Ok(ContractionReport { delta, errors, ratios, passed, monotone })
}
