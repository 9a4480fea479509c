mod common;

use std::sync::Arc;

use common::*;
use nalgebra::{DMatrix, DVector};
use siadmm::exact_admm::{random_spd, Coupling, QuadraticInstance, RandomSpec};
use siadmm::problem::{grad_l1_tilde, grad_l2_tilde, kkt_residual, L1Prox, QuadraticOracle};
use siadmm::synthetic::{gen_distreg, gen_lasso, DistRegParams, LassoParams};
use siadmm::{
    AlgorithmConfig, GComponent, GMetric, GradientOracle, Iterate, ProblemConstants, StochasticProblem, Stream,
};

fn identity_split(n: usize, f: QuadraticOracle<f64>, g: GComponent<f64>, mu_f: f64, sigma_g: f64) -> StochasticProblem<f64> {
    let consts = ProblemConstants {
        mu_f,
        l_f: mu_f,
        sigma_g,
        l_g: sigma_g,
        v1_x: 0.0,
        v2_x: 0.0,
        v1_y: 0.0,
        v2_y: 0.0,
    };
    StochasticProblem::new(
        DMatrix::identity(n, n),
        -DMatrix::identity(n, n),
        DVector::zeros(n),
        Arc::new(f),
        g,
        consts,
    )
    .unwrap()
}

#[test]
fn g_norm_of_zero_is_zero() {
    let m = GMetric::new(DMatrix::identity(3, 3), DMatrix::identity(2, 2), 2.0).unwrap();
    assert_eq!(m.g_norm_sq(&Iterate::zeros(3, 2, 4)).unwrap(), 0.0);
}

#[test]
fn g_norm_hand_value() {
    let m = GMetric::new(DMatrix::identity(2, 2), DMatrix::identity(1, 1), 1.0).unwrap();
    let u = Iterate::new(DVector::from_vec(vec![1.0, 1.0]), DVector::from_vec(vec![2.0]), DVector::from_vec(vec![3.0]));
    assert_eq!(m.g_norm_sq(&u).unwrap(), 15.0);
}

#[test]
fn g_norm_matches_dense_block_assembly() {
    let mut s = Stream::from_seed(11);
    for _ in 0..50 {
        let (n, m, p) = (5, 3, 4);
        let a = gauss_mat(n, n, &mut s);
        let p_hat = a.tr_mul(&a);
        let b = gauss_mat(m, 2, &mut s);
        let q = &b * b.transpose();
        let rg = s.uniform(0.1, 10.0);
        let metric = GMetric::new(p_hat.clone(), q.clone(), rg).unwrap();
        let u = Iterate::new(gauss_vec(n, &mut s), gauss_vec(m, &mut s), gauss_vec(p, &mut s));
        let d = n + m + p;
        let mut g = DMatrix::zeros(d, d);
        g.view_mut((0, 0), (n, n)).copy_from(&p_hat);
        g.view_mut((n, n), (m, m)).copy_from(&q);
        for i in 0..p {
            g[(n + m + i, n + m + i)] = 1.0 / rg;
        }
        let mut z = DVector::zeros(d);
        z.rows_mut(0, n).copy_from(&u.x);
        z.rows_mut(n, m).copy_from(&u.y);
        z.rows_mut(n + m, p).copy_from(&u.lambda);
        let dense = z.dot(&(&g * &z));
        assert!(rel_err(metric.g_norm_sq(&u).unwrap(), dense) <= 1e-12);
    }
}

#[test]
fn g_norm_rejects_mismatched_dimensions() {
    let m = GMetric::new(DMatrix::identity(2, 2), DMatrix::identity(1, 1), 1.0).unwrap();
    assert!(m.g_norm_sq(&Iterate::zeros(3, 1, 1)).is_err());
}

#[test]
fn lagrangian_gradients_vanish_at_kkt() {
    let mut s = Stream::from_seed(3);
    let spec = RandomSpec { a: Coupling::Random, b: Coupling::Random, g_strongly_convex: true };
    for _ in 0..20 {
        let inst = QuadraticInstance::<f64>::random(4, 4, 4, spec, &mut s).unwrap();
        let prob = stochastic_quadratic(&inst, 0.0);
        let u = inst.kkt_solution().unwrap();
        let cfg = AlgorithmConfig::new(3.0, 4, 4)
            .with_p(random_spd(4, 0.5, 5.0, &mut s))
            .with_q(random_spd(4, 0.5, 5.0, &mut s));
        let gx = grad_l1_tilde(&prob, &cfg, &u.x, &u.y, &u.lambda, &u.x, &mut s).unwrap();
        let gy = grad_l2_tilde(&prob, &cfg, &u.x, &u.y, &u.lambda, &u.y, &mut s).unwrap();
        assert!(gx.amax() <= 1e-9, "{}", gx.amax());
        assert!(gy.amax() <= 1e-9, "{}", gy.amax());
    }
}

#[test]
fn x_gradient_hand_expansion() {
    let n = 3;
    let f = QuadraticOracle::new(DMatrix::identity(n, n) * 2.0, DVector::zeros(n), 0.0);
    let g = GComponent::Prox(Arc::new(L1Prox { dim: n, weight: 0.0 }));
    let prob = identity_split(n, f, g, 2.0, 0.0);
    let cfg = AlgorithmConfig::new(1.0, n, n);
    let x = DVector::from_element(n, 1.0);
    let z = DVector::zeros(n);
    let out = grad_l1_tilde(&prob, &cfg, &x, &z, &z, &x, &mut Stream::from_seed(0)).unwrap();
    assert_eq!(out, &x * 3.0);
}

#[test]
fn y_gradient_hand_expansion() {
    let n = 3;
    let f = QuadraticOracle::new(DMatrix::identity(n, n), DVector::zeros(n), 0.0);
    let gy = QuadraticOracle::new(DMatrix::identity(n, n) * 2.0, DVector::zeros(n), 0.0);
    let prob = identity_split(n, f, GComponent::Stochastic(Arc::new(gy)), 1.0, 2.0);
    let cfg = AlgorithmConfig::new(1.0, n, n);
    let y = DVector::from_vec(vec![1.0, -2.0, 0.5]);
    let z = DVector::zeros(n);
    let out = grad_l2_tilde(&prob, &cfg, &z, &y, &z, &y, &mut Stream::from_seed(0)).unwrap();
    assert_eq!(out, &y * 3.0);
}

#[test]
fn y_gradient_needs_an_oracle() {
    let n = 2;
    let f = QuadraticOracle::new(DMatrix::identity(n, n), DVector::zeros(n), 0.0);
    let g = GComponent::Prox(Arc::new(L1Prox { dim: n, weight: 1.0 }));
    let prob = identity_split(n, f, g, 1.0, 0.0);
    let cfg = AlgorithmConfig::new(1.0, n, n);
    let z = DVector::zeros(n);
    assert!(grad_l2_tilde(&prob, &cfg, &z, &z, &z, &z, &mut Stream::from_seed(0)).is_err());
}

/// Sampled augmented Lagrangian at a fixed draw `(l, s)`.
fn l_tilde(
    prob: &StochasticProblem<f64>,
    l: &DVector<f64>,
    s: f64,
    x: &DVector<f64>,
    y: &DVector<f64>,
    lambda: &DVector<f64>,
    rho: f64,
) -> f64 {
    let r = &prob.a_mat * x + &prob.b_mat * y - &prob.b_vec;
    (l.dot(x) - s).powi(2) - lambda.dot(&r) + 0.5 * rho * r.norm_squared()
}

fn quad(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    v.dot(&(m * v))
}

#[test]
fn x_gradient_matches_finite_differences() {
    let mut s = Stream::from_seed(21);
    let n = 6;
    let inst = gen_distreg::<f64>(DistRegParams::new(n), &mut s).unwrap();
    let prob = inst.problem().unwrap();
    let oracle = inst.oracle_x();
    for _ in 0..20 {
        let rho = s.uniform(0.5, 20.0);
        let p = random_spd(n, 0.1, 5.0, &mut s);
        let cfg = AlgorithmConfig::new(rho, n, n).with_p(p.clone());
        let (x, y, lam, xa) = (gauss_vec(n, &mut s), gauss_vec(n, &mut s), gauss_vec(n, &mut s), gauss_vec(n, &mut s));
        let draw = Stream::from_seed(s.next_index(1 << 30) as u64);
        let mut l = DVector::zeros(n);
        let sv = oracle.sample(&mut draw.clone(), &mut l);
        let g = grad_l1_tilde(&prob, &cfg, &x, &y, &lam, &xa, &mut draw.clone()).unwrap();
        let phi = |x: &DVector<f64>| l_tilde(&prob, &l, sv, x, &y, &lam, rho) + 0.5 * quad(&p, &(x - &xa));
        let h = 1e-3;
        let fd = DVector::from_fn(n, |i, _| {
            let mut e = DVector::zeros(n);
            e[i] = h;
            (phi(&(&x + &e)) - phi(&(&x - &e))) / (2.0 * h)
        });
        assert!((&fd - &g).norm() <= 1e-6 * g.norm(), "{} vs {}", fd, g);
    }
}

#[test]
fn y_gradient_matches_finite_differences() {
    let mut s = Stream::from_seed(22);
    let n = 6;
    let inst = gen_distreg::<f64>(DistRegParams::new(n), &mut s).unwrap();
    let prob = inst.problem().unwrap();
    let oracle = inst.oracle_y();
    for _ in 0..20 {
        let rho = s.uniform(0.5, 20.0);
        let q = random_spd(n, 0.1, 5.0, &mut s);
        let cfg = AlgorithmConfig::new(rho, n, n).with_q(q.clone());
        let (x, y, lam, ya) = (gauss_vec(n, &mut s), gauss_vec(n, &mut s), gauss_vec(n, &mut s), gauss_vec(n, &mut s));
        let draw = Stream::from_seed(s.next_index(1 << 30) as u64);
        let mut l = DVector::zeros(n);
        let sv = oracle.sample(&mut draw.clone(), &mut l);
        let g = grad_l2_tilde(&prob, &cfg, &x, &y, &lam, &ya, &mut draw.clone()).unwrap();
        let phi = |y: &DVector<f64>| {
            let r = &prob.a_mat * &x + &prob.b_mat * y - &prob.b_vec;
            (l.dot(y) - sv).powi(2) - lam.dot(&r) + 0.5 * rho * r.norm_squared() + 0.5 * quad(&q, &(y - &ya))
        };
        let h = 1e-3;
        let fd = DVector::from_fn(n, |i, _| {
            let mut e = DVector::zeros(n);
            e[i] = h;
            (phi(&(&y + &e)) - phi(&(&y - &e))) / (2.0 * h)
        });
        assert!((&fd - &g).norm() <= 1e-6 * g.norm(), "{} vs {}", fd, g);
    }
}

#[test]
fn sample_mean_gradient_error_decays_like_inverse_root() {
    let mut s = Stream::from_seed(5);
    let n = 10;
    let inst = gen_lasso::<f64>(LassoParams::new(n), &mut s).unwrap();
    let prob = inst.problem().unwrap();
    let cfg = AlgorithmConfig::new(20.0, n, n);
    let (x, y, lam) = (gauss_vec(n, &mut s), gauss_vec(n, &mut s), gauss_vec(n, &mut s));
    let exact = {
        let r = &x - &y;
        inst.oracle().exact_gradient(&x).unwrap() - &lam + r * cfg.rho
    };
    let mut sum = DVector::zeros(n);
    let mut count = 0u64;
    let mut points = Vec::new();
    for target in [100u64, 10_000, 1_000_000] {
        while count < target {
            sum += grad_l1_tilde(&prob, &cfg, &x, &y, &lam, &x, &mut s).unwrap();
            count += 1;
        }
        let err = (&sum / count as f64 - &exact).norm();
        points.push(((count as f64).ln(), err.ln()));
    }
    let slope = (points[2].1 - points[0].1) / (points[2].0 - points[0].0);
    assert!((-0.75..=-0.25).contains(&slope), "slope {slope}");
}

#[test]
fn kkt_residual_of_generated_solutions() {
    let mut s = Stream::from_seed(8);
    for n in [5, 10, 20] {
        let lasso = gen_lasso::<f64>(LassoParams::new(n), &mut s).unwrap();
        let p = lasso.problem().unwrap();
        assert!(kkt_residual(&p, &lasso.kkt().as_iterate()).unwrap() <= 1e-8);
        let dr = gen_distreg::<f64>(DistRegParams::new(n), &mut s).unwrap();
        let p = dr.problem().unwrap();
        assert!(kkt_residual(&p, &dr.kkt().as_iterate()).unwrap() <= 1e-8);
    }
}

#[test]
fn kkt_residual_detects_perturbation() {
    let mut s = Stream::from_seed(9);
    let dr = gen_distreg::<f64>(DistRegParams::new(5), &mut s).unwrap();
    let p = dr.problem().unwrap();
    let mut u = dr.kkt().as_iterate();
    u.x[2] += 1e-3;
    assert!(kkt_residual(&p, &u).unwrap() > 0.0);
}

#[test]
fn kkt_residual_at_dense_linear_solve() {
    let mut s = Stream::from_seed(10);
    let spec = RandomSpec { a: Coupling::Random, b: Coupling::NegIdentity, g_strongly_convex: true };
    for _ in 0..20 {
        let inst = QuadraticInstance::<f64>::random(5, 4, 4, spec, &mut s).unwrap();
        let prob = stochastic_quadratic(&inst, 0.0);
        let u = inst.kkt_solution().unwrap();
        assert!(kkt_residual(&prob, &u).unwrap() <= 1e-8);
    }
}

#[test]
fn kkt_residual_needs_exact_gradients() {
    struct Opaque;
    impl GradientOracle<f64> for Opaque {
        fn dim(&self) -> usize {
            2
        }
        fn sample_gradient(&self, _: &DVector<f64>, _: &mut Stream, out: &mut DVector<f64>) {
            out.fill(0.0);
        }
    }
    let consts = ProblemConstants { mu_f: 1.0, l_f: 1.0, sigma_g: 0.0, l_g: 0.0, v1_x: 0.0, v2_x: 0.0, v1_y: 0.0, v2_y: 0.0 };
    let prob = StochasticProblem::new(
        DMatrix::identity(2, 2),
        -DMatrix::identity(2, 2),
        DVector::zeros(2),
        Arc::new(Opaque),
        GComponent::Prox(Arc::new(L1Prox { dim: 2, weight: 1.0 })),
        consts,
    )
    .unwrap();
    assert!(kkt_residual(&prob, &Iterate::zeros(2, 2, 2)).is_err());
}

#[test]
fn rank_deficient_coupling_is_rejected() {
    let f = QuadraticOracle::new(DMatrix::identity(2, 2), DVector::zeros(2), 0.0);
    let consts = ProblemConstants { mu_f: 1.0, l_f: 1.0, sigma_g: 0.0, l_g: 0.0, v1_x: 0.0, v2_x: 0.0, v1_y: 0.0, v2_y: 0.0 };
    let res = StochasticProblem::new(
        DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]),
        DMatrix::zeros(2, 2),
        DVector::zeros(2),
        Arc::new(f),
        GComponent::Prox(Arc::new(L1Prox { dim: 2, weight: 1.0 })),
        consts,
    );
    assert!(res.is_err());
}
