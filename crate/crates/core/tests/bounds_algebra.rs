mod common;

use common::*;
use nalgebra::{DMatrix, SymmetricEigen};
use siadmm::bounds::{
    bound_curve, complexity_bound, delta_simple, delta_strongly_convex_g, zeta_full, zeta_simple, BoundCertificate,
    BoundMode, SimpleZeta, Zeta,
};
use siadmm::exact_admm::random_spd;
use siadmm::synthetic::{gen_distreg, gen_lasso, DistRegParams, LassoParams};
use siadmm::{
    derive_constants, sample_schedule, solve, AlgorithmConfig, Iterate, StochasticProblem, Stream,
};

fn eig(m: &DMatrix<f64>) -> (f64, f64) {
    let e = SymmetricEigen::new(m.clone()).eigenvalues;
    (e.min(), e.max())
}

fn sv(m: &DMatrix<f64>) -> (f64, f64) {
    let s = m.clone().svd(false, false).singular_values;
    (s.min(), s.max())
}

#[test]
fn symmetric_gap_is_one() {
    let d: f64 = delta_simple(1.0, 1.0, 1.0, &DMatrix::identity(3, 3)).unwrap();
    assert!((d - 1.0).abs() <= 1e-15);
}

#[test]
fn lasso_gap_formula() {
    let mut s = Stream::from_seed(1);
    for n in [5, 10, 20] {
        let inst = gen_lasso::<f64>(LassoParams::new(n), &mut s).unwrap();
        let (lmin, lmax) = eig(&inst.sigma);
        for rho in [1.0, 20.0, 50.0] {
            let want = 2.0 / (rho / (2.0 * lmin) + 2.0 * lmax / rho);
            let got = delta_simple(2.0 * lmin, 2.0 * lmax, rho, &DMatrix::identity(n, n)).unwrap();
            assert!(rel_err(got, want) <= 1e-12);
        }
    }
}

#[test]
fn gap_matches_singular_value_path() {
    let mut s = Stream::from_seed(2);
    for _ in 0..50 {
        let a = gauss_mat(5, 8, &mut s);
        let (mu, l, rho) = (s.uniform(0.1, 2.0), s.uniform(2.0, 10.0), s.uniform(0.5, 20.0));
        let (smin, smax) = sv(&a);
        let want = 2.0 / (rho * smax * smax / mu + l / (rho * smin * smin));
        assert!(rel_err(delta_simple(mu, l, rho, &a).unwrap(), want) <= 1e-10);
    }
}

#[test]
fn rank_deficient_coupling_has_no_gap() {
    let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
    assert!(delta_simple(1.0, 1.0, 1.0, &a).is_err());
}

#[test]
fn strongly_convex_g_gap() {
    let inst = gen_distreg::<f64>(DistRegParams::new(8), &mut Stream::from_seed(3)).unwrap();
    let (lmin, _) = eig(&inst.sigma);
    let rho = 20.0;
    let q = DMatrix::identity(8, 8) * rho;
    let d0 = delta_simple(inst.mu(), inst.l(), rho, &inst.a_mat).unwrap();
    let got = delta_strongly_convex_g(inst.mu(), inst.l(), 2.0 * lmin, rho, &inst.a_mat, &q).unwrap();
    assert!(rel_err(got, d0.min(4.0 * lmin / rho)) <= 1e-12);
    let big = delta_strongly_convex_g(inst.mu(), inst.l(), 1e12, rho, &inst.a_mat, &q).unwrap();
    assert_eq!(big, d0);
    let tiny = delta_strongly_convex_g(inst.mu(), inst.l(), 1e-9, rho, &inst.a_mat, &q).unwrap();
    assert!(rel_err(tiny, 2e-9 / rho) <= 1e-12);
    assert!(delta_strongly_convex_g(1.0, 1.0, 1.0, 1.0, &DMatrix::identity(2, 2), &DMatrix::zeros(2, 2)).is_err());
}

#[test]
fn gap_monotone_in_moduli() {
    let mut s = Stream::from_seed(4);
    for _ in 0..100 {
        let a = gauss_mat(3, 5, &mut s);
        let (mu, rho) = (s.uniform(0.1, 5.0), s.uniform(0.1, 50.0));
        let l = mu * s.uniform(1.0, 20.0);
        let d = delta_simple(mu, l, rho, &a).unwrap();
        let h = 1e-3;
        assert!(delta_simple(mu * (1.0 + h), l * (1.0 + h), rho, &a).unwrap() > delta_simple(mu, l * (1.0 + h), rho, &a).unwrap());
        assert!(delta_simple(mu, l * (1.0 + h), rho, &a).unwrap() < d);
    }
}

/// `gamma^2 / (2 c gamma - 1 - gamma^2 M / K) + K b_hat` and `a_hat`, from first principles.
struct Rate {
    h: f64,
    k: f64,
    a_hat: f64,
}

fn rate(c: f64, l: f64, v1: f64, r: f64, gamma: f64) -> Rate {
    let m = l * l + v1 * (1.0 + 1.0 / r);
    let k = (gamma * gamma * m / (2.0 * c * gamma - 1.0)).ceil() as usize + 1;
    let a = |i: usize| {
        let g = gamma / i as f64;
        1.0 - 2.0 * c * g + g * g * m
    };
    let a_hat: f64 = (1..k).map(a).product();
    let b_hat = if k == 2 {
        gamma * gamma
    } else {
        let mut sum = 0.0;
        for i in 1..=k - 2 {
            let tail: f64 = (i + 1..k).map(a).product();
            sum += (gamma / i as f64).powi(2) * tail;
        }
        sum + (gamma / (k - 1) as f64).powi(2)
    };
    let h = gamma * gamma / (2.0 * c * gamma - 1.0 - gamma * gamma * m / k as f64) + k as f64 * b_hat;
    Rate { h, k: k as f64, a_hat }
}

fn p_hat(prob: &StochasticProblem<f64>, cfg: &AlgorithmConfig<f64>) -> DMatrix<f64> {
    &cfg.p + prob.a_mat.transpose() * &prob.a_mat * cfg.rho
}

#[test]
fn simple_zeta_matches_transcription() {
    let mut s = Stream::from_seed(5);
    for _ in 0..20 {
        let n = 3 + s.next_index(8);
        let inst = gen_lasso::<f64>(LassoParams::new(n), &mut s).unwrap();
        let prob = inst.problem().unwrap();
        let rho = s.uniform(5.0, 60.0);
        let r = s.uniform(0.5, 2.0);
        let cfg = AlgorithmConfig::new(rho, n, n).with_r(r);
        let consts = derive_constants(&prob, &cfg).unwrap();
        let delta = consts.delta.unwrap();
        let z = zeta_simple(&consts, &prob, &cfg, delta, inst.x_star.norm_squared()).unwrap();

        let (lmin_s, lmax_s) = eig(&inst.sigma);
        let (cx, lx) = (2.0 * lmin_s + rho, 2.0 * lmax_s + rho);
        let rt = rate(cx, lx, inst.v1_x, r, 1.0 / cx);
        let (pmin, pmax) = eig(&p_hat(&prob, &cfg));
        let c12 = rt.h * inst.v1_x * (1.0 + r) * 2.0 / (pmin * (1.0 + delta))
            + rt.k * rt.a_hat * (2.0 / pmin) * (1.0 + 1.0 / (1.0 + delta));
        let c11 = rt.h * (inst.v1_x * (1.0 + r) * 2.0 * inst.x_star.norm_squared() + inst.v2_x);
        let factor = pmax + rho * sv(&prob.a_mat).1.powi(2);
        for (got, want) in [(z.c12_x, c12), (z.c11_x, c11), (z.zeta2, factor * c12), (z.zeta1, factor * c11)] {
            assert!(rel_err(got, want) <= 1e-12, "{got} vs {want}");
        }
    }
}

#[test]
fn simple_zeta_without_multiplicative_noise() {
    let inst = gen_lasso::<f64>(LassoParams::new(6), &mut Stream::from_seed(6)).unwrap();
    let mut prob = inst.problem().unwrap();
    prob.constants.v1_x = 0.0;
    let cfg = AlgorithmConfig::new(20.0, 6, 6);
    let consts = derive_constants(&prob, &cfg).unwrap();
    let z = zeta_simple(&consts, &prob, &cfg, consts.delta.unwrap(), inst.x_star.norm_squared()).unwrap();
    assert!(rel_err(z.c11_x, consts.sa_x.h().unwrap() * inst.v2_x) <= 1e-15);
}

fn full_setup(seed: u64) -> (StochasticProblem<f64>, AlgorithmConfig<f64>, f64) {
    let mut s = Stream::from_seed(seed);
    let n = 2 + s.next_index(5);
    let inst = gen_distreg::<f64>(DistRegParams::new(n), &mut s).unwrap();
    let prob = inst.problem().unwrap();
    let cfg = AlgorithmConfig::new(s.uniform(1.0, 40.0), n, n)
        .with_q(random_spd(n, 1.0, 10.0, &mut s))
        .with_p(random_spd(n, 0.1, 3.0, &mut s))
        .with_gamma(s.uniform(0.5, 1.0))
        .with_r(s.uniform(0.5, 2.0))
        .with_eta(0.95);
    (prob, cfg, s.uniform(0.001, 0.5))
}

#[test]
fn full_zeta_matches_transcription() {
    for seed in 0..30 {
        let (prob, cfg, delta) = full_setup(100 + seed);
        let consts = derive_constants(&prob, &cfg).unwrap();
        let kkt = prob.known_kkt.clone().unwrap();
        let z = zeta_full(&prob, &cfg, &consts, delta, &kkt.x_star, &kkt.y_star).unwrap();

        let k = prob.constants;
        let (rho, gam, r) = (cfg.rho, cfg.gamma, cfg.r);
        let ph = p_hat(&prob, &cfg);
        let (pmin, pmax) = eig(&ph);
        let (qmin, qmax) = eig(&cfg.q);
        let cx = k.mu_f + pmin;
        let lx = k.l_f + pmax;
        let hy = prob.b_mat.transpose() * &prob.b_mat * rho + &cfg.q;
        let (hymin, hymax) = eig(&hy);
        let (cy, ly) = (k.sigma_g + hymin, k.l_g + hymax);
        let rx = rate(cx, lx, k.v1_x, r, 1.0 / cx);
        let ry = rate(cy, ly, k.v1_y, r, 1.0 / cy);
        let ata = sv(&prob.a_mat).1.powi(2);
        let btb = sv(&prob.b_mat).1.powi(2);
        let atb = sv(&(prob.a_mat.transpose() * &prob.b_mat)).1;
        let kap = (rho / cx * atb).powi(2);
        let od = 1.0 / (1.0 + delta);

        let c1x = 2.0 * pmax + 4.0 * rho * gam * ata;
        let c12x_bar = rx.h * k.v1_x * (1.0 + r) * 3.0 / (pmin * (1.0 + delta)) + rx.k * rx.a_hat * 3.0 / pmin * (1.0 + od);
        let c12x_hat = rx.h * k.v1_x * 3.0 * (1.0 + r) * kap + 3.0 * rx.k * rx.a_hat * kap;
        let c12y = ry.h * k.v1_y * (1.0 + r) * 2.0 / (qmin * (1.0 + delta)) + ry.k * ry.a_hat * 2.0 / qmin * (1.0 + od);
        let c1y = 2.0 * pmax * kap + qmax + 4.0 * kap * rho * gam * ata + 2.0 * rho * gam * btb;
        let c11x_bar = rx.h * (k.v1_x * (1.0 + r) * 3.0 * kkt.x_star.norm_squared() + k.v2_x);
        let c11y = ry.h * (k.v1_y * (1.0 + r) * 2.0 * kkt.y_star.norm_squared() + k.v2_y);
        let pairs = [
            (z.c1_x, c1x),
            (z.c12_x_bar, c12x_bar),
            (z.c12_x_hat, c12x_hat),
            (z.c12_y, c12y),
            (z.c1_y, c1y),
            (z.c11_x_bar, c11x_bar),
            (z.c11_y, c11y),
            (z.zeta2_x, c1x * c12x_bar),
            (z.zeta2_y, c1y * c12y),
            (z.zeta2_xy, c1x * c12x_hat * c12y),
            (z.zeta1_x, c1x * c11x_bar),
            (z.zeta1_y, c1y * c11y),
            (z.zeta1_xy, c1x * c12x_hat * c11y),
        ];
        for (i, (got, want)) in pairs.iter().enumerate() {
            assert!(rel_err(*got, *want) <= 1e-12, "seed {seed} constant {i}: {got} vs {want}");
        }
    }
}

#[test]
fn full_zeta_decouples_without_b() {
    let mut s = Stream::from_seed(7);
    let base = well_conditioned(3, &mut s);
    let inst = siadmm::exact_admm::QuadraticInstance::new(
        base.h_f.clone(),
        base.c_f.clone(),
        base.h_g.clone(),
        base.c_g.clone(),
        DMatrix::identity(3, 3),
        DMatrix::zeros(3, 3),
        base.b_vec.clone(),
    )
    .unwrap();
    let mut prob = stochastic_quadratic(&inst, 0.5);
    prob.constants.v1_x = 0.3;
    prob.constants.v1_y = 0.2;
    let q = random_spd(3, 1.0, 5.0, &mut s);
    let cfg = AlgorithmConfig::new(2.0, 3, 3).with_q(q.clone()).with_eta(0.9);
    let consts = derive_constants(&prob, &cfg).unwrap();
    let kkt = prob.known_kkt.clone().unwrap();
    let z = zeta_full(&prob, &cfg, &consts, 0.1, &kkt.x_star, &kkt.y_star).unwrap();
    assert!(rel_err(z.c1_y, eig(&q).1) <= 1e-12);
    assert_eq!(z.c12_x_hat, 0.0);
    assert_eq!((z.zeta2_xy, z.zeta1_xy), (0.0, 0.0));
}

#[test]
fn constants_finite_and_nonnegative_under_fuzz() {
    let mut s = Stream::from_seed(8);
    for i in 0..200 {
        if i % 2 == 0 {
            let n = 2 + s.next_index(10);
            let mut p = LassoParams::new(n);
            p.sigma_l2 = s.uniform(0.5, 10.0);
            p.sigma_s2 = s.uniform(0.0, 10.0);
            let inst = gen_lasso::<f64>(p, &mut s).unwrap();
            let prob = inst.problem().unwrap();
            let cfg = AlgorithmConfig::new(s.uniform(1.0, 100.0), n, n).with_r(s.uniform(0.2, 5.0));
            let consts = derive_constants(&prob, &cfg).unwrap();
            let z = zeta_simple(&consts, &prob, &cfg, consts.delta.unwrap(), inst.x_star.norm_squared()).unwrap();
            for v in [z.c11_x, z.c12_x, z.zeta1, z.zeta2] {
                assert!(v.is_finite() && v >= 0.0);
            }
        } else {
            let (prob, cfg, delta) = full_setup(1000 + i);
            let consts = derive_constants(&prob, &cfg).unwrap();
            let kkt = prob.known_kkt.clone().unwrap();
            let z = zeta_full(&prob, &cfg, &consts, delta, &kkt.x_star, &kkt.y_star).unwrap();
            for v in [z.c1_x, z.c12_x_bar, z.c12_x_hat, z.c12_y, z.c1_y, z.c11_x_bar, z.c11_y] {
                assert!(v.is_finite() && v >= 0.0);
            }
            let (a, b, c, d) = Zeta::Full(z).parts();
            assert!([a, b, c, d].iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }
}

fn lasso_certificate(rho: f64, t: f64) -> (BoundCertificate<f64>, f64, StochasticProblem<f64>, AlgorithmConfig<f64>) {
    let inst = gen_lasso::<f64>(LassoParams::new(10), &mut Stream::from_seed(1)).unwrap();
    let prob = inst.problem().unwrap();
    let cfg = AlgorithmConfig::new(rho, 10, 10).with_t(t);
    let consts = derive_constants(&prob, &cfg).unwrap();
    let cert = BoundCertificate::for_problem(&prob, &cfg, &consts).unwrap();
    // u0 = 0, P = 0, gamma = 1: |u0 - u*|_G^2 = rho |x*|^2 + |lambda*|^2 / rho
    let r0 = rho * inst.x_star.norm_squared() + inst.lambda_star.norm_squared() / rho;
    (cert, r0, prob, cfg)
}

#[test]
fn noiseless_curve_is_pure_contraction() {
    let (mut cert, r0, _, _) = lasso_certificate(50.0, 1000.0);
    cert.zeta = Zeta::Simple(SimpleZeta { c11_x: 0.0, c12_x: 0.0, zeta1: 0.0, zeta2: 0.0 });
    let curve = bound_curve(&cert, r0, 200, BoundMode::Certified).unwrap();
    for (k, v) in curve.iter().enumerate() {
        let want = r0 / (1.0 + cert.delta).powi(k as i32);
        assert!(rel_err(*v, want) <= 1e-12);
    }
}

#[test]
fn lasso_certified_curve_is_finite_and_eventually_decreasing() {
    let (cert, r0, _, _) = lasso_certificate(50.0, 1000.0);
    let curve = bound_curve(&cert, r0, 3000, BoundMode::Certified).unwrap();
    assert!(curve.iter().all(|v| v.is_finite() && *v >= 0.0));
    let peak = (0..curve.len()).max_by(|a, b| curve[*a].total_cmp(&curve[*b])).unwrap();
    assert!(peak < 1000);
    assert!(curve[peak..].windows(2).all(|w| w[1] < w[0]));
    assert!(curve[3000] < 1e-30);
}

#[test]
fn negative_start_is_rejected() {
    let (cert, _, _, _) = lasso_certificate(50.0, 1000.0);
    assert!(bound_curve(&cert, -1.0, 5, BoundMode::Certified).is_err());
}

#[test]
fn larger_batches_tighten_the_curve() {
    let (cert, r0, _, _) = lasso_certificate(20.0, 1000.0);
    for scale in [2.0, 10.0, 1e3] {
        let tight = cert.clone().with_t(1000.0 * scale);
        let a = bound_curve(&cert, r0, 400, BoundMode::Certified).unwrap();
        let b = bound_curve(&tight, r0, 400, BoundMode::Certified).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| y <= x));
    }
}

#[test]
fn adaptive_split_never_exceeds_fixed_split() {
    let (cert, _, _, _) = lasso_certificate(50.0, 1000.0);
    let mut s = Stream::from_seed(9);
    for _ in 0..1000 {
        let k = s.next_index(200);
        let e = s.uniform(0.0, 1e3);
        let r0 = s.uniform(0.01, 100.0);
        assert!(cert.step(k, e) <= cert.step_fixed(k, e, r0) * (1.0 + 1e-12));
    }
}

#[test]
fn complexity_bound_is_linear_in_inverse_eps() {
    let (cert, r0, _, _) = lasso_certificate(50.0, 1e7);
    let small = [1e-5, 1e-6, 1e-7];
    for eps in small {
        let a = complexity_bound(&cert, r0, None, eps).unwrap();
        let b = complexity_bound(&cert, r0, None, eps / 2.0).unwrap();
        assert!(rel_err(b.n_bound - a.n_bound, a.leading / eps) <= 1e-2);
    }
    let grid: [f64; 5] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
    let pts: Vec<(f64, f64)> = grid
        .iter()
        .map(|e| ((1.0 / e).ln(), complexity_bound(&cert, r0, None, *e).unwrap().n_bound.ln()))
        .collect();
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((0.95..=1.05).contains(&slope), "slope {slope}");
}

#[test]
fn complexity_bound_preconditions() {
    let (cert, r0, _, _) = lasso_certificate(50.0, 1e7);
    assert!(complexity_bound(&cert, r0, None, 0.5).is_err());
    assert!(complexity_bound(&cert, r0, Some(0.9), 0.1).is_err());
    let mut slow = cert.clone();
    slow.eta = 1.0 / (1.0 + cert.delta);
    assert!(complexity_bound(&slow, r0, None, 0.1).is_err());
}

#[test]
fn outer_bound_reaches_eps_on_the_curve() {
    for t in [1e5, 1e7] {
        let (cert, r0, _, _) = lasso_certificate(50.0, t);
        for eps in [1e-1, 1e-3, 1e-6] {
            let cb = complexity_bound(&cert, r0, None, eps).unwrap();
            let curve = bound_curve(&cert, r0, cb.k_bar, BoundMode::Certified).unwrap();
            assert!(curve[cb.k_bar] <= eps);
        }
    }
}

#[test]
fn sample_count_up_to_first_crossing_is_within_n_bound() {
    let (cert, r0, prob, cfg) = lasso_certificate(50.0, 1e5);
    let consts = derive_constants(&prob, &cfg).unwrap();
    for eps in [1e-1, 1e-2, 1e-3] {
        let cb = complexity_bound(&cert, r0, None, eps).unwrap();
        let curve = bound_curve(&cert, r0, cb.k_bar, BoundMode::Certified).unwrap();
        let first = curve.iter().position(|v| *v <= eps).unwrap();
        let used: f64 = (0..first).map(|k| (sample_schedule(consts.k_x(), cfg.t, consts.eta, k).unwrap() - 1) as f64).sum();
        assert!(used <= cb.n_bound, "{used} > {}", cb.n_bound);
    }
    // the schedule sum is what a run actually consumes
    let short = cfg.clone().with_max_outer(3);
    let rec = solve(&prob, &short, &Iterate::zeros(10, 10, 10), &mut Stream::from_seed(0)).unwrap();
    let want: u64 = (0..3).map(|k| sample_schedule(consts.k_x(), short.t, consts.eta, k).unwrap() - 1).sum();
    assert_eq!(rec.last().samples_x, want);
}

#[test]
fn iterate_divisor_matches_curvature() {
    let (cert, _, prob, cfg) = lasso_certificate(50.0, 1000.0);
    assert!(rel_err(cert.iterate_divisor, eig(&p_hat(&prob, &cfg)).0) <= 1e-12);
}
