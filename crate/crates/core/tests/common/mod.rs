#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use siadmm::exact_admm::{random_spd, QuadraticInstance};
use siadmm::problem::QuadraticOracle;
use siadmm::{GComponent, KktPoint, ProblemConstants, StochasticProblem, Stream};

pub fn gauss_vec(n: usize, s: &mut Stream) -> DVector<f64> {
    DVector::from_fn(n, |_, _| s.normal())
}

pub fn gauss_mat(r: usize, c: usize, s: &mut Stream) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| s.normal())
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Quadratic `f`, `g` with Hessian spectra in `[1, 4]`, `A = I`, `B = -I`.
pub fn well_conditioned(n: usize, s: &mut Stream) -> QuadraticInstance<f64> {
    QuadraticInstance::new(
        random_spd(n, 1.0, 4.0, s),
        gauss_vec(n, s),
        random_spd(n, 1.0, 4.0, s),
        gauss_vec(n, s),
        DMatrix::identity(n, n),
        -DMatrix::identity(n, n),
        gauss_vec(n, s),
    )
    .unwrap()
}

/// The quadratic instance as a stochastic problem whose oracles add
/// `N(0, noise^2)` to every gradient coordinate.
pub fn stochastic_quadratic(inst: &QuadraticInstance<f64>, noise: f64) -> StochasticProblem<f64> {
    let (mu_f, l_f, sigma_g, l_g) = inst.moduli();
    let fx = QuadraticOracle::new(inst.h_f.clone(), inst.c_f.clone(), noise);
    let gy = QuadraticOracle::new(inst.h_g.clone(), inst.c_g.clone(), noise);
    let consts = ProblemConstants {
        mu_f,
        l_f,
        sigma_g,
        l_g,
        v1_x: 0.0,
        v2_x: fx.noise_second_moment(),
        v1_y: 0.0,
        v2_y: gy.noise_second_moment(),
    };
    let u = inst.kkt_solution().unwrap();
    StochasticProblem::new(
        inst.a_mat.clone(),
        inst.b_mat.clone(),
        inst.b_vec.clone(),
        Arc::new(fx),
        GComponent::Stochastic(Arc::new(gy)),
        consts,
    )
    .unwrap()
    .with_kkt(KktPoint { x_star: u.x, y_star: u.y, lambda_star: u.lambda })
    .unwrap()
}
