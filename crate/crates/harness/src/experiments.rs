//! Experiment drivers. Every driver is a pure function of its [`Settings`]
//! apart from the wall-clock columns.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use siadmm::baselines::{run_dsa_with_oracles, run_sadm_with_oracle, DsaConfig, Report, SadmConfig, SadmVariant};
use siadmm::bounds::{bound_curve, complexity_bound, iterate_bound, BoundMode, Zeta};
use siadmm::exact_admm::{contraction_check, random_spd, Coupling, QuadraticInstance, RandomSpec};
use siadmm::sa::{compute_rate_constants, q_bound, sa_run};
use siadmm::si_admm::contraction_gap;
use siadmm::synthetic::{gen_distreg, gen_lasso, DistRegParams, LassoParams};
use siadmm::{
    bounds, derive_constants, solve_with, Certificate, Config, DerivedConstants, DistReg, IterateF64, Lasso, Problem,
    Record, SeedKey, Stream,
};

use crate::config::{ExperimentKind, ProblemKind, Sadm0Eta, Settings};
use crate::curve::{align_by_iteration, align_by_samples, ErrorCurve, Metric};
use crate::output::{ExperimentReport, Table};
use crate::{at_seed, HarnessError, Result};

const PHASE_INSTANCE: u64 = 0;
const PHASE_SAMPLES: u64 = 1;

/// Outer iterations of exact ADMM per contraction instance.
pub const CONTRACTION_ITERS: usize = 50;

/// Noisy scalar SA problem: `f(x) = (x - 1)^2 / 2`, sampled gradient
/// `(x - 1) + a xi_1 x + s xi_2`, so `E|w|^2 = a^2 x^2 + s^2`.
pub const SA_NOISY_A: f64 = 0.5;
pub const SA_NOISY_S: f64 = 1.0;
pub const SA_NOISY_START: f64 = 5.0;
/// Zero-noise SA problem: `f(x) = (x - x*)' H (x - x*) / 2`, `H = diag(1, 2, 4)`.
pub const SA_DET_DIAG: [f64; 3] = [1.0, 2.0, 4.0];
pub const SA_DET_XSTAR: [f64; 3] = [1.0, -1.0, 2.0];
pub const SA_DET_STEPS: usize = 10_000;

fn key(s: &Settings) -> SeedKey {
    SeedKey::new(s.seed).experiment(s.kind.id())
}

/// The sample stream shared by every algorithm of one replication.
pub fn sample_stream(s: &Settings, rep: usize) -> Stream {
    key(s).replication(rep as u64).phase(PHASE_SAMPLES).stream()
}

pub fn lasso_instance(s: &Settings) -> Result<Lasso> {
    lasso_instance_attempt(s, 0)
}

/// Redraws attempts beyond the first use distinct instance streams.
fn lasso_instance_attempt(s: &Settings, attempt: u64) -> Result<Lasso> {
    let params = LassoParams {
        n: s.n,
        sigma_l2: s.sigma_l2,
        sigma_s2: s.sigma_s2,
        gamma_bar: s.gamma_bar,
        bernoulli_p: s.bernoulli_p,
    };
    let mut st = key(s).algorithm(attempt).phase(PHASE_INSTANCE).stream();
    at_seed(st.seed(), gen_lasso(params, &mut st))
}

pub fn distreg_instance(s: &Settings) -> Result<DistReg> {
    let params = DistRegParams { n: s.n, sigma_l2: s.sigma_l2, sigma_s2: s.sigma_s2 };
    let mut st = key(s).phase(PHASE_INSTANCE).stream();
    at_seed(st.seed(), gen_distreg(params, &mut st))
}

fn base_config(s: &Settings, n: usize) -> Config {
    let mut cfg = Config::new(s.rho, n, n).with_t(s.t).with_max_outer(s.max_outer);
    if let Some(b) = s.budget {
        cfg = cfg.with_budget(b);
    }
    cfg
}

/// SI-ADMM configuration for the LASSO: `P = Q = 0`, `gamma = 1`.
pub fn lasso_config(s: &Settings, prob: &Problem) -> Result<(Config, DerivedConstants<f64>)> {
    let mut cfg = base_config(s, prob.dim_x());
    if let Some(eta) = s.eta {
        cfg = cfg.with_eta(eta);
    }
    let consts = derive_constants(prob, &cfg)?;
    Ok((cfg, consts))
}

/// SI-ADMM configuration for distributed regression: `Q = rho I`, and
/// `eta = 1/(1+delta)` unless overridden.
pub fn distreg_config(s: &Settings, prob: &Problem) -> Result<(Config, DerivedConstants<f64>)> {
    let n = prob.dim_y();
    let cfg = base_config(s, prob.dim_x()).with_q(DMatrix::identity(n, n) * s.rho);
    let eta = match s.eta {
        Some(eta) => eta,
        None => {
            let d = contraction_gap(prob, &cfg)
                .ok_or_else(|| HarnessError::Config("no contraction gap for this configuration".into()))?;
            1.0 / (1.0 + d)
        }
    };
    let cfg = cfg.with_eta(eta);
    let consts = derive_constants(prob, &cfg)?;
    Ok((cfg, consts))
}

fn counter() -> Arc<AtomicU64> {
    Arc::new(AtomicU64::new(0))
}

/// Harness-side draw counts must equal what the run reports.
fn audit(rec: &Record, x: &AtomicU64, y: &AtomicU64) -> Result<()> {
    let last = rec.last();
    let (cx, cy) = (x.load(Ordering::Relaxed), y.load(Ordering::Relaxed));
    if cx != last.samples_x || cy != last.samples_y {
        return Err(HarnessError::Check(format!(
            "{} (seed {}): counted {cx} + {cy} draws, reported {} + {}",
            rec.algorithm, rec.seed, last.samples_x, last.samples_y
        )));
    }
    Ok(())
}

/// The records of one algorithm across replications.
#[derive(Debug, Clone)]
pub struct AlgorithmOutcome {
    pub name: String,
    pub records: Vec<Record>,
    pub curve: ErrorCurve,
}

impl AlgorithmOutcome {
    fn new(records: Vec<Record>, metric: Metric) -> Result<Self> {
        let refs: Vec<&Record> = records.iter().collect();
        let curve = align_by_samples(&refs, metric)?;
        Ok(Self { name: curve.algorithm.clone(), records, curve })
    }

    pub fn final_errors(&self, metric: Metric) -> Vec<f64> {
        self.records.iter().filter_map(|r| metric.of(r.last())).collect()
    }

    pub fn wall_ms(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.wall_ms).collect()
    }
}

/// Runs `one(rep)` for every replication in parallel and regroups the results
/// by algorithm. Aggregation follows the replication index, so it does not
/// depend on scheduling.
fn replicate<F>(s: &Settings, metric: Metric, one: F) -> Result<Vec<AlgorithmOutcome>>
where
    F: Fn(usize) -> Result<Vec<Record>> + Sync,
{
    let per_rep = (0..s.replications).into_par_iter().map(&one).collect::<Vec<_>>();
    let per_rep = per_rep.into_iter().collect::<Result<Vec<_>>>()?;
    let num_algs = per_rep.first().map_or(0, |v| v.len());
    let mut by_alg: Vec<Vec<Record>> = vec![Vec::with_capacity(s.replications); num_algs];
    for recs in per_rep {
        for (i, r) in recs.into_iter().enumerate() {
            by_alg[i].push(r);
        }
    }
    by_alg.into_iter().map(|recs| AlgorithmOutcome::new(recs, metric)).collect()
}

fn record_stride(steps: u64) -> u64 {
    (steps / 4000).max(1)
}

/// LASSO comparison: SI-ADMM, then SADM0 and SADM1 run for exactly as many
/// samples as SI-ADMM drew, all from the same per-replication stream.
pub fn run_lasso_replications(s: &Settings, inst: &Lasso) -> Result<Vec<AlgorithmOutcome>> {
    let (cfg, consts) = lasso_config(s, &inst.problem()?)?;
    let u0 = IterateF64::zeros(inst.n, inst.n, inst.n);
    let sadm0 = match s.sadm0_eta {
        Sadm0Eta::Sqrt => (SadmVariant::Sadm0Sqrt { scale: s.sadm0_scale }, Report::Last),
        Sadm0Eta::Linear => (SadmVariant::Sadm0Linear { mu: inst.mu_f() }, Report::Average),
    };
    let sadm1 = (SadmVariant::Sadm1 { mu_f: inst.mu_f() }, Report::Average);
    replicate(s, Metric::X, |rep| {
        let base = sample_stream(s, rep);
        let seed = base.seed();
        let (cx, cy) = (counter(), counter());
        let prob = inst.problem_with_oracle(Arc::new(inst.oracle().with_counter(cx.clone())))?;
        let si = at_seed(seed, solve_with(&prob, &cfg, &consts, &u0, &mut base.clone()))?;
        audit(&si, &cx, &cy)?;
        let steps = si.last().samples_total();
        let mut out = vec![si];
        for (variant, report) in [sadm0, sadm1] {
            let (cx, cy) = (counter(), counter());
            let oracle = inst.oracle().with_counter(cx.clone());
            let scfg = SadmConfig { rho: s.rho, variant, report, num_steps: steps, record_stride: record_stride(steps) };
            let rec = at_seed(seed, run_sadm_with_oracle(inst, &oracle, &scfg, &mut base.clone()))?;
            audit(&rec, &cx, &cy)?;
            out.push(rec);
        }
        Ok(out)
    })
}

/// Distributed regression comparison: SI-ADMM, then DSA for each ball factor
/// (and without the ball) for as many sample batches as SI-ADMM drew.
pub fn run_distreg_replications(s: &Settings, inst: &DistReg) -> Result<Vec<AlgorithmOutcome>> {
    let (cfg, consts) = distreg_config(s, &inst.problem()?)?;
    let n = inst.n;
    let u0 = IterateF64::zeros(n, n, n);
    let mut gammas: Vec<Option<f64>> = s.dsa_gammas.iter().map(|g| Some(*g)).collect();
    if s.dsa_projection_free {
        gammas.push(None);
    }
    replicate(s, Metric::Xy, |rep| {
        let base = sample_stream(s, rep);
        let seed = base.seed();
        let (cx, cy) = (counter(), counter());
        let prob = inst.problem_with_oracles(
            Arc::new(inst.oracle_x().with_counter(cx.clone())),
            Arc::new(inst.oracle_y().with_counter(cy.clone())),
        )?;
        let si = at_seed(seed, solve_with(&prob, &cfg, &consts, &u0, &mut base.clone()))?;
        audit(&si, &cx, &cy)?;
        let batches = si.last().samples_x;
        let mut out = vec![si];
        for gamma in &gammas {
            let (cx, cy) = (counter(), counter());
            let ox = inst.oracle_x().with_counter(cx.clone());
            let oy = inst.oracle_y().with_counter(cy.clone());
            let dcfg = DsaConfig { gamma: *gamma, num_steps: batches, record_stride: record_stride(batches) };
            let rec = at_seed(seed, run_dsa_with_oracles(inst, &ox, &oy, &dcfg, &mut base.clone()))?;
            audit(&rec, &cx, &cy)?;
            out.push(rec);
        }
        Ok(out)
    })
}

/// Most instance draws [`nondegenerate_lasso`] makes.
pub const MAX_INSTANCE_DRAWS: u64 = 100;

/// The first LASSO instance, in draw order, whose starting error `|x*|^2`
/// exceeds `min_start_err`, with the number of draws it took.
pub fn nondegenerate_lasso(s: &Settings, min_start_err: f64) -> Result<(Lasso, u64)> {
    for attempt in 0..MAX_INSTANCE_DRAWS {
        let inst = lasso_instance_attempt(s, attempt)?;
        if inst.x_star.norm_squared() > min_start_err {
            return Ok((inst, attempt + 1));
        }
    }
    Err(HarnessError::Config(format!(
        "no LASSO instance with |x*|^2 > {min_start_err} in {MAX_INSTANCE_DRAWS} draws"
    )))
}

/// SI-ADMM alone, for the bound and complexity experiments. A LASSO instance
/// is redrawn until its starting error exceeds `min_start_err`.
fn run_si_only(
    s: &Settings,
    problem: ProblemKind,
    min_start_err: f64,
) -> Result<(Problem, Config, DerivedConstants<f64>, Vec<Record>)> {
    let (prob, cfg, consts, make): (_, _, _, Box<dyn Fn(&Arc<AtomicU64>, &Arc<AtomicU64>) -> siadmm::Result<Problem> + Sync>) =
        match problem {
            ProblemKind::Lasso => {
                let (inst, _) = nondegenerate_lasso(s, min_start_err)?;
                let prob = inst.problem()?;
                let (cfg, consts) = lasso_config(s, &prob)?;
                let make = move |cx: &Arc<AtomicU64>, _: &Arc<AtomicU64>| {
                    inst.problem_with_oracle(Arc::new(inst.oracle().with_counter(cx.clone())))
                };
                (prob, cfg, consts, Box::new(make))
            }
            ProblemKind::Distreg => {
                let inst = distreg_instance(s)?;
                let prob = inst.problem()?;
                let (cfg, consts) = distreg_config(s, &prob)?;
                let make = move |cx: &Arc<AtomicU64>, cy: &Arc<AtomicU64>| {
                    inst.problem_with_oracles(
                        Arc::new(inst.oracle_x().with_counter(cx.clone())),
                        Arc::new(inst.oracle_y().with_counter(cy.clone())),
                    )
                };
                (prob, cfg, consts, Box::new(make))
            }
        };
    let u0 = IterateF64::zeros(prob.dim_x(), prob.dim_y(), prob.dim_c());
    let per_rep = (0..s.replications)
        .into_par_iter()
        .map(|rep| {
            let mut st = sample_stream(s, rep);
            let (cx, cy) = (counter(), counter());
            let p = make(&cx, &cy)?;
            let rec = at_seed(st.seed(), solve_with(&p, &cfg, &consts, &u0, &mut st))?;
            audit(&rec, &cx, &cy)?;
            Ok(rec)
        })
        .collect::<Vec<Result<Record>>>();
    let records = per_rep.into_iter().collect::<Result<Vec<_>>>()?;
    Ok((prob, cfg, consts, records))
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn fmt(v: f64) -> String {
    v.to_string()
}

/// One row per algorithm: samples, time and final error.
fn comparison_table(outcomes: &[AlgorithmOutcome], metric: Metric) -> Table {
    let mut t = Table::new(
        "summary",
        &["algorithm", "samples_total", "median_wall_ms", "mean_wall_ms", "median_err", "mean_err"],
    );
    for o in outcomes {
        let errs = o.final_errors(metric);
        let ms = o.wall_ms();
        t.push(vec![
            o.name.clone(),
            o.records[0].last().samples_total().to_string(),
            fmt(median(&ms)),
            fmt(mean(&ms)),
            fmt(median(&errs)),
            fmt(mean(&errs)),
        ]);
    }
    t
}

fn compare_report(s: &Settings, outcomes: Vec<AlgorithmOutcome>, metric: Metric) -> ExperimentReport {
    let mut rep = ExperimentReport::default();
    rep.set("experiment", s.kind.name());
    rep.set("settings", s);
    rep.set("error_metric", metric.name());
    rep.tables.push(comparison_table(&outcomes, metric));
    for o in outcomes {
        for (i, r) in o.records.iter().enumerate() {
            rep.runs.push((format!("{}_rep{i}", o.name), r.clone()));
        }
        rep.curves.push(o.curve);
    }
    rep
}

fn record_constants(rep: &mut ExperimentReport, consts: &DerivedConstants<f64>) {
    rep.set("delta", consts.delta);
    rep.set("eta", consts.eta);
    rep.set("K_x", consts.k_x());
    rep.set("K_y", consts.k_y());
    rep.set("warnings", &consts.warnings);
}

pub fn lasso_compare(s: &Settings) -> Result<ExperimentReport> {
    let inst = lasso_instance(s)?;
    let (_, consts) = lasso_config(s, &inst.problem()?)?;
    let outcomes = run_lasso_replications(s, &inst)?;
    let mut rep = compare_report(s, outcomes, Metric::X);
    record_constants(&mut rep, &consts);
    rep.set("x_star", inst.x_star.as_slice());
    rep.set("f_star", inst.f_star);
    Ok(rep)
}

pub fn distreg_compare(s: &Settings) -> Result<ExperimentReport> {
    let inst = distreg_instance(s)?;
    let (_, consts) = distreg_config(s, &inst.problem()?)?;
    let outcomes = run_distreg_replications(s, &inst)?;
    let mut rep = compare_report(s, outcomes, Metric::Xy);
    record_constants(&mut rep, &consts);
    rep.set("initial_err", inst.z_star().norm_squared());
    rep.set("f_star", inst.f_star);
    Ok(rep)
}

/// Compare experiments dispatch here; the others have their own drivers.
pub fn run_replications(s: &Settings) -> Result<Vec<AlgorithmOutcome>> {
    match s.kind {
        ExperimentKind::LassoCompare => run_lasso_replications(s, &lasso_instance(s)?),
        ExperimentKind::DistregCompare => run_distreg_replications(s, &distreg_instance(s)?),
        _ => match s.problem {
            ProblemKind::Lasso => run_lasso_replications(s, &lasso_instance(s)?),
            ProblemKind::Distreg => run_distreg_replications(s, &distreg_instance(s)?),
        },
    }
}

/// Errors `e_1, ..., e_T` of one SA run of `num_steps` iterates.
fn sa_trajectory<G>(grad: G, x1: &DVector<f64>, x_star: &DVector<f64>, gamma0: f64, num_steps: usize, st: &mut Stream) -> Result<Vec<f64>>
where
    G: Fn(&DVector<f64>, &mut Stream, &mut DVector<f64>),
{
    let mut errs = Vec::with_capacity(num_steps);
    let last = sa_run(
        |x: &DVector<f64>, st: &mut Stream, g: &mut DVector<f64>| {
            errs.push((x - x_star).norm_squared());
            grad(x, st, g)
        },
        x1,
        gamma0,
        num_steps as u64,
        st,
    )?;
    errs.push((&last - x_star).norm_squared());
    Ok(errs)
}

/// SA with steps `1/(c k)` on a zero-noise quadratic (one run) and a noisy
/// scalar quadratic (mean over replications), against `Q / k`.
pub fn sa_rate(s: &Settings) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::default();
    rep.set("experiment", s.kind.name());
    rep.set("settings", s);

    // Zero noise.
    let h = DVector::from_row_slice(&SA_DET_DIAG);
    let x_star = DVector::from_row_slice(&SA_DET_XSTAR);
    let (c, l) = (h.min(), h.max());
    let det = compute_rate_constants(c, l, 0.0, 0.0, 1.0, 1.0 / c)?;
    let x1 = DVector::zeros(3);
    let e1 = x_star.norm_squared();
    let qd = q_bound(&det, e1, x_star.norm_squared())?;
    let mut st = key(s).phase(PHASE_SAMPLES).stream();
    let errs = sa_trajectory(
        |x, _, g| {
            g.copy_from(&(x - &x_star).component_mul(&h));
        },
        &x1,
        &x_star,
        1.0 / c,
        SA_DET_STEPS,
        &mut st,
    )?;
    let mut det_table = Table::new("deterministic", &["k", "e_k", "q_over_k", "holds"]);
    let mut det_ok = true;
    for (i, e) in errs.iter().enumerate() {
        let k = i + 1;
        let bound = (k >= det.k).then(|| qd.q / k as f64);
        let holds = bound.map(|b| *e <= b);
        det_ok &= holds.unwrap_or(true);
        det_table.push(vec![
            k.to_string(),
            fmt(*e),
            bound.map(fmt).unwrap_or_default(),
            holds.map(|h| h.to_string()).unwrap_or_default(),
        ]);
    }
    rep.set("deterministic_K", det.k);
    rep.set("deterministic_Q", qd.q);
    rep.set("deterministic_passed", det_ok);
    rep.tables.push(det_table);

    // Noisy scalar problem.
    let (a, sd) = (SA_NOISY_A, SA_NOISY_S);
    let noisy = compute_rate_constants(1.0, 1.0, a * a, sd * sd, 1.0, 1.0)?;
    let x_star = DVector::from_element(1, 1.0);
    let x1 = DVector::from_element(1, SA_NOISY_START);
    let qn = q_bound(&noisy, (SA_NOISY_START - 1.0).powi(2), 1.0)?;
    let checkpoints = [noisy.k, 10 * noisy.k, 100 * noisy.k];
    let steps = checkpoints[2];
    let runs = (0..s.replications)
        .into_par_iter()
        .map(|r| {
            let mut st = key(s).replication(r as u64).phase(PHASE_SAMPLES).algorithm(1).stream();
            let seed = st.seed();
            let grad = |x: &DVector<f64>, st: &mut Stream, g: &mut DVector<f64>| {
                let (z1, z2) = (st.normal(), st.normal());
                g[0] = (x[0] - 1.0) + a * z1 * x[0] + sd * z2;
            };
            sa_trajectory(grad, &x1, &x_star, 1.0, steps, &mut st).map_err(|source| HarnessError::Numerical {
                seed: Some(seed),
                source: match source {
                    HarnessError::Numerical { source, .. } => source,
                    other => siadmm::Error::InvalidParameter(other.to_string()),
                },
            })
        })
        .collect::<Vec<Result<Vec<f64>>>>();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let reps = runs.len() as f64;
    let mut noisy_table = Table::new("noisy", &["k", "mean_e", "stderr", "q_over_k", "ratio"]);
    let mut ratios = Vec::new();
    for k in 1..=steps {
        let vals: Vec<f64> = runs.iter().map(|r| r[k - 1]).collect();
        let m = mean(&vals);
        let var = if vals.len() > 1 {
            vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (reps - 1.0)
        } else {
            0.0
        };
        let q = (k >= noisy.k).then(|| qn.q / k as f64);
        if checkpoints.contains(&k) {
            ratios.push((k, m / q.unwrap()));
        }
        noisy_table.push(vec![
            k.to_string(),
            fmt(m),
            fmt((var / reps).sqrt()),
            q.map(fmt).unwrap_or_default(),
            q.map(|q| fmt(m / q)).unwrap_or_default(),
        ]);
    }
    let noisy_ok = ratios.iter().all(|(_, r)| *r <= 1.1);
    rep.set("noisy_K", noisy.k);
    rep.set("noisy_Q", qn.q);
    rep.set("noisy_ratios", &ratios);
    rep.set("noisy_passed", noisy_ok);
    rep.tables.push(noisy_table);
    rep.passed = Some(det_ok && noisy_ok);
    Ok(rep)
}

/// One contraction instance: `A = I` on even indices and a random full-rank
/// `A` on odd ones, `B = -I`, `P = 0`, `gamma = 1`.
pub fn contraction_instance(
    s: &Settings,
    index: usize,
    strongly_convex_g: bool,
) -> Result<(QuadraticInstance<f64>, Config, f64, IterateF64)> {
    let mut st = key(s).replication(index as u64).algorithm(strongly_convex_g as u64).phase(PHASE_INSTANCE).stream();
    let seed = st.seed();
    let n = 1 + st.next_index(s.max_dim);
    let a = if index.is_multiple_of(2) { Coupling::Identity } else { Coupling::Random };
    let spec = RandomSpec { a, b: Coupling::NegIdentity, g_strongly_convex: strongly_convex_g };
    let inst = at_seed(seed, QuadraticInstance::random(n, n, n, spec, &mut st))?;
    let (mu_f, l_f, sigma_g, _) = inst.moduli();
    let mut cfg = Config::new(s.rho, n, n);
    let delta = if strongly_convex_g {
        cfg = cfg.with_q(random_spd(n, 1.0, 10.0, &mut st));
        at_seed(seed, bounds::delta_strongly_convex_g(mu_f, l_f, sigma_g, s.rho, &inst.a_mat, &cfg.q))?
    } else {
        at_seed(seed, bounds::delta_simple(mu_f, l_f, s.rho, &inst.a_mat))?
    };
    let mut v = || DVector::from_fn(n, |_, _| st.normal());
    let u0 = IterateF64::new(v(), v(), v());
    Ok((inst, cfg, delta, u0))
}

/// Exact ADMM on random quadratics, in both contraction regimes.
pub fn contraction_test(s: &Settings) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::default();
    rep.set("experiment", s.kind.name());
    rep.set("settings", s);
    let jobs: Vec<(usize, bool)> = (0..s.replications).flat_map(|i| [(i, false), (i, true)]).collect();
    let rows = jobs
        .par_iter()
        .map(|&(i, sc)| {
            let (inst, cfg, delta, u0) = contraction_instance(s, i, sc)?;
            let r = contraction_check(&inst, &cfg, delta, &u0, CONTRACTION_ITERS)?;
            let checked = r.ratios.iter().flatten().count();
            Ok(vec![
                i.to_string(),
                if sc { "strongly-convex-g" } else { "simple" }.to_string(),
                inst.dims().0.to_string(),
                if i % 2 == 0 { "identity" } else { "random" }.to_string(),
                fmt(delta),
                fmt(1.0 / (1.0 + delta)),
                r.max_ratio().map(fmt).unwrap_or_default(),
                checked.to_string(),
                r.passed.to_string(),
            ])
        })
        .collect::<Vec<Result<Vec<String>>>>();
    let mut t = Table::new(
        "contraction",
        &["instance", "regime", "n", "coupling", "delta", "bound", "max_ratio", "checked_ratios", "passed"],
    );
    for r in rows {
        t.push(r?);
    }
    let failures = t.rows.iter().filter(|r| r[8] != "true").count();
    rep.set("instances", s.replications);
    rep.set("failures", failures);
    rep.passed = Some(failures == 0);
    rep.tables.push(t);
    Ok(rep)
}

fn certificate_json(cert: &Certificate) -> serde_json::Value {
    let (z2, z2xy, z1, z1xy) = cert.zeta.parts();
    serde_json::json!({
        "delta": cert.delta,
        "T": cert.t,
        "eta": cert.eta,
        "R": cert.r,
        "a_hat_x": cert.a_x,
        "b_hat_x": cert.b_x,
        "a_hat_y": cert.a_y,
        "b_hat_y": cert.b_y,
        "K_x": cert.k_x,
        "K_y": cert.k_y,
        "recursion": match cert.zeta { Zeta::Simple(_) => "simple", Zeta::Full(_) => "full" },
        "zeta2": z2,
        "zeta2_xy": z2xy,
        "zeta1": z1,
        "zeta1_xy": z1xy,
        "iterate_divisor": cert.iterate_divisor,
    })
}

/// Result of [`bound_dominance`].
#[derive(Debug, Clone)]
pub struct BoundCheck {
    pub cert: Certificate,
    pub records: Vec<Record>,
    pub mean_g: ErrorCurve,
    pub empirical: Vec<f64>,
    pub certified: Vec<f64>,
    /// Outer indices `k >= 1` at which the measured mean exceeds the empirical bound.
    pub violations: Vec<usize>,
}

/// Runs SI-ADMM replications and evaluates both bound modes against the
/// measured mean G-norm error.
pub fn bound_dominance(s: &Settings) -> Result<(BoundCheck, Problem, Config)> {
    let (prob, cfg, consts, records) = run_si_only(s, s.problem, -1.0)?;
    let cert = Certificate::for_problem(&prob, &cfg, &consts)?;
    let refs: Vec<&Record> = records.iter().collect();
    let mean_g = align_by_iteration(&refs, Metric::G)?;
    let means = mean_g.means();
    let num_outer = means.len() - 1;
    let empirical = bound_curve(&cert, means[0], num_outer, BoundMode::Empirical(&means))?;
    let certified = bound_curve(&cert, means[0], num_outer, BoundMode::Certified)?;
    let violations = (1..=num_outer).filter(|&k| !(means[k] <= empirical[k])).collect();
    Ok((BoundCheck { cert, records, mean_g, empirical, certified, violations }, prob, cfg))
}

pub fn bounds_experiment(s: &Settings) -> Result<ExperimentReport> {
    let (b, _, _) = bound_dominance(s)?;
    let mut rep = ExperimentReport::default();
    rep.set("experiment", s.kind.name());
    rep.set("settings", s);
    rep.set("certificate", certificate_json(&b.cert));
    let metric = if s.problem == ProblemKind::Lasso { Metric::X } else { Metric::Xy };
    let refs: Vec<&Record> = b.records.iter().collect();
    let iter_curve = align_by_iteration(&refs, metric)?;
    let emp_iter = iterate_bound(&b.cert, &b.empirical);
    let cert_iter = iterate_bound(&b.cert, &b.certified);
    let mut t = Table::new(
        "bound_curve",
        &[
            "k",
            "samples_total",
            "mean_err_u_G",
            "stderr_err_u_G",
            "empirical_bound",
            "certified_bound",
            "mean_iterate_err",
            "empirical_iterate_bound",
            "certified_iterate_bound",
        ],
    );
    for (k, p) in b.mean_g.points.iter().enumerate() {
        t.push(vec![
            k.to_string(),
            b.records[0].rows[k].samples_total().to_string(),
            fmt(p.mean),
            fmt(p.stderr),
            fmt(b.empirical[k]),
            fmt(b.certified[k]),
            fmt(iter_curve.points[k].mean),
            fmt(emp_iter[k]),
            fmt(cert_iter[k]),
        ]);
    }
    rep.tables.push(t);
    rep.set("iterate_metric", metric.name());
    rep.set("violations", &b.violations);
    let r0 = b.mean_g.points[0].mean;
    let mut nb = Vec::new();
    for &eps in &s.eps {
        match complexity_bound(&b.cert, r0, None, eps) {
            Ok(c) => nb.push(serde_json::json!({
                "eps": eps,
                "K_bar": c.k_bar,
                "N_bound": if c.n_bound.is_finite() { serde_json::json!(c.n_bound) } else { serde_json::json!("inf") },
                "ln_leading": c.ln_leading,
                "ln_W": c.ln_w,
            })),
            Err(e) => nb.push(serde_json::json!({ "eps": eps, "unavailable": e.to_string() })),
        }
    }
    rep.set("complexity", nb);
    for (i, r) in b.records.iter().enumerate() {
        rep.runs.push((format!("si-admm_rep{i}"), r.clone()));
    }
    rep.curves.push(b.mean_g);
    rep.curves.push(iter_curve);
    rep.passed = Some(b.violations.is_empty());
    Ok(rep)
}

/// Result of [`complexity_scaling`].
#[derive(Debug, Clone)]
pub struct Sweep {
    pub eps: Vec<f64>,
    /// Per replication and eps, the cumulative samples at the first outer
    /// iteration `k >= 1` with `|x_k - x*|^2 <= eps`; `None` if never reached.
    pub crossings: Vec<Vec<Option<u64>>>,
    /// Median over replications (infinite when most runs never cross).
    pub medians: Vec<f64>,
    /// Least-squares slope of `ln N` against `ln(1/eps)`.
    pub slope: f64,
    /// `N(eps)` of the certificate for the G-norm target `eps`, which implies
    /// `|x - x*|^2 <= eps / lmin(P_hat) <= eps` whenever `lmin(P_hat) >= 1`.
    pub n_bound: Vec<f64>,
    pub k_bar: Vec<usize>,
    pub iterate_divisor: f64,
    /// Instances drawn before one with `|x*|^2 > max eps` came up.
    pub instance_draws: u64,
    /// `|x_0 - x*|^2`
    pub start_err: f64,
}

fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let mx = mean(xs);
    let my = mean(ys);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

pub fn complexity_scaling(s: &Settings) -> Result<Sweep> {
    let max_eps = s.eps.iter().copied().fold(0.0, f64::max);
    let (_, draws) = nondegenerate_lasso(s, max_eps)?;
    let (prob, cfg, consts, records) = run_si_only(s, ProblemKind::Lasso, max_eps)?;
    let cert = Certificate::for_problem(&prob, &cfg, &consts)?;
    let r0 = records[0].rows[0]
        .err_u_g
        .ok_or_else(|| HarnessError::Check("SI-ADMM did not report the G-norm error".into()))?;
    let r0_x = records[0].rows[0].err_x.unwrap_or(f64::NAN);
    let crossings: Vec<Vec<Option<u64>>> = records
        .iter()
        .map(|r| {
            s.eps
                .iter()
                .map(|e| {
                    r.rows
                        .iter()
                        .skip(1)
                        .find(|row| row.err_x.is_some_and(|v| v <= *e))
                        .map(|row| row.samples_total())
                })
                .collect()
        })
        .collect();
    let medians: Vec<f64> = (0..s.eps.len())
        .map(|j| {
            let v: Vec<f64> = crossings.iter().map(|c| c[j].map_or(f64::INFINITY, |n| n as f64)).collect();
            median(&v)
        })
        .collect();
    let xs: Vec<f64> = s.eps.iter().map(|e| (1.0 / e).ln()).collect();
    let ys: Vec<f64> = medians.iter().map(|m| m.ln()).collect();
    let slope = ols_slope(&xs, &ys);
    let mut n_bound = Vec::new();
    let mut k_bar = Vec::new();
    for &e in &s.eps {
        let c = complexity_bound(&cert, r0, None, e)?;
        n_bound.push(c.n_bound);
        k_bar.push(c.k_bar);
    }
    Ok(Sweep {
        eps: s.eps.clone(),
        crossings,
        medians,
        slope,
        n_bound,
        k_bar,
        iterate_divisor: cert.iterate_divisor,
        instance_draws: draws,
        start_err: r0_x,
    })
}

pub fn complexity_sweep(s: &Settings) -> Result<ExperimentReport> {
    let sw = complexity_scaling(s)?;
    let mut rep = ExperimentReport::default();
    rep.set("experiment", s.kind.name());
    rep.set("settings", s);
    let mut t = Table::new("sweep", &["eps", "median_samples", "N_bound", "K_bar", "dominated"]);
    let mut dominated = true;
    for j in 0..sw.eps.len() {
        let d = sw.medians[j] <= sw.n_bound[j];
        dominated &= d;
        t.push(vec![fmt(sw.eps[j]), fmt(sw.medians[j]), fmt(sw.n_bound[j]), sw.k_bar[j].to_string(), d.to_string()]);
    }
    rep.tables.push(t);
    let mut c = Table::new("crossings", &["replication", "eps", "samples"]);
    for (r, row) in sw.crossings.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            c.push(vec![r.to_string(), fmt(sw.eps[j]), v.map(|n| n.to_string()).unwrap_or_default()]);
        }
    }
    rep.tables.push(c);
    rep.set("slope", sw.slope);
    rep.set("iterate_divisor", sw.iterate_divisor);
    rep.set("instance_draws", sw.instance_draws);
    rep.set("start_err_x", sw.start_err);
    rep.passed = Some(dominated && (0.8..=1.3).contains(&sw.slope));
    Ok(rep)
}

/// Runs the experiment named by `s.kind`.
pub fn run(s: &Settings) -> Result<ExperimentReport> {
    match s.kind {
        ExperimentKind::LassoCompare => lasso_compare(s),
        ExperimentKind::DistregCompare => distreg_compare(s),
        ExperimentKind::SaRate => sa_rate(s),
        ExperimentKind::ContractionTest => contraction_test(s),
        ExperimentKind::Bounds => bounds_experiment(s),
        ExperimentKind::ComplexitySweep => complexity_sweep(s),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_even_count_averages() {
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(median(&[5.0, 1.0, 3.0]), 3.0);
    }

    #[test]
    fn slope_of_exact_power_law() {
        let xs = [1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 + 1.25 * x).collect();
        assert!((ols_slope(&xs, &ys) - 1.25).abs() < 1e-14);
    }
}
