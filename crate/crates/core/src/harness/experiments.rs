//! Monte Carlo and grid experiments behind each experiment kind.

use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::Distribution;

use super::stats::fit_log_log;
use super::{replica_id, replicate, Criterion, ExperimentReport, ExperimentSpec, Kind, NamedSlope, MIN_REPLICAS};
use crate::diff_analysis::{control_cost, rate_diffusion, solve_fokker_planck, solve_linearized};
use crate::diff_sim::{
    coupling_gap, fluctuation_pairing, mckean_ensemble, simulate_controlled, simulate_interacting, DiffusionRun,
};
use crate::error::{Error, Result};
use crate::jump_analysis::{rate_i, rate_ibar, skeleton, solve_p};
use crate::jump_sim::{
    a_m, fluctuation_z, simulate_jump_with, simulate_tilted_with, sup_error_sq, CellControl, ControlConfig, JumpControl,
};
use crate::kernels::{GridConfig, KernelConfig, KernelPair};
use crate::model::config::ModelConfig;
use crate::model::{RateModel, SimplexVec};
use crate::path::PathVec;
use crate::rng::{stream, INITIAL_LANE, JUMP_LANE};
use crate::schwartz::TestFunction;

/// Time steps of the deterministic limit `p` used as the LLN/tilt reference.
const P_STEPS: usize = 4000;

/// Per-kind defaults filled in by [`ExperimentSpec::resolve`].
#[derive(Default)]
pub(crate) struct Defaults {
    pub replicas: Option<usize>,
    pub m_grid: Option<Vec<usize>>,
    pub theta: Option<f64>,
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub m_ref: Option<usize>,
    pub control_value: Option<f64>,
    pub test_function: Option<Vec<f64>>,
    pub model: Option<ModelConfig>,
    pub kernels: Option<KernelConfig>,
    pub control: Option<ControlConfig>,
    pub grid: Option<GridConfig>,
}

fn roundtrip_model() -> ModelConfig {
    let mut m = ModelConfig::birth_death(5, 1.0, 0.5, 0.8);
    m.initial = Some(vec![0.4, 0.3, 0.15, 0.1, 0.05]);
    m
}

pub(crate) fn defaults(kind: Kind) -> Defaults {
    match kind {
        Kind::Lln => Defaults {
            replicas: Some(200),
            m_grid: Some(vec![100, 400, 1600, 6400]),
            horizon: Some(1.0),
            model: Some(ModelConfig::two_state()),
            ..Defaults::default()
        },
        Kind::TiltLimit => Defaults {
            replicas: Some(100),
            m_grid: Some(vec![100, 1000, 10000]),
            theta: Some(0.25),
            horizon: Some(1.0),
            model: Some(ModelConfig::two_state()),
            control: Some(ControlConfig {
                horizon: 1.0,
                bins: 1,
                cells: vec![CellControl {
                    from: 1,
                    to: 2,
                    values: vec![1.0],
                }],
            }),
            ..Defaults::default()
        },
        Kind::CouplingScaling => Defaults {
            replicas: Some(100),
            m_grid: Some((7..=13).map(|e| 1usize << e).collect()),
            theta: Some(0.25),
            horizon: Some(1.0),
            dt: Some(1.0 / 256.0),
            m_ref: Some(1 << 16),
            control_value: Some(1.0),
            kernels: Some(KernelConfig::default_model()),
            ..Defaults::default()
        },
        Kind::CltScaling => Defaults {
            replicas: Some(200),
            m_grid: Some(vec![64, 256, 1024, 4096]),
            theta: Some(0.0),
            horizon: Some(1.0),
            dt: Some(1.0 / 64.0),
            m_ref: Some(1 << 16),
            test_function: Some(vec![0.0, 1.0]),
            kernels: Some(KernelConfig::default_model()),
            ..Defaults::default()
        },
        Kind::RateRoundtrip => Defaults {
            replicas: Some(5),
            horizon: Some(1.0),
            model: Some(roundtrip_model()),
            kernels: Some(KernelConfig::default_model()),
            grid: Some(GridConfig::default_grid()),
            ..Defaults::default()
        },
        Kind::LemmaSuite => Defaults::default(),
        Kind::InitialMoments => Defaults {
            replicas: Some(2000),
            m_grid: Some(vec![50, 200, 800, 3200]),
            model: Some({
                let mut m = ModelConfig::constant(vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]]);
                m.initial = Some(vec![0.5, 0.3, 0.2]);
                m
            }),
            ..Defaults::default()
        },
        Kind::Exactness => Defaults {
            replicas: Some(100_000),
            m_grid: Some((1..=6).collect()),
            horizon: Some(1.0),
            model: Some(ModelConfig::two_state()),
            ..Defaults::default()
        },
    }
}

fn model_of(spec: &ExperimentSpec) -> Result<(Arc<dyn RateModel>, SimplexVec)> {
    let cfg = spec
        .model
        .as_ref()
        .ok_or_else(|| Error::Config(format!("{:?} needs a [model]", spec.kind)))?;
    Ok((cfg.build()?, cfg.initial()?))
}

fn kernels_of(spec: &ExperimentSpec) -> Result<(KernelPair, f64)> {
    let cfg = spec
        .kernels
        .as_ref()
        .ok_or_else(|| Error::Config(format!("{:?} needs [kernels]", spec.kind)))?;
    Ok((cfg.kernels(), cfg.x0))
}

fn require<T: Copy>(v: Option<T>, name: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("missing {name}")))
}

/// Counts closest to `m·p` with the right total (largest remainders).
pub(crate) fn lattice_counts(p: &SimplexVec, m: usize) -> Vec<u32> {
    let exact: Vec<f64> = p.iter().map(|x| x * m as f64).collect();
    let mut counts: Vec<u32> = exact.iter().map(|x| x.floor() as u32).collect();
    let mut left = m as i64 - counts.iter().map(|&c| c as i64).sum::<i64>();
    let mut order: Vec<usize> = (0..exact.len()).collect();
    order.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left <= 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Initial law rounded to the `1/m` lattice by largest remainder.
pub fn lattice_start(p: &SimplexVec, m: usize) -> Result<SimplexVec> {
    SimplexVec::from_counts(&lattice_counts(p, m))
}

/// `E sup_t ‖μᵐ(t) − p(t)‖²` across the `m` grid and its log-log slope.
pub fn run_lln(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.require_replicas(
        MIN_REPLICAS,
        "the log-log slope needs a standard error well below the ±0.2 window",
    )?;
    let (model, p0) = model_of(spec)?;
    let t = spec.horizon();
    let p = solve_p(&*model, &p0, t, P_STEPS)?;
    let mut rep = ExperimentReport::new(spec)?;
    let mut samples = Vec::new();
    for &m in spec.m_grid() {
        let q0 = lattice_start(&p0, m)?;
        let vals = replicate(spec.replicas(), |r| {
            let mut rng = stream(spec.seed, replica_id(m, r), JUMP_LANE);
            sup_error_sq(&simulate_jump_with(&*model, m, &q0, t, &mut rng)?, &p)
        })?;
        rep.per_m(m, "sup_error_sq", &vals);
        samples.push(vals);
    }
    let fit = fit_log_log(spec.m_grid(), &samples, spec.seed);
    let tol = &spec.tolerances;
    rep.push(Criterion::within("lln slope", fit.slope, tol.lln_slope, tol.lln_slope_tol));
    rep.slopes.push(NamedSlope {
        name: "sup_error_sq".into(),
        fit,
    });
    Ok(rep)
}

/// `E sup_t ‖Z̄^{m,φ} − G₀(ψ)‖` for tilted runs with `a(m) = m^{−θ}`.
pub fn run_tilt_limit(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.require_replicas(MIN_REPLICAS, "monotonicity is judged in standard errors of the means")?;
    let (model, p0) = model_of(spec)?;
    let t = spec.horizon();
    let control: JumpControl = spec
        .control
        .as_ref()
        .ok_or_else(|| Error::Config("tilt-limit needs a [control]".into()))?
        .build(model.num_states())?;
    if (control.horizon() - t).abs() > 1e-12 {
        return Err(Error::Config(format!(
            "control horizon {} differs from T = {t}",
            control.horizon()
        )));
    }
    let p = solve_p(&*model, &p0, t, P_STEPS)?;
    let limit = skeleton(&*model, &p, &control)?;
    let mut rep = ExperimentReport::new(spec)?;
    rep.values.insert("limit_sup_norm".into(), limit.sup_norm());
    let mut means = Vec::new();
    for &m in spec.m_grid() {
        let a = a_m(m, spec.theta());
        control.check_thinning(1.0 / (a * (m as f64).sqrt()))?;
        let q0 = lattice_start(&p0, m)?;
        let vals = replicate(spec.replicas(), |r| {
            let mut rng = stream(spec.seed, replica_id(m, r), JUMP_LANE);
            let run = simulate_tilted_with(&*model, m, &q0, t, &control, a, &p, &mut rng)?;
            fluctuation_z(&run.path, &p, a)?.sup_distance(&limit)
        })?;
        means.push(rep.per_m(m, "sup_distance_to_limit", &vals));
    }
    let tol = &spec.tolerances;
    let ratio = means.last().unwrap().mean / means[0].mean;
    rep.push(Criterion::at_most("tilt final/initial mean", ratio, tol.tilt_final_ratio));
    let rise = means
        .windows(2)
        .map(|w| (w[1].mean - w[0].mean) / (w[0].std_error.powi(2) + w[1].std_error.powi(2)).sqrt())
        .fold(f64::NEG_INFINITY, f64::max);
    rep.push(Criterion::at_most(
        "tilt largest rise in standard errors",
        rise,
        tol.tilt_monotone_se,
    ));
    Ok(rep)
}

/// `E (1/m) Σ sup_t |X̃ᵢ − X̄ᵢ|²` for a constant control and its slope in `m`.
pub fn run_coupling_scaling(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.require_replicas(
        MIN_REPLICAS,
        "the log-log slope needs a standard error well below the ±0.3 window",
    )?;
    let (kernels, x0) = kernels_of(spec)?;
    let t = spec.horizon();
    let dt = require(spec.dt, "dt")?;
    let c = require(spec.control_value, "control_value")?;
    let theta = spec.theta();
    let reference = mckean_ensemble(&kernels, require(spec.m_ref, "m_ref")?, x0, t, dt, spec.seed, usize::MAX)?;
    let mut rep = ExperimentReport::new(spec)?;
    let mut samples = Vec::new();
    for &m in spec.m_grid() {
        let a = a_m(m, theta);
        let vals = replicate(spec.replicas(), |r| {
            let run = DiffusionRun::new(m, x0, t, dt, spec.seed).replica(replica_id(m, r));
            let ctl = simulate_controlled(&kernels, &run, a, &move |_: usize, _: f64, _: f64| c)?;
            coupling_gap(&ctl.path, &reference.drive(&run)?)
        })?;
        rep.per_m(m, "coupling_gap", &vals);
        samples.push(vals);
    }
    let fit = fit_log_log(spec.m_grid(), &samples, spec.seed);
    rep.push(Criterion::within(
        "coupling slope",
        fit.slope,
        -(1.0 - 2.0 * theta),
        spec.tolerances.coupling_slope_tol,
    ));
    rep.slopes.push(NamedSlope {
        name: "coupling_gap".into(),
        fit,
    });
    Ok(rep)
}

/// Second moment of `a(m)√m(⟨μᵐ(T), φ⟩ − ⟨μ(T), φ⟩)`; its log-log slope is
/// `−2θ`, flat at the central-limit scaling `θ = 0`.
pub fn run_clt_scaling(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.require_replicas(
        MIN_REPLICAS,
        "the log-log slope needs a standard error well below the ±0.3 window",
    )?;
    let (kernels, x0) = kernels_of(spec)?;
    let t = spec.horizon();
    let dt = require(spec.dt, "dt")?;
    let phi = TestFunction::from_hermite(spec.test_function.as_deref().unwrap_or(&[0.0, 1.0]));
    let reference = mckean_ensemble(&kernels, require(spec.m_ref, "m_ref")?, x0, t, dt, spec.seed, usize::MAX)?;
    let mut rep = ExperimentReport::new(spec)?;
    let mut samples = Vec::new();
    for &m in spec.m_grid() {
        let a = a_m(m, spec.theta());
        let vals = replicate(spec.replicas(), |r| {
            let run = DiffusionRun::new(m, x0, t, dt, spec.seed)
                .replica(replica_id(m, r))
                .record_every(usize::MAX);
            let path = simulate_interacting(&kernels, &run)?;
            let y = *fluctuation_pairing(&path, &reference, a, |x| phi.eval(x))?.last().unwrap();
            Ok(y * y)
        })?;
        rep.per_m(m, "pairing_second_moment", &vals);
        samples.push(vals);
    }
    let fit = fit_log_log(spec.m_grid(), &samples, spec.seed);
    rep.push(Criterion::within(
        "fluctuation second-moment slope",
        fit.slope,
        -2.0 * spec.theta(),
        spec.tolerances.clt_slope_tol,
    ));
    rep.slopes.push(NamedSlope {
        name: "pairing_second_moment".into(),
        fit,
    });
    Ok(rep)
}

/// Per-bin gradient control `ψ_ij = w_j − w_i` with `w` uniform in `[−1, 1]`.
pub(crate) fn gradient_control(k: usize, horizon: f64, bins: usize, rng: &mut impl Rng) -> Result<JumpControl> {
    let mut c = JumpControl::zero(k, horizon, bins)?;
    for b in 0..bins {
        let w: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    c.set(b, i, j, w[j] - w[i])?;
                }
            }
        }
    }
    Ok(c)
}

/// Forward-solve random controls, evaluate the rate of the result, compare
/// with the control cost. Jump part on `[model]`, diffusion part on
/// `[kernels]` + `[grid]`; the diffusion reference is the cost on a grid
/// refined twice (`dx/4`, `dt/16`).
pub fn run_rate_roundtrip(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let tol = spec.tolerances.clone();
    let mut rep = ExperimentReport::new(spec)?;
    let n = spec.replicas().max(1);
    if let Some(cfg) = &spec.model {
        let model = cfg.build()?;
        let p0 = cfg.initial()?;
        let t = spec.horizon();
        let p = solve_p(&*model, &p0, t, 200)?;
        let k = model.num_states();
        let results = replicate(n, |r| {
            let mut rng = stream(spec.seed, replica_id(0, r), JUMP_LANE);
            let psi = gradient_control(k, t, 8, &mut rng)?;
            let eta = skeleton(&*model, &p, &psi)?;
            let ibar = rate_ibar(&*model, &p, &eta)?;
            let i = rate_i(&*model, &p, &eta)?;
            let half = 0.5 * psi.norm_sq(&*model, &p);
            Ok((
                ibar.feasible && i.feasible,
                ibar.value_or_infinity(),
                i.value_or_infinity(),
                half,
            ))
        })?;
        let feasible = results.iter().all(|r| r.0);
        let err = results.iter().map(|r| (r.1 - r.3).abs()).fold(0.0, f64::max);
        let gap = results.iter().map(|r| (r.1 - r.2).abs()).fold(0.0, f64::max);
        let zero = rate_i(&*model, &p, &PathVec::zeros(p.times(), k))?.value_or_infinity();
        rep.push(Criterion::holds("jump forward paths feasible", feasible));
        rep.push(Criterion::at_most("jump |Ibar(G0(psi)) - cost|", err, tol.jump_roundtrip));
        rep.push(Criterion::at_most("jump |I - Ibar|", gap, tol.jump_i_vs_ibar));
        rep.push(Criterion::at_most("jump rate of zero path", zero, tol.identity));
    }
    if let Some(kc) = &spec.kernels {
        let kernels = kc.kernels();
        let grid = spec.grid.clone().unwrap_or_else(GridConfig::default_grid);
        let fine = grid.refined();
        let grids = [grid.clone(), fine.clone(), fine.refined()];
        let rhos = grids
            .iter()
            .map(|g| solve_fokker_planck(&kernels, kc.x0, g))
            .collect::<Result<Vec<_>>>()?;
        let mut rng = stream(spec.seed, replica_id(1, 0), JUMP_LANE);
        let controls: Vec<[f64; 4]> = (0..n)
            .map(|_| {
                [
                    rng.random_range(0.5..1.5),
                    rng.random_range(-0.5..0.5),
                    rng.random_range(0.5..2.0),
                    rng.random_range(-1.0..1.0),
                ]
            })
            .collect();
        let results = replicate(n, |r| {
            let [c0, c1, w, s] = controls[r];
            let g = move |x: f64, t: f64| c0 + c1 * (w * x + s * t).sin();
            let reference = control_cost(&rhos[2], &g)?;
            let mut errs = [0.0; 2];
            let mut feasible = true;
            for (e, rho) in errs.iter_mut().zip(&rhos) {
                let eta = solve_linearized(&kernels, rho, &g)?;
                let rate = rate_diffusion(&kernels, rho, &eta)?;
                feasible &= rate.feasible;
                *e = (rate.value_or_infinity() - reference).abs() / reference;
            }
            Ok((feasible, errs))
        })?;
        let worst = results.iter().map(|r| r.1[0]).fold(0.0, f64::max);
        let ratio = results.iter().map(|r| r.1[1] / r.1[0]).fold(0.0, f64::max);
        rep.push(Criterion::holds(
            "diffusion forward paths feasible",
            results.iter().all(|r| r.0),
        ));
        rep.push(Criterion::at_most(
            "diffusion round trip relative error",
            worst,
            tol.diffusion_roundtrip_rel,
        ));
        rep.push(Criterion::at_most(
            "diffusion error ratio under refinement",
            ratio,
            tol.diffusion_refinement_ratio,
        ));
    }
    Ok(rep)
}

/// Counts of `m` i.i.d. draws from `p`.
pub(crate) fn iid_counts(p: &SimplexVec, m: usize, rng: &mut impl Rng) -> Result<Vec<u32>> {
    let dist = WeightedIndex::new(p.as_slice()).map_err(|e| Error::Simplex(e.to_string()))?;
    let mut counts = vec![0u32; p.dim()];
    for _ in 0..m {
        counts[dist.sample(rng)] += 1;
    }
    Ok(counts)
}

/// Moments of `‖μᵐ(0) − p(0)‖` under i.i.d. initial sampling: the exact
/// second moment `(1/m) Σ pᵢ(1 − pᵢ)` and the `m^{−2}` decay of the fourth.
pub fn run_initial_moments(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.require_replicas(MIN_REPLICAS, "moment identities are judged in standard errors")?;
    let (_, p) = model_of(spec)?;
    let mut rep = ExperimentReport::new(spec)?;
    let mut fourth = Vec::new();
    let mut worst_z: f64 = 0.0;
    for &m in spec.m_grid() {
        let pairs = replicate(spec.replicas(), |r| {
            let mut rng = stream(spec.seed, replica_id(m, r), INITIAL_LANE);
            let counts = iid_counts(&p, m, &mut rng)?;
            let d2: f64 = counts
                .iter()
                .zip(p.iter())
                .map(|(&c, pi)| (c as f64 / m as f64 - pi).powi(2))
                .sum();
            Ok((d2, d2 * d2))
        })?;
        let (d2, d4): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let s2 = rep.per_m(m, "moment_2", &d2);
        rep.per_m(m, "moment_4", &d4);
        let exact = p.iter().map(|pi| pi * (1.0 - pi)).sum::<f64>() / m as f64;
        rep.values.insert(format!("exact_moment_2_m{m}"), exact);
        worst_z = worst_z.max((s2.mean - exact).abs() / s2.std_error);
        fourth.push(d4);
    }
    let tol = &spec.tolerances;
    rep.push(Criterion::at_most(
        "second moment identity (standard errors)",
        worst_z,
        tol.mc_se,
    ));
    let fit = fit_log_log(spec.m_grid(), &fourth, spec.seed);
    rep.push(Criterion::within(
        "fourth moment slope",
        fit.slope,
        -2.0,
        tol.moment_slope_tol,
    ));
    rep.slopes.push(NamedSlope {
        name: "moment_4".into(),
        fit,
    });
    Ok(rep)
}

/// Exact law at time `t` of the number of particles in the first state of an
/// `m`-particle two-state chain started with `n0` there, by uniformization
/// of the `(m + 1)`-state generator.
pub fn exact_two_state_law(model: &dyn RateModel, m: usize, n0: usize, t: f64) -> Result<Vec<f64>> {
    if model.num_states() != 2 {
        return Err(Error::Config("the exactness oracle needs a two-state model".into()));
    }
    let mf = m as f64;
    let down: Vec<f64> = (0..=m)
        .map(|n| n as f64 * model.gamma(&[n as f64 / mf, 1.0 - n as f64 / mf], 0, 1))
        .collect();
    let up: Vec<f64> = (0..=m)
        .map(|n| (m - n) as f64 * model.gamma(&[n as f64 / mf, 1.0 - n as f64 / mf], 1, 0))
        .collect();
    let lambda = (0..=m).map(|n| down[n] + up[n]).fold(0.0, f64::max);
    let mut law = vec![0.0; m + 1];
    law[n0] = 1.0;
    if lambda == 0.0 || t == 0.0 {
        return Ok(law);
    }
    // sub-intervals keep e^{−Λh} well away from underflow
    let pieces = (lambda * t / 10.0).ceil().max(1.0) as usize;
    let h = t / pieces as f64;
    for _ in 0..pieces {
        let mut term = law.clone();
        let mut weight = (-lambda * h).exp();
        let mut acc: Vec<f64> = term.iter().map(|v| v * weight).collect();
        let mut mass = weight;
        let mut k = 0usize;
        while 1.0 - mass > 1e-15 && k < 10_000 {
            k += 1;
            let mut next = vec![0.0; m + 1];
            for n in 0..=m {
                let stay = 1.0 - (down[n] + up[n]) / lambda;
                next[n] += term[n] * stay;
                if n > 0 {
                    next[n - 1] += term[n] * down[n] / lambda;
                }
                if n < m {
                    next[n + 1] += term[n] * up[n] / lambda;
                }
            }
            term = next;
            weight *= lambda * h / k as f64;
            mass += weight;
            for (a, v) in acc.iter_mut().zip(&term) {
                *a += weight * v;
            }
        }
        law = acc;
    }
    Ok(law)
}

/// Total variation between the simulated time-`T` marginal of small
/// two-state systems and the exact law.
pub fn run_exactness(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let (model, p0) = model_of(spec)?;
    let t = spec.horizon();
    let mut rep = ExperimentReport::new(spec)?;
    let mut worst: f64 = 0.0;
    for &m in spec.m_grid() {
        let counts = lattice_counts(&p0, m);
        let q0 = SimplexVec::from_counts(&counts)?;
        let exact = exact_two_state_law(&*model, m, counts[0] as usize, t)?;
        let finals = replicate(spec.replicas(), |r| {
            let mut rng = stream(spec.seed, replica_id(m, r), JUMP_LANE);
            Ok(simulate_jump_with(&*model, m, &q0, t, &mut rng)?.final_counts()[0] as usize)
        })?;
        let mut hist = vec![0.0; m + 1];
        for n in finals {
            hist[n] += 1.0 / spec.replicas() as f64;
        }
        let tv = 0.5 * hist.iter().zip(&exact).map(|(a, b)| (a - b).abs()).sum::<f64>();
        rep.values.insert(format!("tv_m{m}"), tv);
        worst = worst.max(tv);
    }
    rep.push(Criterion::at_most(
        "largest total variation",
        worst,
        spec.tolerances.exactness_tv,
    ));
    Ok(rep)
}
