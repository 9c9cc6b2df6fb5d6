//! The property battery: deterministic identities and bounds of every module
//! plus small fixed-seed Monte Carlo checks, one criterion per item.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use super::experiments::{gradient_control, iid_counts};
use super::{Criterion, ExperimentReport, ExperimentSpec};
use crate::diff_analysis::{solve_fokker_planck, solve_linearized};
use crate::error::Result;
use crate::jump_analysis::{skeleton, skeleton_bound, solve_p};
use crate::kernels::{GridConfig, KernelPair};
use crate::model::bounds::{ell_ratio_sup, gamma5, jump_moment, jump_moment_bound, lipschitz_sides};
use crate::model::{band_pairs, cell, drift, jump_map, l2_norm, BirthDeath, ConstantRate, RateModel, SimplexVec};
use crate::rng::stream;
use crate::schwartz::{seminorm_hilbert, seminorm_sup, sobolev_constant, TestFunction};

fn random_simplex(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}

fn models() -> Vec<(String, Box<dyn RateModel>)> {
    vec![
        (
            "birth-death".into(),
            Box::new(BirthDeath::new(5, 1.0, 0.5, 0.8).expect("valid")),
        ),
        (
            "constant".into(),
            Box::new(ConstantRate::new(vec![vec![0.0, 1.0, 0.5], vec![0.3, 0.0, 2.0], vec![1.5, 0.2, 0.0]]).expect("valid")),
        ),
    ]
}

/// `b(q) = Σ (e_j − e_i) q_iΓ_ij(q)`, `‖G‖ ∈ {0, √2}` and disjoint cells.
pub(crate) fn exact_identities(model: &dyn RateModel, rng: &mut ChaCha8Rng, points: usize) -> (f64, f64, usize) {
    let k = model.num_states();
    let mut drift_err: f64 = 0.0;
    let mut norm_err: f64 = 0.0;
    let mut overlaps = 0;
    for _ in 0..points {
        let q = random_simplex(rng, k);
        let b = drift(model, &q);
        let mut sum = vec![0.0; k];
        for (i, j) in band_pairs(model) {
            let r = q[i] * model.gamma(&q, i, j);
            sum[j] += r;
            sum[i] -= r;
        }
        drift_err = drift_err.max(b.iter().zip(&sum).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max));
        let cells: Vec<_> = band_pairs(model)
            .into_iter()
            .map(|(i, j)| cell(model, &q, i, j).expect("cell"))
            .collect();
        for _ in 0..20 {
            let y = [
                rng.random_range(0.0..k as f64 + 0.5),
                rng.random_range(0.0..(k as f64 + 0.5) * model.gamma_norm()),
            ];
            let g = l2_norm(&jump_map(model, &q, y));
            norm_err = norm_err.max(g.min((g - 2f64.sqrt()).abs()));
            if cells.iter().filter(|c| c.contains(y)).count() > 1 {
                overlaps += 1;
            }
        }
    }
    (drift_err, norm_err, overlaps)
}

/// Largest `moment / bound` over `k = 1..4` and random `q`.
pub(crate) fn moment_ratio(model: &dyn RateModel, rng: &mut ChaCha8Rng, points: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let q = random_simplex(rng, model.num_states());
        for k in 1..=4 {
            worst = worst.max(jump_moment(model, &q, k) / jump_moment_bound(model, k));
        }
    }
    worst
}

/// Largest `lhs − rhs` of the Lipschitz bound over random `(q, q̃, g)`.
pub(crate) fn lipschitz_excess(model: &dyn RateModel, rng: &mut ChaCha8Rng, triples: usize) -> f64 {
    let k = model.num_states();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..triples {
        let q = random_simplex(rng, k);
        let qt = random_simplex(rng, k);
        let g: Vec<f64> = (0..k * k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (lhs, rhs) = lipschitz_sides(model, &q, &qt, |i, j| g[i * k + j]);
        worst = worst.max(lhs - rhs);
    }
    worst
}

/// Largest `|φ|ₙ / (γ₀(n) ‖φ‖_{n+1})` and whether `‖φ‖ₙ` increased in `n`
/// for random Hermite combinations.
pub(crate) fn schwartz_checks(rng: &mut ChaCha8Rng, functions: usize) -> Result<(f64, bool)> {
    let mut worst: f64 = 0.0;
    let mut monotone = true;
    for _ in 0..functions {
        let deg = rng.random_range(0..6usize);
        let c: Vec<f64> = (0..=deg).map(|_| rng.random_range(-1.0..1.0)).collect();
        let phi = TestFunction::from_hermite(&c);
        let norms = (0..=5).map(|n| seminorm_hilbert(&phi, n)).collect::<Result<Vec<_>>>()?;
        monotone &= norms.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12));
        for n in 0..=4 {
            worst = worst.max(seminorm_sup(&phi, n) / (sobolev_constant(n) * norms[n + 1]));
        }
    }
    Ok((worst, monotone))
}

pub fn run_lemma_suite(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let tol = spec.tolerances.clone();
    let mut rep = ExperimentReport::new(spec)?;
    let mut rng = stream(spec.seed, 0, 7);

    for (name, model) in models() {
        let model = &*model;
        let (drift_err, norm_err, overlaps) = exact_identities(model, &mut rng, 100);
        rep.push(Criterion::at_most(
            format!("{name}: drift equals cell sum"),
            drift_err,
            tol.identity,
        ));
        rep.push(Criterion::at_most(
            format!("{name}: jump size in {{0, sqrt 2}}"),
            norm_err,
            tol.identity,
        ));
        rep.push(Criterion::holds(format!("{name}: cells disjoint"), overlaps == 0));
        rep.push(Criterion::at_most(
            format!("{name}: jump moments / 2^(k/2) norm"),
            moment_ratio(model, &mut rng, 100),
            1.0,
        ));
        rep.push(Criterion::at_most(
            format!("{name}: Lipschitz excess"),
            lipschitz_excess(model, &mut rng, 500),
            0.0,
        ));
        rep.values.insert(format!("{name}_gamma5"), gamma5(model));
    }

    for beta in [0.05, 0.1, 0.25, 0.45] {
        rep.push(Criterion::at_most(
            format!("ell ratio sup at beta {beta}"),
            ell_ratio_sup(beta),
            4.0 / beta,
        ));
    }

    let bd = BirthDeath::new(5, 1.0, 0.5, 0.8)?;
    let p0 = SimplexVec::new(vec![0.4, 0.3, 0.15, 0.1, 0.05])?;
    let p = solve_p(&bd, &p0, 1.0, 100)?;
    let c = skeleton_bound(&bd, 1.0);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let psi = gradient_control(5, 1.0, 10, &mut rng)?;
        let eta = skeleton(&bd, &p, &psi)?;
        worst = worst.max(eta.sup_norm() / (c * psi.norm_sq(&bd, &p).sqrt()));
    }
    rep.push(Criterion::at_most("skeleton sup / (C ||psi||)", worst, 1.0));

    let (sob, monotone) = schwartz_checks(&mut rng, 100)?;
    rep.push(Criterion::holds("Hilbert seminorms monotone in n", monotone));
    rep.push(Criterion::at_most("sup seminorm / (gamma0 Hilbert)", sob, 1.0));
    let g = seminorm_hilbert(&TestFunction::gaussian(), 0)?;
    rep.push(Criterion::within(
        "Gaussian Hilbert seminorm",
        g,
        std::f64::consts::PI.powf(0.25),
        tol.seminorm,
    ));

    let p = SimplexVec::new(vec![0.5, 0.3, 0.2])?;
    let (m, reps) = (100usize, 4000usize);
    let d2: Vec<f64> = (0..reps)
        .map(|r| {
            let mut rng = stream(spec.seed, r as u64, crate::rng::INITIAL_LANE);
            let counts = iid_counts(&p, m, &mut rng)?;
            Ok(counts
                .iter()
                .zip(p.iter())
                .map(|(&c, pi)| (c as f64 / m as f64 - pi).powi(2))
                .sum())
        })
        .collect::<Result<_>>()?;
    let s = super::Summary::of(&d2);
    let exact = p.iter().map(|pi| pi * (1.0 - pi)).sum::<f64>() / m as f64;
    rep.push(Criterion::at_most(
        "initial second moment (standard errors)",
        (s.mean - exact).abs() / s.std_error,
        tol.mc_se,
    ));

    let kernels = KernelPair::default();
    let grid = GridConfig::default_grid();
    let rho = solve_fokker_planck(&kernels, 0.5, &grid)?;
    let eta = solve_linearized(&kernels, &rho, &|x, t| (x - t).cos())?;
    let rho_mass = (0..rho.times().len()).map(|n| (rho.mass(n) - 1.0).abs()).fold(0.0, f64::max);
    let eta_mass = (0..eta.times().len()).map(|n| eta.mass(n).abs()).fold(0.0, f64::max);
    rep.push(Criterion::at_most("Fokker-Planck mass drift", rho_mass, tol.conservation));
    rep.push(Criterion::at_most("linearized mass drift", eta_mass, tol.conservation));
    Ok(rep)
}
