//! Event-driven simulation of the empirical measure of `m` interacting
//! particles, plain and under a per-cell tilt of the driving Poisson measure.

mod control;

pub use control::{CellControl, ControlConfig, JumpControl};

use rand::Rng;
use rand_distr::Exp1;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{band_pairs, ell_unchecked, rate, RateModel, SimplexVec};
use crate::path::PathVec;
use crate::rng::{stream, JUMP_LANE};

/// `a(m) = m^{−θ}`.
pub fn a_m(m: usize, theta: f64) -> f64 {
    (m as f64).powf(-theta)
}

/// Trajectory of an `m`-particle empirical measure: piecewise constant,
/// with one particle moving `i → j` at each event time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpPath {
    m: usize,
    horizon: f64,
    initial: Vec<u32>,
    times: Vec<f64>,
    moves: Vec<(u32, u32)>,
}

impl JumpPath {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn num_states(&self) -> usize {
        self.initial.len()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn event_times(&self) -> &[f64] {
        &self.times
    }

    /// Source and target state of each event.
    pub fn moves(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.moves.iter().map(|&(i, j)| (i as usize, j as usize))
    }

    pub fn num_events(&self) -> usize {
        self.times.len()
    }

    pub fn initial(&self) -> SimplexVec {
        SimplexVec::from_counts(&self.initial).expect("initial counts are a valid measure")
    }

    /// Particle counts after each event, starting with the initial counts.
    pub fn count_history(&self) -> Vec<Vec<u32>> {
        let mut out = Vec::with_capacity(self.times.len() + 1);
        let mut c = self.initial.clone();
        out.push(c.clone());
        for &(i, j) in &self.moves {
            c[i as usize] -= 1;
            c[j as usize] += 1;
            out.push(c.clone());
        }
        out
    }

    pub fn final_counts(&self) -> Vec<u32> {
        let mut c = self.initial.clone();
        for &(i, j) in &self.moves {
            c[i as usize] -= 1;
            c[j as usize] += 1;
        }
        c
    }

    /// States `μ^m` after each event, starting with `μ^m(0)`.
    pub fn states(&self) -> Vec<SimplexVec> {
        self.count_history()
            .iter()
            .map(|c| SimplexVec::from_counts(c).expect("counts stay a valid measure"))
            .collect()
    }

    /// Step path with a repeated time at every event.
    pub fn to_path_vec(&self) -> PathVec {
        let m = self.m as f64;
        let to_q = |c: &[u32]| c.iter().map(|&n| n as f64 / m).collect::<Vec<f64>>();
        let mut times = Vec::with_capacity(2 * self.times.len() + 2);
        let mut values = Vec::with_capacity(2 * self.times.len() + 2);
        let mut c = self.initial.clone();
        times.push(0.0);
        values.push(to_q(&c));
        for (&t, &(i, j)) in self.times.iter().zip(&self.moves) {
            if t == *times.last().unwrap() && times.len() >= 2 && times[times.len() - 2] == t {
                // two events at one instant: fold into the existing jump
                c[i as usize] -= 1;
                c[j as usize] += 1;
                *values.last_mut().unwrap() = to_q(&c);
                continue;
            }
            times.push(t);
            values.push(to_q(&c));
            c[i as usize] -= 1;
            c[j as usize] += 1;
            times.push(t);
            values.push(to_q(&c));
        }
        if *times.last().unwrap() < self.horizon {
            times.push(self.horizon);
            values.push(to_q(&c));
        }
        PathVec::new(times, values).expect("jump path is well formed")
    }

    /// Inter-event times, the first measured from 0.
    pub fn holding_times(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.times
            .iter()
            .map(|&t| {
                let d = t - prev;
                prev = t;
                d
            })
            .collect()
    }
}

fn initial_counts(q0: &SimplexVec, m: usize) -> Result<Vec<u32>> {
    if m == 0 {
        return Err(Error::Domain("m must be >= 1".into()));
    }
    q0.counts(m)
}

fn check_horizon(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("horizon {t} must be finite and >= 0")));
    }
    Ok(())
}

/// Exact simulation of `μ^m` on `[0, T]` with the stream `(seed, 0, JUMP_LANE)`.
pub fn simulate_jump<M: RateModel + ?Sized>(model: &M, m: usize, q0: &SimplexVec, t: f64, seed: u64) -> Result<JumpPath> {
    simulate_jump_with(model, m, q0, t, &mut stream(seed, 0, JUMP_LANE))
}

/// Gillespie's direct method: exponential waiting time at total rate
/// `m Σ q_iΓ_ij(q)`, then a pair `(i, j)` chosen proportionally to its rate.
pub fn simulate_jump_with<M: RateModel + ?Sized, R: Rng>(
    model: &M,
    m: usize,
    q0: &SimplexVec,
    horizon: f64,
    rng: &mut R,
) -> Result<JumpPath> {
    check_horizon(horizon)?;
    if q0.dim() != model.num_states() {
        return Err(Error::Dimension {
            expected: model.num_states(),
            got: q0.dim(),
        });
    }
    let counts0 = initial_counts(q0, m)?;
    let pairs = band_pairs(model);
    let mf = m as f64;
    let mut counts = counts0.clone();
    let mut q: Vec<f64> = counts.iter().map(|&c| c as f64 / mf).collect();
    let mut rates = vec![0.0; pairs.len()];
    let mut times = Vec::new();
    let mut moves = Vec::new();
    let mut t = 0.0;
    loop {
        let mut total = 0.0;
        for (r, &(i, j)) in rates.iter_mut().zip(&pairs) {
            *r = counts[i] as f64 * model.gamma(&q, i, j);
            total += *r;
        }
        if total <= 0.0 {
            break;
        }
        let e: f64 = rng.sample(Exp1);
        t += e / total;
        if t > horizon {
            break;
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = pairs.len() - 1;
        for (n, r) in rates.iter().enumerate() {
            acc += r;
            if target < acc {
                pick = n;
                break;
            }
        }
        // guard against round-off landing on an empty source
        while rates[pick] <= 0.0 {
            pick -= 1;
        }
        let (i, j) = pairs[pick];
        counts[i] -= 1;
        counts[j] += 1;
        q[i] = counts[i] as f64 / mf;
        q[j] = counts[j] as f64 / mf;
        times.push(t);
        moves.push((i as u32, j as u32));
    }
    Ok(JumpPath {
        m,
        horizon,
        initial: counts0,
        times,
        moves,
    })
}

/// Result of a tilted run: the trajectory and the deterministic cost
/// `L_T(φ) = ∫ ℓ(φ) dλ`.
#[derive(Debug, Clone)]
pub struct TiltedRun {
    pub path: JumpPath,
    pub cost: f64,
}

/// Exact simulation of the tilted empirical measure with the stream
/// `(seed, 0, JUMP_LANE)`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_tilted<M: RateModel + ?Sized>(
    model: &M,
    m: usize,
    q0: &SimplexVec,
    horizon: f64,
    control: &JumpControl,
    a: f64,
    p_path: &PathVec,
    seed: u64,
) -> Result<TiltedRun> {
    simulate_tilted_with(model, m, q0, horizon, control, a, p_path, &mut stream(seed, 0, JUMP_LANE))
}

/// Tilted dynamics: the thinning `φ = 1 + ψ/(a√m)` multiplies the intensity
/// on the cell `A_ij(p(s))`, so the `i → j` rate at state `q` and time `s` is
///
/// ```text
/// m [ q_iΓ_ij(q) + (φ − 1) · min(q_iΓ_ij(q), p_i(s)Γ_ij(p(s))) ].
/// ```
///
/// Because `p(s)` moves between events the rate is time-dependent; it is
/// sampled exactly by thinning against the per-bin bound
/// `m q_iΓ_ij(q) max(1, φ)`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_tilted_with<M: RateModel + ?Sized, R: Rng>(
    model: &M,
    m: usize,
    q0: &SimplexVec,
    horizon: f64,
    control: &JumpControl,
    a: f64,
    p_path: &PathVec,
    rng: &mut R,
) -> Result<TiltedRun> {
    check_horizon(horizon)?;
    let k = model.num_states();
    if q0.dim() != k || control.num_states() != k || p_path.dim() != k {
        return Err(Error::Dimension {
            expected: k,
            got: if q0.dim() != k {
                q0.dim()
            } else if control.num_states() != k {
                control.num_states()
            } else {
                p_path.dim()
            },
        });
    }
    if p_path.horizon() < horizon - 1e-12 || control.horizon() < horizon - 1e-12 {
        return Err(Error::Grid("limit path and control must cover [0, T]".into()));
    }
    let scale = a * (m as f64).sqrt();
    control.check_thinning(scale)?;
    let counts0 = initial_counts(q0, m)?;
    let pairs = band_pairs(model);
    let mf = m as f64;
    let mut counts = counts0.clone();
    let mut q: Vec<f64> = counts.iter().map(|&c| c as f64 / mf).collect();
    let mut own = vec![0.0; pairs.len()];
    let mut phi = vec![1.0; pairs.len()];
    let mut actual = vec![0.0; pairs.len()];
    let mut times = Vec::new();
    let mut moves = Vec::new();
    let mut t = 0.0;
    let width = control.bin_width();

    let mut bin = 0;
    loop {
        let last_bin = bin + 1 >= control.bins() || (bin + 1) as f64 * width >= horizon;
        let bin_end = if last_bin { horizon } else { (bin + 1) as f64 * width };
        let mut bound = 0.0;
        for (n, &(i, j)) in pairs.iter().enumerate() {
            own[n] = rate(model, &q, i, j);
            phi[n] = 1.0 + control.get(bin, i, j) / scale;
            bound += mf * own[n] * phi[n].max(1.0);
        }
        let cand = if bound > 0.0 {
            let e: f64 = rng.sample(Exp1);
            t + e / bound
        } else {
            f64::INFINITY
        };
        if cand >= bin_end {
            if last_bin {
                break;
            }
            t = bin_end;
            bin += 1;
            continue;
        }
        t = cand;
        let p = p_path.eval(t);
        for (n, &(i, j)) in pairs.iter().enumerate() {
            let lim = rate(model, &p, i, j);
            actual[n] = mf * (own[n] + (phi[n] - 1.0) * own[n].min(lim));
        }
        let target = rng.random::<f64>() * bound;
        let mut acc = 0.0;
        let mut pick = None;
        for (n, r) in actual.iter().enumerate() {
            acc += r;
            if target < acc {
                pick = Some(n);
                break;
            }
        }
        if let Some(n) = pick {
            let (i, j) = pairs[n];
            counts[i] -= 1;
            counts[j] += 1;
            q[i] = counts[i] as f64 / mf;
            q[j] = counts[j] as f64 / mf;
            times.push(t);
            moves.push((i as u32, j as u32));
        }
    }
    let cost = tilt_cost(model, control, scale, p_path, horizon);
    Ok(TiltedRun {
        path: JumpPath {
            m,
            horizon,
            initial: counts0,
            times,
            moves,
        },
        cost,
    })
}

/// `L_T(φ) = Σ_bins Σ_cells ℓ(1 + ψ/scale) ∫_bin p_iΓ_ij(p(s)) ds`.
pub fn tilt_cost<M: RateModel + ?Sized>(model: &M, control: &JumpControl, scale: f64, p_path: &PathVec, horizon: f64) -> f64 {
    let w = control.bin_width();
    let mut total = 0.0;
    for bin in 0..control.bins() {
        let lo = bin as f64 * w;
        if lo >= horizon {
            break;
        }
        let hi = if bin + 1 == control.bins() {
            horizon
        } else {
            ((bin + 1) as f64 * w).min(horizon)
        };
        for (i, j) in band_pairs(model) {
            let psi = control.get(bin, i, j);
            if psi == 0.0 {
                continue;
            }
            let l = ell_unchecked(1.0 + psi / scale);
            total += l * integrated_cell_rate(model, p_path, lo, hi, i, j);
        }
    }
    total
}

/// `∫_lo^hi p_i(s)Γ_ij(p(s)) ds`, Simpson's rule on each piece of the
/// `p` grid inside `[lo, hi]`.
pub fn integrated_cell_rate<M: RateModel + ?Sized>(model: &M, p_path: &PathVec, lo: f64, hi: f64, i: usize, j: usize) -> f64 {
    let times = p_path.times();
    let mut knots = vec![lo];
    knots.extend(times.iter().copied().filter(|&s| s > lo && s < hi));
    knots.push(hi);
    knots.dedup();
    let f = |s: f64| rate(model, &p_path.eval(s), i, j);
    knots
        .windows(2)
        .map(|w| (w[1] - w[0]) / 6.0 * (f(w[0]) + 4.0 * f(0.5 * (w[0] + w[1])) + f(w[1])))
        .sum()
}

/// `Z^m = a(m)√m (μ^m − p)` on the merged event/grid times.
pub fn fluctuation_z(path: &JumpPath, p_path: &PathVec, a: f64) -> Result<PathVec> {
    if path.num_states() != p_path.dim() {
        return Err(Error::Dimension {
            expected: p_path.dim(),
            got: path.num_states(),
        });
    }
    if p_path.horizon() < path.horizon() - 1e-12 {
        return Err(Error::Grid(format!(
            "limit path ends at {} before the jump path horizon {}",
            p_path.horizon(),
            path.horizon()
        )));
    }
    path.to_path_vec().scaled_difference(p_path, a * (path.m() as f64).sqrt())
}

/// `sup_t ‖μ^m(t) − p(t)‖²`.
pub fn sup_error_sq(path: &JumpPath, p_path: &PathVec) -> Result<f64> {
    Ok(path.to_path_vec().sup_distance(p_path)?.powi(2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jump_analysis::solve_p;
    use crate::model::{BirthDeath, ConstantRate};

    fn two_state() -> ConstantRate {
        ConstantRate::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    #[test]
    fn zero_rates_give_constant_path() {
        let m = ConstantRate::new(vec![vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let q0 = SimplexVec::new(vec![0.5, 0.5]).unwrap();
        let path = simulate_jump(&m, 10, &q0, 3.0, 1).unwrap();
        assert_eq!(path.num_events(), 0);
        assert_eq!(path.to_path_vec().eval(2.0), vec![0.5, 0.5]);
    }

    #[test]
    fn deterministic_given_seed() {
        let model = BirthDeath::new(5, 1.0, 0.5, 0.8).unwrap();
        let q0 = SimplexVec::point(5, 0);
        let a = simulate_jump(&model, 50, &q0, 1.0, 9).unwrap();
        let b = simulate_jump(&model, 50, &q0, 1.0, 9).unwrap();
        let c = simulate_jump(&model, 50, &q0, 1.0, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn jumps_move_one_particle() {
        let model = BirthDeath::new(5, 1.0, 0.5, 0.8).unwrap();
        let path = simulate_jump(&model, 20, &SimplexVec::point(5, 0), 2.0, 3).unwrap();
        let states = path.states();
        for w in states.windows(2) {
            let d: Vec<f64> = w[1].iter().zip(w[0].iter()).map(|(a, b)| (a - b) * 20.0).collect();
            let plus = d.iter().filter(|&&x| (x - 1.0).abs() < 1e-9).count();
            let minus = d.iter().filter(|&&x| (x + 1.0).abs() < 1e-9).count();
            assert_eq!((plus, minus), (1, 1));
        }
    }

    #[test]
    fn rejects_off_lattice_initial() {
        let q0 = SimplexVec::new(vec![0.3, 0.7]).unwrap();
        assert!(simulate_jump(&two_state(), 4, &q0, 1.0, 0).is_err());
    }

    #[test]
    fn mean_event_count_is_bounded() {
        let model = two_state();
        let q0 = SimplexVec::new(vec![0.5, 0.5]).unwrap();
        let runs = 200;
        let total: usize = (0..runs)
            .map(|r| {
                simulate_jump_with(&model, 10, &q0, 1.0, &mut stream(5, r, JUMP_LANE))
                    .unwrap()
                    .num_events()
            })
            .sum();
        let mean = total as f64 / runs as f64;
        // bound m‖Γ‖T = 10; for this chain the rate is exactly 10
        assert!(mean <= 10.0 + 3.0 * (10.0f64 / runs as f64).sqrt());
    }

    #[test]
    fn zero_control_matches_plain_simulation_and_costs_nothing() {
        let model = two_state();
        let q0 = SimplexVec::point(2, 0);
        let p = solve_p(&model, &q0, 1.0, 200).unwrap();
        let ctrl = JumpControl::zero(2, 1.0, 4).unwrap();
        let run = simulate_tilted(&model, 40, &q0, 1.0, &ctrl, a_m(40, 0.25), &p, 2).unwrap();
        assert_eq!(run.cost, 0.0);
        // law check: mean occupation of state 1 at T vs p(T)
        let reps = 400;
        let mut acc = 0.0;
        for r in 0..reps {
            let run = simulate_tilted_with(&model, 40, &q0, 1.0, &ctrl, 1.0, &p, &mut stream(11, r, JUMP_LANE)).unwrap();
            acc += run.path.final_counts()[0] as f64 / 40.0;
        }
        let mean = acc / reps as f64;
        let want = p.eval(1.0)[0];
        // per-run sd ≤ 0.5/√40
        assert!(
            (mean - want).abs() < 4.0 * 0.5 / (40.0f64 * reps as f64).sqrt(),
            "{mean} vs {want}"
        );
    }

    #[test]
    fn constant_cell_cost_matches_quadrature() {
        let model = two_state();
        let q0 = SimplexVec::point(2, 0);
        let p = solve_p(&model, &q0, 1.0, 400).unwrap();
        let ctrl = JumpControl::constant_on(2, 1.0, 0, 1, 0.7).unwrap();
        let scale = a_m(100, 0.25) * 10.0;
        let cost = tilt_cost(&model, &ctrl, scale, &p, 1.0);
        // p_1(s) = ½ + ½ e^{−2s}; ∫_0^1 p_1 Γ_12 ds = ½ + (1 − e^{−2})/4
        let integral = 0.5 + (1.0 - (-2.0f64).exp()) / 4.0;
        let want = ell_unchecked(1.0 + 0.7 / scale) * integral;
        // linear interpolation of p between grid points costs O(h²)
        assert!((cost - want).abs() < 1e-5 * want, "{cost} vs {want}");
    }

    #[test]
    fn fluctuation_of_exact_limit_vanishes_and_scales() {
        let model = ConstantRate::new(vec![vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let q0 = SimplexVec::new(vec![0.25, 0.75]).unwrap();
        let path = simulate_jump(&model, 4, &q0, 1.0, 0).unwrap();
        let p = solve_p(&model, &q0, 1.0, 10).unwrap();
        assert_eq!(fluctuation_z(&path, &p, 1.0).unwrap().sup_norm(), 0.0);

        let model = two_state();
        let path = simulate_jump(&model, 400, &SimplexVec::point(2, 0), 1.0, 4).unwrap();
        let p = solve_p(&model, &SimplexVec::point(2, 0), 1.0, 100).unwrap();
        let a = a_m(400, 0.25);
        let z = fluctuation_z(&path, &p, a).unwrap();
        let z2 = fluctuation_z(&path, &p, 2.0 * a).unwrap();
        assert!((z2.sup_norm() - 2.0 * z.sup_norm()).abs() < 1e-12);
        let mass = z.values().iter().map(|v| v.iter().sum::<f64>().abs()).fold(0.0, f64::max);
        assert!(mass < 1e-12);
    }
}
