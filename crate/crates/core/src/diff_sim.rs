//! Particle simulation of the mean-field diffusion
//!
//! ```text
//! dXᵢ = b(Xᵢ, μᵐ) dt + σ(Xᵢ, μᵐ) dWᵢ,   μᵐ = (1/m) Σ δ_{Xⱼ},
//! ```
//!
//! its controlled version at moderate-deviation scaling, the McKean–Vlasov
//! reference ensemble, fluctuation pairings, the coupling gap and occupation
//! measures.
//!
//! All schemes are fixed-step Euler–Maruyama (strong order ½, weak order 1).
//! Particle `i` of replica `r` draws its Brownian increments from
//! `particle_stream(seed, r, i)`, so controlled, uncontrolled and reference
//! particles with the same index share their noise.

use std::io::Write;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kernels::{Kernel, KernelPair};
use crate::path::format_f64;
use crate::rng::particle_stream;
use crate::schwartz::TestFunction;

/// Replica index reserved for the reference ensemble's own noise.
pub const REFERENCE_REPLICA: u64 = u64::MAX;

/// Time discretization and stream addressing of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionRun {
    pub m: usize,
    pub x0: f64,
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
    pub replica: u64,
    /// Positions are recorded every `record_every` steps (and at `T`).
    pub record_every: usize,
}

impl DiffusionRun {
    /// Replica 0, every step recorded.
    pub fn new(m: usize, x0: f64, horizon: f64, dt: f64, seed: u64) -> Self {
        Self {
            m,
            x0,
            horizon,
            dt,
            seed,
            replica: 0,
            record_every: 1,
        }
    }

    pub fn replica(mut self, r: u64) -> Self {
        self.replica = r;
        self
    }

    pub fn record_every(mut self, n: usize) -> Self {
        self.record_every = n;
        self
    }

    /// Number of steps; `dt` is shrunk so that the steps end exactly at `T`.
    pub fn steps(&self) -> usize {
        ((self.horizon / self.dt) - 1e-9).ceil().max(1.0) as usize
    }

    pub fn step_size(&self) -> f64 {
        self.horizon / self.steps() as f64
    }

    fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::Domain("need at least one particle".into()));
        }
        if !(self.dt > 0.0 && self.horizon > 0.0) || !self.x0.is_finite() {
            return Err(Error::Domain("dt and T must be positive, x0 finite".into()));
        }
        if self.record_every == 0 {
            return Err(Error::Domain("record_every must be at least 1".into()));
        }
        Ok(())
    }

    fn is_recorded(&self, step: usize) -> bool {
        step.is_multiple_of(self.record_every) || step == self.steps()
    }
}

/// `∫ k(x, y) μ(dy)` precomputed for an empirical `μ`: per-term moments of a
/// separable kernel, or the atoms themselves for a dense one.
#[derive(Debug, Clone, PartialEq)]
pub enum Moments {
    Separable(Vec<f64>),
    Dense(Vec<f64>),
}

impl Moments {
    pub fn of(kernel: &Kernel, xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        match kernel {
            Kernel::Separable(terms) => Moments::Separable(
                terms
                    .iter()
                    .map(|t| xs.iter().map(|&y| t.y.eval(y)).sum::<f64>() / n)
                    .collect(),
            ),
            Kernel::Dense(_) => Moments::Dense(xs.to_vec()),
        }
    }

    /// `∫ k(x, y) μ(dy)`.
    #[inline]
    pub fn apply(&self, kernel: &Kernel, x: f64) -> f64 {
        match (self, kernel) {
            (Moments::Separable(m), Kernel::Separable(terms)) => {
                terms.iter().zip(m).map(|(t, mo)| t.coef * t.x.eval(x) * mo).sum()
            }
            (Moments::Dense(atoms), Kernel::Dense(f)) => atoms.iter().map(|&y| f(x, y)).sum::<f64>() / atoms.len() as f64,
            _ => unreachable!("moments built from a different kernel"),
        }
    }
}

/// Mean-field coefficients of one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub alpha: Moments,
    pub beta: Moments,
}

impl Field {
    pub fn of(kernels: &KernelPair, xs: &[f64]) -> Self {
        Self {
            alpha: Moments::of(&kernels.alpha, xs),
            beta: Moments::of(&kernels.beta, xs),
        }
    }

    /// `(σ(x, μ), b(x, μ))`.
    #[inline]
    pub fn coefficients(&self, kernels: &KernelPair, x: f64) -> (f64, f64) {
        (self.alpha.apply(&kernels.alpha, x), self.beta.apply(&kernels.beta, x))
    }
}

/// Recorded particle positions.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticlePath {
    times: Vec<f64>,
    positions: Vec<Vec<f64>>,
}

impl ParticlePath {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// `positions()[n][i]` is particle `i` at `times()[n]`.
    pub fn positions(&self) -> &[Vec<f64>] {
        &self.positions
    }

    pub fn m(&self) -> usize {
        self.positions.first().map_or(0, Vec::len)
    }

    pub fn final_positions(&self) -> &[f64] {
        self.positions.last().expect("non-empty path")
    }

    /// `t ↦ ⟨μᵐ(t), f⟩`, summed before dividing so `f ≡ 1` gives exactly 1.
    pub fn pairing(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.positions
            .iter()
            .map(|xs| xs.iter().map(|&x| f(x)).sum::<f64>() / xs.len() as f64)
            .collect()
    }

    pub fn means(&self) -> Vec<f64> {
        self.pairing(|x| x)
    }

    /// Variance of the empirical measure (divisor `m`).
    pub fn variances(&self) -> Vec<f64> {
        self.positions
            .iter()
            .map(|xs| {
                let n = xs.len() as f64;
                let mean = xs.iter().sum::<f64>() / n;
                xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
            })
            .collect()
    }

    /// CSV with columns `time, mean, var, pair_1, …` (one pairing per test
    /// function).
    pub fn write_summary_csv(&self, path: impl AsRef<Path>, tests: &[TestFunction]) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(w, "time,mean,var")?;
        for n in 0..tests.len() {
            write!(w, ",pair_{}", n + 1)?;
        }
        writeln!(w)?;
        let means = self.means();
        let vars = self.variances();
        let pairs: Vec<Vec<f64>> = tests.iter().map(|phi| self.pairing(|x| phi.eval(x))).collect();
        for n in 0..self.times.len() {
            write!(
                w,
                "{},{},{}",
                format_f64(self.times[n]),
                format_f64(means[n]),
                format_f64(vars[n])
            )?;
            for p in &pairs {
                write!(w, ",{}", format_f64(p[n]))?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Output of [`simulate_controlled`].
#[derive(Debug, Clone, PartialEq)]
pub struct ControlledRun {
    pub path: ParticlePath,
    /// `(1/2m) Σᵢ Σ_steps ũᵢ² Δt`.
    pub cost: f64,
    /// Control values applied on each step, `controls[n][i]`; kept only when
    /// every step is recorded.
    pub controls: Option<Vec<Vec<f64>>>,
    pub dt: f64,
}

/// Feedback control `ũᵢ(s, x)` for particle `i`.
pub trait Control: Sync {
    fn value(&self, i: usize, s: f64, x: f64) -> f64;
}

impl<F: Fn(usize, f64, f64) -> f64 + Sync> Control for F {
    fn value(&self, i: usize, s: f64, x: f64) -> f64 {
        self(i, s, x)
    }
}

/// Where the mean field of a step comes from.
enum Driver<'a> {
    /// The particles' own empirical measure.
    Empirical,
    /// A prescribed field per step (the reference law).
    Prescribed(&'a [Field]),
}

fn euler_maruyama(
    kernels: &KernelPair,
    run: &DiffusionRun,
    driver: Driver<'_>,
    control: Option<(&dyn Control, f64)>,
) -> Result<ControlledRun> {
    run.validate()?;
    let steps = run.steps();
    let dt = run.step_size();
    let sqrt_dt = dt.sqrt();
    let mut rngs: Vec<ChaCha8Rng> = (0..run.m).map(|i| particle_stream(run.seed, run.replica, i)).collect();
    let mut xs = vec![run.x0; run.m];
    let mut times = vec![0.0];
    let mut positions = vec![xs.clone()];
    let keep_controls = control.is_some() && run.record_every == 1;
    let mut controls = keep_controls.then(|| Vec::with_capacity(steps));
    let mut cost_sum = 0.0;
    let scale = control.map_or(0.0, |(_, a)| 1.0 / (a * (run.m as f64).sqrt()));
    let mut field_buf;
    for n in 0..steps {
        let s = n as f64 * dt;
        let field = match driver {
            Driver::Empirical => {
                field_buf = Field::of(kernels, &xs);
                &field_buf
            }
            Driver::Prescribed(fields) => &fields[n],
        };
        let mut us = keep_controls.then(|| Vec::with_capacity(run.m));
        for (i, (x, rng)) in xs.iter_mut().zip(rngs.iter_mut()).enumerate() {
            let (sigma, b) = field.coefficients(kernels, *x);
            let z: f64 = StandardNormal.sample(rng);
            let mut dx = b * dt + sigma * sqrt_dt * z;
            if let Some((c, _)) = control {
                let u = c.value(i, s, *x);
                dx += scale * sigma * u * dt;
                cost_sum += u * u;
                if let Some(us) = us.as_mut() {
                    us.push(u);
                }
            }
            *x += dx;
            if !x.is_finite() {
                return Err(Error::NonFinite {
                    step: n + 1,
                    seed: run.seed,
                    replica: run.replica,
                    particle: i,
                });
            }
        }
        if let (Some(all), Some(us)) = (controls.as_mut(), us) {
            all.push(us);
        }
        if run.is_recorded(n + 1) {
            times.push(if n + 1 == steps { run.horizon } else { (n + 1) as f64 * dt });
            positions.push(xs.clone());
        }
    }
    Ok(ControlledRun {
        path: ParticlePath { times, positions },
        cost: cost_sum * dt / (2.0 * run.m as f64),
        controls,
        dt,
    })
}

/// The interacting particle system started from `x0` for every particle.
pub fn simulate_interacting(kernels: &KernelPair, run: &DiffusionRun) -> Result<ParticlePath> {
    euler_maruyama(kernels, run, Driver::Empirical, None).map(|r| r.path)
}

/// The controlled system: each step adds `σ(X̃ᵢ, μ̃ᵐ) ũᵢ Δt / (a√m)`.
pub fn simulate_controlled(kernels: &KernelPair, run: &DiffusionRun, a: f64, control: &dyn Control) -> Result<ControlledRun> {
    if !(a > 0.0) {
        return Err(Error::Domain(format!("scaling a(m) = {a} must be positive")));
    }
    euler_maruyama(kernels, run, Driver::Empirical, Some((control, a)))
}

/// Large self-consistent ensemble approximating the law `μ(t)` of the
/// McKean–Vlasov limit.
#[derive(Debug, Clone)]
pub struct McKeanReference {
    kernels: KernelPair,
    x0: f64,
    horizon: f64,
    dt: f64,
    fields: Vec<Field>,
    snapshots: ParticlePath,
}

/// Runs `m_ref` interacting particles on the reference noise streams,
/// keeping the mean field of every step and positions every
/// `snapshot_every` steps.
pub fn mckean_ensemble(
    kernels: &KernelPair,
    m_ref: usize,
    x0: f64,
    horizon: f64,
    dt: f64,
    seed: u64,
    snapshot_every: usize,
) -> Result<McKeanReference> {
    let run = DiffusionRun::new(m_ref, x0, horizon, dt, seed)
        .replica(REFERENCE_REPLICA)
        .record_every(snapshot_every);
    run.validate()?;
    let steps = run.steps();
    let dt_eff = run.step_size();
    let sqrt_dt = dt_eff.sqrt();
    let mut rngs: Vec<ChaCha8Rng> = (0..m_ref).map(|i| particle_stream(seed, REFERENCE_REPLICA, i)).collect();
    let mut xs = vec![x0; m_ref];
    let mut fields = Vec::with_capacity(steps);
    let mut times = vec![0.0];
    let mut positions = vec![xs.clone()];
    for n in 0..steps {
        let field = Field::of(kernels, &xs);
        for (i, (x, rng)) in xs.iter_mut().zip(rngs.iter_mut()).enumerate() {
            let (sigma, b) = field.coefficients(kernels, *x);
            let z: f64 = StandardNormal.sample(rng);
            *x += b * dt_eff + sigma * sqrt_dt * z;
            if !x.is_finite() {
                return Err(Error::NonFinite {
                    step: n + 1,
                    seed,
                    replica: REFERENCE_REPLICA,
                    particle: i,
                });
            }
        }
        fields.push(field);
        if run.is_recorded(n + 1) {
            times.push(if n + 1 == steps { horizon } else { (n + 1) as f64 * dt_eff });
            positions.push(xs.clone());
        }
    }
    Ok(McKeanReference {
        kernels: kernels.clone(),
        x0,
        horizon,
        dt: dt_eff,
        fields,
        snapshots: ParticlePath { times, positions },
    })
}

impl McKeanReference {
    pub fn m_ref(&self) -> usize {
        self.snapshots.m()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn snapshots(&self) -> &ParticlePath {
        &self.snapshots
    }

    /// `⟨μ(t), f⟩` at every snapshot time.
    pub fn pairing(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.snapshots.pairing(f)
    }

    /// `h = 1.06 σ̂ M^{−1/5}` at snapshot `n`; `None` if the snapshot has no
    /// spread.
    pub fn bandwidth(&self, n: usize) -> Option<f64> {
        let var = self.snapshots.variances()[n];
        let h = 1.06 * var.sqrt() * (self.m_ref() as f64).powf(-0.2);
        (h > 0.0).then_some(h)
    }

    /// Gaussian kernel density estimate of `μ(t_n)` at `x`.
    pub fn density(&self, n: usize, x: f64) -> Result<f64> {
        let h = self
            .bandwidth(n)
            .ok_or_else(|| Error::Domain("reference law is a point mass; no density".into()))?;
        let xs = &self.snapshots.positions[n];
        let norm = 1.0 / (h * (2.0 * std::f64::consts::PI).sqrt() * xs.len() as f64);
        Ok(norm * xs.iter().map(|&y| (-0.5 * ((x - y) / h).powi(2)).exp()).sum::<f64>())
    }

    /// `⟨ν̄, f⟩ = ∫₀ᵀ ⟨μ_s, f(·, s)⟩ ds` by the left rule on the snapshot times.
    pub fn occupation_pairing(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        let t = self.snapshots.times();
        (0..t.len() - 1)
            .map(|n| {
                let xs = &self.snapshots.positions[n];
                (t[n + 1] - t[n]) * xs.iter().map(|&x| f(x, t[n])).sum::<f64>() / xs.len() as f64
            })
            .sum()
    }

    fn check_run(&self, run: &DiffusionRun) -> Result<()> {
        if run.x0 != self.x0 || (run.horizon - self.horizon).abs() > 1e-12 || (run.step_size() - self.dt).abs() > 1e-15 {
            return Err(Error::Grid(
                "run does not share the reference time grid and initial point".into(),
            ));
        }
        Ok(())
    }

    /// The limit particles `X̄ᵢ`: independent copies of the McKean–Vlasov
    /// dynamics driven by the reference law, on the same noise streams as a
    /// run with identical `(seed, replica)`.
    pub fn drive(&self, run: &DiffusionRun) -> Result<ParticlePath> {
        self.check_run(run)?;
        euler_maruyama(&self.kernels, run, Driver::Prescribed(&self.fields), None).map(|r| r.path)
    }
}

/// `t ↦ a√m · [(1/m) Σ φ(Xᵢ(t)) − ⟨μ(t), φ⟩]` on the common grid of the path
/// and the reference snapshots.
pub fn fluctuation_pairing(
    path: &ParticlePath,
    reference: &McKeanReference,
    a: f64,
    phi: impl Fn(f64) -> f64,
) -> Result<Vec<f64>> {
    if path.times() != reference.snapshots.times() {
        return Err(Error::Grid("path and reference snapshots are on different grids".into()));
    }
    let scale = a * (path.m() as f64).sqrt();
    let own = path.pairing(&phi);
    let limit = reference.pairing(&phi);
    Ok(own.iter().zip(&limit).map(|(x, y)| scale * (x - y)).collect())
}

/// `(1/m) Σᵢ sup_t |X̃ᵢ(t) − X̄ᵢ(t)|²` over the recorded times.
pub fn coupling_gap(controlled: &ParticlePath, limit: &ParticlePath) -> Result<f64> {
    if controlled.times() != limit.times() || controlled.m() != limit.m() {
        return Err(Error::Grid("coupled paths must share grid and particle indices".into()));
    }
    let m = controlled.m();
    let mut sup = vec![0.0f64; m];
    for (a, b) in controlled.positions.iter().zip(&limit.positions) {
        for i in 0..m {
            sup[i] = sup[i].max((a[i] - b[i]).powi(2));
        }
    }
    Ok(sup.iter().sum::<f64>() / m as f64)
}

/// Samples `(y, x, s)` of control value, position and step start, each of
/// weight `Δt/m`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationMeasure {
    pub y: Vec<f64>,
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    pub weight: f64,
}

impl OccupationMeasure {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weight * self.len() as f64
    }

    /// `∫ f(y, x, s) ν(dy dx ds)`.
    pub fn pair(&self, f: impl Fn(f64, f64, f64) -> f64) -> f64 {
        self.weight * (0..self.len()).map(|n| f(self.y[n], self.x[n], self.s[n])).sum::<f64>()
    }

    /// Pairing of the `(x, s)` marginal.
    pub fn pair_xs(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.pair(|_, x, s| f(x, s))
    }
}

/// Occupation measure of a controlled run; needs every step recorded.
pub fn occupation_accumulate(run: &ControlledRun) -> Result<OccupationMeasure> {
    let controls = run
        .controls
        .as_ref()
        .ok_or_else(|| Error::Grid("occupation measure needs a run recorded at every step".into()))?;
    let m = run.path.m();
    let steps = controls.len();
    let mut occ = OccupationMeasure {
        y: Vec::with_capacity(steps * m),
        x: Vec::with_capacity(steps * m),
        s: Vec::with_capacity(steps * m),
        weight: run.dt / m as f64,
    };
    for (n, us) in controls.iter().enumerate() {
        let s = run.path.times[n];
        for (i, &u) in us.iter().enumerate() {
            occ.y.push(u);
            occ.x.push(run.path.positions[n][i]);
            occ.s.push(s);
        }
    }
    Ok(occ)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{Factor, Term};

    fn decay() -> KernelPair {
        KernelPair::new(
            Kernel::zero(),
            Kernel::Separable(vec![Term::new(-1.0, Factor::Linear, Factor::One)]),
        )
    }

    fn brownian() -> KernelPair {
        KernelPair::new(Kernel::constant(1.0), Kernel::zero())
    }

    #[test]
    fn zero_kernels_freeze_particles() {
        let p = simulate_interacting(&KernelPair::zero(), &DiffusionRun::new(10, 0.3, 1.0, 0.01, 1)).unwrap();
        assert!(p.positions().iter().flatten().all(|&x| x == 0.3));
    }

    #[test]
    fn linear_drift_follows_exponential_decay() {
        let run = DiffusionRun::new(5, 1.5, 2.0, 1e-3, 2);
        let p = simulate_interacting(&decay(), &run).unwrap();
        for (t, xs) in p.times().iter().zip(p.positions()) {
            let want = 1.5 * (-t).exp();
            assert!(xs.iter().all(|x| (x - want).abs() < 2.0 * run.dt));
        }
    }

    #[test]
    fn constant_diffusion_gives_gaussian_marginals() {
        let t = 0.8;
        let mut samples = Vec::new();
        for r in 0..100 {
            let run = DiffusionRun::new(100, 0.2, t, t / 16.0, 3).replica(r).record_every(16);
            samples.extend_from_slice(simulate_interacting(&brownian(), &run).unwrap().final_positions());
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - 0.2).abs() < 3.0 * (t / n).sqrt());
        assert!((var - t).abs() < 3.0 * t * (2.0 / (n - 1.0)).sqrt(), "{var}");
    }

    #[test]
    fn zero_control_matches_uncontrolled() {
        let k = KernelPair::default();
        let run = DiffusionRun::new(20, 0.5, 1.0, 1.0 / 64.0, 4);
        let free = simulate_interacting(&k, &run).unwrap();
        let ctl = simulate_controlled(&k, &run, 0.5, &|_: usize, _: f64, _: f64| 0.0).unwrap();
        assert_eq!(free, ctl.path);
        assert_eq!(ctl.cost, 0.0);
    }

    #[test]
    fn constant_control_shifts_and_costs() {
        let (m, t, c, a) = (16, 1.0, 0.7, 0.25);
        let run = DiffusionRun::new(m, 0.0, t, 1.0 / 128.0, 5);
        let free = simulate_interacting(&brownian(), &run).unwrap();
        let ctl = simulate_controlled(&brownian(), &run, a, &|_: usize, _: f64, _: f64| c).unwrap();
        let shift = c * t / (a * (m as f64).sqrt());
        for (x, y) in free.final_positions().iter().zip(ctl.path.final_positions()) {
            assert!((y - x - shift).abs() < 1e-12);
        }
        assert!((ctl.cost - c * c * t / 2.0).abs() < 1e-12);
    }

    #[test]
    fn reference_pairings() {
        let r = mckean_ensemble(&decay(), 50, 2.0, 1.0, 1e-3, 6, 100).unwrap();
        for (t, v) in r.snapshots().times().iter().zip(r.pairing(|x| x)) {
            assert!((v - 2.0 * (-t).exp()).abs() < 2e-3);
        }
        assert!(r.pairing(|_| 1.0).iter().all(|&v| v == 1.0));

        let r = mckean_ensemble(&brownian(), 4096, 0.5, 1.0, 1.0 / 32.0, 7, 32).unwrap();
        let second = *r.pairing(|x| x * x).last().unwrap();
        let se = (3.0f64 / 4096.0).sqrt();
        assert!((second - 1.25).abs() < 3.0 * se, "{second}");
        let h = r.bandwidth(1).unwrap();
        assert!((h - 1.06 * 4096f64.powf(-0.2)).abs() < 0.05);
        let mass = crate::quadrature::integrate(|x| r.density(1, x).unwrap(), -8.0, 8.0, 400);
        assert!((mass - 1.0).abs() < 1e-6);
    }

    #[test]
    fn fluctuation_pairing_is_mass_zero_and_linear() {
        let k = KernelPair::default();
        let r = mckean_ensemble(&k, 256, 0.5, 0.5, 1.0 / 64.0, 8, 8).unwrap();
        let run = DiffusionRun::new(40, 0.5, 0.5, 1.0 / 64.0, 9).record_every(8);
        let p = simulate_interacting(&k, &run).unwrap();
        let ones = fluctuation_pairing(&p, &r, 0.3, |_| 1.0).unwrap();
        assert!(ones.iter().all(|&v| v == 0.0));
        let f = fluctuation_pairing(&p, &r, 0.3, |x| x.sin()).unwrap();
        let g = fluctuation_pairing(&p, &r, 0.3, |x| 3.0 * x.sin()).unwrap();
        for (a, b) in f.iter().zip(&g) {
            assert!((b - 3.0 * a).abs() < 1e-12);
        }
        let misaligned = simulate_interacting(&k, &run.record_every(4)).unwrap();
        assert!(fluctuation_pairing(&misaligned, &r, 0.3, |x| x).is_err());
    }

    #[test]
    fn coupling_gap_examples() {
        let zero = KernelPair::zero();
        let r = mckean_ensemble(&zero, 8, 0.1, 1.0, 1.0 / 16.0, 10, 1).unwrap();
        let run = DiffusionRun::new(12, 0.1, 1.0, 1.0 / 16.0, 11);
        let ctl = simulate_controlled(&zero, &run, 0.5, &|_: usize, _: f64, _: f64| 1.0).unwrap();
        assert_eq!(coupling_gap(&ctl.path, &r.drive(&run).unwrap()).unwrap(), 0.0);

        let k = KernelPair::default();
        let r = mckean_ensemble(&k, 512, 0.1, 1.0, 1.0 / 16.0, 10, 1).unwrap();
        let ctl = simulate_controlled(&k, &run, 0.5, &|_: usize, _: f64, _: f64| 1.0).unwrap();
        let bar = r.drive(&run).unwrap();
        assert!(coupling_gap(&ctl.path, &bar).unwrap() > 0.0);
        // same streams: with the control off and m = M_ref on the reference
        // streams the limit particles are the reference particles themselves
        let own = DiffusionRun::new(512, 0.1, 1.0, 1.0 / 16.0, 10).replica(REFERENCE_REPLICA);
        let p = simulate_interacting(&k, &own).unwrap();
        assert_eq!(coupling_gap(&p, &r.drive(&own).unwrap()).unwrap(), 0.0);
        assert!(r.drive(&DiffusionRun::new(4, 0.2, 1.0, 1.0 / 16.0, 1)).is_err());
    }

    #[test]
    fn occupation_measure_weights() {
        let k = KernelPair::default();
        let run = DiffusionRun::new(10, 0.5, 0.75, 1.0 / 40.0, 12);
        let ctl = simulate_controlled(&k, &run, 1.0, &|_: usize, _: f64, _: f64| 0.0).unwrap();
        let occ = occupation_accumulate(&ctl).unwrap();
        assert!((occ.total_weight() - 0.75).abs() < 1e-12);
        assert!(occ.y.iter().all(|&y| y == 0.0));
        assert!(occupation_accumulate(
            &simulate_controlled(&k, &run.record_every(2), 1.0, &|_: usize, _: f64, _: f64| 0.0).unwrap()
        )
        .is_err());
    }

    #[test]
    fn occupation_pairing_approaches_reference() {
        let k = KernelPair::default();
        let r = mckean_ensemble(&k, 8192, 0.5, 1.0, 1.0 / 32.0, 13, 1).unwrap();
        let want = r.occupation_pairing(|x, s| x * s);
        let mut errs = Vec::new();
        for m in [16usize, 1024] {
            let mut e = 0.0;
            for rep in 0..8 {
                let run = DiffusionRun::new(m, 0.5, 1.0, 1.0 / 32.0, 14).replica(rep);
                let ctl = simulate_controlled(&k, &run, (m as f64).powf(-0.25), &|_: usize, _: f64, _: f64| 1.0).unwrap();
                e += (occupation_accumulate(&ctl).unwrap().pair_xs(|x, s| x * s) - want).abs();
            }
            errs.push(e / 8.0);
        }
        assert!(errs[1] < errs[0], "{errs:?}");
    }

    #[test]
    fn non_finite_positions_abort() {
        let blow = KernelPair::new(Kernel::zero(), Kernel::dense(|x, _| 1e300 * x.abs().max(1.0)));
        let err = simulate_interacting(&blow, &DiffusionRun::new(2, 1.0, 1.0, 0.1, 15)).unwrap_err();
        assert!(matches!(err, Error::NonFinite { seed: 15, .. }));
    }

    #[test]
    fn controlled_runs_are_reproducible() {
        let k = KernelPair::default();
        let run = DiffusionRun::new(30, 0.5, 0.5, 1.0 / 64.0, 16).replica(3);
        let u = |i: usize, s: f64, x: f64| (i as f64 * 0.1 + s - x).cos();
        assert_eq!(
            simulate_controlled(&k, &run, 0.5, &u).unwrap(),
            simulate_controlled(&k, &run, 0.5, &u).unwrap()
        );
    }
}
