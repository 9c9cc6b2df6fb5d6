//! Grid solvers for the diffusion limit: the McKean–Vlasov Fokker–Planck
//! density `ρ_t`, the linearized fluctuation equation driven by a control
//! `g`, and the diffusion rate function by inverting that equation.
//!
//! Everything is a conservative finite-volume scheme on cell centres
//! `x_k = x_lo + (k + ½)dx` with zero flux through both ends: the update is
//! `q_k ← q_k − (dt/dx)(Φ_{k+½} − Φ_{k−½})`, so mass is preserved to
//! rounding. Advective fluxes are upwind with a minmod-limited
//! reconstruction, diffusive fluxes central, time stepping explicit Euler.
//!
//! The linearized equation in flux form is
//!
//! ```text
//! ∂_t η = −∂_x Φ,   Φ = bη − ½∂_x(σ²η) + c_η ρ − ∂_x(σ d_η ρ) + σ g ρ,
//! c_η(y) = ∫ β(y, x) η(x) dx,   d_η(y) = ∫ α(y, x) η(x) dx,
//! ```
//!
//! the adjoint of `d/dt⟨η, φ⟩ = ⟨η, L(t)φ⟩ + ⟨σgρ, φ'⟩`.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{DiscreteMeasure, GridConfig, KernelPair};
use crate::path::format_f64;
use crate::schwartz::{apply_l, TestFunction};

/// Boundary-cell mass above which a grid is declared too narrow.
pub const BOUNDARY_MASS_TOL: f64 = 1e-10;
/// Relative level of `σ²ρ` below which `g` is unidentifiable.
pub const DEGENERACY_FLOOR: f64 = 1e-8;
/// Relative size of recovered flux tolerated inside the degenerate region.
pub const DEGENERATE_FLUX_TOL: f64 = 1e-4;
/// Relative mass leak tolerated by the rate inversion.
pub const LEAK_TOL: f64 = 1e-8;

impl GridConfig {
    /// `[−5, 5]`, 200 cells, `T = 1`, 1000 steps.
    pub fn default_grid() -> Self {
        Self {
            x_lo: -5.0,
            x_hi: 5.0,
            nx: 200,
            t: 1.0,
            steps: 1000,
        }
    }

    /// Same domain with `dx / 2` and `dt / 4`.
    pub fn refined(&self) -> Self {
        Self {
            nx: 2 * self.nx,
            steps: 4 * self.steps,
            ..self.clone()
        }
    }

    pub fn dx(&self) -> f64 {
        (self.x_hi - self.x_lo) / self.nx as f64
    }

    pub fn dt(&self) -> f64 {
        self.t / self.steps as f64
    }

    pub fn centres(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.nx).map(|k| self.x_lo + (k as f64 + 0.5) * dx).collect()
    }

    /// The `nx − 1` interior interfaces `x_{k+½}`.
    pub fn interfaces(&self) -> Vec<f64> {
        let dx = self.dx();
        (1..self.nx).map(|k| self.x_lo + k as f64 * dx).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        let dt = self.dt();
        (0..=self.steps)
            .map(|n| if n == self.steps { self.t } else { n as f64 * dt })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if !(self.x_hi > self.x_lo) || self.nx < 3 || self.steps == 0 || !(self.t > 0.0) {
            return Err(Error::Grid(format!("invalid grid {self:?}")));
        }
        Ok(())
    }
}

/// Cell-centred values on a uniform grid, one row per time level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridField {
    xs: Vec<f64>,
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl GridField {
    pub fn new(xs: Vec<f64>, times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if xs.len() < 3 || times.len() != values.len() || times.len() < 2 {
            return Err(Error::Grid("need ≥ 3 cells, ≥ 2 time levels and one row per time".into()));
        }
        if let Some(v) = values.iter().find(|v| v.len() != xs.len()) {
            return Err(Error::Dimension {
                expected: xs.len(),
                got: v.len(),
            });
        }
        let dx = xs[1] - xs[0];
        if !(dx > 0.0) || xs.windows(2).any(|w| ((w[1] - w[0]) - dx).abs() > 1e-9 * dx.max(1.0)) {
            return Err(Error::Grid("cell centres must be uniformly increasing".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Grid("times must be increasing".into()));
        }
        Ok(Self { xs, times, values })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn dx(&self) -> f64 {
        self.xs[1] - self.xs[0]
    }

    /// `∫ q(t_n, x) dx`.
    pub fn mass(&self, n: usize) -> f64 {
        self.values[n].iter().sum::<f64>() * self.dx()
    }

    /// `∫ q(t_n, x) f(x) dx`.
    pub fn pairing(&self, n: usize, f: impl Fn(f64) -> f64) -> f64 {
        self.xs.iter().zip(&self.values[n]).map(|(&x, q)| q * f(x)).sum::<f64>() * self.dx()
    }

    /// The time-`t_n` density as a discrete measure on the cell centres.
    pub fn measure(&self, n: usize) -> DiscreteMeasure {
        DiscreteMeasure::from_density(&self.xs, &self.values[n], self.dx())
    }

    /// Grids agree to `1e-9` of a cell, so CSV round trips still match.
    pub fn same_grid(&self, other: &GridField) -> bool {
        let close = |a: &[f64], b: &[f64], h: f64| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9 * h);
        let dt = self.times.get(1).map_or(1.0, |t| t - self.times[0]);
        close(&self.xs, &other.xs, self.dx()) && close(&self.times, &other.times, dt)
    }

    /// The grid description this field lives on.
    pub fn grid_config(&self) -> GridConfig {
        let dx = self.dx();
        GridConfig {
            x_lo: self.xs[0] - 0.5 * dx,
            x_hi: self.xs[self.xs.len() - 1] + 0.5 * dx,
            nx: self.xs.len(),
            t: self.times[self.times.len() - 1],
            steps: self.times.len() - 1,
        }
    }

    /// Header `time, x_1, …, x_nx`; one row per time level.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(w, "time")?;
        for x in &self.xs {
            write!(w, ",{}", format_f64(*x))?;
        }
        writeln!(w)?;
        for (t, row) in self.times.iter().zip(&self.values) {
            write!(w, "{}", format_f64(*t))?;
            for v in row {
                write!(w, ",{}", format_f64(*v))?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Grid(format!("bad number {s:?}: {e}")))
        };
        let xs = r.headers()?.iter().skip(1).map(parse).collect::<Result<Vec<_>>>()?;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let mut it = rec.iter();
            times.push(parse(it.next().unwrap_or(""))?);
            values.push(it.map(parse).collect::<Result<Vec<_>>>()?);
        }
        Self::new(xs, times, values)
    }
}

/// `min(dx² / max σ², …)` style stability limit of the explicit update:
/// `dt (max σ² / dx² + 2 max|b| / dx) ≤ 1`.
fn stable_dt(sigma: &[f64], b: &[f64], dx: f64) -> f64 {
    let s2 = sigma.iter().map(|s| s * s).fold(0.0, f64::max);
    let bmax = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let rate = s2 / (dx * dx) + 2.0 * bmax / dx;
    if rate == 0.0 {
        f64::INFINITY
    } else {
        1.0 / rate
    }
}

fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

/// Interior fluxes `v_{k+½} q̂_{k+½}` with limited upwind reconstruction.
fn advective_flux(q: &[f64], v: &[f64], out: &mut [f64]) {
    let n = q.len();
    let slope = |k: usize| {
        if k == 0 || k + 1 == n {
            0.0
        } else {
            minmod(q[k] - q[k - 1], q[k + 1] - q[k])
        }
    };
    for k in 0..n - 1 {
        let face = if v[k] >= 0.0 {
            q[k] + 0.5 * slope(k)
        } else {
            q[k + 1] - 0.5 * slope(k + 1)
        };
        out[k] += v[k] * face;
    }
}

/// Interior fluxes `−∂_x D` for centre values `D`.
fn gradient_flux(d: &[f64], scale: f64, dx: f64, out: &mut [f64]) {
    for k in 0..d.len() - 1 {
        out[k] -= scale * (d[k + 1] - d[k]) / dx;
    }
}

/// `q_k ← q_k − (dt/dx)(Φ_{k+½} − Φ_{k−½})` with zero boundary flux.
fn apply_fluxes(q: &[f64], flux: &[f64], dt: f64, dx: f64) -> Vec<f64> {
    let n = q.len();
    (0..n)
        .map(|k| {
            let right = if k + 1 < n { flux[k] } else { 0.0 };
            let left = if k > 0 { flux[k - 1] } else { 0.0 };
            q[k] - dt / dx * (right - left)
        })
        .collect()
}

/// Mean-field coefficients of one time level.
struct Coefficients {
    /// `σ(x_k, μ)` at centres.
    sigma_c: Vec<f64>,
    /// `σ(x_{k+½}, μ)` at interfaces.
    sigma_f: Vec<f64>,
    /// `b(x_{k+½}, μ)` at interfaces.
    b_f: Vec<f64>,
}

impl Coefficients {
    fn new(kernels: &KernelPair, mu: &DiscreteMeasure, centres: &[f64], faces: &[f64]) -> Self {
        Self {
            sigma_c: kernels.sigma(centres, mu),
            sigma_f: kernels.sigma(faces, mu),
            b_f: kernels.drift(faces, mu),
        }
    }

    fn check_cfl(&self, dt: f64, dx: f64) -> Result<()> {
        let limit = stable_dt(&self.sigma_c, &self.b_f, dx);
        if dt > limit {
            return Err(Error::Cfl { dt, limit });
        }
        Ok(())
    }
}

fn check_boundary(q: &[f64], dx: f64, scale: f64, time: f64) -> Result<()> {
    let mass = (q[0].abs() + q[q.len() - 1].abs()) * dx;
    if mass > BOUNDARY_MASS_TOL * scale {
        return Err(Error::BoundaryMass { mass, time });
    }
    Ok(())
}

/// `ρ_0`: the point mass at `x0` mollified to a Gaussian of width `4dx`,
/// normalized to unit mass on the grid.
pub fn mollified_initial(grid: &GridConfig, x0: f64) -> Vec<f64> {
    let w0 = 4.0 * grid.dx();
    let mut rho: Vec<f64> = grid
        .centres()
        .iter()
        .map(|x| (-0.5 * ((x - x0) / w0).powi(2)).exp())
        .collect();
    let mass = rho.iter().sum::<f64>() * grid.dx();
    rho.iter_mut().for_each(|r| *r /= mass);
    rho
}

/// `∂_tρ = −∂_x[b(x, μ_t)ρ] + ½∂_xx[σ²(x, μ_t)ρ]` with `μ_t = ρ_t dx`
/// recomputed every step.
pub fn solve_fokker_planck(kernels: &KernelPair, x0: f64, grid: &GridConfig) -> Result<GridField> {
    grid.validate()?;
    let (dx, dt) = (grid.dx(), grid.dt());
    let centres = grid.centres();
    let faces = grid.interfaces();
    let times = grid.times();
    let mut rho = mollified_initial(grid, x0);
    check_boundary(&rho, dx, 1.0, 0.0)?;
    let mut values = Vec::with_capacity(grid.steps + 1);
    values.push(rho.clone());
    let mut flux = vec![0.0; grid.nx - 1];
    for n in 0..grid.steps {
        let mu = DiscreteMeasure::from_density(&centres, &rho, dx);
        let c = Coefficients::new(kernels, &mu, &centres, &faces);
        c.check_cfl(dt, dx)?;
        flux.iter_mut().for_each(|f| *f = 0.0);
        advective_flux(&rho, &c.b_f, &mut flux);
        let d: Vec<f64> = rho.iter().zip(&c.sigma_c).map(|(r, s)| s * s * r).collect();
        gradient_flux(&d, 0.5, dx, &mut flux);
        rho = apply_fluxes(&rho, &flux, dt, dx);
        check_boundary(&rho, dx, 1.0, times[n + 1])?;
        values.push(rho.clone());
    }
    GridField::new(centres, times, values)
}

/// Flux of the linearized equation without the control term.
fn homogeneous_flux(
    kernels: &KernelPair,
    rho: &[f64],
    eta: &[f64],
    c: &Coefficients,
    centres: &[f64],
    faces: &[f64],
    dx: f64,
) -> Vec<f64> {
    let mut flux = vec![0.0; rho.len() - 1];
    advective_flux(eta, &c.b_f, &mut flux);
    let d: Vec<f64> = eta.iter().zip(&c.sigma_c).map(|(e, s)| s * s * e).collect();
    gradient_flux(&d, 0.5, dx, &mut flux);
    let eta_mu = DiscreteMeasure::from_density(centres, eta, dx);
    if !kernels.beta.is_zero() {
        // c_η ρ at interfaces
        let c_eta = kernels.beta.average(faces, &eta_mu);
        for k in 0..flux.len() {
            flux[k] += c_eta[k] * 0.5 * (rho[k] + rho[k + 1]);
        }
    }
    if !kernels.alpha.is_zero() {
        let d_eta = kernels.alpha.average(centres, &eta_mu);
        let e: Vec<f64> = (0..rho.len()).map(|k| c.sigma_c[k] * d_eta[k] * rho[k]).collect();
        gradient_flux(&e, 1.0, dx, &mut flux);
    }
    flux
}

/// Control flux `σ g ρ` at interior interfaces on step `n`.
fn control_flux(c: &Coefficients, rho: &[f64], faces: &[f64], t: f64, g: &dyn Fn(f64, f64) -> f64) -> Vec<f64> {
    (0..faces.len())
        .map(|k| c.sigma_f[k] * g(faces[k], t) * 0.5 * (rho[k] + rho[k + 1]))
        .collect()
}

fn grid_of(rho: &GridField) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let dx = rho.dx();
    let lo = rho.xs[0] - 0.5 * dx;
    let faces = (1..rho.xs.len()).map(|k| lo + k as f64 * dx).collect();
    Ok((rho.xs.clone(), faces, dx))
}

/// Solves the linearized equation from `η(0) = 0` with control `g(x, t)`
/// held at its left-endpoint value on each step.
pub fn solve_linearized(kernels: &KernelPair, rho: &GridField, g: &dyn Fn(f64, f64) -> f64) -> Result<GridField> {
    let (centres, faces, dx) = grid_of(rho)?;
    let times = rho.times.clone();
    let mut eta = vec![0.0; centres.len()];
    let mut values = Vec::with_capacity(times.len());
    values.push(eta.clone());
    for n in 0..times.len() - 1 {
        let dt = times[n + 1] - times[n];
        let r = &rho.values[n];
        let c = Coefficients::new(kernels, &rho.measure(n), &centres, &faces);
        c.check_cfl(dt, dx)?;
        let mut flux = homogeneous_flux(kernels, r, &eta, &c, &centres, &faces, dx);
        for (f, s) in flux.iter_mut().zip(control_flux(&c, r, &faces, times[n], g)) {
            *f += s;
        }
        eta = apply_fluxes(&eta, &flux, dt, dx);
        if eta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("η became non-finite at t = {}", times[n + 1])));
        }
        let scale = eta.iter().map(|v| v.abs()).sum::<f64>() * dx;
        if scale > 0.0 {
            check_boundary(&eta, dx, scale, times[n + 1])?;
        }
        values.push(eta.clone());
    }
    GridField::new(centres, times, values)
}

/// `½ ∫∫ g² ρ dx dt` on the quadrature used by [`rate_diffusion`]: interface
/// values with `ρ_{k+½}` the neighbour average, left endpoint in time.
pub fn control_cost(rho: &GridField, g: &dyn Fn(f64, f64) -> f64) -> Result<f64> {
    let (_, faces, dx) = grid_of(rho)?;
    let mut total = 0.0;
    for n in 0..rho.times.len() - 1 {
        let dt = rho.times[n + 1] - rho.times[n];
        let r = &rho.values[n];
        total += dt
            * dx
            * (0..faces.len())
                .map(|k| g(faces[k], rho.times[n]).powi(2) * 0.5 * (r[k] + r[k + 1]))
                .sum::<f64>();
    }
    Ok(0.5 * total)
}

/// Outcome of [`rate_diffusion`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffRateReport {
    pub value: Option<f64>,
    pub feasible: bool,
    pub diagnostic: Option<String>,
    /// Largest `|∫ residual dx|` over the steps (flux left at `x_hi`).
    pub max_leak: f64,
    /// Largest recovered flux where `σ²ρ` is below the degeneracy floor.
    pub max_degenerate_flux: f64,
}

impl DiffRateReport {
    fn infeasible(msg: String, max_leak: f64, max_degenerate_flux: f64) -> Self {
        Self {
            value: None,
            feasible: false,
            diagnostic: Some(msg),
            max_leak,
            max_degenerate_flux,
        }
    }

    pub fn value_or_infinity(&self) -> f64 {
        self.value.unwrap_or(f64::INFINITY)
    }
}

/// Inverts the linearized equation for the control flux `σgρ` and returns
/// `½ ∫∫ (σgρ)² / (σ²ρ) dx dt` over the region where `σ²ρ` exceeds
/// `1e-8 · max σ²ρ`.
///
/// The residual `F = ∂_t η + ∂_x Φ_hom` is integrated from `x_lo`; its value
/// at `x_hi` is the mass leak and must vanish. Recovered flux inside the
/// degenerate region makes the path infeasible.
pub fn rate_diffusion(kernels: &KernelPair, rho: &GridField, eta: &GridField) -> Result<DiffRateReport> {
    if !rho.same_grid(eta) {
        return Err(Error::Grid("η and ρ must share the grid".into()));
    }
    let (centres, faces, dx) = grid_of(rho)?;
    let scale = eta.values.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    if scale == 0.0 {
        return Ok(DiffRateReport {
            value: Some(0.0),
            feasible: true,
            diagnostic: None,
            max_leak: 0.0,
            max_degenerate_flux: 0.0,
        });
    }
    if eta.values[0].iter().any(|v| v.abs() > 1e-12 * scale) {
        return Ok(DiffRateReport::infeasible("η(0) ≠ 0".into(), 0.0, 0.0));
    }
    let steps = rho.times.len() - 1;
    let mut fluxes = Vec::with_capacity(steps);
    let mut weights = Vec::with_capacity(steps);
    let mut leaks = Vec::with_capacity(steps);
    for n in 0..steps {
        let dt = rho.times[n + 1] - rho.times[n];
        let r = &rho.values[n];
        let c = Coefficients::new(kernels, &rho.measure(n), &centres, &faces);
        let hom = homogeneous_flux(kernels, r, &eta.values[n], &c, &centres, &faces, dx);
        let (e0, e1) = (&eta.values[n], &eta.values[n + 1]);
        // Σ_{j≤k} residual_j dx = −(flux of σgρ through x_{k+½})
        let mut acc = 0.0;
        let mut sf = Vec::with_capacity(faces.len());
        for k in 0..centres.len() {
            let right = if k < hom.len() { hom[k] } else { 0.0 };
            let left = if k > 0 { hom[k - 1] } else { 0.0 };
            acc += (e1[k] - e0[k]) / dt * dx + (right - left);
            if k < faces.len() {
                sf.push(-acc);
            }
        }
        leaks.push(acc.abs());
        weights.push(
            (0..faces.len())
                .map(|k| c.sigma_f[k].powi(2) * 0.5 * (r[k] + r[k + 1]))
                .collect::<Vec<f64>>(),
        );
        fluxes.push(sf);
    }
    let max_flux = fluxes.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    let max_leak = leaks.iter().copied().fold(0.0, f64::max);
    let leak_scale = max_flux.max(scale);
    let floor = DEGENERACY_FLOOR * weights.iter().flatten().copied().fold(0.0, f64::max);
    let mut max_degenerate = 0.0f64;
    let mut total = 0.0;
    for n in 0..steps {
        let dt = rho.times[n + 1] - rho.times[n];
        for (s, w) in fluxes[n].iter().zip(&weights[n]) {
            if *w > floor {
                total += dt * dx * s * s / w;
            } else {
                max_degenerate = max_degenerate.max(s.abs());
            }
        }
    }
    if max_leak > LEAK_TOL * leak_scale {
        return Ok(DiffRateReport::infeasible(
            format!("mass leak {max_leak:.3e}: η is not mass-zero or not reachable"),
            max_leak,
            max_degenerate,
        ));
    }
    if max_degenerate > DEGENERATE_FLUX_TOL * max_flux {
        return Ok(DiffRateReport::infeasible(
            format!("flux {max_degenerate:.3e} where σ²ρ is degenerate"),
            max_leak,
            max_degenerate,
        ));
    }
    Ok(DiffRateReport {
        value: Some(0.5 * total),
        feasible: true,
        diagnostic: None,
        max_leak,
        max_degenerate_flux: max_degenerate,
    })
}

/// Largest weak-form defect
/// `|d/dt⟨η, φ⟩ − ⟨η, L(t)φ⟩ − ⟨σgρ, φ'⟩|` over the steps, with the time
/// derivative a forward difference and pairings by the midpoint rule.
pub fn weak_form_residual(
    kernels: &KernelPair,
    rho: &GridField,
    eta: &GridField,
    g: &dyn Fn(f64, f64) -> f64,
    phi: &TestFunction,
) -> Result<f64> {
    if !rho.same_grid(eta) {
        return Err(Error::Grid("η and ρ must share the grid".into()));
    }
    let xs = rho.xs();
    let d1 = phi.derivative();
    let dphi: Vec<f64> = xs.iter().map(|&x| d1.eval(x)).collect();
    let mut worst = 0.0f64;
    for n in 0..rho.times.len() - 1 {
        let dt = rho.times[n + 1] - rho.times[n];
        let t = rho.times[n];
        let lhs = (eta.pairing(n + 1, |x| phi.eval(x)) - eta.pairing(n, |x| phi.eval(x))) / dt;
        let mu = rho.measure(n);
        let l = apply_l(kernels, Some(&mu), phi)?.eval_many(xs);
        let eta_l: f64 = eta.values[n].iter().zip(&l).map(|(e, v)| e * v).sum::<f64>() * rho.dx();
        let sigma = kernels.sigma(xs, &mu);
        let forcing: f64 = (0..xs.len())
            .map(|k| sigma[k] * g(xs[k], t) * rho.values[n][k] * dphi[k])
            .sum::<f64>()
            * rho.dx();
        worst = worst.max((lhs - eta_l - forcing).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{Factor, Kernel, Term};
    use std::f64::consts::PI;

    fn brownian() -> KernelPair {
        KernelPair::new(Kernel::constant(1.0), Kernel::zero())
    }

    fn decay() -> KernelPair {
        KernelPair::new(
            Kernel::zero(),
            Kernel::Separable(vec![Term::new(-1.0, Factor::Linear, Factor::One)]),
        )
    }

    fn wide(nx: usize, steps: usize) -> GridConfig {
        GridConfig {
            x_lo: -8.0,
            x_hi: 8.0,
            nx,
            t: 1.0,
            steps,
        }
    }

    fn gauss(x: f64, mean: f64, var: f64) -> f64 {
        (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
    }

    #[test]
    fn heat_kernel_solution() {
        let mut errs = Vec::new();
        for grid in [wide(160, 200), wide(320, 800)] {
            let rho = solve_fokker_planck(&brownian(), 0.5, &grid).unwrap();
            let w0 = 4.0 * grid.dx();
            let n = grid.steps;
            let err: f64 = rho
                .xs()
                .iter()
                .zip(&rho.values()[n])
                .map(|(&x, r)| (r - gauss(x, 0.5, w0 * w0 + 1.0)).abs())
                .sum::<f64>()
                * grid.dx();
            for k in 0..=n {
                assert!((rho.mass(k) - 1.0).abs() < 1e-12);
            }
            errs.push(err);
        }
        assert!(errs[0] < 5e-3, "{errs:?}");
        assert!(errs[1] < 0.5 * errs[0], "{errs:?}");
    }

    #[test]
    fn degenerate_transport_follows_characteristics() {
        let grid = GridConfig {
            x_lo: -1.0,
            x_hi: 3.0,
            nx: 400,
            t: 1.0,
            steps: 2000,
        };
        let rho = solve_fokker_planck(&decay(), 1.5, &grid).unwrap();
        for (n, &t) in rho.times().iter().enumerate().step_by(200) {
            let mean = rho.pairing(n, |x| x);
            assert!(
                (mean - 1.5 * (-t).exp()).abs() < 5.0 * (grid.dx().powi(2) + grid.dt()),
                "t={t}: {mean}"
            );
            assert!(rho.values()[n].iter().all(|&r| r >= 0.0));
        }
    }

    #[test]
    fn guards_trip() {
        let narrow = GridConfig {
            x_lo: -1.0,
            x_hi: 1.0,
            nx: 40,
            t: 1.0,
            steps: 2000,
        };
        assert!(matches!(
            solve_fokker_planck(&brownian(), 0.0, &narrow),
            Err(Error::BoundaryMass { .. })
        ));
        assert!(matches!(
            solve_fokker_planck(&brownian(), 0.0, &wide(400, 10)),
            Err(Error::Cfl { .. })
        ));
    }

    #[test]
    fn linearized_examples() {
        let k = KernelPair::default();
        let grid = GridConfig::default_grid();
        let rho = solve_fokker_planck(&k, 0.5, &grid).unwrap();
        let zero = solve_linearized(&k, &rho, &|_, _| 0.0).unwrap();
        assert!(zero.values().iter().flatten().all(|&v| v == 0.0));
        let g = |x: f64, t: f64| (x + t).sin() + 0.5;
        let a = solve_linearized(&k, &rho, &g).unwrap();
        let b = solve_linearized(&k, &rho, &|x, t| 2.0 * g(x, t)).unwrap();
        for (u, v) in a.values().iter().flatten().zip(b.values().iter().flatten()) {
            assert!((v - 2.0 * u).abs() <= 1e-12 * (1.0 + u.abs()));
        }
        for n in 0..a.times().len() {
            assert!(a.mass(n).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_forcing_of_brownian_motion() {
        // η = −t ∂_x ρ_t solves ∂_tη = ½∂_xxη − ∂_xρ
        let mut errs = Vec::new();
        for grid in [wide(160, 200), wide(320, 800)] {
            let rho = solve_fokker_planck(&brownian(), 0.5, &grid).unwrap();
            let eta = solve_linearized(&brownian(), &rho, &|_, _| 1.0).unwrap();
            let var = (4.0 * grid.dx()).powi(2) + 1.0;
            let err: f64 = eta
                .xs()
                .iter()
                .zip(eta.values().last().unwrap())
                .map(|(&x, e)| (e - (x - 0.5) / var * gauss(x, 0.5, var)).abs())
                .sum::<f64>()
                * grid.dx();
            errs.push(err);
        }
        assert!(errs[0] < 1e-2, "{errs:?}");
        assert!(errs[1] < 0.5 * errs[0], "{errs:?}");
    }

    #[test]
    fn rate_round_trip_is_exact_on_the_grid() {
        let k = KernelPair::default();
        let rho = solve_fokker_planck(&k, 0.5, &GridConfig::default_grid()).unwrap();
        let g = |x: f64, t: f64| 1.0 + 0.5 * (x - t).cos();
        let eta = solve_linearized(&k, &rho, &g).unwrap();
        let r = rate_diffusion(&k, &rho, &eta).unwrap();
        let cost = control_cost(&rho, &g).unwrap();
        assert!(r.feasible, "{:?}", r.diagnostic);
        assert!((r.value.unwrap() - cost).abs() <= 1e-3 * cost, "{:?} vs {cost}", r.value);
    }

    #[test]
    fn rate_trivial_and_infeasible() {
        let k = KernelPair::default();
        let rho = solve_fokker_planck(&k, 0.5, &GridConfig::default_grid()).unwrap();
        let zero = GridField::new(
            rho.xs().to_vec(),
            rho.times().to_vec(),
            vec![vec![0.0; 200]; rho.times().len()],
        )
        .unwrap();
        assert_eq!(rate_diffusion(&k, &rho, &zero).unwrap().value, Some(0.0));
        let massive = GridField::new(
            rho.xs().to_vec(),
            rho.times().to_vec(),
            rho.times()
                .iter()
                .map(|&t| rho.xs().iter().map(|&x| t * gauss(x, 0.5, 0.1)).collect())
                .collect(),
        )
        .unwrap();
        let r = rate_diffusion(&k, &rho, &massive).unwrap();
        assert!(!r.feasible && r.diagnostic.unwrap().contains("leak"));
    }

    #[test]
    fn weak_form_defect_shrinks() {
        let k = KernelPair::default();
        let phi = TestFunction::from_hermite(&[0.3, 1.0, 0.2]);
        let g = |x: f64, _t: f64| (-x * x / 8.0).exp();
        let mut res = Vec::new();
        for grid in [GridConfig::default_grid(), GridConfig::default_grid().refined()] {
            let rho = solve_fokker_planck(&k, 0.5, &grid).unwrap();
            let eta = solve_linearized(&k, &rho, &g).unwrap();
            res.push(weak_form_residual(&k, &rho, &eta, &g, &phi).unwrap());
        }
        assert!(res[1] < res[0], "{res:?}");
    }

    #[test]
    fn csv_round_trip() {
        let rho = solve_fokker_planck(
            &KernelPair::default(),
            0.5,
            &GridConfig {
                steps: 20,
                t: 0.02,
                ..GridConfig::default_grid()
            },
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rho.csv");
        rho.write_csv(&p).unwrap();
        assert_eq!(GridField::read_csv(&p).unwrap(), rho);
    }
}
