//! Deterministic limit objects of the jump model: the law-of-large-numbers
//! path `p`, the skeleton map `ψ ↦ η`, and the rate functions evaluated as
//! least-norm control problems.
//!
//! All time discretizations here share one convention: on a grid step
//! `[t_n, t_{n+1}]` the limit path is frozen at the midpoint value
//! `p̄_n = (p_n + p_{n+1})/2`, and the linearized equation
//! `η̇ = Db(p)[η] + f` is advanced by the implicit midpoint rule. The rate
//! functions invert exactly this scheme, so a forward solve followed by an
//! inverse evaluation reproduces the control cost to rounding.

mod maps;

pub use maps::{psi_from_u, u_from_field, u_from_psi, ControlMatrixU};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::jump_sim::JumpControl;
use crate::model::{band_pairs, db_apply, drift, l2_norm, rate, RateModel, SimplexVec};
use crate::path::{midpoint, uniform_grid, PathVec};

/// Singular values below this fraction of the largest are treated as zero.
pub const SVD_CUTOFF: f64 = 1e-10;
/// A residual component orthogonal to the column space larger than
/// `INFEASIBLE_TOL · max(1, ‖r‖)` makes the path infeasible.
pub const INFEASIBLE_TOL: f64 = 1e-6;
/// Tolerance on `Σ_i η_i = 0` and on `η(0) = 0`.
pub const MASS_TOL: f64 = 1e-10;

/// Law-of-large-numbers path `ṗ = b(p)` by classical RK4 on a uniform grid
/// of `steps` intervals.
///
/// A step whose result has an entry below `−1e-12` is retried as two half
/// steps. After each step the sum defect is removed proportionally when it
/// exceeds `1e-12`.
pub fn solve_p<M: RateModel + ?Sized>(model: &M, p0: &SimplexVec, horizon: f64, steps: usize) -> Result<PathVec> {
    if p0.dim() != model.num_states() {
        return Err(Error::Dimension {
            expected: model.num_states(),
            got: p0.dim(),
        });
    }
    if steps == 0 || !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Grid(format!(
            "need steps >= 1 and a positive horizon (got {steps}, {horizon})"
        )));
    }
    let grid = uniform_grid(horizon, steps);
    let mut values = Vec::with_capacity(grid.len());
    let mut q = p0.to_vec();
    values.push(q.clone());
    for w in grid.windows(2) {
        q = advance(model, &q, w[1] - w[0], 0)?;
        values.push(q.clone());
    }
    PathVec::new(grid, values)
}

fn rk4<M: RateModel + ?Sized>(model: &M, q: &[f64], h: f64) -> Vec<f64> {
    let add = |a: &[f64], b: &[f64], c: f64| a.iter().zip(b).map(|(x, y)| x + c * y).collect::<Vec<f64>>();
    let k1 = drift(model, q);
    let k2 = drift(model, &add(q, &k1, h / 2.0));
    let k3 = drift(model, &add(q, &k2, h / 2.0));
    let k4 = drift(model, &add(q, &k3, h));
    (0..q.len())
        .map(|i| q[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

fn advance<M: RateModel + ?Sized>(model: &M, q: &[f64], h: f64, depth: u32) -> Result<Vec<f64>> {
    let mut next = rk4(model, q, h);
    if next.iter().any(|&x| x < -1e-12) {
        if depth >= 30 {
            return Err(Error::Simplex("RK4 step cannot keep the path nonnegative".into()));
        }
        let half = advance(model, q, h / 2.0, depth + 1)?;
        return advance(model, &half, h / 2.0, depth + 1);
    }
    next.iter_mut().for_each(|x| *x = x.max(0.0));
    let s: f64 = next.iter().sum();
    if (s - 1.0).abs() > 1e-12 {
        next.iter_mut().for_each(|x| *x /= s);
    }
    Ok(next)
}

/// `Db(q)` as a `K × K` matrix (column `j` is `Db(q)[e_j]`).
pub fn db_matrix<M: RateModel + ?Sized>(model: &M, q: &[f64]) -> Result<DMatrix<f64>> {
    let k = model.num_states();
    let mut d = DMatrix::zeros(k, k);
    let mut e = vec![0.0; k];
    for j in 0..k {
        e[j] = 1.0;
        let col = db_apply(model, q, &e)?;
        e[j] = 0.0;
        for i in 0..k {
            d[(i, j)] = col[i];
        }
    }
    Ok(d)
}

fn check_limit_path<M: RateModel + ?Sized>(model: &M, p: &PathVec) -> Result<()> {
    if p.dim() != model.num_states() {
        return Err(Error::Dimension {
            expected: model.num_states(),
            got: p.dim(),
        });
    }
    if p.len() < 2 || p.times().windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Grid(
            "limit path needs a strictly increasing grid with at least two points".into(),
        ));
    }
    Ok(())
}

/// Implicit-midpoint march of `η̇ = Db(p)[η] + f`, `η(0) = 0`, where
/// `forcing(n, p̄_n)` returns the forcing on step `n`.
fn march<M, F>(model: &M, p: &PathVec, forcing: F) -> Result<PathVec>
where
    M: RateModel + ?Sized,
    F: Fn(usize, &[f64]) -> Vec<f64>,
{
    check_limit_path(model, p)?;
    let k = model.num_states();
    let t = p.times();
    let v = p.values();
    let mut eta = vec![vec![0.0; k]];
    let id = DMatrix::<f64>::identity(k, k);
    for n in 0..t.len() - 1 {
        let dt = t[n + 1] - t[n];
        let mid = midpoint(&v[n], &v[n + 1]);
        let d = db_matrix(model, &mid)?;
        let f = DVector::from_vec(forcing(n, &mid));
        let cur = DVector::from_column_slice(&eta[n]);
        let lhs = &id - &d * (0.5 * dt);
        let rhs = &cur + (&d * &cur) * (0.5 * dt) + f * dt;
        let next = lhs
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Grid(format!("singular implicit step at t = {}; refine the grid", t[n])))?;
        eta.push(next.iter().copied().collect());
    }
    PathVec::new(t.to_vec(), eta)
}

/// Forcing `Σ_{i≠j} (e_j − e_i) ψ_ij p_iΓ_ij(p)` at a frozen `p`.
pub fn cell_forcing<M, F>(model: &M, p: &[f64], psi: F) -> Vec<f64>
where
    M: RateModel + ?Sized,
    F: Fn(usize, usize) -> f64,
{
    let mut f = vec![0.0; model.num_states()];
    for (i, j) in band_pairs(model) {
        let w = psi(i, j) * rate(model, p, i, j);
        f[j] += w;
        f[i] -= w;
    }
    f
}

/// Skeleton map `G₀(ψ)`: the solution of
/// `η(t) = ∫₀ᵗ Db(p)[η] ds + ∫₀ᵗ Σ (e_j − e_i) ψ_ij p_iΓ_ij(p) ds` on the grid of `p`.
pub fn skeleton<M: RateModel + ?Sized>(model: &M, p: &PathVec, psi: &JumpControl) -> Result<PathVec> {
    check_control(model, p, psi)?;
    let t = p.times().to_vec();
    march(model, p, |n, mid| {
        let bin = psi.bin_at(0.5 * (t[n] + t[n + 1]));
        cell_forcing(model, mid, |i, j| psi.get(bin, i, j))
    })
}

/// Forward solution driven by `u`: forcing `Σ (e_j − e_i) √(p_iΓ_ij(p)) u_ij`.
pub fn skeleton_u<M: RateModel + ?Sized>(model: &M, p: &PathVec, u: &ControlMatrixU) -> Result<PathVec> {
    u.check_grid(p)?;
    march(model, p, |n, mid| {
        let mut f = vec![0.0; model.num_states()];
        for (i, j) in band_pairs(model) {
            let w = u.get(n, i, j) * rate(model, mid, i, j).sqrt();
            f[j] += w;
            f[i] -= w;
        }
        f
    })
}

fn check_control<M: RateModel + ?Sized>(model: &M, p: &PathVec, psi: &JumpControl) -> Result<()> {
    if psi.num_states() != model.num_states() {
        return Err(Error::Dimension {
            expected: model.num_states(),
            got: psi.num_states(),
        });
    }
    if psi.horizon() < p.horizon() - 1e-12 {
        return Err(Error::Grid(format!(
            "control horizon {} is shorter than the path horizon {}",
            psi.horizon(),
            p.horizon()
        )));
    }
    Ok(())
}

/// Fixed-point (Picard) iteration for the same discrete skeleton equation,
/// started from an arbitrary `guess`. Returns the solution and the number of
/// sweeps used.
pub fn skeleton_picard<M: RateModel + ?Sized>(
    model: &M,
    p: &PathVec,
    psi: &JumpControl,
    guess: &PathVec,
    tol: f64,
    max_iter: usize,
) -> Result<(PathVec, usize)> {
    check_limit_path(model, p)?;
    check_control(model, p, psi)?;
    if guess.times() != p.times() || guess.dim() != p.dim() {
        return Err(Error::Grid("initial guess must live on the grid of p".into()));
    }
    let t = p.times();
    let v = p.values();
    let steps = t.len() - 1;
    let mut ds = Vec::with_capacity(steps);
    let mut fs = Vec::with_capacity(steps);
    for n in 0..steps {
        let mid = midpoint(&v[n], &v[n + 1]);
        ds.push(db_matrix(model, &mid)?);
        let bin = psi.bin_at(0.5 * (t[n] + t[n + 1]));
        fs.push(DVector::from_vec(cell_forcing(model, &mid, |i, j| psi.get(bin, i, j))));
    }
    let k = model.num_states();
    let mut cur: Vec<DVector<f64>> = guess.values().iter().map(|x| DVector::from_column_slice(x)).collect();
    for it in 1..=max_iter {
        let mut next = Vec::with_capacity(cur.len());
        let mut acc = DVector::zeros(k);
        next.push(acc.clone());
        for n in 0..steps {
            let dt = t[n + 1] - t[n];
            acc += (&ds[n] * (&cur[n] + &cur[n + 1]) * 0.5 + &fs[n]) * dt;
            next.push(acc.clone());
        }
        let change = next.iter().zip(&cur).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        cur = next;
        if change <= tol {
            let values = cur.iter().map(|x| x.iter().copied().collect()).collect();
            return Ok((PathVec::new(t.to_vec(), values)?, it));
        }
    }
    Err(Error::Grid(format!(
        "Picard iteration did not reach {tol:e} in {max_iter} sweeps"
    )))
}

/// `C(model, T) = √(2‖Γ‖∞T) e^{c_b T}` with `sup_t ‖G₀(ψ)(t)‖ ≤ C ‖ψ‖_{L²(λ)}`.
pub fn skeleton_bound<M: RateModel + ?Sized>(model: &M, horizon: f64) -> f64 {
    (2.0 * model.gamma_norm() * horizon).sqrt() * (model.c_b() * horizon).exp()
}

/// Outcome of a rate-function evaluation.
#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    /// `None` when the path is infeasible (the rate is `+∞`).
    pub value: Option<f64>,
    pub feasible: bool,
    pub diagnostic: Option<String>,
    /// `‖r_n‖` per grid step, `r = η̇ − Db(p)[η]`.
    pub residual_norms: Vec<f64>,
    /// Norm of the part of `r_n` outside the column space of `B_n`.
    pub orthogonal_residuals: Vec<f64>,
}

impl RateReport {
    pub fn value_or_infinity(&self) -> f64 {
        self.value.unwrap_or(f64::INFINITY)
    }

    fn infeasible(reason: String) -> Self {
        Self {
            value: None,
            feasible: false,
            diagnostic: Some(reason),
            residual_norms: Vec::new(),
            orthogonal_residuals: Vec::new(),
        }
    }
}

/// Per-step least-norm solve of `B_n u = r_n`, with columns
/// `(e_j − e_i) √(p_iΓ_ij(p̄_n))` over cells of positive measure.
///
/// Returns the minimizing `u` when `η` is feasible.
pub fn least_norm_control<M: RateModel + ?Sized>(
    model: &M,
    p: &PathVec,
    eta: &PathVec,
) -> Result<(Option<ControlMatrixU>, RateReport)> {
    check_limit_path(model, p)?;
    if eta.dim() != model.num_states() {
        return Err(Error::Dimension {
            expected: model.num_states(),
            got: eta.dim(),
        });
    }
    if !eta.is_continuous() {
        let jump = eta.max_jump();
        return Ok((None, RateReport::infeasible(format!("path has a jump of size {jump:.3e}"))));
    }
    let scale = eta.sup_norm().max(1.0);
    let start = l2_norm(&eta.values()[0]);
    if start > MASS_TOL * scale {
        return Ok((
            None,
            RateReport::infeasible(format!("path starts at ‖η(0)‖ = {start:.3e}, not 0")),
        ));
    }
    if let Some((n, s)) = eta
        .values()
        .iter()
        .map(|x| x.iter().sum::<f64>())
        .enumerate()
        .find(|(_, s)| s.abs() > MASS_TOL * scale)
    {
        return Ok((
            None,
            RateReport::infeasible(format!("coordinate sum {s:.3e} at t = {} is not 0", eta.times()[n])),
        ));
    }
    if eta.len() != p.len()
        || eta
            .times()
            .iter()
            .zip(p.times())
            .any(|(a, b)| (a - b).abs() > 1e-12 * b.abs().max(1.0))
    {
        return Err(Error::Grid("η must be sampled on the grid of p".into()));
    }

    let pairs = band_pairs(model);
    let k = model.num_states();
    let t = p.times();
    let pv = p.values();
    let ev = eta.values();

    struct Step {
        u: Vec<f64>,
        residual: f64,
        orthogonal: f64,
    }
    let steps: Vec<Result<Step>> = (0..t.len() - 1)
        .into_par_iter()
        .map(|n| {
            let dt = t[n + 1] - t[n];
            let mid = midpoint(&pv[n], &pv[n + 1]);
            let eta_mid = midpoint(&ev[n], &ev[n + 1]);
            let deta: Vec<f64> = (0..k).map(|i| (ev[n + 1][i] - ev[n][i]) / dt).collect();
            let d = db_apply(model, &mid, &eta_mid)?;
            let r: Vec<f64> = (0..k).map(|i| deta[i] - d[i]).collect();
            let rn = l2_norm(&r);
            let active: Vec<(usize, usize, f64)> = pairs
                .iter()
                .filter_map(|&(i, j)| {
                    let w = rate(model, &mid, i, j);
                    (w > 0.0).then(|| (i, j, w.sqrt()))
                })
                .collect();
            let mut u = vec![0.0; k * k];
            let mut orthogonal = rn;
            if !active.is_empty() {
                let mut b = DMatrix::zeros(k, active.len());
                for (c, &(i, j, s)) in active.iter().enumerate() {
                    b[(j, c)] = s;
                    b[(i, c)] = -s;
                }
                let rv = DVector::from_column_slice(&r);
                let svd = b.clone().svd(true, true);
                let smax = svd.singular_values.max();
                let sol = svd
                    .solve(&rv, SVD_CUTOFF * smax)
                    .map_err(|e| Error::Grid(format!("least-norm solve failed: {e}")))?;
                orthogonal = (&b * &sol - &rv).norm();
                for (c, &(i, j, _)) in active.iter().enumerate() {
                    u[i * k + j] = sol[c];
                }
            }
            Ok(Step {
                u,
                residual: rn,
                orthogonal,
            })
        })
        .collect();
    let steps: Vec<Step> = steps.into_iter().collect::<Result<_>>()?;

    let residual_norms: Vec<f64> = steps.iter().map(|s| s.residual).collect();
    let orthogonal_residuals: Vec<f64> = steps.iter().map(|s| s.orthogonal).collect();
    if let Some((n, s)) = steps
        .iter()
        .enumerate()
        .find(|(_, s)| s.orthogonal > INFEASIBLE_TOL * s.residual.max(1.0))
    {
        let report = RateReport {
            value: None,
            feasible: false,
            diagnostic: Some(format!(
                "residual leaves the reachable directions on [{}, {}]: orthogonal part {:.3e}",
                t[n],
                t[n + 1],
                s.orthogonal
            )),
            residual_norms,
            orthogonal_residuals,
        };
        return Ok((None, report));
    }
    let u = ControlMatrixU::new(t.to_vec(), k, steps.into_iter().map(|s| s.u).collect())?;
    let report = RateReport {
        value: Some(u.cost()),
        feasible: true,
        diagnostic: None,
        residual_norms,
        orthogonal_residuals,
    };
    Ok((Some(u), report))
}

/// `I(η) = ½ ∫ Σ u_ij² ds` for the least-norm `u` reproducing `η`.
pub fn rate_i<M: RateModel + ?Sized>(model: &M, p: &PathVec, eta: &PathVec) -> Result<RateReport> {
    Ok(least_norm_control(model, p, eta)?.1)
}

/// `Ī(η) = ½ ‖ψ*‖²_{L²(λ)}` for the per-cell field `ψ*` built from the
/// least-norm `u`.
pub fn rate_ibar<M: RateModel + ?Sized>(model: &M, p: &PathVec, eta: &PathVec) -> Result<RateReport> {
    let (u, mut report) = least_norm_control(model, p, eta)?;
    if let Some(u) = u {
        let psi = psi_from_u(model, p, &u)?;
        report.value = Some(0.5 * psi.norm_sq(model, p));
    }
    Ok(report)
}

#[cfg(test)]
mod tests;
