//! Conversions between cell controls `ψ` on `L²(λ)` and the matrix-valued
//! controls `u_ij(s)` attached to the columns `(e_j − e_i)√(p_iΓ_ij(p))`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::jump_sim::JumpControl;
use crate::model::{band_pairs, rate, RateModel};
use crate::path::{midpoint, PathVec};
use crate::quadrature::gauss_legendre;

/// `u_ij` piecewise constant on the steps of a time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlMatrixU {
    times: Vec<f64>,
    k: usize,
    values: Vec<Vec<f64>>,
}

impl ControlMatrixU {
    /// `values[n][i * k + j]` is `u_ij` on step `n`.
    pub fn new(times: Vec<f64>, k: usize, values: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() != values.len() + 1 {
            return Err(Error::Grid(format!("{} grid points but {} steps", times.len(), values.len())));
        }
        if values.iter().any(|v| v.len() != k * k) {
            return Err(Error::Dimension { expected: k * k, got: 0 });
        }
        Ok(Self { times, k, values })
    }

    pub fn zero(times: Vec<f64>, k: usize) -> Self {
        let steps = times.len().saturating_sub(1);
        Self {
            times,
            k,
            values: vec![vec![0.0; k * k]; steps],
        }
    }

    pub fn steps(&self) -> usize {
        self.values.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn get(&self, step: usize, i: usize, j: usize) -> f64 {
        self.values[step][i * self.k + j]
    }

    pub fn set(&mut self, step: usize, i: usize, j: usize, v: f64) {
        self.values[step][i * self.k + j] = v;
    }

    /// `½ ∫ Σ_ij u_ij² ds`.
    pub fn cost(&self) -> f64 {
        0.5 * self
            .values
            .iter()
            .enumerate()
            .map(|(n, v)| (self.times[n + 1] - self.times[n]) * v.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
    }

    pub(crate) fn check_grid(&self, p: &PathVec) -> Result<()> {
        if self.times.as_slice() != p.times() || self.k != p.dim() {
            return Err(Error::Grid("u must live on the grid of p".into()));
        }
        Ok(())
    }
}

/// `u_ij(s) = ∫ 1_{A_ij(p(s))} ψ dλ_X / √(p_iΓ_ij(p(s)))`; zero on cells of
/// zero measure. For a per-cell control this is `ψ_ij √(p_iΓ_ij)`.
pub fn u_from_psi<M: RateModel + ?Sized>(model: &M, p: &PathVec, psi: &JumpControl) -> Result<ControlMatrixU> {
    u_from_field(model, p, |s, i, j, _| psi.value_at(s, i, j), 1).map(|(u, _)| u)
}

/// [`u_from_psi`] for a field `ψ(s, i, j, y)` that may vary with the offset
/// `y ∈ (0, p_iΓ_ij]` inside the cell; `s` is the step midpoint. The cell
/// integrals use `nodes`-point Gauss–Legendre.
///
/// Also returns `½‖ψ‖²_{L²(λ)}` computed with the same rule, so the
/// inequality `cost(u) ≤ ½‖ψ‖²` can be checked directly.
pub fn u_from_field<M, F>(model: &M, p: &PathVec, field: F, nodes: usize) -> Result<(ControlMatrixU, f64)>
where
    M: RateModel + ?Sized,
    F: Fn(f64, usize, usize, f64) -> f64,
{
    if p.dim() != model.num_states() {
        return Err(Error::Dimension {
            expected: model.num_states(),
            got: p.dim(),
        });
    }
    let (x, w) = gauss_legendre(nodes.max(1));
    let k = model.num_states();
    let pairs = band_pairs(model);
    let t = p.times();
    let v = p.values();
    let mut u = ControlMatrixU::zero(t.to_vec(), k);
    let mut field_cost = 0.0;
    for n in 0..t.len() - 1 {
        let dt = t[n + 1] - t[n];
        let s = 0.5 * (t[n] + t[n + 1]);
        let mid = midpoint(&v[n], &v[n + 1]);
        for &(i, j) in &pairs {
            let len = rate(model, &mid, i, j);
            if len <= 0.0 {
                continue;
            }
            let mut lin = 0.0;
            let mut sq = 0.0;
            for (xi, wi) in x.iter().zip(&w) {
                let y = 0.5 * len * (xi + 1.0);
                let f = field(s, i, j, y);
                lin += 0.5 * len * wi * f;
                sq += 0.5 * len * wi * f * f;
            }
            u.set(n, i, j, lin / len.sqrt());
            field_cost += 0.5 * dt * sq;
        }
    }
    Ok((u, field_cost))
}

/// `ψ_ij(s) = u_ij(s) / √(p_iΓ_ij(p(s)))` on cells of positive measure and 0
/// elsewhere, one control bin per grid step. The grid must be uniform.
pub fn psi_from_u<M: RateModel + ?Sized>(model: &M, p: &PathVec, u: &ControlMatrixU) -> Result<JumpControl> {
    u.check_grid(p)?;
    if !p.is_uniform() || p.start() != 0.0 {
        return Err(Error::Grid("ψ bins need a uniform grid starting at 0".into()));
    }
    let k = model.num_states();
    let t = p.times();
    let v = p.values();
    let mut psi = JumpControl::zero(k, p.horizon(), u.steps())?;
    for n in 0..u.steps() {
        let mid = midpoint(&v[n], &v[n + 1]);
        debug_assert!(psi.bin_at(0.5 * (t[n] + t[n + 1])) == n);
        for (i, j) in band_pairs(model) {
            let len = rate(model, &mid, i, j);
            if len > 0.0 {
                psi.set(n, i, j, u.get(n, i, j) / len.sqrt())?;
            }
        }
    }
    Ok(psi)
}
