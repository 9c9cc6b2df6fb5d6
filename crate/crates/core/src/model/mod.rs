//! Jump-model definitions.
//!
//! States are indexed `0..K` in code; state `i` here is state `i + 1` in the
//! usual one-based notation. A model supplies off-diagonal rates
//! `Γ_ij(q)`, the constants that bound them, and optionally an analytic
//! derivative of the drift.
//!
//! The Poisson-random-measure picture places the `i → j` transition on the
//! rectangle
//!
//! ```text
//! A_ij(q) = (i, i+1] × (j‖Γ‖∞, j‖Γ‖∞ + q_i Γ_ij(q)]
//! ```
//!
//! of `R²₊`, so that Lebesgue measure of the cell is the transition rate per
//! particle and the jump map `G(q, y)` is `e_j − e_i` on `A_ij(q)`.

pub mod bounds;
pub mod config;
mod families;

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use families::{BirthDeath, ConstantRate, NumericDerivative};

/// Tolerance on `Σ q_i = 1`.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Probability vector on `K` states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexVec(Vec<f64>);

impl SimplexVec {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Simplex("empty vector".into()));
        }
        if let Some((i, v)) = entries.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Simplex(format!("entry {i} = {v} is not a nonnegative finite number")));
        }
        let sum: f64 = entries.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Simplex(format!("entries sum to {sum}, not 1")));
        }
        Ok(Self(entries))
    }

    /// Empirical measure of `counts.iter().sum()` particles.
    pub fn from_counts(counts: &[u32]) -> Result<Self> {
        let m: u64 = counts.iter().map(|&c| c as u64).sum();
        if m == 0 {
            return Err(Error::Simplex("no particles".into()));
        }
        let m = m as f64;
        Self::new(counts.iter().map(|&c| c as f64 / m).collect())
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    /// Point mass on state `i`.
    pub fn point(k: usize, i: usize) -> Self {
        let mut v = vec![0.0; k];
        v[i] = 1.0;
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// True when every entry is a multiple of `1/m` (within round-off).
    pub fn is_lattice(&self, m: usize) -> bool {
        self.0.iter().all(|&q| {
            let n = q * m as f64;
            (n - n.round()).abs() < 1e-9
        })
    }

    /// Particle counts for an `m`-particle empirical measure.
    pub fn counts(&self, m: usize) -> Result<Vec<u32>> {
        if !self.is_lattice(m) {
            return Err(Error::Domain(format!("entries are not multiples of 1/{m}")));
        }
        Ok(self.0.iter().map(|&q| (q * m as f64).round() as u32).collect())
    }
}

impl Deref for SimplexVec {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for SimplexVec {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SimplexVec> for Vec<f64> {
    fn from(s: SimplexVec) -> Vec<f64> {
        s.0
    }
}

/// A mean-field rate matrix `q ↦ Γ(q)` on a finite state space.
///
/// `gamma` is evaluated on arbitrary real vectors (not only simplex points)
/// because finite-difference derivatives step off the positive cone.
pub trait RateModel: Send + Sync {
    fn num_states(&self) -> usize;

    /// Off-diagonal rate `Γ_ij(q)` for `i != j`.
    fn gamma(&self, q: &[f64], i: usize, j: usize) -> f64;

    /// `‖Γ‖∞ = sup_q sup_i |Γ_ii(q)|`.
    fn gamma_norm(&self) -> f64;

    /// `c_Γ = sup_q sup_j Σ_i |Γ_ij(q)|` (diagonal included).
    fn c_gamma(&self) -> f64;

    /// `L_Γ`: `sup_i Σ_{j≠i} |Γ_ij(q̃) − Γ_ij(q)| ≤ L_Γ ‖q̃ − q‖`.
    fn l_gamma(&self) -> f64;

    /// Bound on `‖Db(q)‖` and on the quadratic remainder of `b`.
    fn c_b(&self) -> f64;

    /// Band width: `Γ_ij ≡ 0` for `|i − j| > range`.
    fn range(&self) -> usize;

    /// Analytic `Db(q)[h]`, if the model has one.
    fn db(&self, _q: &[f64], _h: &[f64]) -> Option<Vec<f64>> {
        None
    }

    fn family(&self) -> &str;
}

/// Targets `j != i` inside the band of state `i`.
pub fn targets<M: RateModel + ?Sized>(model: &M, i: usize) -> impl Iterator<Item = usize> {
    let k = model.num_states();
    let r = model.range();
    let lo = i.saturating_sub(r);
    let hi = (i + r).min(k - 1);
    (lo..=hi).filter(move |&j| j != i)
}

/// All ordered pairs `(i, j)`, `i != j`, inside the band.
pub fn band_pairs<M: RateModel + ?Sized>(model: &M) -> Vec<(usize, usize)> {
    (0..model.num_states())
        .flat_map(|i| targets(model, i).map(move |j| (i, j)))
        .collect()
}

/// The rectangle `A_ij(q)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpCell {
    pub i: usize,
    pub j: usize,
    /// First-coordinate strip `(i, i + 1]`.
    pub strip: (f64, f64),
    pub y2_lo: f64,
    pub y2_hi: f64,
}

impl JumpCell {
    pub fn length(&self) -> f64 {
        self.y2_hi - self.y2_lo
    }

    pub fn contains(&self, y: [f64; 2]) -> bool {
        y[0] > self.strip.0 && y[0] <= self.strip.1 && y[1] > self.y2_lo && y[1] <= self.y2_hi
    }
}

fn check_pair(k: usize, i: usize, j: usize) -> Result<()> {
    if i >= k || j >= k {
        return Err(Error::Domain(format!("state pair ({i},{j}) outside 0..{k}")));
    }
    if i == j {
        return Err(Error::Domain(format!("diagonal pair ({i},{i}) has no cell")));
    }
    Ok(())
}

fn check_dim<M: RateModel + ?Sized>(model: &M, q: &[f64]) -> Result<()> {
    if q.len() != model.num_states() {
        return Err(Error::Dimension {
            expected: model.num_states(),
            got: q.len(),
        });
    }
    Ok(())
}

/// Per-particle rate `q_i Γ_ij(q)` without index checks.
#[inline]
pub(crate) fn rate(model: &(impl RateModel + ?Sized), q: &[f64], i: usize, j: usize) -> f64 {
    q[i] * model.gamma(q, i, j)
}

pub fn cell<M: RateModel + ?Sized>(model: &M, q: &[f64], i: usize, j: usize) -> Result<JumpCell> {
    check_dim(model, q)?;
    check_pair(model.num_states(), i, j)?;
    let lo = j as f64 * model.gamma_norm();
    Ok(JumpCell {
        i,
        j,
        strip: (i as f64, i as f64 + 1.0),
        y2_lo: lo,
        y2_hi: lo + rate(model, q, i, j),
    })
}

/// `λ(A_ij(q)) = q_i Γ_ij(q)`.
pub fn cell_measure<M: RateModel + ?Sized>(model: &M, q: &[f64], i: usize, j: usize) -> Result<f64> {
    check_dim(model, q)?;
    check_pair(model.num_states(), i, j)?;
    Ok(rate(model, q, i, j))
}

/// Jump map `G(q, y)`: `e_j − e_i` when `y ∈ A_ij(q)`, zero otherwise.
pub fn jump_map<M: RateModel + ?Sized>(model: &M, q: &[f64], y: [f64; 2]) -> Vec<f64> {
    let k = model.num_states();
    let mut out = vec![0.0; k];
    let norm = model.gamma_norm();
    if !(y[0] > 0.0 && y[1] > 0.0) || norm <= 0.0 {
        return out;
    }
    // y1 ∈ (i, i+1] and y2 ∈ (j‖Γ‖, (j+1)‖Γ‖]
    let i = y[0].ceil() as usize - 1;
    let j = (y[1] / norm).ceil() as usize - 1;
    if i >= k || j >= k || i == j {
        return out;
    }
    let lo = j as f64 * norm;
    if y[1] > lo && y[1] <= lo + rate(model, q, i, j) {
        out[i] -= 1.0;
        out[j] += 1.0;
    }
    out
}

/// Drift `b_i(q) = Σ_j q_j Γ_ji(q)` with `Γ_ii = −Σ_{j≠i} Γ_ij`.
pub fn drift<M: RateModel + ?Sized>(model: &M, q: &[f64]) -> Vec<f64> {
    let k = model.num_states();
    let mut b = vec![0.0; k];
    for i in 0..k {
        let mut out_rate = 0.0;
        for j in targets(model, i) {
            let g = model.gamma(q, i, j);
            out_rate += g;
            b[j] += q[i] * g;
        }
        b[i] -= q[i] * out_rate;
    }
    b
}

/// `Db(q)[h]`: analytic when the model provides it, otherwise a central
/// difference on the affine hull `Σ = 1`.
pub fn db_apply<M: RateModel + ?Sized>(model: &M, q: &[f64], h: &[f64]) -> Result<Vec<f64>> {
    check_dim(model, q)?;
    check_dim(model, h)?;
    if let Some(d) = model.db(q, h) {
        return Ok(d);
    }
    Ok(db_finite_difference(model, q, h))
}

/// Central difference `(b(q + εh) − b(q − εh)) / 2ε`, `ε = 1e-5 / max(1, ‖h‖)`.
/// Both perturbed points are shifted uniformly back onto `Σ = 1`.
pub fn db_finite_difference<M: RateModel + ?Sized>(model: &M, q: &[f64], h: &[f64]) -> Vec<f64> {
    let k = q.len();
    let hn = l2_norm(h);
    if hn == 0.0 {
        return vec![0.0; k];
    }
    let eps = 1e-5 / hn.max(1.0);
    let shift = |sign: f64| -> Vec<f64> {
        let mut x: Vec<f64> = q.iter().zip(h).map(|(qi, hi)| qi + sign * eps * hi).collect();
        let defect = (1.0 - x.iter().sum::<f64>()) / k as f64;
        x.iter_mut().for_each(|v| *v += defect);
        x
    };
    let bp = drift(model, &shift(1.0));
    let bm = drift(model, &shift(-1.0));
    bp.iter().zip(&bm).map(|(p, m)| (p - m) / (2.0 * eps)).collect()
}

/// `ℓ(r) = r log r − r + 1`, with `ℓ(0) = 1`.
pub fn ell(r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::Domain(format!("ℓ undefined at r = {r}")));
    }
    Ok(ell_unchecked(r))
}

#[inline]
pub(crate) fn ell_unchecked(r: f64) -> f64 {
    if r == 0.0 {
        1.0
    } else {
        r * r.ln() - r + 1.0
    }
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
