//! Quantitative bounds on the jump map and the cost function `ℓ`.

use super::{band_pairs, ell_unchecked, l2_distance, l2_norm, rate, RateModel};

/// `∫ ‖G(q, y)‖^k λ(dy) = Σ_{i≠j} (√2)^k q_i Γ_ij(q)`, summed exactly.
pub fn jump_moment<M: RateModel + ?Sized>(model: &M, q: &[f64], k: u32) -> f64 {
    let w = 2f64.powf(k as f64 / 2.0);
    band_pairs(model).into_iter().map(|(i, j)| w * rate(model, q, i, j)).sum()
}

/// The bound `2^{k/2} ‖Γ‖∞` for [`jump_moment`].
pub fn jump_moment_bound<M: RateModel + ?Sized>(model: &M, k: u32) -> f64 {
    2f64.powf(k as f64 / 2.0) * model.gamma_norm()
}

/// Lipschitz constant of `q ↦ ∫ G(q, y) g(y) λ(dy)` per unit `‖g‖∞`:
/// `2 (‖Γ‖∞² + 2 L_Γ² + c_Γ ‖Γ‖∞)^{1/2}`.
pub fn gamma5<M: RateModel + ?Sized>(model: &M) -> f64 {
    let n = model.gamma_norm();
    let l = model.l_gamma();
    2.0 * (n * n + 2.0 * l * l + model.c_gamma() * n).sqrt()
}

/// Left and right sides of the Lipschitz bound for per-cell weights `g`:
/// `‖Σ (e_j − e_i)[q̃_iΓ_ij(q̃) − q_iΓ_ij(q)] g_ij‖` and
/// `γ̃₅ · max|g| · ‖q̃ − q‖`.
pub fn lipschitz_sides<M, G>(model: &M, q: &[f64], qt: &[f64], g: G) -> (f64, f64)
where
    M: RateModel + ?Sized,
    G: Fn(usize, usize) -> f64,
{
    let k = model.num_states();
    let mut v = vec![0.0; k];
    let mut gmax: f64 = 0.0;
    for (i, j) in band_pairs(model) {
        let gij = g(i, j);
        gmax = gmax.max(gij.abs());
        let d = (rate(model, qt, i, j) - rate(model, q, i, j)) * gij;
        v[j] += d;
        v[i] -= d;
    }
    (l2_norm(&v), gamma5(model) * gmax * l2_distance(q, qt))
}

fn ratio_grid(beta: f64, points: usize) -> Vec<f64> {
    // log-spaced offsets from 1 on both sides, endpoints included
    let mut xs = Vec::with_capacity(2 * points + 2);
    let lo = beta.ln();
    let hi_right = 1e8f64.ln();
    for n in 0..=points {
        let t = n as f64 / points as f64;
        xs.push(1.0 + (lo + t * (hi_right - lo)).exp());
    }
    if beta < 1.0 {
        let hi_left = 0.0; // offset 1 reaches x = 0
        for n in 0..=points {
            let t = n as f64 / points as f64;
            xs.push(1.0 - (lo + t * (hi_left - lo)).exp());
        }
    }
    xs.into_iter().map(|x| x.max(0.0)).collect()
}

/// Scanned `sup { |x − 1| / ℓ(x) : x ≥ 0, |x − 1| ≥ β }`.
pub fn ell_ratio_sup(beta: f64) -> f64 {
    ratio_grid(beta, 20_000)
        .into_iter()
        .map(|x| (x - 1.0).abs() / ell_unchecked(x))
        .fold(0.0, f64::max)
}

/// `max{|f(1 + β)|, |f(1 − β)|}` with `f(x) = (x − 1)/ℓ(x)`, the value the
/// supremum in [`ell_ratio_sup`] attains at the edges of the excluded window.
pub fn ell_ratio_edge(beta: f64) -> f64 {
    let f = |x: f64| ((x - 1.0) / ell_unchecked(x)).abs();
    f(1.0 + beta).max(if beta <= 1.0 { f(1.0 - beta) } else { 0.0 })
}

/// Scanned `sup { |x − 1|² / ℓ(x) : x ≥ 0, 0 < |x − 1| ≤ β }`.
pub fn ell_quadratic_sup(beta: f64) -> f64 {
    let n = 20_000;
    let mut best: f64 = 0.0;
    for s in 1..=n {
        let d = beta * s as f64 / n as f64;
        for x in [1.0 - d, 1.0 + d] {
            if x >= 0.0 {
                best = best.max((x - 1.0).powi(2) / ell_unchecked(x));
            }
        }
    }
    best
}
