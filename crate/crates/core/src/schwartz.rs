//! Test functions of the form `P(x) e^{−x²/2}` with polynomial `P`.
//!
//! The family contains the Hermite functions and is closed under
//! differentiation (`(P e^{−x²/2})' = (P' − xP) e^{−x²/2}`), so every
//! derivative is exact. Provides the weighted Hilbert seminorms
//!
//! ```text
//! ‖φ‖ₙ² = Σ_{k≤n} ∫ (1 + x²)^{2n} (φ^{(k)}(x))² dx,
//! ```
//!
//! the sup seminorms `|φ|ₙ = Σ_{k≤n} sup |φ^{(k)}|`, and the generator
//! `L(s)` of the linearized mean-field dynamics applied to a test function.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{DiscreteMeasure, KernelPair};
use crate::quadrature::gauss_legendre;

/// `φ(x) = P(x) e^{−x²/2}`, `P` stored by monomial coefficients (lowest first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    poly: Vec<f64>,
}

impl TestFunction {
    pub fn from_poly(mut poly: Vec<f64>) -> Self {
        trim(&mut poly);
        Self { poly }
    }

    pub fn zero() -> Self {
        Self { poly: Vec::new() }
    }

    /// `e^{−x²/2}`.
    pub fn gaussian() -> Self {
        Self { poly: vec![1.0] }
    }

    /// `H_n(x) e^{−x²/2}` with the physicists' Hermite polynomial `H_n`.
    pub fn hermite(n: usize) -> Self {
        Self::from_poly(hermite_poly(n))
    }

    /// `Σ_n c_n H_n(x) e^{−x²/2}`.
    pub fn from_hermite(coeffs: &[f64]) -> Self {
        let mut poly = vec![0.0; coeffs.len()];
        for (n, &c) in coeffs.iter().enumerate() {
            if c != 0.0 {
                for (i, h) in hermite_poly(n).into_iter().enumerate() {
                    poly[i] += c * h;
                }
            }
        }
        Self::from_poly(poly)
    }

    pub fn poly(&self) -> &[f64] {
        &self.poly
    }

    pub fn is_zero(&self) -> bool {
        self.poly.is_empty()
    }

    pub fn eval(&self, x: f64) -> f64 {
        if self.poly.is_empty() {
            return 0.0;
        }
        horner(&self.poly, x) * (-0.5 * x * x).exp()
    }

    pub fn derivative(&self) -> Self {
        let n = self.poly.len();
        let mut out = vec![0.0; n + 1];
        for (i, &c) in self.poly.iter().enumerate() {
            if i > 0 {
                out[i - 1] += i as f64 * c;
            }
            out[i + 1] -= c;
        }
        Self::from_poly(out)
    }

    pub fn derivative_k(&self, k: usize) -> Self {
        (0..k).fold(self.clone(), |f, _| f.derivative())
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::from_poly(self.poly.iter().map(|a| c * a).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.poly.len().max(other.poly.len());
        let get = |p: &[f64], i: usize| p.get(i).copied().unwrap_or(0.0);
        Self::from_poly((0..n).map(|i| get(&self.poly, i) + get(&other.poly, i)).collect())
    }
}

fn trim(p: &mut Vec<f64>) {
    while p.last() == Some(&0.0) {
        p.pop();
    }
}

fn horner(p: &[f64], x: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

fn hermite_poly(n: usize) -> Vec<f64> {
    let mut h0 = vec![1.0];
    if n == 0 {
        return h0;
    }
    let mut h1 = vec![0.0, 2.0];
    for k in 1..n {
        // H_{k+1} = 2x H_k − 2k H_{k−1}
        let mut next = vec![0.0; k + 2];
        for (i, &c) in h1.iter().enumerate() {
            next[i + 1] += 2.0 * c;
        }
        for (i, &c) in h0.iter().enumerate() {
            next[i] -= 2.0 * k as f64 * c;
        }
        h0 = h1;
        h1 = next;
    }
    h1
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// `Σ_{k≤n} (1 + x²)^{2n} P_k(x)²`, the polynomial multiplying `e^{−x²}` in
/// the integrand of `‖φ‖ₙ²`.
pub fn hilbert_integrand(phi: &TestFunction, n: usize) -> Vec<f64> {
    let weight = (0..2 * n).fold(vec![1.0], |w, _| poly_mul(&w, &[1.0, 0.0, 1.0]));
    let mut total: Vec<f64> = Vec::new();
    let mut d = phi.clone();
    for _ in 0..=n {
        let term = poly_mul(&weight, &poly_mul(&d.poly, &d.poly));
        if total.len() < term.len() {
            total.resize(term.len(), 0.0);
        }
        for (t, v) in total.iter_mut().zip(term) {
            *t += v;
        }
        d = d.derivative();
    }
    total
}

/// Half-width `R` with `∫_{|x|>R} |Q(x)| e^{−x²} dx < 1e-12`, using
/// `|Q(x)| ≤ S|x|^d` for `|x| ≥ 1` and `∫_R^∞ x^d e^{−x²} ≤ R^d e^{−R²}/(2R − d/R)`.
fn tail_radius(q: &[f64]) -> f64 {
    let s: f64 = q.iter().map(|c| c.abs()).sum();
    if s == 0.0 {
        return 1.0;
    }
    let d = (q.len() - 1) as f64;
    let mut r = (d.sqrt() + 1.0).max(2.0);
    let target = 1e-12f64.ln();
    loop {
        let log_tail = 2f64.ln() + s.ln() + d * r.ln() - r * r - (2.0 * r - d / r).ln();
        if log_tail < target {
            return r;
        }
        r += 0.25;
    }
}

/// `‖φ‖ₙ` by Gauss–Legendre quadrature on `[−R, R]`, doubling the node count
/// from 32 until two successive results agree to `1e-8` relative.
pub fn seminorm_hilbert(phi: &TestFunction, n: usize) -> Result<f64> {
    let q = hilbert_integrand(phi, n);
    if q.iter().all(|&c| c == 0.0) {
        return Ok(0.0);
    }
    let r = tail_radius(&q);
    let integrate = |nodes: usize| {
        let (x, w) = gauss_legendre(nodes);
        x.iter()
            .zip(&w)
            .map(|(xi, wi)| {
                let y = r * xi;
                wi * horner(&q, y) * (-y * y).exp()
            })
            .sum::<f64>()
            * r
    };
    let mut nodes = 32;
    let mut prev = integrate(nodes);
    let mut change = f64::INFINITY;
    while nodes < 4096 {
        nodes *= 2;
        let cur = integrate(nodes);
        change = (cur - prev).abs() / cur.abs().max(f64::MIN_POSITIVE);
        if change <= 1e-8 {
            return Ok(cur.max(0.0).sqrt());
        }
        prev = cur;
    }
    Err(Error::Quadrature { change })
}

/// `sup_x |φ(x)|`: critical points are sign changes of the derivative's
/// polynomial, located by a scan on `[−B, B]` (Cauchy root bound, capped at
/// 60 where `e^{−x²/2}` underflows any coefficient scale in use) and refined
/// by bisection.
pub fn sup_abs(phi: &TestFunction) -> f64 {
    if phi.is_zero() {
        return 0.0;
    }
    let dp = phi.derivative().poly;
    if dp.is_empty() {
        return phi.eval(0.0).abs();
    }
    let lead = *dp.last().unwrap();
    let bound = 1.0 + dp[..dp.len() - 1].iter().map(|c| (c / lead).abs()).fold(0.0, f64::max);
    let bound = bound.min(60.0);
    let steps = ((2.0 * bound) * 400.0).ceil() as usize;
    let h = 2.0 * bound / steps as f64;
    let mut best: f64 = 0.0;
    let mut x_prev = -bound;
    let mut s_prev = horner(&dp, x_prev);
    best = best.max(phi.eval(x_prev).abs());
    for n in 1..=steps {
        let x = -bound + n as f64 * h;
        let s = horner(&dp, x);
        best = best.max(phi.eval(x).abs());
        if s == 0.0 {
            continue;
        }
        if s_prev != 0.0 && s.signum() != s_prev.signum() {
            let (mut a, mut b) = (x_prev, x);
            let sa = s_prev;
            for _ in 0..80 {
                let mid = 0.5 * (a + b);
                let sm = horner(&dp, mid);
                if sm == 0.0 {
                    a = mid;
                    b = mid;
                    break;
                }
                if sm.signum() == sa.signum() {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            best = best.max(phi.eval(0.5 * (a + b)).abs());
        }
        x_prev = x;
        s_prev = s;
    }
    best
}

/// `|φ|ₙ = Σ_{k≤n} sup |φ^{(k)}|`.
pub fn seminorm_sup(phi: &TestFunction, n: usize) -> f64 {
    let mut d = phi.clone();
    let mut total = 0.0;
    for _ in 0..=n {
        total += sup_abs(&d);
        d = d.derivative();
    }
    total
}

/// Constant in `|φ|ₙ ≤ γ₀(n) ‖φ‖_{n+1}`.
///
/// From `f(x)² = ∫_{−∞}^x (f²)' = −∫_x^∞ (f²)'` one gets
/// `sup f² ≤ ∫|f f'| ≤ ½(‖f‖²_{L²} + ‖f'‖²_{L²})`; summing over `k ≤ n` and
/// using `(1 + x²)^{2(n+1)} ≥ 1` gives `γ₀(n) = (n + 1)/√2`.
pub fn sobolev_constant(n: usize) -> f64 {
    (n as f64 + 1.0) / std::f64::consts::SQRT_2
}

/// `x ↦ (L(s)φ)(x)` for a fixed measure `μ_s`:
///
/// ```text
/// φ'(x) b(x, μ) + ½ φ''(x) σ²(x, μ)
///   + ∫ φ'(y) β(y, x) μ(dy) + ∫ φ''(y) σ(y, μ) α(y, x) μ(dy).
/// ```
#[derive(Debug, Clone)]
pub struct LOperator {
    kernels: KernelPair,
    measure: DiscreteMeasure,
    d1: TestFunction,
    d2: TestFunction,
    w1: Vec<f64>,
    w2: Vec<f64>,
}

/// Builds `L(s)φ` against `μ_s`; `None` or an empty measure is an error.
pub fn apply_l(kernels: &KernelPair, mu: Option<&DiscreteMeasure>, phi: &TestFunction) -> Result<LOperator> {
    let mu = mu.ok_or_else(|| Error::MissingMeasure("L(s) needs the law μ_s".into()))?;
    if mu.is_empty() {
        return Err(Error::MissingMeasure("μ_s has no atoms".into()));
    }
    let d1 = phi.derivative();
    let d2 = d1.derivative();
    let sigma = kernels.sigma(&mu.atoms, mu);
    let w1 = mu.atoms.iter().map(|&y| d1.eval(y)).collect();
    let w2 = mu.atoms.iter().zip(&sigma).map(|(&y, s)| d2.eval(y) * s).collect();
    Ok(LOperator {
        kernels: kernels.clone(),
        measure: mu.clone(),
        d1,
        d2,
        w1,
        w2,
    })
}

impl LOperator {
    pub fn eval(&self, x: f64) -> f64 {
        self.eval_many(&[x])[0]
    }

    pub fn eval_many(&self, xs: &[f64]) -> Vec<f64> {
        let mu = &self.measure;
        let b = self.kernels.drift(xs, mu);
        let s = self.kernels.sigma(xs, mu);
        let n1 = self.kernels.beta.pair_first(xs, mu, &self.w1);
        let n2 = self.kernels.alpha.pair_first(xs, mu, &self.w2);
        xs.iter()
            .enumerate()
            .map(|(n, &x)| self.d1.eval(x) * b[n] + 0.5 * self.d2.eval(x) * s[n] * s[n] + n1[n] + n2[n])
            .collect()
    }

    /// `⟨ν, L(s)φ⟩`.
    pub fn integrate(&self, nu: &DiscreteMeasure) -> f64 {
        self.eval_many(&nu.atoms).iter().zip(&nu.weights).map(|(l, w)| l * w).sum()
    }

    /// `(∫_{−R}^{R} (L(s)φ)² dx)^{1/2}` with `nodes`-point Gauss–Legendre;
    /// the `n = 0` norm of `L(s)φ` when it decays beyond `R`.
    pub fn l2_norm(&self, r: f64, nodes: usize) -> f64 {
        let (x, w) = gauss_legendre(nodes);
        let xs: Vec<f64> = x.iter().map(|xi| r * xi).collect();
        let v = self.eval_many(&xs);
        (v.iter().zip(&w).map(|(l, wi)| wi * l * l).sum::<f64>() * r).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{Factor, Kernel, Term};
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    /// `∫ Q(x) e^{−x²} dx` from the Gaussian moments `Γ(j + ½)`.
    fn exact_gaussian_integral(q: &[f64]) -> f64 {
        let mut moment = PI.sqrt();
        let mut total = 0.0;
        for (i, &c) in q.iter().enumerate() {
            if i % 2 == 0 {
                if i > 0 {
                    moment *= (i as f64 - 1.0) / 2.0;
                }
                total += c * moment;
            }
        }
        total
    }

    fn random_family(seed: u64) -> Vec<TestFunction> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..100)
            .map(|_| {
                let deg = rng.random_range(0..6usize);
                let c: Vec<f64> = (0..=deg).map(|_| rng.random_range(-1.0..1.0)).collect();
                TestFunction::from_hermite(&c)
            })
            .collect()
    }

    #[test]
    fn hermite_polynomials() {
        assert_eq!(hermite_poly(2), vec![-2.0, 0.0, 4.0]);
        assert_eq!(hermite_poly(3), vec![0.0, -12.0, 0.0, 8.0]);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let phi = TestFunction::from_hermite(&[0.3, -1.0, 0.5, 0.2]);
        for k in 1..=4 {
            let d = phi.derivative_k(k);
            let prev = phi.derivative_k(k - 1);
            for &x in &[-1.7, -0.2, 0.0, 0.9, 2.5] {
                let h = 1e-5;
                let fd = (prev.eval(x + h) - prev.eval(x - h)) / (2.0 * h);
                assert!((d.eval(x) - fd).abs() < 1e-6 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn hilbert_examples() {
        assert_eq!(seminorm_hilbert(&TestFunction::zero(), 3).unwrap(), 0.0);
        let g = seminorm_hilbert(&TestFunction::gaussian(), 0).unwrap();
        assert!((g - PI.powf(0.25)).abs() < 1e-8);
        let phi = TestFunction::from_hermite(&[1.0, 0.5, -0.25]);
        for n in 0..4 {
            let a = seminorm_hilbert(&phi, n).unwrap();
            let b = seminorm_hilbert(&phi.scale(2.0), n).unwrap();
            assert!((b - 2.0 * a).abs() < 1e-9 * b);
        }
    }

    #[test]
    fn hilbert_matches_exact_moments() {
        for (s, phi) in random_family(1).iter().enumerate().take(30) {
            for n in 0..4 {
                let exact = exact_gaussian_integral(&hilbert_integrand(phi, n)).sqrt();
                let got = seminorm_hilbert(phi, n).unwrap();
                assert!(
                    (got - exact).abs() <= 1e-8 * exact.max(1e-300),
                    "member {s}, n {n}: {got} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn sup_examples() {
        assert_eq!(seminorm_sup(&TestFunction::zero(), 2), 0.0);
        assert!((seminorm_sup(&TestFunction::gaussian(), 0) - 1.0).abs() < 1e-15);
        let x_gauss = TestFunction::from_poly(vec![0.0, 1.0]);
        assert!((seminorm_sup(&x_gauss, 0) - (-0.5f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn seminorms_are_monotone_and_sobolev_bounded() {
        for phi in random_family(2) {
            let mut prev = 0.0;
            for n in 0..=6 {
                let h = seminorm_hilbert(&phi, n).unwrap();
                assert!(h >= prev * (1.0 - 1e-12));
                prev = h;
            }
            for n in 0..=4 {
                let ratio = seminorm_sup(&phi, n) / seminorm_hilbert(&phi, n + 1).unwrap();
                assert!(ratio <= sobolev_constant(n), "n {n}: {ratio}");
            }
        }
    }

    #[test]
    fn second_derivative_integrates_by_parts() {
        // ∫ φ'' w = ∫ φ w'' for a smooth window w(x) = e^{−x²/4}
        let phi = TestFunction::from_hermite(&[0.2, 0.7, -0.3]);
        let d2 = phi.derivative_k(2);
        let w = |x: f64| (-x * x / 4.0).exp();
        let w2 = |x: f64| (x * x / 4.0 - 0.5) * w(x);
        let lhs = crate::quadrature::integrate(|x| d2.eval(x) * w(x), -14.0, 14.0, 200);
        let rhs = crate::quadrature::integrate(|x| phi.eval(x) * w2(x), -14.0, 14.0, 200);
        assert!((lhs - rhs).abs() < 1e-8);
    }

    #[test]
    fn l_operator_examples() {
        let phi = TestFunction::from_hermite(&[0.5, 1.0, 0.25]);
        let mu = DiscreteMeasure::empirical(&[-0.3, 0.1, 0.8]);
        assert!(apply_l(&KernelPair::default(), None, &phi).is_err());

        let zero = apply_l(&KernelPair::zero(), Some(&mu), &phi).unwrap();
        assert!(zero.eval_many(&[-1.0, 0.0, 2.0]).iter().all(|&v| v == 0.0));

        // L(cφ) = c L(φ)
        let k = KernelPair::default_with(0.8, 1.2);
        let l1 = apply_l(&k, Some(&mu), &phi).unwrap();
        let l2 = apply_l(&k, Some(&mu), &phi.scale(3.0)).unwrap();
        for x in [-1.0, 0.3, 1.7] {
            assert!((l2.eval(x) - 3.0 * l1.eval(x)).abs() < 1e-12);
        }

        // β(x, y) = −x, α ≡ 0, μ = δ_z: (Lφ)(x) = −x φ'(x) − z φ'(z)
        let k = KernelPair::new(
            Kernel::zero(),
            Kernel::Separable(vec![Term::new(-1.0, Factor::Linear, Factor::One)]),
        );
        let z = 0.7;
        let l = apply_l(&k, Some(&DiscreteMeasure::dirac(z)), &phi).unwrap();
        let d1 = phi.derivative();
        for x in [-2.0, -0.5, 0.0, 1.3] {
            let want = -x * d1.eval(x) - z * d1.eval(z);
            assert!((l.eval(x) - want).abs() < 1e-14);
        }
        let l0 = apply_l(&k, Some(&DiscreteMeasure::dirac(0.0)), &phi).unwrap();
        assert!((l0.eval(1.1) + 1.1 * d1.eval(1.1)).abs() < 1e-14);
    }

    proptest::proptest! {
        #[test]
        fn l_is_linear(a in proptest::collection::vec(-1.0f64..1.0, 1..5),
                       b in proptest::collection::vec(-1.0f64..1.0, 1..5),
                       c in -2.0f64..2.0,
                       x in -3.0f64..3.0) {
            let mu = DiscreteMeasure::empirical(&[-0.4, 0.2, 1.1]);
            let k = KernelPair::default();
            let (pa, pb) = (TestFunction::from_hermite(&a), TestFunction::from_hermite(&b));
            let lhs = apply_l(&k, Some(&mu), &pa.scale(c).add(&pb)).unwrap().eval(x);
            let rhs = c * apply_l(&k, Some(&mu), &pa).unwrap().eval(x) + apply_l(&k, Some(&mu), &pb).unwrap().eval(x);
            proptest::prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
        }

        #[test]
        fn seminorms_are_absolutely_homogeneous(a in proptest::collection::vec(-1.0f64..1.0, 1..5), c in -3.0f64..3.0, n in 0usize..4) {
            let phi = TestFunction::from_hermite(&a);
            let h = seminorm_hilbert(&phi, n).unwrap();
            let hc = seminorm_hilbert(&phi.scale(c), n).unwrap();
            proptest::prop_assert!((hc - c.abs() * h).abs() <= 1e-7 * (1.0 + c.abs() * h));
            let s = seminorm_sup(&phi, n);
            proptest::prop_assert!((seminorm_sup(&phi.scale(c), n) - c.abs() * s).abs() <= 1e-9 * (1.0 + c.abs() * s));
        }
    }
}
