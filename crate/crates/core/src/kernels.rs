//! Interaction kernels `α(x, y)`, `β(x, y)` of the diffusion model and the
//! discrete measures they are integrated against.
//!
//! The mean-field coefficients are `σ(x, μ) = ∫ α(x, y) μ(dy)` and
//! `b(x, μ) = ∫ β(x, y) μ(dy)`. Kernels built from sums of products
//! `c·f(x)·g(y)` are evaluated in `O(M)` per step for `M` atoms; arbitrary
//! kernels fall back to the `O(M²)` double sum.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One-variable factor of a separable kernel term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Factor {
    /// `1`
    One,
    /// `u`
    Linear,
    /// `e^{−u²/2}`
    Gaussian,
    /// `u e^{−u²/2}`
    LinearGaussian,
}

impl Factor {
    #[inline]
    pub fn eval(self, u: f64) -> f64 {
        match self {
            Factor::One => 1.0,
            Factor::Linear => u,
            Factor::Gaussian => (-0.5 * u * u).exp(),
            Factor::LinearGaussian => u * (-0.5 * u * u).exp(),
        }
    }

    /// `sup |f|` (infinite for the linear factor).
    pub fn sup(self) -> f64 {
        match self {
            Factor::One | Factor::Gaussian => 1.0,
            Factor::Linear => f64::INFINITY,
            Factor::LinearGaussian => (-0.5f64).exp(),
        }
    }

    /// `sup |f'|`.
    pub fn lipschitz(self) -> f64 {
        match self {
            Factor::One => 0.0,
            Factor::Linear | Factor::LinearGaussian => 1.0,
            Factor::Gaussian => (-0.5f64).exp(),
        }
    }
}

/// `coef · x_factor(x) · y_factor(y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub coef: f64,
    pub x: Factor,
    pub y: Factor,
}

impl Term {
    pub fn new(coef: f64, x: Factor, y: Factor) -> Self {
        Self { coef, x, y }
    }
}

type DenseFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Kernel {
    Separable(Vec<Term>),
    Dense(DenseFn),
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Separable(t) => f.debug_tuple("Separable").field(t).finish(),
            Kernel::Dense(_) => f.write_str("Dense(..)"),
        }
    }
}

impl Kernel {
    pub fn zero() -> Self {
        Kernel::Separable(Vec::new())
    }

    pub fn constant(c: f64) -> Self {
        Kernel::Separable(vec![Term::new(c, Factor::One, Factor::One)])
    }

    pub fn dense(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Kernel::Dense(Arc::new(f))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Kernel::Separable(t) if t.iter().all(|t| t.coef == 0.0))
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Kernel::Separable(terms) => terms.iter().map(|t| t.coef * t.x.eval(x) * t.y.eval(y)).sum(),
            Kernel::Dense(f) => f(x, y),
        }
    }

    /// `∫ k(x, y) μ(dy)` for every `x` in `xs`.
    pub fn average(&self, xs: &[f64], mu: &DiscreteMeasure) -> Vec<f64> {
        match self {
            Kernel::Separable(terms) => {
                let moments: Vec<f64> = terms.iter().map(|t| mu.pair(|y| t.y.eval(y))).collect();
                xs.iter()
                    .map(|&x| terms.iter().zip(&moments).map(|(t, m)| t.coef * t.x.eval(x) * m).sum())
                    .collect()
            }
            Kernel::Dense(f) => xs.iter().map(|&x| mu.pair(|y| f(x, y))).collect(),
        }
    }

    /// `∫ w(y) k(y, x) μ(dy)` for every `x` in `xs`, with `w` given at the
    /// atoms of `μ`.
    pub fn pair_first(&self, xs: &[f64], mu: &DiscreteMeasure, w: &[f64]) -> Vec<f64> {
        match self {
            Kernel::Separable(terms) => {
                let moments: Vec<f64> = terms
                    .iter()
                    .map(|t| {
                        mu.atoms
                            .iter()
                            .zip(&mu.weights)
                            .zip(w)
                            .map(|((&y, &p), &wy)| p * wy * t.x.eval(y))
                            .sum()
                    })
                    .collect();
                xs.iter()
                    .map(|&x| terms.iter().zip(&moments).map(|(t, m)| t.coef * t.y.eval(x) * m).sum())
                    .collect()
            }
            Kernel::Dense(f) => xs
                .iter()
                .map(|&x| {
                    mu.atoms
                        .iter()
                        .zip(&mu.weights)
                        .zip(w)
                        .map(|((&y, &p), &wy)| p * wy * f(y, x))
                        .sum()
                })
                .collect(),
        }
    }

    /// `sup |k|` when known (`None` for dense kernels).
    pub fn sup_bound(&self) -> Option<f64> {
        match self {
            Kernel::Separable(terms) => Some(terms.iter().map(|t| t.coef.abs() * t.x.sup() * t.y.sup()).sum()),
            Kernel::Dense(_) => None,
        }
    }

    /// Lipschitz bound in `(x, y)` (sum of the partial bounds) when known.
    pub fn lipschitz_bound(&self) -> Option<f64> {
        match self {
            Kernel::Separable(terms) => Some(
                terms
                    .iter()
                    .map(|t| t.coef.abs() * (mul0(t.x.lipschitz(), t.y.sup()) + mul0(t.x.sup(), t.y.lipschitz())))
                    .sum(),
            ),
            Kernel::Dense(_) => None,
        }
    }
}

/// Product with `0 · ∞ = 0`.
fn mul0(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b
    }
}

/// The pair `(α, β)`.
#[derive(Debug, Clone)]
pub struct KernelPair {
    pub alpha: Kernel,
    pub beta: Kernel,
}

impl KernelPair {
    pub fn new(alpha: Kernel, beta: Kernel) -> Self {
        Self { alpha, beta }
    }

    /// `α = c_α e^{−(x²+y²)/2}`, `β = −c_β x e^{−y²/2}`.
    pub fn default_with(c_alpha: f64, c_beta: f64) -> Self {
        Self {
            alpha: Kernel::Separable(vec![Term::new(c_alpha, Factor::Gaussian, Factor::Gaussian)]),
            beta: Kernel::Separable(vec![Term::new(-c_beta, Factor::Linear, Factor::Gaussian)]),
        }
    }

    pub fn zero() -> Self {
        Self::new(Kernel::zero(), Kernel::zero())
    }

    /// `σ(x, μ)` at each `x`.
    pub fn sigma(&self, xs: &[f64], mu: &DiscreteMeasure) -> Vec<f64> {
        self.alpha.average(xs, mu)
    }

    /// `b(x, μ)` at each `x`.
    pub fn drift(&self, xs: &[f64], mu: &DiscreteMeasure) -> Vec<f64> {
        self.beta.average(xs, mu)
    }
}

impl Default for KernelPair {
    fn default() -> Self {
        Self::default_with(1.0, 1.0)
    }
}

/// Finite measure `Σ w_a δ_{y_a}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    pub atoms: Vec<f64>,
    pub weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if atoms.len() != weights.len() {
            return Err(Error::Dimension {
                expected: atoms.len(),
                got: weights.len(),
            });
        }
        Ok(Self { atoms, weights })
    }

    /// Empirical measure with weight `1/M` per particle.
    pub fn empirical(xs: &[f64]) -> Self {
        let w = 1.0 / xs.len().max(1) as f64;
        Self {
            atoms: xs.to_vec(),
            weights: vec![w; xs.len()],
        }
    }

    /// Cell-centred density `ρ` on a grid with spacing `dx`.
    pub fn from_density(xs: &[f64], rho: &[f64], dx: f64) -> Self {
        Self {
            atoms: xs.to_vec(),
            weights: rho.iter().map(|r| r * dx).collect(),
        }
    }

    pub fn dirac(z: f64) -> Self {
        Self {
            atoms: vec![z],
            weights: vec![1.0],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `⟨μ, f⟩`.
    pub fn pair(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.atoms.iter().zip(&self.weights).map(|(&y, &w)| w * f(y)).sum()
    }
}

/// TOML kernel definition; also carries the initial point and optional grid
/// and test-function settings used by the command-line tools.
///
/// ```toml
/// x0 = 0.5
/// alpha = [{ coef = 1.0, x = "gaussian", y = "gaussian" }]
/// beta  = [{ coef = -1.0, x = "linear", y = "gaussian" }]
/// test_functions = [[1.0], [0.0, 1.0]]   # Hermite coefficients
///
/// [grid]
/// x_lo = -5.0
/// x_hi = 5.0
/// nx = 200
/// T = 1.0
/// steps = 500
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    #[serde(default)]
    pub x0: f64,
    pub alpha: Vec<Term>,
    pub beta: Vec<Term>,
    #[serde(default)]
    pub test_functions: Vec<Vec<f64>>,
    pub grid: Option<GridConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub x_lo: f64,
    pub x_hi: f64,
    pub nx: usize,
    #[serde(rename = "T")]
    pub t: f64,
    pub steps: usize,
}

impl KernelConfig {
    /// Default kernels with unit constants started at `x0 = 0.5`.
    pub fn default_model() -> Self {
        Self {
            x0: 0.5,
            alpha: vec![Term::new(1.0, Factor::Gaussian, Factor::Gaussian)],
            beta: vec![Term::new(-1.0, Factor::Linear, Factor::Gaussian)],
            test_functions: vec![vec![1.0], vec![0.0, 1.0]],
            grid: None,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(toml::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn kernels(&self) -> KernelPair {
        KernelPair::new(Kernel::Separable(self.alpha.clone()), Kernel::Separable(self.beta.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_and_dense_agree() {
        let pair = KernelPair::default_with(1.3, 0.7);
        let dense_a = Kernel::dense(|x, y| 1.3 * (-(x * x + y * y) / 2.0).exp());
        let dense_b = Kernel::dense(|x, y| -0.7 * x * (-(y * y) / 2.0).exp());
        let mu = DiscreteMeasure::empirical(&[-1.0, 0.2, 0.5, 2.0]);
        let xs = [-0.3, 0.0, 1.1];
        let w = [0.5, -1.0, 2.0, 0.1];
        for (a, b) in pair.alpha.average(&xs, &mu).iter().zip(dense_a.average(&xs, &mu)) {
            assert!((a - b).abs() < 1e-14);
        }
        for (a, b) in pair
            .beta
            .pair_first(&xs, &mu, &w)
            .iter()
            .zip(dense_b.pair_first(&xs, &mu, &w))
        {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn bounds_of_default_kernels() {
        let pair = KernelPair::default();
        assert_eq!(pair.alpha.sup_bound(), Some(1.0));
        assert_eq!(pair.beta.sup_bound(), Some(f64::INFINITY));
        assert!(pair.alpha.lipschitz_bound().unwrap() <= 2.0 * (-0.5f64).exp() + 1e-15);
    }

    #[test]
    fn config_parses() {
        let cfg: KernelConfig = toml::from_str(
            "x0 = 0.5\nalpha = [{ coef = 1.0, x = \"gaussian\", y = \"gaussian\" }]\nbeta = [{ coef = -1.0, x = \"linear\", y = \"one\" }]\n",
        )
        .unwrap();
        let k = cfg.kernels();
        assert_eq!(k.beta.eval(2.0, 7.0), -2.0);
    }
}
