use crate::error::{Error, Result};

use super::RateModel;

/// Mean-field birth–death chain on `K` states, reflecting at both ends.
///
/// `Γ_{i,i+1}(q) = a + b·q_i` and `Γ_{i,i−1}(q) = c`; all other rates vanish.
/// The self-excitation `b·q_i` is the mean-field interaction: upward moves out
/// of a crowded state are faster.
#[derive(Debug, Clone, PartialEq)]
pub struct BirthDeath {
    pub k: usize,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl BirthDeath {
    pub fn new(k: usize, a: f64, b: f64, c: f64) -> Result<Self> {
        if k < 2 {
            return Err(Error::Config(format!("birth-death model needs K >= 2, got {k}")));
        }
        for (name, v) in [("a", a), ("b", b), ("c", c)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("parameter {name} = {v} must be finite and >= 0")));
            }
        }
        Ok(Self { k, a, b, c })
    }
}

impl RateModel for BirthDeath {
    fn num_states(&self) -> usize {
        self.k
    }

    fn gamma(&self, q: &[f64], i: usize, j: usize) -> f64 {
        if j == i + 1 && j < self.k {
            self.a + self.b * q[i]
        } else if i > 0 && j == i - 1 {
            self.c
        } else {
            0.0
        }
    }

    fn gamma_norm(&self) -> f64 {
        self.a + self.b + self.c
    }

    fn c_gamma(&self) -> f64 {
        // column j: Γ_{j−1,j} + |Γ_jj| + Γ_{j+1,j} ≤ 2a + b(q_{j−1} + q_j) + 2c
        2.0 * self.a + self.b + 2.0 * self.c
    }

    fn l_gamma(&self) -> f64 {
        self.b
    }

    fn c_b(&self) -> f64 {
        2.0 * self.a + 4.0 * self.b + 2.0 * self.c
    }

    fn range(&self) -> usize {
        1
    }

    fn db(&self, q: &[f64], h: &[f64]) -> Option<Vec<f64>> {
        let k = self.k;
        let up = |i: usize| self.a + 2.0 * self.b * q[i];
        let out = (0..k)
            .map(|i| {
                let mut v = 0.0;
                if i > 0 {
                    v += up(i - 1) * h[i - 1] - self.c * h[i];
                }
                if i + 1 < k {
                    v += self.c * h[i + 1] - up(i) * h[i];
                }
                v
            })
            .collect();
        Some(out)
    }

    fn family(&self) -> &str {
        "birth-death"
    }
}

/// Rates that do not depend on `q`; `b` is linear and `Db = Γᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantRate {
    rates: Vec<Vec<f64>>,
    norm: f64,
    c_gamma: f64,
    c_b: f64,
    range: usize,
}

impl ConstantRate {
    /// `rates[i][j]` is `Γ_ij` for `i != j`; diagonal entries are ignored.
    pub fn new(mut rates: Vec<Vec<f64>>) -> Result<Self> {
        let k = rates.len();
        if k < 2 {
            return Err(Error::Config(format!("constant-rate model needs K >= 2, got {k}")));
        }
        if let Some(row) = rates.iter().position(|r| r.len() != k) {
            return Err(Error::Config(format!("rate matrix row {row} has wrong length")));
        }
        let mut range = 1;
        for i in 0..k {
            rates[i][i] = 0.0;
            for j in 0..k {
                let v = rates[i][j];
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::Config(format!("rate ({i},{j}) = {v} must be finite and >= 0")));
                }
                if v > 0.0 {
                    range = range.max(i.abs_diff(j));
                }
            }
        }
        let out: Vec<f64> = rates.iter().map(|r| r.iter().sum()).collect();
        let norm = out.iter().cloned().fold(0.0, f64::max);
        let col = |j: usize| (0..k).map(|i| rates[i][j]).sum::<f64>() + out[j];
        let c_gamma = (0..k).map(col).fold(0.0, f64::max);
        // ‖Γᵀ‖₂ ≤ sqrt(‖Γᵀ‖₁‖Γᵀ‖∞); the rows of Γ have absolute sum 2·out_i
        let max_row = 2.0 * norm;
        let c_b = (max_row * c_gamma).sqrt();
        Ok(Self {
            rates,
            norm,
            c_gamma,
            c_b,
            range,
        })
    }

    pub fn rates(&self) -> &[Vec<f64>] {
        &self.rates
    }
}

impl RateModel for ConstantRate {
    fn num_states(&self) -> usize {
        self.rates.len()
    }

    fn gamma(&self, _q: &[f64], i: usize, j: usize) -> f64 {
        self.rates[i][j]
    }

    fn gamma_norm(&self) -> f64 {
        self.norm
    }

    fn c_gamma(&self) -> f64 {
        self.c_gamma
    }

    fn l_gamma(&self) -> f64 {
        0.0
    }

    fn c_b(&self) -> f64 {
        self.c_b
    }

    fn range(&self) -> usize {
        self.range
    }

    fn db(&self, _q: &[f64], h: &[f64]) -> Option<Vec<f64>> {
        let k = self.rates.len();
        let out = (0..k)
            .map(|i| {
                let inflow: f64 = (0..k).map(|j| h[j] * self.rates[j][i]).sum();
                let outflow: f64 = self.rates[i].iter().sum::<f64>() * h[i];
                inflow - outflow
            })
            .collect();
        Some(out)
    }

    fn family(&self) -> &str {
        "constant"
    }
}

/// Wrapper that hides a model's analytic derivative so that `Db` falls back
/// to finite differences.
#[derive(Debug, Clone)]
pub struct NumericDerivative<M>(pub M);

impl<M: RateModel> RateModel for NumericDerivative<M> {
    fn num_states(&self) -> usize {
        self.0.num_states()
    }
    fn gamma(&self, q: &[f64], i: usize, j: usize) -> f64 {
        self.0.gamma(q, i, j)
    }
    fn gamma_norm(&self) -> f64 {
        self.0.gamma_norm()
    }
    fn c_gamma(&self) -> f64 {
        self.0.c_gamma()
    }
    fn l_gamma(&self) -> f64 {
        self.0.l_gamma()
    }
    fn c_b(&self) -> f64 {
        self.0.c_b()
    }
    fn range(&self) -> usize {
        self.0.range()
    }
    fn family(&self) -> &str {
        self.0.family()
    }
}
