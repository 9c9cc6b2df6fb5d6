use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{band_pairs, rate, RateModel};
use crate::path::{midpoint, PathVec};

/// Per-cell, piecewise-constant control `ψ_ij(s)` on `bins` equal time bins
/// of `[0, horizon]`.
///
/// The control acts on the cells `A_ij(p(s))` of the limit path. Bin edges
/// should coincide with grid points of the `p` path used alongside it; the
/// bin of a grid step is taken at the step midpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpControl {
    k: usize,
    horizon: f64,
    bins: usize,
    values: Vec<f64>,
}

impl JumpControl {
    pub fn zero(k: usize, horizon: f64, bins: usize) -> Result<Self> {
        if bins == 0 || !(horizon > 0.0) {
            return Err(Error::Config(format!(
                "control needs bins >= 1 and horizon > 0 (got {bins}, {horizon})"
            )));
        }
        Ok(Self {
            k,
            horizon,
            bins,
            values: vec![0.0; bins * k * k],
        })
    }

    /// `ψ_ij ≡ value` on a single cell, zero elsewhere.
    pub fn constant_on(k: usize, horizon: f64, i: usize, j: usize, value: f64) -> Result<Self> {
        let mut c = Self::zero(k, horizon, 1)?;
        c.set(0, i, j, value)?;
        Ok(c)
    }

    pub fn num_states(&self) -> usize {
        self.k
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn bin_width(&self) -> f64 {
        self.horizon / self.bins as f64
    }

    pub fn bin_at(&self, t: f64) -> usize {
        ((t / self.bin_width()).floor().max(0.0) as usize).min(self.bins - 1)
    }

    fn idx(&self, bin: usize, i: usize, j: usize) -> usize {
        (bin * self.k + i) * self.k + j
    }

    pub fn set(&mut self, bin: usize, i: usize, j: usize, v: f64) -> Result<()> {
        if bin >= self.bins || i >= self.k || j >= self.k || i == j {
            return Err(Error::Domain(format!("control index (bin {bin}, {i}, {j}) out of range")));
        }
        if !v.is_finite() {
            return Err(Error::Domain(format!("control value {v} is not finite")));
        }
        let n = self.idx(bin, i, j);
        self.values[n] = v;
        Ok(())
    }

    pub fn get(&self, bin: usize, i: usize, j: usize) -> f64 {
        self.values[self.idx(bin, i, j)]
    }

    pub fn value_at(&self, t: f64, i: usize, j: usize) -> f64 {
        self.get(self.bin_at(t), i, j)
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Checks `φ = 1 + ψ/scale ≥ 0` on every cell and bin, where
    /// `scale = a(m)·√m`.
    pub fn check_thinning(&self, scale: f64) -> Result<()> {
        for bin in 0..self.bins {
            for i in 0..self.k {
                for j in 0..self.k {
                    if i == j {
                        continue;
                    }
                    let phi = 1.0 + self.get(bin, i, j) / scale;
                    if phi < 0.0 {
                        return Err(Error::NegativeThinning { i, j, bin, phi });
                    }
                }
            }
        }
        Ok(())
    }

    /// `‖ψ‖²_{L²(λ)} = Σ_steps Δt Σ_{i≠j} ψ_ij² p_iΓ_ij(p)` with `p` taken at
    /// the midpoint of each grid step of `p_path`.
    pub fn norm_sq<M: RateModel + ?Sized>(&self, model: &M, p_path: &PathVec) -> f64 {
        let pairs = band_pairs(model);
        let t = p_path.times();
        let v = p_path.values();
        (0..t.len() - 1)
            .map(|n| {
                let dt = t[n + 1] - t[n];
                if dt == 0.0 {
                    return 0.0;
                }
                let mid = midpoint(&v[n], &v[n + 1]);
                let bin = self.bin_at(0.5 * (t[n] + t[n + 1]));
                dt * pairs
                    .iter()
                    .map(|&(i, j)| self.get(bin, i, j).powi(2) * rate(model, &mid, i, j))
                    .sum::<f64>()
            })
            .sum()
    }

    pub fn to_config(&self) -> ControlConfig {
        let mut cells = Vec::new();
        for i in 0..self.k {
            for j in 0..self.k {
                if i == j {
                    continue;
                }
                let values: Vec<f64> = (0..self.bins).map(|b| self.get(b, i, j)).collect();
                if values.iter().any(|&v| v != 0.0) {
                    cells.push(CellControl {
                        from: i + 1,
                        to: j + 1,
                        values,
                    });
                }
            }
        }
        ControlConfig {
            horizon: self.horizon,
            bins: self.bins,
            cells,
        }
    }
}

/// TOML form of a [`JumpControl`]. States are numbered from 1.
///
/// ```toml
/// horizon = 1.0
/// bins = 4
/// [[cells]]
/// from = 1
/// to = 2
/// values = [0.5, 0.5, -0.2, 0.0]   # one per bin, or a single constant
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    pub horizon: f64,
    #[serde(default = "one")]
    pub bins: usize,
    #[serde(default)]
    pub cells: Vec<CellControl>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellControl {
    pub from: usize,
    pub to: usize,
    pub values: Vec<f64>,
}

impl ControlConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(toml::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn build(&self, k: usize) -> Result<JumpControl> {
        let mut c = JumpControl::zero(k, self.horizon, self.bins)?;
        for cell in &self.cells {
            if cell.from == 0 || cell.to == 0 || cell.from > k || cell.to > k {
                return Err(Error::Config(format!(
                    "control cell ({}, {}) outside states 1..{k}",
                    cell.from, cell.to
                )));
            }
            let vals: Vec<f64> = match cell.values.len() {
                1 => vec![cell.values[0]; self.bins],
                n if n == self.bins => cell.values.clone(),
                n => {
                    return Err(Error::Config(format!(
                        "control cell ({}, {}) has {n} values for {} bins",
                        cell.from, cell.to, self.bins
                    )))
                }
            };
            for (b, v) in vals.into_iter().enumerate() {
                c.set(b, cell.from - 1, cell.to - 1, v)?;
            }
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip() {
        let cfg: ControlConfig =
            toml::from_str("horizon = 2.0\nbins = 2\n[[cells]]\nfrom = 1\nto = 2\nvalues = [0.5, -0.25]\n").unwrap();
        let c = cfg.build(2).unwrap();
        assert_eq!(c.value_at(0.3, 0, 1), 0.5);
        assert_eq!(c.value_at(1.7, 0, 1), -0.25);
        assert_eq!(c.value_at(2.0, 0, 1), -0.25);
        assert_eq!(c.to_config(), cfg);
        assert!(ControlConfig {
            cells: vec![CellControl {
                from: 3,
                to: 1,
                values: vec![1.0]
            }],
            ..cfg
        }
        .build(2)
        .is_err());
    }

    #[test]
    fn thinning_check_names_cell() {
        let c = JumpControl::constant_on(2, 1.0, 1, 0, -5.0).unwrap();
        match c.check_thinning(2.0) {
            Err(Error::NegativeThinning { i: 1, j: 0, bin: 0, phi }) => assert_eq!(phi, -1.5),
            other => panic!("{other:?}"),
        }
        assert!(c.check_thinning(10.0).is_ok());
    }
}
