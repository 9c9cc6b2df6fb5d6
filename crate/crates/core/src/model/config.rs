//! TOML model definitions.
//!
//! ```toml
//! K = 5
//! family = "birth-death"   # or "constant"
//! a = 1.0
//! b = 0.5
//! c = 0.8
//! # rates = [[0, 1], [1, 0]]   (family = "constant")
//! # initial = [1, 0, 0, 0, 0]
//!
//! [constants]               # optional; recomputed and cross-checked
//! gamma_norm = 2.3
//! ```

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{BirthDeath, ConstantRate, RateModel, SimplexVec};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constants {
    pub gamma_norm: Option<f64>,
    pub c_gamma: Option<f64>,
    pub l_gamma: Option<f64>,
    pub c_b: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(rename = "K")]
    pub k: usize,
    pub family: String,
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default)]
    pub c: f64,
    pub rates: Option<Vec<Vec<f64>>>,
    pub initial: Option<Vec<f64>>,
    pub constants: Option<Constants>,
}

impl ModelConfig {
    pub fn birth_death(k: usize, a: f64, b: f64, c: f64) -> Self {
        Self {
            k,
            family: "birth-death".into(),
            a,
            b,
            c,
            rates: None,
            initial: None,
            constants: None,
        }
    }

    pub fn constant(rates: Vec<Vec<f64>>) -> Self {
        Self {
            k: rates.len(),
            family: "constant".into(),
            a: 0.0,
            b: 0.0,
            c: 0.0,
            rates: Some(rates),
            initial: None,
            constants: None,
        }
    }

    /// Symmetric two-state chain with unit rates.
    pub fn two_state() -> Self {
        Self::constant(vec![vec![0.0, 1.0], vec![1.0, 0.0]])
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn build(&self) -> Result<Arc<dyn RateModel>> {
        let model: Arc<dyn RateModel> = match self.family.as_str() {
            "birth-death" => {
                if self.rates.is_some() {
                    return Err(Error::Config("`rates` is only valid for family = \"constant\"".into()));
                }
                Arc::new(BirthDeath::new(self.k, self.a, self.b, self.c)?)
            }
            "constant" => {
                let rates = self
                    .rates
                    .clone()
                    .ok_or_else(|| Error::Config("family \"constant\" needs `rates`".into()))?;
                if rates.len() != self.k {
                    return Err(Error::Config(format!("K = {} but rates has {} rows", self.k, rates.len())));
                }
                Arc::new(ConstantRate::new(rates)?)
            }
            other => return Err(Error::Config(format!("unknown model family {other:?}"))),
        };
        if let Some(c) = &self.constants {
            let pairs = [
                ("gamma_norm", c.gamma_norm, model.gamma_norm()),
                ("c_gamma", c.c_gamma, model.c_gamma()),
                ("l_gamma", c.l_gamma, model.l_gamma()),
                ("c_b", c.c_b, model.c_b()),
            ];
            for (name, given, computed) in pairs {
                if let Some(g) = given {
                    if (g - computed).abs() > 1e-9 * computed.abs().max(1.0) {
                        return Err(Error::Config(format!(
                            "constant {name} = {g} disagrees with computed value {computed}"
                        )));
                    }
                }
            }
        }
        Ok(model)
    }

    /// Configured initial law, or a point mass on the first state.
    pub fn initial(&self) -> Result<SimplexVec> {
        match &self.initial {
            Some(v) => {
                if v.len() != self.k {
                    return Err(Error::Dimension {
                        expected: self.k,
                        got: v.len(),
                    });
                }
                SimplexVec::new(v.clone())
            }
            None => Ok(SimplexVec::point(self.k, 0)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_cross_checks() {
        let cfg = ModelConfig::from_toml_str(
            "K = 5\nfamily = \"birth-death\"\na = 1.0\nb = 0.5\nc = 0.8\n[constants]\ngamma_norm = 2.3\n",
        )
        .unwrap();
        let m = cfg.build().unwrap();
        assert_eq!(m.num_states(), 5);
        assert!((m.gamma_norm() - 2.3).abs() < 1e-15);

        let bad = ModelConfig::from_toml_str(
            "K = 5\nfamily = \"birth-death\"\na = 1.0\nb = 0.5\nc = 0.8\n[constants]\nl_gamma = 0.4\n",
        )
        .unwrap();
        assert!(bad.build().is_err());
    }

    #[test]
    fn constant_family() {
        let cfg =
            ModelConfig::from_toml_str("K = 2\nfamily = \"constant\"\nrates = [[0, 1], [1, 0]]\ninitial = [0.5, 0.5]\n").unwrap();
        let m = cfg.build().unwrap();
        assert_eq!(m.gamma(&[0.5, 0.5], 0, 1), 1.0);
        assert_eq!(cfg.initial().unwrap().as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn rejects_unknown() {
        assert!(ModelConfig::from_toml_str("K = 2\nfamily = \"x\"").unwrap().build().is_err());
        assert!(ModelConfig::from_toml_str("K = 2\nfamily = \"constant\"\nfoo = 1").is_err());
    }
}
