//! Piecewise-linear vector paths.
//!
//! A [`PathVec`] stores values at a non-decreasing list of times and
//! interpolates linearly in between. A time may appear twice: the first
//! value is the left limit and the second the value at and after the jump,
//! so step paths such as the empirical measure are represented exactly and
//! the path stays right-continuous.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::model::l2_norm;

#[derive(Debug, Clone, PartialEq)]
pub struct PathVec {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl PathVec {
    pub fn new(times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::Grid(format!("{} times but {} values", times.len(), values.len())));
        }
        let dim = values[0].len();
        if let Some(n) = values.iter().position(|v| v.len() != dim) {
            return Err(Error::Dimension {
                expected: dim,
                got: values[n].len(),
            });
        }
        if times.iter().any(|t| !t.is_finite()) || values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Grid("non-finite entry".into()));
        }
        if times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Grid("times are not sorted".into()));
        }
        if times.windows(3).any(|w| w[0] == w[2]) {
            return Err(Error::Grid("a time appears more than twice".into()));
        }
        Ok(Self { times, values })
    }

    /// Path sampled from `f` on `grid`.
    pub fn from_fn(grid: &[f64], f: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        Self::new(grid.to_vec(), grid.iter().map(|&t| f(t)).collect())
    }

    pub fn zeros(grid: &[f64], dim: usize) -> Self {
        Self {
            times: grid.to_vec(),
            values: vec![vec![0.0; dim]; grid.len()],
        }
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Right-continuous value at `t` (clamped to the time range).
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return self.values[0].clone();
        }
        if k == self.times.len() {
            return self.values[k - 1].clone();
        }
        self.lerp(k - 1, k, t)
    }

    /// Left limit at `t`.
    pub fn eval_left(&self, t: f64) -> Vec<f64> {
        let k = self.times.partition_point(|&s| s < t);
        if k == 0 {
            return self.values[0].clone();
        }
        if k == self.times.len() {
            return self.values[k - 1].clone();
        }
        self.lerp(k - 1, k, t)
    }

    fn lerp(&self, a: usize, b: usize, t: f64) -> Vec<f64> {
        let (ta, tb) = (self.times[a], self.times[b]);
        let w = if tb > ta { (t - ta) / (tb - ta) } else { 1.0 };
        self.values[a]
            .iter()
            .zip(&self.values[b])
            .map(|(x, y)| x + w * (y - x))
            .collect()
    }

    /// Largest jump `‖x(t) − x(t−)‖` over repeated times.
    pub fn max_jump(&self) -> f64 {
        (1..self.len())
            .filter(|&n| self.times[n] == self.times[n - 1])
            .map(|n| crate::model::l2_distance(&self.values[n], &self.values[n - 1]))
            .fold(0.0, f64::max)
    }

    pub fn is_continuous(&self) -> bool {
        self.max_jump() == 0.0
    }

    /// True when the times form a uniform grid without repeats.
    pub fn is_uniform(&self) -> bool {
        let n = self.len();
        if n < 2 {
            return true;
        }
        let dt = (self.horizon() - self.start()) / (n - 1) as f64;
        dt > 0.0
            && self
                .times
                .iter()
                .enumerate()
                .all(|(k, &t)| (t - (self.start() + k as f64 * dt)).abs() <= 1e-9 * dt.max(1.0))
    }

    /// `sup_t ‖x(t)‖`; exact because the norm is convex along linear pieces.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| l2_norm(v)).fold(0.0, f64::max)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            times: self.times.clone(),
            values: self.values.iter().map(|v| v.iter().map(|x| c * x).collect()).collect(),
        }
    }

    /// `c · (self − other)` on the merged breakpoint grid, keeping both one-sided
    /// values wherever either path jumps.
    pub fn scaled_difference(&self, other: &PathVec, c: f64) -> Result<PathVec> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        let mut grid: Vec<f64> = self.times.iter().chain(&other.times).copied().collect();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let jumps = |p: &PathVec, t: f64| {
            let k = p.times.partition_point(|&s| s < t);
            k + 1 < p.times.len() && p.times[k] == t && p.times[k + 1] == t
        };
        let diff = |a: Vec<f64>, b: Vec<f64>| a.iter().zip(&b).map(|(x, y)| c * (x - y)).collect::<Vec<_>>();
        let mut times = Vec::with_capacity(grid.len());
        let mut values = Vec::with_capacity(grid.len());
        for t in grid {
            if jumps(self, t) || jumps(other, t) {
                times.push(t);
                values.push(diff(self.eval_left(t), other.eval_left(t)));
            }
            times.push(t);
            values.push(diff(self.eval(t), other.eval(t)));
        }
        PathVec::new(times, values)
    }

    /// `sup_t ‖self(t) − other(t)‖`.
    pub fn sup_distance(&self, other: &PathVec) -> Result<f64> {
        Ok(self.scaled_difference(other, 1.0)?.sup_norm())
    }

    /// Writes `time,state_1..state_K`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["time".to_string()];
        header.extend((1..=self.dim()).map(|i| format!("state_{i}")));
        wtr.write_record(&header)?;
        for (t, v) in self.times.iter().zip(&self.values) {
            let mut rec = vec![format_f64(*t)];
            rec.extend(v.iter().map(|x| format_f64(*x)));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.get(0) != Some("time") || headers.len() < 2 {
            return Err(Error::Grid("path CSV must start with a `time` column".into()));
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let row: Vec<f64> = rec
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Grid(format!("bad number {s:?}: {e}")))
                })
                .collect::<Result<_>>()?;
            times.push(row[0]);
            values.push(row[1..].to_vec());
        }
        Self::new(times, values)
    }
}

/// Shortest decimal that round-trips.
pub(crate) fn format_f64(x: f64) -> String {
    format!("{x:?}")
}

pub(crate) fn midpoint(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect()
}

/// `n + 1` equally spaced points on `[0, t]`.
pub fn uniform_grid(t: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| t * k as f64 / n as f64).collect()
}
