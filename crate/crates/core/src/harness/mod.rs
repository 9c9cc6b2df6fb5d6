//! Experiment runner: TOML experiment specs, replica fan-out, statistics and
//! versioned JSON reports.
//!
//! A report is a pure function of the resolved spec: replicas are mapped in
//! parallel but collected in index order and reduced sequentially, and each
//! replica owns its random stream, so the output is byte-identical for any
//! worker count. Wall-clock runtime is returned next to the report rather
//! than inside it for the same reason.

mod experiments;
mod properties;
pub mod stats;
pub mod tolerances;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::jump_sim::ControlConfig;
use crate::kernels::{GridConfig, KernelConfig};
use crate::model::config::ModelConfig;

pub use experiments::{
    exact_two_state_law, lattice_start, run_clt_scaling, run_coupling_scaling, run_exactness, run_initial_moments, run_lln,
    run_rate_roundtrip, run_tilt_limit,
};
pub use properties::run_lemma_suite;
pub use stats::{SlopeFit, Summary};
pub use tolerances::Tolerances;

/// Version of the JSON report layout.
pub const SCHEMA_VERSION: u32 = 1;
/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "DEVIA_WORKERS";
/// Smallest replica count accepted for slope fits.
pub const MIN_REPLICAS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Lln,
    CltScaling,
    TiltLimit,
    CouplingScaling,
    RateRoundtrip,
    LemmaSuite,
    InitialMoments,
    Exactness,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    pub report: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

/// One experiment. Unset fields take per-kind defaults in [`ExperimentSpec::resolve`];
/// the resolved spec is what reports embed and hash.
///
/// ```toml
/// kind = "lln"
/// seed = 7
/// replicas = 200
/// m_grid = [100, 400, 1600, 6400]
/// T = 1.0
///
/// [model]
/// K = 2
/// family = "constant"
/// rates = [[0.0, 1.0], [1.0, 0.0]]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: Kind,
    #[serde(default)]
    pub seed: u64,
    pub replicas: Option<usize>,
    pub m_grid: Option<Vec<usize>>,
    pub theta: Option<f64>,
    #[serde(rename = "T")]
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    /// Particles in the diffusion reference ensemble.
    pub m_ref: Option<usize>,
    /// Constant diffusion control `ũ` of the coupling experiment.
    pub control_value: Option<f64>,
    /// Hermite coefficients of the test function paired in `clt-scaling`.
    pub test_function: Option<Vec<f64>>,
    pub model: Option<ModelConfig>,
    pub model_file: Option<PathBuf>,
    pub kernels: Option<KernelConfig>,
    pub kernels_file: Option<PathBuf>,
    pub control: Option<ControlConfig>,
    pub control_file: Option<PathBuf>,
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing)]
    pub output: Output,
}

impl ExperimentSpec {
    pub fn new(kind: Kind) -> Self {
        Self {
            kind,
            seed: 0,
            replicas: None,
            m_grid: None,
            theta: None,
            horizon: None,
            dt: None,
            m_ref: None,
            control_value: None,
            test_function: None,
            model: None,
            model_file: None,
            kernels: None,
            kernels_file: None,
            control: None,
            control_file: None,
            grid: None,
            tolerances: Tolerances::default(),
            output: Output::default(),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    /// Loads a spec; referenced files are read relative to its directory and
    /// inlined.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut spec = Self::from_toml_str(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        spec.inline_files(base)?;
        let rel = |p: &mut Option<PathBuf>| {
            if let Some(q) = p.as_mut() {
                if q.is_relative() {
                    *q = base.join(&*q);
                }
            }
        };
        rel(&mut spec.output.report);
        rel(&mut spec.output.csv);
        Ok(spec)
    }

    fn inline_files(&mut self, base: &Path) -> Result<()> {
        if let Some(f) = self.model_file.take() {
            if self.model.is_some() {
                return Err(Error::Config("give either [model] or model_file".into()));
            }
            self.model = Some(ModelConfig::load(base.join(f))?);
        }
        if let Some(f) = self.kernels_file.take() {
            if self.kernels.is_some() {
                return Err(Error::Config("give either [kernels] or kernels_file".into()));
            }
            self.kernels = Some(KernelConfig::load(base.join(f))?);
        }
        if let Some(f) = self.control_file.take() {
            if self.control.is_some() {
                return Err(Error::Config("give either [control] or control_file".into()));
            }
            self.control = Some(ControlConfig::load(base.join(f))?);
        }
        Ok(())
    }

    /// Fills every unset field with the kind's default and validates.
    pub fn resolve(&self) -> Result<Self> {
        let mut s = self.clone();
        s.inline_files(Path::new("."))?;
        let d = experiments::defaults(s.kind);
        s.replicas = s.replicas.or(d.replicas);
        s.m_grid = s.m_grid.or(d.m_grid);
        s.theta = s.theta.or(d.theta);
        s.horizon = s.horizon.or(d.horizon);
        s.dt = s.dt.or(d.dt);
        s.m_ref = s.m_ref.or(d.m_ref);
        s.control_value = s.control_value.or(d.control_value);
        s.test_function = s.test_function.or(d.test_function);
        s.model = s.model.or(d.model);
        s.kernels = s.kernels.or(d.kernels);
        s.control = s.control.or(d.control);
        s.grid = s.grid.or(d.grid);
        if let Some(ms) = &s.m_grid {
            if ms.is_empty() || ms[0] == 0 || ms.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Config(format!("m_grid {ms:?} must be positive and increasing")));
            }
        }
        if let Some(r) = s.replicas {
            if r >= 1 << 24 {
                return Err(Error::Config("at most 2^24 replicas per m".into()));
            }
        }
        Ok(s)
    }

    /// SHA-256 of the resolved spec's canonical JSON form.
    pub fn config_hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
    }

    pub(crate) fn replicas(&self) -> usize {
        self.replicas.unwrap_or(0)
    }

    pub(crate) fn m_grid(&self) -> &[usize] {
        self.m_grid.as_deref().unwrap_or(&[])
    }

    pub(crate) fn theta(&self) -> f64 {
        self.theta.unwrap_or(0.0)
    }

    pub(crate) fn horizon(&self) -> f64 {
        self.horizon.unwrap_or(1.0)
    }

    pub(crate) fn require_replicas(&self, required: usize, reason: &str) -> Result<()> {
        if self.replicas() < required {
            return Err(Error::InsufficientReplicas {
                got: self.replicas(),
                required,
                reason: reason.into(),
            });
        }
        Ok(())
    }
}

/// One pass/fail verdict with the threshold it was judged against.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Criterion {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    /// Human-readable form of the test, e.g. `|slope - -1| <= 0.2`.
    pub test: String,
    pub passed: bool,
}

impl Criterion {
    /// `value ≤ bound`.
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance: bound,
            test: format!("value <= {bound}"),
            passed: value <= bound,
        }
    }

    /// `|value − target| ≤ tol`.
    pub fn within(name: impl Into<String>, value: f64, target: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance: tol,
            test: format!("|value - {target}| <= {tol}"),
            passed: (value - target).abs() <= tol,
        }
    }

    /// A boolean check recorded as 1/0.
    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Self {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            tolerance: 0.0,
            test: "holds".into(),
            passed: ok,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: value {:.6e} ({})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.test
        )
    }
}

/// Statistics of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerM {
    pub m: usize,
    pub statistic: String,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedSlope {
    pub name: String,
    #[serde(flatten)]
    pub fit: SlopeFit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub kind: Kind,
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub spec: ExperimentSpec,
    pub per_m: Vec<PerM>,
    pub slopes: Vec<NamedSlope>,
    pub criteria: Vec<Criterion>,
    /// Scalar by-products (reference values, limits) keyed by name.
    pub values: BTreeMap<String, f64>,
    pub passed: bool,
}

impl ExperimentReport {
    pub(crate) fn new(spec: &ExperimentSpec) -> Result<Self> {
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            kind: spec.kind,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config_hash: spec.config_hash()?,
            seed: spec.seed,
            spec: spec.clone(),
            per_m: Vec::new(),
            slopes: Vec::new(),
            criteria: Vec::new(),
            values: BTreeMap::new(),
            passed: true,
        })
    }

    pub(crate) fn push(&mut self, c: Criterion) {
        self.passed &= c.passed;
        self.criteria.push(c);
    }

    pub(crate) fn per_m(&mut self, m: usize, statistic: &str, samples: &[f64]) -> Summary {
        let summary = Summary::of(samples);
        self.per_m.push(PerM {
            m,
            statistic: statistic.into(),
            summary: summary.clone(),
        });
        summary
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `m, statistic, n, mean, variance, std_error` per grid point.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["m", "statistic", "n", "mean", "variance", "std_error"])?;
        for p in &self.per_m {
            w.write_record([
                p.m.to_string(),
                p.statistic.clone(),
                p.summary.n.to_string(),
                format!("{:?}", p.summary.mean),
                format!("{:?}", p.summary.variance),
                format!("{:?}", p.summary.std_error),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A report and the wall-clock time it took.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: ExperimentReport,
    pub runtime_secs: f64,
}

/// Worker count from `DEVIA_WORKERS`, or `None` to use rayon's default.
pub fn workers_from_env() -> Option<usize> {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n| n > 0)
}

/// Runs an experiment on a pool of `workers` threads (rayon default if
/// `None`).
pub fn run(spec: &ExperimentSpec, workers: Option<usize>) -> Result<RunOutput> {
    let spec = spec.resolve()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let start = Instant::now();
    let report = pool.install(|| match spec.kind {
        Kind::Lln => run_lln(&spec),
        Kind::CltScaling => run_clt_scaling(&spec),
        Kind::TiltLimit => run_tilt_limit(&spec),
        Kind::CouplingScaling => run_coupling_scaling(&spec),
        Kind::RateRoundtrip => run_rate_roundtrip(&spec),
        Kind::LemmaSuite => run_lemma_suite(&spec),
        Kind::InitialMoments => run_initial_moments(&spec),
        Kind::Exactness => run_exactness(&spec),
    })?;
    Ok(RunOutput {
        report,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

/// Writes the report (and CSV if configured) plus a `*.runtime.json`
/// sidecar next to the report.
pub fn write_outputs(out: &RunOutput, output: &Output) -> Result<()> {
    for p in output.report.iter().chain(&output.csv) {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
    }
    if let Some(p) = &output.report {
        std::fs::write(p, out.report.to_json()?)?;
        let mut side = p.clone().into_os_string();
        side.push(".runtime.json");
        let mut f = std::fs::File::create(PathBuf::from(side))?;
        writeln!(f, "{}", serde_json::json!({ "runtime_secs": out.runtime_secs }))?;
    }
    if let Some(p) = &output.csv {
        out.report.write_csv(p)?;
    }
    Ok(())
}

/// Stream address of replica `r` at grid point `m`.
pub(crate) fn replica_id(m: usize, r: usize) -> u64 {
    ((m as u64) << 24) | r as u64
}

/// Maps `f` over `0..n` in parallel, keeping index order.
pub(crate) fn replicate<T: Send>(n: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..n).into_par_iter().map(f).collect()
}
