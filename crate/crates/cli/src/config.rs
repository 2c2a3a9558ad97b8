//! Experiment documents.
//!
//! A config is a TOML file with one table per concern. Every table rejects
//! unknown keys, and relative data paths resolve against the directory that
//! holds the config file.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use rshg::directions::{DirectionRegistry, MAX_ENUMERATION};
use rshg::manifold::{Point, SphereTransport};
use rshg::optimizer::{derive_seed, OutputOption, RunConfig};
use rshg::problems::{self, synthetic, FiniteSumProblem, KarcherSpd, LeastSquares, PcaSphere};
use rshg::schedules::{ScheduleKind, ScheduleSpec};

use crate::Failure;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub run: RunSection,
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub verify: Option<VerifySection>,
    #[serde(default)]
    pub estimate: EstimateSection,
    /// Output directory, used when `--out` is not given.
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    /// Leading eigenvector on the sphere. `data` is a CSV with one sample per row.
    Pca {
        n: Option<usize>,
        d: Option<usize>,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_tail")]
        tail: f64,
        data: Option<PathBuf>,
        #[serde(default)]
        transport: SphereTransport,
    },
    /// Karcher mean on SPD. `data` is a directory of whitespace-separated matrix files.
    Karcher {
        n: Option<usize>,
        d: Option<usize>,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_spread")]
        spread: f64,
        data: Option<PathBuf>,
    },
    /// Euclidean least squares. `data` is a CSV whose rows are `a_i, c_i`.
    LeastSquares {
        n: Option<usize>,
        d: Option<usize>,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_noise")]
        noise: f64,
        data: Option<PathBuf>,
    },
}

fn default_tail() -> f64 {
    0.3
}

fn default_spread() -> f64 {
    0.5
}

fn default_noise() -> f64 {
    0.1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub algorithm: String,
    pub m: usize,
    pub epochs: usize,
    pub b: usize,
    pub seeds: Vec<u64>,
    #[serde(default = "default_output")]
    pub output: OutputOption,
    #[serde(default)]
    pub init: Init,
    #[serde(default)]
    pub restarts: Option<Restarts>,
}

fn default_output() -> OutputOption {
    OutputOption::LastIterate
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Init {
    /// `random_point` of the manifold.
    #[default]
    Random,
    /// A uniform direction at the known optimum, scaled by `radius * U[0, 1]`.
    NearOptimum { radius: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Restarts {
    pub count: usize,
    pub gamma: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    #[serde(default = "default_mu")]
    pub mu: f64,
    pub rule: ScheduleKind,
}

fn default_mu() -> f64 {
    0.5
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub epochs: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    Axioms,
    Gradient,
    Expectation,
    Monitor,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    pub checks: Vec<CheckName>,
    #[serde(default)]
    pub transport_isometry: bool,
    #[serde(default = "default_trials")]
    pub trials: usize,
}

fn default_trials() -> usize {
    50
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSection {
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_step_radius")]
    pub step_radius: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for EstimateSection {
    fn default() -> Self {
        EstimateSection {
            radius: default_radius(),
            step_radius: default_step_radius(),
            samples: default_samples(),
            seed: 0,
        }
    }
}

fn default_radius() -> f64 {
    1.0
}

fn default_step_radius() -> f64 {
    0.5
}

fn default_samples() -> usize {
    1000
}

/// Verify checks when the config has no `[verify]` table.
pub fn default_checks() -> VerifySection {
    VerifySection {
        checks: vec![CheckName::Axioms, CheckName::Gradient, CheckName::Expectation, CheckName::Monitor],
        transport_isometry: false,
        trials: default_trials(),
    }
}

/// A parsed config together with where it came from.
pub struct Loaded {
    pub config: ExperimentConfig,
    pub base: PathBuf,
}

pub fn load(path: &Path) -> Result<Loaded, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let config: ExperimentConfig =
        toml::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let loaded = Loaded { config, base };
    loaded.check_static()?;
    Ok(loaded)
}

fn field(name: &str, msg: impl std::fmt::Display) -> Failure {
    Failure::Config(format!("{name}: {msg}"))
}

impl Loaded {
    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    /// Checks that need no data.
    fn check_static(&self) -> Result<(), Failure> {
        let r = &self.config.run;
        if r.seeds.is_empty() {
            return Err(field("run.seeds", "at least one seed is required"));
        }
        if r.m == 0 {
            return Err(field("run.m", "must be at least 1"));
        }
        if r.epochs == 0 {
            return Err(field("run.epochs", "must be at least 1"));
        }
        if r.b == 0 {
            return Err(field("run.b", "must be at least 1"));
        }
        if let Init::NearOptimum { radius } = r.init {
            if !(radius >= 0.0) {
                return Err(field("run.init.radius", "must be non-negative"));
            }
        }
        DirectionRegistry::builtin()
            .get(&r.algorithm)
            .map_err(|e| field("run.algorithm", e))?;
        if let Some(sw) = &self.config.sweep {
            if sw.epochs.is_empty() || sw.epochs.contains(&0) {
                return Err(field("sweep.epochs", "need a non-empty list of positive epoch counts"));
            }
        }
        if let Some(v) = &self.config.verify {
            if v.checks.is_empty() {
                return Err(field("verify.checks", "nothing to verify"));
            }
        }
        Ok(())
    }

    pub fn problem(&self) -> Result<Box<dyn FiniteSumProblem>, Failure> {
        let built: rshg::Result<Box<dyn FiniteSumProblem>> = match &self.config.problem {
            ProblemConfig::Pca { n, d, seed, tail, data, transport } => match data {
                Some(path) => {
                    let x = read_data(&self.resolve(path), |p| problems::read_csv_matrix(p))?;
                    PcaSphere::with_transport(x, *transport).map(|p| Box::new(p) as _)
                }
                None => {
                    let (n, d) = dims(*n, *d)?;
                    synthetic::pca(&mut ChaCha8Rng::seed_from_u64(*seed), n, d, *tail, *transport)
                        .map(|p| Box::new(p) as _)
                }
            },
            ProblemConfig::Karcher { n, d, seed, spread, data } => match data {
                Some(path) => {
                    let anchors = read_data(&self.resolve(path), |p| problems::read_matrix_dir(p))?;
                    KarcherSpd::new(anchors).map(|p| Box::new(p) as _)
                }
                None => {
                    let (n, d) = dims(*n, *d)?;
                    synthetic::karcher(&mut ChaCha8Rng::seed_from_u64(*seed), n, d, *spread).map(|p| Box::new(p) as _)
                }
            },
            ProblemConfig::LeastSquares { n, d, seed, noise, data } => match data {
                Some(path) => {
                    let rows = read_data(&self.resolve(path), |p| problems::read_csv_matrix(p))?;
                    least_squares_rows(&rows).map(|p| Box::new(p) as _)
                }
                None => {
                    let (n, d) = dims(*n, *d)?;
                    synthetic::least_squares(&mut ChaCha8Rng::seed_from_u64(*seed), n, d, *noise)
                        .map(|p| Box::new(p) as _)
                }
            },
        };
        let p = built.map_err(|e| field("problem", e))?;
        let n = p.n();
        if self.config.run.b > n {
            return Err(field("run.b", format!("batch size {} exceeds n = {n}", self.config.run.b)));
        }
        Ok(p)
    }

    /// Largest epoch count any command will ask the schedule for.
    fn horizon(&self) -> usize {
        let sweep_max = self.config.sweep.as_ref().and_then(|s| s.epochs.iter().copied().max()).unwrap_or(0);
        self.config.run.epochs.max(sweep_max)
    }

    pub fn schedule(&self, horizon: Option<usize>) -> Result<ScheduleSpec, Failure> {
        let s = &self.config.schedule;
        ScheduleSpec::new(s.rule.clone(), s.mu, self.config.run.m, horizon.unwrap_or_else(|| self.horizon()))
            .map_err(|e| field("schedule", e))
    }

    pub fn initial(&self, p: &dyn FiniteSumProblem, seed: u64) -> Result<Point, Failure> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, INIT_STREAM));
        let m = p.manifold();
        match self.config.run.init {
            Init::Random => Ok(m.random_point(&mut rng)),
            Init::NearOptimum { radius } => {
                let opt = p
                    .known_optimum()
                    .ok_or_else(|| field("run.init", format!("problem {} has no known optimum", p.name())))?;
                let dir = m.random_tangent(&opt.point, &mut rng).map_err(|e| field("run.init", e))?;
                let r: f64 = rand::Rng::random(&mut rng);
                m.exp_map(&opt.point, &dir.scale(radius * r)).map_err(|e| field("run.init", e))
            }
        }
    }

    pub fn run_config(&self, p: &dyn FiniteSumProblem, seed: u64, epochs: usize, schedule: ScheduleSpec) -> Result<RunConfig, Failure> {
        let r = &self.config.run;
        let direction = DirectionRegistry::builtin().get(&r.algorithm).map_err(|e| field("run.algorithm", e))?;
        let cfg = RunConfig {
            direction,
            schedule,
            m: r.m,
            epochs,
            b: r.b,
            seed,
            output: r.output,
            initial: self.initial(p, seed)?,
        };
        cfg.validate(p).map_err(|e| field("run", e))?;
        Ok(cfg)
    }

    /// Whether the monitor can enumerate every batch for this config.
    pub fn enumerable(&self, n: usize) -> bool {
        rshg::directions::binomial(n, self.config.run.b) <= MAX_ENUMERATION
    }

    /// SHA-256 over the canonical JSON form of the parsed config and the bytes
    /// of every referenced data file. Defaults are filled in before hashing,
    /// so spelling out a default value does not change the hash.
    pub fn hash(&self) -> Result<String, Failure> {
        let canonical = serde_json::to_vec(&self.config).map_err(|e| Failure::Other(e.to_string()))?;
        let mut h = Sha256::new();
        h.update(&canonical);
        if let Some(path) = self.data_path() {
            hash_path(&mut h, &self.resolve(path))?;
        }
        Ok(hex::encode(h.finalize()))
    }

    fn data_path(&self) -> Option<&PathBuf> {
        match &self.config.problem {
            ProblemConfig::Pca { data, .. }
            | ProblemConfig::Karcher { data, .. }
            | ProblemConfig::LeastSquares { data, .. } => data.as_ref(),
        }
    }
}

/// Stream index reserved for drawing initial points from a run seed.
const INIT_STREAM: u64 = 0x1a17;

fn dims(n: Option<usize>, d: Option<usize>) -> Result<(usize, usize), Failure> {
    match (n, d) {
        (Some(n), Some(d)) if n >= 1 && d >= 1 => Ok((n, d)),
        (Some(_), Some(_)) => Err(field("problem", "n and d must be positive")),
        _ => Err(field("problem", "synthetic problems need both n and d (or a data path)")),
    }
}

fn read_data<T>(path: &Path, read: impl Fn(&Path) -> rshg::Result<T>) -> Result<T, Failure> {
    if !path.exists() {
        return Err(field("problem.data", format!("{} does not exist", path.display())));
    }
    read(path).map_err(|e| field("problem.data", e))
}

/// One component per row: the first `d` columns are `a_i`, the last is `c_i`.
fn least_squares_rows(rows: &DMatrix<f64>) -> rshg::Result<LeastSquares> {
    if rows.ncols() < 2 {
        return Err(rshg::Error::Parse("least squares rows need at least two columns".into()));
    }
    let d = rows.ncols() - 1;
    let a = (0..rows.nrows())
        .map(|i| DMatrix::from_fn(1, d, |_, j| rows[(i, j)]))
        .collect();
    let c = (0..rows.nrows()).map(|i| DMatrix::from_element(1, 1, rows[(i, d)])).collect();
    LeastSquares::new(a, c)
}

fn hash_path(h: &mut Sha256, path: &Path) -> Result<(), Failure> {
    let io = |e: std::io::Error| field("problem.data", format!("{}: {e}", path.display()));
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path).map_err(io)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
        entries.sort();
        for e in entries.iter().filter(|e| e.is_file()) {
            h.update(e.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default().as_bytes());
            h.update(fs::read(e).map_err(io)?);
        }
    } else if path.exists() {
        h.update(fs::read(path).map_err(io)?);
    }
    Ok(())
}
