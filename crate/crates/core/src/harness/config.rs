//! Experiment configuration: TOML with dotted sections, plus `key=value`
//! overrides from the command line.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::{DEFAULT_C, DEFAULT_DELTA};
use crate::datagen::{InputDist, TaskSequenceSpec};
use crate::error::{bail, Error, Result};
use crate::learner::{BetaSchedule, DistillConfig, Regularizer, SchemeKind, SolverOptions, WeightScheme};
use crate::memory::MemoryPolicy;
use crate::metrics::{DEFAULT_N_EVAL, DEFAULT_N_MC, DEFAULT_N_THETA};
use crate::models::{Family, ParameterSpace, Predictor};
use crate::rng::{derive, stream, tag};
use crate::transforms::{DependencyChain, TransformSpec, Transformation};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Paradigm {
    #[default]
    Replay,
    Distill,
    DepWeights,
}

impl Paradigm {
    pub fn name(self) -> &'static str {
        match self {
            Self::Replay => "replay",
            Self::Distill => "distill",
            Self::DepWeights => "dep-weights",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecConfig {
    pub d_x: usize,
    pub d_y: usize,
    pub tasks: usize,
    pub m: usize,
    /// Defaults to `sqrt(d_x)` (unit per-coordinate variance).
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub nu: f64,
    #[serde(default)]
    pub input_dist: InputDist,
    #[serde(default)]
    pub noise_dist: InputDist,
    /// Radius of the parameter ball.
    #[serde(default = "default_radius")]
    pub radius: f64,
    /// `|theta*|`; `f*` is drawn uniformly on this sphere.
    #[serde(default = "default_f_star_norm")]
    pub f_star_norm: f64,
    /// One-hidden-layer tanh network when set; linear otherwise.
    #[serde(default)]
    pub hidden: Option<usize>,
}

fn default_radius() -> f64 {
    3.0
}

fn default_f_star_norm() -> f64 {
    1.5
}

/// How the dependency chain is built. Random pieces draw from the truth seed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ChainConfig {
    Identity,
    /// Independent Haar rotations for `t >= 2`.
    #[default]
    Rotations,
    /// `g_t = s * identity` for `t >= 2`.
    Scaling { s: f64 },
    BlockDrift { block: usize, decay: f64 },
    /// Explicit maps for `t >= 2`; cycled when shorter than `T - 1`.
    Explicit { maps: Vec<TransformSpec> },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MemoryConfig {
    #[default]
    Full,
    /// Past-task budgets, either absolute or as fractions of `m`
    /// (a single entry applies to every past task).
    Random {
        #[serde(default)]
        budgets: Option<Vec<usize>>,
        #[serde(default)]
        fractions: Option<Vec<f64>>,
    },
    Reservoir { capacity: usize },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    #[default]
    Uniform,
    /// `w_t = T n_t / sum n_s`.
    Proportional,
    Explicit,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayConfig {
    #[serde(default)]
    pub weights: WeightMode,
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    /// Ridge coefficient.
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub regularizer: Regularizer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepWeightsConfig {
    #[serde(default = "default_scheme")]
    pub scheme: SchemeKind,
    /// Defaults to `1 + 1/(T min_t n_t)`.
    #[serde(default)]
    pub w_cap: Option<f64>,
}

fn default_scheme() -> SchemeKind {
    SchemeKind::LossProportional
}

impl Default for DepWeightsConfig {
    fn default() -> Self {
        Self { scheme: default_scheme(), w_cap: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    TotalSamples,
    ScaleS,
    #[serde(rename = "T")]
    Tasks,
    Nu,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Self::TotalSamples => "total_samples",
            Self::ScaleS => "scale_s",
            Self::Tasks => "T",
            Self::Nu => "nu",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub axis: Option<Axis>,
    #[serde(default)]
    pub grid: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub n_eval: usize,
    /// Evaluate the explicit bound for every run.
    pub bound: bool,
    pub delta: f64,
    pub c: f64,
    pub n_mc: usize,
    pub n_theta: usize,
    /// Probes for `C_max`.
    pub c_max_probes: usize,
    /// Monte-Carlo discrepancy when no closed form applies.
    pub discrepancy_mc: bool,
    /// Fraction of failed fits above which the sweep reports failure.
    pub failure_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_eval: DEFAULT_N_EVAL,
            bound: false,
            delta: DEFAULT_DELTA,
            c: DEFAULT_C,
            n_mc: DEFAULT_N_MC,
            n_theta: DEFAULT_N_THETA,
            c_max_probes: 256,
            discrepancy_mc: false,
            failure_threshold: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub init_scale: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let o = SolverOptions::default();
        Self { tol: o.tol, max_iter: o.max_iter, init_scale: o.init_scale }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "one")]
    pub trials: usize,
    #[serde(default)]
    pub paradigm: Paradigm,
    pub spec: SpecConfig,
    #[serde(default)]
    pub chain: ChainConfig,
    #[serde(default)]
    pub memory: MemoryConfig,
    #[serde(default)]
    pub replay: ReplayConfig,
    #[serde(default)]
    pub distill: DistillConfig,
    #[serde(default)]
    pub dep_weights: DepWeightsConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub solver: SolverConfig,
}

fn one() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_with(&text, overrides)
    }

    /// Parse, then apply `section.key=value` overrides (values in TOML syntax;
    /// bare words are taken as strings).
    pub fn from_toml_with(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: Self = doc.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Short SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        hex::encode(&digest[..6])
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            bail!(Config, "trials must be at least 1");
        }
        let g = &self.sweep.grid;
        match self.sweep.axis {
            Some(_) if g.is_empty() => bail!(Config, "sweep grid is empty"),
            None if !g.is_empty() => bail!(Config, "sweep grid given without an axis"),
            _ => {}
        }
        if g.windows(2).any(|w| !(w[1] > w[0])) {
            bail!(Config, "sweep grid must be strictly increasing");
        }
        if self.sweep.axis == Some(Axis::ScaleS) && !matches!(self.chain, ChainConfig::Scaling { .. }) {
            bail!(Config, "the scale_s axis needs a scaling chain");
        }
        if !(self.eval.failure_threshold >= 0.0 && self.eval.failure_threshold <= 1.0) {
            bail!(Config, "failure_threshold must lie in [0, 1]");
        }
        for k in 0..self.grid_len() {
            self.point(k)?.build_spec(0)?;
        }
        Ok(())
    }

    pub fn grid_len(&self) -> usize {
        self.sweep.grid.len().max(1)
    }

    pub fn axis_value(&self, k: usize) -> Option<f64> {
        self.sweep.axis.map(|_| self.sweep.grid[k])
    }

    /// The configuration at grid point `k`, with the axis applied.
    pub fn point(&self, k: usize) -> Result<Self> {
        let mut c = self.clone();
        let (Some(axis), Some(&v)) = (self.sweep.axis, self.sweep.grid.get(k)) else {
            return Ok(c);
        };
        match axis {
            Axis::Nu => c.spec.nu = v,
            Axis::Tasks => {
                if v < 1.0 || v.fract() != 0.0 {
                    bail!(Config, "T grid values must be positive integers, got {v}");
                }
                c.spec.tasks = v as usize;
            }
            Axis::ScaleS => c.chain = ChainConfig::Scaling { s: v },
            Axis::TotalSamples => c.spec.m = c.m_for_total(v)?,
        }
        Ok(c)
    }

    fn m_for_total(&self, total: f64) -> Result<usize> {
        let past = self.spec.tasks.saturating_sub(1) as f64;
        let m = match &self.memory {
            MemoryConfig::Full => total / self.spec.tasks as f64,
            MemoryConfig::Random { fractions: Some(f), budgets: None } => {
                let per = if f.len() == 1 { f[0] * past } else { f.iter().take(self.spec.tasks - 1).sum() };
                total / (1.0 + per)
            }
            MemoryConfig::Random { budgets: Some(b), fractions: None } => {
                let kept: usize = if b.len() == 1 { b[0] * (self.spec.tasks - 1) } else { b.iter().sum() };
                total - kept as f64
            }
            _ => bail!(Config, "the total_samples axis needs full memory or fixed random budgets"),
        };
        if !(m >= 1.0) {
            bail!(Config, "total {total} leaves no room for the current task");
        }
        Ok(m.round() as usize)
    }

    pub fn family(&self) -> Family {
        let (d_x, d_y) = (self.spec.d_x, self.spec.d_y);
        match self.spec.hidden {
            Some(hidden) => Family::Mlp { d_x, d_y, hidden },
            None => Family::Linear { d_x, d_y },
        }
    }

    pub fn truth_seed(&self) -> u64 {
        derive(self.seed, &[tag::TRUTH])
    }

    pub fn chain(&self) -> Result<DependencyChain> {
        let (d, t_n) = (self.spec.d_x, self.spec.tasks);
        let seed = self.truth_seed();
        match &self.chain {
            ChainConfig::Identity => Ok(DependencyChain::identity(d, t_n)),
            ChainConfig::Rotations => {
                let mut maps = vec![Transformation::Identity];
                for t in 2..=t_n {
                    maps.push(Transformation::random_rotation(d, &mut stream(seed, &[tag::CHAIN, t as u64]))?);
                }
                DependencyChain::new(d, maps)
            }
            ChainConfig::Scaling { s } => {
                let mut maps = vec![Transformation::Identity];
                for _ in 2..=t_n {
                    maps.push(Transformation::scaling(*s)?);
                }
                DependencyChain::new(d, maps)
            }
            ChainConfig::BlockDrift { block, decay } => DependencyChain::block_drift(d, t_n, *block, *decay),
            ChainConfig::Explicit { maps } => {
                if maps.is_empty() && t_n > 1 {
                    bail!(Config, "explicit chain has no maps");
                }
                let mut specs = vec![TransformSpec::Identity];
                specs.extend((0..t_n - 1).map(|k| maps[k % maps.len()].clone()));
                DependencyChain::from_specs(d, &specs)
            }
        }
    }

    /// Task spec whose data is drawn from `data_seed`.
    pub fn build_spec(&self, data_seed: u64) -> Result<TaskSequenceSpec> {
        let s = &self.spec;
        let family = self.family();
        let space = ParameterSpace::new(family.p(), s.radius)?;
        if s.f_star_norm > s.radius {
            bail!(Config, "f_star_norm {} exceeds the parameter radius {}", s.f_star_norm, s.radius);
        }
        let theta = space.sample_sphere(s.f_star_norm, &mut stream(self.truth_seed(), &[tag::TRUTH]));
        let spec = TaskSequenceSpec {
            d_x: s.d_x,
            d_y: s.d_y,
            tasks: s.tasks,
            m: s.m,
            sigma: s.sigma.unwrap_or((s.d_x as f64).sqrt()),
            nu: s.nu,
            input_dist: s.input_dist,
            noise_dist: s.noise_dist,
            chain: self.chain()?,
            f_star: Predictor::new(family, theta)?,
            space,
            seed: data_seed,
        };
        spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.policy(0)?.validate(s.m).map_err(|e| Error::Config(e.to_string()))?;
        Ok(spec)
    }

    pub fn policy(&self, seed: u64) -> Result<MemoryPolicy> {
        let m = self.spec.m;
        Ok(match &self.memory {
            MemoryConfig::Full => MemoryPolicy::full(),
            MemoryConfig::Random { budgets: Some(b), fractions: None } => MemoryPolicy::random(b.clone(), seed),
            MemoryConfig::Random { budgets: None, fractions: Some(f) } => {
                if f.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    bail!(Config, "memory fractions must lie in [0, 1]");
                }
                MemoryPolicy::random(f.iter().map(|v| (v * m as f64).round() as usize).collect(), seed)
            }
            MemoryConfig::Random { .. } => bail!(Config, "random memory needs exactly one of `budgets`, `fractions`"),
            MemoryConfig::Reservoir { capacity } => MemoryPolicy::reservoir(*capacity, seed),
        })
    }

    pub fn solver_options(&self, init_seed: u64) -> SolverOptions {
        SolverOptions {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            init_seed,
            init_scale: self.solver.init_scale,
        }
    }

    pub fn beta_schedule(&self) -> &BetaSchedule {
        &self.distill.beta
    }

    pub fn weight_scheme(&self, counts: &[usize]) -> WeightScheme {
        let n_min = counts.iter().copied().min().unwrap_or(1).max(1);
        let w_cap = self
            .dep_weights
            .w_cap
            .unwrap_or(1.0 + 1.0 / (counts.len() as f64 * n_min as f64));
        WeightScheme { kind: self.dep_weights.scheme, w_cap }
    }
}

fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<()> {
    let Some((key, raw)) = assignment.split_once('=') else {
        bail!(Config, "override `{assignment}` is not key=value");
    };
    let value = parse_value(raw.trim());
    let path: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = path.split_last().expect("split yields one item");
    let mut table = doc;
    for p in parents {
        let entry = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = match entry {
            toml::Value::Table(t) => t,
            _ => bail!(Config, "`{p}` in `{key}` is not a section"),
        };
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}
