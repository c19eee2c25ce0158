use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::filters::{DegeneracyPolicy, Resampling};

fn sqrt_half() -> f64 {
    0.5f64.sqrt()
}

/// State model of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ModelConfig {
    Lorenz96 {
        d_x: usize,
        #[serde(rename = "F", default = "default_forcing")]
        forcing: f64,
        #[serde(default = "sqrt_half")]
        sigma_x: f64,
    },
    Ou {
        d_x: usize,
        #[serde(default = "one")]
        theta: f64,
        #[serde(default = "one")]
        sigma: f64,
    },
    /// Finite-state fixture; only used by the verification suites.
    Discrete {
        states: usize,
        gamma: f64,
    },
}

fn default_forcing() -> f64 {
    8.0
}

fn one() -> f64 {
    1.0
}

impl ModelConfig {
    pub fn state_dim(&self) -> usize {
        match self {
            ModelConfig::Lorenz96 { d_x, .. } | ModelConfig::Ou { d_x, .. } => *d_x,
            ModelConfig::Discrete { states, .. } => *states,
        }
    }

    /// Scale of the state noise, used for the prior and `C_0`.
    pub fn noise_scale(&self) -> f64 {
        match self {
            ModelConfig::Lorenz96 { sigma_x, .. } => *sigma_x,
            ModelConfig::Ou { sigma, .. } => *sigma,
            ModelConfig::Discrete { .. } => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationConfig {
    /// Defaults to `d_x / 2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_y: Option<usize>,
    #[serde(default = "sqrt_half")]
    pub sigma_y: f64,
    #[serde(default = "default_sigma_v")]
    pub sigma_v: f64,
    #[serde(default = "default_h_o")]
    pub h_o: f64,
}

fn default_sigma_v() -> f64 {
    5e-4
}

fn default_h_o() -> f64 {
    0.1
}

impl Default for ObservationConfig {
    fn default() -> Self {
        Self { d_y: None, sigma_y: sqrt_half(), sigma_v: default_sigma_v(), h_o: default_h_o() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationConfig {
    #[serde(default = "default_h")]
    pub h: f64,
}

fn default_h() -> f64 {
    1e-3
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self { h: default_h() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Bootstrap,
    Auxiliary,
    ConstrainedRejection,
    ConstrainedBarrier,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Bootstrap,
        Algorithm::Auxiliary,
        Algorithm::ConstrainedRejection,
        Algorithm::ConstrainedBarrier,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Bootstrap => "bootstrap",
            Algorithm::Auxiliary => "auxiliary",
            Algorithm::ConstrainedRejection => "constrained-rejection",
            Algorithm::ConstrainedBarrier => "constrained-barrier",
        }
    }

    pub fn is_constrained(self) -> bool {
        matches!(self, Algorithm::ConstrainedRejection | Algorithm::ConstrainedBarrier)
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintConfig {
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Side of the `C_0` hypercube; defaults to `3 σ_x`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c0_side: Option<f64>,
}

fn default_threshold() -> f64 {
    -8.0
}

impl Default for ConstraintConfig {
    fn default() -> Self {
        Self { threshold: default_threshold(), c0_side: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierSection {
    /// Defaults to `2 / h_o`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "one")]
    pub q: f64,
}

fn default_delta() -> f64 {
    2.0
}

impl Default for BarrierSection {
    fn default() -> Self {
        Self { beta: None, delta: default_delta(), q: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
    #[serde(rename = "N", default = "default_particles")]
    pub particles: usize,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: usize,
    #[serde(default)]
    pub resampling: Resampling,
    #[serde(default)]
    pub constraint: ConstraintConfig,
    #[serde(default)]
    pub barrier: BarrierSection,
}

fn default_algorithm() -> Algorithm {
    Algorithm::ConstrainedBarrier
}

fn default_particles() -> usize {
    100
}

fn default_max_attempts() -> usize {
    crate::ssm::DEFAULT_MAX_ATTEMPTS
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            algorithm: default_algorithm(),
            particles: default_particles(),
            max_attempts: default_max_attempts(),
            resampling: Resampling::default(),
            constraint: ConstraintConfig::default(),
            barrier: BarrierSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parallelism {
    #[default]
    Sequential,
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(rename = "M", default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one_usize")]
    pub repetitions: usize,
    #[serde(default)]
    pub parallelism: Parallelism,
    /// Time units the true initial state is integrated before `t_0`.
    #[serde(default = "default_spinup")]
    pub spinup: f64,
}

fn default_steps() -> usize {
    200
}

fn one_usize() -> usize {
    1
}

fn default_spinup() -> f64 {
    5.0
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            steps: default_steps(),
            seed: 0,
            repetitions: 1,
            parallelism: Parallelism::default(),
            spinup: default_spinup(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    #[serde(default = "default_dims")]
    pub dims: Vec<usize>,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
}

fn default_dims() -> Vec<usize> {
    vec![50, 100, 200, 400]
}

fn default_algorithms() -> Vec<Algorithm> {
    vec![Algorithm::Bootstrap, Algorithm::Auxiliary, Algorithm::ConstrainedBarrier]
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self { dims: default_dims(), algorithms: default_algorithms() }
    }
}

/// Complete experiment description, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub observation: ObservationConfig,
    #[serde(default)]
    pub integration: IntegrationConfig,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub benchmark: BenchmarkConfig,
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::InvalidConfig(format!("{field}: {msg}"))
}

impl ExperimentConfig {
    /// Default settings for the Lorenz-96 experiment in dimension `d_x`.
    pub fn lorenz96(d_x: usize) -> Self {
        Self {
            model: ModelConfig::Lorenz96 { d_x, forcing: 8.0, sigma_x: sqrt_half() },
            observation: ObservationConfig::default(),
            integration: IntegrationConfig::default(),
            filter: FilterConfig::default(),
            run: RunConfig::default(),
            benchmark: BenchmarkConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::InvalidConfig(m) => Error::InvalidConfig(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(field, format!("must be > 0, got {v}")))
            }
        };
        match &self.model {
            ModelConfig::Lorenz96 { d_x, forcing, sigma_x } => {
                if *d_x < 4 {
                    return Err(invalid("model.d_x", format!("lorenz96 needs d_x >= 4, got {d_x}")));
                }
                if !forcing.is_finite() {
                    return Err(invalid("model.F", "must be finite"));
                }
                positive("model.sigma_x", *sigma_x)?;
            }
            ModelConfig::Ou { d_x, theta, sigma } => {
                if *d_x == 0 {
                    return Err(invalid("model.d_x", "must be >= 1"));
                }
                positive("model.theta", *theta)?;
                positive("model.sigma", *sigma)?;
            }
            ModelConfig::Discrete { states, gamma } => {
                if *states < 2 {
                    return Err(invalid("model.states", "must be >= 2"));
                }
                if !(*gamma > 0.0 && *gamma <= 1.0) {
                    return Err(invalid("model.gamma", format!("must lie in (0, 1], got {gamma}")));
                }
            }
        }
        let d_x = self.model.state_dim();
        let d_y = self.d_y();
        if d_y == 0 || d_y > d_x {
            return Err(invalid("observation.d_y", format!("must lie in 1..={d_x}, got {d_y}")));
        }
        positive("observation.sigma_y", self.observation.sigma_y)?;
        if !(self.observation.sigma_v >= 0.0) {
            return Err(invalid("observation.sigma_v", "must be >= 0"));
        }
        positive("observation.h_o", self.observation.h_o)?;
        positive("integration.h", self.integration.h)?;
        crate::sde::substep_count(self.observation.h_o, self.integration.h)
            .map_err(|e| invalid("integration.h", e))?;
        if self.filter.particles == 0 {
            return Err(invalid("filter.N", "must be >= 1"));
        }
        if self.filter.max_attempts == 0 {
            return Err(invalid("filter.max_attempts", "must be >= 1"));
        }
        if !self.filter.constraint.threshold.is_finite() {
            return Err(invalid("filter.constraint.threshold", "must be finite"));
        }
        if let Some(side) = self.filter.constraint.c0_side {
            positive("filter.constraint.c0_side", side)?;
        }
        self.barrier().validate().map_err(|e| invalid("filter.barrier", e))?;
        if self.run.repetitions == 0 {
            return Err(invalid("run.repetitions", "must be >= 1"));
        }
        if !(self.run.spinup >= 0.0) {
            return Err(invalid("run.spinup", "must be >= 0"));
        }
        if self.benchmark.dims.iter().any(|d| *d < 4) {
            return Err(invalid("benchmark.dims", "every dimension must be >= 4"));
        }
        Ok(())
    }

    pub fn d_y(&self) -> usize {
        self.observation.d_y.unwrap_or(self.model.state_dim() / 2)
    }

    pub fn c0_side(&self) -> f64 {
        self.filter.constraint.c0_side.unwrap_or(3.0 * self.model.noise_scale())
    }

    pub fn barrier(&self) -> crate::ssm::BarrierConfig {
        let mut cfg = crate::ssm::BarrierConfig::default_for_interval(self.observation.h_o);
        if let Some(beta) = self.filter.barrier.beta {
            cfg.strength = beta;
        }
        cfg.margin = self.filter.barrier.delta;
        cfg.ramp_exponent = self.filter.barrier.q;
        cfg
    }

    pub fn parallel(&self) -> bool {
        self.run.parallelism == Parallelism::Auto
    }

    /// Canonical form: every optional default made explicit.
    pub fn canonical(&self) -> Self {
        let mut c = self.clone();
        c.observation.d_y = Some(self.d_y());
        c.filter.constraint.c0_side = Some(self.c0_side());
        c.filter.barrier.beta = Some(self.barrier().strength);
        c
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises to TOML")
    }

    /// SHA-256 of the canonical model, observation and integration sections,
    /// i.e. everything that determines the data. Two filter runs on the same
    /// data share this hash whatever their filter settings.
    pub fn config_hash(&self) -> String {
        #[derive(Serialize)]
        struct Shared<'a> {
            model: &'a ModelConfig,
            observation: &'a ObservationConfig,
            integration: &'a IntegrationConfig,
            steps: usize,
            spinup: f64,
        }
        let c = self.canonical();
        let shared = Shared {
            model: &c.model,
            observation: &c.observation,
            integration: &c.integration,
            steps: c.run.steps,
            spinup: c.run.spinup,
        };
        let text = toml::to_string(&shared).expect("shared sections serialise");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn degeneracy_policy(paper_mode: bool) -> DegeneracyPolicy {
        if paper_mode {
            DegeneracyPolicy::UniformFallback
        } else {
            DegeneracyPolicy::Fail
        }
    }
}
