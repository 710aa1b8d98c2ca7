//! Experiment configuration: TOML ingestion, validation, and resolution
//! into the library's kernel / drift / initial-law objects.

use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use chaoslab::kernels::{
    make_axis_kernel, make_box_mollifier, make_mollified_kernel, make_power_kernel,
    make_rank_kernel, make_smooth_sin_kernel, make_zero_kernel, DriftEnvelope, InteractionKernel,
    MollifierFamily,
};
use chaoslab::particles::Mu0Spec;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("missing required key `{0}` for experiment `{1}`")]
    MissingKey(&'static str, String),
    #[error("invalid value for `{key}`: {reason}")]
    BadValue { key: &'static str, reason: String },
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
}

pub const EXPERIMENTS: &[&str] = &[
    "strong_rate",
    "rank_burgers",
    "moderate",
    "lemma55",
    "entropy_suite",
    "mixedlp_suite",
    "zvonkin",
    "picard",
    "tv_marginal",
];

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct KernelCfg {
    pub kind: String,
    pub alpha: Option<f64>,
    pub alphas: Option<Vec<f64>>,
    pub eps: Option<f64>,
    pub sup_norm: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DriftCfg {
    pub kind: String,
    pub scale: Option<f64>,
    pub amp: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Mu0Cfg {
    pub kind: String,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimCfg {
    pub t_end: f64,
    pub dt: f64,
    pub sigma: f64,
    pub replicas: usize,
    pub pair_budget: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepCfg {
    pub ns: Vec<usize>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PdeCfg {
    pub domain: Option<[f64; 2]>,
    pub nx: Option<usize>,
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ParamsCfg {
    pub lambda: Option<f64>,
    pub lambdas: Option<Vec<f64>>,
    pub mc_reps: Option<usize>,
    pub trials: Option<usize>,
    pub bins: Option<usize>,
    pub n: Option<usize>,
    pub n_iters: Option<usize>,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub experiment: String,
    pub seed: Option<u64>,
    pub output_dir: Option<String>,
    pub kernel: Option<KernelCfg>,
    pub drift: Option<DriftCfg>,
    pub mu0: Option<Mu0Cfg>,
    pub sim: Option<SimCfg>,
    pub sweep: Option<SweepCfg>,
    pub pde: Option<PdeCfg>,
    pub params: Option<ParamsCfg>,
}

/// Validated configuration ready to execute.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub seed: u64,
    pub output_dir: Option<String>,
    pub raw: RawConfig,
    /// Raw config text, hashed into the manifest.
    pub source: String,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str(&text)
    }

    pub fn from_str(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        if !EXPERIMENTS.contains(&raw.experiment.as_str()) {
            return Err(ConfigError::UnknownExperiment(raw.experiment.clone()));
        }
        let cfg = Self {
            experiment: raw.experiment.clone(),
            seed: raw.seed.unwrap_or(0),
            output_dir: raw.output_dir.clone(),
            raw,
            source: text.to_string(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn need<'a, T>(&self, v: &'a Option<T>, key: &'static str) -> Result<&'a T, ConfigError> {
        v.as_ref()
            .ok_or_else(|| ConfigError::MissingKey(key, self.experiment.clone()))
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let needs_sim = matches!(
            self.experiment.as_str(),
            "strong_rate" | "rank_burgers" | "moderate" | "tv_marginal"
        );
        if needs_sim {
            let sim = self.need(&self.raw.sim, "sim")?;
            if sim.replicas == 0 {
                return Err(ConfigError::BadValue {
                    key: "sim.replicas",
                    reason: "must be >= 1".into(),
                });
            }
            if !(sim.dt > 0.0) || sim.t_end < sim.dt {
                return Err(ConfigError::BadValue {
                    key: "sim.dt",
                    reason: format!("need 0 < dt <= t_end, got dt={}, t_end={}", sim.dt, sim.t_end),
                });
            }
            self.need(&self.raw.mu0, "mu0")?;
            let sweep = self.need(&self.raw.sweep, "sweep")?;
            if sweep.ns.is_empty() {
                return Err(ConfigError::BadValue {
                    key: "sweep.ns",
                    reason: "must be nonempty".into(),
                });
            }
            // sweep experiments resolve their specs eagerly so bad tables
            // fail at validation time; `moderate` builds its kernel from the
            // mollifier schedule instead of the config
            if self.experiment != "moderate" {
                self.need(&self.raw.kernel, "kernel")?;
                self.kernel()?;
            }
            self.mu0()?;
            self.drift()?;
        }
        if self.experiment == "lemma55" {
            self.need(&self.raw.kernel, "kernel")?;
            self.need(&self.raw.mu0, "mu0")?;
            self.kernel()?;
            self.mu0()?;
        }
        Ok(())
    }

    pub fn kernel(&self) -> Result<InteractionKernel, ConfigError> {
        let k = self.need(&self.raw.kernel, "kernel")?;
        let bad = |reason: String| ConfigError::BadValue {
            key: "kernel",
            reason,
        };
        match k.kind.as_str() {
            "rank" => Ok(make_rank_kernel()),
            "smooth_sin" => Ok(make_smooth_sin_kernel()),
            "zero" => Ok(make_zero_kernel(1)),
            "power" => {
                let alpha = k.alpha.ok_or_else(|| bad("power kernel needs `alpha`".into()))?;
                make_power_kernel(2, alpha, Arc::new(|_, _, _| 1.0))
                    .map_err(|e| bad(e.to_string()))
            }
            "axis" => {
                let alphas = k
                    .alphas
                    .clone()
                    .ok_or_else(|| bad("axis kernel needs `alphas`".into()))?;
                make_axis_kernel(alphas, Arc::new(|_, _, _| 1.0)).map_err(|e| bad(e.to_string()))
            }
            "mollified" => {
                let eps = k.eps.ok_or_else(|| bad("mollified kernel needs `eps`".into()))?;
                Ok(make_mollified_kernel(make_box_mollifier(), eps))
            }
            other => Err(bad(format!("unknown kernel kind `{other}`"))),
        }
    }

    pub fn mollifier(&self) -> MollifierFamily {
        make_box_mollifier()
    }

    pub fn drift(&self) -> Result<DriftEnvelope, ConfigError> {
        let d = match &self.raw.drift {
            Some(d) => d,
            None => return Ok(DriftEnvelope::identity()),
        };
        match d.kind.as_str() {
            "zero" => Ok(DriftEnvelope::zero()),
            "identity" => Ok(DriftEnvelope::identity()),
            "linear" => Ok(DriftEnvelope::linear(d.scale.unwrap_or(1.0))),
            "tanh_scale" => Ok(DriftEnvelope::tanh_scale(d.amp.unwrap_or(1.0))),
            other => Err(ConfigError::BadValue {
                key: "drift",
                reason: format!("unknown drift kind `{other}`"),
            }),
        }
    }

    pub fn mu0(&self) -> Result<Mu0Spec, ConfigError> {
        let m = self.need(&self.raw.mu0, "mu0")?;
        match m.kind.as_str() {
            "gaussian" => Ok(Mu0Spec::Gaussian {
                mean: m.mean.unwrap_or(0.0),
                std: m.std.unwrap_or(1.0),
            }),
            "uniform" => Ok(Mu0Spec::Uniform {
                a: m.a.unwrap_or(0.0),
                b: m.b.unwrap_or(1.0),
            }),
            "bimodal" => Ok(Mu0Spec::Bimodal {
                m1: m.mean.unwrap_or(-1.0),
                s1: m.std.unwrap_or(0.5),
                m2: -m.mean.unwrap_or(-1.0),
                s2: m.std.unwrap_or(0.5),
                w: 0.5,
            }),
            other => Err(ConfigError::BadValue {
                key: "mu0",
                reason: format!("unknown initial law `{other}`"),
            }),
        }
    }

    pub fn sim(&self) -> Result<&SimCfg, ConfigError> {
        self.need(&self.raw.sim, "sim")
    }

    pub fn sweep_ns(&self) -> Result<&[usize], ConfigError> {
        Ok(&self.need(&self.raw.sweep, "sweep")?.ns)
    }

    pub fn params(&self) -> ParamsCfg {
        self.raw.params.clone().unwrap_or_default()
    }

    pub fn pde(&self) -> PdeCfg {
        self.raw.pde.clone().unwrap_or_default()
    }
}
