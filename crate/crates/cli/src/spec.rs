//! Experiment spec files (TOML or JSON) and their validation.

use std::path::{Path, PathBuf};

use gem_core::layout::arc_layout;
use gem_core::MixtureConfig;
use serde::{Deserialize, Serialize};

use crate::AppError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Convergence,
    RegionProbe,
    Bounds,
    VerifyGs,
    DeviationScaling,
    RademacherScaling,
    Stochastic,
}

impl Kind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Kind::Convergence => "convergence",
            Kind::RegionProbe => "region-probe",
            Kind::Bounds => "bounds",
            Kind::VerifyGs => "verify-gs",
            Kind::DeviationScaling => "deviation-scaling",
            Kind::RademacherScaling => "rademacher-scaling",
            Kind::Stochastic => "stochastic",
        }
    }
}

/// Either a fully explicit model or a planar-arc generator.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(untagged)]
pub enum ModelSpec {
    Explicit {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        dim: usize,
    },
    Generator(GeneratorSpec),
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub m: usize,
    pub d: usize,
    /// R_max / R_min; defaults to 1.5.
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    /// Mixing weights; balanced when omitted.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    /// Minimum separation; superseded by an SNR grid where one applies.
    #[serde(default)]
    pub r_min: Option<f64>,
    /// Only "arc" is available.
    #[serde(default)]
    pub layout: Option<String>,
}

fn default_ratio() -> f64 {
    1.5
}

impl ModelSpec {
    pub fn is_generator(&self) -> bool {
        matches!(self, ModelSpec::Generator(_))
    }

    /// Instantiate the model. `r_min` overrides the generator's separation
    /// (and is rejected for explicit models, whose geometry is fixed).
    pub fn build(&self, r_min: Option<f64>) -> Result<MixtureConfig, AppError> {
        match self {
            ModelSpec::Explicit { weights, means, dim } => {
                if r_min.is_some() {
                    return Err(AppError::Spec(
                        "an explicit model cannot be rescaled to an SNR grid; use a generator"
                            .into(),
                    ));
                }
                if means.iter().any(|m| m.len() != *dim) {
                    return Err(AppError::Spec(format!(
                        "declared dim {dim} does not match the means"
                    )));
                }
                MixtureConfig::from_rows(weights.clone(), means)
                    .map_err(|e| AppError::Spec(e.to_string()))
            }
            ModelSpec::Generator(g) => {
                if let Some(layout) = &g.layout {
                    if layout != "arc" {
                        return Err(AppError::Spec(format!("unknown layout {layout:?}")));
                    }
                }
                let weights = g.weights.clone().unwrap_or_else(|| vec![1.0 / g.m as f64; g.m]);
                let r = r_min.or(g.r_min).ok_or_else(|| {
                    AppError::Spec("generator needs r_min (or an snr_grid)".into())
                })?;
                arc_layout(g.m, g.d, r, g.ratio, &weights)
                    .map_err(|e| AppError::Spec(e.to_string()))
            }
        }
    }

    /// Generator with its dimension replaced, for d-sweeps.
    pub fn with_dim(&self, d: usize) -> Result<ModelSpec, AppError> {
        match self {
            ModelSpec::Generator(g) => {
                let mut g = g.clone();
                g.d = d;
                Ok(ModelSpec::Generator(g))
            }
            ModelSpec::Explicit { .. } => Err(AppError::Spec(
                "scaling studies need a generator model to sweep the dimension".into(),
            )),
        }
    }
}

/// One experiment. Unknown keys are rejected; optional knobs apply only to
/// the experiment kinds that read them.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: Kind,
    #[serde(default)]
    pub name: Option<String>,
    pub model: ModelSpec,
    /// Independent trials (or seeds) per grid point.
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Sample size per trial.
    #[serde(default = "default_n")]
    pub n: usize,
    /// Minimum-separation grid for convergence runs.
    #[serde(default)]
    pub snr_grid: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,

    // Optional knobs.
    #[serde(default)]
    pub max_iters: Option<usize>,
    #[serde(default)]
    pub tol: Option<f64>,
    /// Region-probe offsets as fractions of R_min.
    #[serde(default)]
    pub eps_grid: Option<Vec<f64>>,
    /// Monte-Carlo sample size for population gradients and verification.
    #[serde(default)]
    pub mc_samples: Option<usize>,
    /// Region radius override (defaults to the solved certificate).
    #[serde(default)]
    pub region_radius: Option<f64>,
    /// Failure probability for the restart count.
    #[serde(default)]
    pub delta: Option<f64>,
    // Scaling-study knobs.
    #[serde(default)]
    pub n_grid: Option<Vec<usize>>,
    #[serde(default)]
    pub d_grid: Option<Vec<usize>>,
    #[serde(default)]
    pub multistarts: Option<usize>,
    #[serde(default)]
    pub replications: Option<usize>,
    #[serde(default)]
    pub max_ascent_iters: Option<usize>,
    #[serde(default)]
    pub mega_samples: Option<usize>,
    #[serde(default)]
    pub region_radius_frac: Option<f64>,
    // Stochastic knobs.
    #[serde(default)]
    pub batch: Option<usize>,
    #[serde(default)]
    pub projection_radius: Option<f64>,
    #[serde(default)]
    pub schedule_c: Option<f64>,
}

fn default_trials() -> usize {
    10
}

fn default_n() -> usize {
    12_000
}

impl ExperimentSpec {
    pub fn label(&self, index: usize) -> String {
        self.name.clone().unwrap_or_else(|| format!("{:02}_{}", index, self.kind.as_str()))
    }
}

/// A file holding several experiments.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteSpec {
    pub experiments: Vec<ExperimentSpec>,
}

fn parse<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, AppError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AppError::Spec(format!("cannot read {}: {e}", path.display())))?;
    let is_json = path.extension().is_some_and(|e| e == "json");
    if is_json {
        serde_json::from_str(&text)
            .map_err(|e| AppError::Spec(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| AppError::Spec(format!("{}: {e}", path.display())))
    }
}

pub fn load_experiment(path: &Path) -> Result<ExperimentSpec, AppError> {
    parse(path)
}

pub fn load_suite(path: &Path) -> Result<SuiteSpec, AppError> {
    parse(path)
}
