//! Scenario files: which jobs to run, under which controllers, with which
//! overrides.
//!
//! ```json
//! {
//!   "catalog_path": "catalog.json",
//!   "controllers": ["dnnscaler", "clipper"],
//!   "seed": 42,
//!   "sigma": 0.0,
//!   "jobs": [
//!     {"job_id": 1, "dnn_id": "inc-v1@imagenet", "slo": 48, "duration": 300}
//!   ]
//! }
//! ```
//!
//! Relative paths resolve against the scenario file's directory. A single
//! `"controller"` may be given instead of `"controllers"`; a static knob is
//! written `{"static": {"kind": "batching", "value": 4}}`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{RunConfig, RunEnv};
use crate::catalog::Catalog;
use crate::domain::{JobSpec, Knob};
use crate::error::{Error, Result};
use crate::matcomp::LatencyCatalog;
use crate::perfmodel::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    #[serde(rename = "dnnscaler")]
    DnnScaler,
    Clipper,
    #[serde(rename = "static")]
    StaticKnob(Knob),
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControllerKind::DnnScaler => f.write_str("dnnscaler"),
            ControllerKind::Clipper => f.write_str("clipper"),
            ControllerKind::StaticKnob(k) => match k.kind {
                crate::domain::KnobKind::Batching => write!(f, "static-bs{}", k.value),
                crate::domain::KnobKind::MultiTenancy => write!(f, "static-mtl{}", k.value),
            },
        }
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    /// Accepts `dnnscaler`, `clipper`, `static-bsN` and `static-mtlN`.
    fn from_str(s: &str) -> Result<Self> {
        let parse_value = |v: &str| {
            v.parse::<u32>()
                .map_err(|_| Error::Config(format!("bad static knob value in '{s}'")))
        };
        match s {
            "dnnscaler" => Ok(ControllerKind::DnnScaler),
            "clipper" => Ok(ControllerKind::Clipper),
            _ => {
                if let Some(v) = s.strip_prefix("static-bs") {
                    Ok(ControllerKind::StaticKnob(Knob::batching(parse_value(v)?)))
                } else if let Some(v) = s.strip_prefix("static-mtl") {
                    Ok(ControllerKind::StaticKnob(Knob::multi_tenancy(
                        parse_value(v)?,
                    )))
                } else {
                    Err(Error::Config(format!(
                        "unknown controller '{s}' (expected dnnscaler, clipper, static-bsN or static-mtlN)"
                    )))
                }
            }
        }
    }
}

/// On-disk scenario, before catalogs are loaded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub catalog_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_catalog_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<ControllerKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controllers: Option<Vec<ControllerKind>>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs_max_bs: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_mtl: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelParams>,
    pub jobs: Vec<JobSpec>,
}

pub const DEFAULT_SEED: u64 = 42;

fn default_seed() -> u64 {
    DEFAULT_SEED
}

/// A loaded, validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub jobs: Vec<JobSpec>,
    pub controllers: Vec<ControllerKind>,
    pub seed: u64,
    pub catalog: Catalog,
    pub latency_catalog: Option<LatencyCatalog>,
    pub config: RunConfig,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let file: ScenarioFile = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_file(file, base)
    }

    pub fn from_file(file: ScenarioFile, base_dir: &Path) -> Result<Self> {
        let resolve = |p: &Path| {
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base_dir.join(p)
            }
        };
        let catalog = Catalog::load(&resolve(&file.catalog_path))?;
        let latency_catalog = file
            .latency_catalog_path
            .as_deref()
            .map(|p| LatencyCatalog::load(&resolve(p)))
            .transpose()?;
        let controllers = match (file.controller, file.controllers) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "give either 'controller' or 'controllers', not both".into(),
                ))
            }
            (Some(c), None) => vec![c],
            (None, Some(cs)) => cs,
            (None, None) => vec![ControllerKind::DnnScaler],
        };

        let mut config = RunConfig::default();
        if let Some(v) = file.alpha {
            config.alpha = v;
        }
        if let Some(v) = file.m {
            config.profiler.m = v;
        }
        if let Some(v) = file.n {
            config.profiler.n = v;
        }
        if let Some(v) = file.abs_max_bs {
            config.abs_max_bs = v;
        }
        if let Some(v) = file.max_mtl {
            config.max_mtl = v;
        }
        if let Some(v) = file.window {
            config.window = v;
        }
        if let Some(v) = file.model {
            config.model = v;
        }
        config.sigma = file.sigma;

        let s = Scenario {
            jobs: file.jobs,
            controllers,
            seed: file.seed,
            catalog,
            latency_catalog,
            config,
        };
        s.validate()?;
        Ok(s)
    }

    /// Checks everything that can be checked without running a job.
    pub fn validate(&self) -> Result<()> {
        if self.jobs.is_empty() {
            return Err(Error::EmptyScenario);
        }
        if self.controllers.is_empty() {
            return Err(Error::Config("controllers list is empty".into()));
        }
        self.config.validate()?;
        let mut seen = std::collections::BTreeSet::new();
        for job in &self.jobs {
            if !seen.insert(job.job_id) {
                return Err(Error::InvalidJob {
                    job_id: job.job_id,
                    reason: "duplicate job_id".into(),
                });
            }
            self.catalog.get(&job.dnn_id)?;
        }
        Ok(())
    }

    pub fn env(&self) -> Result<RunEnv> {
        RunEnv::new(
            self.catalog.clone(),
            self.config.clone(),
            self.latency_catalog.as_ref(),
        )
    }
}
