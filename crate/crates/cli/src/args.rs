use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use fjcap::model::{CacheParams, ClusterConfig, ServiceParams};
use fjcap::scenario::presets::Preset;
use fjcap::scenario::{CacheSection, LoadSection, ScalingSection, ScenarioFile, SloSection, SloSpec};

/// Where the model parameters come from, plus per-run overrides.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct ModelArgs {
    /// TOML scenario file.
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    pub config: Option<PathBuf>,

    /// Built-in parameters: table4, table5-reference, table5-4xmem, paper-case-study.
    #[arg(long, value_name = "NAME")]
    pub preset: Option<String>,

    /// Number of index servers. Service demands are kept as given.
    #[arg(long)]
    pub p: Option<u32>,

    /// Parameter profile (memory configuration) to use.
    #[arg(long)]
    pub profile: Option<String>,

    /// Divide CPU times by this factor.
    #[arg(long)]
    pub cpu_speedup: Option<f64>,

    /// Divide disk times by this factor.
    #[arg(long)]
    pub disk_speedup: Option<f64>,

    /// Keep the broker's CPU time when applying --cpu-speedup.
    #[arg(long)]
    pub broker_cpu_fixed: bool,

    /// Cluster arrival rate, queries per second.
    #[arg(long)]
    pub lambda: Option<f64>,

    /// Mean response-time objective in milliseconds.
    #[arg(long)]
    pub slo_ms: Option<f64>,

    /// Total rate the deployment must carry, queries per second.
    #[arg(long)]
    pub total_rate: Option<f64>,

    /// Fraction of queries answered from the broker's result cache.
    #[arg(long, requires = "cache_ms")]
    pub cache_hit: Option<f64>,

    /// Broker time for a result-cache hit, in milliseconds.
    #[arg(long, requires = "cache_hit")]
    pub cache_ms: Option<f64>,

    /// Ignore any result cache from the preset or config.
    #[arg(long)]
    pub no_cache: bool,
}

/// A scenario with every override applied and checked.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub file: ScenarioFile<f64>,
    pub cluster: ClusterConfig,
    pub params: ServiceParams<f64>,
    pub slo: Option<SloSpec<f64>>,
    pub cache: Option<CacheParams<f64>>,
    pub lambda: Option<f64>,
    pub preset: Option<Preset>,
    pub source: Option<PathBuf>,
}

impl Resolved {
    pub fn lambda(&self) -> Result<f64> {
        self.lambda.context("no arrival rate: pass --lambda or add a [load] section")
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "scenario": self.file,
            "params_s": {
                "s_broker": self.params.s_broker,
                "s_hit": self.params.s_hit,
                "s_miss": self.params.s_miss,
                "s_disk": self.params.s_disk,
                "hit": self.params.hit,
            },
        })
    }
}

impl ModelArgs {
    pub fn resolve(&self) -> Result<Resolved> {
        let (mut file, preset, source) = match (&self.config, &self.preset) {
            (Some(path), _) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let file = ScenarioFile::<f64>::from_toml_str(&text).with_context(|| format!("in {}", path.display()))?;
                (file, None, Some(path.clone()))
            }
            (None, Some(name)) => {
                let preset: Preset = name.parse().map_err(anyhow::Error::msg)?;
                (preset.scenario(), Some(preset), None)
            }
            (None, None) => bail!("no parameters: pass --config PATH or --preset NAME"),
        };

        if let Some(p) = self.p {
            file.cluster.p = p;
            file.cluster.n = file.cluster.b.map(|b| b * u64::from(p));
        }
        if self.profile.is_some() || self.cpu_speedup.is_some() || self.disk_speedup.is_some() || self.broker_cpu_fixed {
            let mut scaling = match file.scaling.take() {
                Some(s) => s,
                None => ScalingSection::profile(&file.scaling_spec()?.profile),
            };
            if let Some(profile) = &self.profile {
                scaling.profile = profile.clone();
            }
            if let Some(c) = self.cpu_speedup {
                scaling.cpu_speedup = c;
            }
            if let Some(d) = self.disk_speedup {
                scaling.disk_speedup = d;
            }
            scaling.broker_cpu_fixed |= self.broker_cpu_fixed;
            file.scaling = Some(scaling);
        }
        if self.slo_ms.is_some() || self.total_rate.is_some() {
            let old = file.slo;
            let max_ms = self.slo_ms.or(old.map(|s| s.max_ms)).context("--total-rate needs an objective: pass --slo-ms")?;
            let total_rate =
                self.total_rate.or(old.map(|s| s.total_rate)).context("--slo-ms needs the rate to serve: pass --total-rate")?;
            file.slo = Some(SloSection { max_ms, total_rate });
        }
        if let (Some(hit_result), Some(s_ms)) = (self.cache_hit, self.cache_ms) {
            file.cache = Some(CacheSection { hit_result, s_ms });
        }
        if self.no_cache {
            file.cache = None;
        }
        if let Some(lambda) = self.lambda {
            file.load = Some(LoadSection { lambda });
        }
        file.validate()?;

        Ok(Resolved {
            cluster: file.cluster,
            params: file.resolved_params()?,
            slo: file.slo_spec()?,
            cache: file.cache_params()?,
            lambda: file.load.map(|l| l.lambda),
            preset,
            source,
            file,
        })
    }

    pub fn inputs(&self) -> Vec<String> {
        self.config.iter().map(|p| p.display().to_string()).collect()
    }
}
