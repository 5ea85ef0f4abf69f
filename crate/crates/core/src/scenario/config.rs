//! TOML scenario files.
//!
//! ```toml
//! [cluster]
//! p = 100
//! b = 10000000
//!
//! [params.reference]
//! s_broker_ms = 3.45
//! s_hit_ms = 28.23
//! s_miss_ms = 35.31
//! s_disk_ms = 66.03
//! hit = 0.02
//!
//! [scaling]            # optional
//! profile = "reference"
//! cpu_speedup = 4.0
//! disk_speedup = 4.0
//! broker_cpu_fixed = false
//!
//! [slo]                # optional
//! max_ms = 300.0
//! total_rate = 200.0
//!
//! [cache]              # optional
//! hit_result = 0.5
//! s_ms = 0.069
//!
//! [load]               # optional
//! lambda = 4.0
//! ```

use serde::{Deserialize, Serialize};

use super::{apply_scaling, ParamTable, ScalingSpec, ScenarioError, SloSpec};
use crate::model::{CacheParams, ClusterConfig, ServiceParams};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(serialize = "T: Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct ScalingSection<T> {
    pub profile: String,
    #[serde(default = "one")]
    pub cpu_speedup: T,
    #[serde(default = "one")]
    pub disk_speedup: T,
    #[serde(default)]
    pub broker_cpu_fixed: bool,
}

fn one<T: Real>() -> T {
    T::one()
}

impl<T: Real> ScalingSection<T> {
    pub fn profile(name: &str) -> Self {
        ScalingSection { profile: name.to_owned(), cpu_speedup: T::one(), disk_speedup: T::one(), broker_cpu_fixed: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SloSection<T> {
    pub max_ms: T,
    pub total_rate: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheSection<T> {
    pub hit_result: T,
    pub s_ms: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSection<T> {
    pub lambda: T,
}

/// A complete what-if definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    deny_unknown_fields,
    bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>")
)]
pub struct ScenarioFile<T> {
    pub cluster: ClusterConfig,
    pub params: ParamTable<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling: Option<ScalingSection<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slo: Option<SloSection<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache: Option<CacheSection<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load: Option<LoadSection<T>>,
}

impl<T: Real> ScenarioFile<T> {
    pub fn with_table(cluster: ClusterConfig, params: ParamTable<T>) -> Self {
        ScenarioFile { cluster, params, scaling: None, slo: None, cache: None, load: None }
    }

    pub fn single(cluster: ClusterConfig, profile: &str, params: ServiceParams<T>) -> Self {
        Self::with_table(cluster, ParamTable::new().with(profile, params))
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError>
    where
        T: for<'de> Deserialize<'de>,
    {
        let file: Self =
            toml::from_str(text).map_err(|e| ScenarioError::InvalidInput { name: "config", reason: e.to_string() })?;
        file.validate()?;
        Ok(file)
    }

    pub fn to_toml_string(&self) -> String
    where
        T: Serialize,
    {
        toml::to_string(self).expect("scenario files serialize to TOML")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.cluster.validate()?;
        if self.params.is_empty() {
            return Err(ScenarioError::InvalidInput { name: "params", reason: "no parameter profile given".into() });
        }
        self.resolved_params()?;
        self.slo_spec()?;
        self.cache_params()?;
        Ok(())
    }

    /// The scaling section, or the identity on the only profile (or `reference`).
    pub fn scaling_spec(&self) -> Result<ScalingSpec<T>, ScenarioError> {
        Ok(match &self.scaling {
            Some(s) => ScalingSpec::new(s.profile.clone(), s.cpu_speedup, s.disk_speedup)
                .broker_cpu_fixed(s.broker_cpu_fixed),
            None => {
                let profile = if self.params.len() == 1 {
                    self.params.profiles().next().expect("one profile").to_owned()
                } else {
                    "reference".to_owned()
                };
                ScalingSpec::identity(profile)
            }
        })
    }

    /// Service parameters after applying the scaling section.
    pub fn resolved_params(&self) -> Result<ServiceParams<T>, ScenarioError> {
        apply_scaling(&self.params, &self.scaling_spec()?)
    }

    pub fn slo_spec(&self) -> Result<Option<SloSpec<T>>, ScenarioError> {
        self.slo.map(|s| SloSpec::new(s.max_ms * T::lit(1e-3), s.total_rate)).transpose()
    }

    pub fn cache_params(&self) -> Result<Option<CacheParams<T>>, ScenarioError> {
        Ok(self.cache.map(|c| CacheParams::new(c.hit_result, c.s_ms * T::lit(1e-3))).transpose()?)
    }
}
