//! Built-in parameter sets: the 8-server validation cluster, the measured 100-server
//! memory-profile table, and the case study that sizes it for a 300 ms / 200 q/s target.

use std::fmt;
use std::str::FromStr;

use super::{
    apply_scaling, gain_over_baseline, max_rate_under_slo, replicas_needed, upper_bound, ParamTable,
    ScalingSpec, ScenarioError, ScenarioFile, SloSpec,
};
use crate::model::{response_bounds, CacheParams, ClusterConfig, ServiceParams, Workload};
use crate::regression::LinearFit;
use crate::scalar::Real;

/// Memory profile names used by [`table5`].
pub const PROFILES: [&str; 4] = ["reference", "2x", "3x", "4x"];

fn params<T: Real>(s_broker: f64, s_hit: f64, s_miss: f64, s_disk: f64, hit: f64) -> ServiceParams<T> {
    ServiceParams::from_millis(T::lit(s_broker), T::lit(s_hit), T::lit(s_miss), T::lit(s_disk), T::lit(hit))
        .expect("built-in parameters are valid")
}

/// Measured broker demand (ms) on the validation cluster for `p = 2, 4, 8`.
pub const BROKER_DEMAND_MS: [(u32, f64); 3] = [(2, 0.33), (4, 0.39), (8, 0.52)];

/// Broker demand measurements in seconds.
pub fn broker_demand_points<T: Real>() -> Vec<(u32, T)> {
    BROKER_DEMAND_MS.iter().map(|&(p, s)| (p, T::lit(s * 1e-3))).collect()
}

/// Validation cluster: 8 servers, 1.25 M documents each.
pub fn table4_cluster() -> ClusterConfig {
    ClusterConfig { p: 8, b: Some(1_250_000), n: Some(10_000_000) }
}

/// Validation cluster parameters with the `p = 8` broker demand.
pub fn table4<T: Real>() -> ServiceParams<T> {
    params(0.52, 9.20, 10.04, 28.08, 0.17)
}

/// Validation cluster parameters with the broker demand measured at `p` (2, 4 or 8).
pub fn table4_at<T: Real>(p: u32) -> Option<ServiceParams<T>> {
    let s_broker = BROKER_DEMAND_MS.iter().find(|&&(q, _)| q == p)?.1;
    Some(params(s_broker, 9.20, 10.04, 28.08, 0.17))
}

/// Target cluster: 100 servers, 10 M documents each.
pub fn table5_cluster() -> ClusterConfig {
    ClusterConfig { p: 100, b: Some(10_000_000), n: Some(1_000_000_000) }
}

/// Broker demand at `p = 100`, extrapolated from the validation measurements and rounded.
pub const TABLE5_BROKER_MS: f64 = 3.45;

/// Per-server parameters measured with the reference, 2x, 3x and 4x memory sizes.
pub fn table5<T: Real>() -> ParamTable<T> {
    let b = TABLE5_BROKER_MS;
    ParamTable::new()
        .with("reference", params(b, 28.23, 35.31, 66.03, 0.02))
        .with("2x", params(b, 33.38, 33.77, 35.89, 0.09))
        .with("3x", params(b, 34.57, 32.66, 30.48, 0.15))
        .with("4x", params(b, 34.68, 32.04, 26.14, 0.18))
}

/// Result cache at the broker: half the queries hit, 0.069 ms per cached answer.
pub fn result_cache<T: Real>() -> CacheParams<T> {
    CacheParams { hit_result: T::lit(0.5), s_broker_cache_hit: T::lit(0.069e-3) }
}

/// The case-study objective: 300 ms mean response, 200 q/s in total.
pub fn case_study_slo<T: Real>() -> SloSpec<T> {
    SloSpec { max_mean_response: T::lit(0.3), total_rate: T::lit(200.0) }
}

/// Named built-in configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Table4,
    Table5Reference,
    Table5FourXMem,
    PaperCaseStudy,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Table4, Preset::Table5Reference, Preset::Table5FourXMem, Preset::PaperCaseStudy];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Table4 => "table4",
            Preset::Table5Reference => "table5-reference",
            Preset::Table5FourXMem => "table5-4xmem",
            Preset::PaperCaseStudy => "paper-case-study",
        }
    }

    /// The preset as a scenario file, as if it had been loaded from disk.
    pub fn scenario<T: Real>(self) -> ScenarioFile<T> {
        use super::config::{CacheSection, ScalingSection, SloSection};
        match self {
            Preset::Table4 => ScenarioFile::single(table4_cluster(), "table4", table4()),
            Preset::Table5Reference => ScenarioFile {
                scaling: Some(ScalingSection::profile("reference")),
                ..ScenarioFile::with_table(table5_cluster(), table5())
            },
            Preset::Table5FourXMem => ScenarioFile {
                scaling: Some(ScalingSection::profile("4x")),
                ..ScenarioFile::with_table(table5_cluster(), table5())
            },
            Preset::PaperCaseStudy => ScenarioFile {
                scaling: Some(ScalingSection {
                    profile: "4x".into(),
                    cpu_speedup: T::lit(4.0),
                    disk_speedup: T::lit(4.0),
                    broker_cpu_fixed: false,
                }),
                slo: Some(SloSection { max_ms: T::lit(300.0), total_rate: T::lit(200.0) }),
                cache: Some(CacheSection { hit_result: T::lit(0.5), s_ms: T::lit(0.069) }),
                ..ScenarioFile::with_table(table5_cluster(), table5())
            },
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| {
            let names: Vec<_> = Preset::ALL.iter().map(|p| p.name()).collect();
            format!("unknown preset {s:?}; expected one of {}", names.join(", "))
        })
    }
}

/// One upgrade option of the case study.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseStudyScenario<T> {
    pub label: &'static str,
    pub scaling: ScalingSpec<T>,
    pub cache: Option<CacheParams<T>>,
}

/// Baseline followed by the upgrade scenarios, in presentation order.
pub fn case_study_scenarios<T: Real>() -> Vec<CaseStudyScenario<T>> {
    let four = T::lit(4.0);
    let one = T::one();
    let s = |label, profile: &str, cpu, disk, cache| CaseStudyScenario {
        label,
        scaling: ScalingSpec::new(profile, cpu, disk),
        cache,
    };
    vec![
        s("baseline", "reference", one, one, None),
        s("1: memory+disks", "4x", one, four, None),
        s("2: memory+CPUs", "4x", four, one, None),
        s("3: CPUs+disks", "reference", four, four, None),
        s("4: memory+CPUs+disks", "4x", four, four, None),
        s("6: scenario 4 + result cache", "4x", four, four, Some(result_cache())),
    ]
}

/// Summary of one case-study scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseStudyRow<T> {
    pub label: &'static str,
    pub profile: String,
    pub cpu_speedup: T,
    pub disk_speedup: T,
    pub cached: bool,
    /// Upper bound at the comparison rate.
    pub r_upper_at_compare: T,
    /// Baseline upper bound over this scenario's, at the comparison rate.
    pub gain: T,
    /// Largest integer rate meeting the SLO, `None` when even 1 q/s misses it.
    pub max_rate: Option<u32>,
    /// Upper bound at `max_rate`.
    pub r_upper_at_max: Option<T>,
    /// Replicas needed for the SLO's total rate.
    pub replicas: Option<u32>,
}

impl<T: Real> CaseStudyRow<T> {
    pub const CSV_HEADER: &'static str =
        "scenario,profile,cpu_speedup,disk_speedup,result_cache,r_upper_at_compare_s,gain,max_rate,r_upper_at_max_s,replicas";

    pub fn csv_line(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.label,
            self.profile,
            self.cpu_speedup,
            self.disk_speedup,
            self.cached,
            self.r_upper_at_compare,
            self.gain,
            opt(self.max_rate.map(|v| v.to_string())),
            opt(self.r_upper_at_max.map(|v| v.to_string())),
            opt(self.replicas.map(|v| v.to_string())),
        )
    }
}

/// Runs every case-study scenario against the baseline at `compare_lambda`.
pub fn case_study<T: Real>(
    config: &ClusterConfig,
    table: &ParamTable<T>,
    slo: &SloSpec<T>,
    compare_lambda: T,
    broker_cpu_fixed: bool,
) -> Result<Vec<CaseStudyRow<T>>, ScenarioError> {
    let scenarios = case_study_scenarios::<T>();
    let baseline_params = apply_scaling(table, &scenarios[0].scaling)?;
    let baseline = response_bounds(config, &baseline_params, &Workload::new(compare_lambda)?)?;

    let mut rows = Vec::with_capacity(scenarios.len());
    for sc in scenarios {
        let scaling = sc.scaling.clone().broker_cpu_fixed(broker_cpu_fixed);
        let params = apply_scaling(table, &scaling)?;
        let cache = sc.cache.as_ref();
        let r_cmp = upper_bound(config, &params, compare_lambda, cache)?;
        let gain = match cache {
            None => gain_over_baseline(&baseline, &response_bounds(config, &params, &Workload { lambda: compare_lambda })?),
            Some(_) => baseline.r_upper / r_cmp,
        };
        let max_rate = match max_rate_under_slo(config, &params, slo, cache) {
            Ok(n) => Some(n),
            Err(ScenarioError::Infeasible { .. }) => None,
            Err(e) => return Err(e),
        };
        let r_upper_at_max = match max_rate {
            Some(n) => Some(upper_bound(config, &params, T::lit(f64::from(n)), cache)?),
            None => None,
        };
        let replicas = match max_rate {
            Some(n) => Some(replicas_needed(slo.total_rate, T::lit(f64::from(n)))?),
            None => None,
        };
        rows.push(CaseStudyRow {
            label: sc.label,
            profile: scaling.profile,
            cpu_speedup: scaling.cpu_speedup,
            disk_speedup: scaling.disk_speedup,
            cached: cache.is_some(),
            r_upper_at_compare: r_cmp,
            gain,
            max_rate,
            r_upper_at_max,
            replicas,
        });
    }
    Ok(rows)
}

/// Upper bound, with and without the result cache, for one memory profile and speedup pair.
#[derive(Debug, Clone, PartialEq)]
pub struct UpgradePoint<T> {
    pub profile: String,
    pub cpu_speedup: T,
    pub disk_speedup: T,
    /// `None` when saturated.
    pub r_upper: Option<T>,
    pub r_upper_cached: Option<T>,
}

impl<T: Real> UpgradePoint<T> {
    pub const CSV_HEADER: &'static str = "profile,cpu_speedup,disk_speedup,r_upper_s,r_upper_cached_s";

    pub fn csv_line(&self) -> String {
        let opt = |v: Option<T>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{}",
            self.profile,
            self.cpu_speedup,
            self.disk_speedup,
            opt(self.r_upper),
            opt(self.r_upper_cached)
        )
    }
}

/// Upper bounds over every profile × CPU speedup × disk speedup at a fixed rate.
pub fn upgrade_grid<T: Real>(
    config: &ClusterConfig,
    table: &ParamTable<T>,
    lambda: T,
    speedups: &[T],
    cache: &CacheParams<T>,
) -> Result<Vec<UpgradePoint<T>>, ScenarioError> {
    let mut out = Vec::new();
    for profile in table.profiles() {
        for &cpu in speedups {
            for &disk in speedups {
                let params = apply_scaling(table, &ScalingSpec::new(profile, cpu, disk))?;
                let eval = |c: Option<&CacheParams<T>>| match upper_bound(config, &params, lambda, c) {
                    Ok(r) => Ok(Some(r)),
                    Err(e) if e.is_saturation() => Ok(None),
                    Err(e) => Err(ScenarioError::from(e)),
                };
                out.push(UpgradePoint {
                    profile: profile.to_owned(),
                    cpu_speedup: cpu,
                    disk_speedup: disk,
                    r_upper: eval(None)?,
                    r_upper_cached: eval(Some(cache))?,
                });
            }
        }
    }
    Ok(out)
}

/// Fitted broker demand line evaluated at the target cluster size, in seconds.
pub fn extrapolated_broker_demand<T: Real>(p: u32) -> Result<(LinearFit<T>, T), ScenarioError> {
    let fit = crate::model::broker_demand_fit(&broker_demand_points::<T>())?;
    let at = fit.at(T::lit(f64::from(p)));
    Ok((fit, at))
}
