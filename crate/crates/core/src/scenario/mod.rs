//! What-if analysis on top of the closed-form model: hardware scaling, load sweeps,
//! SLO-constrained rate search and replica sizing.

mod config;
pub mod presets;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::model::{
    response_bounds, response_with_result_cache, service_time_server, utilization, CacheParams,
    ClusterConfig, ModelError, ModelReport, ServiceParams, Workload,
};
use crate::scalar::Real;

pub use config::{CacheSection, LoadSection, ScalingSection, ScenarioFile, SloSection};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("unknown memory profile {name:?} (available: {available})")]
    UnknownProfile { name: String, available: String },
    #[error("invalid {name}: {reason}")]
    InvalidInput { name: &'static str, reason: String },
    #[error("SLO of {slo_s} s cannot be met even at 1 query/s (bound there: {bound_at_one})")]
    Infeasible { slo_s: f64, bound_at_one: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl ScenarioError {
    fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        ScenarioError::InvalidInput { name, reason: reason.into() }
    }
}

/// Measured service parameters keyed by memory profile name (`reference`, `2x`, ...).
///
/// Memory upgrades are never extrapolated: every profile is a measured column.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(
    transparent,
    bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>")
)]
pub struct ParamTable<T> {
    columns: BTreeMap<String, ServiceParams<T>>,
}

impl<T: Real> ParamTable<T> {
    pub fn new() -> Self {
        ParamTable { columns: BTreeMap::new() }
    }

    pub fn with(mut self, profile: impl Into<String>, params: ServiceParams<T>) -> Self {
        self.insert(profile, params);
        self
    }

    pub fn insert(&mut self, profile: impl Into<String>, params: ServiceParams<T>) {
        self.columns.insert(profile.into(), params);
    }

    pub fn get(&self, profile: &str) -> Result<&ServiceParams<T>, ScenarioError> {
        self.columns.get(profile).ok_or_else(|| ScenarioError::UnknownProfile {
            name: profile.to_owned(),
            available: self.profiles().collect::<Vec<_>>().join(", "),
        })
    }

    pub fn profiles(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }
}

/// A hardware change: pick a measured memory profile, then speed up CPUs and disks.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingSpec<T> {
    pub profile: String,
    /// Divides `s_hit`, `s_miss` and (unless `broker_cpu_fixed`) `s_broker`.
    pub cpu_speedup: T,
    /// Divides `s_disk`.
    pub disk_speedup: T,
    /// Keep the broker on its current CPU when index-server CPUs are upgraded.
    pub broker_cpu_fixed: bool,
}

impl<T: Real> ScalingSpec<T> {
    pub fn new(profile: impl Into<String>, cpu_speedup: T, disk_speedup: T) -> Self {
        ScalingSpec { profile: profile.into(), cpu_speedup, disk_speedup, broker_cpu_fixed: false }
    }

    /// The selected profile unchanged.
    pub fn identity(profile: impl Into<String>) -> Self {
        Self::new(profile, T::one(), T::one())
    }

    pub fn broker_cpu_fixed(mut self, fixed: bool) -> Self {
        self.broker_cpu_fixed = fixed;
        self
    }
}

/// Selects the profile column and applies the CPU and disk speedups to it.
pub fn apply_scaling<T: Real>(table: &ParamTable<T>, spec: &ScalingSpec<T>) -> Result<ServiceParams<T>, ScenarioError> {
    for (name, f) in [("cpu_speedup", spec.cpu_speedup), ("disk_speedup", spec.disk_speedup)] {
        if !(f.is_finite() && f >= T::one()) {
            return Err(ScenarioError::invalid(name, format!("speedup factors must be >= 1, got {f}")));
        }
    }
    let base = table.get(&spec.profile)?;
    let cpu = spec.cpu_speedup;
    Ok(ServiceParams {
        s_broker: if spec.broker_cpu_fixed { base.s_broker } else { base.s_broker / cpu },
        s_hit: base.s_hit / cpu,
        s_miss: base.s_miss / cpu,
        s_disk: base.s_disk / spec.disk_speedup,
        hit: base.hit,
    })
}

/// Service-level objective on mean response time, plus the total rate to be served.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SloSpec<T> {
    pub max_mean_response: T,
    pub total_rate: T,
}

impl<T: Real> SloSpec<T> {
    pub fn new(max_mean_response: T, total_rate: T) -> Result<Self, ScenarioError> {
        if !(max_mean_response > T::zero() && max_mean_response.is_finite()) {
            return Err(ScenarioError::invalid("max_mean_response", format!("must be positive, got {max_mean_response}")));
        }
        if !(total_rate > T::zero() && total_rate.is_finite()) {
            return Err(ScenarioError::invalid("total_rate", format!("must be positive, got {total_rate}")));
        }
        Ok(SloSpec { max_mean_response, total_rate })
    }
}

/// One operating point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint<T> {
    pub lambda: T,
    /// Offered index-server utilization, reported even past saturation.
    pub u_server: T,
    pub outcome: Result<ModelReport<T>, ModelError>,
}

impl<T> SweepPoint<T> {
    pub fn is_saturated(&self) -> bool {
        matches!(self.outcome, Err(ModelError::Saturated { .. }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult<T> {
    /// Points in strictly increasing `lambda` order.
    pub points: Vec<SweepPoint<T>>,
}

impl<T: Real> SweepResult<T> {
    pub const CSV_HEADER: &'static str = "lambda,r_lower_s,r_upper_s,u_server,saturated";

    /// Renders the sweep as CSV. Saturated rows leave the response columns empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for pt in &self.points {
            match &pt.outcome {
                Ok(r) => writeln!(out, "{},{},{},{},false", pt.lambda, r.r_lower, r.r_upper, pt.u_server),
                Err(_) => writeln!(out, "{},,,{},true", pt.lambda, pt.u_server),
            }
            .expect("writing to a String");
        }
        out
    }
}

/// Evaluates the bounds at `λ_min, λ_min + step, …` strictly below `λ_max`.
///
/// Saturated operating points stay in the result, marked as such.
pub fn sweep<T: Real>(
    config: &ClusterConfig,
    params: &ServiceParams<T>,
    lambda_min: T,
    lambda_max: T,
    step: T,
) -> Result<SweepResult<T>, ScenarioError> {
    if !(lambda_min >= T::zero() && lambda_min < lambda_max && lambda_max.is_finite()) {
        return Err(ScenarioError::invalid("lambda range", format!("need 0 <= min < max, got [{lambda_min}, {lambda_max})")));
    }
    if !(step > T::zero() && step.is_finite()) {
        return Err(ScenarioError::invalid("step", format!("must be positive, got {step}")));
    }
    config.validate()?;
    params.validate()?;
    let s_server = service_time_server(params);
    // Absorbs rounding in `min + k*step` so an exact multiple of the step hitting
    // `lambda_max` stays excluded.
    let guard = step * T::lit(1e-9);
    let mut points = Vec::new();
    for k in 0usize.. {
        let lambda = lambda_min + T::count(k) * step;
        if lambda >= lambda_max - guard {
            break;
        }
        let outcome = response_bounds(config, params, &Workload { lambda });
        if let Err(e) = &outcome {
            if !e.is_saturation() {
                return Err(e.clone().into());
            }
        }
        points.push(SweepPoint { lambda, u_server: utilization(s_server, lambda), outcome });
    }
    Ok(SweepResult { points })
}

/// Upper bound on response time at `λ`, with the result cache when given.
pub fn upper_bound<T: Real>(
    config: &ClusterConfig,
    params: &ServiceParams<T>,
    lambda: T,
    cache: Option<&CacheParams<T>>,
) -> Result<T, ModelError> {
    let load = Workload { lambda };
    match cache {
        Some(c) => response_with_result_cache(config, params, &load, c),
        None => response_bounds(config, params, &load).map(|r| r.r_upper),
    }
}

/// Largest whole number of queries per second whose upper bound meets the SLO.
///
/// The bound is increasing in `λ` up to saturation, so the crossing is bracketed by
/// bisection and then settled on the integer grid by direct evaluation.
pub fn max_rate_under_slo<T: Real>(
    config: &ClusterConfig,
    params: &ServiceParams<T>,
    slo: &SloSpec<T>,
    cache: Option<&CacheParams<T>>,
) -> Result<u32, ScenarioError> {
    let target = slo.max_mean_response;
    let meets = |lambda: T| -> Result<bool, ScenarioError> {
        match upper_bound(config, params, lambda, cache) {
            Ok(r) => Ok(r <= target),
            Err(ModelError::Saturated { .. }) => Ok(false),
            Err(e) => Err(e.into()),
        }
    };

    if !meets(T::one())? {
        let bound_at_one = match upper_bound(config, params, T::one(), cache) {
            Ok(r) => format!("{r} s"),
            Err(e) => e.to_string(),
        };
        return Err(ScenarioError::Infeasible { slo_s: target.as_f64(), bound_at_one });
    }

    // Every station saturates at 1/demand; past the smallest of those the bound is undefined.
    let mut demands = vec![service_time_server(params), params.s_broker];
    if let Some(c) = cache {
        demands.push(c.s_broker_cache_hit);
    }
    let saturation = demands
        .into_iter()
        .filter(|&s| s > T::zero())
        .map(|s| T::one() / s)
        .fold(T::infinity(), T::min);
    let cap = T::lit(f64::from(u32::MAX - 1));
    if !saturation.is_finite() || saturation > cap {
        return Err(ScenarioError::invalid("params", "service demands are zero; the rate is unbounded"));
    }

    let (mut lo, mut hi) = (T::one(), saturation);
    for _ in 0..200 {
        let mid = (lo + hi) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if meets(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let mut n = lo.floor().to_u32().unwrap_or(1).max(1);
    while meets(T::lit(f64::from(n + 1)))? {
        n += 1;
    }
    while n > 1 && !meets(T::lit(f64::from(n)))? {
        n -= 1;
    }
    Ok(n)
}

/// Whole cluster replicas needed to carry `total_rate` when each sustains `per_replica_rate`.
pub fn replicas_needed<T: Real>(total_rate: T, per_replica_rate: T) -> Result<u32, ScenarioError> {
    if !(per_replica_rate > T::zero() && per_replica_rate.is_finite()) {
        return Err(ScenarioError::invalid("per_replica_rate", format!("must be positive, got {per_replica_rate}")));
    }
    if !(total_rate >= T::zero() && total_rate.is_finite()) {
        return Err(ScenarioError::invalid("total_rate", format!("must be non-negative, got {total_rate}")));
    }
    let n = (total_rate / per_replica_rate).ceil().max(T::one());
    n.to_u32().ok_or_else(|| ScenarioError::invalid("total_rate", "replica count overflows"))
}

/// Speedup of the upper bound: `baseline.r_upper / improved.r_upper`.
pub fn gain_over_baseline<T: Real>(baseline: &ModelReport<T>, improved: &ModelReport<T>) -> T {
    baseline.r_upper / improved.r_upper
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{harmonic, residence_time};
    use approx::assert_relative_eq;

    fn ms(v: f64) -> f64 {
        v * 1e-3
    }

    #[test]
    fn scaling_four_x_memory() {
        let table = presets::table5::<f64>();
        let p = apply_scaling(&table, &ScalingSpec::new("4x", 4.0, 4.0)).unwrap();
        assert_relative_eq!(p.s_hit, ms(8.67), max_relative = 1e-12);
        assert_relative_eq!(p.s_miss, ms(8.01), max_relative = 1e-12);
        assert_relative_eq!(p.s_disk, ms(6.535), max_relative = 1e-12);
        assert_relative_eq!(p.s_broker, ms(0.8625), max_relative = 1e-12);
        assert_eq!(p.hit, 0.18);

        let fixed = apply_scaling(&table, &ScalingSpec::new("4x", 4.0, 4.0).broker_cpu_fixed(true)).unwrap();
        assert_relative_eq!(fixed.s_broker, ms(3.45), max_relative = 1e-12);
    }

    #[test]
    fn scaling_identity_and_disk_only() {
        let table = presets::table5::<f64>();
        for profile in table.profiles() {
            let p = apply_scaling(&table, &ScalingSpec::identity(profile)).unwrap();
            assert_eq!(&p, table.get(profile).unwrap());
        }
        let p = apply_scaling(&table, &ScalingSpec::new("reference", 1.0, 4.0)).unwrap();
        let base = table.get("reference").unwrap();
        assert_relative_eq!(p.s_disk, ms(16.5075), max_relative = 1e-12);
        assert_eq!((p.s_hit, p.s_miss, p.s_broker, p.hit), (base.s_hit, base.s_miss, base.s_broker, base.hit));
    }

    #[test]
    fn scaling_errors() {
        let table = presets::table5::<f64>();
        assert!(matches!(
            apply_scaling(&table, &ScalingSpec::identity("8x")),
            Err(ScenarioError::UnknownProfile { .. })
        ));
        assert!(apply_scaling(&table, &ScalingSpec::new("reference", 0.5, 1.0)).is_err());
    }

    #[test]
    fn sweep_reference_column() {
        let cfg = presets::table5_cluster();
        let params = *presets::table5::<f64>().get("reference").unwrap();
        let s = sweep(&cfg, &params, 1.0, 13.0, 1.0).unwrap();
        assert_eq!(s.points.len(), 12);
        let at4 = s.points.iter().find(|p| p.lambda == 4.0).unwrap();
        assert_relative_eq!(at4.outcome.as_ref().unwrap().r_upper, 0.866, max_relative = 1e-3);
        // Servers saturate at 1/0.0998778 ≈ 10.01 q/s.
        assert!(!s.points[9].is_saturated());
        assert!(s.points[10].is_saturated() && s.points[11].is_saturated());

        let csv = s.to_csv();
        assert!(csv.starts_with("lambda,r_lower_s,r_upper_s,u_server,saturated\n"));
        let last = csv.lines().last().unwrap();
        assert!(last.starts_with("12,,,") && last.ends_with(",true"), "{last}");
    }

    #[test]
    fn sweep_single_point_and_validation() {
        let cfg = ClusterConfig::new(2).unwrap();
        let params = presets::table4::<f64>();
        let s = sweep(&cfg, &params, 9.0, 10.0, 1.0).unwrap();
        assert_eq!(s.points.len(), 1);
        assert_eq!(s.points[0].lambda, 9.0);
        let s = sweep(&cfg, &params, 0.0, 1.0, 0.1).unwrap();
        assert_eq!(s.points.len(), 10);
        assert!(s.points.windows(2).all(|w| w[0].lambda < w[1].lambda));
        assert!(sweep(&cfg, &params, 2.0, 1.0, 0.1).is_err());
        assert!(sweep(&cfg, &params, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn slo_rates() {
        let cfg = presets::table5_cluster();
        let table = presets::table5::<f64>();
        let slo = SloSpec::new(0.3, 200.0).unwrap();

        let s4 = apply_scaling(&table, &ScalingSpec::new("4x", 4.0, 4.0)).unwrap();
        assert_eq!(max_rate_under_slo(&cfg, &s4, &slo, None).unwrap(), 56);

        let s2 = apply_scaling(&table, &ScalingSpec::new("4x", 4.0, 1.0)).unwrap();
        assert_eq!(max_rate_under_slo(&cfg, &s2, &slo, None).unwrap(), 16);

        let base = *table.get("reference").unwrap();
        assert!(matches!(max_rate_under_slo(&cfg, &base, &slo, None), Err(ScenarioError::Infeasible { .. })));
    }

    #[test]
    fn slo_rate_with_cache_is_higher() {
        let cfg = presets::table5_cluster();
        let s4 = apply_scaling(&presets::table5::<f64>(), &ScalingSpec::new("4x", 4.0, 4.0)).unwrap();
        let slo = SloSpec::new(0.3, 200.0).unwrap();
        let cache = presets::result_cache::<f64>();
        let with = max_rate_under_slo(&cfg, &s4, &slo, Some(&cache)).unwrap();
        assert!(with > 56);
        assert!(upper_bound(&cfg, &s4, f64::from(with), Some(&cache)).unwrap() <= 0.3);
        assert!(upper_bound(&cfg, &s4, f64::from(with + 1), Some(&cache)).map_or(true, |r| r > 0.3));
    }

    #[test]
    fn replicas() {
        assert_eq!(replicas_needed(200.0, 56.0).unwrap(), 4);
        assert_eq!(replicas_needed(200.0, 200.0).unwrap(), 1);
        assert_eq!(replicas_needed(200.0, 65.0).unwrap(), 4);
        assert_eq!(replicas_needed(200.0, 50.0).unwrap(), 4);
        assert!(replicas_needed(200.0, 0.0).is_err());
        assert!(replicas_needed(200.0, -3.0).is_err());
    }

    #[test]
    fn gains_against_reference() {
        let cfg = presets::table5_cluster();
        let table = presets::table5::<f64>();
        let at4 = |spec: ScalingSpec<f64>| {
            let p = apply_scaling(&table, &spec).unwrap();
            response_bounds(&cfg, &p, &Workload::new(4.0).unwrap()).unwrap()
        };
        let base = at4(ScalingSpec::identity("reference"));
        assert_eq!(gain_over_baseline(&base, &base), 1.0);
        assert_relative_eq!(gain_over_baseline(&base, &at4(ScalingSpec::new("4x", 1.0, 4.0))), 3.686, max_relative = 1e-3);
        assert_relative_eq!(gain_over_baseline(&base, &at4(ScalingSpec::new("4x", 4.0, 4.0))), 11.578, max_relative = 1e-3);
    }

    #[test]
    fn zero_load_bound_is_harmonic_service() {
        let cfg = presets::table5_cluster();
        let p = *presets::table5::<f64>().get("2x").unwrap();
        let r = upper_bound(&cfg, &p, 0.0, None).unwrap();
        let expect = harmonic::<f64>(100) * service_time_server(&p) + residence_time(p.s_broker, 0.0).unwrap();
        assert_relative_eq!(r, expect, max_relative = 1e-14);
    }
}
