//! Closed-form response-time model for a broker in front of `p` document-partitioned
//! index servers.
//!
//! Each index server is a single service center whose demand mixes a cache-hit class and a
//! disk-touching class. Servers and broker are open M/M/1-style stations that all see the
//! full cluster arrival rate (every query is broadcast). The fork-join synchronization at
//! the servers is bracketed: ignoring it gives the lower bound, and scaling the single-server
//! residence time by the harmonic number `H_p` gives the upper bound.
//!
//! All durations are seconds and all rates are queries per second.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::regression::{fit_line, DegenerateDesign, LinearFit};
use crate::scalar::Real;

/// A queueing station of the cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Station {
    IndexServer,
    Broker,
    /// Broker path for queries answered from the result cache.
    BrokerCache,
}

impl fmt::Display for Station {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Station::IndexServer => "index server",
            Station::Broker => "broker",
            Station::BrokerCache => "broker (cached answers)",
        })
    }
}

/// Offered utilization reached or passed 1 at a station.
#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("station saturated: utilization {utilization:.4} >= 1")]
pub struct Saturation {
    pub utilization: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("{station} saturates: utilization {utilization:.4} >= 1")]
    Saturated { station: Station, utilization: f64 },
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error(transparent)]
    DegenerateFit(#[from] DegenerateDesign),
}

impl ModelError {
    fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        ModelError::InvalidParameter { name, reason: reason.into() }
    }

    pub fn is_saturation(&self) -> bool {
        matches!(self, ModelError::Saturated { .. })
    }
}

fn check_duration<T: Real>(name: &'static str, v: T) -> Result<(), ModelError> {
    if v.is_finite() && v >= T::zero() {
        Ok(())
    } else {
        Err(ModelError::invalid(name, format!("must be a finite non-negative duration, got {v}")))
    }
}

fn check_probability<T: Real>(name: &'static str, v: T) -> Result<(), ModelError> {
    if v >= T::zero() && v <= T::one() {
        Ok(())
    } else {
        Err(ModelError::invalid(name, format!("must lie in [0, 1], got {v}")))
    }
}

/// Cluster topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterConfig {
    /// Number of index servers.
    pub p: u32,
    /// Documents per server. Descriptive only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<u64>,
    /// Total collection size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
}

impl ClusterConfig {
    pub fn new(p: u32) -> Result<Self, ModelError> {
        let c = ClusterConfig { p, b: None, n: None };
        c.validate()?;
        Ok(c)
    }

    /// Sets the per-server subcollection size and derives the collection size from it.
    pub fn with_docs_per_server(mut self, b: u64) -> Self {
        self.b = Some(b);
        self.n = Some(b * u64::from(self.p));
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.p == 0 {
            return Err(ModelError::invalid("p", "cluster needs at least one index server"));
        }
        if let (Some(b), Some(n)) = (self.b, self.n) {
            if b.checked_mul(u64::from(self.p)) != Some(n) {
                return Err(ModelError::invalid("n", format!("expected p*b = {}*{b}, got {n}", self.p)));
            }
        }
        Ok(())
    }
}

/// Measured per-query demands at the broker and at one index server.
///
/// The serialized form uses milliseconds (`s_broker_ms`, `s_hit_ms`, `s_miss_ms`,
/// `s_disk_ms`, `hit`); in memory everything is seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "ServiceParamsMs<T>",
    into = "ServiceParamsMs<T>",
    bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>")
)]
pub struct ServiceParams<T> {
    /// Mean broker service time per query.
    pub s_broker: T,
    /// Mean CPU time of a query whose inverted lists are all in the disk cache.
    pub s_hit: T,
    /// Mean CPU time of a query that reads from disk.
    pub s_miss: T,
    /// Mean disk time of a query that reads from disk.
    pub s_disk: T,
    /// Probability of a full disk-cache hit.
    pub hit: T,
}

impl<T: Real> ServiceParams<T> {
    pub fn new(s_broker: T, s_hit: T, s_miss: T, s_disk: T, hit: T) -> Result<Self, ModelError> {
        let p = ServiceParams { s_broker, s_hit, s_miss, s_disk, hit };
        p.validate()?;
        Ok(p)
    }

    /// Builds parameters from millisecond durations.
    pub fn from_millis(s_broker: T, s_hit: T, s_miss: T, s_disk: T, hit: T) -> Result<Self, ModelError> {
        let k = T::lit(1e-3);
        Self::new(s_broker * k, s_hit * k, s_miss * k, s_disk * k, hit)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        check_duration("s_broker", self.s_broker)?;
        check_duration("s_hit", self.s_hit)?;
        check_duration("s_miss", self.s_miss)?;
        check_duration("s_disk", self.s_disk)?;
        check_probability("hit", self.hit)
    }

    /// Multiplies every duration by `c`.
    pub fn scale_durations(&self, c: T) -> Self {
        ServiceParams {
            s_broker: self.s_broker * c,
            s_hit: self.s_hit * c,
            s_miss: self.s_miss * c,
            s_disk: self.s_disk * c,
            hit: self.hit,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ServiceParamsMs<T> {
    s_broker_ms: T,
    s_hit_ms: T,
    s_miss_ms: T,
    s_disk_ms: T,
    hit: T,
}

impl<T: Real> TryFrom<ServiceParamsMs<T>> for ServiceParams<T> {
    type Error = ModelError;

    fn try_from(m: ServiceParamsMs<T>) -> Result<Self, Self::Error> {
        ServiceParams::from_millis(m.s_broker_ms, m.s_hit_ms, m.s_miss_ms, m.s_disk_ms, m.hit)
    }
}

impl<T: Real> From<ServiceParams<T>> for ServiceParamsMs<T> {
    fn from(p: ServiceParams<T>) -> Self {
        let k = T::lit(1e3);
        ServiceParamsMs {
            s_broker_ms: p.s_broker * k,
            s_hit_ms: p.s_hit * k,
            s_miss_ms: p.s_miss * k,
            s_disk_ms: p.s_disk * k,
            hit: p.hit,
        }
    }
}

/// Offered load: the total query rate reaching the cluster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Workload<T> {
    pub lambda: T,
}

impl<T: Real> Workload<T> {
    pub fn new(lambda: T) -> Result<Self, ModelError> {
        if lambda.is_finite() && lambda >= T::zero() {
            Ok(Workload { lambda })
        } else {
            Err(ModelError::invalid("lambda", format!("must be a finite non-negative rate, got {lambda}")))
        }
    }
}

/// Broker-side cache of complete query answers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CacheParams<T> {
    /// Probability that a query's answer is already cached.
    pub hit_result: T,
    /// Mean broker service time for a cached answer.
    pub s_broker_cache_hit: T,
}

impl<T: Real> CacheParams<T> {
    pub fn new(hit_result: T, s_broker_cache_hit: T) -> Result<Self, ModelError> {
        check_probability("hit_result", hit_result)?;
        check_duration("s_broker_cache_hit", s_broker_cache_hit)?;
        Ok(CacheParams { hit_result, s_broker_cache_hit })
    }
}

/// Every output of the model at one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelReport<T> {
    pub p: u32,
    pub lambda: T,
    pub s_server: T,
    pub r_server: T,
    pub u_server: T,
    pub r_broker: T,
    /// Response time ignoring fork-join synchronization.
    pub r_lower: T,
    /// Harmonic upper bound on response time.
    pub r_upper: T,
    pub h_p: T,
}

/// Mean service demand at one index server, mixing the hit and miss classes.
pub fn service_time_server<T: Real>(params: &ServiceParams<T>) -> T {
    params.hit * params.s_hit + (T::one() - params.hit) * (params.s_miss + params.s_disk)
}

/// Offered utilization `λ·S`. Values ≥ 1 mean the station cannot keep up.
pub fn utilization<T: Real>(service_time: T, lambda: T) -> T {
    lambda * service_time
}

/// Mean residence time `S / (1 − λS)` of an open single-server station.
pub fn residence_time<T: Real>(service_time: T, lambda: T) -> Result<T, Saturation> {
    let u = utilization(service_time, lambda);
    if u >= T::one() || !u.is_finite() {
        return Err(Saturation { utilization: u.as_f64() });
    }
    Ok(service_time / (T::one() - u))
}

/// The `p`-th harmonic number, summed directly from the smallest term up.
pub fn harmonic<T: Real>(p: u32) -> T {
    (1..=p).rev().map(|k| T::one() / T::lit(f64::from(k))).sum()
}

fn residence_at<T: Real>(station: Station, s: T, lambda: T) -> Result<T, ModelError> {
    residence_time(s, lambda).map_err(|e| ModelError::Saturated { station, utilization: e.utilization })
}

/// Fails with the station whose utilization is highest, when any reaches 1.
fn check_stations<T: Real>(lambda: T, demands: &[(Station, T)]) -> Result<(), ModelError> {
    let worst = demands
        .iter()
        .map(|&(st, s)| (st, utilization(s, lambda)))
        .filter(|&(_, u)| u >= T::one() || !u.is_finite())
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    match worst {
        Some((station, u)) => Err(ModelError::Saturated { station, utilization: u.as_f64() }),
        None => Ok(()),
    }
}

/// Lower and upper bounds on mean query response time, with every intermediate output.
pub fn response_bounds<T: Real>(
    config: &ClusterConfig,
    params: &ServiceParams<T>,
    load: &Workload<T>,
) -> Result<ModelReport<T>, ModelError> {
    config.validate()?;
    params.validate()?;
    let lambda = load.lambda;
    let s_server = service_time_server(params);
    check_stations(lambda, &[(Station::IndexServer, s_server), (Station::Broker, params.s_broker)])?;

    let r_server = residence_at(Station::IndexServer, s_server, lambda)?;
    let r_broker = residence_at(Station::Broker, params.s_broker, lambda)?;
    let h_p = harmonic::<T>(config.p);
    Ok(ModelReport {
        p: config.p,
        lambda,
        s_server,
        r_server,
        u_server: utilization(s_server, lambda),
        r_broker,
        r_lower: r_server + r_broker,
        r_upper: h_p * r_server + r_broker,
        h_p,
    })
}

/// Upper bound on mean response time when the broker answers a fraction of queries from
/// its result cache.
///
/// Missed queries follow the uncached upper bound; hits pay only an M/M/1 residence at the
/// broker with the cached-answer demand. Both stations are evaluated at the full rate `λ`.
pub fn response_with_result_cache<T: Real>(
    config: &ClusterConfig,
    params: &ServiceParams<T>,
    load: &Workload<T>,
    cache: &CacheParams<T>,
) -> Result<T, ModelError> {
    let cache = CacheParams::new(cache.hit_result, cache.s_broker_cache_hit)?;
    config.validate()?;
    params.validate()?;
    let lambda = load.lambda;
    check_stations(
        lambda,
        &[
            (Station::IndexServer, service_time_server(params)),
            (Station::Broker, params.s_broker),
            (Station::BrokerCache, cache.s_broker_cache_hit),
        ],
    )?;
    let report = response_bounds(config, params, load)?;
    let r_cached = residence_at(Station::BrokerCache, cache.s_broker_cache_hit, lambda)?;
    Ok(report.r_upper * (T::one() - cache.hit_result) + r_cached * cache.hit_result)
}

/// Broker demand as a linear function of the server count.
pub fn broker_demand_fit<T: Real>(points: &[(u32, T)]) -> Result<LinearFit<T>, ModelError> {
    let xy: Vec<(T, T)> = points.iter().map(|&(p, s)| (T::lit(f64::from(p)), s)).collect();
    Ok(fit_line(&xy)?)
}
