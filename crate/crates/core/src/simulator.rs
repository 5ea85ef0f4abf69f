//! Discrete-event simulation of the open fork-join network.
//!
//! Every arriving query forks one task to each of the `p` index servers. Servers are FCFS
//! single-server queues with exponential service. When the last sibling task finishes, the
//! query joins and enters the broker, a FCFS exponential station. Response time runs from
//! arrival to broker completion.
//!
//! Randomness comes from ChaCha8 seeded with the configured 64-bit seed. Arrivals, the broker
//! and each server draw from their own stream of that generator, so the correlation mode is
//! the only coupling between servers.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::model::{service_time_server, ServiceParams};

const ARRIVAL_STREAM: u64 = 0;
const BROKER_STREAM: u64 = 1;
const FIRST_SERVER_STREAM: u64 = 2;

/// How the `p` sibling tasks of one query draw their service times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorrelationMode {
    /// Each server draws independently.
    #[default]
    Independent,
    /// All siblings share one draw, so they finish together on balanced queues.
    Identical,
}

impl CorrelationMode {
    pub fn name(self) -> &'static str {
        match self {
            CorrelationMode::Independent => "independent",
            CorrelationMode::Identical => "identical",
        }
    }
}

impl fmt::Display for CorrelationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CorrelationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "independent" => Ok(CorrelationMode::Independent),
            "identical" | "correlated" => Ok(CorrelationMode::Identical),
            _ => Err(format!("unknown correlation mode {s:?}; expected independent or identical")),
        }
    }
}

/// Service-time law at an index server.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ServiceModel {
    /// One exponential class with the given mean (seconds).
    Exponential { mean: f64 },
    /// With probability `hit` an exponential of mean `s_hit`, otherwise an exponential of
    /// mean `s_miss + s_disk`. The broker demand in the params is ignored.
    TwoClass(ServiceParams<f64>),
}

impl ServiceModel {
    pub fn mean(&self) -> f64 {
        match self {
            ServiceModel::Exponential { mean } => *mean,
            ServiceModel::TwoClass(p) => service_time_server(p),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            ServiceModel::Exponential { mean } => exp_draw(rng, *mean),
            ServiceModel::TwoClass(p) => {
                if rng.random::<f64>() < p.hit {
                    exp_draw(rng, p.s_hit)
                } else {
                    exp_draw(rng, p.s_miss + p.s_disk)
                }
            }
        }
    }
}

fn exp_draw(rng: &mut ChaCha8Rng, mean: f64) -> f64 {
    if mean == 0.0 {
        return 0.0;
    }
    let e: f64 = Exp1.sample(rng);
    e * mean
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub p: u32,
    /// Poisson arrival rate (queries/s). Ignored by trace-driven runs.
    pub lambda: f64,
    pub service: ServiceModel,
    pub s_broker_mean: f64,
    pub correlation: CorrelationMode,
    /// Number of queries to generate.
    pub horizon: usize,
    /// Leading fraction of completions discarded before measuring.
    pub warmup_fraction: f64,
    pub seed: u64,
    /// Batches for the batch-means confidence interval.
    pub batches: usize,
}

impl SimConfig {
    pub const DEFAULT_HORIZON: usize = 200_000;
    pub const DEFAULT_WARMUP: f64 = 0.1;
    pub const DEFAULT_BATCHES: usize = 20;

    /// Independent exponential servers with the default run length.
    pub fn new(p: u32, lambda: f64, s_server_mean: f64, s_broker_mean: f64) -> Self {
        SimConfig {
            p,
            lambda,
            service: ServiceModel::Exponential { mean: s_server_mean },
            s_broker_mean,
            correlation: CorrelationMode::Independent,
            horizon: Self::DEFAULT_HORIZON,
            warmup_fraction: Self::DEFAULT_WARMUP,
            seed: 0,
            batches: Self::DEFAULT_BATCHES,
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn correlation(mut self, mode: CorrelationMode) -> Self {
        self.correlation = mode;
        self
    }

    pub fn service(mut self, service: ServiceModel) -> Self {
        self.service = service;
        self
    }

    pub fn warmup(mut self, fraction: f64) -> Self {
        self.warmup_fraction = fraction;
        self
    }

    pub fn batches(mut self, batches: usize) -> Self {
        self.batches = batches;
        self
    }

    /// Offered utilization of one index server.
    pub fn server_utilization(&self) -> f64 {
        self.lambda * self.service.mean()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |field: &'static str, reason: String| Err(SimError::InvalidConfig { field, reason });
        if self.p == 0 {
            return bad("p", "need at least one server".into());
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad("lambda", format!("must be finite and non-negative, got {}", self.lambda));
        }
        let mean = self.service.mean();
        if !(mean.is_finite() && mean >= 0.0) {
            return bad("service", format!("mean must be finite and non-negative, got {mean}"));
        }
        if let ServiceModel::TwoClass(p) = &self.service {
            p.validate().map_err(|e| SimError::InvalidConfig { field: "service", reason: e.to_string() })?;
        }
        if !(self.s_broker_mean.is_finite() && self.s_broker_mean >= 0.0) {
            return bad("s_broker_mean", format!("must be finite and non-negative, got {}", self.s_broker_mean));
        }
        if self.horizon == 0 {
            return bad("horizon", "must be positive".into());
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return bad("warmup_fraction", format!("must lie in [0, 1), got {}", self.warmup_fraction));
        }
        if self.batches < 2 {
            return bad("batches", format!("need at least 2, got {}", self.batches));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid simulation {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("trace timestamps must be non-decreasing (index {index})")]
    UnsortedTrace { index: usize },
}

/// Little's-law consistency check over the measurement window.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LittleAudit {
    /// Time-averaged number of queries in the system.
    pub mean_in_system: f64,
    /// Arrivals per second inside the window.
    pub arrival_rate: f64,
    /// Mean response time of the queries that arrived inside the window.
    pub mean_response: f64,
    /// Allowed gap between `mean_in_system` and `arrival_rate * mean_response`.
    pub tolerance: f64,
}

impl LittleAudit {
    pub fn discrepancy(&self) -> f64 {
        (self.mean_in_system - self.arrival_rate * self.mean_response).abs()
    }

    pub fn holds(&self) -> bool {
        self.discrepancy() <= self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub mean_response: f64,
    /// Half-width of the 95% batch-means confidence interval.
    pub ci_halfwidth: f64,
    pub mean_server_utilization: f64,
    /// Queries that left the system, warmup included.
    pub completed: usize,
    /// Set when the offered load makes a station unstable; the run is horizon-bounded.
    pub unstable: bool,
    pub little: LittleAudit,
}

impl SimResult {
    fn empty() -> Self {
        SimResult {
            mean_response: 0.0,
            ci_halfwidth: 0.0,
            mean_server_utilization: 0.0,
            completed: 0,
            unstable: false,
            little: LittleAudit::default(),
        }
    }

    /// Whether `value` lies inside the 95% confidence interval.
    pub fn ci_contains(&self, value: f64) -> bool {
        (value - self.mean_response).abs() <= self.ci_halfwidth
    }
}

/// Header of [`csv_row`].
pub const SIM_CSV_HEADER: &str = "p,lambda,mode,seed,mean_s,ci_s,util,completed";

/// One CSV line describing a finished run.
pub fn csv_row(config: &SimConfig, result: &SimResult) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        config.p,
        config.lambda,
        config.correlation,
        config.seed,
        result.mean_response,
        result.ci_halfwidth,
        result.mean_server_utilization,
        result.completed
    )
}

/// Runs the network with Poisson arrivals at `config.lambda`.
pub fn run(config: &SimConfig) -> Result<SimResult, SimError> {
    config.validate()?;
    let mut rng = stream(config.seed, ARRIVAL_STREAM);
    let mut t = 0.0;
    let mut arrivals = Vec::with_capacity(config.horizon);
    if config.lambda > 0.0 {
        let mean_gap = 1.0 / config.lambda;
        for _ in 0..config.horizon {
            t += exp_draw(&mut rng, mean_gap);
            arrivals.push(t);
        }
    }
    Ok(Engine::new(config).run(&arrivals))
}

/// Runs with each forked task in the hit class with probability `params.hit`.
///
/// The broker keeps `config.s_broker_mean`.
pub fn run_two_class(config: &SimConfig, params: &ServiceParams<f64>) -> Result<SimResult, SimError> {
    run(&config.clone().service(ServiceModel::TwoClass(*params)))
}

/// Drives the network from recorded arrival timestamps (milliseconds).
///
/// Time zero is the first timestamp; `config.lambda` and `config.horizon` are not used.
pub fn run_trace(config: &SimConfig, timestamps_ms: &[i64]) -> Result<SimResult, SimError> {
    let mut probe = config.clone();
    probe.horizon = probe.horizon.max(1);
    probe.validate()?;
    if let Some(i) = timestamps_ms.windows(2).position(|w| w[1] < w[0]) {
        return Err(SimError::UnsortedTrace { index: i + 1 });
    }
    let Some(&first) = timestamps_ms.first() else {
        return Ok(SimResult::empty());
    };
    let arrivals: Vec<f64> = timestamps_ms.iter().map(|&ts| (ts - first) as f64 / 1000.0).collect();
    Ok(Engine::new(config).run(&arrivals))
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Server(u32),
    Broker,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: Kind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed so the max-heap pops the earliest event; ties fall back to scheduling order.
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Default)]
struct Station {
    /// (query, service time) waiting or in service; the front is in service.
    queue: VecDeque<(usize, f64)>,
    busy_time: f64,
}

struct Engine<'a> {
    cfg: &'a SimConfig,
    events: BinaryHeap<Event>,
    seq: u64,
    servers: Vec<Station>,
    server_rngs: Vec<ChaCha8Rng>,
    broker: Station,
    broker_rng: ChaCha8Rng,
    /// Sibling tasks still running per query.
    pending: Vec<u32>,
    departures: Vec<f64>,
    /// Query ids in completion order.
    completion_order: Vec<usize>,
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a SimConfig) -> Self {
        let p = cfg.p as usize;
        Engine {
            cfg,
            events: BinaryHeap::new(),
            seq: 0,
            servers: (0..p).map(|_| Station::default()).collect(),
            server_rngs: (0..p as u64).map(|i| stream(cfg.seed, FIRST_SERVER_STREAM + i)).collect(),
            broker: Station::default(),
            broker_rng: stream(cfg.seed, BROKER_STREAM),
            pending: Vec::new(),
            departures: Vec::new(),
            completion_order: Vec::new(),
        }
    }

    fn schedule(&mut self, time: f64, kind: Kind) {
        self.seq += 1;
        self.events.push(Event { time, seq: self.seq, kind });
    }

    fn run(mut self, arrivals: &[f64]) -> SimResult {
        let n = arrivals.len();
        if n == 0 {
            return SimResult::empty();
        }
        self.pending = vec![self.cfg.p; n];
        self.departures = vec![f64::NAN; n];
        self.completion_order.reserve(n);

        let mut next = 0;
        loop {
            let next_event = self.events.peek().map(|e| e.time);
            let take_arrival = match (arrivals.get(next), next_event) {
                (Some(&a), Some(e)) => a <= e,
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (None, None) => break,
            };
            if take_arrival {
                self.fork(next, arrivals[next]);
                next += 1;
            } else {
                let ev = self.events.pop().expect("peeked event");
                match ev.kind {
                    Kind::Server(i) => self.server_done(i as usize, ev.time),
                    Kind::Broker => self.broker_done(ev.time),
                }
            }
        }
        self.summarize(arrivals)
    }

    fn fork(&mut self, query: usize, now: f64) {
        let shared = match self.cfg.correlation {
            CorrelationMode::Identical => Some(self.cfg.service.draw(&mut self.server_rngs[0])),
            CorrelationMode::Independent => None,
        };
        for i in 0..self.servers.len() {
            let s = match shared {
                Some(s) => s,
                None => self.cfg.service.draw(&mut self.server_rngs[i]),
            };
            self.servers[i].queue.push_back((query, s));
            if self.servers[i].queue.len() == 1 {
                self.servers[i].busy_time += s;
                self.schedule(now + s, Kind::Server(i as u32));
            }
        }
    }

    fn server_done(&mut self, i: usize, now: f64) {
        let (query, _) = self.servers[i].queue.pop_front().expect("completion at a busy server");
        if let Some(&(_, s)) = self.servers[i].queue.front() {
            self.servers[i].busy_time += s;
            self.schedule(now + s, Kind::Server(i as u32));
        }
        self.pending[query] -= 1;
        if self.pending[query] == 0 {
            let s = exp_draw(&mut self.broker_rng, self.cfg.s_broker_mean);
            self.broker.queue.push_back((query, s));
            if self.broker.queue.len() == 1 {
                self.broker.busy_time += s;
                self.schedule(now + s, Kind::Broker);
            }
        }
    }

    fn broker_done(&mut self, now: f64) {
        let (query, _) = self.broker.queue.pop_front().expect("completion at a busy broker");
        if let Some(&(_, s)) = self.broker.queue.front() {
            self.broker.busy_time += s;
            self.schedule(now + s, Kind::Broker);
        }
        self.departures[query] = now;
        self.completion_order.push(query);
    }

    fn summarize(&self, arrivals: &[f64]) -> SimResult {
        let n = arrivals.len();
        let warm = ((self.cfg.warmup_fraction * n as f64).floor() as usize).min(n - 1);
        let kept: Vec<f64> =
            self.completion_order[warm..].iter().map(|&q| self.departures[q] - arrivals[q]).collect();
        let mean_response = mean(&kept);
        let ci_halfwidth = batch_means_halfwidth(&kept, self.cfg.batches);

        let makespan = self.departures.iter().copied().fold(0.0, f64::max) - arrivals[0];
        let util = if makespan > 0.0 {
            let busy: f64 = self.servers.iter().map(|s| s.busy_time).sum();
            (busy / (self.servers.len() as f64 * makespan)).min(1.0)
        } else {
            0.0
        };

        let lambda_eff = if arrivals.len() > 1 {
            (n - 1) as f64 / (arrivals[n - 1] - arrivals[0]).max(f64::MIN_POSITIVE)
        } else {
            0.0
        };
        let unstable = lambda_eff * self.cfg.service.mean() >= 1.0 || lambda_eff * self.cfg.s_broker_mean >= 1.0;

        SimResult {
            mean_response,
            ci_halfwidth,
            mean_server_utilization: util,
            completed: self.completion_order.len(),
            unstable,
            little: self.little_audit(arrivals, warm, ci_halfwidth),
        }
    }

    /// Window from the first post-warmup arrival to the last arrival.
    fn little_audit(&self, arrivals: &[f64], warm: usize, ci: f64) -> LittleAudit {
        let (t0, t1) = (arrivals[warm], arrivals[arrivals.len() - 1]);
        let span = t1 - t0;
        if span <= 0.0 {
            return LittleAudit::default();
        }
        let mut area = 0.0;
        let mut count = 0usize;
        let mut sojourn = 0.0;
        for (q, &a) in arrivals.iter().enumerate() {
            let d = self.departures[q];
            area += (d.min(t1) - a.max(t0)).max(0.0);
            if a >= t0 {
                count += 1;
                sojourn += d - a;
            }
        }
        let arrival_rate = count as f64 / span;
        LittleAudit {
            mean_in_system: area / span,
            arrival_rate,
            mean_response: sojourn / count as f64,
            tolerance: arrival_rate * ci,
        }
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// 95% Student-t half-width over `batches` contiguous batch means.
///
/// Falls back to individual observations when there are too few for the batches.
fn batch_means_halfwidth(xs: &[f64], batches: usize) -> f64 {
    let size = xs.len() / batches;
    let means: Vec<f64> = if size >= 2 {
        xs.chunks_exact(size).take(batches).map(mean).collect()
    } else {
        xs.to_vec()
    };
    let k = means.len();
    if k < 2 {
        return 0.0;
    }
    let m = mean(&means);
    let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (k - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (k - 1) as f64).expect("positive degrees of freedom").inverse_cdf(0.975);
    t * (var / k as f64).sqrt()
}
