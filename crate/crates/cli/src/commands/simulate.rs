use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use fjcap::model::{response_bounds, service_time_server, Workload};
use fjcap::simulator::{self, csv_row, CorrelationMode, ServiceModel, SimConfig, SimResult, SIM_CSV_HEADER};
use fjcap::workload::parse_log;

use super::Saturated;
use crate::args::ModelArgs;
use crate::table::{num, Table};
use crate::Ctx;

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    /// Seed of the first replication; replication i uses seed + i.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    /// Number of independent replications.
    #[arg(long, default_value_t = 10)]
    pub replications: u64,

    /// Queries generated per replication.
    #[arg(long, default_value_t = SimConfig::DEFAULT_HORIZON)]
    pub horizon: usize,

    /// Service-time correlation across index servers: independent or identical.
    #[arg(long, default_value = "independent")]
    pub mode: CorrelationModeArg,

    /// Draw server demands from the hit/miss classes instead of one exponential.
    #[arg(long)]
    pub two_class: bool,

    /// Replay arrival times from a query log instead of Poisson arrivals.
    #[arg(long, value_name = "PATH")]
    pub trace: Option<PathBuf>,
}

/// Clap-facing wrapper so the mode round-trips through the manifest as text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CorrelationModeArg(pub CorrelationMode);

impl std::str::FromStr for CorrelationModeArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(CorrelationModeArg)
    }
}

impl TryFrom<String> for CorrelationModeArg {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<CorrelationModeArg> for String {
    fn from(m: CorrelationModeArg) -> Self {
        m.0.name().to_owned()
    }
}

pub fn run(args: &SimulateArgs, ctx: &mut Ctx) -> Result<()> {
    let r = args.model.resolve()?;
    ctx.manifest.resolved = r.to_json();
    ctx.manifest.inputs = args.model.inputs();
    let s_server = service_time_server(&r.params);
    let service = if args.two_class {
        ServiceModel::TwoClass(r.params)
    } else {
        ServiceModel::Exponential { mean: s_server }
    };

    let trace = match &args.trace {
        Some(path) => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let parsed = parse_log(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
            ctx.manifest.inputs.push(path.display().to_string());
            Some(parsed.log.timestamps())
        }
        None => None,
    };
    let lambda = match &trace {
        Some(ts) => trace_rate(ts),
        None => r.lambda()?,
    };
    if trace.is_none() {
        let worst = lambda * s_server.max(r.params.s_broker);
        if worst >= 1.0 {
            return Err(Saturated(format!("arrival rate {lambda} q/s saturates the cluster (utilization {worst:.4})")).into());
        }
    }

    let base = SimConfig::new(r.cluster.p, lambda, s_server, r.params.s_broker)
        .service(service)
        .horizon(args.horizon)
        .correlation(args.mode.0);
    let seeds: Vec<u64> = (0..args.replications.max(1)).map(|i| args.seed.wrapping_add(i)).collect();
    ctx.manifest.seeds = seeds.clone();

    let results: Vec<Result<(SimConfig, SimResult)>> = ctx.pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let cfg = base.clone().seed(seed);
                let res = match &trace {
                    Some(ts) => simulator::run_trace(&cfg, ts)?,
                    None => simulator::run(&cfg)?,
                };
                Ok((cfg, res))
            })
            .collect()
    });

    let mut csv = format!("{SIM_CSV_HEADER}\n");
    let mut table = Table::new(&["seed", "mean_s", "ci_s", "util", "completed", "little_ok"]);
    for res in results {
        let (cfg, out) = res?;
        csv.push_str(&csv_row(&cfg, &out));
        csv.push('\n');
        table.push([
            cfg.seed.to_string(),
            num(out.mean_response),
            num(out.ci_halfwidth),
            num(out.mean_server_utilization),
            out.completed.to_string(),
            out.little.holds().to_string(),
        ]);
    }
    ctx.write("sim.csv", &csv)?;
    ctx.print(&table);

    if let Ok(bounds) = response_bounds(&r.cluster, &r.params, &Workload::new(lambda)?) {
        let mut b = Table::new(&["lambda", "r_lower_s", "r_upper_s"]);
        b.push([num(lambda), num(bounds.r_lower), num(bounds.r_upper)]);
        ctx.write("bounds.csv", &b.csv())?;
        ctx.print(&b);
    }
    Ok(())
}

fn trace_rate(ts: &[i64]) -> f64 {
    match (ts.first(), ts.last()) {
        (Some(a), Some(b)) if b > a => (ts.len() - 1) as f64 * 1000.0 / (b - a) as f64,
        _ => 0.0,
    }
}
