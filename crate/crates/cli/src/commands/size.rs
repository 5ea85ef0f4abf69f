use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use fjcap::scenario::{max_rate_under_slo, replicas_needed, upper_bound};

use crate::args::ModelArgs;
use crate::table::{num, Table};
use crate::Ctx;

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SizeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
}

pub fn run(args: &SizeArgs, ctx: &mut Ctx) -> Result<()> {
    let r = args.model.resolve()?;
    ctx.manifest.resolved = r.to_json();
    ctx.manifest.inputs = args.model.inputs();
    let slo = r.slo.context("no objective: pass --slo-ms and --total-rate or add an [slo] section")?;
    let cache = r.cache.as_ref();

    let rate = max_rate_under_slo(&r.cluster, &r.params, &slo, cache)?;
    let at_max = upper_bound(&r.cluster, &r.params, f64::from(rate), cache)?;
    let replicas = replicas_needed(slo.total_rate, f64::from(rate))?;

    let mut table =
        Table::new(&["p", "slo_s", "max_rate", "r_upper_at_max_s", "total_rate", "replicas", "result_cache"]);
    table.push([
        r.cluster.p.to_string(),
        num(slo.max_mean_response),
        rate.to_string(),
        num(at_max),
        num(slo.total_rate),
        replicas.to_string(),
        cache.is_some().to_string(),
    ]);
    ctx.write("size.csv", &table.csv())?;
    ctx.print(&table);
    Ok(())
}
