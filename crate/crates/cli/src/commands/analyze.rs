use anyhow::Result;
use clap::Args;
use serde::{Deserialize, Serialize};

use fjcap::model::{response_bounds, response_with_result_cache, Workload};

use super::{report_row, REPORT_HEADER};
use crate::args::ModelArgs;
use crate::table::Table;
use crate::Ctx;

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
}

pub fn run(args: &AnalyzeArgs, ctx: &mut Ctx) -> Result<()> {
    let r = args.model.resolve()?;
    ctx.manifest.resolved = r.to_json();
    ctx.manifest.inputs = args.model.inputs();
    let load = Workload::new(r.lambda()?)?;
    let report = response_bounds(&r.cluster, &r.params, &load)?;
    let cached = r.cache.map(|c| response_with_result_cache(&r.cluster, &r.params, &load, &c)).transpose()?;

    let mut table = Table::new(&REPORT_HEADER);
    report_row(&mut table, &report, cached);
    ctx.write("report.csv", &table.csv())?;
    ctx.print(&table);
    Ok(())
}
