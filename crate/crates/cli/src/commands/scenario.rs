use anyhow::{Context, Result};
use clap::Args;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use fjcap::model::{response_bounds, service_time_server, ServiceParams, Workload};
use fjcap::scenario::presets::{self, case_study, case_study_scenarios, CaseStudyRow, Preset, UpgradePoint};
use fjcap::scenario::{apply_scaling, sweep, ScalingSpec, SweepResult};

use crate::args::{ModelArgs, Resolved};
use crate::table::{num, Table};
use crate::Ctx;

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ScenarioArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    /// First arrival rate of the sweep.
    #[arg(long, default_value_t = 1.0)]
    pub from: f64,

    /// End of the sweep (exclusive). Defaults to the saturation rate.
    #[arg(long)]
    pub to: Option<f64>,

    /// Sweep step, queries per second.
    #[arg(long, default_value_t = 1.0)]
    pub step: f64,

    /// Run the six-scenario upgrade study (implied by --preset paper-case-study).
    #[arg(long)]
    pub case_study: bool,

    /// Largest speedup in the upgrade grid.
    #[arg(long, default_value_t = 10)]
    pub max_speedup: u32,
}

fn saturation_rate(p: &ServiceParams<f64>) -> f64 {
    1.0 / service_time_server(p).max(p.s_broker)
}

fn run_sweep(args: &ScenarioArgs, r: &Resolved, params: &ServiceParams<f64>) -> Result<SweepResult<f64>> {
    let to = args.to.unwrap_or_else(|| saturation_rate(params));
    Ok(sweep(&r.cluster, params, args.from, to, args.step)?)
}

pub fn run(args: &ScenarioArgs, ctx: &mut Ctx) -> Result<()> {
    let r = args.model.resolve()?;
    ctx.manifest.resolved = r.to_json();
    ctx.manifest.inputs = args.model.inputs();
    if args.case_study || r.preset == Some(Preset::PaperCaseStudy) {
        return run_case_study(args, &r, ctx);
    }

    let result = run_sweep(args, &r, &r.params)?;
    ctx.write("sweep.csv", &result.to_csv())?;

    // Gain of the configured upgrade over the unscaled profile.
    let spec = r.file.scaling_spec()?;
    let base = apply_scaling(&r.file.params, &ScalingSpec::identity(spec.profile.clone()))?;
    let mut table = Table::from_csv(&result.to_csv());
    if base != r.params {
        if let Some(lambda) = r.lambda {
            let load = Workload::new(lambda)?;
            let before = response_bounds(&r.cluster, &base, &load)?;
            let after = response_bounds(&r.cluster, &r.params, &load)?;
            let mut gain = Table::new(&["lambda", "r_upper_base_s", "r_upper_s", "gain"]);
            gain.push([num(lambda), num(before.r_upper), num(after.r_upper), num(before.r_upper / after.r_upper)]);
            ctx.write("gain.csv", &gain.csv())?;
            table = gain;
        }
    }
    ctx.print(&table);
    Ok(())
}

fn run_case_study(args: &ScenarioArgs, r: &Resolved, ctx: &mut Ctx) -> Result<()> {
    let table = &r.file.params;
    let slo = r.slo.unwrap_or_else(presets::case_study_slo);
    let lambda = r.lambda.unwrap_or(4.0);
    let fixed = r.file.scaling.as_ref().is_some_and(|s| s.broker_cpu_fixed);
    let rows = case_study(&r.cluster, table, &slo, lambda, fixed).context("case study")?;

    let mut summary = String::from(CaseStudyRow::<f64>::CSV_HEADER);
    summary.push('\n');
    for row in &rows {
        summary.push_str(&row.csv_line());
        summary.push('\n');
    }
    ctx.write("case_study.csv", &summary)?;

    let cache = r.cache.unwrap_or_else(presets::result_cache);
    let speedups: Vec<f64> = (1..=args.max_speedup.max(1)).map(f64::from).collect();
    let grid = presets::upgrade_grid(&r.cluster, table, lambda, &speedups, &cache)?;
    let mut grid_csv = String::from(UpgradePoint::<f64>::CSV_HEADER);
    grid_csv.push('\n');
    for point in &grid {
        grid_csv.push_str(&point.csv_line());
        grid_csv.push('\n');
    }
    ctx.write("upgrade_grid.csv", &grid_csv)?;

    // The sweep format has no cached column, so cached scenarios get none.
    let scenarios: Vec<_> = case_study_scenarios::<f64>().into_iter().filter(|sc| sc.cache.is_none()).collect();
    let sweeps: Vec<Result<String>> = ctx.pool.install(|| {
        scenarios
            .par_iter()
            .map(|sc| {
                let params = apply_scaling(table, &sc.scaling.clone().broker_cpu_fixed(fixed))?;
                Ok(run_sweep(args, r, &params)?.to_csv())
            })
            .collect()
    });
    for (sc, csv) in scenarios.iter().zip(sweeps) {
        ctx.write(&sweep_file(sc.label), &csv?)?;
    }

    let mut shown = Table::new(&["scenario", "r_upper_at_compare_s", "gain", "max_rate", "replicas"]);
    for row in &rows {
        shown.push([
            row.label.to_owned(),
            num(row.r_upper_at_compare),
            num(row.gain),
            row.max_rate.map(|v| v.to_string()).unwrap_or_else(|| "infeasible".into()),
            row.replicas.map(|v| v.to_string()).unwrap_or_default(),
        ]);
    }
    ctx.print(&shown);
    Ok(())
}

/// `baseline` -> `sweep_baseline.csv`, `4: memory+CPUs+disks` -> `sweep_scenario4.csv`.
fn sweep_file(label: &str) -> String {
    match label.split_once(':') {
        Some((n, _)) => format!("sweep_scenario{n}.csv"),
        None => format!("sweep_{label}.csv"),
    }
}
