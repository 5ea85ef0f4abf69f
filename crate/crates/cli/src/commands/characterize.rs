use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use fjcap::statfit::{self, RankedFit};
use fjcap::workload::{
    bin_load, busiest_hour, fold, interarrivals, parse_log, popularity_concentration, query_length_stats, FoldSpec,
    QueryLog, MINUTE_MS,
};

use crate::table::{num, Table};
use crate::Ctx;

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CharacterizeArgs {
    /// Query log: one `epoch_ms<TAB>query` record per line.
    #[arg(long, value_name = "PATH", required_unless_present = "samples")]
    pub log: Option<PathBuf>,

    /// Fit distributions to a plain sample (one value per line, seconds) instead.
    #[arg(long, value_name = "PATH", conflicts_with = "log")]
    pub samples: Option<PathBuf>,

    /// Folding window: 1d, 1w or 4w (any Nh, Nd, Nw).
    #[arg(long, default_value = "1w")]
    pub window: String,

    /// Bin width of the load series, in minutes.
    #[arg(long, default_value_t = 60)]
    pub bin_minutes: i64,

    /// Also fit Zipf laws without the tail of queries seen only once.
    #[arg(long)]
    pub zipf_cutoff: bool,
}

pub fn run(args: &CharacterizeArgs, ctx: &mut Ctx) -> Result<()> {
    if let Some(path) = &args.samples {
        ctx.manifest.inputs.push(path.display().to_string());
        let sample = read_samples(path)?;
        return write_fits(ctx, &sample);
    }
    let path = args.log.as_ref().context("--log is required")?;
    ctx.manifest.inputs.push(path.display().to_string());
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let parsed = parse_log(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
    let log = parsed.log;
    let window = FoldSpec::parse_window(&args.window)?;
    let bin = args.bin_minutes * MINUTE_MS;
    ctx.manifest.resolved = serde_json::json!({ "window_ms": window, "bin_ms": bin, "zipf_cutoff": args.zipf_cutoff });

    ctx.write("load.csv", &bin_load(&log, bin)?.to_csv())?;
    let folded = fold(&log, &FoldSpec::aligned(window, &log)?);
    let mut tsv = Vec::new();
    folded.log.write_tsv(&mut tsv)?;
    ctx.write("folded.tsv", std::str::from_utf8(&tsv)?)?;
    ctx.write("folded_load.csv", &bin_load(&folded.log, bin)?.to_csv())?;

    let (start, end) = busiest_hour(&folded.log)?;
    let in_hour = folded.log.window(start, end).len();
    // Arrivals sharing a millisecond give zero gaps, outside every candidate's support.
    let mut gaps = interarrivals(&folded.log, start, end)?;
    let all_gaps = gaps.len();
    gaps.retain(|&g| g > 0.0);
    write_fits(ctx, &gaps)?;

    let mut zipf = Table::new(&["items", "alpha", "r_squared", "min_rank", "max_rank", "tail_excluded"]);
    let queries: Vec<String> = log.records().iter().map(|r| r.key()).collect();
    let terms: Vec<&str> = log.records().iter().flat_map(|r| r.terms.iter().map(String::as_str)).collect();
    for (name, ranked) in [("queries", statfit::rank_frequencies(&queries)), ("terms", statfit::rank_frequencies(&terms))] {
        let mut csv = String::from("rank,count\n");
        for (r, c) in &ranked {
            writeln!(csv, "{r},{c}")?;
        }
        ctx.write(&format!("{name}_ranks.csv"), &csv)?;
        let cutoff = if args.zipf_cutoff { statfit::singleton_cutoff(&ranked) } else { None };
        let report = statfit::zipf_report(&ranked, cutoff).with_context(|| format!("zipf fit of {name}"))?;
        for (fit, truncated) in std::iter::once((report.full, false)).chain(report.truncated.map(|t| (t, true))) {
            zipf.push([
                name.to_owned(),
                num(fit.alpha),
                num(fit.r_squared),
                fit.rank_range.0.to_string(),
                fit.rank_range.1.to_string(),
                truncated.to_string(),
            ]);
        }
    }
    ctx.write("zipf.csv", &zipf.csv())?;

    let lengths = query_length_stats(&log)?;
    let mut stats = Table::new(&["metric", "value"]);
    let (first, last) = log.span().unwrap_or_default();
    let rows: Vec<(&str, String)> = vec![
        ("records", log.len().to_string()),
        ("malformed_lines", parsed.malformed.to_string()),
        ("first_ms", first.to_string()),
        ("last_ms", last.to_string()),
        ("mean_rate_qps", num(mean_rate(&log))),
        ("fold_window_ms", window.to_string()),
        ("fold_boost", num(folded.boost)),
        ("folded_mean_rate_qps", num(mean_rate_over(&folded.log, window))),
        ("busiest_hour_start_ms", start.to_string()),
        ("busiest_hour_queries", in_hour.to_string()),
        ("busiest_hour_rate_qps", num(in_hour as f64 / 3600.0)),
        ("zero_gaps_dropped", (all_gaps - gaps.len()).to_string()),
        ("unique_queries", queries_unique(&log).to_string()),
        ("mean_terms", num(lengths.mean)),
        ("median_terms", num(lengths.median)),
        ("share_1_term", num(lengths.histogram[0])),
        ("share_2_terms", num(lengths.histogram[1])),
        ("share_3plus_terms", num(lengths.histogram[2])),
        ("top_1pct_query_share", num(popularity_concentration(&log, 0.01)?)),
    ];
    for (k, v) in rows {
        stats.push([k.to_owned(), v]);
    }
    ctx.write("stats.csv", &stats.csv())?;
    ctx.print(&stats);
    ctx.print(&zipf);
    Ok(())
}

fn write_fits(ctx: &mut Ctx, sample: &[f64]) -> Result<()> {
    let ranked: Vec<RankedFit> = statfit::select_model(sample)?;
    let csv = statfit::fits_to_csv(&ranked);
    ctx.write("fits.csv", &csv)?;
    let ok: Vec<_> = ranked.iter().filter_map(|r| r.outcome.as_ref().ok().copied()).collect();
    ctx.write("cdf_overlay.csv", &statfit::cdf_overlay_csv(sample, &ok))?;
    ctx.print(&Table::from_csv(&csv));
    Ok(())
}

fn read_samples(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| l.trim().parse::<f64>().with_context(|| format!("{}:{}: not a number: {l:?}", path.display(), i + 1)))
        .collect()
}

fn mean_rate(log: &QueryLog) -> f64 {
    match log.span() {
        Some((a, b)) if b > a => log.len() as f64 * 1000.0 / (b - a) as f64,
        _ => 0.0,
    }
}

fn mean_rate_over(log: &QueryLog, window_ms: i64) -> f64 {
    log.len() as f64 * 1000.0 / window_ms as f64
}

fn queries_unique(log: &QueryLog) -> usize {
    fjcap::workload::query_counts(log).len()
}
