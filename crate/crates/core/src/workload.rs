//! Query-log ingestion and characterization: load binning, folding, interarrival
//! extraction, busiest-hour selection, query lengths and popularity concentration.
//!
//! Logs are TSV, one query per line: `epoch_ms<TAB>query text`. Query text is lowercased and
//! split on whitespace. A query's identity for popularity purposes is its terms joined by a
//! single space.

use std::collections::HashMap;
use std::io::{self, BufRead, Write};

pub const MINUTE_MS: i64 = 60_000;
pub const HOUR_MS: i64 = 60 * MINUTE_MS;
pub const DAY_MS: i64 = 24 * HOUR_MS;
pub const WEEK_MS: i64 = 7 * DAY_MS;

/// Sunday 1970-01-04 00:00 UTC; weekly windows are aligned to it.
const SUNDAY_EPOCH_MS: i64 = 3 * DAY_MS;

#[derive(Debug, thiserror::Error)]
pub enum WorkloadError {
    #[error("log contains no parseable lines ({malformed} malformed)")]
    EmptyLog { malformed: usize },
    #[error("need at least 2 records in [{start}, {end}), found {found}")]
    TooFewRecords { start: i64, end: i64, found: usize },
    #[error("log spans {span_ms} ms, shorter than one hour")]
    SpanTooShort { span_ms: i64 },
    #[error("invalid {name}: {reason}")]
    InvalidInput { name: &'static str, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryRecord {
    pub timestamp_ms: i64,
    /// Lowercased, non-empty terms in query order.
    pub terms: Vec<String>,
}

impl QueryRecord {
    /// Normalized query string used as the popularity key.
    pub fn key(&self) -> String {
        self.terms.join(" ")
    }
}

/// Query records sorted by timestamp.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct QueryLog {
    records: Vec<QueryRecord>,
}

impl QueryLog {
    /// Sorts the records by timestamp (stably) and drops term-less ones.
    pub fn from_records(mut records: Vec<QueryRecord>) -> Self {
        records.retain(|r| !r.terms.is_empty());
        records.sort_by_key(|r| r.timestamp_ms);
        QueryLog { records }
    }

    pub fn records(&self) -> &[QueryRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// First and last timestamps.
    pub fn span(&self) -> Option<(i64, i64)> {
        Some((self.records.first()?.timestamp_ms, self.records.last()?.timestamp_ms))
    }

    pub fn timestamps(&self) -> Vec<i64> {
        self.records.iter().map(|r| r.timestamp_ms).collect()
    }

    /// Records with `start <= t < end`.
    pub fn window(&self, start: i64, end: i64) -> &[QueryRecord] {
        let lo = self.records.partition_point(|r| r.timestamp_ms < start);
        let hi = self.records.partition_point(|r| r.timestamp_ms < end);
        &self.records[lo..hi.max(lo)]
    }

    /// Writes the log back out as TSV.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> io::Result<()> {
        for r in &self.records {
            writeln!(out, "{}\t{}", r.timestamp_ms, r.key())?;
        }
        Ok(())
    }
}

/// A parsed log plus the count of lines that were skipped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedLog {
    pub log: QueryLog,
    pub malformed: usize,
}

/// Reads a TSV log. Blank lines are ignored; unparseable lines are counted, not fatal.
pub fn parse_log<R: BufRead>(source: R) -> Result<ParsedLog, WorkloadError> {
    let mut records = Vec::new();
    let mut malformed = 0;
    for line in source.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line) {
            Some(r) => records.push(r),
            None => malformed += 1,
        }
    }
    if records.is_empty() {
        return Err(WorkloadError::EmptyLog { malformed });
    }
    Ok(ParsedLog { log: QueryLog::from_records(records), malformed })
}

fn parse_line(line: &str) -> Option<QueryRecord> {
    let (ts, text) = line.split_once('\t')?;
    let timestamp_ms = ts.trim().parse().ok()?;
    let terms: Vec<String> = text.split_whitespace().map(str::to_lowercase).collect();
    if terms.is_empty() {
        return None;
    }
    Some(QueryRecord { timestamp_ms, terms })
}

/// Per-bin arrival counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadSeries {
    pub start_ms: i64,
    pub bin_width_ms: i64,
    pub counts: Vec<u64>,
}

impl LoadSeries {
    pub const CSV_HEADER: &'static str = "bin_start_ms,count";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for (i, c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{},{}\n", self.start_ms + i as i64 * self.bin_width_ms, c));
        }
        out
    }

    /// Mean arrival rate (queries/s) over the bins.
    pub fn mean_rate(&self) -> f64 {
        if self.counts.is_empty() {
            return 0.0;
        }
        let total: u64 = self.counts.iter().sum();
        total as f64 / (self.counts.len() as f64 * self.bin_width_ms as f64 / 1000.0)
    }
}

/// Counts arrivals in consecutive bins starting at the first timestamp.
pub fn bin_load(log: &QueryLog, bin_width_ms: i64) -> Result<LoadSeries, WorkloadError> {
    if bin_width_ms <= 0 {
        return Err(WorkloadError::InvalidInput { name: "bin_width", reason: format!("must be positive, got {bin_width_ms}") });
    }
    let Some((first, last)) = log.span() else {
        return Ok(LoadSeries { start_ms: 0, bin_width_ms, counts: Vec::new() });
    };
    let bins = ((last - first) / bin_width_ms + 1) as usize;
    let mut counts = vec![0u64; bins];
    for r in log.records() {
        counts[((r.timestamp_ms - first) / bin_width_ms) as usize] += 1;
    }
    Ok(LoadSeries { start_ms: first, bin_width_ms, counts })
}

/// Folding window and its anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FoldSpec {
    pub window_ms: i64,
    pub origin_ms: i64,
}

impl FoldSpec {
    pub fn new(window_ms: i64, origin_ms: i64) -> Result<Self, WorkloadError> {
        if window_ms <= 0 {
            return Err(WorkloadError::InvalidInput { name: "window", reason: format!("must be positive, got {window_ms}") });
        }
        Ok(FoldSpec { window_ms, origin_ms })
    }

    /// Window anchored at the last Sunday-00:00-aligned boundary at or before the first
    /// timestamp of `log` (epoch time, UTC).
    pub fn aligned(window_ms: i64, log: &QueryLog) -> Result<Self, WorkloadError> {
        let first = log.span().map_or(0, |(f, _)| f);
        Self::new(window_ms, align_down(first, window_ms))
    }

    /// Parses `1d`, `1w`, `4w` style windows (also `h` for hours).
    pub fn parse_window(text: &str) -> Result<i64, WorkloadError> {
        let bad = || WorkloadError::InvalidInput { name: "window", reason: format!("expected e.g. 1d, 1w, 4w; got {text:?}") };
        let text = text.trim();
        let split = text.find(|c: char| !c.is_ascii_digit()).ok_or_else(bad)?;
        let (num, unit) = text.split_at(split);
        let n: i64 = num.parse().map_err(|_| bad())?;
        let unit_ms = match unit {
            "h" => HOUR_MS,
            "d" => DAY_MS,
            "w" => WEEK_MS,
            _ => return Err(bad()),
        };
        if n <= 0 {
            return Err(bad());
        }
        Ok(n * unit_ms)
    }
}

fn align_down(t: i64, window_ms: i64) -> i64 {
    SUNDAY_EPOCH_MS + (t - SUNDAY_EPOCH_MS).div_euclid(window_ms) * window_ms
}

/// A folded log and how much its arrival rate was boosted.
#[derive(Debug, Clone, PartialEq)]
pub struct Folded {
    pub log: QueryLog,
    /// Original span divided by the window length.
    pub boost: f64,
}

/// Overlays every window of the log onto the first: `t ↦ origin + (t − origin) mod window`.
pub fn fold(log: &QueryLog, spec: &FoldSpec) -> Folded {
    let records = log
        .records()
        .iter()
        .map(|r| QueryRecord {
            timestamp_ms: spec.origin_ms + (r.timestamp_ms - spec.origin_ms).rem_euclid(spec.window_ms),
            terms: r.terms.clone(),
        })
        .collect();
    let span = log.span().map_or(0, |(a, b)| b - a);
    Folded { log: QueryLog::from_records(records), boost: span as f64 / spec.window_ms as f64 }
}

/// Gaps between consecutive arrivals in `[start, end)`, in seconds.
pub fn interarrivals(log: &QueryLog, start: i64, end: i64) -> Result<Vec<f64>, WorkloadError> {
    let recs = log.window(start, end);
    if recs.len() < 2 {
        return Err(WorkloadError::TooFewRecords { start, end, found: recs.len() });
    }
    Ok(recs.windows(2).map(|w| (w[1].timestamp_ms - w[0].timestamp_ms) as f64 / 1000.0).collect())
}

/// Interarrival gaps over the whole log.
pub fn all_interarrivals(log: &QueryLog) -> Result<Vec<f64>, WorkloadError> {
    let (first, last) = log.span().ok_or(WorkloadError::TooFewRecords { start: 0, end: 0, found: 0 })?;
    interarrivals(log, first, last + 1)
}

/// The clock-aligned hour with the most arrivals, earliest on ties, as `[start, end)`.
pub fn busiest_hour(log: &QueryLog) -> Result<(i64, i64), WorkloadError> {
    let (first, last) = log.span().ok_or(WorkloadError::SpanTooShort { span_ms: 0 })?;
    if last - first < HOUR_MS {
        return Err(WorkloadError::SpanTooShort { span_ms: last - first });
    }
    let mut best = (i64::MIN, 0usize);
    let recs = log.records();
    let mut i = 0;
    while i < recs.len() {
        let hour = recs[i].timestamp_ms.div_euclid(HOUR_MS);
        let j = i + recs[i..].partition_point(|r| r.timestamp_ms.div_euclid(HOUR_MS) == hour);
        if j - i > best.1 {
            best = (hour, j - i);
        }
        i = j;
    }
    Ok((best.0 * HOUR_MS, (best.0 + 1) * HOUR_MS))
}

/// Query length summary. `histogram` holds the fractions of 1-, 2- and ≥3-term queries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengthStats {
    pub mean: f64,
    pub median: f64,
    pub histogram: [f64; 3],
}

pub fn query_length_stats(log: &QueryLog) -> Result<LengthStats, WorkloadError> {
    if log.is_empty() {
        return Err(WorkloadError::InvalidInput { name: "log", reason: "empty".into() });
    }
    let mut lens: Vec<usize> = log.records().iter().map(|r| r.terms.len()).collect();
    lens.sort_unstable();
    let n = lens.len();
    let mean = lens.iter().sum::<usize>() as f64 / n as f64;
    let median = if n % 2 == 1 { lens[n / 2] as f64 } else { (lens[n / 2 - 1] + lens[n / 2]) as f64 / 2.0 };
    let mut histogram = [0.0; 3];
    for &l in &lens {
        histogram[l.clamp(1, 3) - 1] += 1.0;
    }
    histogram.iter_mut().for_each(|h| *h /= n as f64);
    Ok(LengthStats { mean, median, histogram })
}

/// Query frequencies keyed by normalized query string.
pub fn query_counts(log: &QueryLog) -> HashMap<String, u64> {
    let mut counts = HashMap::new();
    for r in log.records() {
        *counts.entry(r.key()).or_insert(0) += 1;
    }
    counts
}

/// Share of all submissions covered by the most frequent `top_fraction` of unique queries.
///
/// At least one unique query is always counted.
pub fn popularity_concentration(log: &QueryLog, top_fraction: f64) -> Result<f64, WorkloadError> {
    if !(top_fraction > 0.0 && top_fraction <= 1.0) {
        return Err(WorkloadError::InvalidInput { name: "top_fraction", reason: format!("must lie in (0, 1], got {top_fraction}") });
    }
    if log.is_empty() {
        return Ok(0.0);
    }
    let mut counts: Vec<u64> = query_counts(log).into_values().collect();
    counts.sort_unstable_by(|a, b| b.cmp(a));
    // The epsilon keeps e.g. 0.1 * 100 from rounding up to 11.
    let top = ((top_fraction * counts.len() as f64 - 1e-9).ceil() as usize).clamp(1, counts.len());
    let covered: u64 = counts[..top].iter().sum();
    Ok(covered as f64 / log.len() as f64)
}
