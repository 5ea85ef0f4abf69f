//! Checks against the published TodoBR log statistics. The log is not redistributable, so
//! these are ignored by default:
//!
//! ```sh
//! FJCAP_TODOBR_LOG=/data/todobr.tsv cargo test -p fjcap --test todobr -- --ignored
//! ```

use std::fs::File;
use std::io::BufReader;
use std::sync::OnceLock;

use fjcap::statfit::{self, RankRange};
use fjcap::workload::{
    busiest_hour, fold, parse_log, popularity_concentration, query_length_stats, FoldSpec, QueryLog, DAY_MS, WEEK_MS,
};

fn log() -> &'static QueryLog {
    static LOG: OnceLock<QueryLog> = OnceLock::new();
    LOG.get_or_init(|| {
        let path = std::env::var("FJCAP_TODOBR_LOG").expect("set FJCAP_TODOBR_LOG to the TodoBR query log");
        let file = File::open(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
        parse_log(BufReader::new(file)).unwrap().log
    })
}

fn folded() -> QueryLog {
    let log = log();
    fold(log, &FoldSpec::aligned(WEEK_MS, log).unwrap()).log
}

fn within(actual: f64, expected: f64, rel: f64) -> bool {
    (actual - expected).abs() <= rel * expected
}

const SUNDAY_MS: i64 = 3 * DAY_MS;

fn is_monday(t: i64) -> bool {
    (t - SUNDAY_MS).div_euclid(DAY_MS).rem_euclid(7) == 1
}

#[test]
#[ignore = "needs FJCAP_TODOBR_LOG"]
fn query_lengths() {
    let s = query_length_stats(log()).unwrap();
    assert!((s.mean - 2.02).abs() < 0.02, "{s:?}");
    assert_eq!(s.median, 2.0);
    for (got, want) in s.histogram.iter().zip([0.32, 0.41, 0.27]) {
        assert!((got - want).abs() < 0.02, "{s:?}");
    }
}

#[test]
#[ignore = "needs FJCAP_TODOBR_LOG"]
fn query_popularity() {
    let keys: Vec<String> = log().records().iter().map(|r| r.key()).collect();
    let ranked = statfit::rank_frequencies(&keys);
    assert!(within(ranked.len() as f64, 1_552_735.0, 0.02), "{} unique queries", ranked.len());
    let pts: Vec<(u64, f64)> = ranked.iter().map(|&(r, c)| (r, c as f64)).collect();
    let fit = statfit::fit_zipf(&pts, RankRange::ALL).unwrap();
    assert!((fit.alpha - 0.82).abs() <= 0.05, "{fit:?}");
    let top = popularity_concentration(log(), 0.01).unwrap();
    assert!((top - 0.41).abs() <= 0.03, "{top}");
}

#[test]
#[ignore = "needs FJCAP_TODOBR_LOG"]
fn monday_rates() {
    let log = log();
    let (first, last) = log.span().unwrap();
    let mondays = (first.div_euclid(DAY_MS)..=last.div_euclid(DAY_MS)).filter(|d| is_monday(d * DAY_MS)).count();
    let queries = log.records().iter().filter(|r| is_monday(r.timestamp_ms)).count();
    let raw = queries as f64 / (mondays as f64 * 86_400.0);
    assert!(within(raw, 0.69, 0.05), "raw Monday rate {raw}");

    let folded = folded();
    let on_monday = folded.records().iter().filter(|r| is_monday(r.timestamp_ms)).count();
    let rate = on_monday as f64 / 86_400.0;
    assert!(within(rate, 23.58, 0.10), "folded Monday rate {rate}");
}

#[test]
#[ignore = "needs FJCAP_TODOBR_LOG"]
fn busiest_folded_hour() {
    let folded = folded();
    let (start, end) = busiest_hour(&folded).unwrap();
    let n = folded.window(start, end).len();
    assert!(within(n as f64, 85_604.0, 0.05), "{n} queries in the busiest hour");
}
