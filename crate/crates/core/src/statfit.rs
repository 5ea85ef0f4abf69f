//! Maximum-likelihood distribution fitting with Kolmogorov-Smirnov / squared-error model
//! selection, and Zipf fitting of rank-frequency data.

use std::collections::HashMap;
use std::fmt;
use std::fmt::Write as _;

use statrs::function::erf::erfc;
use statrs::function::gamma::{digamma, gamma_lr};

use crate::regression::fit_line;
use crate::scalar::Real;

/// Smallest sample accepted by [`fit_family`].
pub const MIN_SAMPLE: usize = 10;
const NEWTON_RTOL: f64 = 1e-8;
const NEWTON_MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Exponential,
    Gamma,
    Weibull,
    Lognormal,
    Pareto,
}

impl Family {
    pub const ALL: [Family; 5] = [Family::Exponential, Family::Gamma, Family::Weibull, Family::Lognormal, Family::Pareto];

    pub fn name(self) -> &'static str {
        match self {
            Family::Exponential => "exponential",
            Family::Gamma => "gamma",
            Family::Weibull => "weibull",
            Family::Lognormal => "lognormal",
            Family::Pareto => "pareto",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Fitted parameters.
///
/// Pareto uses minimum `x_m` and shape `alpha`, with CDF `1 − (x_m / x)^alpha` for `x ≥ x_m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FitParams {
    Exponential { mean: f64 },
    Gamma { shape: f64, scale: f64 },
    Weibull { shape: f64, scale: f64 },
    Lognormal { mu: f64, sigma: f64 },
    Pareto { x_min: f64, alpha: f64 },
}

impl FitParams {
    pub fn family(&self) -> Family {
        match self {
            FitParams::Exponential { .. } => Family::Exponential,
            FitParams::Gamma { .. } => Family::Gamma,
            FitParams::Weibull { .. } => Family::Weibull,
            FitParams::Lognormal { .. } => Family::Lognormal,
            FitParams::Pareto { .. } => Family::Pareto,
        }
    }

    /// The two CSV parameter columns; one-parameter families leave the second empty.
    pub fn values(&self) -> (f64, Option<f64>) {
        match *self {
            FitParams::Exponential { mean } => (mean, None),
            FitParams::Gamma { shape, scale } | FitParams::Weibull { shape, scale } => (shape, Some(scale)),
            FitParams::Lognormal { mu, sigma } => (mu, Some(sigma)),
            FitParams::Pareto { x_min, alpha } => (x_min, Some(alpha)),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match *self {
            FitParams::Exponential { mean } => -(-x / mean).exp_m1(),
            FitParams::Gamma { shape, scale } => gamma_lr(shape, x / scale),
            FitParams::Weibull { shape, scale } => -(-(x / scale).powf(shape)).exp_m1(),
            FitParams::Lognormal { mu, sigma } => 0.5 * erfc(-(x.ln() - mu) / (sigma * std::f64::consts::SQRT_2)),
            FitParams::Pareto { x_min, alpha } => {
                if x < x_min {
                    0.0
                } else {
                    1.0 - (x_min / x).powf(alpha)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub params: FitParams,
    /// Two-sided Kolmogorov-Smirnov distance between empirical and fitted CDFs.
    pub ks_stat: f64,
    /// Sum over sample points of squared CDF differences.
    pub sse: f64,
    pub n: usize,
}

impl FitResult {
    pub fn family(&self) -> Family {
        self.params.family()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("sample has {n} values; at least {min} needed")]
    TooSmall { n: usize, min: usize },
    #[error("sample value {value} at index {index} is not a positive finite number")]
    NonPositive { index: usize, value: f64 },
    #[error("{family} fit degenerate: {reason}")]
    Degenerate { family: Family, reason: String },
    #[error("{family} fit did not converge in {} iterations (last iterates: {:?})", trace.len(), &trace[trace.len().saturating_sub(5)..])]
    NoConvergence { family: Family, trace: Vec<f64> },
    #[error("zipf fit needs at least 2 distinct ranks with positive counts in range, got {found}")]
    DegenerateRanks { found: usize },
    #[error("zipf fit found no decay (slope {slope})")]
    NoDecay { slope: f64 },
}

impl FitError {
    fn degenerate(family: Family, reason: &str) -> Self {
        FitError::Degenerate { family, reason: reason.to_owned() }
    }
}

fn validate(sample: &[f64]) -> Result<(), FitError> {
    if sample.len() < MIN_SAMPLE {
        return Err(FitError::TooSmall { n: sample.len(), min: MIN_SAMPLE });
    }
    if let Some((index, &value)) = sample.iter().enumerate().find(|(_, &v)| !(v.is_finite() && v > 0.0)) {
        return Err(FitError::NonPositive { index, value });
    }
    Ok(())
}

/// Fits one family by maximum likelihood and scores it against the sample.
pub fn fit_family(sample: &[f64], family: Family) -> Result<FitResult, FitError> {
    validate(sample)?;
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let params = estimate(&sorted, family)?;
    let (ks_stat, sse) = goodness_of_fit(&sorted, &params);
    Ok(FitResult { params, ks_stat, sse, n: sorted.len() })
}

fn estimate(sorted: &[f64], family: Family) -> Result<FitParams, FitError> {
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let logs: Vec<f64> = sorted.iter().map(|x| x.ln()).collect();
    let mean_log = logs.iter().sum::<f64>() / n;
    if family != Family::Exponential && sorted[0] == sorted[sorted.len() - 1] {
        return Err(FitError::degenerate(family, "all sample values are equal"));
    }
    match family {
        Family::Exponential => Ok(FitParams::Exponential { mean }),
        Family::Lognormal => {
            let var = logs.iter().map(|l| (l - mean_log).powi(2)).sum::<f64>() / n;
            if var <= 0.0 {
                return Err(FitError::degenerate(family, "zero variance of log-values"));
            }
            Ok(FitParams::Lognormal { mu: mean_log, sigma: var.sqrt() })
        }
        Family::Pareto => {
            let x_min = sorted[0];
            let log_excess: f64 = logs.iter().map(|l| l - x_min.ln()).sum();
            if log_excess <= 0.0 {
                return Err(FitError::degenerate(family, "all values equal the minimum"));
            }
            Ok(FitParams::Pareto { x_min, alpha: n / log_excess })
        }
        Family::Gamma => fit_gamma(sorted, mean, mean_log),
        Family::Weibull => fit_weibull(sorted, mean, mean_log),
    }
}

/// Newton iteration on a monotone function, falling back to bisection whenever a step
/// leaves the current bracket. `f` returns (value, derivative); `increasing` says which way
/// the root lies.
fn safeguarded_newton(
    family: Family,
    start: f64,
    increasing: bool,
    f: impl Fn(f64) -> (f64, f64),
) -> Result<f64, FitError> {
    let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
    let mut x = start;
    let mut trace = Vec::with_capacity(NEWTON_MAX_ITER);
    for _ in 0..NEWTON_MAX_ITER {
        let (v, d) = f(x);
        if !v.is_finite() {
            return Err(FitError::NoConvergence { family, trace });
        }
        if (v < 0.0) == increasing {
            lo = x;
        } else {
            hi = x;
        }
        let mut next = x - v / d;
        if !(next > lo && next < hi && next.is_finite()) {
            next = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * x };
        }
        trace.push(next);
        if (next - x).abs() <= NEWTON_RTOL * x.abs() {
            return Ok(next);
        }
        x = next;
    }
    Err(FitError::NoConvergence { family, trace })
}

fn fit_gamma(sorted: &[f64], mean: f64, mean_log: f64) -> Result<FitParams, FitError> {
    let family = Family::Gamma;
    let n = sorted.len() as f64;
    let s = mean.ln() - mean_log;
    let var = sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    if s.is_nan() || s <= 0.0 || var <= 0.0 {
        return Err(FitError::degenerate(family, "zero sample variance"));
    }
    let start = mean * mean / var;
    // ln k − ψ(k) decreases from +∞ to 0; its root in k is the shape MLE.
    let shape = safeguarded_newton(family, start, false, |k| (k.ln() - digamma(k) - s, 1.0 / k - trigamma(k)))?;
    Ok(FitParams::Gamma { shape, scale: mean / shape })
}

fn fit_weibull(sorted: &[f64], mean: f64, mean_log: f64) -> Result<FitParams, FitError> {
    let family = Family::Weibull;
    let n = sorted.len() as f64;
    let x_max = sorted[sorted.len() - 1];
    // Work on x / max(x) so that x^k cannot overflow; the shape equation is scale-free.
    let logs: Vec<f64> = sorted.iter().map(|x| (x / x_max).ln()).collect();
    let mean_ly = mean_log - x_max.ln();
    if mean_ly.is_nan() || mean_ly >= 0.0 {
        return Err(FitError::degenerate(family, "all values equal"));
    }
    let sd = (sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let start = (sd / mean).powf(-1.086).clamp(1e-3, 1e3);
    let shape = safeguarded_newton(family, start, true, |k| {
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for &l in &logs {
            let w = (k * l).exp();
            s0 += w;
            s1 += w * l;
            s2 += w * l * l;
        }
        let g = s1 / s0 - 1.0 / k - mean_ly;
        let dg = (s2 * s0 - s1 * s1) / (s0 * s0) + 1.0 / (k * k);
        (g, dg)
    })?;
    let mean_pow = logs.iter().map(|l| (shape * l).exp()).sum::<f64>() / n;
    Ok(FitParams::Weibull { shape, scale: x_max * mean_pow.powf(1.0 / shape) })
}

/// Trigamma function ψ'(x) for x > 0.
fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + inv
        + inv2 / 2.0
        + inv * inv2 * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0))))
}

/// KS statistic `max_i max(i/n − F(x_(i)), F(x_(i)) − (i−1)/n)` and the squared-error sum
/// against the empirical CDF, over an ascending sample.
pub fn goodness_of_fit(sorted: &[f64], params: &FitParams) -> (f64, f64) {
    let n = sorted.len();
    let nf = n as f64;
    let mut ks: f64 = 0.0;
    let mut sse = 0.0;
    let mut i = 0;
    while i < n {
        // The empirical CDF at a tied value counts every copy.
        let mut j = i + 1;
        while j < n && sorted[j] == sorted[i] {
            j += 1;
        }
        let f = params.cdf(sorted[i]);
        for k in i + 1..=j {
            ks = ks.max(k as f64 / nf - f).max(f - (k - 1) as f64 / nf);
        }
        let ecdf = j as f64 / nf;
        sse += (j - i) as f64 * (ecdf - f).powi(2);
        i = j;
    }
    (ks.clamp(0.0, 1.0), sse)
}

/// One family's place in a model-selection ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedFit {
    /// 1-based; failed fits come last.
    pub rank: usize,
    pub family: Family,
    pub outcome: Result<FitResult, FitError>,
}

/// Fits every family and ranks them by KS statistic, then squared error.
///
/// Sample validation errors are returned directly; a family whose own fit fails is kept,
/// ranked after every successful fit.
pub fn select_model(sample: &[f64]) -> Result<Vec<RankedFit>, FitError> {
    validate(sample)?;
    let mut fits: Vec<(Family, Result<FitResult, FitError>)> =
        Family::ALL.iter().map(|&f| (f, fit_family(sample, f))).collect();
    fits.sort_by(|(fa, a), (fb, b)| match (a, b) {
        (Ok(x), Ok(y)) => x.ks_stat.total_cmp(&y.ks_stat).then(x.sse.total_cmp(&y.sse)).then(fa.cmp(fb)),
        (Ok(_), Err(_)) => std::cmp::Ordering::Less,
        (Err(_), Ok(_)) => std::cmp::Ordering::Greater,
        (Err(_), Err(_)) => fa.cmp(fb),
    });
    Ok(fits
        .into_iter()
        .enumerate()
        .map(|(i, (family, outcome))| RankedFit { rank: i + 1, family, outcome })
        .collect())
}

pub const FITS_CSV_HEADER: &str = "family,param1,param2,ks,sse,rank";

/// Ranking as CSV; failed fits have empty numeric columns.
pub fn fits_to_csv(ranked: &[RankedFit]) -> String {
    let mut out = format!("{FITS_CSV_HEADER}\n");
    for r in ranked {
        match &r.outcome {
            Ok(fit) => {
                let (a, b) = fit.params.values();
                let b = b.map(|v| v.to_string()).unwrap_or_default();
                writeln!(out, "{},{a},{b},{},{},{}", r.family, fit.ks_stat, fit.sse, r.rank)
            }
            Err(_) => writeln!(out, "{},,,,,{}", r.family, r.rank),
        }
        .expect("writing to a String");
    }
    out
}

/// Empirical CDF next to each fitted CDF at every distinct sample value.
pub fn cdf_overlay_csv(sample: &[f64], fits: &[FitResult]) -> String {
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut out = String::from("x,empirical");
    for f in fits {
        write!(out, ",{}", f.family()).expect("writing to a String");
    }
    out.push('\n');
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        write!(out, "{},{}", sorted[i], j as f64 / n).expect("writing to a String");
        for f in fits {
            write!(out, ",{}", f.params.cdf(sorted[i])).expect("writing to a String");
        }
        out.push('\n');
        i = j;
    }
    out
}

/// Unique items with their counts, most frequent first, ties in lexicographic order.
pub fn ranked_items<S: AsRef<str>>(items: &[S]) -> Vec<(String, u64)> {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for it in items {
        *counts.entry(it.as_ref()).or_insert(0) += 1;
    }
    let mut v: Vec<(String, u64)> = counts.into_iter().map(|(k, c)| (k.to_owned(), c)).collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v
}

/// `(rank, count)` pairs, ranks from 1, counts non-increasing.
pub fn rank_frequencies<S: AsRef<str>>(items: &[S]) -> Vec<(u64, u64)> {
    ranked_items(items).into_iter().enumerate().map(|(i, (_, c))| (i as u64 + 1, c)).collect()
}

/// Inclusive rank window for a Zipf fit. `max_rank = None` means every rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankRange {
    pub min_rank: u64,
    pub max_rank: Option<u64>,
}

impl RankRange {
    pub const ALL: RankRange = RankRange { min_rank: 1, max_rank: None };

    pub fn up_to(max_rank: u64) -> Self {
        RankRange { min_rank: 1, max_rank: Some(max_rank) }
    }

    fn contains(&self, rank: u64) -> bool {
        rank >= self.min_rank && self.max_rank.is_none_or(|m| rank <= m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZipfFit<T> {
    /// Exponent of `count ∝ rank^(−alpha)`.
    pub alpha: T,
    pub r_squared: T,
    /// First and last rank actually used.
    pub rank_range: (u64, u64),
}

/// Least squares of `ln count` on `ln rank` over the ranks in `range`.
pub fn fit_zipf<T: Real>(ranked: &[(u64, T)], range: RankRange) -> Result<ZipfFit<T>, FitError> {
    let pts: Vec<(u64, T)> =
        ranked.iter().copied().filter(|&(r, c)| r >= 1 && range.contains(r) && c > T::zero()).collect();
    let mut ranks: Vec<u64> = pts.iter().map(|p| p.0).collect();
    ranks.sort_unstable();
    ranks.dedup();
    if ranks.len() < 2 {
        return Err(FitError::DegenerateRanks { found: ranks.len() });
    }
    let xy: Vec<(T, T)> = pts.iter().map(|&(r, c)| (T::lit(r as f64).ln(), c.ln())).collect();
    let line = fit_line(&xy).map_err(|e| FitError::DegenerateRanks { found: e.distinct })?;
    if line.slope.is_nan() || line.slope >= T::zero() {
        return Err(FitError::NoDecay { slope: line.slope.as_f64() });
    }
    Ok(ZipfFit { alpha: -line.slope, r_squared: line.r_squared, rank_range: (ranks[0], ranks[ranks.len() - 1]) })
}

/// Last rank whose count exceeds 1, i.e. where the singleton tail begins.
pub fn singleton_cutoff(ranked: &[(u64, u64)]) -> Option<u64> {
    ranked.iter().filter(|&&(_, c)| c > 1).map(|&(r, _)| r).max()
}

/// Zipf fit over every rank, plus one excluding the singleton tail when a cutoff is given.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZipfReport {
    pub full: ZipfFit<f64>,
    pub truncated: Option<ZipfFit<f64>>,
}

pub fn zipf_report(ranked: &[(u64, u64)], cutoff: Option<u64>) -> Result<ZipfReport, FitError> {
    let pts: Vec<(u64, f64)> = ranked.iter().map(|&(r, c)| (r, c as f64)).collect();
    let full = fit_zipf(&pts, RankRange::ALL)?;
    let truncated = cutoff.map(|m| fit_zipf(&pts, RankRange::up_to(m))).transpose()?;
    Ok(ZipfReport { full, truncated })
}
