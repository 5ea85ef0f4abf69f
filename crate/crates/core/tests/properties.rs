use approx::assert_relative_eq;
use fjcap::model::{
    harmonic, response_bounds, response_with_result_cache, service_time_server, CacheParams, ClusterConfig,
    ServiceParams, Workload,
};
use fjcap::scenario::{
    apply_scaling, gain_over_baseline, max_rate_under_slo, replicas_needed, upper_bound, ParamTable, ScalingSpec,
    ScenarioError, SloSpec,
};
use fjcap::statfit::{self, Family, FitParams, RankRange};
use fjcap::workload::{
    all_interarrivals, bin_load, fold, popularity_concentration, FoldSpec, QueryLog, QueryRecord, HOUR_MS,
};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = ServiceParams<f64>> {
    (1e-4..5e-3, 1e-3..0.05, 1e-3..0.05, 1e-3..0.1, 0.0..=1.0)
        .prop_map(|(b, h, m, d, hit)| ServiceParams::new(b, h, m, d, hit).unwrap())
}

/// Params plus a rate that keeps every station below saturation.
fn stable_point() -> impl Strategy<Value = (ServiceParams<f64>, f64)> {
    (params(), 0.0..0.95).prop_map(|(p, u)| {
        let s = service_time_server(&p).max(p.s_broker);
        (p, u / s)
    })
}

fn cluster(p: u32) -> ClusterConfig {
    ClusterConfig::new(p).unwrap()
}

proptest! {
    #[test]
    fn lower_never_exceeds_upper((sp, lambda) in stable_point(), p in 1u32..200) {
        let r = response_bounds(&cluster(p), &sp, &Workload::new(lambda).unwrap()).unwrap();
        prop_assert!(r.r_lower <= r.r_upper);
        if p == 1 {
            prop_assert_eq!(r.r_lower, r.r_upper);
        } else {
            prop_assert!(r.r_lower < r.r_upper);
        }
    }

    #[test]
    fn bounds_increase_with_load((sp, lambda) in stable_point(), frac in 0.0..1.0, p in 1u32..64) {
        let cfg = cluster(p);
        let lo = response_bounds(&cfg, &sp, &Workload::new(lambda * frac).unwrap()).unwrap();
        let hi = response_bounds(&cfg, &sp, &Workload::new(lambda).unwrap()).unwrap();
        prop_assert!(lo.r_lower <= hi.r_lower && lo.r_upper <= hi.r_upper);
    }

    #[test]
    fn zero_load_is_pure_service(sp in params(), p in 1u32..64) {
        let r = response_bounds(&cluster(p), &sp, &Workload::new(0.0).unwrap()).unwrap();
        let s = service_time_server(&sp);
        assert_relative_eq!(r.r_lower, s + sp.s_broker, max_relative = 1e-12);
        assert_relative_eq!(r.r_upper, harmonic::<f64>(p) * s + sp.s_broker, max_relative = 1e-12);
    }

    #[test]
    fn harmonic_asymptotics(p in 10u32..100_000) {
        let x = f64::from(p);
        let approx = x.ln() + 0.577_215_664_901_532_9 + 1.0 / (2.0 * x);
        prop_assert!((harmonic::<f64>(p) - approx).abs() < 1.0 / (8.0 * x * x));
    }

    #[test]
    fn service_time_affine_in_hit(sp in params(), a in 0.0..=1.0, b in 0.0..=1.0, t in 0.0..=1.0) {
        let at = |h: f64| service_time_server(&ServiceParams { hit: h, ..sp });
        let mixed = at(t * a + (1.0 - t) * b);
        assert_relative_eq!(mixed, t * at(a) + (1.0 - t) * at(b), max_relative = 1e-12, epsilon = 1e-15);
    }

    #[test]
    fn empty_result_cache_changes_nothing((sp, lambda) in stable_point(), p in 1u32..64, s_c in 1e-6..1e-3) {
        let cfg = cluster(p);
        let load = Workload::new(lambda).unwrap();
        let cache = CacheParams::new(0.0, s_c).unwrap();
        let plain = response_bounds(&cfg, &sp, &load).unwrap().r_upper;
        prop_assert_eq!(response_with_result_cache(&cfg, &sp, &load, &cache).unwrap(), plain);
    }

    #[test]
    fn time_rescaling((sp, lambda) in stable_point(), p in 1u32..64, c in 0.1..10.0) {
        // Durations times c with rates divided by c scales every response by c.
        let cfg = cluster(p);
        let base = response_bounds(&cfg, &sp, &Workload::new(lambda).unwrap()).unwrap();
        let scaled = response_bounds(&cfg, &sp.scale_durations(c), &Workload::new(lambda / c).unwrap()).unwrap();
        assert_relative_eq!(scaled.r_lower, c * base.r_lower, max_relative = 1e-10);
        assert_relative_eq!(scaled.r_upper, c * base.r_upper, max_relative = 1e-10);
    }

    #[test]
    fn single_precision_tracks_double(sp in params(), u in 0.0..0.8, p in 1u32..128) {
        let lambda = u / service_time_server(&sp).max(sp.s_broker);
        let r64 = response_bounds(&cluster(p), &sp, &Workload::new(lambda).unwrap()).unwrap();
        let sp32 = ServiceParams::new(sp.s_broker as f32, sp.s_hit as f32, sp.s_miss as f32, sp.s_disk as f32, sp.hit as f32).unwrap();
        let r32 = response_bounds(&cluster(p), &sp32, &Workload::new(lambda as f32).unwrap()).unwrap();
        assert_relative_eq!(f64::from(r32.r_upper), r64.r_upper, max_relative = 1e-4);
        assert_relative_eq!(f64::from(r32.r_lower), r64.r_lower, max_relative = 1e-4);
    }

    #[test]
    fn unit_scaling_is_identity(sp in params()) {
        let table = ParamTable::new().with("x", sp);
        prop_assert_eq!(apply_scaling(&table, &ScalingSpec::identity("x")).unwrap(), sp);
    }

    #[test]
    fn faster_hardware_never_hurts(
        (sp, lambda) in stable_point(),
        cpu in 1.0..8.0,
        disk in 1.0..8.0,
        fixed in any::<bool>(),
        p in 1u32..128,
    ) {
        let table = ParamTable::new().with("x", sp);
        let cfg = cluster(p);
        let load = Workload::new(lambda).unwrap();
        let faster = apply_scaling(&table, &ScalingSpec::new("x", cpu, disk).broker_cpu_fixed(fixed)).unwrap();
        let base = response_bounds(&cfg, &sp, &load).unwrap();
        let improved = response_bounds(&cfg, &faster, &load).unwrap();
        prop_assert!(improved.r_upper <= base.r_upper);
        prop_assert!(gain_over_baseline(&base, &improved) >= 1.0);
    }

    #[test]
    fn slo_rate_is_the_integer_crossing(sp in params(), p in 1u32..128, slo_factor in 1.0..20.0) {
        let cfg = cluster(p);
        let zero_load = upper_bound(&cfg, &sp, 0.0, None).unwrap();
        let slo = SloSpec::new(zero_load * slo_factor, 100.0).unwrap();
        let meets = |l: f64| upper_bound(&cfg, &sp, l, None).is_ok_and(|r| r <= slo.max_mean_response);
        match max_rate_under_slo(&cfg, &sp, &slo, None) {
            Ok(n) => {
                prop_assert!(meets(f64::from(n)));
                prop_assert!(!meets(f64::from(n + 1)));
            }
            Err(ScenarioError::Infeasible { .. }) => prop_assert!(!meets(1.0)),
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }

    #[test]
    fn replicas_cover_the_rate(total in 0.0..1e5, per in 0.1..1e4) {
        let n = replicas_needed(total, per).unwrap();
        prop_assert!(n >= 1);
        prop_assert!(f64::from(n) * per >= total);
        prop_assert!(n == 1 || f64::from(n - 1) * per < total);
    }
}

fn log_from(times: &[i64], keys: &[u8]) -> QueryLog {
    QueryLog::from_records(
        times
            .iter()
            .zip(keys.iter().cycle())
            .map(|(&t, &k)| QueryRecord { timestamp_ms: t, terms: vec![format!("q{k}")] })
            .collect(),
    )
}

proptest! {
    #[test]
    fn fold_keeps_every_query(
        times in prop::collection::vec(0i64..10_000_000_000, 1..300),
        keys in prop::collection::vec(0u8..10, 1..20),
        window in 1i64..1_000_000_000,
        origin in -1_000_000_000i64..1_000_000_000,
    ) {
        let log = log_from(&times, &keys);
        let spec = FoldSpec::new(window, origin).unwrap();
        let once = fold(&log, &spec);
        prop_assert_eq!(once.log.len(), log.len());
        let mut a: Vec<String> = log.records().iter().map(|r| r.key()).collect();
        let mut b: Vec<String> = once.log.records().iter().map(|r| r.key()).collect();
        a.sort();
        b.sort();
        prop_assert_eq!(a, b);
        prop_assert_eq!(&fold(&once.log, &spec).log, &once.log);
    }

    #[test]
    fn fold_leaves_sub_window_logs_alone(
        offsets in prop::collection::vec(0i64..1_000_000, 1..100),
        origin in -1_000_000_000i64..1_000_000_000,
    ) {
        let times: Vec<i64> = offsets.iter().map(|o| origin + o).collect();
        let log = log_from(&times, &[1, 2, 3]);
        prop_assert_eq!(fold(&log, &FoldSpec::new(1_000_000, origin).unwrap()).log, log);
    }

    #[test]
    fn interarrivals_sum_to_span(times in prop::collection::vec(0i64..1_000_000_000, 2..300)) {
        let log = log_from(&times, &[0]);
        let (first, last) = log.span().unwrap();
        let gaps = all_interarrivals(&log).unwrap();
        prop_assert_eq!(gaps.len(), log.len() - 1);
        assert_relative_eq!(gaps.iter().sum::<f64>(), (last - first) as f64 / 1000.0, max_relative = 1e-9, epsilon = 1e-9);
        prop_assert!(gaps.iter().all(|&g| g >= 0.0));
    }

    #[test]
    fn bins_account_for_every_query(times in prop::collection::vec(0i64..100 * HOUR_MS, 1..300), width in 1i64..10 * HOUR_MS) {
        let log = log_from(&times, &[0]);
        let series = bin_load(&log, width).unwrap();
        prop_assert_eq!(series.counts.iter().sum::<u64>(), log.len() as u64);
    }

    #[test]
    fn concentration_grows_with_fraction(keys in prop::collection::vec(0u8..50, 1..300), a in 0.01..1.0, b in 0.01..1.0) {
        let times: Vec<i64> = (0..keys.len() as i64).collect();
        let log = log_from(&times, &keys);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let c_lo = popularity_concentration(&log, lo).unwrap();
        let c_hi = popularity_concentration(&log, hi).unwrap();
        prop_assert!(c_lo <= c_hi && c_hi <= 1.0);
        prop_assert_eq!(popularity_concentration(&log, 1.0).unwrap(), 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fits_follow_a_change_of_units(sample in prop::collection::vec(0.01f64..100.0, 20..200), c in 0.1f64..100.0) {
        let scaled: Vec<f64> = sample.iter().map(|x| x * c).collect();
        for family in [Family::Exponential, Family::Lognormal, Family::Pareto, Family::Gamma, Family::Weibull] {
            let (Ok(a), Ok(b)) = (statfit::fit_family(&sample, family), statfit::fit_family(&scaled, family)) else {
                continue;
            };
            prop_assert!((a.ks_stat - b.ks_stat).abs() < 1e-6, "{family}: {} vs {}", a.ks_stat, b.ks_stat);
            match (a.params, b.params) {
                (FitParams::Exponential { mean: m1 }, FitParams::Exponential { mean: m2 }) => {
                    assert_relative_eq!(m2, c * m1, max_relative = 1e-9)
                }
                (FitParams::Lognormal { mu: m1, sigma: s1 }, FitParams::Lognormal { mu: m2, sigma: s2 }) => {
                    assert_relative_eq!(m2, m1 + c.ln(), max_relative = 1e-9, epsilon = 1e-9);
                    assert_relative_eq!(s2, s1, max_relative = 1e-9);
                }
                (FitParams::Pareto { x_min: x1, alpha: a1 }, FitParams::Pareto { x_min: x2, alpha: a2 }) => {
                    assert_relative_eq!(x2, c * x1, max_relative = 1e-12);
                    assert_relative_eq!(a2, a1, max_relative = 1e-9);
                }
                (FitParams::Gamma { shape: k1, scale: t1 }, FitParams::Gamma { shape: k2, scale: t2 })
                | (FitParams::Weibull { shape: k1, scale: t1 }, FitParams::Weibull { shape: k2, scale: t2 }) => {
                    assert_relative_eq!(k2, k1, max_relative = 1e-6);
                    assert_relative_eq!(t2, c * t1, max_relative = 1e-6);
                }
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn exponential_cdf_at_the_mean(sample in prop::collection::vec(0.01f64..100.0, 10..200)) {
        let fit = statfit::fit_family(&sample, Family::Exponential).unwrap();
        let FitParams::Exponential { mean } = fit.params else { unreachable!() };
        prop_assert_eq!(fit.params.cdf(mean), -(-1.0f64).exp_m1());
    }

    #[test]
    fn ranking_is_deterministic(sample in prop::collection::vec(0.01f64..100.0, 10..100)) {
        let a = statfit::select_model(&sample).unwrap();
        let b = statfit::select_model(&sample).unwrap();
        prop_assert_eq!(&a, &b);
        let ranks: Vec<usize> = a.iter().map(|r| r.rank).collect();
        prop_assert_eq!(ranks, vec![1, 2, 3, 4, 5]);
        let ks: Vec<f64> = a.iter().filter_map(|r| r.outcome.as_ref().ok()).map(|f| f.ks_stat).collect();
        prop_assert!(ks.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn exact_power_laws_are_recovered(alpha in 0.1f64..3.0, scale in 1.0f64..1e6, n in 2u64..2000) {
        let pts: Vec<(u64, f64)> = (1..=n).map(|r| (r, scale * (r as f64).powf(-alpha))).collect();
        let fit = statfit::fit_zipf(&pts, RankRange::ALL).unwrap();
        prop_assert!((fit.alpha - alpha).abs() < 1e-10);
        prop_assert_eq!(fit.rank_range, (1, n));
    }
}
