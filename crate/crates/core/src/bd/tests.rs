use super::*;
use chrono::Utc;

fn curve(id: &str, pts: &[(f64, f64)]) -> RdCurve {
    // (quality, rate) pairs, as written in the test tables below
    let raw: Vec<RdPoint> = pts.iter().map(|&(q, r)| RdPoint::new(r, q)).collect();
    clean_curve(id, MetricKind::Vmaf, &raw).unwrap()
}

const ANCHOR: [(f64, f64); 4] = [(30.0, 1000.0), (35.0, 2000.0), (40.0, 4000.0), (45.0, 8000.0)];
const TEST: [(f64, f64); 4] = [(32.0, 900.0), (37.0, 1900.0), (42.0, 3800.0), (47.0, 7600.0)];

#[test]
fn clean_keeps_monotone_input() {
    let c = curve("a", &ANCHOR);
    assert_eq!(c.len(), 4);
    assert_eq!(c.points()[2], RdPoint::new(4000.0, 40.0));
}

#[test]
fn clean_drops_dominated_and_errors_when_too_few() {
    let raw = [RdPoint::new(1000.0, 30.0), RdPoint::new(1500.0, 29.0)];
    assert!(matches!(
        clean_curve("x", MetricKind::Vmaf, &raw),
        Err(BdError::Curve(_))
    ));
}

#[test]
fn clean_prefers_higher_quality_at_same_rate() {
    let raw = [
        RdPoint::new(1000.0, 30.0),
        RdPoint::new(1000.0, 32.0),
        RdPoint::new(2000.0, 35.0),
    ];
    let c = clean_curve("x", MetricKind::Vmaf, &raw).unwrap();
    assert_eq!(
        c.points(),
        &[RdPoint::new(1000.0, 32.0), RdPoint::new(2000.0, 35.0)]
    );
}

#[test]
fn clean_matches_brute_force_pareto_filter() {
    // brute force: keep p unless some other q has q.quality >= p.quality
    // and q.rate <= p.rate (distinct index); duplicates collapse to one.
    let raw = [
        RdPoint::new(900.0, 31.0),
        RdPoint::new(1000.0, 30.0),
        RdPoint::new(1200.0, 34.0),
        RdPoint::new(1200.0, 34.0),
        RdPoint::new(1500.0, 33.0),
        RdPoint::new(2500.0, 40.0),
        RdPoint::new(2400.0, 41.0),
    ];
    let mut brute: Vec<RdPoint> = Vec::new();
    for (i, p) in raw.iter().enumerate() {
        let dominated = raw.iter().enumerate().any(|(j, q)| {
            j != i
                && q.quality >= p.quality
                && q.rate <= p.rate
                && (q.quality > p.quality || q.rate < p.rate || j < i)
        });
        if !dominated {
            brute.push(*p);
        }
    }
    brute.sort_by(|a, b| a.rate.total_cmp(&b.rate));
    let c = clean_curve("x", MetricKind::Vmaf, &raw).unwrap();
    assert_eq!(c.points(), brute.as_slice());
}

#[test]
fn clean_rejects_nonpositive_rate() {
    let raw = [RdPoint::new(0.0, 30.0), RdPoint::new(10.0, 31.0)];
    assert!(clean_curve("x", MetricKind::Vmaf, &raw).is_err());
}

#[test]
fn interpolant_hits_knots_and_brackets() {
    let c = curve("a", &ANCHOR);
    let f = interpolate(&c);
    for p in c.points() {
        assert_eq!(f.eval(p.quality), p.rate.log10());
    }
    let mid = f.eval(37.5);
    assert!(mid >= 2000f64.log10() && mid <= 4000f64.log10());
    // log-linear data: the monotone cubic reproduces the straight line
    assert!((mid - (2000.0 * 2f64.sqrt()).log10()).abs() < 1e-12);
}

#[test]
fn two_point_midpoint_is_mean_log_rate() {
    let c = curve("a", &[(30.0, 1000.0), (40.0, 4000.0)]);
    let mid = interpolate(&c).eval(35.0);
    assert!((mid - 0.5 * (3.0 + 4000f64.log10())).abs() < 1e-12);
}

#[test]
fn bd_rate_identity_and_scaling() {
    let a = curve("a", &ANCHOR);
    assert_eq!(bd_rate(&a, &a).unwrap().value, 0.0);
    let scaled: Vec<(f64, f64)> = ANCHOR.iter().map(|&(q, r)| (q, r * 0.8)).collect();
    let t = curve("t", &scaled);
    let r = bd_rate(&a, &t).unwrap();
    assert!((r.value + 20.0).abs() < 1e-9, "{}", r.value);
    assert_eq!(r.overlap, (30.0, 45.0));
}

#[test]
fn bd_rate_matches_reference_pchip() {
    // frozen from scipy's PchipInterpolator.integrate over the same overlap
    let r = bd_rate(&curve("a", &ANCHOR), &curve("t", &TEST)).unwrap();
    assert!((r.value - -28.56271996232821).abs() < 1e-9, "{}", r.value);
    assert_eq!(r.overlap, (32.0, 45.0));
    assert_eq!((r.anchor_points, r.test_points), (4, 4));

    let a2 = curve("a", &[(30.0, 1000.0), (36.0, 2000.0), (39.0, 4000.0), (45.0, 9000.0)]);
    let t2 = curve("t", &[(31.0, 800.0), (35.0, 1500.0), (41.0, 3900.0), (44.0, 6000.0)]);
    let fwd = bd_rate(&a2, &t2).unwrap().value;
    let back = bd_rate(&t2, &a2).unwrap().value;
    assert!((fwd - -22.304802670772894).abs() < 1e-9, "{fwd}");
    assert!((back - 28.708084202757213).abs() < 1e-9, "{back}");
}

#[test]
fn bd_quality_matches_reference_and_offsets() {
    let r = bd_quality(&curve("a", &ANCHOR), &curve("t", &TEST)).unwrap();
    assert!((r.value - 2.4063528402555945).abs() < 1e-9, "{}", r.value);

    let a = curve("a", &ANCHOR);
    assert_eq!(bd_quality(&a, &a).unwrap().value, 0.0);
    let shifted: Vec<(f64, f64)> = ANCHOR.iter().map(|&(q, r)| (q + 2.0, r)).collect();
    let r = bd_quality(&a, &curve("t", &shifted)).unwrap();
    assert!((r.value - 2.0).abs() < 1e-9);
}

#[test]
fn disjoint_curves_are_overlap_errors() {
    let a = curve("a", &[(30.0, 1000.0), (35.0, 2000.0)]);
    let t = curve("t", &[(36.0, 1000.0), (40.0, 2000.0)]);
    assert!(matches!(bd_rate(&a, &t), Err(BdError::Overlap { .. })));
    let touching = curve("t", &[(35.0, 3000.0), (40.0, 5000.0)]);
    assert!(matches!(bd_rate(&a, &touching), Err(BdError::Overlap { .. })));
}

#[test]
fn metric_mismatch_rejected() {
    let a = curve("a", &ANCHOR);
    let mut t = curve("t", &TEST);
    t.metric = MetricKind::PsnrY;
    assert!(matches!(bd_rate(&a, &t), Err(BdError::MetricMismatch { .. })));
}

#[test]
fn harmonic_mean_cases() {
    assert!((harmonic_mean(&[1.0, 2.0, 4.0]).unwrap() - 12.0 / 7.0).abs() < 1e-15);
    assert_eq!(harmonic_mean(&[7.5]).unwrap(), 7.5);
    assert!((harmonic_mean(&[3000.0, 6000.0]).unwrap() - 4000.0).abs() < 1e-9);
    assert!(harmonic_mean(&[]).is_err());
    assert!(harmonic_mean(&[1.0, 0.0]).is_err());
    assert!(harmonic_mean(&[1.0, -2.0]).is_err());
}

fn rec(clip: &str, tbr: u32, kbps: f64, vmaf: f64) -> MetricRecord {
    MetricRecord {
        clip_id: clip.into(),
        family: "x264".into(),
        preset: "veryslow".into(),
        passes: 2,
        target_kbps: tbr,
        measured_kbps: kbps,
        vmaf,
        psnr_y: None,
        encode_seconds: Some(1.0),
        output_bytes: None,
        tool_version: String::new(),
        created_at: Utc::now(),
    }
}

#[test]
fn aggregate_points_harmonic_both_axes() {
    let a = rec("c1", 4000, 3000.0, 80.0);
    let b = rec("c2", 4000, 6000.0, 96.0);
    let p = aggregate_points(&[&a, &b], MetricKind::Vmaf, Aggregation::HarmonicMean).unwrap();
    assert!((p.rate - 4000.0).abs() < 1e-9);
    // 2 / (1/80 + 1/96) = 87.2727...
    assert!((p.quality - 960.0 / 11.0).abs() < 1e-9);

    let single = aggregate_points(&[&a], MetricKind::Vmaf, Aggregation::HarmonicMean).unwrap();
    assert_eq!(single, RdPoint::new(3000.0, 80.0));

    let zero = rec("c3", 4000, 3000.0, 0.0);
    assert!(matches!(
        aggregate_points(&[&a, &zero], MetricKind::Vmaf, Aggregation::HarmonicMean),
        Err(BdError::Domain(_))
    ));
    let other_rung = rec("c2", 2000, 1800.0, 70.0);
    assert!(matches!(
        aggregate_points(&[&a, &other_rung], MetricKind::Vmaf, Aggregation::HarmonicMean),
        Err(BdError::Aggregation(_))
    ));
    assert!(matches!(
        aggregate_points(&[&a], MetricKind::PsnrY, Aggregation::HarmonicMean),
        Err(BdError::Domain(_))
    ));
}

#[test]
fn classic_mean_of_per_clip_values() {
    let a1 = curve("c1", &ANCHOR);
    let a2 = curve("c2", &ANCHOR);
    let t1: Vec<(f64, f64)> = ANCHOR.iter().map(|&(q, r)| (q, r * 0.9)).collect();
    let t2: Vec<(f64, f64)> = ANCHOR.iter().map(|&(q, r)| (q, r * 0.7)).collect();
    let r = classic_bd_rate(&[a1.clone(), a2], &[curve("c1", &t1), curve("c2", &t2)]).unwrap();
    assert!((r.value + 20.0).abs() < 1e-9);

    let single = classic_bd_rate(std::slice::from_ref(&a1), &[curve("c1", &TEST)]).unwrap();
    let direct = bd_rate(&a1, &curve("c1", &TEST)).unwrap();
    assert_eq!(single.value, direct.value);
}

#[test]
fn classic_excludes_non_overlapping_clips() {
    let a1 = curve("c1", &ANCHOR);
    let a2 = curve("c2", &[(10.0, 100.0), (20.0, 200.0)]);
    let t: Vec<(f64, f64)> = ANCHOR.iter().map(|&(q, r)| (q, r * 0.5)).collect();
    let r = classic_bd_rate(&[a1, a2], &[curve("c1", &t), curve("c2", &t)]).unwrap();
    assert!((r.value + 50.0).abs() < 1e-9);
    assert!(r.method_note.contains("excluded 1 without overlap"), "{}", r.method_note);

    let lone = curve("c9", &[(10.0, 100.0), (20.0, 200.0)]);
    assert!(matches!(
        classic_bd_rate(&[lone], &[curve("c9", &t)]),
        Err(BdError::Aggregation(_))
    ));
}

#[test]
fn smart_equals_single_clip_for_identical_clips() {
    let ladder = [1000, 2000, 4000, 8000];
    let anchor: Vec<MetricRecord> = ["c1", "c2", "c3"]
        .iter()
        .flat_map(|c| ANCHOR.iter().zip(ladder).map(move |(&(q, r), t)| rec(c, t, r, q)))
        .collect();
    let mut test = anchor.clone();
    for (r, &(q, rate)) in test.iter_mut().zip(TEST.iter().cycle()) {
        r.preset = "fast".into();
        r.measured_kbps = rate;
        r.vmaf = q;
    }
    let smart = smart_bd_rate(&anchor, &test, &ladder, MetricKind::Vmaf, Aggregation::HarmonicMean)
        .unwrap();
    let single = bd_rate(&curve("a", &ANCHOR), &curve("t", &TEST)).unwrap();
    assert!((smart.value - single.value).abs() < 1e-9);
}

#[test]
fn smart_needs_two_rungs() {
    let anchor = vec![rec("c1", 1000, 900.0, 60.0)];
    let test = vec![rec("c1", 1000, 800.0, 60.0)];
    assert!(matches!(
        smart_bd_rate(&anchor, &test, &[1000, 2000], MetricKind::Vmaf, Aggregation::HarmonicMean),
        Err(BdError::Curve(_))
    ));
}

#[test]
fn csv_exports_have_documented_headers() {
    let c = curve("a", &ANCHOR);
    let mut buf = Vec::new();
    write_curves_csv(std::slice::from_ref(&c), &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("id,q,rate_kbps\n"));
    assert_eq!(text.lines().count(), 5);

    let rows = [BdRow {
        anchor: "a".into(),
        test: "t".into(),
        metric: MetricKind::Vmaf,
        result: bd_rate(&c, &curve("t", &TEST)).unwrap(),
    }];
    let mut buf = Vec::new();
    write_results_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("anchor,test,metric,bd_percent,q_low,q_high,n_anchor,n_test\n"));
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    fn arb_curve() -> impl Strategy<Value = Vec<(f64, f64)>> {
        (4usize..8, 20.0f64..40.0, 200.0f64..2000.0).prop_flat_map(|(n, q0, r0)| {
            (
                proptest::collection::vec(0.5f64..6.0, n),
                proptest::collection::vec(1.1f64..2.5, n),
            )
                .prop_map(move |(dq, dr)| {
                    let mut q = q0;
                    let mut r = r0;
                    dq.iter()
                        .zip(&dr)
                        .map(|(a, b)| {
                            q += a;
                            r *= b;
                            (q, r)
                        })
                        .collect()
                })
        })
    }

    proptest! {
        #[test]
        fn rate_scale_invariance(a in arb_curve(), t in arb_curve(), s in 0.01f64..100.0) {
            let (ca, ct) = (curve("a", &a), curve("t", &t));
            if let Ok(base) = bd_rate(&ca, &ct) {
                let scale = |v: &[(f64, f64)]| v.iter().map(|&(q, r)| (q, r * s)).collect::<Vec<_>>();
                let scaled = bd_rate(&curve("a", &scale(&a)), &curve("t", &scale(&t))).unwrap();
                prop_assert!((scaled.value - base.value).abs() < 1e-9 * base.value.abs().max(1.0));
            }
        }

        #[test]
        fn quality_shift_invariance(a in arb_curve(), t in arb_curve(), k in -15.0f64..15.0) {
            let (ca, ct) = (curve("a", &a), curve("t", &t));
            if let Ok(base) = bd_rate(&ca, &ct) {
                let shift = |v: &[(f64, f64)]| v.iter().map(|&(q, r)| (q + k, r)).collect::<Vec<_>>();
                let moved = bd_rate(&curve("a", &shift(&a)), &curve("t", &shift(&t))).unwrap();
                prop_assert!((moved.value - base.value).abs() < 1e-6 * base.value.abs().max(1.0));
                prop_assert!((moved.overlap.0 - (base.overlap.0 + k)).abs() < 1e-9);
            }
        }

        #[test]
        fn dominance_gives_negative_bd_rate(a in arb_curve(), f in 0.3f64..0.99) {
            // test curve reaches each quality at a fraction of the anchor rate
            let t: Vec<(f64, f64)> = a.iter().map(|&(q, r)| (q, r * f)).collect();
            prop_assert!(bd_rate(&curve("a", &a), &curve("t", &t)).unwrap().value < 0.0);
        }

        #[test]
        fn harmonic_not_above_arithmetic(v in proptest::collection::vec(0.01f64..1e4, 1..20)) {
            let hm = harmonic_mean(&v).unwrap();
            let am = v.iter().sum::<f64>() / v.len() as f64;
            prop_assert!(hm <= am * (1.0 + 1e-12));
            let all_equal = v.iter().all(|x| *x == v[0]);
            if !all_equal {
                prop_assert!(hm < am);
            }
        }

        #[test]
        fn interpolant_is_monotone(a in arb_curve()) {
            let c = curve("a", &a);
            let f = interpolate(&c);
            let (lo, hi) = c.quality_range();
            let mut prev = f.eval(lo);
            for i in 1..=1000 {
                let y = f.eval(lo + (hi - lo) * i as f64 / 1000.0);
                prop_assert!(y >= prev - 1e-12);
                prev = y;
            }
        }
    }
}
