use chrono::{TimeZone, Utc};
use proptest::prelude::*;

use super::*;
use crate::bd::MetricKind;

#[allow(clippy::too_many_arguments)]
fn rec(clip: &str, family: &str, preset: &str, passes: u8, tbr: u32, kbps: f64, vmaf: f64, secs: f64) -> MetricRecord {
    MetricRecord {
        clip_id: clip.into(),
        family: family.into(),
        preset: preset.into(),
        passes,
        target_kbps: tbr,
        measured_kbps: kbps,
        vmaf,
        psnr_y: None,
        encode_seconds: Some(secs),
        output_bytes: None,
        tool_version: "test".into(),
        created_at: Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(),
    }
}

fn summary(family: &str, preset: &str, passes: u8, cov: usize, total: usize, hours: Option<f64>) -> ConfigSummary {
    ConfigSummary {
        key: ConfigKey::new(family, preset, passes),
        coverage_all: cov,
        total_all: total,
        coverage_checkpoint: 0,
        total_checkpoint: 0,
        overshoot_count: 0,
        total_hours: hours,
    }
}

#[test]
fn coverage_uses_strict_threshold() {
    let rs: Vec<_> = [90.0, 87.0, 88.01, 88.0]
        .iter()
        .enumerate()
        .map(|(i, v)| rec(&format!("c{i}"), "x264", "medium", 1, 4000, 3900.0, *v, 10.0))
        .collect();
    let s = &summarize(&rs[..3], &ScenarioSpec::s1())[0];
    assert_eq!((s.coverage_all, s.total_all), (2, 3));
    let s = &summarize(&rs, &ScenarioSpec::s1())[0];
    assert_eq!((s.coverage_all, s.total_all), (2, 4));
    assert_eq!((s.coverage_checkpoint, s.total_checkpoint), (2, 4));
}

#[test]
fn overshoot_is_strict() {
    assert!(overshoots(4000, 4700.0, 0.15));
    assert!(!overshoots(4000, 4600.0, 0.15));
    assert!(!overshoots(4000, 3000.0, 0.15));
}

#[test]
fn summary_counts_and_hours() {
    let rs = vec![
        rec("a", "svt-av1", "6", 1, 4000, 4700.0, 90.0, 1800.0),
        rec("a", "svt-av1", "6", 1, 8000, 8000.0, 95.0, 1800.0),
        rec("b", "svt-av1", "6", 1, 4000, 3000.0, 80.0, 3600.0),
        rec("b", "SVT_AV1", "6", 1, 8000, 8100.0, 89.0, 3600.0),
    ];
    let out = summarize(&rs, &ScenarioSpec::s1());
    assert_eq!(out.len(), 1);
    let s = &out[0];
    assert_eq!(s.key.to_string(), "svt-av1-6-1p");
    assert_eq!((s.coverage_all, s.total_all), (3, 4));
    assert_eq!((s.coverage_checkpoint, s.total_checkpoint), (1, 2));
    assert_eq!(s.overshoot_count, 1);
    assert_eq!(s.total_hours, Some(3.0));

    let mut missing = rs.clone();
    missing[0].encode_seconds = None;
    assert_eq!(summarize(&missing, &ScenarioSpec::s1())[0].total_hours, None);
    assert!(summarize(&[], &ScenarioSpec::s1()).is_empty());
}

#[test]
fn s1_ignores_time_and_s3_respects_budget() {
    let sums = vec![
        summary("x", "a", 1, 80, 100, Some(100.0)),
        summary("x", "b", 1, 76, 100, Some(10.0)),
    ];
    let r1 = select_presets(&sums, &ScenarioSpec::s1()).unwrap();
    assert_eq!(r1.selection("x").unwrap().selected().unwrap().key.preset, "a");
    let r3 = select_presets(&sums, &ScenarioSpec::s3()).unwrap();
    assert_eq!(r3.selection("x").unwrap().selected().unwrap().key.preset, "b");
    assert!(constraint_violations(&r1).is_empty());
    assert!(constraint_violations(&r3).is_empty());
}

#[test]
fn s1_tie_breaks() {
    let mut a = summary("x", "a", 1, 50, 100, Some(5.0));
    let mut b = summary("x", "b", 1, 50, 100, Some(1.0));
    a.total_checkpoint = 10;
    b.total_checkpoint = 10;
    a.coverage_checkpoint = 6;
    b.coverage_checkpoint = 5;
    let pick = |s: &[ConfigSummary]| {
        select_presets(s, &ScenarioSpec::s1()).unwrap().selections[0]
            .selected()
            .unwrap()
            .key
            .preset
            .clone()
    };
    assert_eq!(pick(&[a.clone(), b.clone()]), "a");
    b.coverage_checkpoint = 6;
    b.overshoot_count = 1;
    assert_eq!(pick(&[a.clone(), b.clone()]), "a");
    b.overshoot_count = 0;
    assert_eq!(pick(&[a, b]), "b");
}

#[test]
fn infeasible_families_are_reported() {
    let sums = vec![
        summary("x", "a", 1, 80, 100, Some(100.0)),
        summary("y", "a", 1, 70, 100, Some(10.0)),
        summary("z", "a", 1, 70, 100, None),
    ];
    let r = select_presets(&sums, &ScenarioSpec::s3()).unwrap();
    assert_eq!(r.selections.len(), 3);
    assert!(matches!(r.selection("x").unwrap().choice, Choice::Infeasible(_)));
    assert!(r.selection("x").unwrap().rationale.contains("budget"));
    assert!(r.selection("y").unwrap().selected().is_some());
    assert!(matches!(r.selection("z").unwrap().choice, Choice::Infeasible(_)));
    assert_eq!(r.selected_keys().len(), 1);
}

#[test]
fn s2_picks_fastest_within_slack() {
    let sums = vec![
        summary("x", "slow", 1, 83, 100, Some(1000.0)),
        summary("x", "mid", 1, 79, 100, Some(150.0)),
        summary("x", "fast", 1, 77, 100, Some(30.0)),
    ];
    let r = select_presets(&sums, &ScenarioSpec::s2()).unwrap();
    let sel = r.selection("x").unwrap();
    assert_eq!(sel.selected().unwrap().key.preset, "mid");
    assert!(sel.rationale.contains("x-slow-1p"), "{}", sel.rationale);
    assert!(constraint_violations(&r).is_empty());

    let mut wide = ScenarioSpec::s2();
    wide.objective = Objective::FastestWithinSlack { slack_points: 10.0 };
    let r = select_presets(&sums, &wide).unwrap();
    assert_eq!(r.selections[0].selected().unwrap().key.preset, "fast");
}

#[test]
fn spec_validation() {
    assert!(ScenarioSpec::s1().validate().is_ok());
    let mut s = ScenarioSpec::s3();
    s.time_budget_hours = None;
    assert!(s.validate().is_err());
    let mut s = ScenarioSpec::s1();
    s.vmaf_threshold = 0.0;
    assert!(select_presets(&[], &s).is_err());
    let mut s = ScenarioSpec::s2();
    s.objective = Objective::FastestWithinSlack { slack_points: -1.0 };
    assert!(s.validate().is_err());
    assert_eq!("s2".parse::<ScenarioId>().unwrap(), ScenarioId::S2);
    assert_eq!("night".parse::<ScenarioId>().unwrap(), ScenarioId::Custom("night".into()));
}

#[test]
fn summaries_csv_round_trip() {
    let mut sums = vec![
        summary("svt-av1", "2", 1, 619, 744, Some(1172.78)),
        summary("nvenc-av1", "P7", 2, 566, 744, None),
    ];
    sums[0].coverage_checkpoint = 58;
    sums[0].total_checkpoint = 62;
    sums[0].overshoot_count = 3;
    let mut buf = Vec::new();
    write_summaries_csv(&sums, &mut buf).unwrap();
    assert_eq!(read_summaries_csv(&buf[..]).unwrap(), sums);

    let bad = "family,preset,passes,overshoot_count,coverage_all,total_all,coverage_checkpoint,total_checkpoint,total_hours\nx,a,1,0,9,5,0,0,1\n";
    assert!(matches!(read_summaries_csv(bad.as_bytes()), Err(ScenarioError::Import(_))));
}

#[test]
fn time_grid_cells() {
    let sums = vec![
        summary("x", "a", 1, 1, 1, Some(100.0)),
        summary("x", "b", 1, 1, 1, Some(25.0)),
        summary("x", "c", 1, 1, 1, Some(100.0)),
        summary("x", "d", 1, 1, 1, None),
    ];
    let g = time_grid(&sums);
    assert_eq!(g.cell(0, 1).value(), Some(-75.0));
    assert_eq!(g.cell(1, 0).value(), Some(300.0));
    assert_eq!(g.cell(0, 2).value(), Some(0.0));
    assert!(g.cell(0, 3).value().is_none());
    for i in 0..4 {
        assert_eq!(g.cell(i, i), &Cell::Value(0.0));
    }
}

fn ladder_records(family: &str, preset: &str, scale: f64, clips: usize) -> Vec<MetricRecord> {
    let ladder = [1000u32, 2000, 4000, 8000];
    let mut out = Vec::new();
    for c in 0..clips {
        for (k, &t) in ladder.iter().enumerate() {
            let q = 70.0 + 6.0 * k as f64 + c as f64;
            out.push(rec(&format!("clip{c}"), family, preset, 1, t, f64::from(t) * scale * (1.0 + 0.1 * c as f64), q, 60.0));
        }
    }
    out
}

#[test]
fn bd_grid_self_is_zero_and_antisymmetric() {
    let ladder = [1000, 2000, 4000, 8000];
    let mut rs = ladder_records("x264", "slow", 1.0, 3);
    let a = ConfigKey::new("x264", "slow", 1);
    let g = bd_grid(std::slice::from_ref(&a), &rs, BdMethod::Smart, MetricKind::Vmaf, &ladder);
    assert_eq!(g.cells, vec![vec![Cell::Value(0.0)]]);

    rs.extend(ladder_records("x264", "fast", 1.3, 3));
    let b = ConfigKey::new("x264", "fast", 1);
    for method in [BdMethod::Smart, BdMethod::Classic] {
        let g = bd_grid(&[a.clone(), b.clone()], &rs, method, MetricKind::Vmaf, &ladder);
        let (c01, c10) = (g.cell(0, 1).value().unwrap(), g.cell(1, 0).value().unwrap());
        assert!((c01 - 30.0).abs() < 1e-9, "{method}: {c01}");
        assert!(((1.0 + c01 / 100.0) * (1.0 + c10 / 100.0) - 1.0).abs() < 1e-4);
    }

    let missing = ConfigKey::new("x265", "slow", 1);
    let g = bd_grid(&[a, missing], &rs, BdMethod::Classic, MetricKind::Vmaf, &ladder);
    assert!(matches!(g.cell(0, 1), Cell::NotAvailable(_)));
    assert_eq!(g.cell(1, 1), &Cell::Value(0.0));
    let mut csv = Vec::new();
    g.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("anchor\\test,x264-slow-1p,x265-slow-1p\n"), "{text}");
    assert!(text.contains("N/A"));
}

#[test]
fn report_emission_manifest_and_determinism() {
    let ladder = [1000, 2000, 4000, 8000];
    let mut rs = ladder_records("x264", "slow", 1.0, 2);
    rs.extend(ladder_records("x265", "slow", 0.8, 2));
    rs.extend(ladder_records("svt-av1", "6", 0.6, 2));
    let specs = [ScenarioSpec::s1(), ScenarioSpec::s2(), ScenarioSpec::s3()];
    let sums = summarize(&rs, &specs[0]);
    let reports: Vec<_> = specs.iter().map(|s| select_presets(&sums, s).unwrap()).collect();
    let curves: Vec<_> = reports
        .iter()
        .map(|r| scenario_curves(r, &rs, &ladder, MetricKind::Vmaf))
        .collect();
    let keys: Vec<_> = sums.iter().map(|s| s.key.clone()).collect();
    let grids = vec![
        bd_grid(&keys, &rs, BdMethod::Classic, MetricKind::Vmaf, &ladder),
        time_grid(&sums),
    ];

    let dir = tempfile::tempdir().unwrap();
    let manifest = emit_report(dir.path(), &reports, &grids, &curves, &sums).unwrap();
    let count = |k| manifest.iter().filter(|a| a.kind == k).count();
    assert_eq!(count(ArtifactKind::CurveSvg), 3);
    assert_eq!(count(ArtifactKind::GridCsv), 2);
    assert_eq!(count(ArtifactKind::GridSvg), 2);
    assert_eq!(count(ArtifactKind::Report), 1);
    let report = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(report.contains("from x264-slow-1p to svt-av1-6-1p"), "{report}");

    let snapshot: Vec<Vec<u8>> = manifest.iter().map(|a| std::fs::read(&a.path).unwrap()).collect();
    let again = emit_report(dir.path(), &reports, &grids, &curves, &sums).unwrap();
    assert_eq!(again, manifest);
    let rerun: Vec<Vec<u8>> = again.iter().map(|a| std::fs::read(&a.path).unwrap()).collect();
    assert_eq!(rerun, snapshot);
    let leftovers = std::fs::read_dir(dir.path()).unwrap().count();
    assert_eq!(leftovers, manifest.len());

    let other = tempfile::tempdir().unwrap();
    let only = emit_report(other.path(), &reports, &[], &curves, &[]).unwrap();
    assert!(only
        .iter()
        .all(|a| matches!(a.kind, ArtifactKind::CurveCsv | ArtifactKind::CurveSvg | ArtifactKind::Report)));
}

#[test]
fn unwritable_output_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("not-a-dir");
    std::fs::write(&file, b"keep").unwrap();
    let err = emit_report(&file, &[], &[], &[], &[]).unwrap_err();
    assert!(matches!(err, ScenarioError::Io(_)));
    assert_eq!(std::fs::read(&file).unwrap(), b"keep");
}

proptest! {
    #[test]
    fn summarize_is_order_invariant(
        vals in prop::collection::vec((0.0f64..100.0, 100.0f64..10000.0, 1.0f64..5000.0, 0usize..3), 1..40),
        seed in any::<u64>(),
    ) {
        let rs: Vec<MetricRecord> = vals
            .iter()
            .enumerate()
            .map(|(i, (v, k, s, f))| {
                rec(&format!("c{i}"), ["x264", "x265", "svt-av1"][*f], "p", 1, if i % 2 == 0 { 4000 } else { 2000 }, *k, *v, *s)
            })
            .collect();
        let mut shuffled = rs.clone();
        // deterministic permutation from the seed
        let n = shuffled.len();
        let mut state = seed;
        for i in (1..n).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (state >> 33) as usize % (i + 1));
        }
        let spec = ScenarioSpec::s1();
        prop_assert_eq!(summarize(&rs, &spec), summarize(&shuffled, &spec));
    }

    #[test]
    fn selections_satisfy_constraints(
        rows in prop::collection::vec((0usize..3, 0usize..100, 0.5f64..200.0), 1..20),
        budget in 1.0f64..150.0,
    ) {
        let sums: Vec<ConfigSummary> = rows
            .iter()
            .enumerate()
            .map(|(i, (f, c, h))| summary(["a", "b", "c"][*f], &format!("p{i}"), 1, *c, 100, Some(*h)))
            .collect();
        let mut s3 = ScenarioSpec::s3();
        s3.time_budget_hours = Some(budget);
        let mut s3b = s3.clone();
        s3b.objective = Objective::MaxCoverageWithinBudget;
        for spec in [ScenarioSpec::s1(), ScenarioSpec::s2(), s3, s3b] {
            let r = select_presets(&sums, &spec).unwrap();
            prop_assert!(constraint_violations(&r).is_empty());
        }
    }
}
