mod common;

use proptest::prelude::*;
use tempaudit::audit::report::{emit_csv, emit_json, parse_json, render_time_bias_table, RunReport, TopFeatures, CSV_HEADER};
use tempaudit::audit::{
    avg_feature_importance, count_top, count_top_all, grouping_labels, metrics, summarize_importance, time_bias_table,
    Grouping, MetricsReport, TimeBiasRow, TimeBiasTable,
};
use tempaudit::corpus::{lifecycle_flags, Category, FeatureCatalog, FeatureDescriptor, Label, YearRange};
use tempaudit::explainers::{ExplanationVector, Method};
use tempaudit::learners::ModelKind;
use tempaudit::Error;

const WINDOW: YearRange = YearRange { start: 2010, end: 2020 };

fn vectors(values: &[Vec<f64>]) -> Vec<ExplanationVector> {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| ExplanationVector {
            sample_id: format!("s{i}"),
            method: Method::Lime,
            predicted_label: if i % 3 == 0 { Label::Benign } else { Label::Malware },
            values: v.clone(),
        })
        .collect()
}

/// Selection of the top-T ids: repeatedly take the largest remaining
/// nonzero value, lowest id first among equals.
fn oracle_top(values: &[f64], t: usize) -> Vec<usize> {
    let mut taken = vec![false; values.len()];
    let mut out = Vec::new();
    while out.len() < t {
        let mut best: Option<usize> = None;
        for j in 0..values.len() {
            if taken[j] || values[j] == 0.0 {
                continue;
            }
            best = match best {
                Some(b) if values[b] >= values[j] => Some(b),
                _ => Some(j),
            };
        }
        match best {
            Some(b) => {
                taken[b] = true;
                out.push(b);
            }
            None => break,
        }
    }
    out
}

fn oracle_count_top(values: &[Vec<f64>], feature: usize, t: usize) -> f64 {
    let hits = values.iter().filter(|v| oracle_top(v, t).contains(&feature)).count();
    hits as f64 / values.len() as f64
}

fn lifecycle_catalog(d: usize, added: &[usize], removed: &[usize]) -> FeatureCatalog {
    let features = (0..d)
        .map(|j| {
            let mut f = FeatureDescriptor::new(j, format!("f{j}"), Category::ALL[j % 8]);
            if added.contains(&j) {
                f.added_year = Some(2014);
            }
            if removed.contains(&j) {
                f.removed_year = Some(2016);
            }
            f
        })
        .collect();
    FeatureCatalog::new(features).unwrap()
}

fn report(variant: &str, model: ModelKind, table: TimeBiasTable, m: MetricsReport) -> RunReport {
    RunReport {
        variant: variant.to_string(),
        model,
        metrics: m,
        fold_metrics: vec![m],
        time_bias: table,
        top_features: TopFeatures::default(),
        timed_out: false,
    }
}

fn fixed_table(values: &[(Label, usize, f64, f64)]) -> TimeBiasTable {
    TimeBiasTable {
        window: WINDOW,
        grouping: Grouping::Predicted,
        all_neutral: false,
        rows: values
            .iter()
            .map(|&(class, t, a, r)| TimeBiasRow {
                class,
                t,
                n_samples: 100,
                containment_added: a,
                containment_removed: r,
                composition_added: a / 3.0,
                composition_removed: r / 3.0,
            })
            .collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn count_top_matches_sort_and_scan_oracle(values in common::explanation_values(8, 20), t_pick in any::<prop::sample::Index>()) {
        let d = values[0].len();
        let t = 1 + t_pick.index(d);
        let ex = vectors(&values);
        for j in 0..d {
            prop_assert_eq!(count_top(&ex, j, t).unwrap(), oracle_count_top(&values, j, t));
        }
    }

    #[test]
    fn count_top_is_monotone_in_t(values in common::explanation_values(8, 20)) {
        let ex = vectors(&values);
        let d = values[0].len();
        let mut prev = vec![0.0; d];
        for t in 1..=d {
            let cur = count_top_all(&ex, t).unwrap();
            for j in 0..d {
                prop_assert!(cur[j] >= prev[j]);
                prop_assert!((0.0..=1.0).contains(&cur[j]));
            }
            prev = cur;
        }
    }

    #[test]
    fn avg_importance_matches_two_pass_sum(values in proptest::collection::vec(proptest::collection::vec(-1e3f64..1e3, 6), 1..=80)) {
        let ex = vectors(&values);
        let got = avg_feature_importance(&ex).unwrap();
        let n = values.len() as f64;
        for j in 0..6 {
            let first: f64 = values.iter().map(|v| v[j]).sum::<f64>() / n;
            let correction: f64 = values.iter().map(|v| v[j] - first).sum::<f64>() / n;
            let oracle = first + correction;
            prop_assert!((got[j] - oracle).abs() <= 1e-12 * oracle.abs().max(1.0), "{} vs {}", got[j], oracle);
        }
    }

    #[test]
    fn positive_scaling_leaves_rank_statistics_unchanged(values in common::explanation_values(8, 20),
                                                         scale in 1e-3f64..1e3,
                                                         added in proptest::collection::vec(0usize..8, 0..4),
                                                         removed in proptest::collection::vec(0usize..8, 0..4)) {
        let d = values[0].len();
        let ex = vectors(&values);
        let scaled: Vec<Vec<f64>> = values.iter().map(|v| v.iter().map(|x| x * scale).collect()).collect();
        let sx = vectors(&scaled);
        for t in 1..=d {
            prop_assert_eq!(count_top_all(&ex, t).unwrap(), count_top_all(&sx, t).unwrap());
        }
        let cat = lifecycle_catalog(d, &added, &removed);
        let groups = grouping_labels(&ex, &[], Grouping::Predicted);
        let ts: Vec<usize> = (1..=d).collect();
        let a = time_bias_table(&ex, &groups, &cat, WINDOW, &ts, Grouping::Predicted).unwrap();
        let b = time_bias_table(&sx, &groups, &cat, WINDOW, &ts, Grouping::Predicted).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn time_bias_entries_match_per_sample_oracle(values in common::explanation_values(8, 20),
                                                 added in proptest::collection::vec(0usize..8, 0..4),
                                                 removed in proptest::collection::vec(0usize..8, 0..4),
                                                 t in 1usize..=10) {
        let d = values[0].len();
        let cat = lifecycle_catalog(d, &added, &removed);
        let ex = vectors(&values);
        let groups = grouping_labels(&ex, &[], Grouping::Predicted);
        let table = time_bias_table(&ex, &groups, &cat, WINDOW, &[t], Grouping::Predicted).unwrap();
        let total: usize = table.rows.iter().map(|r| r.n_samples).sum();
        prop_assert_eq!(total, ex.len());
        for class in [Label::Malware, Label::Benign] {
            let row = table.row(class, t).unwrap();
            let members: Vec<&Vec<f64>> = values.iter().zip(&groups).filter(|(_, &g)| g == class).map(|(v, _)| v).collect();
            prop_assert_eq!(row.n_samples, members.len());
            let (mut contain, mut comp) = (0.0, 0.0);
            for v in &members {
                let top = oracle_top(v, t);
                let x = top.iter().filter(|&&j| lifecycle_flags(&cat.features[j], WINDOW).added).count();
                let indicator = if x >= 1 { 1.0 } else { 0.0 };
                let share = x as f64 / t as f64;
                prop_assert!(indicator >= share);
                contain += indicator;
                comp += share;
            }
            let n = members.len().max(1) as f64;
            prop_assert!((row.containment_added - contain / n).abs() < 1e-12);
            prop_assert!((row.composition_added - comp / n).abs() < 1e-12);
            for r in [row.containment_added, row.containment_removed, row.composition_added, row.composition_removed] {
                prop_assert!((0.0..=1.0).contains(&r));
            }
        }
    }

    #[test]
    fn metrics_identities(tp in 0usize..200, fp in 0usize..200, fn_ in 0usize..200, tn in 0usize..200) {
        prop_assume!(tp + fp + fn_ + tn > 0);
        let mut pairs = Vec::new();
        pairs.extend(std::iter::repeat((Label::Malware, Label::Malware)).take(tp));
        pairs.extend(std::iter::repeat((Label::Benign, Label::Malware)).take(fp));
        pairs.extend(std::iter::repeat((Label::Malware, Label::Benign)).take(fn_));
        pairs.extend(std::iter::repeat((Label::Benign, Label::Benign)).take(tn));
        let m = metrics(&pairs).unwrap();
        prop_assert_eq!((m.tp, m.fp, m.fn_, m.tn), (tp, fp, fn_, tn));
        prop_assert!((m.accuracy * m.total() as f64 - (tp + tn) as f64).abs() < 1e-9);
        if m.precision > 0.0 && m.recall > 0.0 {
            let (lo, hi) = (m.precision.min(m.recall), m.precision.max(m.recall));
            prop_assert!(m.f1 >= lo - 1e-12 && m.f1 <= hi + 1e-12);
        }
        for v in [m.accuracy, m.precision, m.recall, m.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn grouping_covers_every_explanation(values in common::explanation_values(6, 20), truths in proptest::collection::vec(any::<bool>(), 20)) {
        let ex = vectors(&values);
        let truths: Vec<Label> = truths[..ex.len()].iter().map(|&m| if m { Label::Malware } else { Label::Benign }).collect();
        for grouping in [Grouping::Predicted, Grouping::True] {
            let groups = grouping_labels(&ex, &truths, grouping);
            let s = summarize_importance(&ex, &groups, values[0].len(), &[1, 2]).unwrap();
            let n: usize = s.groups.iter().map(|g| g.n).sum();
            prop_assert_eq!(n, ex.len());
            for g in &s.groups {
                prop_assert!(g.avg_fi.iter().all(|v| v.is_finite()));
                prop_assert!(g.count_top.values().flatten().all(|f| (0.0..=1.0).contains(f)));
            }
        }
    }
}

#[test]
fn metrics_examples() {
    let m = MetricsReport::from_counts(50, 0, 0, 50);
    assert_eq!((m.accuracy, m.f1), (1.0, 1.0));

    let m = MetricsReport::from_counts(8, 2, 1, 9);
    assert!((m.precision - 0.8).abs() < 1e-12);
    assert!((m.recall - 8.0 / 9.0).abs() < 1e-12);
    assert!((m.f1 - 0.842105263).abs() < 1e-6);
    assert!((m.accuracy - 0.85).abs() < 1e-12);

    let m = MetricsReport::from_counts(0, 0, 5, 5);
    assert_eq!((m.precision, m.f1), (0.0, 0.0));

    assert!(matches!(metrics(&[]), Err(Error::EmptyInput(_))));
}

#[test]
fn avg_and_count_top_examples() {
    let ex = vectors(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
    assert_eq!(avg_feature_importance(&ex).unwrap(), vec![0.5, 0.5]);
    let one = vectors(&[vec![0.25, -2.0, 7.0]]);
    assert_eq!(avg_feature_importance(&one).unwrap(), vec![0.25, -2.0, 7.0]);

    let ex = vectors(&[vec![0.9, 0.1]]);
    assert_eq!(count_top(&ex, 0, 1).unwrap(), 1.0);
    assert_eq!(count_top(&ex, 1, 1).unwrap(), 0.0);
    assert_eq!(count_top_all(&ex, 2).unwrap(), vec![1.0, 1.0]);

    assert!(matches!(count_top(&ex, 0, 0), Err(Error::TopOutOfRange { .. })));
    assert!(matches!(count_top(&ex, 0, 3), Err(Error::TopOutOfRange { .. })));
    assert!(matches!(avg_feature_importance(&[]), Err(Error::EmptyInput(_))));
    let ragged = vectors(&[vec![1.0, 2.0], vec![1.0]]);
    assert!(matches!(avg_feature_importance(&ragged), Err(Error::LengthMismatch { .. })));
}

#[test]
fn zero_importance_never_enters_top_set() {
    let ex = vectors(&[vec![0.0, 0.3, 0.0, 0.0]]);
    assert_eq!(ex[0].top(4), vec![1]);
    assert_eq!(count_top_all(&ex, 4).unwrap(), vec![0.0, 1.0, 0.0, 0.0]);
}

#[test]
fn added_feature_ranked_first_gives_full_containment() {
    let cat = lifecycle_catalog(12, &[5], &[]);
    let values: Vec<Vec<f64>> = (0..9)
        .map(|i| (0..12).map(|j| if j == 5 { 10.0 } else { (i + j) as f64 * 0.1 }).collect())
        .collect();
    let ex = vectors(&values);
    let groups = grouping_labels(&ex, &[], Grouping::Predicted);
    let table = time_bias_table(&ex, &groups, &cat, WINDOW, &[1, 10, 20], Grouping::Predicted).unwrap();
    for r in &table.rows {
        assert_eq!(r.containment_added, 1.0, "{r:?}");
        assert_eq!(r.containment_removed, 0.0);
    }
}

#[test]
fn neutral_catalog_gives_zero_table() {
    let cat = lifecycle_catalog(6, &[], &[]);
    let ex = vectors(&[vec![1.0, 2.0, 3.0, 0.5, 0.1, 0.2], vec![0.3, 0.0, 0.1, 0.5, 0.9, 0.2]]);
    let groups = grouping_labels(&ex, &[], Grouping::Predicted);
    let table = time_bias_table(&ex, &groups, &cat, WINDOW, &[10, 20], Grouping::Predicted).unwrap();
    assert!(table.all_neutral);
    for r in &table.rows {
        assert_eq!(
            [r.containment_added, r.containment_removed, r.composition_added, r.composition_removed],
            [0.0; 4]
        );
    }
}

#[test]
fn table_layout_reproduces_reference_row() {
    // Variant 4 row of the reference comparison table
    let table = fixed_table(&[
        (Label::Malware, 10, 0.1834, 0.8445),
        (Label::Malware, 20, 0.1970, 0.8834),
        (Label::Benign, 10, 0.9047, 0.2503),
        (Label::Benign, 20, 0.9187, 0.6471),
    ]);
    let text = render_time_bias_table(&[("Variant 4".to_string(), table)], &[10, 20]);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].contains("Top 10") && lines[0].contains("Top 20"));
    assert!(lines[1].contains("Added") && lines[1].contains("Removed"));
    let cells = |line: &str| -> Vec<String> {
        line.split('|')
            .skip(1)
            .flat_map(str::split_whitespace)
            .map(str::to_string)
            .collect()
    };
    assert!(lines[2].starts_with("Variant 4") && lines[2].contains("Malware"));
    assert_eq!(cells(lines[2]), ["0.1834", "0.8445", "0.1970", "0.8834"]);
    assert!(lines[3].contains("Benign"));
    assert_eq!(cells(lines[3]), ["0.9047", "0.2503", "0.9187", "0.6471"]);
}

#[test]
fn json_report_has_expected_keys() {
    let table = fixed_table(&[(Label::Malware, 10, 0.5, 0.25), (Label::Benign, 10, 0.75, 0.0)]);
    let run = report("v4", ModelKind::Svm, table, MetricsReport::from_counts(8, 2, 1, 9));
    let text = emit_json(std::slice::from_ref(&run)).unwrap();
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(value["audit_schema"], "1");
    let obj = value["runs"][0].as_object().unwrap();
    for key in ["metrics", "time_bias", "top_features"] {
        assert!(obj.contains_key(key), "missing {key}");
    }
    let doc = parse_json(&text).unwrap();
    assert_eq!(doc.runs, vec![run]);
    assert!(matches!(emit_json(&[]), Err(Error::EmptyInput(_))));
}

#[test]
fn csv_round_trips_within_formatting_precision() {
    let t1 = fixed_table(&[
        (Label::Benign, 20, 0.918_72, 0.647_11),
        (Label::Malware, 10, 0.183_44, 0.844_51),
        (Label::Benign, 10, 0.904_66, 0.250_33),
        (Label::Malware, 20, 0.197_01, 0.883_49),
    ]);
    let t2 = fixed_table(&[(Label::Malware, 10, 0.1, 0.2), (Label::Benign, 10, 0.3, 0.4)]);
    let runs = vec![
        report("v4", ModelKind::AttentionMlp, t1, MetricsReport::from_counts(90, 3, 7, 95)),
        report("v1", ModelKind::Svm, t2, MetricsReport::from_counts(60, 30, 40, 70)),
    ];
    let csv = emit_csv(&runs).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), CSV_HEADER);
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2 * 2 + 4 * 2);
    // deterministic order: variant, then model, class, T, lifecycle
    let keys: Vec<(String, String, String, String)> = rows
        .iter()
        .map(|r| (r[0].into(), r[2].into(), r[3].into(), r[4].into()))
        .collect();
    assert_eq!(keys[0], ("v1".into(), "malware".into(), "10".into(), "added".into()));
    assert_eq!(keys[4], ("v4".into(), "malware".into(), "10".into(), "added".into()));
    assert_eq!(keys[11], ("v4".into(), "benign".into(), "20".into(), "removed".into()));
    for row in &rows {
        let run = runs.iter().find(|r| r.variant == row[0]).unwrap();
        assert_eq!(row[1], run.model.as_str());
        let class = if row[2] == "malware" { Label::Malware } else { Label::Benign };
        let t: usize = row[3].parse().unwrap();
        let tb = run.time_bias.row(class, t).unwrap();
        let (contain, comp) = match row[4] {
            "added" => (tb.containment_added, tb.composition_added),
            _ => (tb.containment_removed, tb.composition_removed),
        };
        let num = |i: usize| row[i].parse::<f64>().unwrap();
        assert_eq!(row[5].split('.').nth(1).unwrap().len(), 4);
        for (got, want) in [
            (num(5), contain),
            (num(6), comp),
            (num(7), run.metrics.accuracy),
            (num(8), run.metrics.precision),
            (num(9), run.metrics.recall),
            (num(10), run.metrics.f1),
        ] {
            assert!((got - want).abs() <= 5e-5 + 1e-12, "{got} vs {want}");
        }
    }
    assert_eq!(csv, emit_csv(&[runs[1].clone(), runs[0].clone()]).unwrap());
}
