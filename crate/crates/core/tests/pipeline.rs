mod common;

use std::fs;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::tempdir;

use salbench::metrics::MetricKind;
use salbench::reliability::AlphaLevel;
use salbench::report::{self, describe, reliability_report, summarize, ReportError};
use salbench::saliency::{self, validate_saliency_dir};
use salbench::synthetic::{gen_method_family, parse_methods};

#[test]
fn evaluates_every_pair_and_survives_a_corrupt_file() {
    let manifest = common::two_class_manifest(200, 4, 9);
    let methods = parse_methods("perfect,inverted,noise,positive").unwrap();
    let tmp = tempdir().unwrap();
    let dir = tmp.path().join("maps");
    gen_method_family(&manifest, &methods, 77, &dir).unwrap();
    assert!(validate_saliency_dir(&dir, &manifest).is_empty());

    let registry = saliency::read_registry(&dir).unwrap();
    let outcome = report::evaluate(&manifest, &dir, &registry);
    assert!(outcome.is_clean(), "{:?}", outcome.errors);
    assert_eq!(outcome.records.len(), 800);
    assert!(outcome.absent.is_empty());

    for r in outcome.records.iter().filter(|r| r.method_id == "m0_perfect") {
        for (kind, v) in r.metrics.iter() {
            let expected = match kind {
                MetricKind::FalseNegativeRate | MetricKind::FalsePositiveRate => 0.0,
                _ => 1.0,
            };
            assert_eq!(v, Some(expected), "{kind:?}");
        }
    }
    for r in outcome.records.iter().filter(|r| r.method_id == "m3_positive") {
        assert!(r.metrics.precision.is_some());
        assert_eq!(r.metrics.iter().filter(|(_, v)| v.is_none()).count(), 6);
    }

    // Records survive a CSV round trip and mark undefined metrics as NA.
    let mut csv = Vec::new();
    report::write_records(&mut csv, &outcome.records).unwrap();
    let text = String::from_utf8(csv.clone()).unwrap();
    let positive_line = text.lines().find(|l| l.contains("m3_positive")).unwrap();
    assert_eq!(positive_line.matches(",NA").count(), 6);
    assert_eq!(report::read_records(csv.as_slice()).unwrap(), outcome.records);

    let victim = saliency::map_path(&dir, "m1_inverted", &manifest.mosaics[17].mosaic_id);
    let mut bytes = fs::read(&victim).unwrap();
    bytes[20] ^= 0x40;
    fs::write(&victim, bytes).unwrap();
    assert_eq!(validate_saliency_dir(&dir, &manifest).len(), 1);

    let outcome = report::evaluate(&manifest, &dir, &registry);
    assert_eq!(outcome.records.len(), 799);
    assert_eq!(outcome.errors.len(), 1);
    let err = &outcome.errors[0];
    assert_eq!(err.method_id, "m1_inverted");
    assert_eq!(err.mosaic_id, manifest.mosaics[17].mosaic_id);
    assert_eq!(err.path.as_deref(), Some(victim.as_path()));
}

#[test]
fn missing_maps_are_reported_as_absent() {
    let manifest = common::two_class_manifest(6, 4, 3);
    let methods = parse_methods("perfect,noise").unwrap();
    let tmp = tempdir().unwrap();
    gen_method_family(&manifest, &methods, 1, tmp.path()).unwrap();
    fs::remove_file(saliency::map_path(tmp.path(), "m1_noise", &manifest.mosaics[2].mosaic_id)).unwrap();
    let registry = saliency::read_registry(tmp.path()).unwrap();
    let outcome = report::evaluate(&manifest, tmp.path(), &registry);
    assert!(outcome.is_clean());
    assert_eq!(outcome.records.len(), 11);
    assert_eq!(
        outcome.absent,
        vec![(manifest.mosaics[2].mosaic_id.clone(), "m1_noise".to_string())]
    );
}

/// Order statistic by counting: the k-th smallest value is the one with
/// fewer than k+1 values strictly below it and at least k+1 at or below it.
fn kth_smallest(values: &[f64], k: usize) -> f64 {
    *values
        .iter()
        .find(|&&v| {
            let below = values.iter().filter(|&&w| w < v).count();
            let at_or_below = values.iter().filter(|&&w| w <= v).count();
            below <= k && k < at_or_below
        })
        .unwrap()
}

fn oracle_quantile(values: &[f64], q: f64) -> f64 {
    let pos = (values.len() - 1) as f64 * q;
    let lo = kth_smallest(values, pos.floor() as usize);
    let hi = kth_smallest(values, pos.ceil() as usize);
    lo + (hi - lo) * (pos - pos.floor())
}

#[test]
fn describe_matches_counting_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for n in [1usize, 2, 3, 4, 7, 10, 101, 1000] {
        let values: Vec<f64> = (0..n).map(|_| (rng.gen_range(0..50) as f64) / 7.0).collect();
        let (mean, median, q1, q3, min, max) = describe(&values).unwrap();
        let exact_mean = values.iter().sum::<f64>() / n as f64;
        assert!((mean - exact_mean).abs() <= 1e-12);
        assert_eq!(min, kth_smallest(&values, 0));
        assert_eq!(max, kth_smallest(&values, n - 1));
        for (got, q) in [(median, 0.5), (q1, 0.25), (q3, 0.75)] {
            assert!((got - oracle_quantile(&values, q)).abs() <= 1e-12, "n={n} q={q}");
        }
    }
    assert_eq!(describe(&[]), None);
}

#[test]
fn summary_counts_only_defined_values() {
    let manifest = common::two_class_manifest(20, 4, 4);
    let methods = parse_methods("noise,positive").unwrap();
    let tmp = tempdir().unwrap();
    gen_method_family(&manifest, &methods, 5, tmp.path()).unwrap();
    let registry = saliency::read_registry(tmp.path()).unwrap();
    let records = report::evaluate(&manifest, tmp.path(), &registry).records;
    let rows = summarize(&records).unwrap();
    assert_eq!(rows.iter().filter(|r| r.method_id == "m0_noise").count(), 7);
    let positive: Vec<_> = rows.iter().filter(|r| r.method_id == "m1_positive").collect();
    assert_eq!(positive.len(), 1);
    assert_eq!(positive[0].metric_name, "precision");
    assert_eq!(positive[0].count_defined, 20);
    assert!(matches!(summarize(&[]), Err(ReportError::NoRecords)));
}

#[test]
fn positive_only_methods_enter_only_the_precision_row() {
    let manifest = common::two_class_manifest(30, 4, 6);
    let tmp = tempdir().unwrap();

    let mixed = parse_methods("noise,positive").unwrap();
    let dir = tmp.path().join("mixed");
    gen_method_family(&manifest, &mixed, 2, &dir).unwrap();
    let records = report::evaluate(&manifest, &dir, &saliency::read_registry(&dir).unwrap()).records;
    let rel = reliability_report(&records, &MetricKind::ALL, AlphaLevel::Ordinal).unwrap();
    assert_eq!(rel.alpha.rows.len(), 1);
    assert_eq!(rel.alpha.rows[0].metric, "precision");
    assert_eq!(rel.alpha.rows[0].methods, vec!["m0_noise", "m1_positive"]);
    assert_eq!(rel.rho.len(), 1);

    let positives = parse_methods("positive,positive,positive").unwrap();
    let dir = tmp.path().join("positive");
    gen_method_family(&manifest, &positives, 2, &dir).unwrap();
    let records = report::evaluate(&manifest, &dir, &saliency::read_registry(&dir).unwrap()).records;
    let rel = reliability_report(&records, &MetricKind::ALL, AlphaLevel::Ordinal).unwrap();
    let metrics: Vec<&str> = rel.alpha.rows.iter().map(|r| r.metric.as_str()).collect();
    assert_eq!(metrics, vec!["precision"]);
    assert_eq!(rel.alpha.rows[0].methods.len(), 3);
    assert!(rel.alpha_json().unwrap().contains("\"level\": \"ordinal\""));
}

#[test]
fn one_method_is_too_few() {
    let manifest = common::two_class_manifest(10, 4, 6);
    let tmp = tempdir().unwrap();
    gen_method_family(&manifest, &parse_methods("noise").unwrap(), 2, tmp.path()).unwrap();
    let records = report::evaluate(&manifest, tmp.path(), &saliency::read_registry(tmp.path()).unwrap()).records;
    let err = reliability_report(&records, &MetricKind::ALL, AlphaLevel::Ordinal).unwrap_err();
    assert!(matches!(err, ReportError::TooFewMethods { methods: 1 }), "{err}");
}
