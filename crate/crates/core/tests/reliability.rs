//! Ranking, Krippendorff's α and Spearman's ρ against brute-force oracles.

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use salbench::reliability::{
    inter_method_matrix, krippendorff_alpha, rank_row, spearman_rho, AlphaLevel, RatingMatrix, ReliabilityError,
};

/// Rank by counting: 1 + #greater + (#equal - 1) / 2.
fn counting_ranks(row: &[Option<f64>]) -> Vec<Option<f64>> {
    row.iter()
        .map(|v| {
            v.map(|v| {
                let greater = row.iter().flatten().filter(|w| **w > v).count();
                let equal = row.iter().flatten().filter(|w| **w == v).count();
                1.0 + greater as f64 + (equal as f64 - 1.0) / 2.0
            })
        })
        .collect()
}

#[test]
fn ranks_agree_with_counting_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let len = rng.gen_range(2..15);
        let row: Vec<Option<f64>> = (0..len)
            .map(|_| match rng.gen_range(0..6) {
                0 => None,
                // Coarse values force ties.
                1 | 2 => Some(f64::from(rng.gen_range(0..4)) / 4.0),
                _ => Some(rng.gen()),
            })
            .collect();
        if row.iter().flatten().count() < 2 {
            assert!(rank_row(&row).is_err());
            continue;
        }
        assert_eq!(rank_row(&row).unwrap(), counting_ranks(&row));
    }
}

/// Pearson correlation of counting ranks, computed from raw sums.
fn spearman_oracle(x: &[f64], y: &[f64]) -> f64 {
    let rx: Vec<f64> = counting_ranks(&x.iter().map(|&v| Some(v)).collect::<Vec<_>>()).into_iter().flatten().collect();
    let ry: Vec<f64> = counting_ranks(&y.iter().map(|&v| Some(v)).collect::<Vec<_>>()).into_iter().flatten().collect();
    let n = rx.len() as f64;
    let sx: f64 = rx.iter().sum();
    let sy: f64 = ry.iter().sum();
    let sxx: f64 = rx.iter().map(|a| a * a).sum();
    let syy: f64 = ry.iter().map(|a| a * a).sum();
    let sxy: f64 = rx.iter().zip(&ry).map(|(a, b)| a * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

#[test]
fn worked_spearman_pair() {
    let x = [1.0, 2.0, 3.0, 4.0, 5.0];
    let y = [2.0, 1.0, 4.0, 3.0, 5.0];
    // Σd² = 4 → 1 - 6·4 / (5·24) = 0.8
    let rho = spearman_rho(&x, &y).unwrap();
    assert!((rho - 0.8).abs() < 1e-12);
    assert!((spearman_oracle(&x, &y) - 0.8).abs() < 1e-12);
}

#[test]
fn spearman_matches_oracle_with_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..500 {
        let n = rng.gen_range(3..40);
        let x: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0..6))).collect();
        let y: Vec<f64> = x.iter().map(|v| v + f64::from(rng.gen_range(-3..=3))).collect();
        match spearman_rho(&x, &y) {
            Ok(rho) => assert!((rho - spearman_oracle(&x, &y)).abs() < 1e-12),
            Err(e) => assert_eq!(e, ReliabilityError::ZeroVariance),
        }
    }
}

#[test]
fn spearman_null_distribution() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let pairs = 1000;
    let within = (0..pairs)
        .filter(|_| {
            let x: Vec<f64> = (0..200).map(|_| rng.gen()).collect();
            let y: Vec<f64> = (0..200).map(|_| rng.gen()).collect();
            spearman_rho(&x, &y).unwrap().abs() < 0.15
        })
        .count();
    assert!(within as f64 / pairs as f64 >= 0.95, "{within}/{pairs}");
}

#[test]
fn rho_matrix_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let base: Vec<f64> = (0..50).map(|_| rng.gen()).collect();
    let rows: Vec<Vec<f64>> = base
        .iter()
        .map(|&b| vec![b, b, b * 0.5 + rng.gen::<f64>() * 0.5, rng.gen(), -b])
        .collect();
    let rho = inter_method_matrix(&RatingMatrix::from_rows(&rows, "precision").unwrap());
    assert_eq!(rho.get(0, 1), Some(1.0));
    assert_eq!(rho.get(0, 4), Some(-1.0));
    for a in 0..5 {
        assert_eq!(rho.get(a, a), Some(1.0));
        for b in 0..5 {
            let v = rho.get(a, b).unwrap();
            assert_eq!(Some(v), rho.get(b, a));
            assert!((-1.0..=1.0).contains(&v));
        }
    }
}

/// Ordinal α straight from its pairwise definition, with marginals counted
/// over pairable values.
fn alpha_oracle(rows: &[Vec<Option<f64>>]) -> f64 {
    let units = rows[0].len();
    let ranked: Vec<Vec<Option<f64>>> = rows
        .iter()
        .filter(|r| r.iter().flatten().count() >= 2)
        .map(|r| counting_ranks(r))
        .collect();
    let unit_values: Vec<Vec<f64>> = (0..units)
        .map(|u| ranked.iter().filter_map(|r| r[u]).collect::<Vec<_>>())
        .filter(|v| v.len() >= 2)
        .collect();
    let all: Vec<f64> = unit_values.iter().flatten().copied().collect();
    let n = all.len() as f64;
    let count = |v: f64| all.iter().filter(|w| **w == v).count() as f64;
    let delta2 = |a: f64, b: f64| {
        if a == b {
            return 0.0;
        }
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let between: f64 = all.iter().filter(|w| **w >= lo && **w <= hi).count() as f64;
        let d = between - (count(lo) + count(hi)) / 2.0;
        d * d
    };
    let mut observed = 0.0;
    for values in &unit_values {
        let mut s = 0.0;
        for (i, a) in values.iter().enumerate() {
            for (j, b) in values.iter().enumerate() {
                if i != j {
                    s += delta2(*a, *b);
                }
            }
        }
        observed += s / (values.len() - 1) as f64;
    }
    let mut expected = 0.0;
    for (i, a) in all.iter().enumerate() {
        for (j, b) in all.iter().enumerate() {
            if i != j {
                expected += delta2(*a, *b);
            }
        }
    }
    1.0 - (observed / n) / (expected / (n * (n - 1.0)))
}

fn matrix(rows: &[Vec<Option<f64>>]) -> RatingMatrix {
    let units = rows[0].len();
    RatingMatrix::new(
        (0..rows.len()).map(|i| format!("img{i}")).collect(),
        (0..units).map(|u| format!("method{u}")).collect(),
        rows.iter().flatten().copied().collect(),
        "precision",
    )
    .unwrap()
}

#[test]
fn alpha_matches_pairwise_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..200 {
        let raters = rng.gen_range(2..25);
        let units = rng.gen_range(2..6);
        let rows: Vec<Vec<Option<f64>>> = (0..raters)
            .map(|_| {
                (0..units)
                    .map(|u| {
                        (rng.gen::<f64>() > 0.15)
                            .then(|| (u as f64 * 0.2 + rng.gen::<f64>()).min(1.0 + f64::from(rng.gen_range(0..2))))
                    })
                    .collect()
            })
            .collect();
        let m = matrix(&rows);
        match krippendorff_alpha(&m, AlphaLevel::Ordinal) {
            Ok(a) => {
                let oracle = alpha_oracle(&rows);
                assert!((a.alpha - oracle).abs() < 1e-9, "{} vs {oracle}", a.alpha);
            }
            Err(e) => assert!(matches!(
                e,
                ReliabilityError::DegenerateData | ReliabilityError::NoPairableValues
            )),
        }
    }
}

fn random_ranking_matrix(rng: &mut ChaCha8Rng, raters: usize, units: usize) -> RatingMatrix {
    let rows: Vec<Vec<f64>> = (0..raters)
        .map(|_| {
            let mut r: Vec<f64> = (1..=units).map(|v| v as f64).collect();
            r.shuffle(rng);
            r
        })
        .collect();
    RatingMatrix::from_rows(&rows, "x").unwrap()
}

#[test]
fn random_rankings_give_alpha_near_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let a = krippendorff_alpha(&random_ranking_matrix(&mut rng, 500, 8), AlphaLevel::Ordinal).unwrap();
    assert!(a.alpha.abs() < 0.05, "{}", a.alpha);
}

#[test]
fn reversed_raters_disagree() {
    let m = RatingMatrix::from_rows(&[vec![0.9, 0.7, 0.4, 0.1], vec![0.1, 0.4, 0.7, 0.9]], "x").unwrap();
    assert!(krippendorff_alpha(&m, AlphaLevel::Ordinal).unwrap().alpha < 0.0);
}

/// `modal` raters repeat one ranking; `noisy` raters shuffle it.
fn perfect_plus_noise(rng: &mut ChaCha8Rng, modal: usize, noisy: usize, units: usize) -> Vec<Vec<f64>> {
    let base: Vec<f64> = (0..units).map(|u| u as f64).collect();
    let mut rows = vec![base.clone(); modal];
    for _ in 0..noisy {
        let mut r = base.clone();
        r.shuffle(rng);
        rows.push(r);
    }
    rows
}

fn alpha_of(rows: &[Vec<f64>]) -> f64 {
    krippendorff_alpha(&RatingMatrix::from_rows(rows, "x").unwrap(), AlphaLevel::Ordinal)
        .unwrap()
        .alpha
}

#[test]
fn modal_raters_support_agreement() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (mut sum_with, mut sum_without, mut draws) = (0.0, 0.0, 0);
    for _ in 0..2000 {
        let units = rng.gen_range(3..7);
        let modal = rng.gen_range(3..10);
        let noisy = rng.gen_range(0..6);
        let rows = perfect_plus_noise(&mut rng, modal, noisy, units);
        let alpha_with = alpha_of(&rows);
        // Drop one modal rater (the first row).
        let alpha_without = alpha_of(&rows[1..]);
        sum_with += alpha_with;
        sum_without += alpha_without;
        draws += 1;
        if noisy == 0 {
            assert!((alpha_with - 1.0).abs() <= 1e-9);
            assert!((alpha_without - 1.0).abs() <= 1e-9);
        } else if modal > noisy {
            assert!(
                alpha_with >= alpha_without - 1e-9,
                "modal={modal} noisy={noisy}: {alpha_with} < {alpha_without}"
            );
        }
    }
    assert!(sum_with / draws as f64 > sum_without / draws as f64);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn spearman_is_rank_invariant(x in prop::collection::vec(-100.0f64..100.0, 3..60)) {
        let increasing: Vec<f64> = x.iter().map(|v| v.powi(3) + 2.0 * v).collect();
        match spearman_rho(&x, &increasing) {
            Ok(rho) => prop_assert_eq!(rho, 1.0),
            Err(e) => prop_assert_eq!(e, ReliabilityError::ZeroVariance),
        }
        if let Ok(rho) = spearman_rho(&x, &x.iter().map(|v| -v).collect::<Vec<_>>()) {
            prop_assert_eq!(rho, -1.0);
        }
    }

    #[test]
    fn alpha_bounded_and_ordinal_invariant(
        rows in prop::collection::vec(prop::collection::vec(prop::option::weighted(0.9, 0.0f64..1.0), 4), 2..30)
    ) {
        let m = matrix(&rows);
        let transformed = m.map_scores(|v| (3.0 * v).exp() - 7.0).unwrap();
        match (krippendorff_alpha(&m, AlphaLevel::Ordinal), krippendorff_alpha(&transformed, AlphaLevel::Ordinal)) {
            (Ok(a), Ok(b)) => {
                prop_assert!((-1.0 - 1e-12..=1.0).contains(&a.alpha), "{}", a.alpha);
                prop_assert_eq!(a.alpha, b.alpha);
            }
            (Err(a), Err(b)) => prop_assert_eq!(a, b),
            other => prop_assert!(false, "{:?}", other),
        }
    }
}
