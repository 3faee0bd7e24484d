//! Reliability of saliency metrics.
//!
//! Inter-rater reliability treats every mosaic as a rater that ranks the
//! saliency methods by a metric; agreement of those rankings across mosaics is
//! measured with Krippendorff's α. Inter-method reliability asks whether two
//! methods find the same mosaics easy or hard, measured with Spearman's ρ over
//! per-mosaic scores.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReliabilityError {
    #[error("too few values: need {needed}, found {found}")]
    TooFewValues { needed: usize, found: usize },
    #[error("rating matrix needs at least 2 raters and 2 units (got {raters} x {units})")]
    TooSmall { raters: usize, units: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite score for rater `{rater}`, unit `{unit}`")]
    NonFinite { rater: String, unit: String },
    #[error("no unit is rated by two or more raters")]
    NoPairableValues,
    #[error("undefined agreement: all pairable values are identical (expected disagreement is 0)")]
    DegenerateData,
    #[error("undefined correlation: zero rank variance")]
    ZeroVariance,
}

pub type Result<T, E = ReliabilityError> = std::result::Result<T, E>;

/// Scores of every unit (method) as seen by every rater (mosaic).
#[derive(Debug, Clone, PartialEq)]
pub struct RatingMatrix {
    pub raters: Vec<String>,
    pub units: Vec<String>,
    /// Row-major, `raters.len() × units.len()`; `None` is a missing score.
    scores: Vec<Option<f64>>,
    pub metric_name: String,
}

impl RatingMatrix {
    pub fn new(
        raters: Vec<String>,
        units: Vec<String>,
        scores: Vec<Option<f64>>,
        metric_name: impl Into<String>,
    ) -> Result<Self> {
        if raters.len() < 2 || units.len() < 2 {
            return Err(ReliabilityError::TooSmall {
                raters: raters.len(),
                units: units.len(),
            });
        }
        if scores.len() != raters.len() * units.len() {
            return Err(ReliabilityError::ShapeMismatch(format!(
                "{} scores for {} raters x {} units",
                scores.len(),
                raters.len(),
                units.len()
            )));
        }
        if let Some(i) = scores.iter().position(|s| s.is_some_and(|v| !v.is_finite())) {
            return Err(ReliabilityError::NonFinite {
                rater: raters[i / units.len()].clone(),
                unit: units[i % units.len()].clone(),
            });
        }
        Ok(RatingMatrix {
            raters,
            units,
            scores,
            metric_name: metric_name.into(),
        })
    }

    /// Builds a matrix from complete rows.
    pub fn from_rows(rows: &[Vec<f64>], metric_name: impl Into<String>) -> Result<Self> {
        let units = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != units) {
            return Err(ReliabilityError::ShapeMismatch("ragged rows".into()));
        }
        RatingMatrix::new(
            (0..rows.len()).map(|i| format!("r{i}")).collect(),
            (0..units).map(|j| format!("u{j}")).collect(),
            rows.iter().flatten().map(|&v| Some(v)).collect(),
            metric_name,
        )
    }

    pub fn get(&self, rater: usize, unit: usize) -> Option<f64> {
        self.scores[rater * self.units.len() + unit]
    }

    pub fn row(&self, rater: usize) -> &[Option<f64>] {
        let n = self.units.len();
        &self.scores[rater * n..(rater + 1) * n]
    }

    pub fn column(&self, unit: usize) -> Vec<Option<f64>> {
        (0..self.raters.len()).map(|r| self.get(r, unit)).collect()
    }

    /// Copy keeping only the listed raters.
    pub fn select_raters(&self, keep: &[usize]) -> Result<Self> {
        RatingMatrix::new(
            keep.iter().map(|&r| self.raters[r].clone()).collect(),
            self.units.clone(),
            keep.iter().flat_map(|&r| self.row(r).iter().copied()).collect(),
            self.metric_name.clone(),
        )
    }

    /// Copy with `f` applied to every present score.
    pub fn map_scores(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        RatingMatrix::new(
            self.raters.clone(),
            self.units.clone(),
            self.scores.iter().map(|s| s.map(&f)).collect(),
            self.metric_name.clone(),
        )
    }
}

/// Fractional ranks of a score row: the highest score gets rank 1, ties share
/// the mean of their positions and missing entries stay missing.
pub fn rank_row(scores: &[Option<f64>]) -> Result<Vec<Option<f64>>> {
    let mut present: Vec<(usize, f64)> = scores
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.map(|v| (i, v)))
        .collect();
    if present.len() < 2 {
        return Err(ReliabilityError::TooFewValues {
            needed: 2,
            found: present.len(),
        });
    }
    present.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal));

    let mut ranks = vec![None; scores.len()];
    let mut start = 0;
    while start < present.len() {
        let mut end = start + 1;
        while end < present.len() && present[end].1 == present[start].1 {
            end += 1;
        }
        // Positions start+1 ..= end share their mean.
        let rank = (start + 1 + end) as f64 / 2.0;
        for &(i, _) in &present[start..end] {
            ranks[i] = Some(rank);
        }
        start = end;
    }
    Ok(ranks)
}

/// Measurement level of α.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaLevel {
    /// Each rater's scores are replaced by their ranks and compared with the
    /// ordinal difference function.
    #[default]
    Ordinal,
    /// Raw scores with squared-difference distance.
    Interval,
}

impl fmt::Display for AlphaLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AlphaLevel::Ordinal => "ordinal",
            AlphaLevel::Interval => "interval",
        })
    }
}

impl FromStr for AlphaLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ordinal" => Ok(AlphaLevel::Ordinal),
            "interval" => Ok(AlphaLevel::Interval),
            other => Err(format!("unknown alpha level `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaResult {
    pub alpha: f64,
    /// D_o
    pub observed_disagreement: f64,
    /// D_e
    pub expected_disagreement: f64,
    /// Number of pairable values (n).
    pub pairable_values: usize,
    /// Raters that contributed at least one pairable value.
    pub raters_used: usize,
}

/// Krippendorff's α over a rating matrix, units being the rated methods.
///
/// At the ordinal level a rater with fewer than two scores expresses no
/// ranking and is skipped. Units rated by fewer than two raters are not
/// pairable and drop out of the coincidence matrix.
pub fn krippendorff_alpha(m: &RatingMatrix, level: AlphaLevel) -> Result<AlphaResult> {
    let n_units = m.units.len();
    let mut unit_values: Vec<Vec<f64>> = vec![Vec::new(); n_units];
    let mut rater_units: Vec<Vec<usize>> = Vec::new();
    for r in 0..m.raters.len() {
        let row: Vec<Option<f64>> = match level {
            AlphaLevel::Ordinal => match rank_row(m.row(r)) {
                Ok(ranks) => ranks,
                Err(_) => continue,
            },
            AlphaLevel::Interval => m.row(r).to_vec(),
        };
        let mut touched = Vec::new();
        for (u, v) in row.into_iter().enumerate() {
            if let Some(v) = v {
                unit_values[u].push(v);
                touched.push(u);
            }
        }
        rater_units.push(touched);
    }
    let pairable: Vec<bool> = unit_values.iter().map(|v| v.len() >= 2).collect();
    let raters_used = rater_units
        .iter()
        .filter(|units| units.iter().any(|&u| pairable[u]))
        .count();
    let units: Vec<&Vec<f64>> = unit_values.iter().filter(|v| v.len() >= 2).collect();
    let n: usize = units.iter().map(|v| v.len()).sum();
    if n < 2 {
        return Err(ReliabilityError::NoPairableValues);
    }

    let (observed, expected) = match level {
        AlphaLevel::Ordinal => ordinal_disagreement(&units, n),
        AlphaLevel::Interval => interval_disagreement(&units, n),
    };
    if expected <= 0.0 {
        return Err(ReliabilityError::DegenerateData);
    }
    Ok(AlphaResult {
        alpha: 1.0 - observed / expected,
        observed_disagreement: observed,
        expected_disagreement: expected,
        pairable_values: n,
        raters_used,
    })
}

/// Returns `(D_o, D_e)` for the ordinal difference function
/// `δ²(c, k) = (Σ_{g=c..k} n_g − (n_c + n_k)/2)²`.
fn ordinal_disagreement(units: &[&Vec<f64>], n: usize) -> (f64, f64) {
    let mut levels: Vec<f64> = units.iter().flat_map(|v| v.iter().copied()).collect();
    levels.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    levels.dedup();
    let k = levels.len();
    let index = |v: f64| {
        levels
            .binary_search_by(|probe| probe.partial_cmp(&v).expect("finite values"))
            .expect("value is a level")
    };

    // Coincidence matrix: each ordered pair of values within a unit adds
    // 1 / (m_u - 1).
    let mut coincidence = vec![0.0f64; k * k];
    let mut counts = vec![0usize; k];
    for values in units {
        let weight = 1.0 / (values.len() - 1) as f64;
        let present: Vec<usize> = values.iter().map(|&v| index(v)).collect();
        for &c in &present {
            counts[c] += 1;
        }
        let mut distinct = present.clone();
        distinct.sort_unstable();
        distinct.dedup();
        for &c in &distinct {
            for &d in &distinct {
                let pairs = if c == d {
                    counts[c] * (counts[c] - 1)
                } else {
                    counts[c] * counts[d]
                };
                coincidence[c * k + d] += pairs as f64 * weight;
            }
        }
        for &c in &distinct {
            counts[c] = 0;
        }
    }

    let marginals: Vec<f64> = (0..k).map(|c| coincidence[c * k..(c + 1) * k].iter().sum()).collect();
    let mut cumulative = vec![0.0f64; k + 1];
    for c in 0..k {
        cumulative[c + 1] = cumulative[c] + marginals[c];
    }
    let delta2 = |c: usize, d: usize| {
        let (lo, hi) = if c <= d { (c, d) } else { (d, c) };
        let span = cumulative[hi + 1] - cumulative[lo] - (marginals[lo] + marginals[hi]) / 2.0;
        span * span
    };

    let mut observed = 0.0;
    let mut expected = 0.0;
    for c in 0..k {
        for d in 0..k {
            if c == d {
                continue;
            }
            let dist = delta2(c, d);
            observed += coincidence[c * k + d] * dist;
            expected += marginals[c] * marginals[d] * dist;
        }
    }
    let n = n as f64;
    (observed / n, expected / (n * (n - 1.0)))
}

/// Interval level via moments: `Σ_{i≠j} (v_i − v_j)² = 2(mΣv² − (Σv)²)`.
fn interval_disagreement(units: &[&Vec<f64>], n: usize) -> (f64, f64) {
    let pair_sum = |values: &mut dyn Iterator<Item = f64>| {
        let (mut count, mut mean, mut m2) = (0.0f64, 0.0f64, 0.0f64);
        for v in values {
            count += 1.0;
            let delta = v - mean;
            mean += delta / count;
            m2 += delta * (v - mean);
        }
        // m * Σ(v - mean)² equals mΣv² − (Σv)².
        2.0 * count * m2
    };
    let observed: f64 = units
        .iter()
        .map(|v| pair_sum(&mut v.iter().copied()) / (v.len() - 1) as f64)
        .sum();
    let expected = pair_sum(&mut units.iter().flat_map(|v| v.iter().copied()));
    let n = n as f64;
    (observed / n, expected / (n * (n - 1.0)))
}

/// Spearman's ρ: the Pearson correlation of fractional ranks.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(ReliabilityError::ShapeMismatch(format!(
            "lengths {} and {} differ",
            x.len(),
            y.len()
        )));
    }
    let x: Vec<Option<f64>> = x.iter().map(|&v| Some(v)).collect();
    let y: Vec<Option<f64>> = y.iter().map(|&v| Some(v)).collect();
    spearman_rho_paired(&x, &y)
}

/// Spearman's ρ with pairwise deletion of pairs where either side is missing.
pub fn spearman_rho_paired(x: &[Option<f64>], y: &[Option<f64>]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(ReliabilityError::ShapeMismatch(format!(
            "lengths {} and {} differ",
            x.len(),
            y.len()
        )));
    }
    let (xs, ys): (Vec<Option<f64>>, Vec<Option<f64>>) = x
        .iter()
        .zip(y)
        .filter(|(a, b)| a.is_some() && b.is_some())
        .map(|(a, b)| (*a, *b))
        .unzip();
    if xs.len() < 3 {
        return Err(ReliabilityError::TooFewValues {
            needed: 3,
            found: xs.len(),
        });
    }
    if xs.iter().chain(&ys).any(|v| v.is_some_and(|v| !v.is_finite())) {
        return Err(ReliabilityError::NonFinite {
            rater: "-".into(),
            unit: "-".into(),
        });
    }
    let rx: Vec<f64> = rank_row(&xs)?.into_iter().flatten().collect();
    let ry: Vec<f64> = rank_row(&ys)?.into_iter().flatten().collect();
    pearson(&rx, &ry)
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(ReliabilityError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Pairwise Spearman correlations between methods; `None` marks a pair whose
/// correlation is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoMatrix {
    pub method_ids: Vec<String>,
    pub rho: Vec<Vec<Option<f64>>>,
}

impl RhoMatrix {
    pub fn get(&self, a: usize, b: usize) -> Option<f64> {
        self.rho[a][b]
    }
}

/// Spearman's ρ over raters (mosaics) for every pair of units (methods).
pub fn inter_method_matrix(m: &RatingMatrix) -> RhoMatrix {
    let n = m.units.len();
    let columns: Vec<Vec<Option<f64>>> = (0..n).map(|u| m.column(u)).collect();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    let values: Vec<Option<f64>> = pairs
        .par_iter()
        .map(|&(a, b)| spearman_rho_paired(&columns[a], &columns[b]).ok())
        .collect();

    let mut rho = vec![vec![None; n]; n];
    for (i, row) in rho.iter_mut().enumerate() {
        row[i] = Some(1.0);
    }
    for (&(a, b), v) in pairs.iter().zip(values) {
        rho[a][b] = v;
        rho[b][a] = v;
    }
    RhoMatrix {
        method_ids: m.units.clone(),
        rho,
    }
}
