//! Classification-style scores derived from a confusion tally.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::confusion::ConfusionTally;
use crate::saliency::SignCapability;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// tp / (tp + fp); also known as the Focus score.
    Precision,
    /// tp / (tp + fn), i.e. recall.
    Sensitivity,
    /// tn / (tn + fp)
    Specificity,
    /// fn / (tp + fn)
    FalseNegativeRate,
    /// fp / (tn + fp)
    FalsePositiveRate,
    /// (tp + tn) / total
    Accuracy,
    /// Harmonic mean of precision and sensitivity.
    F1,
}

impl MetricKind {
    pub const ALL: [MetricKind; 7] = [
        MetricKind::Precision,
        MetricKind::Sensitivity,
        MetricKind::Specificity,
        MetricKind::FalseNegativeRate,
        MetricKind::FalsePositiveRate,
        MetricKind::Accuracy,
        MetricKind::F1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Precision => "precision",
            MetricKind::Sensitivity => "sensitivity",
            MetricKind::Specificity => "specificity",
            MetricKind::FalseNegativeRate => "false_negative_rate",
            MetricKind::FalsePositiveRate => "false_positive_rate",
            MetricKind::Accuracy => "accuracy",
            MetricKind::F1 => "f1",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        let alias = match key.as_str() {
            "recall" => "sensitivity",
            "focus" => "precision",
            "fnr" => "false_negative_rate",
            "fpr" => "false_positive_rate",
            "f1_score" => "f1",
            other => other,
        };
        MetricKind::ALL
            .into_iter()
            .find(|m| m.name() == alias)
            .ok_or_else(|| format!("unknown metric `{s}`"))
    }
}

/// The seven scores; `None` marks an undefined value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricVector {
    pub precision: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub false_negative_rate: Option<f64>,
    pub false_positive_rate: Option<f64>,
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
}

impl MetricVector {
    pub fn get(&self, kind: MetricKind) -> Option<f64> {
        match kind {
            MetricKind::Precision => self.precision,
            MetricKind::Sensitivity => self.sensitivity,
            MetricKind::Specificity => self.specificity,
            MetricKind::FalseNegativeRate => self.false_negative_rate,
            MetricKind::FalsePositiveRate => self.false_positive_rate,
            MetricKind::Accuracy => self.accuracy,
            MetricKind::F1 => self.f1,
        }
    }

    pub fn set(&mut self, kind: MetricKind, value: Option<f64>) {
        let slot = match kind {
            MetricKind::Precision => &mut self.precision,
            MetricKind::Sensitivity => &mut self.sensitivity,
            MetricKind::Specificity => &mut self.specificity,
            MetricKind::FalseNegativeRate => &mut self.false_negative_rate,
            MetricKind::FalsePositiveRate => &mut self.false_positive_rate,
            MetricKind::Accuracy => &mut self.accuracy,
            MetricKind::F1 => &mut self.f1,
        };
        *slot = value;
    }

    pub fn iter(&self) -> impl Iterator<Item = (MetricKind, Option<f64>)> + '_ {
        MetricKind::ALL.into_iter().map(|k| (k, self.get(k)))
    }
}

fn ratio(numerator: f64, denominator: f64) -> Option<f64> {
    (denominator > 0.0).then(|| numerator / denominator)
}

/// Computes the seven scores of a tally.
///
/// A zero denominator yields `None`. For positive-only methods every score
/// except precision is `None` regardless of the tally.
pub fn compute_metrics(t: &ConfusionTally, capability: SignCapability) -> MetricVector {
    let (tp, fp, fn_, tn) = (t.true_pos, t.false_pos, t.false_neg, t.true_neg);
    let precision = ratio(tp, tp + fp);
    if capability == SignCapability::PositiveOnly {
        return MetricVector {
            precision,
            ..MetricVector::default()
        };
    }
    let sensitivity = ratio(tp, tp + fn_);
    let f1 = match (precision, sensitivity) {
        (Some(p), Some(s)) => ratio(2.0 * p * s, p + s),
        _ => None,
    };
    MetricVector {
        precision,
        sensitivity,
        specificity: ratio(tn, tn + fp),
        false_negative_rate: ratio(fn_, tp + fn_),
        false_positive_rate: ratio(fp, tn + fp),
        accuracy: ratio(tp + tn, tp + tn + fp + fn_),
        f1,
    }
}
