//! Evaluation runs, distribution summaries and reliability tables.
//!
//! Output files:
//!
//! * `records.csv`: one row per evaluated `(mosaic, method)` pair; undefined
//!   metrics are written as `NA`.
//! * `errors.json`: pair-level failures of an evaluation run.
//! * `summary.csv`: per method and metric distribution statistics.
//! * `alpha.json` / `rho.json`: Krippendorff's α rows and Spearman's ρ
//!   matrices per metric.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::ser::{SerializeSeq, Serializer};
use serde::Serialize;
use thiserror::Error;

use crate::confusion::{tally_confusion, CompensatedSum, ConfusionTally};
use crate::metrics::{compute_metrics, MetricKind, MetricVector};
use crate::mosaic::{MosaicManifest, MosaicSpec};
use crate::parallel::thread_pool;
use crate::reliability::{inter_method_matrix, krippendorff_alpha, AlphaLevel, RatingMatrix};
use crate::saliency::{self, MethodDescriptor, SaliencyMap};

pub const RECORDS_FILE: &str = "records.csv";
pub const ERRORS_FILE: &str = "errors.json";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const ALPHA_FILE: &str = "alpha.json";
pub const RHO_FILE: &str = "rho.json";

/// Token for an undefined value in CSV and JSON outputs.
pub const UNDEFINED_CSV: &str = "NA";
pub const UNDEFINED_JSON: &str = "undefined";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("reliability needs at least 2 methods sharing at least 2 mosaics, found {methods} method(s)")]
    TooFewMethods { methods: usize },
    #[error("no records")]
    NoRecords,
    #[error("records line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = ReportError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationRecord {
    pub mosaic_id: String,
    pub method_id: String,
    pub target_class: String,
    pub tally: ConfusionTally,
    pub metrics: MetricVector,
}

/// A `(mosaic, method)` pair that could not be evaluated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PairError {
    pub mosaic_id: String,
    pub method_id: String,
    pub path: Option<PathBuf>,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct EvaluationOutcome {
    pub records: Vec<EvaluationRecord>,
    pub errors: Vec<PairError>,
    /// Pairs without a saliency file.
    pub absent: Vec<(String, String)>,
}

impl EvaluationOutcome {
    pub fn is_clean(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Tallies one map against its mosaic and scores it.
pub fn evaluate_map(
    spec: &MosaicSpec,
    map: &SaliencyMap,
    method: &MethodDescriptor,
) -> std::result::Result<EvaluationRecord, String> {
    if map.method_id != method.method_id {
        return Err(format!(
            "map method_id `{}` does not match `{}`",
            map.method_id, method.method_id
        ));
    }
    if map.sign_capability != method.sign_capability {
        return Err(format!(
            "map sign capability {} differs from registry ({})",
            map.sign_capability, method.sign_capability
        ));
    }
    let tally = tally_confusion(map, spec).map_err(|e| e.to_string())?;
    Ok(EvaluationRecord {
        mosaic_id: spec.mosaic_id.clone(),
        method_id: method.method_id.clone(),
        target_class: spec.target_class.clone(),
        tally,
        metrics: compute_metrics(&tally, method.sign_capability),
    })
}

enum PairResult {
    Record(EvaluationRecord),
    Error(PairError),
    Absent,
}

/// Evaluates every `(mosaic, method)` pair using `source` to obtain maps.
///
/// `source` returns `Ok(None)` for an absent map. Results keep manifest order,
/// then registry order.
pub fn evaluate_with<F>(manifest: &MosaicManifest, registry: &[MethodDescriptor], source: F) -> EvaluationOutcome
where
    F: Fn(&MosaicSpec, &MethodDescriptor) -> std::result::Result<Option<(SaliencyMap, Option<PathBuf>)>, PairError>
        + Sync,
{
    let side = manifest.mosaic_pixels as usize;
    let jobs: Vec<(&MosaicSpec, &MethodDescriptor)> = manifest
        .mosaics
        .iter()
        .flat_map(|spec| registry.iter().map(move |m| (spec, m)))
        .collect();
    let results: Vec<PairResult> = thread_pool().install(|| {
        jobs.par_iter()
            .map(|&(spec, method)| {
                let (map, path) = match source(spec, method) {
                    Ok(Some(found)) => found,
                    Ok(None) => return PairResult::Absent,
                    Err(e) => return PairResult::Error(e),
                };
                let fail = |message: String| {
                    PairResult::Error(PairError {
                        mosaic_id: spec.mosaic_id.clone(),
                        method_id: method.method_id.clone(),
                        path: path.clone(),
                        message,
                    })
                };
                if map.width() != side || map.height() != side {
                    return fail(format!(
                        "dimensions {}x{} differ from manifest ({side}x{side})",
                        map.width(),
                        map.height()
                    ));
                }
                match evaluate_map(spec, &map, method) {
                    Ok(record) => PairResult::Record(record),
                    Err(message) => fail(message),
                }
            })
            .collect()
    });

    let mut outcome = EvaluationOutcome::default();
    for (result, (spec, method)) in results.into_iter().zip(jobs) {
        match result {
            PairResult::Record(r) => outcome.records.push(r),
            PairResult::Error(e) => {
                warn!("{} / {}: {}", e.mosaic_id, e.method_id, e.message);
                outcome.errors.push(e);
            }
            PairResult::Absent => {
                info!("no saliency map for {} / {}", spec.mosaic_id, method.method_id);
                outcome.absent.push((spec.mosaic_id.clone(), method.method_id.clone()));
            }
        }
    }
    outcome
}

/// Evaluates the maps stored under `saliency_dir/<method_id>/<mosaic_id>.salm`
/// (or `.csv`).
pub fn evaluate(manifest: &MosaicManifest, saliency_dir: &Path, registry: &[MethodDescriptor]) -> EvaluationOutcome {
    evaluate_with(manifest, registry, |spec, method| {
        let Some(path) = saliency::locate_map(saliency_dir, &method.method_id, &spec.mosaic_id) else {
            return Ok(None);
        };
        saliency::read_saliency(&path)
            .map(|map| Some((map, Some(path.clone()))))
            .map_err(|e| PairError {
                mosaic_id: spec.mosaic_id.clone(),
                method_id: method.method_id.clone(),
                path: Some(path.clone()),
                message: e.to_string(),
            })
    })
}

fn format_value(v: f64) -> String {
    // Display prints the shortest string that round-trips.
    format!("{v}")
}

fn format_optional(v: Option<f64>) -> String {
    v.map_or_else(|| UNDEFINED_CSV.to_string(), format_value)
}

fn records_header() -> Vec<&'static str> {
    let mut header = vec!["mosaic_id", "method_id", "target_class", "tp", "fp", "fn", "tn"];
    header.extend(MetricKind::ALL.iter().map(|m| m.name()));
    header
}

pub fn write_records<W: Write>(writer: W, records: &[EvaluationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(records_header())?;
    for r in records {
        let mut row = vec![
            r.mosaic_id.clone(),
            r.method_id.clone(),
            r.target_class.clone(),
            format_value(r.tally.true_pos),
            format_value(r.tally.false_pos),
            format_value(r.tally.false_neg),
            format_value(r.tally.true_neg),
        ];
        row.extend(r.metrics.iter().map(|(_, v)| format_optional(v)));
        w.write_record(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_records<R: Read>(reader: R) -> Result<Vec<EvaluationRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != records_header() {
        return Err(ReportError::Parse {
            line: 1,
            reason: format!("unexpected header {header:?}"),
        });
    }
    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let number = |idx: usize| -> Result<f64> {
            let cell = &row[idx];
            cell.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| ReportError::Parse {
                    line,
                    reason: format!("bad number `{cell}` in column {}", records_header()[idx]),
                })
        };
        let optional = |idx: usize| -> Result<Option<f64>> {
            if &row[idx] == UNDEFINED_CSV {
                Ok(None)
            } else {
                number(idx).map(Some)
            }
        };
        let mut metrics = MetricVector::default();
        for (k, kind) in MetricKind::ALL.into_iter().enumerate() {
            metrics.set(kind, optional(7 + k)?);
        }
        records.push(EvaluationRecord {
            mosaic_id: row[0].to_string(),
            method_id: row[1].to_string(),
            target_class: row[2].to_string(),
            tally: ConfusionTally::new(number(3)?, number(4)?, number(5)?, number(6)?),
            metrics,
        });
    }
    Ok(records)
}

pub fn write_records_file(path: &Path, records: &[EvaluationRecord]) -> Result<()> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    write_records(std::io::BufWriter::new(file), records)
}

pub fn read_records_file(path: &Path) -> Result<Vec<EvaluationRecord>> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    read_records(std::io::BufReader::new(file))
}

pub fn write_errors_file(path: &Path, errors: &[PairError]) -> Result<()> {
    write_json(path, errors)
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

/// Distribution statistics of one metric for one method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method_id: String,
    pub metric_name: String,
    pub count_defined: usize,
    pub mean: f64,
    pub median: f64,
    pub quartile_1: f64,
    pub quartile_3: f64,
    pub minimum: f64,
    pub maximum: f64,
}

/// Quantile of sorted data by linear interpolation between closest ranks,
/// position `(n - 1)·q`.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

/// Summary statistics of a nonempty sample.
pub fn describe(values: &[f64]) -> Option<(f64, f64, f64, f64, f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let mut sum = CompensatedSum::default();
    for &v in values {
        sum.add(v);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    Some((
        sum.value() / values.len() as f64,
        quantile_sorted(&sorted, 0.5),
        quantile_sorted(&sorted, 0.25),
        quantile_sorted(&sorted, 0.75),
        sorted[0],
        sorted[sorted.len() - 1],
    ))
}

fn methods_in_order(records: &[EvaluationRecord]) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    records
        .iter()
        .filter(|r| seen.insert(r.method_id.as_str()))
        .map(|r| r.method_id.clone())
        .collect()
}

fn mosaics_in_order(records: &[EvaluationRecord]) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    records
        .iter()
        .filter(|r| seen.insert(r.mosaic_id.as_str()))
        .map(|r| r.mosaic_id.clone())
        .collect()
}

/// Per method × metric statistics over defined values. Groups without any
/// defined value are omitted.
pub fn summarize(records: &[EvaluationRecord]) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(ReportError::NoRecords);
    }
    let mut rows = Vec::new();
    for method in methods_in_order(records) {
        for kind in MetricKind::ALL {
            let values: Vec<f64> = records
                .iter()
                .filter(|r| r.method_id == method)
                .filter_map(|r| r.metrics.get(kind))
                .collect();
            let Some((mean, median, q1, q3, min, max)) = describe(&values) else {
                continue;
            };
            rows.push(SummaryRow {
                method_id: method.clone(),
                metric_name: kind.name().to_string(),
                count_defined: values.len(),
                mean,
                median,
                quartile_1: q1,
                quartile_3: q3,
                minimum: min,
                maximum: max,
            });
        }
    }
    Ok(rows)
}

pub fn write_summary<W: Write>(writer: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "method_id",
        "metric_name",
        "count_defined",
        "mean",
        "median",
        "quartile_1",
        "quartile_3",
        "minimum",
        "maximum",
    ])?;
    for r in rows {
        w.write_record([
            r.method_id.clone(),
            r.metric_name.clone(),
            r.count_defined.to_string(),
            format_value(r.mean),
            format_value(r.median),
            format_value(r.quartile_1),
            format_value(r.quartile_3),
            format_value(r.minimum),
            format_value(r.maximum),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_summary_file(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    write_summary(std::io::BufWriter::new(file), rows)
}

fn serialize_optional<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) => s.serialize_f64(*x),
        None => s.serialize_str(UNDEFINED_JSON),
    }
}

fn serialize_optional_grid<S: Serializer>(grid: &[Vec<Option<f64>>], s: S) -> std::result::Result<S::Ok, S::Error> {
    struct Row<'a>(&'a [Option<f64>]);
    impl Serialize for Row<'_> {
        fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(self.0.len()))?;
            for v in self.0 {
                match v {
                    Some(x) => seq.serialize_element(x)?,
                    None => seq.serialize_element(UNDEFINED_JSON)?,
                }
            }
            seq.end()
        }
    }
    let mut seq = s.serialize_seq(Some(grid.len()))?;
    for row in grid {
        seq.serialize_element(&Row(row))?;
    }
    seq.end()
}

/// Krippendorff's α for one metric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaRow {
    pub metric: String,
    pub methods: Vec<String>,
    pub raters: usize,
    #[serde(serialize_with = "serialize_optional")]
    pub alpha: Option<f64>,
    #[serde(serialize_with = "serialize_optional")]
    pub observed_disagreement: Option<f64>,
    #[serde(serialize_with = "serialize_optional")]
    pub expected_disagreement: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RhoTable {
    pub metric: String,
    pub method_ids: Vec<String>,
    pub mosaics: usize,
    #[serde(serialize_with = "serialize_optional_grid")]
    pub rho: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaTable {
    pub level: AlphaLevel,
    pub rows: Vec<AlphaRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityReport {
    pub alpha: AlphaTable,
    pub rho: Vec<RhoTable>,
}

impl ReliabilityReport {
    pub fn alpha_row(&self, metric: MetricKind) -> Option<&AlphaRow> {
        self.alpha.rows.iter().find(|r| r.metric == metric.name())
    }

    pub fn alpha_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(&self.alpha)?;
        text.push('\n');
        Ok(text)
    }

    pub fn rho_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Out<'a> {
            metrics: &'a [RhoTable],
        }
        let mut text = serde_json::to_string_pretty(&Out { metrics: &self.rho })?;
        text.push('\n');
        Ok(text)
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
        let alpha_path = out_dir.join(ALPHA_FILE);
        fs::write(&alpha_path, self.alpha_json()?).map_err(io_err(&alpha_path))?;
        let rho_path = out_dir.join(RHO_FILE);
        fs::write(&rho_path, self.rho_json()?).map_err(io_err(&rho_path))
    }
}

/// Rating matrix of one metric: mosaics as raters, the methods with at least
/// one defined value as units. `None` when fewer than two methods qualify.
pub fn rating_matrix(records: &[EvaluationRecord], metric: MetricKind) -> Option<RatingMatrix> {
    let methods: Vec<String> = methods_in_order(records)
        .into_iter()
        .filter(|m| records.iter().any(|r| &r.method_id == m && r.metrics.get(metric).is_some()))
        .collect();
    if methods.len() < 2 {
        return None;
    }
    let mosaics = mosaics_in_order(records);
    let method_index: HashMap<&str, usize> = methods.iter().enumerate().map(|(i, m)| (m.as_str(), i)).collect();
    let mosaic_index: HashMap<&str, usize> = mosaics.iter().enumerate().map(|(i, m)| (m.as_str(), i)).collect();
    let mut scores = vec![None; mosaics.len() * methods.len()];
    for r in records {
        if let Some(&u) = method_index.get(r.method_id.as_str()) {
            let row = mosaic_index[r.mosaic_id.as_str()];
            scores[row * methods.len() + u] = r.metrics.get(metric);
        }
    }
    RatingMatrix::new(mosaics, methods, scores, metric.name()).ok()
}

/// α row and ρ matrix for every requested metric.
///
/// A metric enters the report only when at least two methods define it, so
/// positive-only methods appear solely in the precision row.
pub fn reliability_report(
    records: &[EvaluationRecord],
    metrics: &[MetricKind],
    level: AlphaLevel,
) -> Result<ReliabilityReport> {
    let methods = methods_in_order(records).len();
    let mosaics = mosaics_in_order(records).len();
    if methods < 2 || mosaics < 2 {
        return Err(ReportError::TooFewMethods { methods });
    }
    let mut rows = Vec::new();
    let mut rho = Vec::new();
    for &metric in metrics {
        let Some(matrix) = rating_matrix(records, metric) else {
            continue;
        };
        let (alpha, observed, expected, reason) = match krippendorff_alpha(&matrix, level) {
            Ok(a) => (
                Some(a.alpha),
                Some(a.observed_disagreement),
                Some(a.expected_disagreement),
                None,
            ),
            Err(e) => (None, None, None, Some(e.to_string())),
        };
        rows.push(AlphaRow {
            metric: metric.name().to_string(),
            methods: matrix.units.clone(),
            raters: matrix.raters.len(),
            alpha,
            observed_disagreement: observed,
            expected_disagreement: expected,
            reason,
        });
        let rho_matrix = inter_method_matrix(&matrix);
        rho.push(RhoTable {
            metric: metric.name().to_string(),
            method_ids: rho_matrix.method_ids,
            mosaics: matrix.raters.len(),
            rho: rho_matrix.rho,
        });
    }
    if rows.is_empty() {
        return Err(ReportError::TooFewMethods { methods });
    }
    Ok(ReliabilityReport {
        alpha: AlphaTable { level, rows },
        rho,
    })
}
