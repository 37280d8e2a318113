use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{RecordBody, RunMeasure, RunRecord};
use crate::consistency::aggregate_verdicts;
use crate::error::{Error, Result};
use crate::tasks::{compute_metrics, MetricRecord};
use crate::types::ConsistencyRecord;

/// Per-repeat quantities reported for each measure.
pub const SUMMARY_COLUMNS: [&str; 8] = ["value", "t_shap", "t_shap_expl", "p_c", "p_f", "acc", "acc_r", "vqa_acc"];

/// One dataset and measure, averaged over repeats.
///
/// `value` is T-SHAP in percent for mm-shap, the mean CC-SHAP for the two
/// CC-SHAP measures, and the percentage of faithful verdicts for edit tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub measure: RunMeasure,
    pub samples: usize,
    pub repeats: usize,
    pub failed: usize,
    /// Column name to (mean, sample standard deviation) across repeats.
    pub stats: BTreeMap<String, (Option<f64>, Option<f64>)>,
}

impl SummaryRow {
    pub fn mean(&self, column: &str) -> Option<f64> {
        self.stats.get(column).and_then(|s| s.0)
    }

    pub fn sd(&self, column: &str) -> Option<f64> {
        self.stats.get(column).and_then(|s| s.1)
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn sample_sd(v: &[f64]) -> Option<f64> {
    if v.len() < 2 {
        return None;
    }
    let m = mean(v)?;
    Some((v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt())
}

fn repeat_values(measure: RunMeasure, records: &[&RunRecord]) -> BTreeMap<&'static str, f64> {
    let mut out = BTreeMap::new();
    let mut put = |k: &'static str, v: Option<f64>| {
        if let Some(v) = v {
            out.insert(k, v);
        }
    };
    match measure {
        RunMeasure::MmShap => {
            let t: Vec<f64> = records
                .iter()
                .filter_map(|r| match &r.result {
                    RecordBody::MmShap(m) => m.score.t_shap().map(|t| 100.0 * t),
                    _ => None,
                })
                .collect();
            put("value", mean(&t));
            put("t_shap", mean(&t));
        }
        RunMeasure::Consistency(kind) => {
            let recs: Vec<&ConsistencyRecord> = records
                .iter()
                .filter_map(|r| match &r.result {
                    RecordBody::Consistency(c) => Some(c),
                    _ => None,
                })
                .collect();
            if kind.is_cc_shap() {
                let values: Vec<f64> = recs.iter().filter_map(|c| c.value()).collect();
                put("value", mean(&values));
                let pct = |f: fn(&crate::ccshap::CcShapDetails) -> Option<f64>| -> Vec<f64> {
                    recs.iter()
                        .filter_map(|c| c.details.as_ref().and_then(f).map(|t| 100.0 * t))
                        .collect()
                };
                put("t_shap", mean(&pct(|d| d.prediction_t_shap)));
                put("t_shap_expl", mean(&pct(|d| d.explanation_t_shap)));
            } else {
                put("value", aggregate_verdicts(recs).percent_faithful);
            }
        }
        RunMeasure::Metrics => {
            let metrics: Vec<MetricRecord> = records
                .iter()
                .filter_map(|r| match &r.result {
                    RecordBody::Benchmark(b) => Some(b.metrics.iter().cloned()),
                    _ => None,
                })
                .flatten()
                .collect();
            let s = compute_metrics(&metrics);
            put("p_c", s.p_c);
            put("p_f", s.p_f);
            put("acc", s.acc);
            put("acc_r", s.acc_r);
            put("vqa_acc", s.vqa_acc);
        }
    }
    out
}

/// Groups records by dataset and measure and averages each column over repeats.
pub fn summarize(records: &[RunRecord], repeats: usize) -> Vec<SummaryRow> {
    let mut groups: Vec<((String, RunMeasure), Vec<&RunRecord>)> = Vec::new();
    for r in records {
        let key = (r.dataset.clone(), r.measure);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|((dataset, measure), recs)| {
            let repeats = repeats.max(recs.iter().map(|r| r.repeat + 1).max().unwrap_or(1));
            let mut per_column: BTreeMap<&'static str, Vec<f64>> = BTreeMap::new();
            for k in 0..repeats {
                let of_repeat: Vec<&RunRecord> = recs.iter().copied().filter(|r| r.repeat == k).collect();
                for (col, v) in repeat_values(measure, &of_repeat) {
                    per_column.entry(col).or_default().push(v);
                }
            }
            let mut samples: Vec<&str> = recs.iter().map(|r| r.sample_id.as_str()).collect();
            samples.sort_unstable();
            samples.dedup();
            let stats = SUMMARY_COLUMNS
                .iter()
                .map(|&c| {
                    let v = per_column.get(c).map(Vec::as_slice).unwrap_or(&[]);
                    (c.to_string(), (mean(v), sample_sd(v)))
                })
                .collect();
            SummaryRow {
                dataset,
                measure,
                samples: samples.len(),
                repeats,
                failed: recs.iter().filter(|r| r.is_failed()).count(),
                stats,
            }
        })
        .collect()
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_default()
}

/// Writes the wide CSV: one row per dataset and measure.
pub fn write_summary(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header: Vec<String> = ["dataset", "measure", "samples", "repeats", "failed"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for c in SUMMARY_COLUMNS {
        header.push(format!("{c}_mean"));
        header.push(format!("{c}_sd"));
    }
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut line = vec![
            r.dataset.clone(),
            r.measure.to_string(),
            r.samples.to_string(),
            r.repeats.to_string(),
            r.failed.to_string(),
        ];
        for c in SUMMARY_COLUMNS {
            line.push(cell(r.mean(c)));
            line.push(cell(r.sd(c)));
        }
        w.write_record(&line).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{MeasureKind, Verdict};

    fn verdict(id: &str, repeat: usize, v: Verdict) -> RunRecord {
        RunRecord {
            key: format!("{id}{repeat}"),
            dataset: "d".into(),
            sample_id: id.into(),
            measure: RunMeasure::Consistency(MeasureKind::EarlyAnswering),
            repeat,
            seed: repeat as u64,
            result: RecordBody::Consistency(ConsistencyRecord::verdict(
                id,
                MeasureKind::EarlyAnswering,
                v,
                "",
                vec![],
                0,
            )),
        }
    }

    #[test]
    fn edit_test_percentages_across_repeats() {
        let recs = vec![
            verdict("1", 0, Verdict::Faithful),
            verdict("2", 0, Verdict::Faithful),
            verdict("1", 1, Verdict::Faithful),
            verdict("2", 1, Verdict::Unfaithful),
        ];
        let rows = summarize(&recs, 2);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].samples, 2);
        assert_eq!(rows[0].mean("value"), Some(75.0));
        assert!((rows[0].sd("value").unwrap() - 50f64.sqrt() * 5.0).abs() < 1e-9);
    }

    #[test]
    fn single_repeat_has_no_sd() {
        let rows = summarize(&[verdict("1", 0, Verdict::Unfaithful)], 1);
        assert_eq!(rows[0].mean("value"), Some(0.0));
        assert_eq!(rows[0].sd("value"), None);
    }

    #[test]
    fn csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        write_summary(&summarize(&[verdict("1", 0, Verdict::Faithful)], 1), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("dataset,measure,samples,repeats,failed,value_mean,value_sd,t_shap_mean"));
        assert_eq!(header.split(',').count(), 5 + 2 * SUMMARY_COLUMNS.len());
        assert!(lines.next().unwrap().starts_with("d,early-answering,1,1,0,100.000000,,"));
    }
}
