//! Tool-selection confusion analysis.
//!
//! Treats tool selection as multi-class classification: rows are the actual
//! tool of each case, columns the predicted tool. Output that never parsed
//! goes to a dedicated "invalid" column (it predicted nothing), and a
//! predicted tool outside the catalog goes to an "other" overflow column;
//! both sit outside the per-tool precision/recall accounting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use num_rational::Ratio;
use serde::Serialize;

use crate::eval::{Verdict, VerdictTag};

pub const INVALID_LABEL: &str = "invalid";
pub const OTHER_LABEL: &str = "other";

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("no records to analyze")]
    EmptyInput,
    #[error("actual tool `{0}` is not in the label set")]
    UnknownActualTool(String),
    #[error("failed to write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Row-major confusion counts. Rows: catalog tools. Columns: catalog tools,
/// then "invalid", then (only when overflow happened) "other".
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    /// `counts[row][col]`; `labels.len()` rows.
    pub counts: Vec<Vec<u64>>,
    pub invalid_count: u64,
    pub other_count: u64,
    /// Predicted-tool names that fell outside the catalog.
    pub overflow_tools: Vec<String>,
}

impl ConfusionMatrix {
    pub fn n_labels(&self) -> usize {
        self.labels.len()
    }

    /// Column index layout: tools, invalid, other.
    fn col_invalid(&self) -> usize {
        self.labels.len()
    }

    pub fn has_other_column(&self) -> bool {
        self.other_count > 0
    }

    pub fn column_labels(&self) -> Vec<String> {
        let mut cols = self.labels.clone();
        cols.push(INVALID_LABEL.to_string());
        if self.has_other_column() {
            cols.push(OTHER_LABEL.to_string());
        }
        cols
    }

    pub fn grand_total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }

    fn invalid_total(&self) -> u64 {
        let col = self.col_invalid();
        self.counts.iter().map(|row| row[col]).sum()
    }

    /// Fraction of structurally valid cases whose predicted tool was the
    /// actual tool. Equals the evaluator's tool-selection accuracy on the
    /// same verdicts.
    pub fn micro_accuracy(&self) -> Option<Ratio<u64>> {
        let denom = self.grand_total() - self.invalid_total();
        if denom == 0 {
            None
        } else {
            Some(Ratio::new(self.trace(), denom))
        }
    }
}

/// Builds the confusion matrix from `(actual tool, verdict)` records.
///
/// Pass and ParamError verdicts carry the correct tool, ToolError carries
/// the wrong one, StructureError predicted nothing and lands in "invalid".
pub fn confusion(
    labels: &[String],
    records: &[(String, Verdict)],
) -> Result<ConfusionMatrix, AnalysisError> {
    if records.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    let index: BTreeMap<&str, usize> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let n = labels.len();
    // tools + invalid + other
    let mut counts = vec![vec![0u64; n + 2]; n];
    let mut overflow_tools = Vec::new();
    for (actual, verdict) in records {
        let row = *index
            .get(actual.as_str())
            .ok_or_else(|| AnalysisError::UnknownActualTool(actual.clone()))?;
        match (&verdict.tag, &verdict.predicted_tool) {
            (VerdictTag::StructureError, _) => counts[row][n] += 1,
            (_, Some(predicted)) => match index.get(predicted.as_str()) {
                Some(&col) => counts[row][col] += 1,
                None => {
                    counts[row][n + 1] += 1;
                    if !overflow_tools.contains(predicted) {
                        overflow_tools.push(predicted.clone());
                    }
                }
            },
            // a non-SE verdict without a predicted tool violates the verdict
            // invariant; treat it as unparsed rather than dropping the case
            (_, None) => counts[row][n] += 1,
        }
    }
    let matrix = ConfusionMatrix {
        labels: labels.to_vec(),
        invalid_count: counts.iter().map(|r| r[n]).sum(),
        other_count: counts.iter().map(|r| r[n + 1]).sum(),
        counts,
        overflow_tools,
    };
    Ok(matrix)
}

/// Per-tool confusion counts and the derived precision/recall/F1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolMetrics {
    pub tool: String,
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
    /// Undefined (None) when the tool was never predicted.
    pub precision: Option<f64>,
    /// Undefined (None) when the tool had no actual cases.
    pub recall: Option<f64>,
    /// Zero when the tool had actual cases but no true positive; undefined
    /// when it had neither cases nor predictions.
    pub f1: Option<f64>,
}

/// Computes TP/TN/FP/FN and precision/recall/F1 per tool.
///
/// The "invalid" and "other" columns count toward totals (a structure error
/// is neither a prediction of the tool nor of a competitor) but never toward
/// another tool's false positives.
pub fn per_tool_metrics(matrix: &ConfusionMatrix) -> Vec<ToolMetrics> {
    let n = matrix.n_labels();
    let total = matrix.grand_total();
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let tp = matrix.counts[t][t];
        let row_sum: u64 = matrix.counts[t].iter().sum();
        let col_sum: u64 = matrix.counts.iter().map(|row| row[t]).sum();
        let fp = col_sum - tp;
        let fn_ = row_sum - tp;
        let tn = total - tp - fp - fn_;
        let precision = if tp + fp == 0 {
            None
        } else {
            Some(tp as f64 / (tp + fp) as f64)
        };
        let recall = if tp + fn_ == 0 {
            None
        } else {
            Some(tp as f64 / (tp + fn_) as f64)
        };
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            // the zero convention: a tool with actual cases and no true
            // positive scores 0
            _ if tp == 0 && row_sum > 0 => Some(0.0),
            (Some(_), Some(_)) => Some(0.0),
            _ => None,
        };
        out.push(ToolMetrics {
            tool: matrix.labels[t].clone(),
            tp,
            tn,
            fp,
            fn_,
            precision,
            recall,
            f1,
        });
    }
    out
}

fn fmt_rate(rate: Option<f64>) -> String {
    match rate {
        Some(r) => format!("{r:.4}"),
        None => "—".to_string(),
    }
}

fn csv_escape(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Renders the labeled confusion matrix as CSV.
pub fn matrix_csv(matrix: &ConfusionMatrix) -> String {
    let mut out = String::new();
    let cols = matrix.column_labels();
    out.push_str("actual");
    for col in &cols {
        let _ = write!(out, ",{}", csv_escape(col));
    }
    out.push('\n');
    for (row_idx, label) in matrix.labels.iter().enumerate() {
        out.push_str(&csv_escape(label));
        for col_idx in 0..cols.len() {
            let _ = write!(out, ",{}", matrix.counts[row_idx][col_idx]);
        }
        out.push('\n');
    }
    out
}

/// Renders per-tool metrics as CSV.
pub fn metrics_csv(metrics: &[ToolMetrics]) -> String {
    let mut out = String::from("tool,tp,tn,fp,fn,precision,recall,f1\n");
    for m in metrics {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            csv_escape(&m.tool),
            m.tp,
            m.tn,
            m.fp,
            m.fn_,
            fmt_rate(m.precision),
            fmt_rate(m.recall),
            fmt_rate(m.f1),
        );
    }
    out
}

/// Side-by-side F1 comparison across models: one F1 column per model.
pub fn comparison_csv(models: &[(String, Vec<ToolMetrics>)]) -> String {
    let mut out = String::from("tool");
    for (name, _) in models {
        let _ = write!(out, ",{}_f1", csv_escape(name));
    }
    out.push('\n');
    if let Some((_, first)) = models.first() {
        for (idx, tool_metrics) in first.iter().enumerate() {
            out.push_str(&csv_escape(&tool_metrics.tool));
            for (_, metrics) in models {
                let f1 = metrics.get(idx).and_then(|m| m.f1);
                let _ = write!(out, ",{}", fmt_rate(f1));
            }
            out.push('\n');
        }
    }
    out
}

/// JSON bundle for external heatmap plotting.
#[derive(Debug, Serialize)]
pub struct AnalysisBundle<'a> {
    pub labels: &'a [String],
    pub column_labels: Vec<String>,
    pub counts: &'a [Vec<u64>],
    pub per_tool: &'a [ToolMetrics],
    pub micro_accuracy: Option<f64>,
}

/// Files produced by [`report`].
#[derive(Debug, Clone, Serialize)]
pub struct ReportFiles {
    pub matrix_csv: String,
    pub metrics_csv: String,
    pub bundle_json: String,
    pub comparison_csv: Option<String>,
}

/// Writes matrix CSV, per-tool metrics CSV, and a JSON bundle into `out_dir`;
/// adds a comparison CSV when more than one model's metrics are given.
pub fn report(
    matrix: &ConfusionMatrix,
    metrics: &[ToolMetrics],
    comparisons: &[(String, Vec<ToolMetrics>)],
    out_dir: impl AsRef<Path>,
) -> Result<ReportFiles, AnalysisError> {
    let out_dir = out_dir.as_ref();
    let io_err = |path: &Path, source: std::io::Error| AnalysisError::Io {
        path: path.display().to_string(),
        source,
    };
    std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;

    let matrix_path = out_dir.join("confusion_matrix.csv");
    std::fs::write(&matrix_path, matrix_csv(matrix)).map_err(|e| io_err(&matrix_path, e))?;

    let metrics_path = out_dir.join("per_tool_metrics.csv");
    std::fs::write(&metrics_path, metrics_csv(metrics)).map_err(|e| io_err(&metrics_path, e))?;

    let bundle = AnalysisBundle {
        labels: &matrix.labels,
        column_labels: matrix.column_labels(),
        counts: &matrix.counts,
        per_tool: metrics,
        micro_accuracy: matrix
            .micro_accuracy()
            .map(|r| (*r.numer() as f64) / (*r.denom() as f64)),
    };
    let bundle_path = out_dir.join("confusion_bundle.json");
    std::fs::write(
        &bundle_path,
        serde_json::to_string_pretty(&bundle).expect("bundle serializes"),
    )
    .map_err(|e| io_err(&bundle_path, e))?;

    let comparison = if comparisons.len() > 1 {
        let text = comparison_csv(comparisons);
        let path = out_dir.join("model_comparison.csv");
        std::fs::write(&path, &text).map_err(|e| io_err(&path, e))?;
        Some(text)
    } else {
        None
    };

    Ok(ReportFiles {
        matrix_csv: matrix_path.display().to_string(),
        metrics_csv: metrics_path.display().to_string(),
        bundle_json: bundle_path.display().to_string(),
        comparison_csv: comparison,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn verdict(tag: VerdictTag, predicted: Option<&str>) -> Verdict {
        Verdict {
            tag,
            detail: String::new(),
            predicted_tool: predicted.map(str::to_string),
        }
    }

    fn labels(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn all_pass_fills_diagonal() {
        let l = labels(&["A", "B"]);
        let records = vec![
            ("A".to_string(), verdict(VerdictTag::Pass, Some("A"))),
            ("A".to_string(), verdict(VerdictTag::Pass, Some("A"))),
            ("A".to_string(), verdict(VerdictTag::Pass, Some("A"))),
        ];
        let m = confusion(&l, &records).unwrap();
        assert_eq!(m.counts[0][0], 3);
        assert_eq!(m.grand_total(), 3);
        assert_eq!(m.trace(), 3);
    }

    #[test]
    fn tool_error_lands_off_diagonal() {
        let l = labels(&["A", "B"]);
        let records = vec![(
            "A".to_string(),
            verdict(VerdictTag::ToolError, Some("B")),
        )];
        let m = confusion(&l, &records).unwrap();
        assert_eq!(m.counts[0][1], 1);
        assert_eq!(m.trace(), 0);
    }

    #[test]
    fn structure_error_goes_to_invalid() {
        let l = labels(&["A"]);
        let records = vec![("A".to_string(), verdict(VerdictTag::StructureError, None))];
        let m = confusion(&l, &records).unwrap();
        assert_eq!(m.invalid_count, 1);
        assert!(m.micro_accuracy().is_none());
    }

    #[test]
    fn out_of_catalog_prediction_overflows() {
        let l = labels(&["A"]);
        let records = vec![(
            "A".to_string(),
            verdict(VerdictTag::ToolError, Some("Hallucinated_Tool")),
        )];
        let m = confusion(&l, &records).unwrap();
        assert_eq!(m.other_count, 1);
        assert_eq!(m.overflow_tools, vec!["Hallucinated_Tool".to_string()]);
        assert!(m.has_other_column());
    }

    #[test]
    fn param_error_counts_as_correct_selection() {
        let l = labels(&["A"]);
        let records = vec![("A".to_string(), verdict(VerdictTag::ParamError, Some("A")))];
        let m = confusion(&l, &records).unwrap();
        assert_eq!(m.trace(), 1);
        assert_eq!(m.micro_accuracy(), Some(Ratio::new(1, 1)));
    }

    #[test]
    fn empty_records_rejected() {
        let err = confusion(&labels(&["A"]), &[]).unwrap_err();
        assert!(matches!(err, AnalysisError::EmptyInput));
    }

    #[test]
    fn hand_computed_two_by_two() {
        // [[3,1],[2,4]]: tool 0 has p=3/5, r=3/4, f1=0.666...
        let l = labels(&["t0", "t1"]);
        let mut records = Vec::new();
        for _ in 0..3 {
            records.push(("t0".to_string(), verdict(VerdictTag::Pass, Some("t0"))));
        }
        records.push(("t0".to_string(), verdict(VerdictTag::ToolError, Some("t1"))));
        for _ in 0..2 {
            records.push(("t1".to_string(), verdict(VerdictTag::ToolError, Some("t0"))));
        }
        for _ in 0..4 {
            records.push(("t1".to_string(), verdict(VerdictTag::Pass, Some("t1"))));
        }
        let m = confusion(&l, &records).unwrap();
        assert_eq!(m.counts[0][0], 3);
        assert_eq!(m.counts[0][1], 1);
        assert_eq!(m.counts[1][0], 2);
        assert_eq!(m.counts[1][1], 4);
        let metrics = per_tool_metrics(&m);
        let t0 = &metrics[0];
        assert!((t0.precision.unwrap() - 0.6).abs() < 1e-12);
        assert!((t0.recall.unwrap() - 0.75).abs() < 1e-12);
        assert!((t0.f1.unwrap() - 2.0 * (0.6 * 0.75) / 1.35).abs() < 1e-12);
    }

    #[test]
    fn perfect_tool_has_unit_scores() {
        let l = labels(&["A", "B"]);
        let mut records = Vec::new();
        for _ in 0..4 {
            records.push(("A".to_string(), verdict(VerdictTag::Pass, Some("A"))));
        }
        records.push(("B".to_string(), verdict(VerdictTag::Pass, Some("B"))));
        let m = confusion(&l, &records).unwrap();
        let t0 = &per_tool_metrics(&m)[0];
        assert_eq!(t0.precision, Some(1.0));
        assert_eq!(t0.recall, Some(1.0));
        assert_eq!(t0.f1, Some(1.0));
    }

    #[test]
    fn failing_all_cases_scores_zero_f1() {
        let l = labels(&["A", "B"]);
        let mut records = Vec::new();
        for _ in 0..4 {
            records.push(("A".to_string(), verdict(VerdictTag::ToolError, Some("B"))));
        }
        records.push(("B".to_string(), verdict(VerdictTag::Pass, Some("B"))));
        let m = confusion(&l, &records).unwrap();
        let t0 = &per_tool_metrics(&m)[0];
        assert_eq!(t0.tp, 0);
        assert_eq!(t0.fn_, 4);
        assert_eq!(t0.f1, Some(0.0));
        // never predicted, so precision is undefined, not zero
        assert_eq!(t0.precision, None);
    }

    #[test]
    fn unused_tool_is_undefined_not_zero() {
        let l = labels(&["A", "B"]);
        let records = vec![("A".to_string(), verdict(VerdictTag::Pass, Some("A")))];
        let m = confusion(&l, &records).unwrap();
        let t1 = &per_tool_metrics(&m)[1];
        assert_eq!(t1.precision, None);
        assert_eq!(t1.recall, None);
        assert_eq!(t1.f1, None);
        let csv = metrics_csv(&per_tool_metrics(&m));
        assert!(csv.lines().any(|l| l.starts_with("B,") && l.contains("—")));
    }

    #[test]
    fn counts_partition_grand_total() {
        let l = labels(&["A", "B", "C"]);
        let records = vec![
            ("A".to_string(), verdict(VerdictTag::Pass, Some("A"))),
            ("A".to_string(), verdict(VerdictTag::ToolError, Some("C"))),
            ("B".to_string(), verdict(VerdictTag::StructureError, None)),
            ("C".to_string(), verdict(VerdictTag::ToolError, Some("X"))),
        ];
        let m = confusion(&l, &records).unwrap();
        let total = m.grand_total();
        for t in per_tool_metrics(&m) {
            assert_eq!(t.tp + t.tn + t.fp + t.fn_, total, "tool {}", t.tool);
        }
    }

    #[test]
    fn label_permutation_leaves_metrics_unchanged() {
        let l1 = labels(&["A", "B"]);
        let l2 = labels(&["B", "A"]);
        let records = vec![
            ("A".to_string(), verdict(VerdictTag::Pass, Some("A"))),
            ("A".to_string(), verdict(VerdictTag::ToolError, Some("B"))),
            ("B".to_string(), verdict(VerdictTag::Pass, Some("B"))),
        ];
        let m1 = per_tool_metrics(&confusion(&l1, &records).unwrap());
        let m2 = per_tool_metrics(&confusion(&l2, &records).unwrap());
        let by_name =
            |ms: &[ToolMetrics]| -> BTreeMap<String, (u64, u64, u64, u64)> {
                ms.iter()
                    .map(|m| (m.tool.clone(), (m.tp, m.tn, m.fp, m.fn_)))
                    .collect()
            };
        assert_eq!(by_name(&m1), by_name(&m2));
    }

    #[test]
    fn csv_dimensions() {
        // 14 tools, no overflow: header + 14 rows; 1 label col + 15 columns
        let l: Vec<String> = (0..14).map(|i| format!("tool_{i:02}")).collect();
        let records: Vec<_> = l
            .iter()
            .map(|t| (t.clone(), verdict(VerdictTag::Pass, Some(t))))
            .collect();
        let m = confusion(&l, &records).unwrap();
        let csv = matrix_csv(&m);
        let rows: Vec<&str> = csv.lines().collect();
        assert_eq!(rows.len(), 15);
        assert_eq!(rows[0].split(',').count(), 16);
    }

    #[test]
    fn comparison_has_one_f1_column_per_model() {
        let l = labels(&["A"]);
        let records = vec![("A".to_string(), verdict(VerdictTag::Pass, Some("A")))];
        let m = per_tool_metrics(&confusion(&l, &records).unwrap());
        let csv = comparison_csv(&[("m1".to_string(), m.clone()), ("m2".to_string(), m)]);
        assert_eq!(csv.lines().next().unwrap(), "tool,m1_f1,m2_f1");
    }
}
