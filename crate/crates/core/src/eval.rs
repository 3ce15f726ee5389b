//! Cascading judgment of model call outputs and stage-metric aggregation.
//!
//! A case is judged in three stages: output that does not parse is a
//! structure error; a parseable call naming the wrong tool is a tool error;
//! a correct tool with wrong arguments is a parameter error. Each stage
//! rate is computed over the cases that survived the previous stage, so
//! the three rates multiply exactly to the overall accuracy. Rates are
//! kept in rational arithmetic; rendering rounds to one decimal.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use num_rational::Ratio;
use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};
use unicode_normalization::UnicodeNormalization;

use crate::catalog::ToolSpec;
use crate::parser::{parse_call, CallInstruction, Literal, ParseOutcome};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no verdicts to aggregate")]
    EmptyVerdicts,
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    BadRecord {
        path: String,
        line: usize,
        message: String,
    },
    #[error("case `{0}` has no model output")]
    MissingOutput(String),
    #[error("duplicate output for case `{0}`")]
    DuplicateOutput(String),
}

/// One evaluation case: the expected call, optional per-parameter accepted
/// alternatives, the tool schemas visible to the model, and its raw output.
#[derive(Debug, Clone)]
pub struct EvalCase {
    pub id: String,
    pub question: String,
    pub tools: Vec<ToolSpec>,
    pub expected: CallInstruction,
    pub accepted_values: Option<BTreeMap<String, Vec<Literal>>>,
    pub raw_output: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictTag {
    Pass,
    StructureError,
    ToolError,
    ParamError,
}

impl fmt::Display for VerdictTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            VerdictTag::Pass => "Pass",
            VerdictTag::StructureError => "StructureError",
            VerdictTag::ToolError => "ToolError",
            VerdictTag::ParamError => "ParamError",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub tag: VerdictTag,
    pub detail: String,
    /// Parsed tool name; absent exactly when the output failed to parse.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_tool: Option<String>,
}

impl Verdict {
    pub fn pass(tool: &str, detail: String) -> Self {
        Self {
            tag: VerdictTag::Pass,
            detail,
            predicted_tool: Some(tool.to_string()),
        }
    }
}

/// Matching policy. Tool names are schema symbols and fold case by default;
/// argument values are user data and compare case-sensitively unless asked.
#[derive(Debug, Clone, Copy)]
pub struct EvalPolicy {
    pub fold_tool_case: bool,
    pub fold_value_case: bool,
}

impl Default for EvalPolicy {
    fn default() -> Self {
        Self {
            fold_tool_case: true,
            fold_value_case: false,
        }
    }
}

fn normalize(s: &str, fold: bool) -> String {
    let normalized: String = s.nfc().collect();
    let trimmed = normalized.trim();
    if fold {
        trimmed.to_lowercase()
    } else {
        trimmed.to_string()
    }
}

fn values_match(expected: &Literal, got: &Literal, policy: &EvalPolicy) -> bool {
    match (expected, got) {
        (Literal::Null, Literal::Null) => true,
        (Literal::Bool(a), Literal::Bool(b)) => a == b,
        (Literal::Int(a), Literal::Int(b)) => a == b,
        (Literal::Real(a), Literal::Real(b)) => a == b,
        // integer 3 matches real 3.0 in either direction
        (Literal::Int(a), Literal::Real(b)) | (Literal::Real(b), Literal::Int(a)) => {
            *a as f64 == *b
        }
        (Literal::Str(a), Literal::Str(b)) => {
            normalize(a, policy.fold_value_case) == normalize(b, policy.fold_value_case)
        }
        (Literal::List(a), Literal::List(b)) => {
            a.len() == b.len()
                && a.iter()
                    .zip(b.iter())
                    .all(|(x, y)| values_match(x, y, policy))
        }
        (Literal::Map(a), Literal::Map(b)) => {
            a.len() == b.len()
                && a.iter()
                    .all(|(k, x)| b.get(k).is_some_and(|y| values_match(x, y, policy)))
        }
        _ => false,
    }
}

/// Judges one case with the SE → TE → PE cascade. Never fails: every
/// outcome, including unparseable output, is a verdict.
pub fn judge(case: &EvalCase, policy: &EvalPolicy) -> Verdict {
    let calls = match parse_call(&case.raw_output) {
        ParseOutcome::Failure { position, reason } => {
            return Verdict {
                tag: VerdictTag::StructureError,
                detail: format!("parse failure at byte {position}: {reason}"),
                predicted_tool: None,
            }
        }
        ParseOutcome::Calls { calls, .. } => calls,
    };
    // single-turn scenario: score the first call, log any extras
    let call = &calls[0];
    let extra_note = if calls.len() > 1 {
        format!("; {} extra call(s) ignored", calls.len() - 1)
    } else {
        String::new()
    };
    let predicted = call.tool_name.clone();
    if normalize(&predicted, policy.fold_tool_case)
        != normalize(&case.expected.tool_name, policy.fold_tool_case)
    {
        return Verdict {
            tag: VerdictTag::ToolError,
            detail: format!(
                "predicted tool `{predicted}`, expected `{}`{extra_note}",
                case.expected.tool_name
            ),
            predicted_tool: Some(predicted),
        };
    }
    if let Some(problem) = check_arguments(case, call, policy) {
        return Verdict {
            tag: VerdictTag::ParamError,
            detail: format!("{problem}{extra_note}"),
            predicted_tool: Some(predicted),
        };
    }
    Verdict::pass(&predicted, format!("exact match{extra_note}"))
}

fn check_arguments(case: &EvalCase, call: &CallInstruction, policy: &EvalPolicy) -> Option<String> {
    let schema = case
        .tools
        .iter()
        .find(|t| t.name == case.expected.tool_name);
    let empty = BTreeMap::new();
    let accepted = case.accepted_values.as_ref().unwrap_or(&empty);

    let matches_param = |name: &str, got: &Literal| -> bool {
        if let Some(alternatives) = accepted.get(name) {
            return alternatives.iter().any(|alt| values_match(alt, got, policy));
        }
        match case.expected.arguments.get(name) {
            Some(exp) => values_match(exp, got, policy),
            None => false,
        }
    };

    // arguments outside the schema (or, with no schema, outside the
    // expected call) are parameter errors
    for name in call.arguments.keys() {
        let known = match schema {
            Some(tool) => tool.param(name).is_some(),
            None => case.expected.arguments.contains_key(name),
        };
        if !known {
            return Some(format!("unknown argument `{name}`"));
        }
    }

    if let Some(tool) = schema {
        for param in &tool.params {
            let expected_has = case.expected.arguments.contains_key(&param.name)
                || accepted.contains_key(&param.name);
            let got = call.arguments.get(&param.name);
            match (expected_has, got) {
                (true, Some(value)) => {
                    if !matches_param(&param.name, value) {
                        return Some(format!("argument `{}` does not match", param.name));
                    }
                }
                (true, None) => {
                    if param.required {
                        return Some(format!("required argument `{}` missing", param.name));
                    }
                    // absent optional: acceptable only when the expected
                    // value is the schema default
                    let default_ok = param
                        .default
                        .as_ref()
                        .is_some_and(|d| matches_param(&param.name, &Literal::from_json(d)));
                    if !default_ok {
                        return Some(format!("optional argument `{}` omitted", param.name));
                    }
                }
                (false, Some(value)) => {
                    // the annotation omits it; providing the schema default
                    // explicitly is equivalent, anything else is not
                    let is_default = param
                        .default
                        .as_ref()
                        .is_some_and(|d| values_match(&Literal::from_json(d), value, policy));
                    if !is_default {
                        return Some(format!("unexpected argument `{}`", param.name));
                    }
                }
                (false, None) => {}
            }
        }
    } else {
        // no schema available: every expected argument must be present
        for name in case.expected.arguments.keys() {
            match call.arguments.get(name) {
                Some(value) => {
                    if !matches_param(name, value) {
                        return Some(format!("argument `{name}` does not match"));
                    }
                }
                None => return Some(format!("required argument `{name}` missing")),
            }
        }
    }
    None
}

/// Exact stage-level counts and rates.
#[derive(Debug, Clone, PartialEq)]
pub struct StageMetrics {
    pub n_total: u64,
    pub n_se: u64,
    pub n_te: u64,
    pub n_pe: u64,
    pub n_pass: u64,
    pub structural_completeness_rate: Option<Ratio<u64>>,
    pub tool_selection_acc: Option<Ratio<u64>>,
    pub param_filling_acc: Option<Ratio<u64>>,
    pub overall_acc: Option<Ratio<u64>>,
}

impl StageMetrics {
    /// Builds metrics straight from stage counts.
    pub fn from_counts(n_se: u64, n_te: u64, n_pe: u64, n_pass: u64) -> Self {
        let n_total = n_se + n_te + n_pe + n_pass;
        let rate = |num: u64, den: u64| {
            if den == 0 {
                None
            } else {
                Some(Ratio::new(num, den))
            }
        };
        Self {
            n_total,
            n_se,
            n_te,
            n_pe,
            n_pass,
            structural_completeness_rate: rate(n_total - n_se, n_total),
            tool_selection_acc: rate(n_total - n_se - n_te, n_total - n_se),
            param_filling_acc: rate(n_total - n_se - n_te - n_pe, n_total - n_se - n_te),
            overall_acc: rate(n_pass, n_total),
        }
    }

    /// The three stage rates telescope to the overall accuracy. Exact in
    /// rational arithmetic; `None` when any stage is 0/0.
    pub fn identity_holds(&self) -> Option<bool> {
        let product = self.structural_completeness_rate?
            * self.tool_selection_acc?
            * self.param_filling_acc?;
        Some(Some(product) == self.overall_acc)
    }

    /// A rate as a percentage, rounded to one decimal.
    pub fn pct_1dp(rate: Option<Ratio<u64>>) -> Option<f64> {
        rate.map(|r| {
            let pct = 100.0 * (*r.numer() as f64) / (*r.denom() as f64);
            (pct * 10.0).round() / 10.0
        })
    }

    pub fn summary(&self) -> String {
        let show = |rate: Option<Ratio<u64>>| match Self::pct_1dp(rate) {
            Some(p) => format!("{p:.1}"),
            None => "—".to_string(),
        };
        format!(
            "structural {} | tool {} | param {} | overall {} (n={})",
            show(self.structural_completeness_rate),
            show(self.tool_selection_acc),
            show(self.param_filling_acc),
            show(self.overall_acc),
            self.n_total,
        )
    }
}

impl Serialize for StageMetrics {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        fn as_f64(rate: &Option<Ratio<u64>>) -> Option<f64> {
            rate.map(|r| (*r.numer() as f64) / (*r.denom() as f64))
        }
        let mut s = serializer.serialize_struct("StageMetrics", 9)?;
        s.serialize_field("n_total", &self.n_total)?;
        s.serialize_field("n_se", &self.n_se)?;
        s.serialize_field("n_te", &self.n_te)?;
        s.serialize_field("n_pe", &self.n_pe)?;
        s.serialize_field("n_pass", &self.n_pass)?;
        s.serialize_field(
            "structural_completeness_rate",
            &as_f64(&self.structural_completeness_rate),
        )?;
        s.serialize_field("tool_selection_acc", &as_f64(&self.tool_selection_acc))?;
        s.serialize_field("param_filling_acc", &as_f64(&self.param_filling_acc))?;
        s.serialize_field("overall_acc", &as_f64(&self.overall_acc))?;
        s.end()
    }
}

/// Tallies verdicts into stage metrics. Order-insensitive.
pub fn aggregate(verdicts: &[Verdict]) -> Result<StageMetrics, EvalError> {
    if verdicts.is_empty() {
        return Err(EvalError::EmptyVerdicts);
    }
    let mut n_se = 0;
    let mut n_te = 0;
    let mut n_pe = 0;
    let mut n_pass = 0;
    for v in verdicts {
        match v.tag {
            VerdictTag::StructureError => n_se += 1,
            VerdictTag::ToolError => n_te += 1,
            VerdictTag::ParamError => n_pe += 1,
            VerdictTag::Pass => n_pass += 1,
        }
    }
    Ok(StageMetrics::from_counts(n_se, n_te, n_pe, n_pass))
}

/// Consistency check for externally reported stage rates (in percent).
/// The implied overall is the product of the three stage rates; a report
/// deviating beyond `tolerance_pct` is flagged.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportedRateCheck {
    pub implied_overall_pct: f64,
    pub reported_overall_pct: f64,
    pub deviation_pct: f64,
    pub consistent: bool,
}

/// Default tolerance: the worst case of rounding each reported rate to one
/// decimal, with headroom.
pub const REPORTED_RATE_TOLERANCE_PCT: f64 = 0.15;

pub fn verify_reported_rates(
    structural_pct: f64,
    tool_pct: f64,
    param_pct: f64,
    overall_pct: f64,
    tolerance_pct: f64,
) -> ReportedRateCheck {
    let implied = structural_pct / 100.0 * (tool_pct / 100.0) * param_pct;
    let deviation = (implied - overall_pct).abs();
    ReportedRateCheck {
        implied_overall_pct: implied,
        reported_overall_pct: overall_pct,
        deviation_pct: deviation,
        consistent: deviation <= tolerance_pct,
    }
}

// --- file interfaces: bfcl_v3 cases + model outputs ---

fn read_jsonl(path: &Path) -> Result<Vec<(usize, serde_json::Value)>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| EvalError::BadRecord {
                path: path.display().to_string(),
                line: idx + 1,
                message: e.to_string(),
            })?;
        records.push((idx + 1, value));
    }
    Ok(records)
}

/// Loads evaluation cases from a bfcl_v3 JSONL file. `raw_output` fields
/// start empty; attach them from an outputs file with [`attach_outputs`].
pub fn load_cases(path: impl AsRef<Path>) -> Result<Vec<EvalCase>, EvalError> {
    let path = path.as_ref();
    let mut cases = Vec::new();
    for (line, value) in read_jsonl(path)? {
        let bad = |message: String| EvalError::BadRecord {
            path: path.display().to_string(),
            line,
            message,
        };
        let id = value
            .get("id")
            .and_then(serde_json::Value::as_str)
            .ok_or_else(|| bad("missing `id`".into()))?
            .to_string();
        let question = value
            .get("question")
            .and_then(|q| q.as_array())
            .and_then(|turns| turns.first())
            .and_then(|turn| turn.as_array())
            .and_then(|msgs| {
                msgs.iter()
                    .find(|m| m.get("role").and_then(serde_json::Value::as_str) == Some("user"))
            })
            .and_then(|m| m.get("content"))
            .and_then(serde_json::Value::as_str)
            .ok_or_else(|| bad("missing user content in `question`".into()))?
            .to_string();
        let tools = value
            .get("function")
            .and_then(serde_json::Value::as_array)
            .map(|fns| {
                fns.iter()
                    .filter_map(crate::catalog::tool_from_openai_schema)
                    .collect::<Vec<_>>()
            })
            .unwrap_or_default();
        let truth = value
            .get("ground_truth")
            .and_then(serde_json::Value::as_array)
            .and_then(|g| g.first())
            .and_then(serde_json::Value::as_object)
            .ok_or_else(|| bad("missing `ground_truth`".into()))?;
        let (tool_name, params) = truth
            .iter()
            .next()
            .ok_or_else(|| bad("empty ground_truth object".into()))?;
        let params = params
            .as_object()
            .ok_or_else(|| bad("ground_truth parameters must be an object".into()))?;
        let mut expected = CallInstruction::new(tool_name.clone());
        let mut accepted: BTreeMap<String, Vec<Literal>> = BTreeMap::new();
        for (pname, alternatives) in params {
            let list = alternatives
                .as_array()
                .ok_or_else(|| bad(format!("accepted values for `{pname}` must be an array")))?;
            if list.is_empty() {
                return Err(bad(format!("no accepted values for `{pname}`")));
            }
            let literals: Vec<Literal> = list.iter().map(Literal::from_json).collect();
            expected
                .arguments
                .insert(pname.clone(), literals[0].clone());
            accepted.insert(pname.clone(), literals);
        }
        cases.push(EvalCase {
            id,
            question,
            tools,
            expected,
            accepted_values: Some(accepted),
            raw_output: String::new(),
        });
    }
    Ok(cases)
}

/// Reads a model-outputs JSONL file (`{"id", "raw_output"}`) keyed by id.
pub fn load_outputs(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>, EvalError> {
    let path = path.as_ref();
    let mut outputs = BTreeMap::new();
    for (line, value) in read_jsonl(path)? {
        let bad = |message: String| EvalError::BadRecord {
            path: path.display().to_string(),
            line,
            message,
        };
        let id = value
            .get("id")
            .and_then(serde_json::Value::as_str)
            .ok_or_else(|| bad("missing `id`".into()))?
            .to_string();
        let raw = value
            .get("raw_output")
            .and_then(serde_json::Value::as_str)
            .ok_or_else(|| bad("missing `raw_output`".into()))?
            .to_string();
        if outputs.insert(id.clone(), raw).is_some() {
            return Err(EvalError::DuplicateOutput(id));
        }
    }
    Ok(outputs)
}

/// Pairs each case with its model output; every case must have one.
pub fn attach_outputs(
    cases: &mut [EvalCase],
    outputs: &BTreeMap<String, String>,
) -> Result<(), EvalError> {
    for case in cases.iter_mut() {
        match outputs.get(&case.id) {
            Some(raw) => case.raw_output = raw.clone(),
            None => return Err(EvalError::MissingOutput(case.id.clone())),
        }
    }
    Ok(())
}
