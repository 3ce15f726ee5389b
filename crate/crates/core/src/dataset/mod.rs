//! Dataset assembly: validate question/instruction pairs against the
//! catalog, write train/eval files in the interchange formats with
//! per-sample randomized tool lists, split with per-tool coverage, and emit
//! the external-trainer configuration.

pub mod formats;

pub use formats::{assemble, read_assembled, AssembledRecord, DatasetFormat};

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, ParamType, ToolSpec};
use crate::det;
use crate::parser::{CallInstruction, Literal};
use crate::synthesis::{Provenance, Strategy};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("failed to access {path}: {source}")]
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
    #[error("unknown dataset format `{0}` (expected sharegpt, alpaca, openai, or bfcl_v3)")]
    UnknownFormat(String),
    #[error("sample `{id}` failed validation: {defects:?}")]
    SampleInvalid { id: String, defects: Vec<Defect> },
    #[error("sample `{0}` has an empty tool list")]
    EmptyTools(String),
    #[error("train fraction {0} must be inside (0, 1)")]
    BadFraction(f64),
    #[error("unknown train-config key `{0}`")]
    UnknownConfigKey(String),
    #[error("invalid value `{value}` for train-config key `{key}`")]
    InvalidConfigValue { key: String, value: String },
    #[error("answer cannot be serialized: {0}")]
    Answer(#[from] crate::parser::SerializeError),
}

/// Provenance and lineage carried by every training sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub id: String,
    pub seed_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
    pub provenance: Provenance,
}

/// One training sample: the question, the tool list the model will see,
/// and the expected call.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub question: String,
    pub tools: Vec<ToolSpec>,
    pub answer: CallInstruction,
    pub meta: SampleMeta,
}

/// Flat persisted form of a validated sample: question plus instruction.
/// The tool list is reattached from the catalog when assembling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub seed_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
    pub provenance: Provenance,
    pub question: String,
    pub tool_name: String,
    pub arguments: BTreeMap<String, Literal>,
}

impl SampleRecord {
    pub fn answer(&self) -> CallInstruction {
        CallInstruction {
            tool_name: self.tool_name.clone(),
            arguments: self.arguments.clone(),
        }
    }
}

/// Materializes training samples from flat records; every sample sees the
/// full catalog (the shared-scenario default).
pub fn build_samples(records: &[SampleRecord], catalog: &Catalog) -> Vec<TrainingSample> {
    records
        .iter()
        .map(|r| TrainingSample {
            question: r.question.clone(),
            tools: catalog.tools.clone(),
            answer: r.answer(),
            meta: SampleMeta {
                id: r.id.clone(),
                seed_id: r.seed_id.clone(),
                strategy: r.strategy,
                provenance: r.provenance,
            },
        })
        .collect()
}

/// Like [`build_samples`], but each sample sees only its answer tool plus
/// `k` distractors sampled deterministically per sample. Useful when a
/// catalog is too large for the model's context window.
pub fn build_samples_with_distractors(
    records: &[SampleRecord],
    catalog: &Catalog,
    k: usize,
    rng_seed: u64,
) -> Vec<TrainingSample> {
    records
        .iter()
        .map(|r| {
            let mut pool: Vec<&ToolSpec> = catalog
                .tools
                .iter()
                .filter(|t| t.name != r.tool_name)
                .collect();
            shuffle(&mut pool, rng_seed, &["distractors", &r.id]);
            let mut tools: Vec<ToolSpec> = pool.into_iter().take(k).cloned().collect();
            if let Some(answer_tool) = catalog.tool(&r.tool_name) {
                tools.push(answer_tool.clone());
            }
            // catalog order, so the answer position carries no signal; the
            // per-sample assembly shuffle randomizes it anyway
            tools.sort_by_key(|t| {
                catalog
                    .tools
                    .iter()
                    .position(|c| c.name == t.name)
                    .unwrap_or(usize::MAX)
            });
            TrainingSample {
                question: r.question.clone(),
                tools,
                answer: r.answer(),
                meta: SampleMeta {
                    id: r.id.clone(),
                    seed_id: r.seed_id.clone(),
                    strategy: r.strategy,
                    provenance: r.provenance,
                },
            }
        })
        .collect()
}

/// A validation finding. Defects are data, not errors: the validate stage
/// reports and drops, it does not abort.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Defect {
    ToolNotInCatalog { tool: String },
    RequiredParamMissing { param: String },
    DtypeMismatch { param: String, expected: ParamType, found: String },
    UnknownParam { param: String },
    Ungrounded { param: String },
}

impl fmt::Display for Defect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Defect::ToolNotInCatalog { tool } => write!(f, "tool `{tool}` not in catalog"),
            Defect::RequiredParamMissing { param } => {
                write!(f, "required parameter `{param}` missing")
            }
            Defect::DtypeMismatch {
                param,
                expected,
                found,
            } => write!(f, "parameter `{param}` is {found}, expected {expected}"),
            Defect::UnknownParam { param } => write!(f, "unknown parameter `{param}`"),
            Defect::Ungrounded { param } => {
                write!(f, "argument `{param}` does not appear in the question")
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ValidationOptions {
    /// Require every string-valued argument to appear verbatim in the
    /// question (case-insensitive).
    pub check_grounding: bool,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            check_grounding: true,
        }
    }
}

/// Checks one sample against the catalog. Empty result means the sample
/// passed.
pub fn validate_sample(
    sample: &TrainingSample,
    catalog: &Catalog,
    options: &ValidationOptions,
) -> Vec<Defect> {
    let mut defects = Vec::new();
    let Some(tool) = catalog.tool(&sample.answer.tool_name) else {
        defects.push(Defect::ToolNotInCatalog {
            tool: sample.answer.tool_name.clone(),
        });
        return defects;
    };
    for (name, value) in &sample.answer.arguments {
        match tool.param(name) {
            None => defects.push(Defect::UnknownParam {
                param: name.clone(),
            }),
            Some(param) => {
                if !param.dtype.accepts_literal(value) {
                    defects.push(Defect::DtypeMismatch {
                        param: name.clone(),
                        expected: param.dtype,
                        found: value.kind().to_string(),
                    });
                }
                if options.check_grounding {
                    if let Literal::Str(text) = value {
                        let question = sample.question.to_lowercase();
                        if !question.contains(&text.trim().to_lowercase()) {
                            defects.push(Defect::Ungrounded {
                                param: name.clone(),
                            });
                        }
                    }
                }
            }
        }
    }
    for param in tool.required_params() {
        if !sample.answer.arguments.contains_key(&param.name) {
            defects.push(Defect::RequiredParamMissing {
                param: param.name.clone(),
            });
        }
    }
    defects
}

/// Conservative token estimate: the larger of bytes/3 (tight for CJK-heavy
/// text) and chars/4 (tight for spaced scripts). Overestimating is safe;
/// the cutoff guard exists to prevent truncation.
pub fn estimate_tokens(text: &str) -> usize {
    let by_bytes = text.len().div_ceil(3);
    let by_chars = text.chars().count().div_ceil(4);
    by_bytes.max(by_chars)
}

// --- train/eval split ---

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub stratify_by_tool: bool,
    pub rng_seed: u64,
}

#[derive(Debug)]
pub struct SplitOutcome {
    pub train: Vec<TrainingSample>,
    pub eval: Vec<TrainingSample>,
    pub warnings: Vec<String>,
}

/// Splits samples into train/eval. With stratification every tool with at
/// least two samples lands in both sides, as close to `train_fraction` as
/// integer rounding allows; a single-sample tool goes to train with a
/// warning. Deterministic for a given seed.
pub fn split(samples: &[TrainingSample], spec: &SplitSpec) -> Result<SplitOutcome, DatasetError> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(DatasetError::BadFraction(spec.train_fraction));
    }
    let mut warnings = Vec::new();
    let mut train_idx: Vec<usize> = Vec::new();
    let mut eval_idx: Vec<usize> = Vec::new();

    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    if spec.stratify_by_tool {
        for (i, s) in samples.iter().enumerate() {
            groups
                .entry(s.answer.tool_name.clone())
                .or_default()
                .push(i);
        }
    } else {
        groups.insert(
            String::from("*"),
            (0..samples.len()).collect(),
        );
    }

    for (tool, mut indices) in groups {
        let n = indices.len();
        if n == 1 && spec.stratify_by_tool {
            warnings.push(format!(
                "tool `{tool}` has a single sample; it goes to train"
            ));
            train_idx.push(indices[0]);
            continue;
        }
        shuffle(&mut indices, spec.rng_seed, &["split", &tool]);
        let mut n_train = (n as f64 * spec.train_fraction).round() as usize;
        if n >= 2 {
            n_train = n_train.clamp(1, n - 1);
        }
        train_idx.extend(&indices[..n_train]);
        eval_idx.extend(&indices[n_train..]);
    }

    // keep input order within each side
    train_idx.sort_unstable();
    eval_idx.sort_unstable();
    Ok(SplitOutcome {
        train: train_idx.iter().map(|&i| samples[i].clone()).collect(),
        eval: eval_idx.iter().map(|&i| samples[i].clone()).collect(),
        warnings,
    })
}

pub(crate) fn shuffle<T>(items: &mut [T], seed: u64, labels: &[&str]) {
    use rand::Rng;
    let mut rng = det::stream(seed, labels);
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}

// --- trainer configuration ---

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoraSettings {
    pub r: u32,
    pub alpha: u32,
    pub dropout: f64,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: u32,
    pub grad_accum: u32,
    pub warmup_ratio: f64,
    pub peak_lr: f64,
    pub schedule: String,
    pub precision: String,
    pub epochs: u32,
    pub lora: LoraSettings,
    pub cutoff_len: usize,
}

impl TrainConfig {
    /// The reference fine-tuning settings this toolkit targets.
    pub fn reference_defaults(cutoff_len: usize) -> Self {
        Self {
            batch_size: 1,
            grad_accum: 16,
            warmup_ratio: 0.1,
            peak_lr: 8.0e-5,
            schedule: "cosine".to_string(),
            precision: "bf16".to_string(),
            epochs: 10,
            lora: LoraSettings {
                r: 8,
                alpha: 16,
                dropout: 0.0,
                target: "all".to_string(),
            },
            cutoff_len,
        }
    }

    /// Flat key:value rendering, one field per line.
    pub fn render(&self) -> String {
        format!(
            "batch_size: {}\n\
             grad_accum: {}\n\
             warmup_ratio: {}\n\
             peak_lr: {}\n\
             schedule: {}\n\
             precision: {}\n\
             epochs: {}\n\
             lora_r: {}\n\
             lora_alpha: {}\n\
             lora_dropout: {}\n\
             lora_target: {}\n\
             cutoff_len: {}\n",
            self.batch_size,
            self.grad_accum,
            self.warmup_ratio,
            self.peak_lr,
            self.schedule,
            self.precision,
            self.epochs,
            self.lora.r,
            self.lora.alpha,
            self.lora.dropout,
            self.lora.target,
            self.cutoff_len,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConfigWarning {
    /// The configured cutoff is below the longest sample: the trainer
    /// would truncate structured records, which corrupts them.
    CutoffTruncation {
        cutoff_len: usize,
        estimated_max_len: usize,
    },
}

/// Builds the trainer config from defaults plus `key=value` overrides.
/// If the resulting cutoff is below `estimated_max_len`, a truncation
/// warning is attached (the config is still produced; the caller decides).
pub fn emit_train_config(
    overrides: &BTreeMap<String, String>,
    estimated_max_len: usize,
) -> Result<(TrainConfig, Vec<ConfigWarning>), DatasetError> {
    // default cutoff: at least 4096 and never below the longest sample
    let default_cutoff = 4096usize.max(estimated_max_len.div_ceil(512) * 512);
    let mut config = TrainConfig::reference_defaults(default_cutoff);

    fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, DatasetError> {
        value.parse().map_err(|_| DatasetError::InvalidConfigValue {
            key: key.to_string(),
            value: value.to_string(),
        })
    }

    for (key, value) in overrides {
        match key.as_str() {
            "batch_size" => config.batch_size = parse(key, value)?,
            "grad_accum" => config.grad_accum = parse(key, value)?,
            "warmup_ratio" => config.warmup_ratio = parse(key, value)?,
            "peak_lr" => config.peak_lr = parse(key, value)?,
            "schedule" => {
                if value != "cosine" {
                    return Err(DatasetError::InvalidConfigValue {
                        key: key.clone(),
                        value: value.clone(),
                    });
                }
                config.schedule = value.clone();
            }
            "precision" => {
                if value != "bf16" {
                    return Err(DatasetError::InvalidConfigValue {
                        key: key.clone(),
                        value: value.clone(),
                    });
                }
                config.precision = value.clone();
            }
            "epochs" => config.epochs = parse(key, value)?,
            "lora_r" => config.lora.r = parse(key, value)?,
            "lora_alpha" => config.lora.alpha = parse(key, value)?,
            "lora_dropout" => config.lora.dropout = parse(key, value)?,
            "lora_target" => config.lora.target = value.clone(),
            "cutoff_len" => config.cutoff_len = parse(key, value)?,
            other => return Err(DatasetError::UnknownConfigKey(other.to_string())),
        }
    }

    let positive = config.batch_size > 0
        && config.grad_accum > 0
        && config.warmup_ratio > 0.0
        && config.peak_lr > 0.0
        && config.epochs > 0
        && config.lora.r > 0
        && config.lora.alpha > 0
        && config.lora.dropout >= 0.0
        && config.cutoff_len > 0;
    if !positive {
        return Err(DatasetError::InvalidConfigValue {
            key: "(config)".to_string(),
            value: "all numeric fields must be positive (dropout may be zero)".to_string(),
        });
    }

    let mut warnings = Vec::new();
    if config.cutoff_len < estimated_max_len {
        warnings.push(ConfigWarning::CutoffTruncation {
            cutoff_len: config.cutoff_len,
            estimated_max_len,
        });
    }
    Ok((config, warnings))
}

pub fn write_train_config(config: &TrainConfig, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    std::fs::write(path, config.render()).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::offline::demo_tool;

    fn catalog() -> Catalog {
        Catalog::new(
            "test",
            vec![
                demo_tool("Salary_Inquiry", "Query salary records for an employee"),
                demo_tool("Leave_Inquiry", "Query leave balances for an employee"),
            ],
        )
        .unwrap()
    }

    fn sample(id: &str, tool: &str, name: &str, question: &str) -> TrainingSample {
        let c = catalog();
        TrainingSample {
            question: question.to_string(),
            tools: c.tools.clone(),
            answer: CallInstruction::new(tool)
                .with_arg("employee_name", Literal::Str(name.to_string())),
            meta: SampleMeta {
                id: id.to_string(),
                seed_id: format!("{id}-seed"),
                strategy: None,
                provenance: Provenance::Ai,
            },
        }
    }

    #[test]
    fn well_formed_sample_passes() {
        let s = sample("x1", "Salary_Inquiry", "Person 01", "What is Person 01's salary?");
        assert!(validate_sample(&s, &catalog(), &ValidationOptions::default()).is_empty());
    }

    #[test]
    fn unknown_param_reported() {
        let mut s = sample("x1", "Salary_Inquiry", "Person 01", "What is Person 01's salary?");
        s.answer.arguments.insert("yaer".into(), Literal::Int(2023));
        let defects = validate_sample(&s, &catalog(), &ValidationOptions::default());
        assert!(defects.contains(&Defect::UnknownParam { param: "yaer".into() }));
    }

    #[test]
    fn ungrounded_string_reported() {
        let s = sample("x1", "Salary_Inquiry", "Li Lei", "What is Person 01's salary?");
        let defects = validate_sample(&s, &catalog(), &ValidationOptions::default());
        assert!(defects.contains(&Defect::Ungrounded { param: "employee_name".into() }));
        // grounding is configurable off
        let off = ValidationOptions { check_grounding: false };
        assert!(validate_sample(&s, &catalog(), &off).is_empty());
    }

    #[test]
    fn grounding_is_case_insensitive() {
        let s = sample("x1", "Salary_Inquiry", "person 01", "What is PERSON 01's salary?");
        assert!(validate_sample(&s, &catalog(), &ValidationOptions::default()).is_empty());
    }

    #[test]
    fn missing_required_reported() {
        let mut s = sample("x1", "Salary_Inquiry", "Person 01", "What is Person 01's salary?");
        s.answer.arguments.clear();
        let defects = validate_sample(&s, &catalog(), &ValidationOptions::default());
        assert!(defects.contains(&Defect::RequiredParamMissing { param: "employee_name".into() }));
    }

    #[test]
    fn dtype_mismatch_reported() {
        let mut s = sample("x1", "Salary_Inquiry", "Person 01", "What is Person 01's salary?");
        s.answer.arguments.insert("year".into(), Literal::Str("2023".into()));
        let defects = validate_sample(&s, &catalog(), &ValidationOptions::default());
        assert!(matches!(
            defects.iter().find(|d| matches!(d, Defect::DtypeMismatch { .. })),
            Some(Defect::DtypeMismatch { param, .. }) if param == "year"
        ));
    }

    #[test]
    fn unknown_tool_reported() {
        let s = sample("x1", "Nonexistent_Tool", "Person 01", "What is Person 01's salary?");
        let defects = validate_sample(&s, &catalog(), &ValidationOptions::default());
        assert_eq!(defects, vec![Defect::ToolNotInCatalog { tool: "Nonexistent_Tool".into() }]);
    }

    #[test]
    fn token_estimate_is_monotone_and_conservative() {
        let mut prev = 0;
        let mut text = String::new();
        for i in 0..200 {
            text.push(if i % 7 == 0 { '中' } else { 'a' });
            let estimate = estimate_tokens(&text);
            assert!(estimate >= prev);
            prev = estimate;
        }
        // CJK-heavy text estimates at roughly one token per character
        let cjk = "中".repeat(90);
        assert!(estimate_tokens(&cjk) >= 90);
    }

    fn stratified_fixture(per_tool: usize) -> Vec<TrainingSample> {
        let mut samples = Vec::new();
        for tool in ["Salary_Inquiry", "Leave_Inquiry"] {
            for i in 0..per_tool {
                samples.push(sample(
                    &format!("{tool}-{i:03}"),
                    tool,
                    &format!("Person {i:02}"),
                    &format!("What is Person {i:02}'s {tool} record?"),
                ));
            }
        }
        samples
    }

    #[test]
    fn stratified_split_ninety_ten() {
        let samples = stratified_fixture(90);
        let spec = SplitSpec {
            train_fraction: 0.9,
            stratify_by_tool: true,
            rng_seed: 11,
        };
        let outcome = split(&samples, &spec).unwrap();
        assert_eq!(outcome.train.len(), 162);
        assert_eq!(outcome.eval.len(), 18);
        let mut per_tool_train: BTreeMap<&str, usize> = BTreeMap::new();
        for s in &outcome.train {
            *per_tool_train.entry(s.answer.tool_name.as_str()).or_insert(0) += 1;
        }
        assert!(per_tool_train.values().all(|&n| n == 81));
    }

    #[test]
    fn split_partitions_input() {
        let samples = stratified_fixture(7);
        let spec = SplitSpec {
            train_fraction: 0.6,
            stratify_by_tool: true,
            rng_seed: 3,
        };
        let outcome = split(&samples, &spec).unwrap();
        let mut ids: Vec<&str> = outcome
            .train
            .iter()
            .chain(&outcome.eval)
            .map(|s| s.meta.id.as_str())
            .collect();
        ids.sort_unstable();
        let mut expected: Vec<&str> = samples.iter().map(|s| s.meta.id.as_str()).collect();
        expected.sort_unstable();
        assert_eq!(ids, expected);
        // disjoint by construction: same total length without duplicates
        assert_eq!(
            outcome.train.len() + outcome.eval.len(),
            samples.len()
        );
    }

    #[test]
    fn two_samples_half_split_is_one_and_one() {
        let samples = vec![
            sample("a", "Salary_Inquiry", "Person 01", "Person 01 salary?"),
            sample("b", "Salary_Inquiry", "Person 02", "Person 02 salary?"),
        ];
        let spec = SplitSpec {
            train_fraction: 0.5,
            stratify_by_tool: true,
            rng_seed: 5,
        };
        let outcome = split(&samples, &spec).unwrap();
        assert_eq!((outcome.train.len(), outcome.eval.len()), (1, 1));
    }

    #[test]
    fn empty_split_is_empty() {
        let spec = SplitSpec {
            train_fraction: 0.9,
            stratify_by_tool: true,
            rng_seed: 5,
        };
        let outcome = split(&[], &spec).unwrap();
        assert!(outcome.train.is_empty() && outcome.eval.is_empty());
    }

    #[test]
    fn singleton_tool_goes_to_train_with_warning() {
        let samples = vec![sample("only", "Salary_Inquiry", "Person 01", "Person 01 salary?")];
        let spec = SplitSpec {
            train_fraction: 0.5,
            stratify_by_tool: true,
            rng_seed: 5,
        };
        let outcome = split(&samples, &spec).unwrap();
        assert_eq!(outcome.train.len(), 1);
        assert!(outcome.eval.is_empty());
        assert_eq!(outcome.warnings.len(), 1);
    }

    #[test]
    fn bad_fraction_rejected() {
        let spec = SplitSpec {
            train_fraction: 1.0,
            stratify_by_tool: true,
            rng_seed: 5,
        };
        assert!(matches!(split(&[], &spec), Err(DatasetError::BadFraction(_))));
    }

    #[test]
    fn every_multi_sample_tool_reaches_both_sides() {
        let samples = stratified_fixture(3);
        let spec = SplitSpec {
            train_fraction: 0.9,
            stratify_by_tool: true,
            rng_seed: 7,
        };
        let outcome = split(&samples, &spec).unwrap();
        for tool in ["Salary_Inquiry", "Leave_Inquiry"] {
            assert!(outcome.train.iter().any(|s| s.answer.tool_name == tool));
            assert!(outcome.eval.iter().any(|s| s.answer.tool_name == tool));
        }
    }

    #[test]
    fn train_config_defaults_match_reference() {
        let (config, warnings) = emit_train_config(&BTreeMap::new(), 3200).unwrap();
        assert_eq!(config.batch_size, 1);
        assert_eq!(config.grad_accum, 16);
        assert_eq!(config.warmup_ratio, 0.1);
        assert_eq!(config.peak_lr, 8.0e-5);
        assert_eq!(config.schedule, "cosine");
        assert_eq!(config.precision, "bf16");
        assert_eq!(config.epochs, 10);
        assert_eq!(config.lora.r, 8);
        assert_eq!(config.lora.alpha, 16);
        assert_eq!(config.lora.dropout, 0.0);
        assert_eq!(config.lora.target, "all");
        assert!(config.cutoff_len >= 3200);
        assert!(warnings.is_empty());
    }

    #[test]
    fn cutoff_below_estimate_warns() {
        let mut overrides = BTreeMap::new();
        overrides.insert("cutoff_len".to_string(), "3000".to_string());
        let (_, warnings) = emit_train_config(&overrides, 3500).unwrap();
        assert_eq!(
            warnings,
            vec![ConfigWarning::CutoffTruncation {
                cutoff_len: 3000,
                estimated_max_len: 3500,
            }]
        );
    }

    #[test]
    fn cutoff_above_estimate_is_silent() {
        let mut overrides = BTreeMap::new();
        overrides.insert("cutoff_len".to_string(), "4096".to_string());
        let (_, warnings) = emit_train_config(&overrides, 3200).unwrap();
        assert!(warnings.is_empty());
    }

    #[test]
    fn unknown_config_key_rejected() {
        let mut overrides = BTreeMap::new();
        overrides.insert("learning_rate".to_string(), "1".to_string());
        assert!(matches!(
            emit_train_config(&overrides, 100),
            Err(DatasetError::UnknownConfigKey(k)) if k == "learning_rate"
        ));
    }

    #[test]
    fn invalid_config_value_rejected() {
        let mut overrides = BTreeMap::new();
        overrides.insert("epochs".to_string(), "many".to_string());
        assert!(matches!(
            emit_train_config(&overrides, 100),
            Err(DatasetError::InvalidConfigValue { .. })
        ));
        let mut overrides = BTreeMap::new();
        overrides.insert("batch_size".to_string(), "0".to_string());
        assert!(emit_train_config(&overrides, 100).is_err());
    }

    #[test]
    fn distractor_sampling_bounds_tool_list() {
        let c = catalog();
        let records = vec![
            SampleRecord {
                id: "d1".into(),
                seed_id: "d1-seed".into(),
                strategy: None,
                provenance: Provenance::Ai,
                question: "What is Person 01's salary?".into(),
                tool_name: "Salary_Inquiry".into(),
                arguments: [(
                    "employee_name".to_string(),
                    Literal::Str("Person 01".into()),
                )]
                .into_iter()
                .collect(),
            },
        ];
        let samples = build_samples_with_distractors(&records, &c, 1, 7);
        assert_eq!(samples[0].tools.len(), 2);
        assert!(samples[0].tools.iter().any(|t| t.name == "Salary_Inquiry"));
        // deterministic for a fixed seed
        let again = build_samples_with_distractors(&records, &c, 1, 7);
        assert_eq!(samples[0].tools, again[0].tools);
        // requesting more distractors than exist caps at the catalog
        let all = build_samples_with_distractors(&records, &c, 99, 7);
        assert_eq!(all[0].tools.len(), c.tools.len());
    }

    #[test]
    fn rendered_config_is_flat_key_value() {
        let (config, _) = emit_train_config(&BTreeMap::new(), 100).unwrap();
        let text = config.render();
        assert!(text.contains("batch_size: 1\n"));
        assert!(text.contains("peak_lr: 0.00008\n"));
        assert!(text.contains("lora_r: 8\n"));
        assert_eq!(text.lines().count(), 12);
    }
}
