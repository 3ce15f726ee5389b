//! Question synthesis: per-tool seed generation, the four augmentation
//! strategies, and function-call instruction extraction.
//!
//! All generation goes through the gateway, so the whole stage runs
//! deterministically against the scripted mock backend. Assembly order is
//! fixed (seed id, then strategy, then reply index) and ids are zero-padded,
//! which makes reruns byte-identical.

pub mod offline;
pub mod prompts;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, ParamType, ToolSpec};
use crate::gateway::{parse_lines, Gateway, GatewayError, PromptTemplate};
use crate::parser::{CallInstruction, Literal};

#[derive(Debug, thiserror::Error)]
pub enum SynthesisError {
    #[error("prompt template `{template}` failed: {source}")]
    Prompt {
        template: String,
        #[source]
        source: GatewayError,
    },
    #[error("gateway failure for {context}: {source}")]
    Gateway {
        context: String,
        #[source]
        source: GatewayError,
    },
    #[error("entity pool `{0}` is empty but the template uses it")]
    EmptyPool(String),
    #[error("the seed template splits questions in half; per_tool must be even and ≥ 2, got {per_tool}")]
    HalfSplitNeedsEven { per_tool: usize },
    #[error("error_introduction must start from an already-augmented question, got seed `{0}`")]
    ErrorIntroductionOnSeed(String),
    #[error("augmented question `{id}` references unknown seed `{seed_id}`")]
    OrphanAugmentation { id: String, seed_id: String },
    #[error("extractor reply for {context} is not a JSON object: {preview:?}")]
    ExtractorUnparseable { context: String, preview: String },
    #[error("extractor returned unknown parameter `{param}` for tool `{tool}`")]
    UnknownExtractedParam { tool: String, param: String },
    #[error("extractor value for `{param}` of `{tool}` is {found}, expected {expected}")]
    ExtractedTypeMismatch {
        tool: String,
        param: String,
        expected: ParamType,
        found: &'static str,
    },
    #[error("invalid strategy mix: {0}")]
    MixInvalid(String),
    #[error("tool `{0}` is not in the catalog")]
    ToolNotInCatalog(String),
    #[error("failed to read template `{path}`: {source}")]
    TemplateIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {source}")]
    Jsonl {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Where a question came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Ai,
    Human,
}

/// The four augmentation strategies, in their canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Replacement,
    Rewriting,
    Simplification,
    ErrorIntroduction,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Replacement,
        Strategy::Rewriting,
        Strategy::Simplification,
        Strategy::ErrorIntroduction,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Replacement => "replacement",
            Strategy::Rewriting => "rewriting",
            Strategy::Simplification => "simplification",
            Strategy::ErrorIntroduction => "error_introduction",
        }
    }

    fn code(&self) -> char {
        match self {
            Strategy::Replacement => 'a',
            Strategy::Rewriting => 'b',
            Strategy::Simplification => 'c',
            Strategy::ErrorIntroduction => 'd',
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "replacement" => Ok(Strategy::Replacement),
            "rewriting" => Ok(Strategy::Rewriting),
            "simplification" => Ok(Strategy::Simplification),
            "error_introduction" => Ok(Strategy::ErrorIntroduction),
            other => Err(format!("unknown strategy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedQuestion {
    pub id: String,
    pub tool_name: String,
    pub text: String,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role_hint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedQuestion {
    pub id: String,
    pub seed_id: String,
    pub tool_name: String,
    pub strategy: Strategy,
    pub text: String,
    /// The question actually fed to the augmenter: the seed, or a prior
    /// augmentation for error_introduction.
    pub base_id: String,
}

/// Name pools the replacement template draws from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EntityPools {
    #[serde(default)]
    pub names: Vec<String>,
    #[serde(default)]
    pub departments: Vec<String>,
    #[serde(default)]
    pub cities: Vec<String>,
    #[serde(default)]
    pub years: Vec<String>,
    #[serde(default)]
    pub misc: BTreeMap<String, Vec<String>>,
}

impl EntityPools {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SynthesisError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| SynthesisError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| SynthesisError::Jsonl {
            path: path.display().to_string(),
            line: 0,
            source,
        })
    }
}

/// The prompt templates for every synthesis stage.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    pub seed: PromptTemplate,
    pub replacement: PromptTemplate,
    pub rewriting: PromptTemplate,
    pub simplification: PromptTemplate,
    pub error_introduction: PromptTemplate,
    pub extraction: PromptTemplate,
}

impl TemplateSet {
    /// The built-in templates.
    pub fn builtin() -> Self {
        let load = |id: &str, body: &str| {
            PromptTemplate::from_body(id, body).expect("builtin template is well-formed")
        };
        Self {
            seed: load("seed", include_str!("templates/seed.txt")),
            replacement: load("replacement", include_str!("templates/replacement.txt")),
            rewriting: load("rewriting", include_str!("templates/rewriting.txt")),
            simplification: load(
                "simplification",
                include_str!("templates/simplification.txt"),
            ),
            error_introduction: load(
                "error_introduction",
                include_str!("templates/error_introduction.txt"),
            ),
            extraction: load("extraction", include_str!("templates/extraction.txt")),
        }
    }

    /// Loads `<name>.txt` overrides from a directory, falling back to the
    /// built-in template for any missing file.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, SynthesisError> {
        let dir = dir.as_ref();
        let mut set = Self::builtin();
        for (name, slot) in [
            ("seed", &mut set.seed),
            ("replacement", &mut set.replacement),
            ("rewriting", &mut set.rewriting),
            ("simplification", &mut set.simplification),
            ("error_introduction", &mut set.error_introduction),
            ("extraction", &mut set.extraction),
        ] {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                let body =
                    std::fs::read_to_string(&path).map_err(|source| SynthesisError::TemplateIo {
                        path: path.display().to_string(),
                        source,
                    })?;
                *slot = PromptTemplate::from_body(name, body).map_err(|source| {
                    SynthesisError::Prompt {
                        template: name.to_string(),
                        source,
                    }
                })?;
            }
        }
        Ok(set)
    }

    pub fn for_strategy(&self, strategy: Strategy) -> &PromptTemplate {
        match strategy {
            Strategy::Replacement => &self.replacement,
            Strategy::Rewriting => &self.rewriting,
            Strategy::Simplification => &self.simplification,
            Strategy::ErrorIntroduction => &self.error_introduction,
        }
    }
}

/// Fractions of the augmentation budget per strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyMix {
    pub replacement: f64,
    pub rewriting: f64,
    pub simplification: f64,
    pub error_introduction: f64,
}

impl Default for StrategyMix {
    fn default() -> Self {
        // replacement and rewriting carry most of the budget
        Self {
            replacement: 0.4,
            rewriting: 0.4,
            simplification: 0.1,
            error_introduction: 0.1,
        }
    }
}

impl StrategyMix {
    fn fractions(&self) -> [(Strategy, f64); 4] {
        [
            (Strategy::Replacement, self.replacement),
            (Strategy::Rewriting, self.rewriting),
            (Strategy::Simplification, self.simplification),
            (Strategy::ErrorIntroduction, self.error_introduction),
        ]
    }

    /// Splits `total` augmentations across strategies by largest remainder;
    /// ties go to the earlier strategy. For the default mix and total 10
    /// this yields 4/4/1/1.
    pub fn counts(&self, total: usize) -> Result<Vec<(Strategy, usize)>, SynthesisError> {
        let fractions = self.fractions();
        let sum: f64 = fractions.iter().map(|(_, f)| f).sum();
        if fractions.iter().any(|(_, f)| *f < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(SynthesisError::MixInvalid(format!(
                "fractions must be non-negative and sum to 1, got sum {sum}"
            )));
        }
        let mut counts: Vec<(Strategy, usize, f64)> = fractions
            .iter()
            .map(|(s, f)| {
                let exact = f * total as f64;
                (*s, exact.floor() as usize, exact - exact.floor())
            })
            .collect();
        let assigned: usize = counts.iter().map(|(_, c, _)| c).sum();
        let mut order: Vec<usize> = (0..counts.len()).collect();
        order.sort_by(|&x, &y| {
            counts[y]
                .2
                .partial_cmp(&counts[x].2)
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        for &idx in order.iter().take(total - assigned) {
            counts[idx].1 += 1;
        }
        let err_count = counts[3].1;
        let others: usize = counts[..3].iter().map(|(_, c, _)| c).sum();
        if err_count > 0 && others == 0 {
            return Err(SynthesisError::MixInvalid(
                "error_introduction requires at least one other strategy to build on".to_string(),
            ));
        }
        Ok(counts.into_iter().map(|(s, c, _)| (s, c)).collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisConfig {
    /// Seed questions generated per tool.
    pub per_tool: usize,
    /// Augmentations per AI seed.
    pub augment_count: usize,
    /// Augmentations per human-annotated seed.
    pub human_augment_count: usize,
    pub mix: StrategyMix,
    /// Allowed deviation for seed line counts.
    pub seed_tolerance: usize,
    /// Allowed deviation for augmentation line counts, as a fraction of the
    /// requested count.
    pub augment_tolerance_frac: f64,
    pub synth_temperature: f64,
    pub extract_temperature: f64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            per_tool: 10,
            augment_count: 10,
            human_augment_count: 5,
            mix: StrategyMix::default(),
            seed_tolerance: 0,
            augment_tolerance_frac: 0.2,
            synth_temperature: 0.8,
            extract_temperature: 0.0,
        }
    }
}

/// A question handed to the augmenter: a seed or a prior augmentation.
#[derive(Debug, Clone, Copy)]
pub enum SourceQuestion<'a> {
    Seed(&'a SeedQuestion),
    Augmented(&'a AugmentedQuestion),
}

impl<'a> SourceQuestion<'a> {
    pub fn id(&self) -> &str {
        match self {
            SourceQuestion::Seed(q) => &q.id,
            SourceQuestion::Augmented(q) => &q.id,
        }
    }

    pub fn text(&self) -> &str {
        match self {
            SourceQuestion::Seed(q) => &q.text,
            SourceQuestion::Augmented(q) => &q.text,
        }
    }

    pub fn seed_id(&self) -> &str {
        match self {
            SourceQuestion::Seed(q) => &q.id,
            SourceQuestion::Augmented(q) => &q.seed_id,
        }
    }

    pub fn tool_name(&self) -> &str {
        match self {
            SourceQuestion::Seed(q) => &q.tool_name,
            SourceQuestion::Augmented(q) => &q.tool_name,
        }
    }

    pub fn is_augmented(&self) -> bool {
        matches!(self, SourceQuestion::Augmented(_))
    }
}

/// An extracted call plus the required parameters the extractor could not
/// find. Missing parameters are not fatal here; dataset validation is the
/// final gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedCall {
    pub call: CallInstruction,
    pub missing_required: Vec<String>,
}

/// An augmented question paired with its propagated instruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagatedPair {
    pub question: AugmentedQuestion,
    pub instruction: CallInstruction,
    /// Replacement rewrites entity values, so the shared seed instruction
    /// may be stale; these pairs go back through extraction.
    pub re_extract: bool,
}

/// Instruction sidecar record: one per question id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub question_id: String,
    pub tool_name: String,
    pub arguments: BTreeMap<String, Literal>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub missing_required: Vec<String>,
}

/// Drives the synthesis stages against a catalog, entity pools, a template
/// set, and a gateway.
pub struct Synthesizer<'a> {
    pub catalog: &'a Catalog,
    pub pools: &'a EntityPools,
    pub templates: &'a TemplateSet,
    pub gateway: &'a Gateway,
    pub config: SynthesisConfig,
}

impl<'a> Synthesizer<'a> {
    pub fn new(
        catalog: &'a Catalog,
        pools: &'a EntityPools,
        templates: &'a TemplateSet,
        gateway: &'a Gateway,
        config: SynthesisConfig,
    ) -> Self {
        Self {
            catalog,
            pools,
            templates,
            gateway,
            config,
        }
    }

    fn complete(
        &self,
        prompt: String,
        temperature: f64,
        context: &str,
    ) -> Result<String, SynthesisError> {
        let req = self.gateway.request(prompt).with_temperature(temperature);
        self.gateway
            .complete(&req)
            .map_err(|source| SynthesisError::Gateway {
                context: context.to_string(),
                source,
            })
    }

    /// Generates `per_tool` seed questions for every catalog tool.
    pub fn generate_seeds(&self) -> Result<Vec<SeedQuestion>, SynthesisError> {
        let per_tool = self.config.per_tool;
        let mut seeds = Vec::with_capacity(per_tool * self.catalog.tools.len());
        for (tool_idx, tool) in self.catalog.tools.iter().enumerate() {
            let prompt = prompts::seed_prompt(self.templates, tool, self.pools, per_tool)?;
            let raw = self.complete(
                prompt,
                self.config.synth_temperature,
                &format!("seed generation for tool `{}`", tool.name),
            )?;
            let mut lines = parse_lines(&raw, per_tool, self.config.seed_tolerance).map_err(
                |source| SynthesisError::Gateway {
                    context: format!("seed lines for tool `{}`", tool.name),
                    source,
                },
            )?;
            lines.truncate(per_tool);
            for (i, text) in lines.into_iter().enumerate() {
                seeds.push(SeedQuestion {
                    id: format!("s-{tool_idx:02}-{i:03}"),
                    tool_name: tool.name.clone(),
                    text,
                    provenance: Provenance::Ai,
                    role_hint: None,
                });
            }
        }
        Ok(seeds)
    }

    /// Applies one augmentation strategy to one question.
    pub fn augment(
        &self,
        source: SourceQuestion<'_>,
        strategy: Strategy,
        count: usize,
    ) -> Result<Vec<AugmentedQuestion>, SynthesisError> {
        if strategy == Strategy::ErrorIntroduction && !source.is_augmented() {
            return Err(SynthesisError::ErrorIntroductionOnSeed(
                source.id().to_string(),
            ));
        }
        let tool = self
            .catalog
            .tool(source.tool_name())
            .ok_or_else(|| SynthesisError::ToolNotInCatalog(source.tool_name().to_string()))?;
        let prompt = prompts::augment_prompt(
            self.templates,
            strategy,
            source.text(),
            tool,
            self.pools,
            count,
        )?;
        let raw = self.complete(
            prompt,
            self.config.synth_temperature,
            &format!("{} augmentation of `{}`", strategy.name(), source.id()),
        )?;
        let tolerance = (count as f64 * self.config.augment_tolerance_frac).round() as usize;
        let mut lines =
            parse_lines(&raw, count, tolerance).map_err(|source_err| SynthesisError::Gateway {
                context: format!("{} lines for `{}`", strategy.name(), source.id()),
                source: source_err,
            })?;
        lines.truncate(count);
        let seed_id = source.seed_id().to_string();
        Ok(lines
            .into_iter()
            .enumerate()
            .map(|(j, text)| AugmentedQuestion {
                id: format!("{seed_id}-{}{j:02}", strategy.code()),
                seed_id: seed_id.clone(),
                tool_name: source.tool_name().to_string(),
                strategy,
                text,
                base_id: source.id().to_string(),
            })
            .collect())
    }

    /// Runs the full augmentation plan for one seed: the base strategies
    /// first, then error_introduction on the first augmentation whose
    /// instruction still matches the seed (a non-replacement one when
    /// available, since replacement rewrites parameter values).
    pub fn augment_seed(
        &self,
        seed: &SeedQuestion,
        total: usize,
    ) -> Result<Vec<AugmentedQuestion>, SynthesisError> {
        let plan = self.config.mix.counts(total)?;
        let mut out: Vec<AugmentedQuestion> = Vec::with_capacity(total);
        for (strategy, count) in &plan {
            if *count == 0 || *strategy == Strategy::ErrorIntroduction {
                continue;
            }
            out.extend(self.augment(SourceQuestion::Seed(seed), *strategy, *count)?);
        }
        let err_count = plan
            .iter()
            .find(|(s, _)| *s == Strategy::ErrorIntroduction)
            .map(|(_, c)| *c)
            .unwrap_or(0);
        if err_count > 0 {
            let base = out
                .iter()
                .find(|q| q.strategy != Strategy::Replacement)
                .or_else(|| out.first())
                .cloned()
                .ok_or_else(|| {
                    SynthesisError::MixInvalid(
                        "error_introduction requires a prior augmentation".to_string(),
                    )
                })?;
            out.extend(self.augment(
                SourceQuestion::Augmented(&base),
                Strategy::ErrorIntroduction,
                err_count,
            )?);
        }
        out.sort_by(|a, b| a.strategy.cmp(&b.strategy).then(a.id.cmp(&b.id)));
        Ok(out)
    }

    /// Augments every seed; output is sorted by seed id, strategy, reply
    /// index, so reruns are byte-identical.
    pub fn augment_all(
        &self,
        seeds: &[SeedQuestion],
    ) -> Result<Vec<AugmentedQuestion>, SynthesisError> {
        let mut sorted: Vec<&SeedQuestion> = seeds.iter().collect();
        sorted.sort_by(|a, b| a.id.cmp(&b.id));
        let mut out = Vec::new();
        for seed in sorted {
            let total = match seed.provenance {
                Provenance::Ai => self.config.augment_count,
                Provenance::Human => self.config.human_augment_count,
            };
            out.extend(self.augment_seed(seed, total)?);
        }
        Ok(out)
    }

    /// Extracts the call instruction for a question against its tool schema.
    pub fn extract_call(
        &self,
        question_text: &str,
        tool: &ToolSpec,
    ) -> Result<ExtractedCall, SynthesisError> {
        let prompt = prompts::extraction_prompt(self.templates, tool, question_text)?;
        let raw = self.complete(
            prompt,
            self.config.extract_temperature,
            &format!("extraction for tool `{}`", tool.name),
        )?;
        let cleaned = strip_fences(&raw);
        let parsed: serde_json::Value =
            serde_json::from_str(cleaned).map_err(|_| SynthesisError::ExtractorUnparseable {
                context: format!("tool `{}`", tool.name),
                preview: cleaned.chars().take(80).collect(),
            })?;
        let object = parsed
            .as_object()
            .ok_or_else(|| SynthesisError::ExtractorUnparseable {
                context: format!("tool `{}`", tool.name),
                preview: cleaned.chars().take(80).collect(),
            })?;
        let mut call = CallInstruction::new(tool.name.clone());
        for (key, value) in object {
            let param = tool
                .param(key)
                .ok_or_else(|| SynthesisError::UnknownExtractedParam {
                    tool: tool.name.clone(),
                    param: key.clone(),
                })?;
            if !param.dtype.accepts_json(value) {
                return Err(SynthesisError::ExtractedTypeMismatch {
                    tool: tool.name.clone(),
                    param: key.clone(),
                    expected: param.dtype,
                    found: json_kind(value),
                });
            }
            call.arguments
                .insert(key.clone(), Literal::from_json(value));
        }
        let missing_required = tool
            .required_params()
            .filter(|p| !call.arguments.contains_key(&p.name))
            .map(|p| p.name.clone())
            .collect();
        Ok(ExtractedCall {
            call,
            missing_required,
        })
    }

    /// Extracts instructions for every seed, propagates them to the
    /// augmented questions, and re-extracts the replacement-derived ones.
    /// Returns one instruction record per question (seeds included).
    pub fn extract_all(
        &self,
        seeds: &[SeedQuestion],
        augmented: &[AugmentedQuestion],
    ) -> Result<Vec<InstructionRecord>, SynthesisError> {
        let mut seed_instructions: BTreeMap<String, CallInstruction> = BTreeMap::new();
        let mut records = Vec::new();
        let mut sorted_seeds: Vec<&SeedQuestion> = seeds.iter().collect();
        sorted_seeds.sort_by(|a, b| a.id.cmp(&b.id));
        for seed in &sorted_seeds {
            let tool = self
                .catalog
                .tool(&seed.tool_name)
                .ok_or_else(|| SynthesisError::ToolNotInCatalog(seed.tool_name.clone()))?;
            let extracted = self.extract_call(&seed.text, tool)?;
            seed_instructions.insert(seed.id.clone(), extracted.call.clone());
            records.push(InstructionRecord {
                question_id: seed.id.clone(),
                tool_name: extracted.call.tool_name.clone(),
                arguments: extracted.call.arguments,
                missing_required: extracted.missing_required,
            });
        }
        let pairs = propagate_instructions(&seed_instructions, augmented)?;
        for pair in pairs {
            if pair.re_extract {
                let tool = self.catalog.tool(&pair.question.tool_name).ok_or_else(|| {
                    SynthesisError::ToolNotInCatalog(pair.question.tool_name.clone())
                })?;
                let extracted = self.extract_call(&pair.question.text, tool)?;
                records.push(InstructionRecord {
                    question_id: pair.question.id.clone(),
                    tool_name: extracted.call.tool_name.clone(),
                    arguments: extracted.call.arguments,
                    missing_required: extracted.missing_required,
                });
            } else {
                records.push(InstructionRecord {
                    question_id: pair.question.id.clone(),
                    tool_name: pair.instruction.tool_name.clone(),
                    arguments: pair.instruction.arguments.clone(),
                    missing_required: Vec::new(),
                });
            }
        }
        Ok(records)
    }
}

fn json_kind(value: &serde_json::Value) -> &'static str {
    match value {
        serde_json::Value::Null => "null",
        serde_json::Value::Bool(_) => "boolean",
        serde_json::Value::Number(n) if n.is_i64() || n.is_u64() => "integer",
        serde_json::Value::Number(_) => "number",
        serde_json::Value::String(_) => "string",
        serde_json::Value::Array(_) => "array",
        serde_json::Value::Object(_) => "object",
    }
}

fn strip_fences(raw: &str) -> &str {
    let trimmed = raw.trim();
    if let Some(rest) = trimmed.strip_prefix("```") {
        if let Some(nl) = rest.find('\n') {
            let body = &rest[nl + 1..];
            return body.strip_suffix("```").unwrap_or(body).trim();
        }
    }
    trimmed
}

/// Pairs each augmented question with its seed's instruction. Replacement
/// pairs are flagged `re_extract`: the strategy rewrites names, years, and
/// other parameter values, so sharing the seed's instruction verbatim would
/// corrupt their labels.
pub fn propagate_instructions(
    seed_instructions: &BTreeMap<String, CallInstruction>,
    augmented: &[AugmentedQuestion],
) -> Result<Vec<PropagatedPair>, SynthesisError> {
    let mut out = Vec::with_capacity(augmented.len());
    for question in augmented {
        let instruction = seed_instructions.get(&question.seed_id).ok_or_else(|| {
            SynthesisError::OrphanAugmentation {
                id: question.id.clone(),
                seed_id: question.seed_id.clone(),
            }
        })?;
        out.push(PropagatedPair {
            question: question.clone(),
            instruction: instruction.clone(),
            re_extract: question.strategy == Strategy::Replacement,
        });
    }
    Ok(out)
}

/// Report from the retention filter.
#[derive(Debug, Clone, Default, Serialize)]
pub struct FilterReport {
    pub kept_per_tool: BTreeMap<String, usize>,
    pub dropped_duplicates: usize,
    pub dropped_over_quota: usize,
}

/// Deterministic retention: lineage order (seed id, strategy, reply index),
/// exact-text dedup per tool, then the first `quota` per tool.
pub fn apply_quota(
    mut questions: Vec<AugmentedQuestion>,
    quota_per_tool: Option<usize>,
) -> (Vec<AugmentedQuestion>, FilterReport) {
    questions.sort_by(|a, b| {
        a.seed_id
            .cmp(&b.seed_id)
            .then(a.strategy.cmp(&b.strategy))
            .then(a.id.cmp(&b.id))
    });
    let mut report = FilterReport::default();
    let mut seen: BTreeSet<(String, String)> = BTreeSet::new();
    let mut kept = Vec::with_capacity(questions.len());
    for q in questions {
        if !seen.insert((q.tool_name.clone(), q.text.clone())) {
            report.dropped_duplicates += 1;
            continue;
        }
        let count = report.kept_per_tool.entry(q.tool_name.clone()).or_insert(0);
        if let Some(quota) = quota_per_tool {
            if *count >= quota {
                report.dropped_over_quota += 1;
                continue;
            }
        }
        *count += 1;
        kept.push(q);
    }
    (kept, report)
}

/// Imports human-annotated seeds from a JSONL file of
/// `{tool_name, text, role_hint?}` records; ids are assigned
/// deterministically and provenance is forced to `human`.
pub fn import_human_seeds(
    path: impl AsRef<Path>,
    catalog: &Catalog,
) -> Result<Vec<SeedQuestion>, SynthesisError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SynthesisError::Io {
        path: path.display().to_string(),
        source,
    })?;
    #[derive(Deserialize)]
    struct HumanSeed {
        tool_name: String,
        text: String,
        #[serde(default)]
        role_hint: Option<String>,
    }
    let mut counters: BTreeMap<String, usize> = BTreeMap::new();
    let mut seeds = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: HumanSeed =
            serde_json::from_str(line).map_err(|source| SynthesisError::Jsonl {
                path: path.display().to_string(),
                line: idx + 1,
                source,
            })?;
        let tool_idx = catalog
            .tools
            .iter()
            .position(|t| t.name == record.tool_name)
            .ok_or_else(|| SynthesisError::ToolNotInCatalog(record.tool_name.clone()))?;
        let counter = counters.entry(record.tool_name.clone()).or_insert(0);
        seeds.push(SeedQuestion {
            id: format!("h-{tool_idx:02}-{:03}", *counter),
            tool_name: record.tool_name,
            text: record.text,
            provenance: Provenance::Human,
            role_hint: record.role_hint,
        });
        *counter += 1;
    }
    Ok(seeds)
}

// --- JSONL persistence ---

pub fn write_jsonl<T: Serialize>(
    path: impl AsRef<Path>,
    items: &[T],
) -> Result<(), SynthesisError> {
    let path = path.as_ref();
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("record serializes"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| SynthesisError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(
    path: impl AsRef<Path>,
) -> Result<Vec<T>, SynthesisError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SynthesisError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut items = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        items.push(
            serde_json::from_str(line).map_err(|source| SynthesisError::Jsonl {
                path: path.display().to_string(),
                line: idx + 1,
                source,
            })?,
        );
    }
    Ok(items)
}
