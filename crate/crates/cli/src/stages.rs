//! One function per pipeline stage. Each reads its inputs, writes its
//! outputs under the run's output directory, and drops a manifest with
//! content hashes of both.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use fcpipe_core::analysis;
use fcpipe_core::catalog::{self, Catalog, DescriptionVariant};
use fcpipe_core::dataset::{
    self, formats, DatasetFormat, SampleRecord, SplitSpec, TrainingSample, ValidationOptions,
};
use fcpipe_core::eval::{self, EvalPolicy, Verdict};
use fcpipe_core::merge::{self, MergeSpec, MergeStrategy};
use fcpipe_core::synthesis::{
    self, read_jsonl, write_jsonl, AugmentedQuestion, EntityPools, InstructionRecord,
    SeedQuestion, Synthesizer, TemplateSet,
};

use crate::config::FileConfig;
use crate::manifest::StageManifest;

pub struct Ctx {
    pub file: FileConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub quiet: bool,
    pub json: bool,
}

impl Ctx {
    pub fn progress(&self, message: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", message.as_ref());
        }
    }

    pub fn summary(&self, human: String, machine: serde_json::Value) {
        if self.json {
            println!("{machine}");
        } else {
            println!("{human}");
        }
    }

    fn resolve(&self, flag: &Option<PathBuf>, from_config: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
        flag.clone()
            .or_else(|| from_config.clone())
            .with_context(|| format!("no {what} path given (flag or config)"))
    }

    fn catalog(&self, flag: &Option<PathBuf>) -> Result<(PathBuf, Catalog)> {
        let path = self.resolve(flag, &self.file.catalog, "catalog")?;
        let catalog = catalog::load_catalog(&path)?;
        Ok((path, catalog))
    }

    fn pools(&self, flag: &Option<PathBuf>) -> Result<(PathBuf, EntityPools)> {
        let path = self.resolve(flag, &self.file.pools, "pools")?;
        let pools = EntityPools::load(&path)?;
        Ok((path, pools))
    }

    fn templates(&self) -> Result<TemplateSet> {
        match &self.file.template_dir {
            Some(dir) => Ok(TemplateSet::load_dir(dir)?),
            None => Ok(TemplateSet::builtin()),
        }
    }

    fn ensure_out_dir(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out_dir)
            .with_context(|| format!("creating output dir {}", self.out_dir.display()))
    }

    fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

fn mock_fixture_input(ctx: &Ctx, manifest: &mut StageManifest) -> Result<()> {
    if let Some(path) = &ctx.file.gateway.mock_fixture {
        manifest.stamp_input(path)?;
    }
    Ok(())
}

pub fn seeds(
    ctx: &Ctx,
    catalog_flag: &Option<PathBuf>,
    pools_flag: &Option<PathBuf>,
    per_tool: Option<usize>,
    human: &Option<PathBuf>,
) -> Result<i32> {
    ctx.ensure_out_dir()?;
    let (catalog_path, catalog) = ctx.catalog(catalog_flag)?;
    let (pools_path, pools) = ctx.pools(pools_flag)?;
    let templates = ctx.templates()?;
    let gateway = ctx.file.build_gateway()?;
    let mut config = ctx.file.synthesis_config();
    if let Some(n) = per_tool {
        config.per_tool = n;
    }
    ctx.progress(format!(
        "generating {} seed questions per tool for {} tools",
        config.per_tool,
        catalog.tools.len()
    ));
    let synth = Synthesizer::new(&catalog, &pools, &templates, &gateway, config);
    let mut seeds = synth.generate_seeds()?;
    let n_ai = seeds.len();
    if let Some(path) = human {
        let imported = synthesis::import_human_seeds(path, &catalog)?;
        ctx.progress(format!("imported {} human seeds", imported.len()));
        seeds.extend(imported);
    }
    let out_path = ctx.out("seeds.jsonl");
    write_jsonl(&out_path, &seeds)?;

    let mut manifest = StageManifest::new("seeds", ctx.seed);
    manifest.stamp_input(&catalog_path)?;
    manifest.stamp_input(&pools_path)?;
    mock_fixture_input(ctx, &mut manifest)?;
    if let Some(path) = human {
        manifest.stamp_input(path)?;
    }
    manifest.stamp_output(&out_path)?;
    manifest.count("n_seeds", seeds.len());
    manifest.count("n_ai", n_ai);
    manifest.count("n_human", seeds.len() - n_ai);
    manifest.write(&ctx.out_dir)?;

    ctx.summary(
        format!("wrote {} seeds to {}", seeds.len(), out_path.display()),
        json!({"stage": "seeds", "n_seeds": seeds.len(), "output": out_path}),
    );
    Ok(0)
}

pub fn augment(
    ctx: &Ctx,
    catalog_flag: &Option<PathBuf>,
    pools_flag: &Option<PathBuf>,
    seeds_path: &Option<PathBuf>,
    count: Option<usize>,
    human_count: Option<usize>,
) -> Result<i32> {
    ctx.ensure_out_dir()?;
    let (catalog_path, catalog) = ctx.catalog(catalog_flag)?;
    let (pools_path, pools) = ctx.pools(pools_flag)?;
    let templates = ctx.templates()?;
    let gateway = ctx.file.build_gateway()?;
    let mut config = ctx.file.synthesis_config();
    if let Some(n) = count {
        config.augment_count = n;
    }
    if let Some(n) = human_count {
        config.human_augment_count = n;
    }
    let seeds_path = seeds_path.clone().unwrap_or_else(|| ctx.out("seeds.jsonl"));
    let seeds: Vec<SeedQuestion> = read_jsonl(&seeds_path)?;
    ctx.progress(format!(
        "augmenting {} seeds ({} variants per AI seed)",
        seeds.len(),
        config.augment_count
    ));
    let synth = Synthesizer::new(&catalog, &pools, &templates, &gateway, config);
    let augmented = synth.augment_all(&seeds)?;
    let out_path = ctx.out("augmented.jsonl");
    write_jsonl(&out_path, &augmented)?;

    let mut manifest = StageManifest::new("augment", ctx.seed);
    manifest.stamp_input(&catalog_path)?;
    manifest.stamp_input(&pools_path)?;
    manifest.stamp_input(&seeds_path)?;
    mock_fixture_input(ctx, &mut manifest)?;
    manifest.stamp_output(&out_path)?;
    manifest.count("n_seeds", seeds.len());
    manifest.count("n_augmented", augmented.len());
    manifest.write(&ctx.out_dir)?;

    ctx.summary(
        format!(
            "wrote {} augmented questions to {}",
            augmented.len(),
            out_path.display()
        ),
        json!({"stage": "augment", "n_augmented": augmented.len(), "output": out_path}),
    );
    Ok(0)
}

pub fn extract(
    ctx: &Ctx,
    catalog_flag: &Option<PathBuf>,
    pools_flag: &Option<PathBuf>,
    seeds_path: &Option<PathBuf>,
    augmented_path: &Option<PathBuf>,
) -> Result<i32> {
    ctx.ensure_out_dir()?;
    let (catalog_path, catalog) = ctx.catalog(catalog_flag)?;
    let (pools_path, pools) = ctx.pools(pools_flag)?;
    let templates = ctx.templates()?;
    let gateway = ctx.file.build_gateway()?;
    let config = ctx.file.synthesis_config();
    let seeds_path = seeds_path.clone().unwrap_or_else(|| ctx.out("seeds.jsonl"));
    let augmented_path = augmented_path
        .clone()
        .unwrap_or_else(|| ctx.out("augmented.jsonl"));
    let seeds: Vec<SeedQuestion> = read_jsonl(&seeds_path)?;
    let augmented: Vec<AugmentedQuestion> = read_jsonl(&augmented_path)?;
    ctx.progress(format!(
        "extracting instructions for {} seeds and {} augmented questions",
        seeds.len(),
        augmented.len()
    ));
    let synth = Synthesizer::new(&catalog, &pools, &templates, &gateway, config);
    let records = synth.extract_all(&seeds, &augmented)?;
    let pending = records
        .iter()
        .filter(|r| !r.missing_required.is_empty())
        .count();
    let out_path = ctx.out("instructions.jsonl");
    write_jsonl(&out_path, &records)?;

    let mut manifest = StageManifest::new("extract", ctx.seed);
    manifest.stamp_input(&catalog_path)?;
    manifest.stamp_input(&pools_path)?;
    manifest.stamp_input(&seeds_path)?;
    manifest.stamp_input(&augmented_path)?;
    mock_fixture_input(ctx, &mut manifest)?;
    manifest.stamp_output(&out_path)?;
    manifest.count("n_instructions", records.len());
    manifest.count("n_validation_pending", pending);
    manifest.write(&ctx.out_dir)?;

    ctx.summary(
        format!(
            "wrote {} instructions ({} pending validation) to {}",
            records.len(),
            pending,
            out_path.display()
        ),
        json!({"stage": "extract", "n_instructions": records.len(), "n_validation_pending": pending, "output": out_path}),
    );
    Ok(0)
}

#[derive(Debug, Serialize)]
struct DefectRecord<'a> {
    question_id: &'a str,
    defects: &'a [dataset::Defect],
}

pub fn validate(
    ctx: &Ctx,
    catalog_flag: &Option<PathBuf>,
    questions_path: &Option<PathBuf>,
    instructions_path: &Option<PathBuf>,
    seeds_path: &Option<PathBuf>,
    quota: Option<usize>,
    no_grounding: bool,
) -> Result<i32> {
    ctx.ensure_out_dir()?;
    let (catalog_path, catalog) = ctx.catalog(catalog_flag)?;
    let questions_path = questions_path
        .clone()
        .unwrap_or_else(|| ctx.out("augmented.jsonl"));
    let instructions_path = instructions_path
        .clone()
        .unwrap_or_else(|| ctx.out("instructions.jsonl"));
    let seeds_path = seeds_path.clone().unwrap_or_else(|| ctx.out("seeds.jsonl"));
    let questions: Vec<AugmentedQuestion> = read_jsonl(&questions_path)?;
    let instructions: Vec<InstructionRecord> = read_jsonl(&instructions_path)?;
    // provenance is inherited from the seed each sample descends from
    let seed_provenance: BTreeMap<String, synthesis::Provenance> = if seeds_path.exists() {
        read_jsonl::<SeedQuestion>(&seeds_path)?
            .into_iter()
            .map(|s| (s.id, s.provenance))
            .collect()
    } else {
        BTreeMap::new()
    };
    let by_id: BTreeMap<&str, &InstructionRecord> = instructions
        .iter()
        .map(|r| (r.question_id.as_str(), r))
        .collect();
    let options = ValidationOptions {
        check_grounding: !no_grounding,
    };
    let quota = quota.or(ctx.file.quota_per_tool);

    let mut valid_questions = Vec::new();
    let mut records_by_id: BTreeMap<String, SampleRecord> = BTreeMap::new();
    let mut defect_lines = Vec::new();
    let mut n_defective = 0usize;
    for question in &questions {
        let Some(instruction) = by_id.get(question.id.as_str()) else {
            bail!(
                "question `{}` has no instruction in {}",
                question.id,
                instructions_path.display()
            );
        };
        let record = SampleRecord {
            id: question.id.clone(),
            seed_id: question.seed_id.clone(),
            strategy: Some(question.strategy),
            provenance: seed_provenance
                .get(&question.seed_id)
                .copied()
                .unwrap_or(synthesis::Provenance::Ai),
            question: question.text.clone(),
            tool_name: instruction.tool_name.clone(),
            arguments: instruction.arguments.clone(),
        };
        let sample = dataset::build_samples(std::slice::from_ref(&record), &catalog)
            .pop()
            .expect("one sample per record");
        let defects = dataset::validate_sample(&sample, &catalog, &options);
        if defects.is_empty() {
            valid_questions.push(question.clone());
            records_by_id.insert(question.id.clone(), record);
        } else {
            n_defective += 1;
            defect_lines.push(
                serde_json::to_string(&DefectRecord {
                    question_id: &question.id,
                    defects: &defects,
                })
                .expect("defect serializes"),
            );
        }
    }

    let (retained, report) = synthesis::apply_quota(valid_questions, quota);
    let samples: Vec<&SampleRecord> = retained
        .iter()
        .map(|q| records_by_id.get(&q.id).expect("retained came from valid"))
        .collect();

    let samples_path = ctx.out("samples.jsonl");
    write_jsonl(&samples_path, &samples)?;
    let defects_path = ctx.out("defects.jsonl");
    std::fs::write(
        &defects_path,
        defect_lines
            .iter()
            .map(|l| format!("{l}\n"))
            .collect::<String>(),
    )
    .with_context(|| format!("writing {}", defects_path.display()))?;

    let mut manifest = StageManifest::new("validate", ctx.seed);
    manifest.stamp_input(&catalog_path)?;
    manifest.stamp_input(&questions_path)?;
    manifest.stamp_input(&instructions_path)?;
    if seeds_path.exists() {
        manifest.stamp_input(&seeds_path)?;
    }
    manifest.stamp_output(&samples_path)?;
    manifest.stamp_output(&defects_path)?;
    manifest.count("n_input", questions.len());
    manifest.count("n_defective", n_defective);
    manifest.count("n_retained", samples.len());
    manifest.count("dropped_duplicates", report.dropped_duplicates);
    manifest.count("dropped_over_quota", report.dropped_over_quota);
    manifest.count(
        "per_tool",
        serde_json::to_value(&report.kept_per_tool).expect("serializes"),
    );
    manifest.write(&ctx.out_dir)?;

    ctx.summary(
        format!(
            "retained {} of {} samples ({} defective, {} duplicates, {} over quota)",
            samples.len(),
            questions.len(),
            n_defective,
            report.dropped_duplicates,
            report.dropped_over_quota
        ),
        json!({
            "stage": "validate",
            "n_input": questions.len(),
            "n_retained": samples.len(),
            "n_defective": n_defective,
            "output": samples_path,
        }),
    );
    Ok(if n_defective > 0 { 1 } else { 0 })
}

fn load_samples(path: &Path, catalog: &Catalog) -> Result<(Vec<SampleRecord>, Vec<TrainingSample>)> {
    let records: Vec<SampleRecord> = read_jsonl(path)?;
    let samples = dataset::build_samples(&records, catalog);
    Ok((records, samples))
}

pub fn assemble(
    ctx: &Ctx,
    catalog_flag: &Option<PathBuf>,
    samples_path: &Option<PathBuf>,
    format_name: &str,
    distractors: Option<usize>,
) -> Result<i32> {
    ctx.ensure_out_dir()?;
    let (catalog_path, catalog) = ctx.catalog(catalog_flag)?;
    let samples_path = samples_path
        .clone()
        .unwrap_or_else(|| ctx.out("samples.jsonl"));
    let format: DatasetFormat = format_name.parse()?;
    let records: Vec<SampleRecord> = read_jsonl(&samples_path)?;
    let samples = match distractors {
        Some(k) => dataset::build_samples_with_distractors(&records, &catalog, k, ctx.seed),
        None => dataset::build_samples(&records, &catalog),
    };
    let extension = match format {
        DatasetFormat::Sharegpt | DatasetFormat::Alpaca => "json",
        DatasetFormat::Openai | DatasetFormat::BfclV3 => "jsonl",
    };
    let out_path = ctx.out(&format!("dataset.{}.{extension}", format.name()));
    ctx.progress(format!(
        "assembling {} samples as {}",
        samples.len(),
        format.name()
    ));
    let result = formats::assemble(&samples, format, &catalog, ctx.seed, &out_path)?;

    let mut manifest = StageManifest::new("assemble", ctx.seed);
    manifest.stamp_input(&catalog_path)?;
    manifest.stamp_input(&samples_path)?;
    manifest.stamp_output(&out_path)?;
    manifest.count("format", format.name());
    manifest.count("n_records", result.n_records);
    manifest.count("estimated_max_tokens", result.estimated_max_tokens);
    manifest.count(
        "per_tool",
        serde_json::to_value(&result.per_tool).expect("serializes"),
    );
    manifest.write(&ctx.out_dir)?;

    ctx.summary(
        format!(
            "wrote {} {} records to {} (estimated max {} tokens)",
            result.n_records,
            format.name(),
            out_path.display(),
            result.estimated_max_tokens
        ),
        json!({
            "stage": "assemble",
            "format": format.name(),
            "n_records": result.n_records,
            "estimated_max_tokens": result.estimated_max_tokens,
            "output": out_path,
        }),
    );
    Ok(0)
}

pub fn split(
    ctx: &Ctx,
    catalog_flag: &Option<PathBuf>,
    samples_path: &Option<PathBuf>,
    fraction: f64,
    no_stratify: bool,
) -> Result<i32> {
    ctx.ensure_out_dir()?;
    let (catalog_path, catalog) = ctx.catalog(catalog_flag)?;
    let samples_path = samples_path
        .clone()
        .unwrap_or_else(|| ctx.out("samples.jsonl"));
    let (records, samples) = load_samples(&samples_path, &catalog)?;
    let by_id: BTreeMap<&str, &SampleRecord> =
        records.iter().map(|r| (r.id.as_str(), r)).collect();
    let spec = SplitSpec {
        train_fraction: fraction,
        stratify_by_tool: !no_stratify,
        rng_seed: ctx.seed,
    };
    let outcome = dataset::split(&samples, &spec)?;
    for warning in &outcome.warnings {
        ctx.progress(format!("warning: {warning}"));
    }
    let to_records = |side: &[TrainingSample]| -> Vec<&SampleRecord> {
        side.iter()
            .map(|s| *by_id.get(s.meta.id.as_str()).expect("sample came from records"))
            .collect()
    };
    let train_path = ctx.out("train.jsonl");
    let eval_path = ctx.out("eval.jsonl");
    write_jsonl(&train_path, &to_records(&outcome.train))?;
    write_jsonl(&eval_path, &to_records(&outcome.eval))?;

    let mut manifest = StageManifest::new("split", ctx.seed);
    manifest.stamp_input(&catalog_path)?;
    manifest.stamp_input(&samples_path)?;
    manifest.stamp_output(&train_path)?;
    manifest.stamp_output(&eval_path)?;
    manifest.count("n_train", outcome.train.len());
    manifest.count("n_eval", outcome.eval.len());
    manifest.count("train_fraction", fraction);
    manifest.count("stratified", !no_stratify);
    manifest.write(&ctx.out_dir)?;

    ctx.summary(
        format!(
            "split {} samples into {} train / {} eval",
            samples.len(),
            outcome.train.len(),
            outcome.eval.len()
        ),
        json!({
            "stage": "split",
            "n_train": outcome.train.len(),
            "n_eval": outcome.eval.len(),
            "train": train_path,
            "eval": eval_path,
        }),
    );
    Ok(0)
}

pub fn train_config(
    ctx: &Ctx,
    catalog_flag: &Option<PathBuf>,
    samples_path: &Option<PathBuf>,
    estimated_max_len: Option<usize>,
    overrides: &[String],
) -> Result<i32> {
    ctx.ensure_out_dir()?;
    let mut override_map = BTreeMap::new();
    for entry in overrides {
        let (key, value) = entry
            .split_once('=')
            .with_context(|| format!("--set takes key=value, got `{entry}`"))?;
        override_map.insert(key.to_string(), value.to_string());
    }
    let mut manifest = StageManifest::new("train-config", ctx.seed);
    let estimated = match estimated_max_len {
        Some(n) => n,
        None => {
            let (catalog_path, catalog) = ctx.catalog(catalog_flag)?;
            let samples_path = samples_path
                .clone()
                .unwrap_or_else(|| ctx.out("samples.jsonl"));
            let (_, samples) = load_samples(&samples_path, &catalog)?;
            manifest.stamp_input(&catalog_path)?;
            manifest.stamp_input(&samples_path)?;
            formats::estimate_max_tokens(&samples)?
        }
    };
    let (config, warnings) = dataset::emit_train_config(&override_map, estimated)?;
    let out_path = ctx.out("train_config.txt");
    dataset::write_train_config(&config, &out_path)?;
    for warning in &warnings {
        match warning {
            dataset::ConfigWarning::CutoffTruncation {
                cutoff_len,
                estimated_max_len,
            } => ctx.progress(format!(
                "warning: cutoff_len {cutoff_len} is below the estimated max sample length {estimated_max_len}; training would truncate structured records"
            )),
        }
    }
    manifest.stamp_output(&out_path)?;
    manifest.count("estimated_max_len", estimated);
    manifest.count("cutoff_len", config.cutoff_len);
    manifest.count("n_warnings", warnings.len());
    manifest.write(&ctx.out_dir)?;

    ctx.summary(
        format!(
            "wrote trainer config to {} (cutoff {}, estimated max {}{})",
            out_path.display(),
            config.cutoff_len,
            estimated,
            if warnings.is_empty() {
                ""
            } else {
                "; TRUNCATION WARNING"
            }
        ),
        json!({
            "stage": "train-config",
            "cutoff_len": config.cutoff_len,
            "estimated_max_len": estimated,
            "warnings": warnings,
            "output": out_path,
        }),
    );
    Ok(0)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub id: String,
    #[serde(flatten)]
    pub verdict: Verdict,
}

pub fn eval_stage(
    ctx: &Ctx,
    cases_path: &PathBuf,
    outputs_path: &PathBuf,
    fold_values: bool,
    no_fold_tools: bool,
) -> Result<i32> {
    ctx.ensure_out_dir()?;
    let mut cases = eval::load_cases(cases_path)?;
    let outputs = eval::load_outputs(outputs_path)?;
    eval::attach_outputs(&mut cases, &outputs)?;
    let policy = EvalPolicy {
        fold_tool_case: !no_fold_tools,
        fold_value_case: fold_values,
    };
    ctx.progress(format!("judging {} cases", cases.len()));
    let verdicts: Vec<VerdictRecord> = cases
        .iter()
        .map(|case| VerdictRecord {
            id: case.id.clone(),
            verdict: eval::judge(case, &policy),
        })
        .collect();
    let metrics = eval::aggregate(
        &verdicts.iter().map(|v| v.verdict.clone()).collect::<Vec<_>>(),
    )?;

    let verdicts_path = ctx.out("verdicts.jsonl");
    write_jsonl(&verdicts_path, &verdicts)?;
    let metrics_path = ctx.out("metrics.json");
    std::fs::write(
        &metrics_path,
        serde_json::to_string_pretty(&metrics).expect("metrics serialize"),
    )
    .with_context(|| format!("writing {}", metrics_path.display()))?;

    let mut manifest = StageManifest::new("eval", ctx.seed);
    manifest.stamp_input(cases_path)?;
    manifest.stamp_input(outputs_path)?;
    manifest.stamp_output(&verdicts_path)?;
    manifest.stamp_output(&metrics_path)?;
    manifest.count("n_cases", cases.len());
    manifest.count("n_pass", metrics.n_pass);
    manifest.count("n_se", metrics.n_se);
    manifest.count("n_te", metrics.n_te);
    manifest.count("n_pe", metrics.n_pe);
    manifest.write(&ctx.out_dir)?;

    ctx.summary(
        metrics.summary(),
        serde_json::to_value(&metrics).expect("metrics serialize"),
    );
    Ok(0)
}

pub fn confusion(
    ctx: &Ctx,
    cases_path: &PathBuf,
    verdicts_path: &PathBuf,
    catalog_flag: &Option<PathBuf>,
    compare: &[String],
) -> Result<i32> {
    ctx.ensure_out_dir()?;
    let cases = eval::load_cases(cases_path)?;
    let verdicts: Vec<VerdictRecord> = read_jsonl(verdicts_path)?;
    let verdict_by_id: BTreeMap<&str, &Verdict> = verdicts
        .iter()
        .map(|v| (v.id.as_str(), &v.verdict))
        .collect();

    // label order: the catalog when given, otherwise tool order of the
    // first case plus any extra actual tools in appearance order
    let labels: Vec<String> = match catalog_flag {
        Some(_) => {
            let (_, catalog) = ctx.catalog(catalog_flag)?;
            catalog.tool_names()
        }
        None => {
            let mut labels: Vec<String> = cases
                .first()
                .map(|c| c.tools.iter().map(|t| t.name.clone()).collect())
                .unwrap_or_default();
            for case in &cases {
                if !labels.contains(&case.expected.tool_name) {
                    labels.push(case.expected.tool_name.clone());
                }
            }
            labels
        }
    };

    let records: Vec<(String, Verdict)> = cases
        .iter()
        .map(|case| {
            let verdict = verdict_by_id
                .get(case.id.as_str())
                .with_context(|| format!("no verdict for case `{}`", case.id))?;
            Ok((case.expected.tool_name.clone(), (*verdict).clone()))
        })
        .collect::<Result<_>>()?;

    let matrix = analysis::confusion(&labels, &records)?;
    let metrics = analysis::per_tool_metrics(&matrix);
    if !matrix.overflow_tools.is_empty() {
        ctx.progress(format!(
            "warning: predictions outside the label set routed to `other`: {}",
            matrix.overflow_tools.join(", ")
        ));
    }

    let mut comparisons: Vec<(String, Vec<analysis::ToolMetrics>)> =
        vec![("primary".to_string(), metrics.clone())];
    let mut compare_paths = Vec::new();
    for entry in compare {
        let (name, path) = entry
            .split_once('=')
            .with_context(|| format!("--compare takes name=verdicts.jsonl, got `{entry}`"))?;
        let other: Vec<VerdictRecord> = read_jsonl(path)?;
        let other_by_id: BTreeMap<&str, &Verdict> =
            other.iter().map(|v| (v.id.as_str(), &v.verdict)).collect();
        let other_records: Vec<(String, Verdict)> = cases
            .iter()
            .map(|case| {
                let verdict = other_by_id
                    .get(case.id.as_str())
                    .with_context(|| format!("no verdict for case `{}` in {path}", case.id))?;
                Ok((case.expected.tool_name.clone(), (*verdict).clone()))
            })
            .collect::<Result<_>>()?;
        let other_matrix = analysis::confusion(&labels, &other_records)?;
        comparisons.push((name.to_string(), analysis::per_tool_metrics(&other_matrix)));
        compare_paths.push(PathBuf::from(path));
    }

    let files = analysis::report(&matrix, &metrics, &comparisons, &ctx.out_dir)?;

    let mut manifest = StageManifest::new("confusion", ctx.seed);
    manifest.stamp_input(cases_path)?;
    manifest.stamp_input(verdicts_path)?;
    for path in &compare_paths {
        manifest.stamp_input(path)?;
    }
    manifest.stamp_output(Path::new(&files.matrix_csv))?;
    manifest.stamp_output(Path::new(&files.metrics_csv))?;
    manifest.stamp_output(Path::new(&files.bundle_json))?;
    manifest.count("n_cases", records.len());
    manifest.count("trace", matrix.trace());
    manifest.count("invalid", matrix.invalid_count);
    manifest.count("other", matrix.other_count);
    manifest.write(&ctx.out_dir)?;

    let micro = matrix
        .micro_accuracy()
        .map(|r| 100.0 * (*r.numer() as f64) / (*r.denom() as f64));
    ctx.summary(
        format!(
            "confusion matrix over {} cases: trace {}, micro tool accuracy {}",
            records.len(),
            matrix.trace(),
            micro
                .map(|m| format!("{m:.1}%"))
                .unwrap_or_else(|| "undefined".to_string())
        ),
        json!({
            "stage": "confusion",
            "n_cases": records.len(),
            "trace": matrix.trace(),
            "micro_accuracy_pct": micro,
            "matrix_csv": files.matrix_csv,
            "metrics_csv": files.metrics_csv,
        }),
    );
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
pub fn merge_lora(
    ctx: &Ctx,
    adapters: &[PathBuf],
    strategy_name: &str,
    weights_csv: &str,
    density: Option<f64>,
    target_rank: Option<usize>,
) -> Result<i32> {
    ctx.ensure_out_dir()?;
    let strategy: MergeStrategy = strategy_name
        .parse()
        .map_err(|e: String| anyhow::anyhow!(e))?;
    let weights: Vec<f64> = weights_csv
        .split(',')
        .map(|w| {
            w.trim()
                .parse::<f64>()
                .with_context(|| format!("bad weight `{w}`"))
        })
        .collect::<Result<_>>()?;
    let mut spec = MergeSpec::new(strategy, weights);
    if let Some(d) = density {
        spec = spec.with_density(d);
    }
    if let Some(t) = target_rank {
        spec = spec.with_target_rank(t);
    }
    if strategy == MergeStrategy::DareLinear {
        spec = spec.with_seed(ctx.seed);
    }
    let loaded: Vec<merge::LoraAdapter> = adapters
        .iter()
        .map(merge::load_adapter)
        .collect::<Result<_, _>>()?;
    ctx.progress(format!(
        "merging {} adapters with strategy {}",
        loaded.len(),
        strategy.name()
    ));
    let merged = merge::merge(&loaded, &spec)?;
    let out_stem = ctx.out("merged_adapter");
    merge::save_adapter(&merged, &out_stem)?;
    let header_path = out_stem.with_extension("json");
    let blob_path = out_stem.with_extension("bin");

    let mut manifest = StageManifest::new("merge-lora", ctx.seed);
    for path in adapters {
        let stem = if path.extension().is_some_and(|e| e == "json") {
            path.with_extension("")
        } else {
            path.clone()
        };
        manifest.stamp_input(&stem.with_extension("json"))?;
        manifest.stamp_input(&stem.with_extension("bin"))?;
    }
    manifest.stamp_output(&header_path)?;
    manifest.stamp_output(&blob_path)?;
    manifest.count("strategy", strategy.name());
    manifest.count("n_adapters", adapters.len());
    manifest.count("n_modules", merged.modules.len());
    let ranks: BTreeMap<&String, usize> =
        merged.modules.iter().map(|(k, m)| (k, m.rank)).collect();
    manifest.count("ranks", serde_json::to_value(&ranks).expect("serializes"));
    manifest.write(&ctx.out_dir)?;

    ctx.summary(
        format!(
            "merged {} adapters ({}) into {}",
            adapters.len(),
            strategy.name(),
            header_path.display()
        ),
        json!({
            "stage": "merge-lora",
            "strategy": strategy.name(),
            "n_modules": merged.modules.len(),
            "output": header_path,
        }),
    );
    Ok(0)
}

pub fn variant_catalog(
    ctx: &Ctx,
    catalog_flag: &Option<PathBuf>,
    variant_name: &str,
    overrides_path: &Option<PathBuf>,
) -> Result<i32> {
    ctx.ensure_out_dir()?;
    let (catalog_path, catalog) = ctx.catalog(catalog_flag)?;
    let variant: DescriptionVariant = variant_name
        .parse()
        .map_err(|e: String| anyhow::anyhow!(e))?;
    let overrides: BTreeMap<String, String> = match overrides_path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading overrides {}", path.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing overrides {}", path.display()))?
        }
        None => BTreeMap::new(),
    };
    let transformed = catalog::description_variant(&catalog, variant, &overrides)?;
    let out_path = ctx.out(&format!("catalog.{variant_name}.json"));
    catalog::save_catalog(&transformed, &out_path)?;

    let mut manifest = StageManifest::new("variant-catalog", ctx.seed);
    manifest.stamp_input(&catalog_path)?;
    if let Some(path) = overrides_path {
        manifest.stamp_input(path)?;
    }
    manifest.stamp_output(&out_path)?;
    manifest.count("variant", variant_name);
    manifest.count("n_tools", transformed.tools.len());
    manifest.write(&ctx.out_dir)?;

    ctx.summary(
        format!(
            "wrote {} catalog variant to {}",
            variant_name,
            out_path.display()
        ),
        json!({"stage": "variant-catalog", "variant": variant_name, "output": out_path}),
    );
    Ok(0)
}
