//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with the measured values (visible with `--nocapture`).
//!
//! Run with `cargo test --test acceptance` (add `-- --nocapture` for the
//! per-criterion lines).

use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;

use fcpipe_core::analysis;
use fcpipe_core::catalog::load_catalog;
use fcpipe_core::dataset::{self, DatasetFormat, SampleRecord, SplitSpec};
use fcpipe_core::det;
use fcpipe_core::eval::{
    aggregate, verify_reported_rates, StageMetrics, Verdict, VerdictTag,
    REPORTED_RATE_TOLERANCE_PCT,
};
use fcpipe_core::gateway::{Gateway, GatewayConfig};
use fcpipe_core::merge::{
    full_delta, merge, Dense, LoraAdapter, Matrix, MergeSpec, MergeStrategy,
};
use fcpipe_core::parser::{parse_call, serialize_call, CallInstruction, CallSyntaxForm, Literal, ParseOutcome};
use fcpipe_core::synthesis::{
    apply_quota, offline, propagate_instructions, EntityPools, Provenance, SynthesisConfig,
    Synthesizer, TemplateSet,
};

fn fixtures_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn pct(rate: Option<num_rational::Ratio<u64>>) -> f64 {
    StageMetrics::pct_1dp(rate).expect("rate defined")
}

fn verdict(tag: VerdictTag, predicted: Option<&str>) -> Verdict {
    Verdict {
        tag,
        detail: String::new(),
        predicted_tool: predicted.map(str::to_string),
    }
}

fn verdict_multiset(n_se: usize, n_te: usize, n_pe: usize, n_pass: usize) -> Vec<Verdict> {
    let mut verdicts = Vec::new();
    verdicts.extend(std::iter::repeat_n(
        verdict(VerdictTag::StructureError, None),
        n_se,
    ));
    verdicts.extend(std::iter::repeat_n(
        verdict(VerdictTag::ToolError, Some("other_tool")),
        n_te,
    ));
    verdicts.extend(std::iter::repeat_n(
        verdict(VerdictTag::ParamError, Some("tool")),
        n_pe,
    ));
    verdicts.extend(std::iter::repeat_n(
        verdict(VerdictTag::Pass, Some("tool")),
        n_pass,
    ));
    verdicts
}

/// Criterion 1: the 207-case fixture with SE=15, TE=33, PE=112, Pass=47
/// reproduces the first reference row (92.8 / 82.8 / 29.6, overall 22.7)
/// within ±0.1 after one-decimal rounding, in under a second.
#[test]
fn acceptance_01_stage_rates_first_reference_row() {
    let start = Instant::now();
    let verdicts = verdict_multiset(15, 33, 112, 47);
    assert_eq!(verdicts.len(), 207);
    let metrics = aggregate(&verdicts).unwrap();
    let structural = pct(metrics.structural_completeness_rate);
    let tool = pct(metrics.tool_selection_acc);
    let param = pct(metrics.param_filling_acc);
    let overall = pct(metrics.overall_acc);
    assert!((structural - 92.8).abs() <= 0.1, "structural {structural}");
    assert!((tool - 82.8).abs() <= 0.1, "tool {tool}");
    assert!((param - 29.6).abs() <= 0.1, "param {param}");
    assert!((overall - 22.7).abs() <= 0.1, "overall {overall}");
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE 1: PASS — rates {structural:.1}/{tool:.1}/{param:.1}, overall {overall:.1} in {elapsed:?}"
    );
}

/// Criterion 2: the second reference row reproduces (94.2 / 52.3 / 66.7,
/// overall 32.9 ±0.1), and the inconsistent third row (its stage rates
/// imply 84.0, not the reported 79.2) is flagged by the identity check.
#[test]
fn acceptance_02_second_row_and_inconsistency_flag() {
    let metrics = aggregate(&verdict_multiset(12, 93, 34, 68)).unwrap();
    let structural = pct(metrics.structural_completeness_rate);
    let tool = pct(metrics.tool_selection_acc);
    let param = pct(metrics.param_filling_acc);
    let overall = pct(metrics.overall_acc);
    assert!((structural - 94.2).abs() <= 0.1, "structural {structural}");
    assert!((tool - 52.3).abs() <= 0.1, "tool {tool}");
    assert!((param - 66.7).abs() <= 0.1, "param {param}");
    assert!((overall - 32.9).abs() <= 0.1, "overall {overall}");

    let flagged = verify_reported_rates(99.0, 95.1, 89.2, 79.2, REPORTED_RATE_TOLERANCE_PCT);
    assert!(!flagged.consistent, "inconsistent row must be flagged");
    assert!(
        (flagged.implied_overall_pct - 84.0).abs() < 0.05,
        "implied {}",
        flagged.implied_overall_pct
    );
    let ok = verify_reported_rates(94.2, 52.3, 66.7, 32.9, REPORTED_RATE_TOLERANCE_PCT);
    assert!(ok.consistent, "consistent row must not be flagged");
    println!(
        "ACCEPTANCE 2: PASS — rates {structural:.1}/{tool:.1}/{param:.1}/{overall:.1}; inconsistent row implied {:.1} and was flagged",
        flagged.implied_overall_pct
    );
}

/// Criterion 3: for 10,000 random verdict multisets with no 0/0 stage, the
/// three stage rates multiply to the overall accuracy exactly in rational
/// arithmetic.
#[test]
fn acceptance_03_telescoping_identity_property() {
    let mut rng = det::stream(3, &["telescoping"]);
    let mut checked = 0;
    while checked < 10_000 {
        let n_se = rng.gen_range(0..50usize);
        let n_te = rng.gen_range(0..50usize);
        let n_pe = rng.gen_range(0..50usize);
        let n_pass = rng.gen_range(0..50usize);
        // no 0/0 stages: every cascade stage must have a nonzero denominator
        if n_te + n_pe + n_pass == 0 || n_pe + n_pass == 0 {
            continue;
        }
        let metrics = aggregate(&verdict_multiset(n_se, n_te, n_pe, n_pass)).unwrap();
        assert_eq!(
            metrics.identity_holds(),
            Some(true),
            "identity failed for ({n_se},{n_te},{n_pe},{n_pass})"
        );
        checked += 1;
    }
    println!("ACCEPTANCE 3: PASS — telescoping identity exact on {checked} random multisets");
}

/// Criterion 4: the demo-catalog synthesis run yields exactly 140 seeds,
/// 1,400 augmented questions, and 1,260 retained after the 90-per-tool
/// quota; two runs are byte-identical; all in under 30 seconds.
#[test]
fn acceptance_04_synthesis_volume_and_determinism() {
    let start = Instant::now();
    let catalog = load_catalog(fixtures_dir().join("hr_catalog.json")).unwrap();
    assert_eq!(catalog.tools.len(), 14, "demo catalog must have 14 tools");
    let pools = EntityPools::load(fixtures_dir().join("entity_pools.json")).unwrap();
    let templates = TemplateSet::builtin();
    let config = SynthesisConfig::default(); // per_tool 10, 10 augmentations

    let run = || {
        let fixture = offline::script_fixture(&catalog, &pools, &templates, &config).unwrap();
        let gateway = Gateway::mock(GatewayConfig::default(), fixture);
        let synth = Synthesizer::new(&catalog, &pools, &templates, &gateway, config.clone());
        let seeds = synth.generate_seeds().unwrap();
        let augmented = synth.augment_all(&seeds).unwrap();
        let records = synth.extract_all(&seeds, &augmented).unwrap();
        let (retained, _) = apply_quota(augmented.clone(), Some(90));
        let seeds_jsonl = seeds
            .iter()
            .map(|s| serde_json::to_string(s).unwrap())
            .collect::<Vec<_>>()
            .join("\n");
        let augmented_jsonl = augmented
            .iter()
            .map(|q| serde_json::to_string(q).unwrap())
            .collect::<Vec<_>>()
            .join("\n");
        let retained_jsonl = retained
            .iter()
            .map(|q| serde_json::to_string(q).unwrap())
            .collect::<Vec<_>>()
            .join("\n");
        (
            seeds.len(),
            augmented.len(),
            retained.len(),
            records.len(),
            seeds_jsonl,
            augmented_jsonl,
            retained_jsonl,
        )
    };

    let first = run();
    let second = run();
    assert_eq!(first.0, 140, "seeds");
    assert_eq!(first.1, 1400, "augmented");
    assert_eq!(first.2, 1260, "retained");
    assert_eq!(first.3, 140 + 1400, "instruction records");
    assert_eq!(first.4, second.4, "seed bytes differ between runs");
    assert_eq!(first.5, second.5, "augmented bytes differ between runs");
    assert_eq!(first.6, second.6, "retained bytes differ between runs");
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE 4: PASS — 140 seeds, 1400 augmented, 1260 retained, byte-identical reruns in {elapsed:?}"
    );
}

fn random_literal(rng: &mut impl Rng, depth: usize) -> Literal {
    let choice = if depth == 0 {
        rng.gen_range(0..5)
    } else {
        rng.gen_range(0..7)
    };
    match choice {
        0 => Literal::Null,
        1 => Literal::Bool(rng.gen()),
        2 => Literal::Int(rng.gen_range(-1_000_000i64..1_000_000)),
        3 => {
            // shortest-round-trip serialization recovers any finite real
            let value: f64 = rng.gen_range(-1e6..1e6);
            Literal::Real(value)
        }
        4 => {
            let len = rng.gen_range(0..12);
            let text: String = (0..len)
                .map(|_| {
                    let c = rng.gen_range(0..6);
                    match c {
                        0 => '中',
                        1 => '"',
                        2 => '\\',
                        3 => '\n',
                        4 => ' ',
                        _ => (b'a' + rng.gen_range(0..26u8)) as char,
                    }
                })
                .collect();
            Literal::Str(text)
        }
        5 => {
            let len = rng.gen_range(0..4);
            Literal::List((0..len).map(|_| random_literal(rng, depth - 1)).collect())
        }
        _ => {
            let len = rng.gen_range(0..4);
            let mut map = BTreeMap::new();
            for i in 0..len {
                map.insert(format!("k{i}"), random_literal(rng, depth - 1));
            }
            Literal::Map(map)
        }
    }
}

fn random_call(rng: &mut impl Rng) -> CallInstruction {
    let mut call = CallInstruction::new(format!("tool_{}", rng.gen_range(0..1000)));
    for i in 0..rng.gen_range(0..6) {
        call.arguments
            .insert(format!("arg_{i}"), random_literal(rng, 3));
    }
    call
}

/// Criterion 5: 1,000 random instructions (literals nested to depth 3)
/// survive serialize→parse in every syntax form with structural equality,
/// and 10,000 random byte strings neither crash the parser nor parse.
#[test]
fn acceptance_05_parser_round_trip_and_fuzz() {
    let mut rng = det::stream(5, &["roundtrip"]);
    for i in 0..1000 {
        let call = random_call(&mut rng);
        for form in [
            CallSyntaxForm::Pythonic,
            CallSyntaxForm::JsonObject,
            CallSyntaxForm::JsonArray,
        ] {
            let text = serialize_call(&call, form).unwrap();
            match parse_call(&text) {
                ParseOutcome::Calls { calls, .. } => {
                    assert_eq!(calls.len(), 1, "case {i} {form:?}");
                    assert_eq!(calls[0], call, "case {i} {form:?}: {text}");
                }
                ParseOutcome::Failure { position, reason } => {
                    panic!("case {i} {form:?} failed at {position}: {reason}\n{text}")
                }
            }
        }
    }

    let mut fuzz_rng = det::stream(5, &["fuzz"]);
    let mut failures = 0usize;
    for _ in 0..10_000 {
        let len = fuzz_rng.gen_range(0..200usize);
        let bytes: Vec<u8> = (0..len).map(|_| fuzz_rng.gen()).collect();
        let text = String::from_utf8_lossy(&bytes);
        match parse_call(&text) {
            ParseOutcome::Failure { position, .. } => {
                assert!(position <= text.len());
                failures += 1;
            }
            ParseOutcome::Calls { .. } => {
                panic!("random bytes unexpectedly parsed: {text:?}")
            }
        }
    }
    assert_eq!(failures, 10_000);
    println!(
        "ACCEPTANCE 5: PASS — 1000 instructions round-tripped in 3 forms; 10000 fuzz inputs all failed cleanly"
    );
}

/// Criterion 6: with no structure errors, the confusion-matrix trace over
/// its total equals the evaluator's tool-selection accuracy exactly; the
/// 207-case fixture with trace 202 scores 97.6 ±0.05.
#[test]
fn acceptance_06_confusion_consistency() {
    let labels: Vec<String> = (0..14).map(|i| format!("tool_{i:02}")).collect();
    let mut rng = det::stream(6, &["confusion"]);
    for trial in 0..200 {
        let mut records = Vec::new();
        for _ in 0..rng.gen_range(5..80) {
            let actual = labels[rng.gen_range(0..14)].clone();
            let verdict = match rng.gen_range(0..3) {
                0 => verdict(VerdictTag::Pass, Some(&actual)),
                1 => verdict(VerdictTag::ParamError, Some(&actual)),
                _ => {
                    let wrong = labels[rng.gen_range(0..14)].clone();
                    if wrong == actual {
                        verdict(VerdictTag::Pass, Some(&actual))
                    } else {
                        verdict(VerdictTag::ToolError, Some(&wrong))
                    }
                }
            };
            records.push((actual, verdict));
        }
        let matrix = analysis::confusion(&labels, &records).unwrap();
        let verdicts: Vec<Verdict> = records.iter().map(|(_, v)| v.clone()).collect();
        let metrics = aggregate(&verdicts).unwrap();
        assert_eq!(
            matrix.micro_accuracy(),
            metrics.tool_selection_acc,
            "trial {trial}: micro accuracy diverged from tool accuracy"
        );
    }

    // 207 cases, 5 off-diagonal tool errors, no structure errors
    let mut records = Vec::new();
    for i in 0..207 {
        let actual = labels[i % 14].clone();
        if i < 5 {
            let wrong = labels[(i % 14 + 1) % 14].clone();
            records.push((actual, verdict(VerdictTag::ToolError, Some(&wrong))));
        } else {
            records.push((actual.clone(), verdict(VerdictTag::Pass, Some(&actual))));
        }
    }
    let matrix = analysis::confusion(&labels, &records).unwrap();
    assert_eq!(matrix.trace(), 202);
    assert_eq!(matrix.grand_total(), 207);
    let micro = matrix.micro_accuracy().unwrap();
    let micro_pct = 100.0 * (*micro.numer() as f64) / (*micro.denom() as f64);
    assert!((micro_pct - 97.6).abs() <= 0.05, "micro {micro_pct}");
    println!(
        "ACCEPTANCE 6: PASS — micro accuracy equals tool accuracy on 200 random sets; fixture scores {micro_pct:.2}"
    );
}

/// Criterion 7: the 2×2 hand oracle gives precision 0.600, recall 0.750,
/// F1 0.667 ±0.001 for the first tool; a tool with tp=0 over 4 actual
/// cases reports F1 = 0 rather than undefined.
#[test]
fn acceptance_07_precision_recall_f1_spot_check() {
    let labels = vec!["t0".to_string(), "t1".to_string()];
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
    let matrix = analysis::confusion(&labels, &records).unwrap();
    let metrics = analysis::per_tool_metrics(&matrix);
    let t0 = &metrics[0];
    assert!((t0.precision.unwrap() - 0.600).abs() <= 0.001);
    assert!((t0.recall.unwrap() - 0.750).abs() <= 0.001);
    assert!((t0.f1.unwrap() - 0.667).abs() <= 0.001);

    let mut failing = Vec::new();
    for _ in 0..4 {
        failing.push(("t0".to_string(), verdict(VerdictTag::ToolError, Some("t1"))));
    }
    failing.push(("t1".to_string(), verdict(VerdictTag::Pass, Some("t1"))));
    let matrix = analysis::confusion(&labels, &failing).unwrap();
    let t0 = &analysis::per_tool_metrics(&matrix)[0];
    assert_eq!(t0.tp, 0);
    assert_eq!(t0.fn_, 4);
    assert_eq!(t0.f1, Some(0.0));
    println!("ACCEPTANCE 7: PASS — P 0.600, R 0.750, F1 0.667; zero-convention F1 = 0");
}

fn random_adapter(seed: u64, d: usize, k: usize, r: usize, alpha: f32, modules: &[&str]) -> LoraAdapter {
    let mut adapter = LoraAdapter::new(format!("acc-{seed}"));
    for module in modules {
        let mut rng = det::stream(seed, &["acceptance-adapter", module]);
        let a = Matrix::from_fn(r, k, |_, _| rng.gen_range(-0.5..0.5));
        let b = Matrix::from_fn(d, r, |_, _| rng.gen_range(-0.5..0.5));
        adapter.insert_module(*module, a, b, alpha).unwrap();
    }
    adapter
}

fn sum_deltas(parts: &[&LoraAdapter], weights: &[f64], module: &str) -> Dense {
    let mut sum: Option<Dense> = None;
    for (adapter, &w) in parts.iter().zip(weights) {
        let delta = &full_delta(adapter).unwrap()[module];
        match &mut sum {
            Some(acc) => acc.add_scaled(delta, w).unwrap(),
            None => {
                let mut first = delta.clone();
                first.scale(w);
                sum = Some(first);
            }
        }
    }
    sum.expect("nonempty")
}

/// Criterion 8: the merge-algebra property suite (cat exactness, the
/// weight-2 doubling, linear single-adapter identity, the dare seed-average
/// expectation, and svd reconstruction) in under 60 seconds.
#[test]
fn acceptance_08_adapter_merge_algebra() {
    let start = Instant::now();
    let modules = ["q_proj"];

    // cat exactness ≤ 1e-6 on random shapes up to 64 (power-of-two scales,
    // as trained adapters use)
    let mut worst_cat = 0.0f64;
    for (seed, d, k, r1, r2) in [
        (800u64, 64, 64, 8, 4),
        (801, 48, 64, 8, 8),
        (802, 64, 32, 4, 2),
        (803, 33, 61, 8, 1),
    ] {
        let a = random_adapter(seed, d, k, r1, (r1 * 2) as f32, &modules);
        let b = random_adapter(seed + 50, d, k, r2, (r2 * 2) as f32, &modules);
        let spec = MergeSpec::new(MergeStrategy::Cat, vec![1.0, 0.5]);
        let merged = merge(&[a.clone(), b.clone()], &spec).unwrap();
        let expected = sum_deltas(&[&a, &b], &[1.0, 0.5], "q_proj");
        let diff = full_delta(&merged).unwrap()["q_proj"].max_abs_diff(&expected);
        worst_cat = worst_cat.max(diff);
    }
    assert!(worst_cat <= 1e-6, "cat exactness {worst_cat}");

    // cat with weight 2 doubles the delta exactly
    let single = random_adapter(810, 64, 48, 8, 16.0, &modules);
    let merged = merge(
        std::slice::from_ref(&single),
        &MergeSpec::new(MergeStrategy::Cat, vec![2.0]),
    )
    .unwrap();
    let mut doubled = full_delta(&single).unwrap()["q_proj"].clone();
    doubled.scale(2.0);
    let cat2_diff = full_delta(&merged).unwrap()["q_proj"].max_abs_diff(&doubled);
    assert_eq!(cat2_diff, 0.0, "cat weight-2 doubling must be exact");

    // linear with one adapter and weight 1 reproduces its delta
    let merged = merge(
        std::slice::from_ref(&single),
        &MergeSpec::new(MergeStrategy::Linear, vec![1.0]),
    )
    .unwrap();
    let linear_diff =
        full_delta(&merged).unwrap()["q_proj"].max_abs_diff(&full_delta(&single).unwrap()["q_proj"]);
    assert!(linear_diff <= 1e-6, "linear identity {linear_diff}");

    // dare_linear: the delta averaged over 1,000 mask seeds approaches the
    // exact weighted sum; mean relative error over entries |Δ| > 0.1
    let a = random_adapter(820, 96, 96, 1, 1.0, &modules);
    let b = random_adapter(821, 96, 96, 1, 1.0, &modules);
    let expected = sum_deltas(&[&a, &b], &[1.0, 1.0], "q_proj");
    let mut mean = Dense::zeros(96, 96);
    for seed in 0..1000u64 {
        let spec = MergeSpec::new(MergeStrategy::DareLinear, vec![1.0, 1.0])
            .with_density(0.8)
            .with_seed(seed);
        let merged = merge(&[a.clone(), b.clone()], &spec).unwrap();
        mean.add_scaled(&full_delta(&merged).unwrap()["q_proj"], 1.0 / 1000.0)
            .unwrap();
    }
    let mut rel_sum = 0.0;
    let mut rel_count = 0usize;
    for (m, e) in mean.data().iter().zip(expected.data()) {
        if e.abs() > 0.1 {
            rel_sum += ((m - e) / e).abs();
            rel_count += 1;
        }
    }
    assert!(rel_count > 100, "too few large entries: {rel_count}");
    let dare_rel = rel_sum / rel_count as f64;
    assert!(
        dare_rel < 0.02,
        "dare seed-average deviates {dare_rel:.4} (mean relative) from the linear combination"
    );

    // svd reconstruction when the target rank covers rank(D)
    let a = random_adapter(830, 64, 48, 4, 8.0, &modules);
    let b = random_adapter(831, 64, 48, 4, 8.0, &modules);
    let spec = MergeSpec::new(MergeStrategy::Svd, vec![1.0, 1.0]).with_target_rank(8);
    let merged = merge(&[a.clone(), b.clone()], &spec).unwrap();
    let expected = sum_deltas(&[&a, &b], &[1.0, 1.0], "q_proj");
    let svd_diff = full_delta(&merged).unwrap()["q_proj"].max_abs_diff(&expected);
    assert!(svd_diff < 1e-5, "svd reconstruction {svd_diff}");

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE 8: PASS — cat {worst_cat:.2e}, weight-2 exact, linear {linear_diff:.2e}, dare mean-rel {dare_rel:.4}, svd {svd_diff:.2e} in {elapsed:?}"
    );
}

/// Criterion 9: default trainer config matches the reference values
/// field-for-field; cutoff 3,000 against estimated max 3,500 warns, 4,096
/// does not.
#[test]
fn acceptance_09_train_config_guard() {
    let (config, warnings) = dataset::emit_train_config(&BTreeMap::new(), 3200).unwrap();
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
    assert!(warnings.is_empty());

    let mut overrides = BTreeMap::new();
    overrides.insert("cutoff_len".to_string(), "3000".to_string());
    let (_, warnings) = dataset::emit_train_config(&overrides, 3500).unwrap();
    assert_eq!(warnings.len(), 1, "cutoff 3000 under max 3500 must warn");
    assert!(matches!(
        warnings[0],
        dataset::ConfigWarning::CutoffTruncation {
            cutoff_len: 3000,
            estimated_max_len: 3500
        }
    ));

    let mut overrides = BTreeMap::new();
    overrides.insert("cutoff_len".to_string(), "4096".to_string());
    let (_, warnings) = dataset::emit_train_config(&overrides, 3500).unwrap();
    assert!(warnings.is_empty(), "cutoff 4096 over max 3500 must not warn");
    println!("ACCEPTANCE 9: PASS — reference defaults exact; truncation guard fires only below the estimate");
}

fn synthetic_records(n: usize, catalog: &fcpipe_core::Catalog) -> Vec<SampleRecord> {
    (0..n)
        .map(|i| {
            let tool = &catalog.tools[i % catalog.tools.len()];
            let name = format!("Person {:03}", i % 500);
            SampleRecord {
                id: format!("sample-{i:05}"),
                seed_id: format!("seed-{:04}", i / 10),
                strategy: None,
                provenance: Provenance::Ai,
                question: format!("What is {name}'s 2023 {} record?", tool.name),
                tool_name: tool.name.clone(),
                arguments: [
                    ("employee_name".to_string(), Literal::Str(name)),
                    ("year".to_string(), Literal::Int(2023)),
                ]
                .into_iter()
                .collect(),
            }
        })
        .collect()
}

/// Criterion 10: assembling 2,295 validated samples twice with the same
/// seed is byte-identical, and the stratified 90/10 split of 14×90 samples
/// puts exactly 81/9 of every tool in train/eval.
#[test]
fn acceptance_10_dataset_determinism_and_split() {
    let catalog = load_catalog(fixtures_dir().join("hr_catalog.json")).unwrap();
    let records = synthetic_records(2295, &catalog);
    let samples = dataset::build_samples(&records, &catalog);
    assert_eq!(samples.len(), 2295);

    let dir = tempfile::tempdir().unwrap();
    let p1 = dir.path().join("one.json");
    let p2 = dir.path().join("two.json");
    dataset::assemble(&samples, DatasetFormat::Sharegpt, &catalog, 42, &p1).unwrap();
    dataset::assemble(&samples, DatasetFormat::Sharegpt, &catalog, 42, &p2).unwrap();
    let bytes1 = std::fs::read(&p1).unwrap();
    assert_eq!(bytes1, std::fs::read(&p2).unwrap(), "assembly not deterministic");

    // 14 × 90 samples, stratified 90/10
    let records = synthetic_records(1260, &catalog);
    let samples = dataset::build_samples(&records, &catalog);
    let spec = SplitSpec {
        train_fraction: 0.9,
        stratify_by_tool: true,
        rng_seed: 42,
    };
    let outcome = dataset::split(&samples, &spec).unwrap();
    assert_eq!(outcome.train.len(), 81 * 14);
    assert_eq!(outcome.eval.len(), 9 * 14);
    let mut train_per_tool: BTreeMap<&str, usize> = BTreeMap::new();
    let mut eval_per_tool: BTreeMap<&str, usize> = BTreeMap::new();
    for s in &outcome.train {
        *train_per_tool.entry(s.answer.tool_name.as_str()).or_insert(0) += 1;
    }
    for s in &outcome.eval {
        *eval_per_tool.entry(s.answer.tool_name.as_str()).or_insert(0) += 1;
    }
    assert!(train_per_tool.values().all(|&n| n == 81));
    assert!(eval_per_tool.values().all(|&n| n == 9));
    println!(
        "ACCEPTANCE 10: PASS — 2295-sample assembly byte-identical ({} bytes); split 81/9 per tool",
        bytes1.len()
    );
}

/// Cross-check used by criterion 4's pipeline: propagation pairs every
/// augmented question with its seed instruction and flags only replacement
/// for re-extraction.
#[test]
fn acceptance_04b_propagation_share_rule() {
    let catalog = load_catalog(fixtures_dir().join("hr_catalog.json")).unwrap();
    let pools = EntityPools::load(fixtures_dir().join("entity_pools.json")).unwrap();
    let templates = TemplateSet::builtin();
    let config = SynthesisConfig {
        per_tool: 2,
        augment_count: 10,
        ..SynthesisConfig::default()
    };
    let fixture = offline::script_fixture(&catalog, &pools, &templates, &config).unwrap();
    let gateway = Gateway::mock(GatewayConfig::default(), fixture);
    let synth = Synthesizer::new(&catalog, &pools, &templates, &gateway, config);
    let seeds = synth.generate_seeds().unwrap();
    let augmented = synth.augment_all(&seeds).unwrap();

    let mut instructions = BTreeMap::new();
    for seed in &seeds {
        let tool = catalog.tool(&seed.tool_name).unwrap();
        instructions.insert(seed.id.clone(), synth.extract_call(&seed.text, tool).unwrap().call);
    }
    let pairs = propagate_instructions(&instructions, &augmented).unwrap();
    assert_eq!(pairs.len(), augmented.len());
    for pair in &pairs {
        let is_replacement =
            pair.question.strategy == fcpipe_core::synthesis::Strategy::Replacement;
        assert_eq!(pair.re_extract, is_replacement);
        if !is_replacement {
            assert_eq!(
                &pair.instruction, &instructions[&pair.question.seed_id],
                "non-replacement pairs share the seed instruction verbatim"
            );
        }
    }
    println!("ACCEPTANCE 4b: PASS — instruction sharing and re-extract flags verified");
}
