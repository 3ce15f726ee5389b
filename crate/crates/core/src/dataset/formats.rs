//! Interchange formats for assembled datasets.
//!
//! `sharegpt` and `alpaca` are JSON arrays; `openai` and `bfcl_v3` are
//! JSONL. Every record carries the sample's tool list shuffled by a stream
//! keyed on (seed, sample id), so identical inputs and seed produce
//! byte-identical files while no two samples share an order bias.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::catalog::tool_from_openai_schema;
use crate::parser::{parse_call, serialize_call, CallInstruction, CallSyntaxForm, Literal, ParseOutcome};

use super::{
    estimate_tokens, shuffle, validate_sample, DatasetError, TrainingSample, ValidationOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    Sharegpt,
    Alpaca,
    Openai,
    BfclV3,
}

impl DatasetFormat {
    pub fn name(&self) -> &'static str {
        match self {
            DatasetFormat::Sharegpt => "sharegpt",
            DatasetFormat::Alpaca => "alpaca",
            DatasetFormat::Openai => "openai",
            DatasetFormat::BfclV3 => "bfcl_v3",
        }
    }
}

impl std::str::FromStr for DatasetFormat {
    type Err = DatasetError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sharegpt" => Ok(DatasetFormat::Sharegpt),
            "alpaca" => Ok(DatasetFormat::Alpaca),
            "openai" => Ok(DatasetFormat::Openai),
            "bfcl_v3" => Ok(DatasetFormat::BfclV3),
            other => Err(DatasetError::UnknownFormat(other.to_string())),
        }
    }
}

/// What `assemble` reports back: counts per tool and the conservative
/// maximum token estimate over the written records.
#[derive(Debug, Clone, Serialize)]
pub struct AssembleManifest {
    pub format: DatasetFormat,
    pub n_records: usize,
    pub per_tool: BTreeMap<String, usize>,
    pub estimated_max_tokens: usize,
    pub rng_seed: u64,
}

fn tools_schema_array(tools: &[crate::catalog::ToolSpec]) -> Value {
    Value::Array(tools.iter().map(|t| t.to_openai_schema()).collect())
}

fn shuffled_tools(sample: &TrainingSample, rng_seed: u64) -> Vec<crate::catalog::ToolSpec> {
    let mut tools = sample.tools.clone();
    shuffle(&mut tools, rng_seed, &["assemble", &sample.meta.id]);
    tools
}

fn call_text(answer: &CallInstruction) -> Result<String, DatasetError> {
    Ok(serialize_call(answer, CallSyntaxForm::Pythonic)?)
}

fn sharegpt_record(sample: &TrainingSample, tools: &[crate::catalog::ToolSpec]) -> Result<Value, DatasetError> {
    let tools_json =
        serde_json::to_string(&tools_schema_array(tools)).expect("tools serialize");
    Ok(json!({
        "id": sample.meta.id,
        "conversations": [
            {"from": "system", "value": tools_json},
            {"from": "human", "value": sample.question},
            {"from": "gpt", "value": call_text(&sample.answer)?},
        ],
    }))
}

fn alpaca_record(sample: &TrainingSample, tools: &[crate::catalog::ToolSpec]) -> Result<Value, DatasetError> {
    let tools_json =
        serde_json::to_string(&tools_schema_array(tools)).expect("tools serialize");
    Ok(json!({
        "instruction": sample.question,
        "input": tools_json,
        "output": call_text(&sample.answer)?,
    }))
}

fn openai_record(sample: &TrainingSample, tools: &[crate::catalog::ToolSpec]) -> Value {
    let arguments_json = serde_json::to_string(&Value::Object(
        sample
            .answer
            .arguments
            .iter()
            .map(|(k, v)| (k.clone(), v.to_json()))
            .collect(),
    ))
    .expect("arguments serialize");
    json!({
        "id": sample.meta.id,
        "messages": [
            {"role": "user", "content": sample.question},
            {"role": "assistant", "tool_calls": [{
                "id": "call_0",
                "type": "function",
                "function": {"name": sample.answer.tool_name, "arguments": arguments_json},
            }]},
        ],
        "tools": tools
            .iter()
            .map(|t| json!({"type": "function", "function": t.to_openai_schema()}))
            .collect::<Vec<_>>(),
    })
}

fn bfcl_record(sample: &TrainingSample, tools: &[crate::catalog::ToolSpec]) -> Value {
    let mut params = serde_json::Map::new();
    for (name, value) in &sample.answer.arguments {
        params.insert(name.clone(), Value::Array(vec![value.to_json()]));
    }
    json!({
        "id": sample.meta.id,
        "question": [[{"role": "user", "content": sample.question}]],
        "function": tools_schema_array(tools),
        "ground_truth": [{ sample.answer.tool_name.clone(): Value::Object(params) }],
    })
}

/// Validates, shuffles each sample's tool list, and writes the dataset in
/// the requested format. All samples must pass validation first.
pub fn assemble(
    samples: &[TrainingSample],
    format: DatasetFormat,
    catalog: &crate::catalog::Catalog,
    rng_seed: u64,
    out: impl AsRef<Path>,
) -> Result<AssembleManifest, DatasetError> {
    let out = out.as_ref();
    let options = ValidationOptions::default();
    let mut per_tool: BTreeMap<String, usize> = BTreeMap::new();
    let mut max_tokens = 0usize;

    let mut records: Vec<Value> = Vec::with_capacity(samples.len());
    for sample in samples {
        let defects = validate_sample(sample, catalog, &options);
        if !defects.is_empty() {
            return Err(DatasetError::SampleInvalid {
                id: sample.meta.id.clone(),
                defects,
            });
        }
        if sample.tools.is_empty() {
            return Err(DatasetError::EmptyTools(sample.meta.id.clone()));
        }
        let tools = shuffled_tools(sample, rng_seed);
        let record = match format {
            DatasetFormat::Sharegpt => sharegpt_record(sample, &tools)?,
            DatasetFormat::Alpaca => alpaca_record(sample, &tools)?,
            DatasetFormat::Openai => openai_record(sample, &tools),
            DatasetFormat::BfclV3 => bfcl_record(sample, &tools),
        };
        let line = serde_json::to_string(&record).expect("record serializes");
        max_tokens = max_tokens.max(estimate_tokens(&line));
        *per_tool.entry(sample.answer.tool_name.clone()).or_insert(0) += 1;
        records.push(record);
    }

    let text = match format {
        DatasetFormat::Sharegpt | DatasetFormat::Alpaca => {
            let mut text = serde_json::to_string_pretty(&records).expect("array serializes");
            text.push('\n');
            text
        }
        DatasetFormat::Openai | DatasetFormat::BfclV3 => {
            let mut text = String::new();
            for record in &records {
                text.push_str(&serde_json::to_string(record).expect("record serializes"));
                text.push('\n');
            }
            text
        }
    };
    std::fs::write(out, text).map_err(|source| DatasetError::Io {
        path: out.display().to_string(),
        source,
    })?;

    Ok(AssembleManifest {
        format,
        n_records: records.len(),
        per_tool,
        estimated_max_tokens: max_tokens,
        rng_seed,
    })
}

/// Longest-record token estimate over the sharegpt rendering with the
/// sample's own tool order. Assembly only permutes the tool array, which
/// leaves record length unchanged, so this matches the assembled file.
pub fn estimate_max_tokens(samples: &[TrainingSample]) -> Result<usize, DatasetError> {
    let mut max = 0;
    for sample in samples {
        let record = sharegpt_record(sample, &sample.tools)?;
        let line = serde_json::to_string(&record).expect("record serializes");
        max = max.max(estimate_tokens(&line));
    }
    Ok(max)
}

/// A record read back from an assembled file, reduced to the fields the
/// round-trip invariant speaks about.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledRecord {
    pub question: String,
    pub answer: CallInstruction,
    pub tool_names: BTreeSet<String>,
    /// The tool order as written, for order-randomization checks.
    pub tool_order: Vec<String>,
}

/// Reads back a sharegpt, openai, or bfcl_v3 dataset file. (Alpaca folds
/// the tool list into free text and is write-only here.)
pub fn read_assembled(
    path: impl AsRef<Path>,
    format: DatasetFormat,
) -> Result<Vec<AssembledRecord>, DatasetError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let bad = |line: usize, message: String| DatasetError::BadRecord {
        path: path.display().to_string(),
        line,
        message,
    };

    let values: Vec<(usize, Value)> = match format {
        DatasetFormat::Sharegpt | DatasetFormat::Alpaca => {
            let array: Vec<Value> =
                serde_json::from_str(&text).map_err(|e| bad(0, e.to_string()))?;
            array.into_iter().enumerate().map(|(i, v)| (i + 1, v)).collect()
        }
        DatasetFormat::Openai | DatasetFormat::BfclV3 => {
            let mut out = Vec::new();
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                out.push((
                    i + 1,
                    serde_json::from_str(line).map_err(|e| bad(i + 1, e.to_string()))?,
                ));
            }
            out
        }
    };

    let mut records = Vec::with_capacity(values.len());
    for (line, value) in values {
        let record = match format {
            DatasetFormat::Sharegpt => read_sharegpt(&value).map_err(|m| bad(line, m))?,
            DatasetFormat::Openai => read_openai(&value).map_err(|m| bad(line, m))?,
            DatasetFormat::BfclV3 => read_bfcl(&value).map_err(|m| bad(line, m))?,
            DatasetFormat::Alpaca => {
                return Err(bad(
                    line,
                    "alpaca folds tools into text; use sharegpt/openai/bfcl_v3 for read-back"
                        .to_string(),
                ))
            }
        };
        records.push(record);
    }
    Ok(records)
}

fn tool_order_from_schemas(schemas: &Value) -> Result<Vec<String>, String> {
    schemas
        .as_array()
        .ok_or_else(|| "tool list is not an array".to_string())?
        .iter()
        .map(|s| {
            tool_from_openai_schema(s)
                .map(|t| t.name)
                .ok_or_else(|| "malformed tool schema".to_string())
        })
        .collect()
}

fn read_sharegpt(value: &Value) -> Result<AssembledRecord, String> {
    let turns = value
        .get("conversations")
        .and_then(Value::as_array)
        .ok_or("missing conversations")?;
    let find = |from: &str| {
        turns
            .iter()
            .find(|t| t.get("from").and_then(Value::as_str) == Some(from))
            .and_then(|t| t.get("value"))
            .and_then(Value::as_str)
    };
    let tools_text = find("system").ok_or("missing system turn")?;
    let question = find("human").ok_or("missing human turn")?.to_string();
    let answer_text = find("gpt").ok_or("missing gpt turn")?;
    let schemas: Value =
        serde_json::from_str(tools_text).map_err(|e| format!("system tools: {e}"))?;
    let tool_order = tool_order_from_schemas(&schemas)?;
    let answer = parse_answer(answer_text)?;
    Ok(AssembledRecord {
        question,
        answer,
        tool_names: tool_order.iter().cloned().collect(),
        tool_order,
    })
}

fn read_openai(value: &Value) -> Result<AssembledRecord, String> {
    let messages = value
        .get("messages")
        .and_then(Value::as_array)
        .ok_or("missing messages")?;
    let question = messages
        .iter()
        .find(|m| m.get("role").and_then(Value::as_str) == Some("user"))
        .and_then(|m| m.get("content"))
        .and_then(Value::as_str)
        .ok_or("missing user message")?
        .to_string();
    let tool_call = messages
        .iter()
        .find(|m| m.get("role").and_then(Value::as_str) == Some("assistant"))
        .and_then(|m| m.get("tool_calls"))
        .and_then(Value::as_array)
        .and_then(|calls| calls.first())
        .and_then(|c| c.get("function"))
        .ok_or("missing assistant tool call")?;
    let name = tool_call
        .get("name")
        .and_then(Value::as_str)
        .ok_or("tool call has no name")?;
    let arguments_text = tool_call
        .get("arguments")
        .and_then(Value::as_str)
        .ok_or("tool call has no arguments string")?;
    let arguments: Value =
        serde_json::from_str(arguments_text).map_err(|e| format!("arguments: {e}"))?;
    let mut answer = CallInstruction::new(name);
    for (k, v) in arguments.as_object().ok_or("arguments is not an object")? {
        answer.arguments.insert(k.clone(), Literal::from_json(v));
    }
    let tool_order = value
        .get("tools")
        .and_then(Value::as_array)
        .ok_or("missing tools")?
        .iter()
        .map(|t| {
            t.get("function")
                .and_then(tool_from_openai_schema)
                .map(|t| t.name)
                .ok_or_else(|| "malformed tool entry".to_string())
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AssembledRecord {
        question,
        answer,
        tool_names: tool_order.iter().cloned().collect(),
        tool_order,
    })
}

fn read_bfcl(value: &Value) -> Result<AssembledRecord, String> {
    let question = value
        .get("question")
        .and_then(Value::as_array)
        .and_then(|turns| turns.first())
        .and_then(Value::as_array)
        .and_then(|msgs| msgs.first())
        .and_then(|m| m.get("content"))
        .and_then(Value::as_str)
        .ok_or("missing question content")?
        .to_string();
    let tool_order = tool_order_from_schemas(value.get("function").ok_or("missing function list")?)?;
    let truth = value
        .get("ground_truth")
        .and_then(Value::as_array)
        .and_then(|g| g.first())
        .and_then(Value::as_object)
        .ok_or("missing ground_truth")?;
    let (name, params) = truth.iter().next().ok_or("empty ground_truth")?;
    let mut answer = CallInstruction::new(name.clone());
    for (k, v) in params.as_object().ok_or("ground_truth params not an object")? {
        let first = v
            .as_array()
            .and_then(|list| list.first())
            .ok_or_else(|| format!("no accepted values for `{k}`"))?;
        answer.arguments.insert(k.clone(), Literal::from_json(first));
    }
    Ok(AssembledRecord {
        question,
        answer,
        tool_names: tool_order.iter().cloned().collect(),
        tool_order,
    })
}

fn parse_answer(text: &str) -> Result<CallInstruction, String> {
    match parse_call(text) {
        ParseOutcome::Calls { calls, .. } => Ok(calls.into_iter().next().expect("nonempty")),
        ParseOutcome::Failure { position, reason } => {
            Err(format!("answer text failed to parse at {position}: {reason}"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Catalog;
    use crate::dataset::SampleRecord;
    use crate::synthesis::offline::demo_tool;
    use crate::synthesis::Provenance;

    fn catalog() -> Catalog {
        Catalog::new(
            "test",
            (0..14)
                .map(|i| demo_tool(&format!("Tool_{i:02}"), &format!("Query record type {i:02}")))
                .collect(),
        )
        .unwrap()
    }

    fn samples(n: usize, catalog: &Catalog) -> Vec<TrainingSample> {
        (0..n)
            .map(|i| {
                let tool = &catalog.tools[i % catalog.tools.len()];
                let record = SampleRecord {
                    id: format!("sample-{i:04}"),
                    seed_id: format!("seed-{i:04}"),
                    strategy: None,
                    provenance: Provenance::Ai,
                    question: format!("What is Person {i:02}'s 2023 {} record?", tool.name),
                    tool_name: tool.name.clone(),
                    arguments: [
                        (
                            "employee_name".to_string(),
                            Literal::Str(format!("Person {i:02}")),
                        ),
                        ("year".to_string(), Literal::Int(2023)),
                    ]
                    .into_iter()
                    .collect(),
                };
                super::super::build_samples(&[record], catalog).remove(0)
            })
            .collect()
    }

    #[test]
    fn assemble_is_deterministic() {
        let catalog = catalog();
        let batch = samples(40, &catalog);
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.json");
        let p2 = dir.path().join("b.json");
        assemble(&batch, DatasetFormat::Sharegpt, &catalog, 7, &p1).unwrap();
        assemble(&batch, DatasetFormat::Sharegpt, &catalog, 7, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        // a different seed produces different bytes (tool orders move)
        let p3 = dir.path().join("c.json");
        assemble(&batch, DatasetFormat::Sharegpt, &catalog, 8, &p3).unwrap();
        assert_ne!(std::fs::read(&p1).unwrap(), std::fs::read(&p3).unwrap());
    }

    #[test]
    fn tool_orders_are_randomized_per_sample() {
        let catalog = catalog();
        let batch = samples(2, &catalog);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pair.jsonl");
        assemble(&batch, DatasetFormat::BfclV3, &catalog, 7, &path).unwrap();
        let records = read_assembled(&path, DatasetFormat::BfclV3).unwrap();
        let identity: Vec<String> = catalog.tools.iter().map(|t| t.name.clone()).collect();
        // with 14! orderings, two samples both landing on the identity
        // permutation would mean the shuffle is broken
        assert!(
            records[0].tool_order != identity || records[1].tool_order != identity,
            "both samples kept catalog order"
        );
        assert_ne!(records[0].tool_order, records[1].tool_order);
    }

    #[test]
    fn round_trip_reconstructs_samples() {
        let catalog = catalog();
        let batch = samples(20, &catalog);
        let dir = tempfile::tempdir().unwrap();
        for format in [
            DatasetFormat::Sharegpt,
            DatasetFormat::Openai,
            DatasetFormat::BfclV3,
        ] {
            let path = dir.path().join(format!("data.{}", format.name()));
            assemble(&batch, format, &catalog, 13, &path).unwrap();
            let records = read_assembled(&path, format).unwrap();
            assert_eq!(records.len(), batch.len());
            let expected_tools: BTreeSet<String> =
                catalog.tools.iter().map(|t| t.name.clone()).collect();
            for (record, sample) in records.iter().zip(&batch) {
                assert_eq!(record.question, sample.question, "{format:?}");
                assert_eq!(record.answer, sample.answer, "{format:?}");
                // tool order may differ; the set may not
                assert_eq!(record.tool_names, expected_tools, "{format:?}");
            }
        }
    }

    #[test]
    fn alpaca_record_shape() {
        let catalog = catalog();
        let batch = samples(1, &catalog);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("alpaca.json");
        assemble(&batch, DatasetFormat::Alpaca, &catalog, 3, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let array: Vec<Value> = serde_json::from_str(&text).unwrap();
        assert_eq!(array.len(), 1);
        assert_eq!(array[0]["instruction"], batch[0].question);
        assert!(array[0]["input"].as_str().unwrap().contains("Tool_00"));
        assert!(array[0]["output"].as_str().unwrap().starts_with('['));
    }

    #[test]
    fn invalid_sample_blocks_assembly() {
        let catalog = catalog();
        let mut batch = samples(2, &catalog);
        batch[1].answer.arguments.insert("bogus".into(), Literal::Int(1));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("never.json");
        let err = assemble(&batch, DatasetFormat::Sharegpt, &catalog, 3, &path).unwrap_err();
        assert!(matches!(err, DatasetError::SampleInvalid { id, .. } if id == "sample-0001"));
    }

    #[test]
    fn manifest_counts_per_tool() {
        let catalog = catalog();
        let batch = samples(30, &catalog);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let manifest = assemble(&batch, DatasetFormat::Openai, &catalog, 3, &path).unwrap();
        assert_eq!(manifest.n_records, 30);
        let total: usize = manifest.per_tool.values().sum();
        assert_eq!(total, 30);
        assert!(manifest.estimated_max_tokens > 0);
    }
}
