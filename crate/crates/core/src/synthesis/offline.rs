//! Scripted corpora for offline pipeline runs.
//!
//! Builds a mock-backend fixture covering every prompt the synthesis stages
//! will issue for a catalog: seed generation, all four augmentations, and
//! extraction (including re-extraction of replacement variants). Replies are
//! synthesized deterministically from the entity pools, so a full pipeline
//! run needs no network and is byte-identical across machines.

use crate::catalog::{Catalog, ParamType, ToolSpec};
use crate::gateway::MockFixture;

use super::{prompts, Strategy, SynthesisConfig, SynthesisError, TemplateSet};

const QUESTION_STYLES: [&str; 10] = [
    "What is",
    "Please show",
    "Could you check",
    "I need to know",
    "Give me",
    "Kindly look up",
    "Would you pull",
    "Help me find",
    "Show me",
    "Can you fetch",
];

const REWRITE_STYLES: [&str; 10] = [
    "Regarding {name}, what does the {year} {topic} record say?",
    "For {name}, please find the {year} {topic} record.",
    "The {year} {topic} record of {name}, what is it?",
    "Tell me about the {topic} record of {name} for {year}.",
    "In {year}, what was the {topic} record for {name}?",
    "Check the {topic} record that {name} has for {year}.",
    "I'd like the {year} {topic} details for {name}.",
    "How does the {year} {topic} record look for {name}?",
    "{name} — {year} — {topic}: what is recorded?",
    "What does {year} hold in the {topic} record of {name}?",
];

fn topic_of(tool: &ToolSpec) -> String {
    tool.name.replace('_', " ").to_lowercase()
}

fn pick(pool: &[String], index: usize) -> &str {
    &pool[index % pool.len()]
}

/// Name index for seed `i` of tool `tool_idx`. Distinct per seed within a
/// tool as long as the name pool holds at least `per_tool` entries; the
/// bundled demo pool holds 50.
fn seed_name_index(tool_idx: usize, i: usize) -> usize {
    tool_idx * 13 + i
}

/// Name index for replacement variant `j` of seed `i`. The `i*5 + j`
/// stride keeps texts distinct across a tool's seeds for up to 5
/// replacements per seed.
fn replacement_name_index(tool_idx: usize, i: usize, j: usize) -> usize {
    tool_idx * 13 + i * 5 + j + 1
}

fn seed_text(tool_idx: usize, i: usize, tool: &ToolSpec, names: &[String], years: &[String]) -> String {
    let name = pick(names, seed_name_index(tool_idx, i));
    let year = pick(years, tool_idx + i);
    let style = QUESTION_STYLES[i % QUESTION_STYLES.len()];
    format!("{style} {name}'s {year} {topic} record?", topic = topic_of(tool))
}

fn extraction_reply(name: &str, year: &str) -> String {
    format!("{{\"employee_name\": \"{name}\", \"year\": {year}}}")
}

/// Entities referenced by a scripted question, so extraction replies stay
/// grounded in the question text.
struct Grounding<'a> {
    name: &'a str,
    year: &'a str,
}

/// Builds the complete scripted fixture for `catalog` under `config`.
///
/// Every tool must expose a required string `employee_name` and an optional
/// integer `year`; the bundled demo catalog does.
pub fn script_fixture(
    catalog: &Catalog,
    pools: &super::EntityPools,
    templates: &TemplateSet,
    config: &SynthesisConfig,
) -> Result<MockFixture, SynthesisError> {
    for pool in ["names", "years"] {
        let list = if pool == "names" { &pools.names } else { &pools.years };
        if list.is_empty() {
            return Err(SynthesisError::EmptyPool(pool.to_string()));
        }
    }
    let mut fixture = MockFixture::new();
    let plan = config.mix.counts(config.augment_count)?;

    for (tool_idx, tool) in catalog.tools.iter().enumerate() {
        // seed generation: numbered lines, exercising the enumeration
        // stripper on the way back in
        let seed_texts: Vec<String> = (0..config.per_tool)
            .map(|i| seed_text(tool_idx, i, tool, &pools.names, &pools.years))
            .collect();
        let reply = seed_texts
            .iter()
            .enumerate()
            .map(|(i, q)| format!("{}. {q}", i + 1))
            .collect::<Vec<_>>()
            .join("\n");
        let prompt = prompts::seed_prompt(templates, tool, pools, config.per_tool)?;
        fixture.script(&prompt, reply);

        for (i, seed) in seed_texts.iter().enumerate() {
            let grounding = Grounding {
                name: pick(&pools.names, seed_name_index(tool_idx, i)),
                year: pick(&pools.years, tool_idx + i),
            };
            script_seed_extraction(&mut fixture, templates, tool, seed, &grounding)?;
            script_augmentations(
                &mut fixture,
                templates,
                tool,
                tool_idx,
                i,
                seed,
                &grounding,
                pools,
                &plan,
            )?;
        }
    }
    Ok(fixture)
}

fn script_seed_extraction(
    fixture: &mut MockFixture,
    templates: &TemplateSet,
    tool: &ToolSpec,
    question: &str,
    grounding: &Grounding<'_>,
) -> Result<(), SynthesisError> {
    let prompt = prompts::extraction_prompt(templates, tool, question)?;
    fixture.script(&prompt, extraction_reply(grounding.name, grounding.year));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn script_augmentations(
    fixture: &mut MockFixture,
    templates: &TemplateSet,
    tool: &ToolSpec,
    tool_idx: usize,
    seed_idx: usize,
    seed_text: &str,
    grounding: &Grounding<'_>,
    pools: &super::EntityPools,
    plan: &[(Strategy, usize)],
) -> Result<(), SynthesisError> {
    let topic = topic_of(tool);
    let mut first_non_replacement: Option<String> = None;

    for (strategy, count) in plan {
        if *count == 0 || *strategy == Strategy::ErrorIntroduction {
            continue;
        }
        let mut lines = Vec::with_capacity(*count);
        match strategy {
            Strategy::Replacement => {
                for j in 0..*count {
                    let new_name =
                        pick(&pools.names, replacement_name_index(tool_idx, seed_idx, j));
                    let new_year = pick(&pools.years, tool_idx + seed_idx + j + 1);
                    let text = format!(
                        "{} {new_name}'s {new_year} {topic} record?",
                        QUESTION_STYLES[(seed_idx + j + 1) % QUESTION_STYLES.len()]
                    );
                    // replacement changed the parameter values; the pipeline
                    // re-extracts these, so script those prompts too
                    let prompt = prompts::extraction_prompt(templates, tool, &text)?;
                    fixture.script(&prompt, extraction_reply(new_name, new_year));
                    lines.push(text);
                }
            }
            Strategy::Rewriting => {
                for j in 0..*count {
                    let style = REWRITE_STYLES[j % REWRITE_STYLES.len()];
                    let text = style
                        .replace("{name}", grounding.name)
                        .replace("{year}", grounding.year)
                        .replace("{topic}", &topic);
                    lines.push(text);
                }
            }
            Strategy::Simplification => {
                for j in 0..*count {
                    let suffix = if j == 0 { String::new() } else { format!(" v{j}") };
                    lines.push(format!(
                        "{} {} {topic}{suffix}",
                        grounding.name, grounding.year
                    ));
                }
            }
            Strategy::ErrorIntroduction => unreachable!("handled below"),
        }
        let prompt =
            prompts::augment_prompt(templates, *strategy, seed_text, tool, pools, *count)?;
        fixture.script(&prompt, lines.join("\n"));
        if *strategy != Strategy::Replacement && first_non_replacement.is_none() {
            first_non_replacement = lines.first().cloned();
        }
    }

    let err_count = plan
        .iter()
        .find(|(s, _)| *s == Strategy::ErrorIntroduction)
        .map(|(_, c)| *c)
        .unwrap_or(0);
    if err_count > 0 {
        // the augmenter bases error introduction on the first
        // non-replacement augmentation; mirror that choice exactly
        let base = first_non_replacement.unwrap_or_else(|| seed_text.to_string());
        let mut lines = Vec::with_capacity(err_count);
        for j in 0..err_count {
            // a typo in non-critical words only; names and years stay intact
            let mut text = base.replacen("record", "recod", 1);
            if text == base {
                text.push_str(" pls");
            }
            if j > 0 {
                text.push_str(&format!(" ({j})"));
            }
            lines.push(text);
        }
        let prompt = prompts::augment_prompt(
            templates,
            Strategy::ErrorIntroduction,
            &base,
            tool,
            pools,
            err_count,
        )?;
        fixture.script(&prompt, lines.join("\n"));
    }
    Ok(())
}

/// The demo catalog every tool of which carries the two parameters the
/// scripted replies populate.
pub fn demo_tool(name: &str, description: &str) -> ToolSpec {
    use crate::catalog::ParamSpec;
    ToolSpec::new(name, description)
        .with_param(
            ParamSpec::new("employee_name", ParamType::String, true)
                .with_description("Full name of the employee the query is about"),
        )
        .with_param({
            let mut p = ParamSpec::new("year", ParamType::Integer, false)
                .with_description("Four-digit year the query refers to");
            p.examples = Some(vec![serde_json::json!(2023)]);
            p
        })
}
