//! Prompt construction for the synthesis stages.
//!
//! Building prompts through these functions (rather than ad hoc) keeps the
//! rendered text stable, which matters because the mock backend keys its
//! replies on a hash of the exact prompt.

use std::collections::BTreeMap;

use crate::catalog::ToolSpec;

use super::{EntityPools, Strategy, SynthesisError, TemplateSet};
use crate::gateway::PromptTemplate;

fn render_checked(
    template: &PromptTemplate,
    vars: BTreeMap<String, String>,
) -> Result<String, SynthesisError> {
    template
        .render(&vars)
        .map_err(|source| SynthesisError::Prompt {
            template: template.id.clone(),
            source,
        })
}

fn pool_var(
    template: &PromptTemplate,
    vars: &mut BTreeMap<String, String>,
    key: &str,
    pool: &[String],
) -> Result<(), SynthesisError> {
    if template.uses_var(key) {
        if pool.is_empty() {
            return Err(SynthesisError::EmptyPool(key.to_string()));
        }
        vars.insert(key.to_string(), pool.join(", "));
    }
    Ok(())
}

fn params_json(tool: &ToolSpec) -> String {
    serde_json::to_string(&tool.params).expect("params serialize")
}

fn info_dict_json(tool: &ToolSpec) -> String {
    serde_json::to_string(&tool.to_openai_schema()).expect("schema serializes")
}

/// Renders the seed-generation prompt for one tool.
pub fn seed_prompt(
    templates: &TemplateSet,
    tool: &ToolSpec,
    pools: &EntityPools,
    per_tool: usize,
) -> Result<String, SynthesisError> {
    let template = &templates.seed;
    let mut vars = BTreeMap::new();
    vars.insert("key".to_string(), tool.name.clone());
    vars.insert("func_name".to_string(), tool.name.clone());
    vars.insert("function_description".to_string(), tool.description.clone());
    vars.insert("func_desc".to_string(), tool.description.clone());
    vars.insert("params_data".to_string(), params_json(tool));
    vars.insert("number".to_string(), per_tool.to_string());
    if template.uses_var("half") {
        if per_tool < 2 || !per_tool.is_multiple_of(2) {
            return Err(SynthesisError::HalfSplitNeedsEven { per_tool });
        }
        vars.insert("half".to_string(), (per_tool / 2).to_string());
    }
    pool_var(template, &mut vars, "ids", &pools.names)?;
    render_checked(template, vars)
}

/// Renders one augmentation prompt for a base question.
pub fn augment_prompt(
    templates: &TemplateSet,
    strategy: Strategy,
    question: &str,
    tool: &ToolSpec,
    pools: &EntityPools,
    count: usize,
) -> Result<String, SynthesisError> {
    let template = templates.for_strategy(strategy);
    let mut vars = BTreeMap::new();
    vars.insert("question".to_string(), question.to_string());
    vars.insert("number".to_string(), count.to_string());
    if template.uses_var("info_dict") {
        vars.insert("info_dict".to_string(), info_dict_json(tool));
    }
    if template.uses_var("func_desc") {
        vars.insert("func_desc".to_string(), tool.description.clone());
    }
    pool_var(template, &mut vars, "names", &pools.names)?;
    pool_var(template, &mut vars, "ids", &pools.names)?;
    pool_var(template, &mut vars, "departments", &pools.departments)?;
    pool_var(template, &mut vars, "cities", &pools.cities)?;
    pool_var(template, &mut vars, "years", &pools.years)?;
    render_checked(template, vars)
}

/// Renders the parameter-extraction prompt for a question.
pub fn extraction_prompt(
    templates: &TemplateSet,
    tool: &ToolSpec,
    question: &str,
) -> Result<String, SynthesisError> {
    let template = &templates.extraction;
    let mut vars = BTreeMap::new();
    vars.insert("func_name".to_string(), tool.name.clone());
    vars.insert("key".to_string(), tool.name.clone());
    vars.insert("function_description".to_string(), tool.description.clone());
    vars.insert("func_desc".to_string(), tool.description.clone());
    vars.insert("params_data".to_string(), params_json(tool));
    vars.insert("question".to_string(), question.to_string());
    render_checked(template, vars)
}
