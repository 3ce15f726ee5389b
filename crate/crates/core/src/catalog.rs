//! The scenario's function-tool catalog: load, validate, and transform.
//!
//! The on-disk shape is a strict subset of the OpenAI function schema
//! (name / description / typed parameters) so real tool definitions import
//! directly; unknown keys are carried through untouched.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::parser::Literal;

/// Default threshold for the "description too short" lint.
pub const DEFAULT_MIN_DESCRIPTION_LEN: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("failed to read catalog {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("catalog {path} is not valid JSON: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("duplicate tool name `{0}` in catalog")]
    DuplicateTool(String),
    #[error("tool `{tool}` has duplicate parameter `{param}`")]
    DuplicateParam { tool: String, param: String },
    #[error("tool at index {0} has an empty name")]
    EmptyToolName(usize),
    #[error("tool `{tool}` parameter at index {index} has an empty name")]
    EmptyParamName { tool: String, index: usize },
    #[error("tool `{tool}` parameter `{param}`: default value is {found}, expected {expected}")]
    DefaultTypeMismatch {
        tool: String,
        param: String,
        expected: ParamType,
        found: &'static str,
    },
    #[error("short-description variant is missing an override for tool `{0}`")]
    MissingShortOverride(String),
}

/// Parameter value types, mirroring JSON-schema primitive names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamType {
    String,
    Integer,
    Number,
    Boolean,
    Array,
    Object,
}

impl fmt::Display for ParamType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ParamType::String => "string",
            ParamType::Integer => "integer",
            ParamType::Number => "number",
            ParamType::Boolean => "boolean",
            ParamType::Array => "array",
            ParamType::Object => "object",
        };
        f.write_str(name)
    }
}

impl ParamType {
    /// Checks a JSON value against this type. `number` accepts integers.
    pub fn accepts_json(&self, value: &Value) -> bool {
        match self {
            ParamType::String => value.is_string(),
            ParamType::Integer => value.is_i64() || value.is_u64(),
            ParamType::Number => value.is_number(),
            ParamType::Boolean => value.is_boolean(),
            ParamType::Array => value.is_array(),
            ParamType::Object => value.is_object(),
        }
    }

    /// Checks a parsed call literal against this type.
    pub fn accepts_literal(&self, value: &Literal) -> bool {
        match self {
            ParamType::String => matches!(value, Literal::Str(_)),
            ParamType::Integer => matches!(value, Literal::Int(_)),
            ParamType::Number => matches!(value, Literal::Int(_) | Literal::Real(_)),
            ParamType::Boolean => matches!(value, Literal::Bool(_)),
            ParamType::Array => matches!(value, Literal::List(_)),
            ParamType::Object => matches!(value, Literal::Map(_)),
        }
    }
}

fn json_kind(value: &Value) -> &'static str {
    match value {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(n) if n.is_i64() || n.is_u64() => "integer",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

/// One typed parameter of a function tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(rename = "type")]
    pub dtype: ParamType,
    #[serde(default)]
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub examples: Option<Vec<Value>>,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, Value>,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, dtype: ParamType, required: bool) -> Self {
        Self {
            name: name.into(),
            description: String::new(),
            dtype,
            required,
            default: None,
            examples: None,
            extra: serde_json::Map::new(),
        }
    }

    pub fn with_description(mut self, text: impl Into<String>) -> Self {
        self.description = text.into();
        self
    }
}

/// One function tool: name, description, ordered parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default, rename = "parameters")]
    pub params: Vec<ParamSpec>,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, Value>,
}

impl ToolSpec {
    pub fn new(name: impl Into<String>, description: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            params: Vec::new(),
            extra: serde_json::Map::new(),
        }
    }

    pub fn with_param(mut self, param: ParamSpec) -> Self {
        self.params.push(param);
        self
    }

    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn required_params(&self) -> impl Iterator<Item = &ParamSpec> {
        self.params.iter().filter(|p| p.required)
    }

    /// Renders this tool in the OpenAI function-schema shape used inside
    /// dataset records.
    pub fn to_openai_schema(&self) -> Value {
        let mut properties = serde_json::Map::new();
        let mut required = Vec::new();
        for p in &self.params {
            let mut prop = serde_json::Map::new();
            prop.insert("type".into(), Value::String(p.dtype.to_string()));
            prop.insert("description".into(), Value::String(p.description.clone()));
            if let Some(default) = &p.default {
                prop.insert("default".into(), default.clone());
            }
            if let Some(examples) = &p.examples {
                prop.insert("examples".into(), Value::Array(examples.clone()));
            }
            properties.insert(p.name.clone(), Value::Object(prop));
            if p.required {
                required.push(Value::String(p.name.clone()));
            }
        }
        serde_json::json!({
            "name": self.name,
            "description": self.description,
            "parameters": {
                "type": "object",
                "properties": properties,
                "required": required,
            }
        })
    }
}

/// Builds a `ToolSpec` from the OpenAI function-schema shape.
pub fn tool_from_openai_schema(value: &Value) -> Option<ToolSpec> {
    let name = value.get("name")?.as_str()?.to_string();
    let description = value
        .get("description")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    let mut tool = ToolSpec::new(name, description);
    if let Some(params) = value.get("parameters") {
        let required: BTreeSet<&str> = params
            .get("required")
            .and_then(Value::as_array)
            .map(|r| r.iter().filter_map(Value::as_str).collect())
            .unwrap_or_default();
        if let Some(props) = params.get("properties").and_then(Value::as_object) {
            for (pname, prop) in props {
                let dtype = match prop.get("type").and_then(Value::as_str) {
                    Some("string") => ParamType::String,
                    Some("integer") => ParamType::Integer,
                    Some("number") => ParamType::Number,
                    Some("boolean") => ParamType::Boolean,
                    Some("array") => ParamType::Array,
                    Some("object") => ParamType::Object,
                    _ => ParamType::String,
                };
                let mut param = ParamSpec::new(pname.clone(), dtype, required.contains(pname.as_str()));
                if let Some(desc) = prop.get("description").and_then(Value::as_str) {
                    param.description = desc.to_string();
                }
                if let Some(default) = prop.get("default") {
                    param.default = Some(default.clone());
                }
                if let Some(examples) = prop.get("examples").and_then(Value::as_array) {
                    param.examples = Some(examples.clone());
                }
                tool.params.push(param);
            }
        }
    }
    Some(tool)
}

/// The scenario catalog: an ordered list of tools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    #[serde(rename = "scenario")]
    pub scenario_name: String,
    pub tools: Vec<ToolSpec>,
}

impl Catalog {
    pub fn new(scenario_name: impl Into<String>, tools: Vec<ToolSpec>) -> Result<Self, CatalogError> {
        let catalog = Self {
            scenario_name: scenario_name.into(),
            tools,
        };
        catalog.check_invariants()?;
        Ok(catalog)
    }

    pub fn tool(&self, name: &str) -> Option<&ToolSpec> {
        self.tools.iter().find(|t| t.name == name)
    }

    pub fn tool_names(&self) -> Vec<String> {
        self.tools.iter().map(|t| t.name.clone()).collect()
    }

    fn check_invariants(&self) -> Result<(), CatalogError> {
        let mut seen = BTreeSet::new();
        for (idx, tool) in self.tools.iter().enumerate() {
            if tool.name.is_empty() {
                return Err(CatalogError::EmptyToolName(idx));
            }
            if !seen.insert(tool.name.clone()) {
                return Err(CatalogError::DuplicateTool(tool.name.clone()));
            }
            let mut params = BTreeSet::new();
            for (pidx, param) in tool.params.iter().enumerate() {
                if param.name.is_empty() {
                    return Err(CatalogError::EmptyParamName {
                        tool: tool.name.clone(),
                        index: pidx,
                    });
                }
                if !params.insert(param.name.clone()) {
                    return Err(CatalogError::DuplicateParam {
                        tool: tool.name.clone(),
                        param: param.name.clone(),
                    });
                }
                if let Some(default) = &param.default {
                    if !param.dtype.accepts_json(default) {
                        return Err(CatalogError::DefaultTypeMismatch {
                            tool: tool.name.clone(),
                            param: param.name.clone(),
                            expected: param.dtype,
                            found: json_kind(default),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Loads a catalog file and checks every invariant.
pub fn load_catalog(path: impl AsRef<Path>) -> Result<Catalog, CatalogError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CatalogError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let catalog: Catalog = serde_json::from_str(&text).map_err(|source| CatalogError::Json {
        path: path.display().to_string(),
        source,
    })?;
    catalog.check_invariants()?;
    Ok(catalog)
}

/// Writes the catalog in its canonical on-disk form.
pub fn save_catalog(catalog: &Catalog, path: impl AsRef<Path>) -> Result<(), CatalogError> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(catalog).expect("catalog serializes");
    std::fs::write(path, text).map_err(|source| CatalogError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Lint kinds surfaced by [`validate_catalog`]. Lints are advice, not errors:
/// weak descriptions degrade generation quality but load fine.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    EmptyDescription,
    DescriptionTooShort,
    ParamUndocumented,
    MissingExamplesForRequired,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub kind: IssueKind,
    pub tool: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub param: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, Copy)]
pub struct LintConfig {
    pub min_description_len: usize,
}

impl Default for LintConfig {
    fn default() -> Self {
        Self {
            min_description_len: DEFAULT_MIN_DESCRIPTION_LEN,
        }
    }
}

/// Quality lints over the catalog: empty or too-short tool descriptions,
/// undocumented parameters, required parameters without examples.
pub fn validate_catalog(catalog: &Catalog, config: &LintConfig) -> Vec<Issue> {
    let mut issues = Vec::new();
    for tool in &catalog.tools {
        if tool.description.is_empty() {
            issues.push(Issue {
                kind: IssueKind::EmptyDescription,
                tool: tool.name.clone(),
                param: None,
                message: format!("tool `{}` has an empty description", tool.name),
            });
        } else if tool.description.chars().count() < config.min_description_len {
            issues.push(Issue {
                kind: IssueKind::DescriptionTooShort,
                tool: tool.name.clone(),
                param: None,
                message: format!(
                    "tool `{}` description is shorter than {} characters",
                    tool.name, config.min_description_len
                ),
            });
        }
        for param in &tool.params {
            if param.description.is_empty() {
                issues.push(Issue {
                    kind: IssueKind::ParamUndocumented,
                    tool: tool.name.clone(),
                    param: Some(param.name.clone()),
                    message: format!(
                        "parameter `{}` of tool `{}` has no description",
                        param.name, tool.name
                    ),
                });
            }
            if param.required && param.examples.as_ref().is_none_or(|e| e.is_empty()) {
                issues.push(Issue {
                    kind: IssueKind::MissingExamplesForRequired,
                    tool: tool.name.clone(),
                    param: Some(param.name.clone()),
                    message: format!(
                        "required parameter `{}` of tool `{}` has no examples",
                        param.name, tool.name
                    ),
                });
            }
        }
    }
    issues
}

/// Description-length variants for ablation-style experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescriptionVariant {
    Long,
    Short,
    None,
}

impl std::str::FromStr for DescriptionVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "long" => Ok(DescriptionVariant::Long),
            "short" => Ok(DescriptionVariant::Short),
            "none" => Ok(DescriptionVariant::None),
            other => Err(format!("unknown description variant `{other}`")),
        }
    }
}

/// Rewrites tool descriptions per variant. `long` is the identity; `short`
/// substitutes the user-supplied override for every tool (shortening is a
/// manual editorial act, never automatic); `none` blanks every description.
/// Names, parameter schemas, and tool order are untouched.
pub fn description_variant(
    catalog: &Catalog,
    variant: DescriptionVariant,
    overrides: &std::collections::BTreeMap<String, String>,
) -> Result<Catalog, CatalogError> {
    match variant {
        DescriptionVariant::Long => Ok(catalog.clone()),
        DescriptionVariant::Short => {
            let mut out = catalog.clone();
            for tool in &mut out.tools {
                match overrides.get(&tool.name) {
                    Some(short) => tool.description = short.clone(),
                    None => return Err(CatalogError::MissingShortOverride(tool.name.clone())),
                }
            }
            Ok(out)
        }
        DescriptionVariant::None => {
            let mut out = catalog.clone();
            for tool in &mut out.tools {
                tool.description.clear();
            }
            Ok(out)
        }
    }
}
