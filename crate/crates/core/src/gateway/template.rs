//! Prompt templates with named `{key}` placeholders.
//!
//! Literal braces are written `{{` and `}}`. A template knows the set of
//! variables its body uses, so rendering can fail fast on a missing one.

use std::collections::{BTreeMap, BTreeSet};

use super::GatewayError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: String,
    body: String,
    required_vars: BTreeSet<String>,
}

impl PromptTemplate {
    /// Builds a template, deriving `required_vars` from the placeholders
    /// found in the body.
    pub fn from_body(id: impl Into<String>, body: impl Into<String>) -> Result<Self, GatewayError> {
        let id = id.into();
        let body = body.into();
        let required_vars = scan_placeholders(&id, &body)?;
        Ok(Self {
            id,
            body,
            required_vars,
        })
    }

    /// Builds a template with an explicit variable set; every placeholder in
    /// the body must be declared.
    pub fn new(
        id: impl Into<String>,
        body: impl Into<String>,
        required_vars: impl IntoIterator<Item = String>,
    ) -> Result<Self, GatewayError> {
        let id = id.into();
        let body = body.into();
        let declared: BTreeSet<String> = required_vars.into_iter().collect();
        let found = scan_placeholders(&id, &body)?;
        for var in &found {
            if !declared.contains(var) {
                return Err(GatewayError::UnknownPlaceholder {
                    template: id,
                    placeholder: var.clone(),
                });
            }
        }
        Ok(Self {
            id,
            body,
            required_vars: declared,
        })
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn required_vars(&self) -> &BTreeSet<String> {
        &self.required_vars
    }

    pub fn uses_var(&self, name: &str) -> bool {
        self.required_vars.contains(name)
    }

    /// Replaces every `{key}` with its value. `{{`/`}}` unescape to literal
    /// braces, so a fully rendered body re-renders to itself.
    pub fn render(&self, vars: &BTreeMap<String, String>) -> Result<String, GatewayError> {
        for var in &self.required_vars {
            if !vars.contains_key(var) {
                return Err(GatewayError::MissingVariable {
                    template: self.id.clone(),
                    variable: var.clone(),
                });
            }
        }
        let mut out = String::with_capacity(self.body.len());
        let mut chars = self.body.chars().peekable();
        while let Some(c) = chars.next() {
            match c {
                '{' if chars.peek() == Some(&'{') => {
                    chars.next();
                    out.push('{');
                }
                '}' if chars.peek() == Some(&'}') => {
                    chars.next();
                    out.push('}');
                }
                '{' => {
                    let mut key = String::new();
                    for k in chars.by_ref() {
                        if k == '}' {
                            break;
                        }
                        key.push(k);
                    }
                    match vars.get(&key) {
                        Some(value) => out.push_str(value),
                        None => {
                            return Err(GatewayError::MissingVariable {
                                template: self.id.clone(),
                                variable: key,
                            })
                        }
                    }
                }
                c => out.push(c),
            }
        }
        Ok(out)
    }
}

fn scan_placeholders(id: &str, body: &str) -> Result<BTreeSet<String>, GatewayError> {
    let mut vars = BTreeSet::new();
    let mut chars = body.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '{' if chars.peek() == Some(&'{') => {
                chars.next();
            }
            '}' if chars.peek() == Some(&'}') => {
                chars.next();
            }
            '{' => {
                let mut key = String::new();
                let mut closed = false;
                for k in chars.by_ref() {
                    if k == '}' {
                        closed = true;
                        break;
                    }
                    key.push(k);
                }
                if !closed || key.is_empty() || !is_valid_key(&key) {
                    return Err(GatewayError::MalformedPlaceholder {
                        template: id.to_string(),
                        fragment: key,
                    });
                }
                vars.insert(key);
            }
            _ => {}
        }
    }
    Ok(vars)
}

fn is_valid_key(key: &str) -> bool {
    key.chars()
        .all(|c| c.is_ascii_alphanumeric() || c == '_')
}
