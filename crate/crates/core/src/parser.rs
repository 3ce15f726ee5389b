//! Parsing and serialization of function-call text.
//!
//! Model output is accepted in three syntax forms: pythonic `[f(k=v, ...)]`
//! (or a bare `f(k=v)`), a JSON object `{"name": ..., "arguments": {...}}`,
//! and a JSON array of such objects. Parsing never panics; malformed input
//! yields a failure with a byte offset into the original text.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Maximum nesting depth for list/map literals. Guards the recursive
/// descent against stack exhaustion on adversarial input.
const MAX_DEPTH: usize = 128;

/// A literal argument value. Integers and reals are distinct kinds at parse
/// time; cross-kind numeric comparison is evaluation policy, not syntax.
#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Null,
    Bool(bool),
    Int(i64),
    Real(f64),
    Str(String),
    List(Vec<Literal>),
    Map(BTreeMap<String, Literal>),
}

impl Literal {
    pub fn kind(&self) -> &'static str {
        match self {
            Literal::Null => "null",
            Literal::Bool(_) => "boolean",
            Literal::Int(_) => "integer",
            Literal::Real(_) => "real",
            Literal::Str(_) => "string",
            Literal::List(_) => "list",
            Literal::Map(_) => "map",
        }
    }

    /// Converts a JSON value into a literal. Integer-valued JSON numbers
    /// become `Int`, everything else with a fractional or exponent part
    /// becomes `Real`.
    pub fn from_json(value: &serde_json::Value) -> Literal {
        match value {
            serde_json::Value::Null => Literal::Null,
            serde_json::Value::Bool(b) => Literal::Bool(*b),
            serde_json::Value::Number(n) => {
                if let Some(i) = n.as_i64() {
                    Literal::Int(i)
                } else {
                    Literal::Real(n.as_f64().unwrap_or(f64::NAN))
                }
            }
            serde_json::Value::String(s) => Literal::Str(s.clone()),
            serde_json::Value::Array(items) => {
                Literal::List(items.iter().map(Literal::from_json).collect())
            }
            serde_json::Value::Object(map) => Literal::Map(
                map.iter()
                    .map(|(k, v)| (k.clone(), Literal::from_json(v)))
                    .collect(),
            ),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Literal::Null => serde_json::Value::Null,
            Literal::Bool(b) => serde_json::Value::Bool(*b),
            Literal::Int(i) => serde_json::Value::from(*i),
            Literal::Real(r) => serde_json::Number::from_f64(*r)
                .map(serde_json::Value::Number)
                .unwrap_or(serde_json::Value::Null),
            Literal::Str(s) => serde_json::Value::String(s.clone()),
            Literal::List(items) => {
                serde_json::Value::Array(items.iter().map(Literal::to_json).collect())
            }
            Literal::Map(map) => serde_json::Value::Object(
                map.iter().map(|(k, v)| (k.clone(), v.to_json())).collect(),
            ),
        }
    }
}

impl Serialize for Literal {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Literal {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = serde_json::Value::deserialize(deserializer)?;
        if let Some(n) = value.as_f64() {
            if !n.is_finite() {
                return Err(D::Error::custom("non-finite number literal"));
            }
        }
        Ok(Literal::from_json(&value))
    }
}

/// A single function call: tool name plus keyword arguments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallInstruction {
    pub tool_name: String,
    pub arguments: BTreeMap<String, Literal>,
}

impl CallInstruction {
    pub fn new(tool_name: impl Into<String>) -> Self {
        Self {
            tool_name: tool_name.into(),
            arguments: BTreeMap::new(),
        }
    }

    pub fn with_arg(mut self, name: impl Into<String>, value: Literal) -> Self {
        self.arguments.insert(name.into(), value);
        self
    }
}

/// Syntax family for serialization and, on success, the form that was parsed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallSyntaxForm {
    Pythonic,
    JsonObject,
    JsonArray,
}

/// Why a parse failed. Positions are byte offsets into the original input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FailReason {
    /// The input does not begin with anything call-shaped.
    NoCallFound,
    /// A pythonic argument without `name=`; the grammar is keyword-only.
    PositionalArg,
    DuplicateArg(String),
    UnterminatedString,
    InvalidEscape,
    InvalidNumber,
    /// Input continues past the end of the parsed call(s).
    TrailingInput,
    TooDeep,
    Expected(&'static str),
}

impl fmt::Display for FailReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailReason::NoCallFound => write!(f, "no function call found"),
            FailReason::PositionalArg => write!(f, "positional argument; only keyword arguments are accepted"),
            FailReason::DuplicateArg(name) => write!(f, "duplicate argument `{name}`"),
            FailReason::UnterminatedString => write!(f, "unterminated string literal"),
            FailReason::InvalidEscape => write!(f, "invalid escape sequence"),
            FailReason::InvalidNumber => write!(f, "malformed number literal"),
            FailReason::TrailingInput => write!(f, "unexpected trailing input after call"),
            FailReason::TooDeep => write!(f, "literal nesting too deep"),
            FailReason::Expected(what) => write!(f, "expected {what}"),
        }
    }
}

/// Result of parsing model output: either every call in order, or the
/// first failure with its position.
#[derive(Debug, Clone, PartialEq)]
pub enum ParseOutcome {
    Calls {
        calls: Vec<CallInstruction>,
        form: CallSyntaxForm,
    },
    Failure {
        position: usize,
        reason: FailReason,
    },
}

impl ParseOutcome {
    pub fn is_success(&self) -> bool {
        matches!(self, ParseOutcome::Calls { .. })
    }

    pub fn calls(&self) -> Option<&[CallInstruction]> {
        match self {
            ParseOutcome::Calls { calls, .. } => Some(calls),
            ParseOutcome::Failure { .. } => None,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SerializeError {
    #[error("value for `{0}` is not representable (non-finite real)")]
    NonRepresentable(String),
}

/// Parses model-emitted call text. Total: any byte string yields either
/// calls or a positioned failure, never a panic.
pub fn parse_call(text: &str) -> ParseOutcome {
    let (start, end) = content_range(text);
    if start >= end {
        return ParseOutcome::Failure {
            position: start.min(text.len()),
            reason: FailReason::NoCallFound,
        };
    }
    let mut p = Parser {
        bytes: text.as_bytes(),
        pos: start,
        end,
    };
    let (calls, form) = match p.parse_entry() {
        Ok(parsed) => parsed,
        Err(failure) => return failure,
    };
    p.skip_ws();
    if p.pos < p.end {
        return ParseOutcome::Failure {
            position: p.pos,
            reason: FailReason::TrailingInput,
        };
    }
    ParseOutcome::Calls { calls, form }
}

/// Canonical text for one call: arguments in name order, strings
/// double-quoted with minimal escaping, reals rendered shortest-round-trip.
pub fn serialize_call(call: &CallInstruction, form: CallSyntaxForm) -> Result<String, SerializeError> {
    serialize_calls(std::slice::from_ref(call), form)
}

/// Serializes a sequence of calls in the given form. `JsonObject` requires
/// exactly one call; the list forms accept any nonempty sequence.
pub fn serialize_calls(calls: &[CallInstruction], form: CallSyntaxForm) -> Result<String, SerializeError> {
    let mut out = String::new();
    match form {
        CallSyntaxForm::Pythonic => {
            out.push('[');
            for (i, call) in calls.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_pythonic(call, &mut out)?;
            }
            out.push(']');
        }
        CallSyntaxForm::JsonObject => {
            debug_assert_eq!(calls.len(), 1, "json_object form holds exactly one call");
            write_json_object(&calls[0], &mut out)?;
        }
        CallSyntaxForm::JsonArray => {
            out.push('[');
            for (i, call) in calls.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_json_object(call, &mut out)?;
            }
            out.push(']');
        }
    }
    Ok(out)
}

fn write_pythonic(call: &CallInstruction, out: &mut String) -> Result<(), SerializeError> {
    out.push_str(&call.tool_name);
    out.push('(');
    for (i, (name, value)) in call.arguments.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(name);
        out.push('=');
        write_literal(value, name, out)?;
    }
    out.push(')');
    Ok(())
}

fn write_json_object(call: &CallInstruction, out: &mut String) -> Result<(), SerializeError> {
    out.push_str("{\"name\":");
    write_str(&call.tool_name, out);
    out.push_str(",\"arguments\":{");
    for (i, (name, value)) in call.arguments.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write_str(name, out);
        out.push(':');
        write_literal(value, name, out)?;
    }
    out.push_str("}}");
    Ok(())
}

fn write_literal(value: &Literal, arg: &str, out: &mut String) -> Result<(), SerializeError> {
    match value {
        Literal::Null => out.push_str("null"),
        Literal::Bool(true) => out.push_str("true"),
        Literal::Bool(false) => out.push_str("false"),
        Literal::Int(i) => out.push_str(&i.to_string()),
        Literal::Real(r) => {
            if !r.is_finite() {
                return Err(SerializeError::NonRepresentable(arg.to_string()));
            }
            // {:?} is shortest-round-trip and keeps the `.0` that marks a real
            out.push_str(&format!("{r:?}"));
        }
        Literal::Str(s) => write_str(s, out),
        Literal::List(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_literal(item, arg, out)?;
            }
            out.push(']');
        }
        Literal::Map(map) => {
            out.push('{');
            for (i, (k, v)) in map.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_str(k, out);
                out.push_str(": ");
                write_literal(v, arg, out)?;
            }
            out.push('}');
        }
    }
    Ok(())
}

fn write_str(s: &str, out: &mut String) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
}

/// Locates the payload inside the raw output: trims whitespace and strips
/// one surrounding markdown code fence (with optional language tag).
/// Returns a byte range into the original text.
fn content_range(text: &str) -> (usize, usize) {
    let bytes = text.as_bytes();
    let mut start = 0;
    let mut end = bytes.len();
    while start < end && bytes[start].is_ascii_whitespace() {
        start += 1;
    }
    while end > start && bytes[end - 1].is_ascii_whitespace() {
        end -= 1;
    }
    let inner = &text[start..end];
    if let Some(rest) = inner.strip_prefix("```") {
        // opening fence line may carry a language tag
        if let Some(nl) = rest.find('\n') {
            let body_start = start + 3 + nl + 1;
            let mut body_end = end;
            if inner.ends_with("```") && body_start <= end - 3 {
                body_end = end - 3;
            }
            let mut s = body_start;
            let mut e = body_end;
            while s < e && bytes[s].is_ascii_whitespace() {
                s += 1;
            }
            while e > s && bytes[e - 1].is_ascii_whitespace() {
                e -= 1;
            }
            return (s, e);
        }
    }
    (start, end)
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
    end: usize,
}

type ParseResult<T> = Result<T, ParseOutcome>;

impl<'a> Parser<'a> {
    fn fail<T>(&self, position: usize, reason: FailReason) -> ParseResult<T> {
        Err(ParseOutcome::Failure { position, reason })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.end && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        if self.pos < self.end {
            Some(self.bytes[self.pos])
        } else {
            None
        }
    }

    fn eat(&mut self, byte: u8, what: &'static str) -> ParseResult<()> {
        if self.peek() == Some(byte) {
            self.pos += 1;
            Ok(())
        } else {
            self.fail(self.pos, FailReason::Expected(what))
        }
    }

    fn parse_entry(&mut self) -> ParseResult<(Vec<CallInstruction>, CallSyntaxForm)> {
        self.skip_ws();
        let at = self.pos;
        match self.peek() {
            Some(b'[') => {
                // '[' then '{' is a JSON array; '[' then an identifier is a
                // pythonic call list
                let mut look = self.pos + 1;
                while look < self.end && self.bytes[look].is_ascii_whitespace() {
                    look += 1;
                }
                match self.bytes.get(look).copied() {
                    Some(b'{') => {
                        let calls = self.parse_json_array()?;
                        Ok((calls, CallSyntaxForm::JsonArray))
                    }
                    Some(c) if is_ident_start(c) => {
                        let calls = self.parse_pythonic_list()?;
                        Ok((calls, CallSyntaxForm::Pythonic))
                    }
                    _ => self.fail(look.min(self.end), FailReason::NoCallFound),
                }
            }
            Some(b'{') => {
                let call = self.parse_json_call_object()?;
                Ok((vec![call], CallSyntaxForm::JsonObject))
            }
            Some(c) if is_ident_start(c) => {
                // bare pythonic call: identifier immediately followed by '('
                let save = self.pos;
                let _name = self.parse_ident();
                self.skip_ws();
                if self.peek() != Some(b'(') {
                    return self.fail(at, FailReason::NoCallFound);
                }
                self.pos = save;
                let call = self.parse_pythonic_call()?;
                Ok((vec![call], CallSyntaxForm::Pythonic))
            }
            _ => self.fail(at, FailReason::NoCallFound),
        }
    }

    fn parse_pythonic_list(&mut self) -> ParseResult<Vec<CallInstruction>> {
        self.eat(b'[', "'['")?;
        let mut calls = Vec::new();
        loop {
            self.skip_ws();
            if self.peek() == Some(b']') && !calls.is_empty() {
                self.pos += 1;
                return Ok(calls);
            }
            calls.push(self.parse_pythonic_call()?);
            self.skip_ws();
            match self.peek() {
                Some(b',') => {
                    self.pos += 1;
                    // tolerate a trailing comma before ']'
                    self.skip_ws();
                    if self.peek() == Some(b']') {
                        self.pos += 1;
                        return Ok(calls);
                    }
                }
                Some(b']') => {
                    self.pos += 1;
                    return Ok(calls);
                }
                _ => return self.fail(self.pos, FailReason::Expected("',' or ']'")),
            }
        }
    }

    fn parse_pythonic_call(&mut self) -> ParseResult<CallInstruction> {
        self.skip_ws();
        if !matches!(self.peek(), Some(c) if is_ident_start(c)) {
            return self.fail(self.pos, FailReason::Expected("function name"));
        }
        let name = self.parse_tool_ident();
        self.skip_ws();
        self.eat(b'(', "'('")?;
        let mut arguments = BTreeMap::new();
        self.skip_ws();
        if self.peek() == Some(b')') {
            self.pos += 1;
            return Ok(CallInstruction {
                tool_name: name,
                arguments,
            });
        }
        loop {
            self.skip_ws();
            let arg_at = self.pos;
            if !matches!(self.peek(), Some(c) if is_ident_start(c)) {
                return self.fail(arg_at, FailReason::PositionalArg);
            }
            let key = self.parse_ident();
            self.skip_ws();
            if self.peek() != Some(b'=') {
                // an identifier not followed by '=' is a positional value
                return self.fail(arg_at, FailReason::PositionalArg);
            }
            self.pos += 1;
            let value = self.parse_literal(0)?;
            if arguments.insert(key.clone(), value).is_some() {
                return self.fail(arg_at, FailReason::DuplicateArg(key));
            }
            self.skip_ws();
            match self.peek() {
                Some(b',') => {
                    self.pos += 1;
                    self.skip_ws();
                    if self.peek() == Some(b')') {
                        self.pos += 1;
                        break;
                    }
                }
                Some(b')') => {
                    self.pos += 1;
                    break;
                }
                _ => return self.fail(self.pos, FailReason::Expected("',' or ')'")),
            }
        }
        Ok(CallInstruction {
            tool_name: name,
            arguments,
        })
    }

    fn parse_json_array(&mut self) -> ParseResult<Vec<CallInstruction>> {
        self.eat(b'[', "'['")?;
        let mut calls = Vec::new();
        loop {
            self.skip_ws();
            if self.peek() == Some(b']') && !calls.is_empty() {
                self.pos += 1;
                return Ok(calls);
            }
            calls.push(self.parse_json_call_object()?);
            self.skip_ws();
            match self.peek() {
                Some(b',') => {
                    self.pos += 1;
                }
                Some(b']') => {
                    self.pos += 1;
                    return Ok(calls);
                }
                _ => return self.fail(self.pos, FailReason::Expected("',' or ']'")),
            }
        }
    }

    /// `{"name": ..., "arguments": {...}}`; `arguments` may also arrive as
    /// an embedded JSON string, which is unwrapped and parsed in place.
    fn parse_json_call_object(&mut self) -> ParseResult<CallInstruction> {
        self.skip_ws();
        let obj_at = self.pos;
        let value = self.parse_literal(0)?;
        let map = match value {
            Literal::Map(map) => map,
            _ => return self.fail(obj_at, FailReason::Expected("call object")),
        };
        let mut name = None;
        let mut arguments = BTreeMap::new();
        for (key, val) in map {
            match key.as_str() {
                "name" => match val {
                    Literal::Str(s) => name = Some(s),
                    _ => return self.fail(obj_at, FailReason::Expected("string `name`")),
                },
                "arguments" | "parameters" => match val {
                    Literal::Map(args) => arguments = args,
                    Literal::Str(embedded) => {
                        // arguments serialized as an embedded JSON string
                        let mut inner = Parser {
                            bytes: embedded.as_bytes(),
                            pos: 0,
                            end: embedded.len(),
                        };
                        inner.skip_ws();
                        let parsed = inner.parse_literal(0).map_err(|_| ParseOutcome::Failure {
                            position: obj_at,
                            reason: FailReason::Expected("JSON object in embedded `arguments` string"),
                        })?;
                        match parsed {
                            Literal::Map(args) => arguments = args,
                            _ => {
                                return self.fail(
                                    obj_at,
                                    FailReason::Expected("JSON object in embedded `arguments` string"),
                                )
                            }
                        }
                    }
                    Literal::Null => {}
                    _ => return self.fail(obj_at, FailReason::Expected("object `arguments`")),
                },
                // unknown keys (id, type, ...) are tolerated and dropped
                _ => {}
            }
        }
        match name {
            Some(tool_name) => Ok(CallInstruction {
                tool_name,
                arguments,
            }),
            None => self.fail(obj_at, FailReason::Expected("`name` key")),
        }
    }

    fn parse_literal(&mut self, depth: usize) -> ParseResult<Literal> {
        if depth > MAX_DEPTH {
            return self.fail(self.pos, FailReason::TooDeep);
        }
        self.skip_ws();
        match self.peek() {
            Some(b'"') | Some(b'\'') => self.parse_string().map(Literal::Str),
            Some(b'[') => {
                self.pos += 1;
                let mut items = Vec::new();
                loop {
                    self.skip_ws();
                    if self.peek() == Some(b']') {
                        self.pos += 1;
                        return Ok(Literal::List(items));
                    }
                    items.push(self.parse_literal(depth + 1)?);
                    self.skip_ws();
                    match self.peek() {
                        Some(b',') => self.pos += 1,
                        Some(b']') => {
                            self.pos += 1;
                            return Ok(Literal::List(items));
                        }
                        _ => return self.fail(self.pos, FailReason::Expected("',' or ']'")),
                    }
                }
            }
            Some(b'{') => {
                self.pos += 1;
                let mut map = BTreeMap::new();
                loop {
                    self.skip_ws();
                    if self.peek() == Some(b'}') {
                        self.pos += 1;
                        return Ok(Literal::Map(map));
                    }
                    if !matches!(self.peek(), Some(b'"') | Some(b'\'')) {
                        return self.fail(self.pos, FailReason::Expected("string key"));
                    }
                    let key = self.parse_string()?;
                    self.skip_ws();
                    self.eat(b':', "':'")?;
                    let value = self.parse_literal(depth + 1)?;
                    map.insert(key, value);
                    self.skip_ws();
                    match self.peek() {
                        Some(b',') => self.pos += 1,
                        Some(b'}') => {
                            self.pos += 1;
                            return Ok(Literal::Map(map));
                        }
                        _ => return self.fail(self.pos, FailReason::Expected("',' or '}'")),
                    }
                }
            }
            Some(c) if c == b'-' || c == b'+' || c.is_ascii_digit() => self.parse_number(),
            Some(c) if is_ident_start(c) => {
                let at = self.pos;
                let word = self.parse_ident();
                match word.as_str() {
                    "true" | "True" => Ok(Literal::Bool(true)),
                    "false" | "False" => Ok(Literal::Bool(false)),
                    "null" | "None" => Ok(Literal::Null),
                    _ => self.fail(at, FailReason::Expected("literal value")),
                }
            }
            _ => self.fail(self.pos, FailReason::Expected("literal value")),
        }
    }

    fn parse_string(&mut self) -> ParseResult<String> {
        let open_at = self.pos;
        let quote = self.bytes[self.pos];
        self.pos += 1;
        let mut out = String::new();
        loop {
            let Some(c) = self.peek() else {
                return self.fail(open_at, FailReason::UnterminatedString);
            };
            match c {
                c if c == quote => {
                    self.pos += 1;
                    return Ok(out);
                }
                b'\\' => {
                    let esc_at = self.pos;
                    self.pos += 1;
                    let Some(e) = self.peek() else {
                        return self.fail(esc_at, FailReason::InvalidEscape);
                    };
                    self.pos += 1;
                    match e {
                        b'"' => out.push('"'),
                        b'\'' => out.push('\''),
                        b'\\' => out.push('\\'),
                        b'/' => out.push('/'),
                        b'n' => out.push('\n'),
                        b't' => out.push('\t'),
                        b'r' => out.push('\r'),
                        b'b' => out.push('\u{8}'),
                        b'f' => out.push('\u{c}'),
                        b'u' => {
                            let cp = self.parse_hex4(esc_at)?;
                            if (0xD800..0xDC00).contains(&cp) {
                                // high surrogate: require the low half
                                if self.peek() == Some(b'\\') && self.bytes.get(self.pos + 1) == Some(&b'u') {
                                    self.pos += 2;
                                    let low = self.parse_hex4(esc_at)?;
                                    if (0xDC00..0xE000).contains(&low) {
                                        let combined =
                                            0x10000 + ((cp - 0xD800) << 10) + (low - 0xDC00);
                                        match char::from_u32(combined) {
                                            Some(ch) => out.push(ch),
                                            None => return self.fail(esc_at, FailReason::InvalidEscape),
                                        }
                                    } else {
                                        return self.fail(esc_at, FailReason::InvalidEscape);
                                    }
                                } else {
                                    return self.fail(esc_at, FailReason::InvalidEscape);
                                }
                            } else {
                                match char::from_u32(cp) {
                                    Some(ch) => out.push(ch),
                                    None => return self.fail(esc_at, FailReason::InvalidEscape),
                                }
                            }
                        }
                        _ => return self.fail(esc_at, FailReason::InvalidEscape),
                    }
                }
                _ => {
                    // consume one UTF-8 scalar, not one byte
                    let rest = match std::str::from_utf8(&self.bytes[self.pos..self.end]) {
                        Ok(s) => s,
                        Err(_) => return self.fail(self.pos, FailReason::Expected("valid UTF-8")),
                    };
                    let ch = rest.chars().next().expect("peek guaranteed a byte");
                    out.push(ch);
                    self.pos += ch.len_utf8();
                }
            }
        }
    }

    fn parse_hex4(&mut self, esc_at: usize) -> ParseResult<u32> {
        if self.pos + 4 > self.end {
            return self.fail(esc_at, FailReason::InvalidEscape);
        }
        let slice = &self.bytes[self.pos..self.pos + 4];
        let text = std::str::from_utf8(slice).map_err(|_| ParseOutcome::Failure {
            position: esc_at,
            reason: FailReason::InvalidEscape,
        })?;
        let cp = u32::from_str_radix(text, 16).map_err(|_| ParseOutcome::Failure {
            position: esc_at,
            reason: FailReason::InvalidEscape,
        })?;
        self.pos += 4;
        Ok(cp)
    }

    fn parse_number(&mut self) -> ParseResult<Literal> {
        let start = self.pos;
        if matches!(self.peek(), Some(b'-') | Some(b'+')) {
            self.pos += 1;
        }
        let digits_at = self.pos;
        let mut is_real = false;
        while let Some(c) = self.peek() {
            match c {
                b'0'..=b'9' => self.pos += 1,
                b'.' | b'e' | b'E' => {
                    is_real = true;
                    self.pos += 1;
                }
                b'-' | b'+' if is_real => {
                    // exponent sign; only valid right after e/E, which
                    // str::parse will re-check
                    let prev = self.bytes[self.pos - 1];
                    if prev == b'e' || prev == b'E' {
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
                _ => break,
            }
        }
        if self.pos == digits_at {
            return self.fail(start, FailReason::InvalidNumber);
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii digits");
        if is_real {
            match text.parse::<f64>() {
                Ok(r) if r.is_finite() => Ok(Literal::Real(r)),
                _ => self.fail(start, FailReason::InvalidNumber),
            }
        } else {
            match text.parse::<i64>() {
                Ok(i) => Ok(Literal::Int(i)),
                // integers beyond i64 degrade to reals rather than failing
                Err(_) => match text.parse::<f64>() {
                    Ok(r) if r.is_finite() => Ok(Literal::Real(r)),
                    _ => self.fail(start, FailReason::InvalidNumber),
                },
            }
        }
    }

    fn parse_ident(&mut self) -> String {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == b'_' {
                self.pos += 1;
            } else {
                break;
            }
        }
        String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned()
    }

    /// Tool identifiers additionally allow '.' for namespaced APIs.
    fn parse_tool_ident(&mut self) -> String {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == b'_' || c == b'.' {
                self.pos += 1;
            } else {
                break;
            }
        }
        String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned()
    }
}

fn is_ident_start(c: u8) -> bool {
    c.is_ascii_alphabetic() || c == b'_'
}
