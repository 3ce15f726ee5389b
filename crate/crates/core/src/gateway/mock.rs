//! Deterministic offline backend.
//!
//! Replies come from a scripted fixture keyed by a stable hash of the
//! rendered prompt, so a pipeline run against the mock is byte-identical
//! across machines and needs no network.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GatewayError;
use crate::det::sha256_hex;

/// Stable key for a rendered prompt: SHA-256 hex of its UTF-8 bytes.
pub fn prompt_key(prompt: &str) -> String {
    sha256_hex(prompt.as_bytes())
}

/// A scripted prompt→reply map, stored on disk as a JSON object from
/// prompt hash to reply text.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(transparent)]
pub struct MockFixture {
    replies: BTreeMap<String, String>,
}

impl MockFixture {
    pub fn new() -> Self {
        Self::default()
    }

    /// Scripts a reply for a prompt (hashing it internally).
    pub fn script(&mut self, prompt: &str, reply: impl Into<String>) {
        self.replies.insert(prompt_key(prompt), reply.into());
    }

    pub fn lookup(&self, prompt: &str) -> Option<&str> {
        self.replies.get(&prompt_key(prompt)).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.replies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replies.is_empty()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| GatewayError::FixtureIo {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| GatewayError::FixtureJson {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GatewayError> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("fixture serializes");
        std::fs::write(path, text).map_err(|source| GatewayError::FixtureIo {
            path: path.display().to_string(),
            source,
        })
    }
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    fixture: MockFixture,
}

impl MockBackend {
    pub fn new(fixture: MockFixture) -> Self {
        Self { fixture }
    }

    pub fn reply(&self, prompt: &str) -> Result<String, GatewayError> {
        match self.fixture.lookup(prompt) {
            Some(text) => Ok(text.to_string()),
            None => Err(GatewayError::MockReplyMissing {
                hash: prompt_key(prompt),
                preview: prompt.chars().take(80).collect(),
            }),
        }
    }
}
