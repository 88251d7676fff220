//! Versioned, digest-checked artifacts in canonical JSON.
//!
//! An artifact file holds one envelope:
//! `{"digest":"0x…","kind":"invariant-store","payload":{…},"schema":1}`.
//! Keys are sorted at every level and integers render without exponent, so
//! each artifact has exactly one byte form. The digest is keccak-256 over the
//! canonical bytes of `payload`.

use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::checker::StreamEntry;
use crate::error::PersistError;
use crate::miner::{InvariantSet, InvariantStore};
use crate::trace::extract::TRACE_SCHEMA;
use crate::trace::ExecutionTrace;
use crate::word::{keccak256, Word};

pub const ENVELOPE_SCHEMA: u64 = 1;

pub const TRACES_EXT: &str = ".traces.ndjson";
pub const STORE_EXT: &str = ".store.json";
pub const REPORTS_EXT: &str = ".reports.ndjson";
pub const MANIFEST_EXT: &str = ".manifest.json";

pub trait Artifact: Serialize + DeserializeOwned {
    const KIND: &'static str;
}

impl Artifact for InvariantStore {
    const KIND: &'static str = "invariant-store";
}

impl Artifact for InvariantSet {
    const KIND: &'static str = "invariant-set";
}

/// Canonical JSON text of any serializable value.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String, PersistError> {
    // serde_json's Map is ordered by key unless `preserve_order` is enabled
    let v = serde_json::to_value(value)?;
    Ok(serde_json::to_string(&v)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEnvelope {
    pub schema: u64,
    pub kind: String,
    pub digest: Word,
    pub payload: serde_json::Value,
}

pub fn save<T: Artifact>(artifact: &T) -> Result<Vec<u8>, PersistError> {
    let payload = serde_json::to_value(artifact)?;
    let digest = keccak256(serde_json::to_string(&payload)?.as_bytes());
    let env = ArtifactEnvelope {
        schema: ENVELOPE_SCHEMA,
        kind: T::KIND.to_string(),
        digest,
        payload,
    };
    let mut out = canonical_json(&env)?.into_bytes();
    out.push(b'\n');
    Ok(out)
}

pub fn load<T: Artifact>(bytes: &[u8]) -> Result<T, PersistError> {
    let raw: serde_json::Value = serde_json::from_slice(bytes)?;
    let schema = raw
        .get("schema")
        .and_then(|s| s.as_u64())
        .ok_or_else(|| PersistError::Invalid("missing schema version".into()))?;
    if schema != ENVELOPE_SCHEMA {
        return Err(PersistError::SchemaUnknown(schema));
    }
    let env: ArtifactEnvelope = serde_json::from_value(raw)?;
    if env.kind != T::KIND {
        return Err(PersistError::KindMismatch {
            expected: T::KIND.to_string(),
            found: env.kind,
        });
    }
    let computed = keccak256(serde_json::to_string(&env.payload)?.as_bytes());
    if computed != env.digest {
        return Err(PersistError::DigestMismatch {
            recorded: env.digest.to_hex(),
            computed: computed.to_hex(),
        });
    }
    Ok(serde_json::from_value(env.payload)?)
}

pub fn traces_to_ndjson(traces: &[ExecutionTrace]) -> String {
    let mut out = String::new();
    for t in traces {
        out.push_str(&t.to_json_line());
        out.push('\n');
    }
    out
}

/// Parses extracted traces, one per non-blank line.
pub fn traces_from_ndjson(text: &str) -> Result<Vec<ExecutionTrace>, PersistError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            let t: ExecutionTrace = serde_json::from_str(l)
                .map_err(|e| PersistError::Invalid(format!("trace line {}: {e}", i + 1)))?;
            if t.schema != TRACE_SCHEMA {
                return Err(PersistError::SchemaUnknown(t.schema as u64));
            }
            Ok(t)
        })
        .collect()
}

pub fn reports_to_ndjson(entries: &[StreamEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&e.to_json_line());
        out.push('\n');
    }
    out
}

/// Record of one CLI run, enough to reproduce it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config: serde_json::Value,
    /// Path to keccak-256 of the file contents.
    pub inputs: BTreeMap<String, Word>,
    pub outputs: BTreeMap<String, Word>,
    pub corpus_digest: Option<Word>,
    /// Phase name to wall time in microseconds.
    pub timings_us: BTreeMap<String, u64>,
}

impl Artifact for RunManifest {
    const KIND: &'static str = "run-manifest";
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_keys_are_sorted() {
        #[derive(Serialize)]
        struct S {
            b: u8,
            a: u8,
        }
        assert_eq!(
            canonical_json(&S { b: 1, a: 2 }).unwrap(),
            r#"{"a":2,"b":1}"#
        );
    }
}
