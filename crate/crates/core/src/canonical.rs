//! Canonical JSON encoding.
//!
//! Object keys are emitted in ascending byte order, without insignificant
//! whitespace; numbers use serde_json's shortest round-trip form. The output
//! does not depend on how the value was built or on serde_json's map feature
//! flags, so digests over it are stable across processes and builds.

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::envelope::EventEnvelope;

pub fn canonical_bytes(value: &Value) -> Vec<u8> {
    let mut out = Vec::with_capacity(256);
    write_value(value, &mut out);
    out
}

/// Canonical encoding of any serializable value.
pub fn to_canonical_vec<T: Serialize>(value: &T) -> Result<Vec<u8>, serde_json::Error> {
    Ok(canonical_bytes(&serde_json::to_value(value)?))
}

pub fn canonical_serialize(envelope: &EventEnvelope) -> Vec<u8> {
    // envelopes hold only string keys and finite numbers, which always encode
    to_canonical_vec(envelope).expect("event envelope is always representable as JSON")
}

pub fn parse_envelope(bytes: &[u8]) -> Result<EventEnvelope, serde_json::Error> {
    serde_json::from_slice(bytes)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_value(value: &Value, out: &mut Vec<u8>) {
    match value {
        Value::Null => out.extend_from_slice(b"null"),
        Value::Bool(true) => out.extend_from_slice(b"true"),
        Value::Bool(false) => out.extend_from_slice(b"false"),
        Value::Number(n) => out.extend_from_slice(n.to_string().as_bytes()),
        Value::String(s) => write_string(s, out),
        Value::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_value(item, out);
            }
            out.push(b']');
        }
        Value::Object(map) => {
            let mut entries: Vec<_> = map.iter().collect();
            entries.sort_unstable_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
            out.push(b'{');
            for (i, (k, v)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_string(k, out);
                out.push(b':');
                write_value(v, out);
            }
            out.push(b'}');
        }
    }
}

fn write_string(s: &str, out: &mut Vec<u8>) {
    // serde_json's string escaping is already minimal and deterministic
    serde_json::to_writer(&mut *out, s).expect("writing to a Vec cannot fail");
}
