//! Canonical JSON rendering shared by the CLI files and the HTTP bodies.
//!
//! Floats use the shortest representation that parses back to the same
//! `f64`, so a document read and re-written is byte-identical.

use serde::de::DeserializeOwned;
use serde::Serialize;

/// Pretty-printed JSON with a trailing newline.
pub fn to_string<T: Serialize + ?Sized>(value: &T) -> String {
    let mut out = serde_json::to_string_pretty(value).expect("in-memory serialization cannot fail");
    out.push('\n');
    out
}

pub fn from_str<T: DeserializeOwned>(text: &str) -> serde_json::Result<T> {
    serde_json::from_str(text)
}

/// Lowercase hex SHA-256 of `bytes`, truncated to `len` characters.
pub fn fingerprint(bytes: &[u8], len: usize) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(bytes);
    let mut hex = hex::encode(digest);
    hex.truncate(len);
    hex
}
