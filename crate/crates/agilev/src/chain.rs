//! Hash-chained JSON-lines logs.
//!
//! Each line is the canonical JSON object `{"body":…,"hash":…,"prev":…}` with
//! `hash = sha256(prev ‖ canonical(body))` in lowercase hex. The first
//! line's `prev` is the genesis hash, `sha256(schema version)`.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::canonical;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainedLine {
    pub body: Value,
    pub hash: String,
    pub prev: String,
}

pub fn genesis(schema_version: &str) -> String {
    hex::encode(Sha256::digest(schema_version.as_bytes()))
}

pub fn link_hash(prev: &str, body: &Value) -> String {
    let mut h = Sha256::new();
    h.update(prev.as_bytes());
    h.update(body.to_string().as_bytes());
    hex::encode(h.finalize())
}

/// The line (with trailing newline) that appends `body` after `prev`.
pub fn append_line(prev: &str, body: Value) -> (String, String) {
    let hash = link_hash(prev, &body);
    let line = ChainedLine { body, hash: hash.clone(), prev: prev.into() };
    let mut s = canonical::to_string(&line);
    s.push('\n');
    (s, hash)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainFault {
    /// Zero-based line index.
    pub line: usize,
    pub reason: String,
}

/// Verifies every line and returns the bodies with the head hash.
pub fn verify(text: &[u8], genesis: &str) -> Result<(Vec<Value>, String), ChainFault> {
    let fault = |line, reason: &str| ChainFault { line, reason: reason.into() };
    let text = std::str::from_utf8(text).map_err(|e| {
        let line = text[..e.valid_up_to()].iter().filter(|b| **b == b'\n').count();
        fault(line, "invalid UTF-8")
    })?;
    if !text.is_empty() && !text.ends_with('\n') {
        let line = text.matches('\n').count();
        return Err(fault(line, "missing final newline"));
    }
    let mut prev = genesis.to_string();
    let mut bodies = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let parsed: ChainedLine = serde_json::from_str(raw).map_err(|e| fault(i, &format!("unparseable: {e}")))?;
        if canonical::to_string(&parsed) != raw {
            return Err(fault(i, "not in canonical form"));
        }
        if parsed.prev != prev {
            return Err(fault(i, "prev does not match the preceding hash"));
        }
        if link_hash(&prev, &parsed.body) != parsed.hash {
            return Err(fault(i, "hash mismatch"));
        }
        prev = parsed.hash;
        bodies.push(parsed.body);
    }
    Ok((bodies, prev))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn log(n: usize) -> Vec<u8> {
        let mut prev = genesis("v");
        let mut out = String::new();
        for i in 0..n {
            let (line, h) = append_line(&prev, json!({"seq": i, "who": "lead"}));
            out.push_str(&line);
            prev = h;
        }
        out.into_bytes()
    }

    #[test]
    fn verifies_and_reports_head() {
        let bytes = log(3);
        let (bodies, head) = verify(&bytes, &genesis("v")).unwrap();
        assert_eq!(bodies.len(), 3);
        assert_eq!(head.len(), 64);
        assert_eq!(verify(b"", &genesis("v")).unwrap().1, genesis("v"));
    }

    #[test]
    fn wrong_genesis_fails_first_line() {
        assert_eq!(verify(&log(2), &genesis("other")).unwrap_err().line, 0);
    }

    #[test]
    fn dropped_line_is_detected() {
        let text = String::from_utf8(log(3)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let cut = format!("{}\n{}\n", lines[0], lines[2]);
        assert_eq!(verify(cut.as_bytes(), &genesis("v")).unwrap_err().line, 1);
    }
}
