//! Canonical JSON: object keys sorted, no insignificant whitespace.

use serde::Serialize;
use serde_json::Value;

/// Object keys come out sorted because `serde_json::Map` is a `BTreeMap`
/// (the `preserve_order` feature is never enabled in this workspace).
pub fn to_value<T: Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("store types serialize to JSON")
}

pub fn to_string<T: Serialize>(value: &T) -> String {
    to_value(value).to_string()
}

/// Pretty form for documents meant to be read by people; still key-sorted.
pub fn to_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(&to_value(value)).expect("JSON value serializes");
    s.push('\n');
    s
}
