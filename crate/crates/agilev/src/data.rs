//! Reference data shipped with the binary.

use agilev_core::compliance::MappingSet;

use crate::error::{Result, StoreError};

/// Default clause mappings. Only the ISO 9001 rows carry evidence queries.
pub const DEFAULT_MAPPINGS: &str = include_str!("../data/iso-mappings.json");

pub fn parse_mappings(text: &str, source_name: &str) -> Result<MappingSet> {
    let set: MappingSet =
        serde_json::from_str(text).map_err(|e| StoreError::Parse { source_name: source_name.into(), reason: e.to_string() })?;
    let problems = set.problems();
    if !problems.is_empty() {
        return Err(StoreError::Parse { source_name: source_name.into(), reason: problems.join("; ") });
    }
    Ok(set)
}

pub fn default_mappings() -> MappingSet {
    parse_mappings(DEFAULT_MAPPINGS, "iso-mappings.json").expect("shipped mapping file is valid")
}
