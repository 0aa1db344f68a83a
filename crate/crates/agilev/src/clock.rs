use std::time::{SystemTime, UNIX_EPOCH};

use agilev_core::Timestamp;

use crate::error::Result;

/// Wall-clock time, overridable with `AGILEV_NOW` (RFC 3339 or Unix seconds)
/// for reproducible runs.
pub fn now() -> Result<Timestamp> {
    if let Ok(s) = std::env::var("AGILEV_NOW") {
        return Ok(s.trim().parse()?);
    }
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs() as i64).unwrap_or(0);
    Ok(Timestamp::from_unix(secs))
}
