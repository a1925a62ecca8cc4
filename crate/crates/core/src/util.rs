//! Small shared helpers: medians, hashing, number rendering.

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Median with the even-length convention "mean of the two middle values".
/// Returns `None` on an empty slice. NaNs sort last.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// Hex SHA-256 of the canonical JSON rendering of `value`, truncated to
/// `len` hex characters.
pub fn json_hash<T: Serialize + ?Sized>(value: &T, len: usize) -> String {
    let bytes = serde_json::to_vec(value).expect("serializable value");
    let digest = Sha256::digest(&bytes);
    let mut s = hex::encode(digest);
    s.truncate(len);
    s
}

/// Shortest round-trip rendering of an `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:?}")
    } else if v.is_nan() {
        "NaN".to_string()
    } else if v > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
