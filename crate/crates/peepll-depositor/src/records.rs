//! Dotted-path access into JSON records. QID designation is configuration:
//! which fields count as identifying is application-specific.

use serde_json::Value;

/// Resolves a dotted object path. Returns the identifier bytes for that
/// field: string values as their raw bytes, anything else as compact JSON.
pub fn extract_path(record: &Value, path: &str) -> Option<Vec<u8>> {
    let mut cursor = record;
    for segment in path.split('.') {
        cursor = cursor.as_object()?.get(segment)?;
    }
    Some(match cursor {
        Value::String(s) => s.as_bytes().to_vec(),
        other => other.to_string().into_bytes(),
    })
}

/// Replaces the value at a dotted path. Returns false when the path does not
/// resolve; no other field is touched either way.
pub fn replace_path(record: &mut Value, path: &str, replacement: String) -> bool {
    let mut cursor = record;
    let segments: Vec<&str> = path.split('.').collect();
    for segment in &segments[..segments.len() - 1] {
        match cursor.as_object_mut().and_then(|m| m.get_mut(*segment)) {
            Some(next) => cursor = next,
            None => return false,
        }
    }
    match cursor.as_object_mut() {
        Some(map) => match map.get_mut(*segments.last().unwrap()) {
            Some(slot) => {
                *slot = Value::String(replacement);
                true
            }
            None => false,
        },
        None => false,
    }
}
