//! SHA-256 fingerprints for configurations and tensors.

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Hex SHA-256 of `value` serialized as JSON.
///
/// Goes through `serde_json::Value`, whose maps are sorted, so field order
/// does not affect the hash.
pub fn json_hash<T: Serialize + ?Sized>(value: &T) -> String {
    let canonical = serde_json::to_value(value)
        .and_then(|v| serde_json::to_vec(&v))
        .expect("configuration serializes to JSON");
    hex::encode(Sha256::digest(&canonical))
}

/// Hex SHA-256 of the little-endian bytes of `values`.
pub fn f64_hash(values: impl IntoIterator<Item = f64>) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn json_hash_ignores_key_order() {
        let a: HashMap<&str, i32> = [("x", 1), ("y", 2)].into();
        let b: HashMap<&str, i32> = [("y", 2), ("x", 1)].into();
        assert_eq!(json_hash(&a), json_hash(&b));
        assert_eq!(json_hash(&a).len(), 64);
    }

    #[test]
    fn f64_hash_known_value() {
        // sha256 of zero bytes.
        assert_eq!(
            f64_hash([]),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_ne!(f64_hash([0.0]), f64_hash([-0.0]));
    }
}
