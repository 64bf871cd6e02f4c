//! Stable hashing for seed derivation and prompt fingerprints.

use sha2::{Digest, Sha256};

/// Derive a sub-seed from a master seed and a path of labels.
///
/// Stable across platforms and releases, unlike `DefaultHasher`.
pub fn derive_seed(master: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("sha256 is 32 bytes"))
}

pub fn hash64(text: &str) -> u64 {
    let out = Sha256::digest(text.as_bytes());
    u64::from_le_bytes(out[..8].try_into().expect("sha256 is 32 bytes"))
}

pub fn hash_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Map a 64-bit hash onto [0, 1).
pub fn unit_interval(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_stable_and_separating() {
        assert_eq!(derive_seed(7, &["a", "b"]), derive_seed(7, &["a", "b"]));
        assert_ne!(derive_seed(7, &["a", "b"]), derive_seed(8, &["a", "b"]));
        // length prefixes keep ("ab","") and ("a","b") apart
        assert_ne!(derive_seed(7, &["ab", ""]), derive_seed(7, &["a", "b"]));
        assert_eq!(hash_hex("").len(), 64);
        let u = unit_interval(u64::MAX);
        assert!((0.0..1.0).contains(&u));
    }
}
