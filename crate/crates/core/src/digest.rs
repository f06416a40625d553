//! Stable digests of canonical JSON, used to tag every output file so
//! results from different configurations cannot be mixed silently.

/// Canonical serialization: object keys sorted (the default map is ordered),
/// floats in shortest round-trip form.
pub fn canonical_json(value: &serde_json::Value) -> String {
    value.to_string()
}

/// FNV-1a 64-bit hash.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Hex digest of a JSON value's canonical form.
pub fn digest_value(value: &serde_json::Value) -> String {
    format!("{:016x}", fnv1a64(canonical_json(value).as_bytes()))
}
