//! Stable content digests for snapshots, traces, and reports.
//!
//! FNV-1a over a canonical JSON encoding. All digested structures use
//! `BTreeMap`/`BTreeSet` and integer fields, so the byte stream (and thus
//! the digest) is identical across runs and platforms.

use serde::Serialize;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over raw bytes.
pub fn fnv64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Digest of any serializable value, rendered as fixed-width hex.
pub fn digest_of<T: Serialize>(value: &T) -> String {
    let encoded = serde_json::to_vec(value).expect("digest serialization cannot fail");
    format!("{:016x}", fnv64(&encoded))
}
