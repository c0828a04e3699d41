//! Stable 64-bit hashing.
//!
//! The mock embedder and the scripted backend both key behavior off a hash of
//! input text. `std`'s default hasher is not stable across releases, so both
//! use FNV-1a, which is fixed by definition and identical on every platform.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over a byte slice.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut state = FNV_OFFSET;
    for &b in bytes {
        state ^= u64::from(b);
        state = state.wrapping_mul(FNV_PRIME);
    }
    state
}

/// FNV-1a over the UTF-8 bytes of a string.
pub fn fnv1a64_str(text: &str) -> u64 {
    fnv1a64(text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_vectors() {
        // Published FNV-1a test vectors.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn deterministic() {
        assert_eq!(fnv1a64_str("video games"), fnv1a64_str("video games"));
        assert_ne!(fnv1a64_str("video games"), fnv1a64_str("video game"));
    }
}
