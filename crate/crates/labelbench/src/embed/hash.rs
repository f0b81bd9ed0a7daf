//! Dependency-free text embedder: L2-normalized character-trigram counts
//! hashed into a fixed number of buckets with FNV-1a. Fully deterministic,
//! so the whole evaluation pipeline can run without any model.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub(super) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Raw (un-normalized) trigram counts of `" " + text + " "` in `dim` buckets.
pub(super) fn trigram_counts(text: &str, dim: usize) -> Vec<f64> {
    let padded: Vec<char> = std::iter::once(' ')
        .chain(text.chars())
        .chain(std::iter::once(' '))
        .collect();
    let mut counts = vec![0.0f64; dim];
    if padded.len() < 3 {
        return counts;
    }
    let mut buf = String::with_capacity(12);
    for window in padded.windows(3) {
        buf.clear();
        buf.extend(window);
        let bucket = (fnv1a64(buf.as_bytes()) % dim as u64) as usize;
        counts[bucket] += 1.0;
    }
    counts
}
