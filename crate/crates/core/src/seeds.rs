/// Derives an independent 64-bit seed from a base seed and a path of
/// integers (epoch, sample index, ...) with the SplitMix64 finaliser.
pub fn mix_seed(base: u64, parts: &[u64]) -> u64 {
    let mut state = splitmix(base);
    for &p in parts {
        state = splitmix(state ^ splitmix(p.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    }
    state
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
