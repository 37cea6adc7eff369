use rand_pcg::Pcg64;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator for one path, keyed by `(seed, path index)`.
///
/// Streams are decoupled from any parallel scheduling: path `p` always sees
/// the same draws no matter how many workers produce the bundle.
pub fn path_rng(seed: u64, path: u64) -> Pcg64 {
    let a = splitmix64(seed);
    let b = splitmix64(a ^ path);
    let c = splitmix64(b ^ splitmix64(path));
    let state = ((b as u128) << 64) | c as u128;
    // Odd increment selects a distinct PCG stream per path.
    let stream = ((path as u128) << 1) | 1;
    Pcg64::new(state, stream)
}
