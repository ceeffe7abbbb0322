//! Fixed workloads shared by the benchmarks in `benches/`.

use deltafair::config::ClientId;
use deltafair::read_cache::{CachePage, CacheState};

/// SplitMix64 step; cheap, deterministic key stream without an RNG dependency.
pub fn mix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A full cache of `n` owners, each with share `f` pages and threshold `rho`.
pub fn warm_cache(n: usize, f: u64, rho: u64, shards: usize) -> CacheState {
    let mut c = CacheState::new(f * n as u64, 1, vec![f; n], shards);
    c.set_thresholds(&vec![rho; n]);
    for i in 0..f * n as u64 {
        let p = CachePage {
            owner: ClientId((i % n as u64) as u32),
            key: i,
        };
        c.admit(p).expect("warm admit");
    }
    c
}

/// Page for access `i`: owners round-robin, keys over twice the share.
pub fn page(i: u64, n: usize, f: u64) -> CachePage {
    let h = mix(i);
    CachePage {
        owner: ClientId((h % n as u64) as u32),
        key: (h >> 16) % (2 * f * n as u64),
    }
}
