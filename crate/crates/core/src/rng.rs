//! Deterministic random streams keyed by (master seed, agent, iteration).
//!
//! Every stochastic draw in a run comes from a ChaCha stream whose seed is a
//! mix of the master seed and a handful of integer tags. A stream's output
//! depends only on its key, never on scheduling order, so client updates may
//! execute sequentially, in any order, or in parallel and still produce
//! bit-identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer: a cheap bijective mix with good avalanche behavior.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a sub-seed from a master seed and an ordered list of tags.
///
/// Distinct tag lists give statistically independent sub-seeds; the same
/// list always gives the same sub-seed.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut state = mix(master ^ 0xd6e8_feb8_6659_fd93);
    for &tag in tags {
        state = mix(state ^ mix(tag));
    }
    state
}

/// Generator expanded from a single 64-bit seed.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// The stream that feeds one (agent, iteration) cell of a run.
pub fn stream(master: u64, agent: u64, iteration: u64) -> ChaCha8Rng {
    seeded(derive_seed(master, &[agent, iteration]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_key_same_sequence() {
        let mut a = stream(7, 3, 11);
        let mut b = stream(7, 3, 11);
        for _ in 0..32 {
            assert_eq!(a.random::<u64>(), b.random::<u64>());
        }
    }

    #[test]
    fn distinct_keys_diverge() {
        let first = |m, a, i| stream(m, a, i).random::<u64>();
        let base = first(7, 3, 11);
        assert_ne!(base, first(8, 3, 11));
        assert_ne!(base, first(7, 4, 11));
        assert_ne!(base, first(7, 3, 12));
        // Tag order matters: (3, 11) and (11, 3) are different cells.
        assert_ne!(first(7, 3, 11), first(7, 11, 3));
    }

    #[test]
    fn derive_seed_is_stable() {
        let s = derive_seed(42, &[1, 2, 3]);
        assert_eq!(s, derive_seed(42, &[1, 2, 3]));
        assert_ne!(s, derive_seed(42, &[1, 2]));
        assert_ne!(s, derive_seed(42, &[3, 2, 1]));
    }

    #[test]
    fn uniform_draws_land_in_unit_interval() {
        let mut rng = seeded(123);
        for _ in 0..1000 {
            let u: f64 = rng.random();
            assert!((0.0..1.0).contains(&u));
        }
    }
}
