//! Seed derivation.
//!
//! Training episodes, periodic evaluation and held-out evaluation draw from
//! disjoint seed ranges: training seeds have the top two bits clear,
//! periodic-evaluation seeds start at 2^62 and held-out seeds at 2^63.

/// First seed of the periodic-evaluation range.
pub const PERIODIC_EVAL_BASE: u64 = 1 << 62;
/// First seed of the held-out evaluation range.
pub const HELD_OUT_BASE: u64 = 1 << 63;

const TRAIN_MASK: u64 = (1 << 62) - 1;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent sub-seed for `(master, domain, index)`.
pub fn derive(master: u64, domain: u64, index: u64) -> u64 {
    splitmix(splitmix(splitmix(master) ^ domain) ^ index)
}

pub mod domain {
    pub const GA: u64 = 1;
    pub const CMAES: u64 = 2;
    pub const OPENES: u64 = 3;
    pub const TRAIN_EPISODE: u64 = 10;
}

/// Environment seed for episode `episode` of generation `generation`.
/// Every candidate in a generation sees the same episodes.
pub fn training_episode(master: u64, generation: usize, episode: usize) -> u64 {
    derive(master, domain::TRAIN_EPISODE, ((generation as u64) << 20) | episode as u64) & TRAIN_MASK
}

pub fn periodic_eval_episode(episode: usize) -> u64 {
    PERIODIC_EVAL_BASE + episode as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_are_disjoint() {
        for g in 0..100 {
            for e in 0..4 {
                let s = training_episode(7, g, e);
                assert!(s < PERIODIC_EVAL_BASE);
            }
        }
        assert!(periodic_eval_episode(63) < HELD_OUT_BASE);
        assert_ne!(training_episode(7, 1, 0), training_episode(7, 2, 0));
        assert_ne!(training_episode(7, 1, 0), training_episode(8, 1, 0));
        assert_eq!(derive(1, 2, 3), derive(1, 2, 3));
    }
}
