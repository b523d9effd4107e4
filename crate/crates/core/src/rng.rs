//! Seed handling.
//!
//! Every random stream in the crate is a ChaCha8 generator keyed by a master
//! seed. A stream is addressed by a `(domain, index)` pair: the domain tag is
//! mixed into the master seed with SplitMix64 to form the 256-bit key, and the
//! index selects the ChaCha stream under that key. Player `p` of a cohort run
//! with seed `s` therefore always draws from `stream(s, Domain::Player, p)`,
//! regardless of how players are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Sample,
    Gap,
    Calibration,
    Player,
    Split,
    Chain,
}

impl Domain {
    fn tag(self) -> u64 {
        match self {
            Domain::Sample => 0x5341_4d50,
            Domain::Gap => 0x4741_5053,
            Domain::Calibration => 0x4341_4c49,
            Domain::Player => 0x504c_4159,
            Domain::Split => 0x5350_4c54,
            Domain::Chain => 0x4348_4149,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derives a child seed, used when a stream needs to hand seeds further down.
pub fn derive_seed(master: u64, domain: Domain, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ domain.tag()) ^ splitmix64(index))
}

pub fn stream(master: u64, domain: Domain, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(master ^ domain.tag()));
    rng.set_stream(index);
    rng
}
