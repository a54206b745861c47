//! Deterministic seed table: every dataset and every sampler run gets a seed
//! derived from the master seed and its coordinates, so results do not depend
//! on execution order.

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `coords` into `master` one coordinate at a time.
pub fn derive(master: u64, coords: &[u64]) -> u64 {
    coords.iter().fold(mix(master), |acc, &c| mix(acc ^ mix(c)))
}

/// Stream tags separating the roles a seed can play.
pub mod stream {
    pub const CALIBRATION_DATA: u64 = 1;
    pub const BENCHMARK_DATA: u64 = 2;
    pub const SAMPLER: u64 = 3;
    pub const CONSISTENCY_DATA: u64 = 4;
}

/// Seed for the noise of replication `rep` of function `function`; shared
/// across tests so every test sees the same datasets.
pub fn data_seed(master: u64, stream: u64, function: u64, rep: u64) -> u64 {
    derive(master, &[stream, function, rep])
}

/// Seed for the sampler of `test` on a given dataset.
pub fn sampler_seed(master: u64, test: u64, data_seed: u64) -> u64 {
    derive(master, &[stream::SAMPLER, test, data_seed])
}
