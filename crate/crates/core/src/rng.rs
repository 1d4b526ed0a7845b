//! Counter-based draw streams for shot execution.
//!
//! Each shot owns an independent ChaCha stream selected by `(seed, shot_index)`;
//! the n-th draw of a shot is the n-th word pair of that stream. Shots can run
//! in any order or on any thread and still produce bit-identical records.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct ShotStream {
    rng: ChaCha8Rng,
    ordinal: u64,
}

impl ShotStream {
    pub fn new(seed: u64, shot_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(shot_index);
        Self { rng, ordinal: 0 }
    }

    /// Next uniform draw in `[0, 1)`.
    pub fn next_draw(&mut self) -> f64 {
        self.ordinal += 1;
        self.rng.random::<f64>()
    }

    /// Number of draws consumed so far.
    pub fn ordinal(&self) -> u64 {
        self.ordinal
    }
}
