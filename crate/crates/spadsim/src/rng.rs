//! Counter-based keyed random streams.
//!
//! Every random draw in the simulator comes from a short-lived ChaCha stream
//! whose 256-bit key encodes the master seed and the full coordinate of the
//! draw site: pixel row/column, frame, pulse, and a channel tag separating
//! the different uses within one pulse. Distinct coordinates give independent
//! streams, so results are a pure function of `(seed, coordinates)` and are
//! identical no matter how work is scheduled across threads.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Channel tags keeping draws at the same (pixel, frame, pulse) coordinate
/// statistically independent.
pub mod channel {
    /// Per-frame inter-pixel trigger-skew draw (pulse field is 0).
    pub const SKEW: u8 = 1;
    /// Per-pulse stream: jitter first, then the bin trials in time order.
    pub const PULSE: u8 = 2;
    /// Per-(pixel, image) Gaussian draw of the CRB imaging mode
    /// (frame field carries the image index).
    pub const CRB_NOISE: u8 = 3;
}

/// Coordinate of a draw site.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey {
    pub seed: u64,
    pub row: u32,
    pub col: u32,
    pub frame: u32,
    pub pulse: u32,
    pub channel: u8,
}

impl StreamKey {
    pub fn new(seed: u64, row: u32, col: u32, frame: u32, pulse: u32, channel: u8) -> Self {
        Self {
            seed,
            row,
            col,
            frame,
            pulse,
            channel,
        }
    }

    /// Open the stream for this coordinate.
    pub fn stream(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[0..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..12].copy_from_slice(&self.row.to_le_bytes());
        key[12..16].copy_from_slice(&self.col.to_le_bytes());
        key[16..20].copy_from_slice(&self.frame.to_le_bytes());
        key[20..24].copy_from_slice(&self.pulse.to_le_bytes());
        key[24] = self.channel;
        // Domain separation from any other ChaCha use of the same seed.
        key[25..32].copy_from_slice(b"spadsim");
        ChaCha8Rng::from_seed(key)
    }
}
