//! Named, counter-keyed random streams.
//!
//! Every random draw in a run comes from a stream identified by
//! `(seed, stream, a, b)`; for the filters `a` is the step index and `b` the
//! particle index. Streams are independent ChaCha8 generators, so the result of
//! a run does not depend on the order in which particles are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream families used across the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Truth,
    ObservationNoise,
    ObservationMatrix,
    Prior,
    Propagate,
    Resample,
    Fixture,
    Repetition,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Truth => 0x7472_7574,
            Stream::ObservationNoise => 0x6f62_736e,
            Stream::ObservationMatrix => 0x686d_6174,
            Stream::Prior => 0x7072_696f,
            Stream::Propagate => 0x7072_6f70,
            Stream::Resample => 0x7265_7361,
            Stream::Fixture => 0x6669_7874,
            Stream::Repetition => 0x7265_7065,
        }
    }
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a list of words into one 64-bit key.
pub fn mix(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x243f_6a88_85a3_08d3, |acc, &w| splitmix64(acc ^ splitmix64(w)))
}

/// Factory for keyed generators derived from one run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Streams {
    seed: u64,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn get(&self, stream: Stream, a: u64, b: u64) -> StreamRng {
        let key = mix(&[self.seed, stream.tag(), a, b]);
        let mut bytes = [0u8; 32];
        for (k, chunk) in bytes.chunks_mut(8).enumerate() {
            chunk.copy_from_slice(&splitmix64(key.wrapping_add(k as u64)).to_le_bytes());
        }
        ChaCha8Rng::from_seed(bytes)
    }

    /// A derived factory, e.g. one per benchmark repetition.
    pub fn child(&self, stream: Stream, a: u64, b: u64) -> Streams {
        Streams::new(mix(&[self.seed, stream.tag(), a, b, 0xc41d]))
    }
}
