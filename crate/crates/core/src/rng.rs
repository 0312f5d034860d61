//! Counter-based pseudorandom streams.
//!
//! Every random quantity in the crate is a pure function of a 64-bit key
//! and a counter. Keys are derived hierarchically (master seed, purpose tag,
//! replica index, node index, ...) by folding words through the SplitMix64
//! finalizer, so any stream can be re-created from its coordinates without
//! shared state. Output `i` of a stream is `mix64(key + (i + 1) * GOLDEN)`,
//! the SplitMix64 sequence started at `key`.

use rand::RngCore;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer (Stafford variant 13).
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Purpose tags separate streams that share seed and replica coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    TreeNoise = 0x7472_6565,
    GibbsDescent = 0x6769_6262,
    SpineWalk = 0x7370_696e,
    Functional = 0x6675_6e63,
    Test = 0x7465_7374,
}

/// Key of a counter-based stream. Cheap to copy; derive children with
/// [`StreamKey::child`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey(u64);

impl StreamKey {
    pub fn new(master_seed: u64) -> Self {
        StreamKey(mix64(master_seed ^ 0x6470_7472_6565_0001))
    }

    pub fn for_purpose(master_seed: u64, purpose: Purpose) -> Self {
        Self::new(master_seed).child(purpose as u64)
    }

    #[inline]
    pub fn child(self, word: u64) -> Self {
        StreamKey(mix64(self.0 ^ mix64(word.wrapping_add(GOLDEN))))
    }

    pub fn raw(self) -> u64 {
        self.0
    }

    #[inline]
    pub fn stream(self) -> CounterRng {
        CounterRng {
            key: self.0,
            counter: 0,
        }
    }
}

/// A SplitMix64 stream positioned at `counter`.
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    /// Output at an absolute position, independent of the current counter.
    #[inline]
    pub fn at(&self, index: u64) -> u64 {
        mix64(self.key.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN)))
    }

    pub fn position(&self) -> u64 {
        self.counter
    }
}

impl RngCore for CounterRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        let out = self.at(self.counter);
        self.counter = self.counter.wrapping_add(1);
        out
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// Draws from a fixed window of slots `[base, base + len)` of one stream,
/// then continues on a stream keyed by the window end. Gives every vertex
/// its own reproducible randomness without deriving a fresh key per vertex.
#[derive(Debug, Clone)]
pub struct SlotRng {
    key: StreamKey,
    pos: u64,
    end: u64,
    overflow_key: u64,
    overflow_pos: u64,
}

impl SlotRng {
    #[inline]
    pub fn new(key: StreamKey, base: u64, len: u64) -> Self {
        SlotRng {
            key,
            pos: base,
            end: base + len,
            overflow_key: 0,
            overflow_pos: 0,
        }
    }

    #[cold]
    #[inline(never)]
    fn overflow(&mut self) -> u64 {
        if self.overflow_pos == 0 {
            self.overflow_key = self.key.child(self.end).raw();
        }
        let out = mix64(self.overflow_key.wrapping_add((self.overflow_pos + 1).wrapping_mul(GOLDEN)));
        self.overflow_pos += 1;
        out
    }
}

impl RngCore for SlotRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        if self.pos < self.end {
            let out = mix64(self.key.0.wrapping_add(self.pos.wrapping_add(1).wrapping_mul(GOLDEN)));
            self.pos += 1;
            out
        } else {
            self.overflow()
        }
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// Uniform draw on the open interval (0, 1) with 52 bits of resolution.
#[inline]
pub fn open01(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}
