//! Adaptive binary range coder with carry propagation through a cached byte.

const PROB_BITS: u32 = 15;
const PROB_ONE: u16 = 1 << PROB_BITS;
const ADAPT_SHIFT: u32 = 5;
const TOP: u32 = 1 << 24;

/// Probability that the next bit is 0, adapted after every coded bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BitModel(u16);

impl Default for BitModel {
    fn default() -> Self {
        BitModel(PROB_ONE / 2)
    }
}

impl BitModel {
    #[inline]
    fn update(&mut self, bit: bool) {
        if bit {
            self.0 -= self.0 >> ADAPT_SHIFT;
        } else {
            self.0 += (PROB_ONE - self.0) >> ADAPT_SHIFT;
        }
    }
}

pub struct Encoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
}

impl Default for Encoder {
    fn default() -> Self {
        Self::new()
    }
}

impl Encoder {
    pub fn new() -> Self {
        Encoder { low: 0, range: u32::MAX, cache: 0, cache_size: 1, out: Vec::new() }
    }

    #[inline]
    pub fn encode(&mut self, bit: bool, model: &mut BitModel) {
        let bound = (self.range >> PROB_BITS) * u32::from(model.0);
        if bit {
            self.low += u64::from(bound);
            self.range -= bound;
        } else {
            self.range = bound;
        }
        model.update(bit);
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    /// Equiprobable bits, most significant first.
    pub fn encode_direct(&mut self, value: u32, bits: u32) {
        for i in (0..bits).rev() {
            self.range >>= 1;
            if (value >> i) & 1 == 1 {
                self.low += u64::from(self.range);
            }
            while self.range < TOP {
                self.range <<= 8;
                self.shift_low();
            }
        }
    }

    fn shift_low(&mut self) {
        if self.low < 0xFF00_0000 || self.low > 0xFFFF_FFFF {
            let carry = (self.low >> 32) as u8;
            let mut temp = self.cache;
            loop {
                self.out.push(temp.wrapping_add(carry));
                temp = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = ((self.low >> 24) & 0xFF) as u8;
        }
        self.cache_size += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

pub struct Decoder<'a> {
    data: &'a [u8],
    pos: usize,
    code: u32,
    range: u32,
    overrun: usize,
}

/// Bytes the decoder may read past the end before the stream is declared
/// desynchronized (the encoder flush always emits them).
const OVERRUN_SLACK: usize = 4;

impl<'a> Decoder<'a> {
    pub fn new(data: &'a [u8]) -> Option<Self> {
        // The first byte of every stream is the initial cache, always zero.
        if data.len() < 5 || data[0] != 0 {
            return None;
        }
        let code = u32::from_be_bytes(data[1..5].try_into().unwrap());
        Some(Decoder { data, pos: 5, code, range: u32::MAX, overrun: 0 })
    }

    #[inline]
    fn next_byte(&mut self) -> u8 {
        match self.data.get(self.pos) {
            Some(&b) => {
                self.pos += 1;
                b
            }
            None => {
                self.overrun += 1;
                0
            }
        }
    }

    #[inline]
    pub fn decode(&mut self, model: &mut BitModel) -> bool {
        let bound = (self.range >> PROB_BITS) * u32::from(model.0);
        let bit = if self.code < bound {
            self.range = bound;
            false
        } else {
            self.code -= bound;
            self.range -= bound;
            true
        };
        model.update(bit);
        while self.range < TOP {
            self.range <<= 8;
            self.code = (self.code << 8) | u32::from(self.next_byte());
        }
        bit
    }

    pub fn decode_direct(&mut self, bits: u32) -> u32 {
        let mut v = 0u32;
        for _ in 0..bits {
            self.range >>= 1;
            let bit = if self.code >= self.range {
                self.code -= self.range;
                1
            } else {
                0
            };
            v = (v << 1) | bit;
            while self.range < TOP {
                self.range <<= 8;
                self.code = (self.code << 8) | u32::from(self.next_byte());
            }
        }
        v
    }

    /// True once the decoder has consumed more input than any valid stream
    /// of this length could provide.
    pub fn desynced(&self) -> bool {
        self.overrun > OVERRUN_SLACK
    }

    pub fn fully_consumed(&self) -> bool {
        self.pos >= self.data.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trips_mixed_symbols(bits in prop::collection::vec(any::<bool>(), 0..2000),
                                     raw in prop::collection::vec(0u32..(1 << 12), 0..50)) {
            let mut enc = Encoder::new();
            let mut models = [BitModel::default(); 4];
            for (i, &b) in bits.iter().enumerate() {
                enc.encode(b, &mut models[i % 4]);
            }
            for &r in &raw {
                enc.encode_direct(r, 12);
            }
            let bytes = enc.finish();
            let mut dec = Decoder::new(&bytes).unwrap();
            let mut models = [BitModel::default(); 4];
            for (i, &b) in bits.iter().enumerate() {
                prop_assert_eq!(dec.decode(&mut models[i % 4]), b);
            }
            for &r in &raw {
                prop_assert_eq!(dec.decode_direct(12), r);
            }
            prop_assert!(!dec.desynced());
        }
    }

    #[test]
    fn skewed_source_compresses() {
        let mut enc = Encoder::new();
        let mut m = BitModel::default();
        for i in 0..100_000 {
            enc.encode(i % 1000 == 0, &mut m);
        }
        let n = enc.finish().len();
        // Entropy of p = 0.001 is about 0.0114 bits/symbol, i.e. ~143 bytes.
        assert!(n < 400, "{n} bytes");
    }
}
