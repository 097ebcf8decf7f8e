//! Word-level helpers and a fixed-width bit-packed array.

/// Low `bits` ones; `bits` may be 64.
#[inline]
pub fn mask(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

/// `x << k`, yielding 0 once every bit has been shifted out.
#[inline]
pub fn shl(x: u64, k: u32) -> u64 {
    if k >= 64 {
        0
    } else {
        x << k
    }
}

/// `x >> k`, yielding 0 once every bit has been shifted out.
#[inline]
pub fn shr(x: u64, k: u32) -> u64 {
    if k >= 64 {
        0
    } else {
        x >> k
    }
}

/// Smallest `k` with `2^k >= x`. `ceil_log2(0) == ceil_log2(1) == 0`.
#[inline]
pub fn ceil_log2(x: u64) -> u32 {
    if x <= 1 {
        0
    } else {
        64 - (x - 1).leading_zeros()
    }
}

/// Bits needed to store any value in `[0, m)`.
#[inline]
pub fn width_for(m: u64) -> u32 {
    ceil_log2(m)
}

/// Largest power of two `<= x`, or 0 for `x == 0`.
#[inline]
pub fn floor_pow2(x: u64) -> u64 {
    if x == 0 {
        0
    } else {
        1u64 << (63 - x.leading_zeros())
    }
}

/// Smallest power of two `>= x` (1 for `x == 0`). Saturates at `2^63`.
#[inline]
pub fn next_pow2(x: u64) -> u64 {
    if x <= 1 {
        1
    } else {
        1u64 << ceil_log2(x).min(63)
    }
}

/// `2^bits` as a `u128`, so that a 64-bit universe is representable.
#[inline]
pub fn pow2_u128(bits: u32) -> u128 {
    1u128 << bits
}

/// `lg x = log2(2 + x)`, the logarithm used for asymptotic model terms; positive for `x >= 0`.
#[inline]
pub fn lg(x: f64) -> f64 {
    (2.0 + x).log2()
}

/// 64-bit finalizer (murmur3 `fmix64` constants).
#[inline]
pub fn fmix64(mut x: u64) -> u64 {
    x ^= x >> 33;
    x = x.wrapping_mul(0xff51_afd7_ed55_8ccd);
    x ^= x >> 33;
    x = x.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    x ^= x >> 33;
    x
}

/// Keyed 64-bit mixer: two finalizer rounds separated by key injection.
#[inline]
pub fn keyed_mix(x: u64, k0: u64, k1: u64) -> u64 {
    let y = fmix64(x ^ k0).wrapping_add(k1);
    fmix64(y.rotate_left(29) ^ k1.rotate_right(17))
}

/// Maps a 64-bit hash uniformly onto `[0, n)` by multiply-high.
#[inline]
pub fn reduce_range(hash: u64, n: u64) -> u64 {
    ((hash as u128 * n as u128) >> 64) as u64
}

/// A fixed-length array of `width`-bit cells packed into 64-bit words.
///
/// `width` may be anything from 0 to 64; a zero-width array stores nothing and reads back 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PackedArray {
    words: Vec<u64>,
    len: usize,
    width: u32,
}

impl PackedArray {
    pub fn new(len: usize, width: u32) -> Self {
        assert!(width <= 64, "cell width {width} exceeds 64 bits");
        let bits = len as u128 * width as u128;
        let words = bits.div_ceil(64) as usize;
        Self {
            words: vec![0; words],
            len,
            width,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    /// Payload bits: `len * width`.
    #[inline]
    pub fn bits(&self) -> u64 {
        self.len as u64 * self.width as u64
    }

    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> u64 {
        debug_assert!(i < self.len, "index {i} out of bounds ({})", self.len);
        if self.width == 0 {
            return 0;
        }
        let bit = i * self.width as usize;
        let (w, off) = (bit / 64, (bit % 64) as u32);
        let lo = self.words[w] >> off;
        let spill = off + self.width;
        let v = if spill > 64 {
            lo | (self.words[w + 1] << (64 - off))
        } else {
            lo
        };
        v & mask(self.width)
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: u64) {
        debug_assert!(i < self.len, "index {i} out of bounds ({})", self.len);
        debug_assert!(
            value <= mask(self.width),
            "value {value} wider than {} bits",
            self.width
        );
        if self.width == 0 {
            return;
        }
        let m = mask(self.width);
        let bit = i * self.width as usize;
        let (w, off) = (bit / 64, (bit % 64) as u32);
        self.words[w] = (self.words[w] & !(m << off)) | (value << off);
        let spill = off + self.width;
        if spill > 64 {
            let hi_bits = spill - 64;
            let hm = mask(hi_bits);
            self.words[w + 1] = (self.words[w + 1] & !hm) | (value >> (64 - off));
        }
    }

    pub fn fill(&mut self, value: u64) {
        for i in 0..self.len {
            self.set(i, value);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }
}
