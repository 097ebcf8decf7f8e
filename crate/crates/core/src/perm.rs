//! Small invertible randomized maps: affine permutations of `[2^k]` over the binary field
//! `GF(2^k)`, a keyed row-shift function, and explicitly stored random permutations.

use rand::RngCore;

use crate::bits::{ceil_log2, keyed_mix, mask, shr};
use crate::seed::below;

/// Low coefficients (without the leading `x^k` term) of the lexicographically least irreducible
/// polynomial of degree `k` over GF(2), for `k = 1..=64`. Entry `k - 1` belongs to degree `k`.
pub const IRREDUCIBLE_LOW: [u64; 64] = [
    0, 3, 3, 3, 5, 3, 3, 27, 3, 9, 5, 9, 27, 33, 3, 43, 9, 9, 39, 9, 5, 3, 33, 27, 9, 27, 39, 3, 5,
    3, 9, 141, 75, 27, 5, 53, 63, 99, 17, 57, 9, 39, 89, 33, 27, 3, 33, 45, 113, 29, 75, 9, 71,
    125, 71, 149, 17, 99, 123, 3, 39, 105, 3, 27,
];

/// Multiplication in `GF(2^k)` modulo the polynomial `x^k + low`.
#[inline]
pub fn gf_mul(mut a: u64, mut b: u64, k: u32, low: u64) -> u64 {
    let top = 1u64 << (k - 1);
    let m = mask(k);
    let mut r = 0;
    while b != 0 {
        if b & 1 == 1 {
            r ^= a;
        }
        b >>= 1;
        let carry = a & top;
        a = (a << 1) & m;
        if carry != 0 {
            a ^= low;
        }
    }
    r
}

/// Multiplicative inverse `a^(2^k - 2)` of a nonzero field element.
pub fn gf_inv(a: u64, k: u32, low: u64) -> u64 {
    debug_assert!(a != 0);
    // 2^k - 2 = 0b11..110: square-and-multiply over k - 1 one bits.
    let mut result = 1u64;
    let mut base = gf_mul(a, a, k, low);
    for _ in 1..k {
        result = gf_mul(result, base, k, low);
        base = gf_mul(base, base, k, low);
    }
    result
}

/// The map `x -> a*x + b` on `[2^k]`, computed in `GF(2^k)`; `a != 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AffinePerm {
    k: u32,
    a: u64,
    b: u64,
    a_inv: u64,
}

impl AffinePerm {
    /// Samples `a` uniformly from the nonzero elements and `b` uniformly.
    ///
    /// Consumes one word for `b` and one word per attempt at `a` (an attempt is rejected only
    /// when it lands on zero).
    pub fn sample<R: RngCore + ?Sized>(k: u32, rng: &mut R) -> Self {
        assert!((1..=64).contains(&k), "field width {k} not in 1..=64");
        let a = loop {
            let a = rng.next_u64() & mask(k);
            if a != 0 {
                break a;
            }
        };
        let b = rng.next_u64() & mask(k);
        Self::from_parts(k, a, b)
    }

    pub fn from_parts(k: u32, a: u64, b: u64) -> Self {
        assert!((1..=64).contains(&k), "field width {k} not in 1..=64");
        assert!(
            a != 0 && a <= mask(k),
            "multiplier must be a nonzero {k}-bit element"
        );
        assert!(b <= mask(k), "offset must be a {k}-bit element");
        let low = IRREDUCIBLE_LOW[k as usize - 1];
        Self {
            k,
            a,
            b,
            a_inv: gf_inv(a, k, low),
        }
    }

    pub fn identity(k: u32) -> Self {
        Self::from_parts(k, 1, 0)
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.k
    }

    #[inline]
    pub fn apply(&self, x: u64) -> u64 {
        debug_assert!(x <= mask(self.k), "{x} outside [2^{}]", self.k);
        gf_mul(self.a, x, self.k, IRREDUCIBLE_LOW[self.k as usize - 1]) ^ self.b
    }

    #[inline]
    pub fn invert(&self, y: u64) -> u64 {
        debug_assert!(y <= mask(self.k), "{y} outside [2^{}]", self.k);
        gf_mul(
            self.a_inv,
            y ^ self.b,
            self.k,
            IRREDUCIBLE_LOW[self.k as usize - 1],
        )
    }

    /// Stored bits: `a`, `b` and the cached inverse of `a`.
    pub fn space_bits(&self) -> u64 {
        3 * self.k as u64
    }

    pub(crate) fn fields(&self) -> [(u64, u32); 3] {
        [(self.a, self.k), (self.b, self.k), (self.a_inv, self.k)]
    }
}

/// Keyed function from row indices to circular shifts in `[columns]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShiftFamily {
    seed: [u64; 2],
    column_bits: u32,
    row_bits: u32,
}

impl ShiftFamily {
    pub const SEED_BITS: u64 = 128;

    pub fn sample<R: RngCore + ?Sized>(columns: u64, row_bits: u32, rng: &mut R) -> Self {
        let seed = [rng.next_u64(), rng.next_u64()];
        Self::with_seed(seed, columns, row_bits)
    }

    pub fn with_seed(seed: [u64; 2], columns: u64, row_bits: u32) -> Self {
        assert!(
            columns.is_power_of_two(),
            "column count must be a power of two"
        );
        Self {
            seed,
            column_bits: ceil_log2(columns),
            row_bits,
        }
    }

    pub fn columns(&self) -> u64 {
        1 << self.column_bits
    }

    #[inline]
    pub fn shift_of_row(&self, row: u64) -> u64 {
        debug_assert!(row <= mask(self.row_bits));
        shr(
            keyed_mix(row, self.seed[0], self.seed[1]),
            64 - self.column_bits,
        )
    }

    pub fn space_bits(&self) -> u64 {
        Self::SEED_BITS
    }

    pub(crate) fn fields(&self) -> [(u64, u32); 2] {
        [(self.seed[0], 64), (self.seed[1], 64)]
    }
}

/// An explicitly tabulated permutation of `[size]`, `size` a power of two.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StoredPerm {
    forward: Vec<u32>,
    inverse: Vec<u32>,
}

impl StoredPerm {
    /// Largest supported table.
    pub const MAX_SIZE: u64 = 1 << 24;

    /// Uniform permutation by Fisher–Yates, drawing indices with [`below`].
    pub fn sample<R: RngCore + ?Sized>(size: u64, rng: &mut R) -> Self {
        Self::check_size(size);
        let mut forward: Vec<u32> = (0..size as u32).collect();
        for i in (1..forward.len()).rev() {
            let j = below(rng, i as u64 + 1) as usize;
            forward.swap(i, j);
        }
        Self::from_forward(forward)
    }

    pub fn identity(size: u64) -> Self {
        Self::check_size(size);
        Self::from_forward((0..size as u32).collect())
    }

    fn check_size(size: u64) {
        assert!(
            size.is_power_of_two() && size <= Self::MAX_SIZE,
            "stored permutation size {size} must be a power of two <= 2^24"
        );
    }

    fn from_forward(forward: Vec<u32>) -> Self {
        let mut inverse = vec![0u32; forward.len()];
        for (i, &f) in forward.iter().enumerate() {
            inverse[f as usize] = i as u32;
        }
        Self { forward, inverse }
    }

    pub fn size(&self) -> u64 {
        self.forward.len() as u64
    }

    #[inline]
    pub fn apply(&self, i: u64) -> u64 {
        self.forward[i as usize] as u64
    }

    #[inline]
    pub fn invert(&self, j: u64) -> u64 {
        self.inverse[j as usize] as u64
    }

    /// Entry width in bits: `lg size`.
    pub fn entry_bits(&self) -> u32 {
        ceil_log2(self.size())
    }

    /// Forward and inverse tables.
    pub fn space_bits(&self) -> u64 {
        2 * self.size() * self.entry_bits() as u64
    }

    pub(crate) fn fields(&self) -> impl Iterator<Item = (u64, u32)> + '_ {
        let w = self.entry_bits();
        self.forward
            .iter()
            .chain(self.inverse.iter())
            .map(move |&v| (v as u64, w))
    }
}
