//! Word-sized prime moduli with precomputed Barrett and Shoup constants.

/// A modulus below 2^62 with its Barrett constant `floor(4^bits / q)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Modulus {
    value: u64,
    bits: u32,
    barrett: u128,
}

impl Modulus {
    /// Panics unless `2 <= value < 2^62`; callers validate first.
    pub fn new(value: u64) -> Self {
        assert!((2..1 << 62).contains(&value), "modulus {value} out of range");
        let bits = 64 - value.leading_zeros();
        let barrett = (1u128 << (2 * bits)) / value as u128;
        Modulus { value, bits, barrett }
    }

    #[inline]
    pub fn value(&self) -> u64 {
        self.value
    }

    #[inline]
    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Reduces `x < 4^bits`, which covers every product of two residues.
    #[inline]
    pub fn reduce_u128(&self, x: u128) -> u64 {
        let q = self.value as u128;
        let est = ((x >> (self.bits - 1)) * self.barrett) >> (self.bits + 1);
        let mut r = x - est * q;
        while r >= q {
            r -= q;
        }
        r as u64
    }

    #[inline]
    pub fn reduce(&self, x: u64) -> u64 {
        if x < self.value {
            x
        } else {
            x % self.value
        }
    }

    /// Maps a signed integer to its residue.
    #[inline]
    pub fn from_i64(&self, x: i64) -> u64 {
        let r = x.rem_euclid(self.value as i64);
        r as u64
    }

    /// Centered representative in `(-q/2, q/2]`.
    #[inline]
    pub fn center(&self, x: u64) -> i64 {
        if x > self.value / 2 {
            x as i64 - self.value as i64
        } else {
            x as i64
        }
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.value {
            s - self.value
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.value - b
        }
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.value - a
        }
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        self.reduce_u128(a as u128 * b as u128)
    }

    /// `floor(w * 2^64 / q)` for use with [`Modulus::mul_shoup`].
    #[inline]
    pub fn shoup(&self, w: u64) -> u64 {
        (((w as u128) << 64) / self.value as u128) as u64
    }

    /// `a * w mod q` given the Shoup companion of `w`.
    #[inline]
    pub fn mul_shoup(&self, a: u64, w: u64, w_shoup: u64) -> u64 {
        let hi = ((a as u128 * w_shoup as u128) >> 64) as u64;
        let r = a.wrapping_mul(w).wrapping_sub(hi.wrapping_mul(self.value));
        if r >= self.value {
            r - self.value
        } else {
            r
        }
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1 % self.value;
        base = self.reduce(base);
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Inverse by Fermat; only meaningful for prime moduli.
    pub fn inv(&self, a: u64) -> Option<u64> {
        let a = self.reduce(a);
        if a == 0 {
            return None;
        }
        let r = self.pow(a, self.value - 2);
        (self.mul(r, a) == 1).then_some(r)
    }
}

/// Deterministic Miller-Rabin for 64-bit integers.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    let mulmod = |a: u64, b: u64| ((a as u128 * b as u128) % n as u128) as u64;
    let powmod = |mut b: u64, mut e: u64| {
        let mut acc = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                acc = mulmod(acc, b);
            }
            b = mulmod(b, b);
            e >>= 1;
        }
        acc
    };
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = powmod(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mulmod(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const Q60: u64 = 1152921464242716673;

    #[test]
    fn primality_of_presets() {
        assert!(is_prime(97));
        assert!(is_prime(17));
        assert!(is_prime(417793));
        assert!(is_prime(Q60));
        assert!(!is_prime(Q60 - 2));
        assert!(!is_prime(1));
        assert!(!is_prime(561));
    }

    #[test]
    fn inverse_and_pow() {
        let m = Modulus::new(97);
        for a in 1..97 {
            let i = m.inv(a).unwrap();
            assert_eq!(m.mul(a, i), 1);
        }
        assert_eq!(m.inv(0), None);
        assert_eq!(m.pow(5, 96), 1);
    }

    #[test]
    fn center_is_symmetric() {
        let m = Modulus::new(17);
        assert_eq!(m.center(8), 8);
        assert_eq!(m.center(9), -8);
        assert_eq!(m.from_i64(-8), 9);
    }

    proptest! {
        #[test]
        fn barrett_matches_u128_rem(a in 0..Q60, b in 0..Q60) {
            let m = Modulus::new(Q60);
            prop_assert_eq!(m.mul(a, b) as u128, (a as u128 * b as u128) % Q60 as u128);
        }

        #[test]
        fn barrett_small_modulus(a in 0u64..417793, b in 0u64..417793) {
            let m = Modulus::new(417793);
            prop_assert_eq!(m.mul(a, b), a * b % 417793);
        }

        #[test]
        fn shoup_matches(a in 0..Q60, w in 0..Q60) {
            let m = Modulus::new(Q60);
            prop_assert_eq!(m.mul_shoup(a, w, m.shoup(w)), m.mul(a, w));
        }
    }
}
