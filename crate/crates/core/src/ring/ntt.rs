//! Negacyclic number-theoretic transform over `Z_q[x]/(x^n + 1)`.
//!
//! The forward transform consumes coefficients in natural order and leaves
//! evaluations in bit-reversed order: output `k` is `p(psi^(2*brv(k) + 1))`
//! where `psi` is the chosen primitive `2n`-th root of unity.

use crate::error::{Error, Result};

use super::modulus::Modulus;

#[derive(Clone, Debug)]
pub struct NttTable {
    n: usize,
    modulus: Modulus,
    psi: u64,
    // psi^brv(i), bit-reversed over log2(n) bits, with Shoup companions
    roots: Vec<u64>,
    roots_shoup: Vec<u64>,
    inv_roots: Vec<u64>,
    inv_roots_shoup: Vec<u64>,
    n_inv: u64,
    n_inv_shoup: u64,
}

pub(crate) fn bit_reverse(x: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        x.reverse_bits() >> (usize::BITS - bits)
    }
}

/// Smallest primitive `2n`-th root of unity modulo a prime `q`.
pub fn primitive_root_2n(n: usize, modulus: &Modulus) -> Option<u64> {
    let q = modulus.value();
    let order = 2 * n as u64;
    if !(q - 1).is_multiple_of(order) {
        return None;
    }
    let cofactor = (q - 1) / order;
    let mut best: Option<u64> = None;
    for g in 2..q.min(1 << 16) {
        let r = modulus.pow(g, cofactor);
        // order is a power of two, so r has order exactly 2n iff r^n = -1
        if modulus.pow(r, n as u64) == q - 1 {
            // all primitive roots are odd powers of r; take the minimum
            let r2 = modulus.mul(r, r);
            let mut cur = r;
            let mut min = r;
            for _ in 0..n {
                min = min.min(cur);
                cur = modulus.mul(cur, r2);
            }
            best = Some(min);
            break;
        }
    }
    best
}

impl NttTable {
    pub fn new(n: usize, modulus: Modulus) -> Result<Self> {
        if !n.is_power_of_two() || n < 2 {
            return Err(Error::Params(format!("ring degree {n} is not a power of two >= 2")));
        }
        let psi = primitive_root_2n(n, &modulus).ok_or_else(|| {
            Error::Params(format!(
                "modulus {} has no primitive {}-th root of unity",
                modulus.value(),
                2 * n
            ))
        })?;
        let psi_inv = modulus.inv(psi).expect("root is invertible");
        let bits = n.trailing_zeros();
        let mut roots = vec![0u64; n];
        let mut inv_roots = vec![0u64; n];
        let mut pw = 1u64;
        let mut ipw = 1u64;
        for i in 0..n {
            let r = bit_reverse(i, bits);
            roots[r] = pw;
            inv_roots[r] = ipw;
            pw = modulus.mul(pw, psi);
            ipw = modulus.mul(ipw, psi_inv);
        }
        let roots_shoup = roots.iter().map(|&w| modulus.shoup(w)).collect();
        let inv_roots_shoup = inv_roots.iter().map(|&w| modulus.shoup(w)).collect();
        let n_inv = modulus.inv(n as u64).expect("n invertible mod prime q");
        Ok(NttTable {
            n,
            modulus,
            psi,
            roots,
            roots_shoup,
            inv_roots,
            inv_roots_shoup,
            n_inv,
            n_inv_shoup: modulus.shoup(n_inv),
        })
    }

    pub fn degree(&self) -> usize {
        self.n
    }

    pub fn modulus(&self) -> &Modulus {
        &self.modulus
    }

    pub fn psi(&self) -> u64 {
        self.psi
    }

    /// In-place Cooley-Tukey pass; natural order in, bit-reversed out.
    pub fn forward(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let m = &self.modulus;
        let q = m.value();
        let mut t = self.n;
        let mut blocks = 1;
        while blocks < self.n {
            t >>= 1;
            for i in 0..blocks {
                let w = self.roots[blocks + i];
                let ws = self.roots_shoup[blocks + i];
                let start = 2 * i * t;
                let (lo, hi) = a[start..start + 2 * t].split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let u = *x;
                    let v = m.mul_shoup(*y, w, ws);
                    let s = u + v;
                    *x = if s >= q { s - q } else { s };
                    *y = if u >= v { u - v } else { u + q - v };
                }
            }
            blocks <<= 1;
        }
    }

    /// In-place Gentleman-Sande pass; bit-reversed in, natural order out.
    pub fn inverse(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let m = &self.modulus;
        let q = m.value();
        let mut t = 1;
        let mut blocks = self.n;
        while blocks > 1 {
            let half = blocks >> 1;
            for i in 0..half {
                let w = self.inv_roots[half + i];
                let ws = self.inv_roots_shoup[half + i];
                let start = 2 * i * t;
                let (lo, hi) = a[start..start + 2 * t].split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let u = *x;
                    let v = *y;
                    let s = u + v;
                    *x = if s >= q { s - q } else { s };
                    let d = if u >= v { u - v } else { u + q - v };
                    *y = m.mul_shoup(d, w, ws);
                }
            }
            t <<= 1;
            blocks = half;
        }
        for x in a.iter_mut() {
            *x = m.mul_shoup(*x, self.n_inv, self.n_inv_shoup);
        }
    }

    /// Exponent `e` (odd, in `[1, 2n)`) at which forward output `k` evaluates.
    pub fn evaluation_exponent(&self, k: usize) -> usize {
        2 * bit_reverse(k, self.n.trailing_zeros()) + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn eval_at(p: &[u64], x: u64, m: &Modulus) -> u64 {
        p.iter().rev().fold(0, |acc, &c| m.add(m.mul(acc, x), c))
    }

    #[test]
    fn forward_outputs_are_odd_power_evaluations() {
        let m = Modulus::new(97);
        let table = NttTable::new(8, m).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let p: Vec<u64> = (0..8).map(|_| rng.gen_range(0..97)).collect();
        let mut a = p.clone();
        table.forward(&mut a);
        for (k, &v) in a.iter().enumerate() {
            let e = table.evaluation_exponent(k) as u64;
            assert_eq!(v, eval_at(&p, m.pow(table.psi(), e), &m));
        }
    }

    #[test]
    fn zero_maps_to_zero() {
        let table = NttTable::new(8, Modulus::new(97)).unwrap();
        let mut a = vec![0u64; 8];
        table.forward(&mut a);
        assert!(a.iter().all(|&x| x == 0));
    }

    #[test]
    fn roundtrip_random() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for (n, q) in [(8usize, 97u64), (4, 17), (2048, 1152921464242716673), (1024, 12289)] {
            let table = NttTable::new(n, Modulus::new(q)).unwrap();
            for _ in 0..20 {
                let p: Vec<u64> = (0..n).map(|_| rng.gen_range(0..q)).collect();
                let mut a = p.clone();
                table.forward(&mut a);
                table.inverse(&mut a);
                assert_eq!(a, p);
            }
        }
    }

    #[test]
    fn rejects_modulus_without_root() {
        // 13 - 1 = 12 is not divisible by 16
        assert!(matches!(NttTable::new(8, Modulus::new(13)), Err(Error::Params(_))));
        assert!(NttTable::new(6, Modulus::new(97)).is_err());
    }
}
