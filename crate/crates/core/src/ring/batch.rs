//! CRT batching between `Z_t^n` and `R_t`.
//!
//! Slots are arranged as two rows of `n/2`. Row 0 slot `i` holds the
//! evaluation at `zeta^(3^i)` and row 1 slot `i` the evaluation at
//! `zeta^(-3^i)`, so the Galois element `3^k` rotates both rows left by `k`
//! and `2n - 1` swaps the rows.

use crate::error::{Error, Result};

use super::ntt::bit_reverse;
use super::poly::{Domain, PolyRing, Polynomial};

/// `n` integers modulo `t`; indices `[0, n/2)` are row 0, the rest row 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlotVector(pub Vec<u64>);

impl SlotVector {
    pub fn zeros(n: usize) -> Self {
        SlotVector(vec![0; n])
    }

    pub fn values(&self) -> &[u64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct BatchEncoder {
    ring: PolyRing,
    // slot index -> position in the bit-reversed NTT output
    index_map: Vec<usize>,
}

impl BatchEncoder {
    pub fn new(t_ring: PolyRing) -> Result<Self> {
        if t_ring.ntt_table().is_none() {
            return Err(Error::Params(format!(
                "t = {} does not support batching at n = {}",
                t_ring.modulus().value(),
                t_ring.degree()
            )));
        }
        let n = t_ring.degree();
        let two_n = 2 * n;
        let bits = n.trailing_zeros();
        let half = n / 2;
        let mut index_map = vec![0usize; n];
        let mut pos = 1usize;
        for i in 0..half {
            let row0 = (pos - 1) / 2;
            let row1 = (two_n - pos - 1) / 2;
            index_map[i] = bit_reverse(row0, bits);
            index_map[half + i] = bit_reverse(row1, bits);
            pos = (pos * 3) % two_n;
        }
        Ok(BatchEncoder { ring: t_ring, index_map })
    }

    pub fn slot_count(&self) -> usize {
        self.ring.degree()
    }

    pub fn plain_modulus(&self) -> u64 {
        self.ring.modulus().value()
    }

    pub fn ring(&self) -> &PolyRing {
        &self.ring
    }

    pub fn encode(&self, v: &SlotVector) -> Result<Polynomial> {
        let n = self.ring.degree();
        let t = self.plain_modulus();
        if v.len() != n {
            return Err(Error::Mismatch(format!("slot vector has {} entries, expected {n}", v.len())));
        }
        if let Some(x) = v.0.iter().find(|&&x| x >= t) {
            return Err(Error::OutOfRange(format!("slot value {x} >= t = {t}")));
        }
        let mut evals = vec![0u64; n];
        for (slot, &value) in v.0.iter().enumerate() {
            evals[self.index_map[slot]] = value;
        }
        let mut p = Polynomial::from_raw(evals, t, Domain::Evaluation);
        self.ring.ntt_inverse_in_place(&mut p)?;
        Ok(p)
    }

    pub fn decode(&self, p: &Polynomial) -> Result<SlotVector> {
        let evals = self.ring.ntt_forward(p)?;
        let e = evals.coeffs();
        Ok(SlotVector(self.index_map.iter().map(|&k| e[k]).collect()))
    }

    /// Encodes signed values, reducing each modulo `t`.
    pub fn encode_signed(&self, values: &[i64]) -> Result<Polynomial> {
        let m = self.ring.modulus();
        self.encode(&SlotVector(values.iter().map(|&x| m.from_i64(x)).collect()))
    }
}
