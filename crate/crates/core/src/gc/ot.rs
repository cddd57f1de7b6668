//! Evaluator input-label delivery.
//!
//! `BaseOt` is the Chou–Orlandi 1-of-2 OT over the Ristretto group: the
//! sender publishes `A = aG`; for choice bit `c` the receiver sends
//! `B = bG + cA`; the sender encrypts label `m_0` under `H(aB)` and `m_1`
//! under `H(a(B - A))`; the receiver can only derive `H(bA)`, the key for
//! its own choice. Each sealed label carries a checksum so tampering is caught.
//!
//! `Dealer` stands in for OT in tests: the evaluator reveals its bits to the
//! garbler, which answers with the matching labels. It is not private.

use std::fmt;
use std::str::FromStr;

use curve25519_dalek::constants::RISTRETTO_BASEPOINT_TABLE;
use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::scalar::Scalar;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::garble::{open_row, seal_row, Label, ROW_BYTES};
use crate::error::{Error, Result};

pub const POINT_BYTES: usize = 32;
/// Bytes on the wire per evaluator bit: one point up, two sealed labels down.
pub const OT_BYTES_PER_BIT: usize = POINT_BYTES + 2 * ROW_BYTES;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelDelivery {
    Dealer,
    BaseOt,
}

impl LabelDelivery {
    pub fn name(self) -> &'static str {
        match self {
            LabelDelivery::Dealer => "dealer",
            LabelDelivery::BaseOt => "base_ot",
        }
    }

    /// Online bytes for delivering `bits` evaluator labels.
    pub fn online_bytes(self, bits: usize, label_bytes: usize) -> usize {
        match self {
            LabelDelivery::Dealer => bits * label_bytes,
            LabelDelivery::BaseOt => bits * OT_BYTES_PER_BIT,
        }
    }
}

impl fmt::Display for LabelDelivery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LabelDelivery {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dealer" => Ok(LabelDelivery::Dealer),
            "base_ot" | "base-ot" | "ot" => Ok(LabelDelivery::BaseOt),
            _ => Err(Error::Params(format!("unknown label delivery `{s}`"))),
        }
    }
}

/// Dealer selection: the label of each pair matching the bit.
pub fn dealer_select(pairs: &[(Label, Label)], bits: &[bool]) -> Result<Vec<Label>> {
    if pairs.len() != bits.len() {
        return Err(Error::Mismatch(format!("{} choice bits for {} label pairs", bits.len(), pairs.len())));
    }
    Ok(pairs.iter().zip(bits).map(|(&(l0, l1), &b)| if b { l1 } else { l0 }).collect())
}

fn random_scalar<R: RngCore>(rng: &mut R) -> Scalar {
    let mut wide = [0u8; 64];
    rng.fill_bytes(&mut wide);
    Scalar::from_bytes_mod_order_wide(&wide)
}

fn pad(session: u64, index: usize, b: &[u8; 32], shared: &RistrettoPoint) -> [u8; ROW_BYTES] {
    let mut h = Sha256::new();
    h.update(b"base-ot");
    h.update(session.to_le_bytes());
    h.update((index as u64).to_le_bytes());
    h.update(b);
    h.update(shared.compress().as_bytes());
    let d = h.finalize();
    let mut out = [0u8; ROW_BYTES];
    out.copy_from_slice(&d[..ROW_BYTES]);
    out
}

fn decompress(bytes: &[u8; 32], index: usize) -> Result<RistrettoPoint> {
    CompressedRistretto(*bytes).decompress().ok_or(Error::OtIntegrity { index })
}

pub struct OtSender {
    a: Scalar,
    big_a: RistrettoPoint,
}

impl OtSender {
    pub fn new<R: RngCore>(rng: &mut R) -> Self {
        let a = random_scalar(rng);
        OtSender {
            a,
            big_a: &a * RISTRETTO_BASEPOINT_TABLE,
        }
    }

    pub fn setup_message(&self) -> [u8; 32] {
        self.big_a.compress().to_bytes()
    }

    /// Seals both labels of every pair for the receiver's points.
    pub fn respond(&self, session: u64, points: &[[u8; 32]], pairs: &[(Label, Label)]) -> Result<Vec<[u8; 2 * ROW_BYTES]>> {
        if points.len() != pairs.len() {
            return Err(Error::Mismatch(format!("{} OT requests for {} label pairs", points.len(), pairs.len())));
        }
        points
            .iter()
            .zip(pairs)
            .enumerate()
            .map(|(i, (bytes, &(m0, m1)))| {
                let b = decompress(bytes, i)?;
                let k0 = pad(session, i, bytes, &(self.a * b));
                let k1 = pad(session, i, bytes, &(self.a * (b - self.big_a)));
                let mut out = [0u8; 2 * ROW_BYTES];
                out[..ROW_BYTES].copy_from_slice(&seal_row(m0, &k0));
                out[ROW_BYTES..].copy_from_slice(&seal_row(m1, &k1));
                Ok(out)
            })
            .collect()
    }
}

pub struct OtReceiver {
    big_a: RistrettoPoint,
    choices: Vec<(Scalar, bool, [u8; 32])>,
}

impl OtReceiver {
    /// Returns the receiver state and the points to send.
    pub fn new<R: RngCore>(setup: &[u8; 32], bits: &[bool], rng: &mut R) -> Result<(Self, Vec<[u8; 32]>)> {
        let big_a = decompress(setup, usize::MAX)?;
        let mut points = Vec::with_capacity(bits.len());
        let choices = bits
            .iter()
            .map(|&c| {
                let b = random_scalar(rng);
                let mut p = &b * RISTRETTO_BASEPOINT_TABLE;
                if c {
                    p += big_a;
                }
                let bytes = p.compress().to_bytes();
                points.push(bytes);
                (b, c, bytes)
            })
            .collect();
        Ok((OtReceiver { big_a, choices }, points))
    }

    pub fn finish(&self, session: u64, sealed: &[[u8; 2 * ROW_BYTES]]) -> Result<Vec<Label>> {
        if sealed.len() != self.choices.len() {
            return Err(Error::Mismatch(format!("{} OT replies for {} requests", sealed.len(), self.choices.len())));
        }
        self.choices
            .iter()
            .zip(sealed)
            .enumerate()
            .map(|(i, (&(b, c, ref bytes), s))| {
                let key = pad(session, i, bytes, &(b * self.big_a));
                let half = if c { &s[ROW_BYTES..] } else { &s[..ROW_BYTES] };
                open_row(half, &key).ok_or(Error::OtIntegrity { index: i })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::{rng_from_seed, seed_from_u64};
    use rand::Rng;

    fn pairs(rng: &mut impl Rng, n: usize) -> Vec<(Label, Label)> {
        let delta: Label = rng.gen::<Label>() | 1;
        (0..n)
            .map(|_| {
                let l: Label = rng.gen();
                (l, l ^ delta)
            })
            .collect()
    }

    #[test]
    fn dealer_selects_the_chosen_label() {
        let mut rng = rng_from_seed(seed_from_u64(1));
        let p = pairs(&mut rng, 8);
        let bits: Vec<bool> = (0..8).map(|i| i % 3 == 0).collect();
        let got = dealer_select(&p, &bits).unwrap();
        for i in 0..8 {
            assert_eq!(got[i], if bits[i] { p[i].1 } else { p[i].0 });
        }
        let flipped: Vec<bool> = bits.iter().map(|b| !b).collect();
        let other = dealer_select(&p, &flipped).unwrap();
        assert!(got.iter().zip(&other).all(|(a, b)| a != b));
    }

    #[test]
    fn base_ot_roundtrip_128_bits() {
        let mut rng = rng_from_seed(seed_from_u64(2));
        let p = pairs(&mut rng, 128);
        let bits: Vec<bool> = (0..128).map(|_| rng.gen()).collect();
        let sender = OtSender::new(&mut rng);
        let (recv, points) = OtReceiver::new(&sender.setup_message(), &bits, &mut rng).unwrap();
        let sealed = sender.respond(7, &points, &p).unwrap();
        let labels = recv.finish(7, &sealed).unwrap();
        assert_eq!(labels, dealer_select(&p, &bits).unwrap());
        // the same replies under a flipped choice yield the other label only by redoing the OT
        let flipped: Vec<bool> = bits.iter().map(|b| !b).collect();
        let (recv2, points2) = OtReceiver::new(&sender.setup_message(), &flipped, &mut rng).unwrap();
        let labels2 = recv2.finish(7, &sender.respond(7, &points2, &p).unwrap()).unwrap();
        assert_eq!(labels2, dealer_select(&p, &flipped).unwrap());
    }

    #[test]
    fn tampering_is_detected() {
        let mut rng = rng_from_seed(seed_from_u64(3));
        let p = pairs(&mut rng, 4);
        let bits = [true, false, true, true];
        let sender = OtSender::new(&mut rng);
        let (recv, points) = OtReceiver::new(&sender.setup_message(), &bits, &mut rng).unwrap();
        let mut sealed = sender.respond(1, &points, &p).unwrap();
        sealed[2][ROW_BYTES + 5] ^= 1;
        assert!(matches!(recv.finish(1, &sealed), Err(Error::OtIntegrity { index: 2 })));
        // a reply bound to another session does not open either
        let sealed = sender.respond(2, &points, &p).unwrap();
        assert!(recv.finish(1, &sealed).is_err());
    }
}
