//! Additive masking of linear-layer outputs and local truncation of the
//! resulting shares.
//!
//! The cloud holds `s_x = -r mod t`, the proxy decrypts `p_x = x + r mod t`.
//! In truncated mode `r` is drawn from `[2^(m-1), 2^(m+lambda))` so that for
//! `|x| < 2^(m-1)` the sum `x + r` lies in `[0, t)` and never wraps; both
//! sides can then drop the low `f` bits of their share independently.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gc::{GcConfig, GcMode};

pub const DEFAULT_LAMBDA: u32 = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ShareRing {
    ModT(u64),
    Pow2(u32),
}

impl ShareRing {
    pub fn modulus(self) -> u128 {
        match self {
            ShareRing::ModT(t) => t as u128,
            ShareRing::Pow2(b) => 1u128 << b,
        }
    }

    pub fn add(self, a: u64, b: u64) -> u64 {
        ((a as u128 + b as u128) % self.modulus()) as u64
    }

    /// Centered lift of a residue.
    pub fn signed(self, v: u64) -> i64 {
        let m = self.modulus();
        let v = v as u128 % m;
        if v >= m.div_ceil(2) {
            (v as i128 - m as i128) as i64
        } else {
            v as i64
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Side {
    /// Holds `s_x = -r` (and later `s_y`).
    Cloud,
    /// Holds the decrypted `p_x = x + r`.
    Proxy,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ShareVector {
    pub values: Vec<u64>,
    pub ring: ShareRing,
    pub side: Side,
}

impl ShareVector {
    /// `(a + b) mod ring` elementwise, as centered integers.
    pub fn reconstruct(&self, other: &ShareVector) -> Result<Vec<i64>> {
        if self.ring != other.ring || self.values.len() != other.values.len() || self.side == other.side {
            return Err(Error::Mismatch("shares from different rings, sizes or the same side".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| self.ring.signed(self.ring.add(a, b)))
            .collect())
    }
}

/// Distribution of the additive masks of one layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct MaskPlan {
    pub mode: GcMode,
    pub t: u64,
    /// `|x| < 2^(m-1)` for every value the mask hides.
    pub bound_bits: u32,
    /// Statistical slack of the truncated-mode mask; zero in mod-t mode.
    pub lambda: u32,
}

impl MaskPlan {
    /// Picks the largest `lambda <= requested` with `2^(m+lambda) + 2^(m-1) < t`.
    /// The second value is a warning when that is below the request.
    pub fn new(mode: GcMode, t: u64, bound_bits: u32, requested: u32, layer: usize) -> Result<(Self, Option<String>)> {
        if !(2..63).contains(&bound_bits) {
            return Err(Error::Params(format!("bound of {bound_bits} bits")));
        }
        if mode == GcMode::ModT {
            let plan = MaskPlan {
                mode,
                t,
                bound_bits,
                lambda: 0,
            };
            return Ok((plan, None));
        }
        let m = bound_bits;
        let fits = |l: u32| m + l < 63 && (1u64 << (m + l)) + (1u64 << (m - 1)) < t;
        let lambda = (0..=requested).rev().find(|&l| fits(l)).ok_or_else(|| Error::Infeasible {
            layer,
            reason: format!("values of {m} bits leave no mask range below t = {t} (needs 2^m + 2^(m-1) < t)"),
        })?;
        let warning = (lambda < requested).then(|| {
            format!("layer {layer}: mask slack lowered from {requested} to {lambda} bits (bound {m} bits, t = {t})")
        });
        Ok((
            MaskPlan {
                mode,
                t,
                bound_bits,
                lambda,
            },
            warning,
        ))
    }

    /// Half-open range `r` is drawn from.
    pub fn range(&self) -> (u64, u64) {
        match self.mode {
            GcMode::ModT => (0, self.t),
            GcMode::Truncated => (1 << (self.bound_bits - 1), 1 << (self.bound_bits + self.lambda)),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let (lo, hi) = self.range();
        rng.gen_range(lo..hi)
    }

    /// Exclusive upper bound on `x + r` in truncated mode; a decrypted value
    /// at or above it can only come from noise or tampering.
    pub fn masked_limit(&self) -> Option<u64> {
        match self.mode {
            GcMode::ModT => None,
            GcMode::Truncated => Some((1 << (self.bound_bits + self.lambda)) + (1 << (self.bound_bits - 1))),
        }
    }
}

/// `x + r mod t` for a centered `x`.
pub fn mask_value(x: i64, r: u64, t: u64) -> u64 {
    (x.rem_euclid(t as i64) as u64 + r) % t
}

/// The cloud's share `-r mod t`.
pub fn cloud_share(r: u64, t: u64) -> u64 {
    (t - r % t) % t
}

fn low_mask(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

/// Proxy side: `floor(p / 2^f) mod 2^b`.
pub fn truncate_proxy(p: u64, f: u32, b: u32) -> u64 {
    (p >> f) & low_mask(b)
}

/// Cloud side: `-floor(r / 2^f) mod 2^b`.
pub fn truncate_cloud(r: u64, f: u32, b: u32) -> u64 {
    (r >> f).wrapping_neg() & low_mask(b)
}

pub fn low_bits(v: u64, f: u32) -> u64 {
    v & low_mask(f)
}

/// Maps a mod-t share vector to `b = t_bits - f` bits on one side.
pub fn truncate_shares(s: &ShareVector, cfg: &GcConfig) -> Result<ShareVector> {
    let ShareRing::ModT(t) = s.ring else {
        return Err(Error::Mismatch("truncation takes mod-t shares".into()));
    };
    if cfg.mode != GcMode::Truncated || cfg.t != t {
        return Err(Error::Params("truncation needs a truncated-mode config over the same t".into()));
    }
    let values = s
        .values
        .iter()
        .map(|&v| match s.side {
            Side::Proxy => truncate_proxy(v, cfg.f, cfg.b),
            Side::Cloud => truncate_cloud(cloud_share(v, t), cfg.f, cfg.b),
        })
        .collect();
    Ok(ShareVector {
        values,
        ring: ShareRing::Pow2(cfg.b),
        side: s.side,
    })
}

/// Range of the output mask `s_y` such that `y + s_y` stays in `[0, t)` for
/// every `y` in `[-bound, bound]` (signed) or `[0, bound]`.
pub fn output_mask_range(t: u64, bound: u64, signed: bool) -> Result<(u64, u64)> {
    let lo = if signed { bound } else { 0 };
    let hi = t.saturating_sub(bound);
    if lo >= hi {
        return Err(Error::Params(format!("activation bound {bound} leaves no output mask range below t = {t}")));
    }
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn lambda_is_maximal() {
        let (p, w) = MaskPlan::new(GcMode::Truncated, 417_793, 12, 40, 0).unwrap();
        assert_eq!(p.lambda, 6);
        assert!(w.is_some());
        // 2^18 + 2^11 < t <= 2^19 + 2^11, so 6 is the largest slack that fits
        let (p, w) = MaskPlan::new(GcMode::Truncated, 1 << 62, 12, 40, 0).unwrap();
        assert_eq!((p.lambda, w), (40, None));
        assert!(matches!(
            MaskPlan::new(GcMode::Truncated, 417_793, 19, 40, 3),
            Err(Error::Infeasible { layer: 3, .. })
        ));
        assert_eq!(MaskPlan::new(GcMode::ModT, 521, 9, 40, 0).unwrap().0.range(), (0, 521));
    }

    #[test]
    fn zero_shift_keeps_values() {
        let cfg = GcConfig::truncated(521, 0).unwrap();
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(1);
        for _ in 0..200 {
            let r = rng.gen_range(0..521);
            let p = rng.gen_range(0..521);
            let cloud = truncate_shares(
                &ShareVector {
                    values: vec![cloud_share(r, 521)],
                    ring: ShareRing::ModT(521),
                    side: Side::Cloud,
                },
                &cfg,
            )
            .unwrap();
            assert_eq!(truncate_proxy(p, 0, cfg.b), p);
            assert_eq!(cloud.values[0], (1024 - r) % 1024);
        }
    }

    #[test]
    fn signed_lift() {
        assert_eq!(ShareRing::ModT(7).signed(4), -3);
        assert_eq!(ShareRing::ModT(7).signed(3), 3);
        assert_eq!(ShareRing::Pow2(4).signed(8), -8);
        assert_eq!(ShareRing::Pow2(4).signed(7), 7);
    }

    #[test]
    fn output_mask_keeps_sum_below_t() {
        let (lo, hi) = output_mask_range(521, 20, true).unwrap();
        assert!(lo >= 20 && hi + 20 <= 521);
        assert!(output_mask_range(521, 300, true).is_err());
    }
}
