//! Analytic sub-Gaussian noise estimates and decomposition-base selection.
//!
//! Estimates are sub-Gaussian parameters; an infinity-norm bound is the
//! parameter times a tail factor (6 by default).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ring::{digit_count, RingParams};

pub const DEFAULT_TAIL_FACTOR: f64 = 6.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvVariant {
    /// Rotate, then multiply: key-switching noise is amplified by the plaintext.
    Gazelle,
    /// Multiply, then rotate: key-switching noise is added after amplification.
    Cheetah,
}

impl ConvVariant {
    pub fn name(self) -> &'static str {
        match self {
            ConvVariant::Gazelle => "gazelle",
            ConvVariant::Cheetah => "cheetah",
        }
    }
}

impl std::str::FromStr for ConvVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gazelle" => Ok(ConvVariant::Gazelle),
            "cheetah" => Ok(ConvVariant::Cheetah),
            other => Err(Error::Params(format!("unknown convolution variant {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseEstimate {
    pub subgaussian: f64,
    pub inf_norm_bound: f64,
    pub budget_bits: f64,
}

/// Shape of a linear layer as the noise model sees it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearShape {
    /// Kernel elements per channel pair, `f_w^2`.
    pub taps: usize,
    pub c_in: usize,
    /// Whether any rotation (and so any key switch) is performed.
    pub rotates: bool,
}

impl LinearShape {
    pub fn conv(c_in: usize, kernel: usize) -> Self {
        LinearShape {
            taps: kernel * kernel,
            c_in,
            rotates: kernel > 1 || c_in > 1,
        }
    }

    /// A diagonal-packed product over `dim` diagonals of one input.
    pub fn fc(dim: usize) -> Self {
        LinearShape {
            taps: dim,
            c_in: 1,
            rotates: dim > 1,
        }
    }
}

/// Work that lands in one output ciphertext of a stage, as the session
/// plans it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageLoad {
    /// Plaintext products summed into the output.
    pub terms: usize,
    /// Galois automorphisms whose key-switching noise lands in the output.
    pub automorphisms: usize,
    /// `sum_g u_g^2` over Galois elements `g` used `u_g` times. Digits in
    /// `[0, w)` have mean `w / 2`, so the error of a key that is used again
    /// and again adds up coherently rather than in quadrature.
    pub repeated_uses: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bases {
    pub w_a: u64,
    pub w_sw: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub params: RingParams,
    pub tail_factor: f64,
}

/// One row of a per-layer noise report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub layer: usize,
    pub variant: ConvVariant,
    pub estimate_bits: f64,
    pub budget_bits: f64,
}

impl NoiseModel {
    pub fn new(params: RingParams) -> Self {
        NoiseModel {
            params,
            tail_factor: DEFAULT_TAIL_FACTOR,
        }
    }

    /// Per-coefficient error bound `B = tail * sigma`.
    pub fn error_bound(&self) -> f64 {
        self.tail_factor * self.params.sigma
    }

    /// `log2(q / 2t)`.
    pub fn capacity_bits(&self) -> f64 {
        (self.params.q as f64 / (2.0 * self.params.t as f64)).log2()
    }

    pub fn estimate(&self, subgaussian: f64) -> NoiseEstimate {
        self.with_bound(subgaussian, self.tail_factor * subgaussian)
    }

    fn with_bound(&self, subgaussian: f64, bound: f64) -> NoiseEstimate {
        NoiseEstimate {
            subgaussian,
            inf_norm_bound: bound,
            budget_bits: self.capacity_bits() - bound.max(1.0).log2(),
        }
    }

    /// `sqrt(2n) sigma`.
    pub fn fresh_noise(&self) -> NoiseEstimate {
        self.estimate((2.0 * self.params.n as f64).sqrt() * self.params.sigma)
    }

    /// Scales by `sqrt(n) t / 2`.
    pub fn pmult_amplification(&self, est: NoiseEstimate) -> NoiseEstimate {
        let n = self.params.n as f64;
        self.estimate(est.subgaussian * n.sqrt() * self.params.t as f64 / 2.0)
    }

    /// Additive term `sqrt(l_A n) sigma w_A / 2` of one automorphism.
    pub fn automorphism_noise(&self, w_a: u64) -> NoiseEstimate {
        let l = digit_count(self.params.q, w_a) as f64;
        let n = self.params.n as f64;
        self.estimate((l * n).sqrt() * self.params.sigma * w_a as f64 / 2.0)
    }

    /// Output noise of a convolution layer:
    /// `f_w^2 sqrt(c_i) sqrt(2 + K) (t/2) n sigma` with `K = w_A^2 l_A / 4`
    /// (gazelle) or `w_A^2 l_A / (t^2 n)` (cheetah); `K = 0` when the layer
    /// performs no rotation.
    pub fn conv_output_noise(&self, shape: LinearShape, w_a: u64, variant: ConvVariant) -> NoiseEstimate {
        let n = self.params.n as f64;
        let t = self.params.t as f64;
        let k = if shape.rotates {
            let wa = w_a as f64;
            let l = digit_count(self.params.q, w_a) as f64;
            match variant {
                ConvVariant::Gazelle => wa * wa * l / 4.0,
                ConvVariant::Cheetah => wa * wa * l / (t * t * n),
            }
        } else {
            0.0
        };
        let param = shape.taps as f64 * (shape.c_in as f64).sqrt() * (2.0 + k).sqrt() * (t / 2.0) * n * self.params.sigma;
        self.estimate(param)
    }

    /// Additive bound `l_SW w_SW B n / 2` of re-encryption.
    pub fn keyswitch_noise(&self, w_sw: u64) -> f64 {
        let l = digit_count(self.params.q, w_sw) as f64;
        l * w_sw as f64 * self.error_bound() * self.params.n as f64 / 2.0
    }

    /// Bound after the first layer: its convolution estimate plus the
    /// re-encryption term.
    pub fn first_layer_noise(&self, shape: LinearShape, w_a: u64, w_sw: u64, variant: ConvVariant) -> NoiseEstimate {
        let conv = self.conv_output_noise(shape, w_a, variant);
        self.with_bound(conv.subgaussian, conv.inf_norm_bound + self.keyswitch_noise(w_sw))
    }

    fn powers_of_two_below_q(&self) -> impl Iterator<Item = u64> {
        let top = 63 - self.params.q.leading_zeros();
        let top = if 1u64 << top == self.params.q { top - 1 } else { top };
        (1..=top).rev().map(|k| 1u64 << k)
    }

    /// Largest power-of-two automorphism base keeping every layer at least
    /// `margin_bits` inside the budget; the first layer also carries the
    /// re-encryption term, whose base is the largest power of two that
    /// consumes under a quarter of what that layer leaves.
    pub fn select_bases(&self, network: &[LinearShape], margin_bits: f64, variant: ConvVariant) -> Result<Bases> {
        if network.is_empty() {
            return Err(Error::Params("no linear layers to plan".into()));
        }
        let feasible = |w_a: u64| {
            network
                .iter()
                .all(|&s| self.conv_output_noise(s, w_a, variant).budget_bits >= margin_bits)
        };
        let w_a = match self.powers_of_two_below_q().find(|&w| feasible(w)) {
            Some(w) => w,
            None => {
                let (layer, est) = network
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| (i, self.conv_output_noise(s, 2, variant)))
                    .find(|(_, e)| e.budget_bits < margin_bits)
                    .expect("some layer is infeasible");
                return Err(Error::Infeasible {
                    layer,
                    reason: format!(
                        "{} estimate leaves {:.2} bits at the smallest base, below the {margin_bits:.2}-bit margin",
                        variant.name(),
                        est.budget_bits
                    ),
                });
            }
        };
        let first = self.conv_output_noise(network[0], w_a, variant);
        let w_sw = self
            .powers_of_two_below_q()
            .find(|&w| {
                let after = self.first_layer_noise(network[0], w_a, w, variant).budget_bits;
                after >= margin_bits && after >= 0.75 * first.budget_bits
            })
            .ok_or_else(|| Error::Infeasible {
                layer: 0,
                reason: "no re-encryption base fits the remaining budget".into(),
            })?;
        Ok(Bases { w_a, w_sw })
    }

    /// Variance-based estimate of one homomorphic stage as executed: `terms`
    /// plaintext products of fresh ciphertexts, the key switches of every
    /// automorphism, and optionally the re-encryption. Unlike the Table 1
    /// bound this counts each automorphism a log-keys rotation composes and
    /// the coherent part of repeated keys, so it applies to dense layers too.
    pub fn stage_noise(&self, load: StageLoad, w_a: u64, variant: ConvVariant, w_sw: Option<u64>) -> NoiseEstimate {
        let n = self.params.n as f64;
        let t = self.params.t as f64;
        let var_e = self.params.sigma * self.params.sigma;
        // plaintext coefficients lie in [0, t)
        let pt = n * t * t / 3.0;
        let products = load.terms as f64 * (pt * var_e + n * t * t / 9.0);
        // a digit is its mean w/2 plus a centred part of variance w^2/12
        let per_digit = |w: u64| digit_count(self.params.q, w) as f64 * n * var_e * (w as f64).powi(2);
        let mut rotations = per_digit(w_a) * (load.automorphisms as f64 / 12.0 + load.repeated_uses as f64 / 4.0);
        if variant == ConvVariant::Gazelle {
            rotations *= pt;
        }
        let reencrypt = w_sw.map_or(0.0, |w| per_digit(w) / 3.0);
        self.estimate((products + rotations + reencrypt).sqrt())
    }

    /// Bases for a session: the largest `w_A` for which every stage's
    /// [`stage_noise`](Self::stage_noise) and every convolution's Table 1
    /// estimate keep `margin_bits`; then the largest `w_SW` that costs the
    /// first stage at most a quarter of its remaining bits.
    pub fn select_session_bases(
        &self,
        convs: &[LinearShape],
        stages: &[StageLoad],
        margin_bits: f64,
        variant: ConvVariant,
    ) -> Result<Bases> {
        let first = *stages.first().ok_or_else(|| Error::Params("no linear layers to plan".into()))?;
        let fits = |w_a: u64| {
            convs
                .iter()
                .all(|&s| self.conv_output_noise(s, w_a, variant).budget_bits >= margin_bits)
                && stages
                    .iter()
                    .all(|&l| self.stage_noise(l, w_a, variant, None).budget_bits >= margin_bits)
        };
        let w_a = self.powers_of_two_below_q().find(|&w| fits(w)).ok_or_else(|| {
            let layer = stages
                .iter()
                .position(|&l| self.stage_noise(l, 2, variant, None).budget_bits < margin_bits)
                .unwrap_or(0);
            Error::Infeasible {
                layer,
                reason: format!("no automorphism base keeps a {margin_bits:.2}-bit margin"),
            }
        })?;
        let before = self.stage_noise(first, w_a, variant, None).budget_bits;
        let w_sw = self
            .powers_of_two_below_q()
            .find(|&w| {
                let after = self.stage_noise(first, w_a, variant, Some(w)).budget_bits;
                after >= margin_bits && after >= 0.75 * before
            })
            .ok_or_else(|| Error::Infeasible {
                layer: 0,
                reason: "no re-encryption base fits the remaining budget".into(),
            })?;
        Ok(Bases { w_a, w_sw })
    }

    /// Estimated budget after every linear layer under the given bases.
    pub fn report(&self, network: &[LinearShape], bases: Bases, variant: ConvVariant) -> Vec<NoiseRow> {
        network
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let est = if i == 0 {
                    self.first_layer_noise(s, bases.w_a, bases.w_sw, variant)
                } else {
                    self.conv_output_noise(s, bases.w_a, variant)
                };
                NoiseRow {
                    layer: i,
                    variant,
                    estimate_bits: est.inf_norm_bound.max(1.0).log2(),
                    budget_bits: est.budget_bits,
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::{Preset, PRESET_Q, PRESET_T};

    fn model(n: usize, sigma: f64) -> NoiseModel {
        NoiseModel::new(RingParams {
            n,
            q: PRESET_Q,
            t: PRESET_T,
            sigma,
        })
    }

    #[test]
    fn fresh_parameter() {
        assert!((model(2048, 4.0).fresh_noise().subgaussian - 256.0).abs() < 1e-9);
        let a = model(2048, 3.2).fresh_noise().subgaussian;
        let b = model(4096, 3.2).fresh_noise().subgaussian;
        assert!((b / a - 2f64.sqrt()).abs() < 1e-12);
        let est = model(2048, 3.2).fresh_noise();
        assert!((est.inf_norm_bound - 6.0 * est.subgaussian).abs() < 1e-9);
    }

    #[test]
    fn pmult_and_automorphism_instantiation() {
        let m = model(2048, 3.2);
        let fresh = m.fresh_noise();
        let amp = m.pmult_amplification(fresh);
        let expected = fresh.subgaussian * 2048f64.sqrt() * PRESET_T as f64 / 2.0;
        assert!((amp.subgaussian - expected).abs() / expected < 1e-12);
        let a = m.automorphism_noise(1 << 20);
        let expected = (3.0 * 2048.0f64).sqrt() * 3.2 * (1u64 << 20) as f64 / 2.0;
        assert!((a.subgaussian - expected).abs() / expected < 1e-12);
        let single = m.automorphism_noise(PRESET_Q);
        let expected = 2048f64.sqrt() * 3.2 * PRESET_Q as f64 / 2.0;
        assert!((single.subgaussian - expected).abs() / expected < 1e-12);
    }

    #[test]
    fn keyswitch_instantiation() {
        let m = model(2048, 3.2);
        let b = (6.0f64 * 3.2) * 2048.0 / 2.0;
        assert!((m.keyswitch_noise(1 << 20) - 3.0 * (1u64 << 20) as f64 * b).abs() < 1.0);
        assert!((m.keyswitch_noise(PRESET_Q) - PRESET_Q as f64 * b).abs() / (PRESET_Q as f64 * b) < 1e-12);
    }

    #[test]
    fn conv_formulas_at_pinned_point() {
        // n = 4096, t = 417793, sigma = 3.2, c_i = 4, f_w = 3, w_A = 2^16 (l_A = 4):
        // gazelle 9 * 2 * sqrt(2 + 2^32) * 208896.5 * 4096 * 3.2 = 3.22993e15
        // cheetah 9 * 2 * sqrt(2 + 2^34 / (417793^2 * 4096)) * 208896.5 * 4096 * 3.2 = 6.96997e10
        let m = NoiseModel::new(Preset::Paper.params());
        let shape = LinearShape::conv(4, 3);
        let g = m.conv_output_noise(shape, 1 << 16, ConvVariant::Gazelle).subgaussian;
        let c = m.conv_output_noise(shape, 1 << 16, ConvVariant::Cheetah).subgaussian;
        assert!((g / 3.22993e15 - 1.0).abs() < 1e-3, "{g}");
        assert!((c / 6.96997e10 - 1.0).abs() < 1e-3, "{c}");
    }

    #[test]
    fn small_base_limit_agrees() {
        let m = NoiseModel::new(Preset::Paper.params());
        let shape = LinearShape::conv(4, 3);
        let limit = 9.0 * (8.0f64).sqrt() * (PRESET_T as f64 / 2.0) * 4096.0 * 3.2;
        for v in [ConvVariant::Gazelle, ConvVariant::Cheetah] {
            let e = m.conv_output_noise(LinearShape { rotates: false, ..shape }, 1 << 40, v);
            assert!((e.subgaussian / limit - 1.0).abs() < 1e-12);
        }
        let g = m.conv_output_noise(shape, 2, ConvVariant::Gazelle).subgaussian;
        assert!(g > limit);
    }

    #[test]
    fn monotone_in_shape_and_base() {
        let m = NoiseModel::new(Preset::Toy.params());
        let mut last = 0.0;
        for w in [1u64 << 4, 1 << 10, 1 << 20, 1 << 30, 1 << 40] {
            let e = m.conv_output_noise(LinearShape::conv(2, 3), w, ConvVariant::Cheetah).subgaussian;
            assert!(e >= last);
            last = e;
        }
        let a = m.conv_output_noise(LinearShape::conv(2, 3), 1 << 20, ConvVariant::Cheetah).subgaussian;
        let b = m.conv_output_noise(LinearShape::conv(4, 3), 1 << 20, ConvVariant::Cheetah).subgaussian;
        let c = m.conv_output_noise(LinearShape::conv(2, 5), 1 << 20, ConvVariant::Cheetah).subgaussian;
        assert!(b > a && c > a);
        let s = model(2048, 6.4).conv_output_noise(LinearShape::conv(2, 3), 1 << 20, ConvVariant::Cheetah).subgaussian;
        assert!(s > a);
    }

    #[test]
    fn unconstrained_network_takes_largest_base() {
        let m = NoiseModel::new(Preset::Toy.params());
        let bases = m.select_bases(&[LinearShape::conv(1, 1)], 0.0, ConvVariant::Cheetah).unwrap();
        assert_eq!(bases.w_a, 1 << 59);
        assert_eq!(m.select_bases(&[LinearShape::conv(1, 1)], 0.0, ConvVariant::Cheetah).unwrap(), bases);
    }

    #[test]
    fn cheetah_base_exceeds_gazelle_base() {
        let m = NoiseModel::new(Preset::Toy.params());
        let g = m.select_bases(&[LinearShape::conv(2, 3)], 0.0, ConvVariant::Gazelle).unwrap();
        let c = m.select_bases(&[LinearShape::conv(2, 3)], 0.0, ConvVariant::Cheetah).unwrap();
        assert_eq!(g.w_a, 1 << 2);
        assert_eq!(c.w_a, 1 << 27);
        // the rotate-first estimate has no feasible base for this layer
        let paper = NoiseModel::new(Preset::Paper.params());
        assert!(paper.select_bases(&[LinearShape::conv(2, 3)], 0.0, ConvVariant::Gazelle).is_err());
        assert!(paper.select_bases(&[LinearShape::conv(2, 3)], 0.0, ConvVariant::Cheetah).is_ok());
    }

    #[test]
    fn infeasible_layer_is_named() {
        let m = NoiseModel::new(Preset::Toy.params());
        let net = [LinearShape::conv(1, 3), LinearShape::conv(64, 7)];
        match m.select_bases(&net, 1.0, ConvVariant::Cheetah) {
            Err(Error::Infeasible { layer, .. }) => assert_eq!(layer, 1),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }
}
