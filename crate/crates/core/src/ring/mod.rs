//! Exact arithmetic in `R_q = Z_q[x]/(x^n + 1)` and `R_t`.

mod batch;
mod decompose;
mod modulus;
mod ntt;
mod params;
mod poly;
mod sample;

use std::sync::Arc;

pub use batch::{BatchEncoder, SlotVector};
pub use decompose::{base_decompose, digit_count};
pub use modulus::{is_prime, Modulus};
pub use ntt::{primitive_root_2n, NttTable};
pub use params::{Preset, RingParams, PRESET_Q, PRESET_SIGMA, PRESET_T};
pub use poly::{Domain, PolyRing, Polynomial};
pub use sample::{
    derive_seed, rng_from_seed, sample_gaussian, sample_ternary, sample_uniform, seed_from_u64,
    GaussianSampler, Seed,
};

use crate::error::Result;

/// Shared read-only tables for one parameter set.
#[derive(Debug)]
pub struct RingContext {
    params: RingParams,
    q_ring: PolyRing,
    encoder: BatchEncoder,
    gaussian: GaussianSampler,
    delta: u64,
}

impl RingContext {
    pub fn new(params: RingParams) -> Result<Arc<Self>> {
        params.validate()?;
        let q_ring = PolyRing::with_ntt(params.n, params.q)?;
        let t_ring = PolyRing::with_ntt(params.n, params.t)?;
        let encoder = BatchEncoder::new(t_ring)?;
        // round(q / t)
        let delta = ((params.q as u128 + params.t as u128 / 2) / params.t as u128) as u64;
        Ok(Arc::new(RingContext {
            params,
            q_ring,
            encoder,
            gaussian: GaussianSampler::new(params.sigma),
            delta,
        }))
    }

    pub fn params(&self) -> &RingParams {
        &self.params
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn q_ring(&self) -> &PolyRing {
        &self.q_ring
    }

    pub fn t_ring(&self) -> &PolyRing {
        self.encoder.ring()
    }

    pub fn encoder(&self) -> &BatchEncoder {
        &self.encoder
    }

    pub fn gaussian(&self) -> &GaussianSampler {
        &self.gaussian
    }

    /// Plaintext scaling factor `round(q / t)`.
    pub fn delta(&self) -> u64 {
        self.delta
    }
}
