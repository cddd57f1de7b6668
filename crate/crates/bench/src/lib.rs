//! Shared fixtures for the criterion benches.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use triad::bfv::{Bfv, Ciphertext, KeyOwner, SecretKey};
use triad::ring::{rng_from_seed, seed_from_u64, Preset, RingContext, SlotVector};

pub struct Fixture {
    pub ctx: Arc<RingContext>,
    pub bfv: Bfv,
    pub sk: SecretKey,
    pub rng: ChaCha20Rng,
}

impl Fixture {
    pub fn new(preset: Preset) -> Self {
        let ctx = RingContext::new(preset.params()).expect("preset parameters are valid");
        let mut rng = rng_from_seed(seed_from_u64(1));
        let sk = SecretKey::generate(&ctx, KeyOwner::Client, &mut rng);
        Fixture {
            bfv: Bfv::new(ctx.clone()),
            ctx,
            sk,
            rng,
        }
    }

    pub fn random_slots(&mut self) -> SlotVector {
        let t = self.ctx.params().t;
        SlotVector((0..self.ctx.n()).map(|_| self.rng.gen_range(0..t)).collect())
    }

    pub fn encrypt_random(&mut self) -> Ciphertext {
        let v = self.random_slots();
        self.bfv.encrypt_slots(&self.sk, &v, &mut self.rng).expect("slot vector fits")
    }
}
