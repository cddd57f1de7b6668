use std::sync::Arc;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::ring::{rng_from_seed, sample_gaussian, sample_uniform, Domain, Polynomial, RingContext, Seed, SlotVector};

use super::ciphertext::{Ciphertext, NttCiphertext, Plaintext, PreparedPlaintext};
use super::keys::{rotation_plan, row_swap_element, GaloisKeys, KeyOwner, ReEncryptionKey, SecretKey};

/// Measured noise of a ciphertext against a known plaintext.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseBudget {
    /// `||v||_inf` of the centered noise polynomial.
    pub inf_norm: u64,
    /// `log2(q / 2t) - log2(||v||_inf)`; decryption is correct iff positive.
    pub bits: f64,
}

/// Scheme operations over one shared ring context.
#[derive(Clone, Debug)]
pub struct Bfv {
    ctx: Arc<RingContext>,
}

fn same_owner(a: KeyOwner, b: KeyOwner) -> Result<()> {
    if a != b {
        return Err(Error::KeyOwner {
            expected: a.name(),
            found: b.name(),
        });
    }
    Ok(())
}

impl Bfv {
    pub fn new(ctx: Arc<RingContext>) -> Self {
        Bfv { ctx }
    }

    pub fn context(&self) -> &Arc<RingContext> {
        &self.ctx
    }

    pub fn n(&self) -> usize {
        self.ctx.n()
    }

    pub fn encode(&self, v: &SlotVector) -> Result<Plaintext> {
        Ok(Plaintext(self.ctx.encoder().encode(v)?))
    }

    pub fn encode_signed(&self, values: &[i64]) -> Result<Plaintext> {
        Ok(Plaintext(self.ctx.encoder().encode_signed(values)?))
    }

    pub fn decode(&self, pt: &Plaintext) -> Result<SlotVector> {
        self.ctx.encoder().decode(&pt.0)
    }

    fn check_plain(&self, pt: &Plaintext) -> Result<()> {
        if pt.0.modulus() != self.ctx.params().t || pt.0.degree() != self.n() || pt.0.domain() != Domain::Coefficient {
            return Err(Error::Mismatch("plaintext does not belong to R_t for this context".into()));
        }
        Ok(())
    }

    /// `Delta * m` in `R_q`.
    fn scaled(&self, pt: &Plaintext) -> Polynomial {
        let q = self.ctx.q_ring().modulus();
        let delta = self.ctx.delta();
        let coeffs = pt.0.coeffs().iter().map(|&m| q.mul(m, delta)).collect();
        Polynomial::from_raw(coeffs, q.value(), Domain::Coefficient)
    }

    /// Centered lift of a plaintext into `R_q`.
    fn lift(&self, pt: &Plaintext) -> Polynomial {
        let t = self.ctx.t_ring().modulus();
        let q = self.ctx.q_ring().modulus();
        let coeffs = pt.0.coeffs().iter().map(|&m| q.from_i64(t.center(m))).collect();
        Polynomial::from_raw(coeffs, q.value(), Domain::Coefficient)
    }

    pub fn encrypt<R: RngCore>(&self, sk: &SecretKey, pt: &Plaintext, rng: &mut R) -> Result<Ciphertext> {
        self.check_plain(pt)?;
        let ring = self.ctx.q_ring();
        let mut seed: Seed = [0; 32];
        rng.fill_bytes(&mut seed);
        let a = sample_uniform(ring, &mut rng_from_seed(seed));
        let e = sample_gaussian(ring, self.ctx.gaussian(), rng);
        let mut as_ = ring.pointwise(&ring.ntt_forward(&a)?, sk.ntt())?;
        ring.ntt_inverse_in_place(&mut as_)?;
        let mut c0 = self.scaled(pt);
        ring.add_assign(&mut c0, &e)?;
        ring.sub_assign(&mut c0, &as_)?;
        Ok(Ciphertext {
            c0,
            c1: a,
            owner: sk.owner(),
            seed: Some(seed),
        })
    }

    pub fn encrypt_slots<R: RngCore>(&self, sk: &SecretKey, v: &SlotVector, rng: &mut R) -> Result<Ciphertext> {
        let pt = self.encode(v)?;
        self.encrypt(sk, &pt, rng)
    }

    /// The noiseless encryption `(0, 0)` of zero.
    pub fn zero(&self, owner: KeyOwner) -> Ciphertext {
        let ring = self.ctx.q_ring();
        Ciphertext::derived(ring.zero(), ring.zero(), owner)
    }

    /// `[c0 + c1 s]_q`.
    fn phase(&self, sk: &SecretKey, ct: &Ciphertext) -> Result<Polynomial> {
        let ring = self.ctx.q_ring();
        let mut p = ring.pointwise(&ring.ntt_forward(&ct.c1)?, sk.ntt())?;
        ring.ntt_inverse_in_place(&mut p)?;
        ring.add_assign(&mut p, &ct.c0)?;
        Ok(p)
    }

    /// Decrypts with `sk`. The key owner is not checked: decrypting under the
    /// wrong key yields an unrelated plaintext, as the scheme does.
    pub fn decrypt(&self, sk: &SecretKey, ct: &Ciphertext) -> Result<Plaintext> {
        let phase = self.phase(sk, ct)?;
        let q = self.ctx.params().q as u128;
        let t = self.ctx.params().t as u128;
        let coeffs = phase
            .coeffs()
            .iter()
            .map(|&c| (((c as u128 * t + q / 2) / q) % t) as u64)
            .collect();
        Ok(Plaintext(Polynomial::from_raw(coeffs, t as u64, Domain::Coefficient)))
    }

    pub fn decrypt_slots(&self, sk: &SecretKey, ct: &Ciphertext) -> Result<SlotVector> {
        self.decode(&self.decrypt(sk, ct)?)
    }

    /// Noise of `ct` relative to the plaintext `expected` it should hold.
    pub fn noise_budget(&self, sk: &SecretKey, ct: &Ciphertext, expected: &Plaintext) -> Result<NoiseBudget> {
        self.check_plain(expected)?;
        let ring = self.ctx.q_ring();
        let mut v = self.phase(sk, ct)?;
        ring.sub_assign(&mut v, &self.scaled(expected))?;
        Ok(self.budget_of(v.inf_norm()))
    }

    /// Noise relative to the plaintext `ct` currently decrypts to.
    pub fn measure_noise(&self, sk: &SecretKey, ct: &Ciphertext) -> Result<NoiseBudget> {
        let pt = self.decrypt(sk, ct)?;
        self.noise_budget(sk, ct, &pt)
    }

    pub fn budget_of(&self, inf_norm: u64) -> NoiseBudget {
        let p = self.ctx.params();
        let capacity = (p.q as f64 / (2.0 * p.t as f64)).log2();
        NoiseBudget {
            inf_norm,
            bits: capacity - (inf_norm.max(1) as f64).log2(),
        }
    }

    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        let mut out = a.clone().into_derived();
        self.add_assign(&mut out, b)?;
        Ok(out)
    }

    pub fn add_assign(&self, a: &mut Ciphertext, b: &Ciphertext) -> Result<()> {
        same_owner(a.owner, b.owner)?;
        let ring = self.ctx.q_ring();
        ring.add_assign(&mut a.c0, &b.c0)?;
        ring.add_assign(&mut a.c1, &b.c1)?;
        a.seed = None;
        Ok(())
    }

    pub fn sub(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        same_owner(a.owner, b.owner)?;
        let ring = self.ctx.q_ring();
        Ok(Ciphertext::derived(ring.sub(&a.c0, &b.c0)?, ring.sub(&a.c1, &b.c1)?, a.owner))
    }

    pub fn add_plain(&self, ct: &Ciphertext, pt: &Plaintext) -> Result<Ciphertext> {
        self.check_plain(pt)?;
        let ring = self.ctx.q_ring();
        let mut out = ct.clone();
        ring.add_assign(&mut out.c0, &self.scaled(pt))?;
        // c1 is unchanged, so a seeded encoding stays valid
        Ok(out)
    }

    pub fn sub_plain(&self, ct: &Ciphertext, pt: &Plaintext) -> Result<Ciphertext> {
        self.check_plain(pt)?;
        let ring = self.ctx.q_ring();
        let mut out = ct.clone();
        ring.sub_assign(&mut out.c0, &self.scaled(pt))?;
        Ok(out)
    }

    pub fn prepare_plain(&self, pt: &Plaintext) -> Result<PreparedPlaintext> {
        self.check_plain(pt)?;
        Ok(PreparedPlaintext {
            ntt: self.ctx.q_ring().ntt_forward(&self.lift(pt))?,
            is_zero: pt.0.is_zero(),
        })
    }

    pub fn mul_plain(&self, ct: &Ciphertext, pt: &Plaintext) -> Result<Ciphertext> {
        let prepared = self.prepare_plain(pt)?;
        let input = self.to_ntt(ct)?;
        self.from_ntt(&self.mul_prepared(&input, &prepared)?)
    }

    pub fn to_ntt(&self, ct: &Ciphertext) -> Result<NttCiphertext> {
        let ring = self.ctx.q_ring();
        Ok(NttCiphertext {
            c0: ring.ntt_forward(&ct.c0)?,
            c1: ring.ntt_forward(&ct.c1)?,
            owner: ct.owner,
        })
    }

    pub fn from_ntt(&self, ct: &NttCiphertext) -> Result<Ciphertext> {
        let ring = self.ctx.q_ring();
        Ok(Ciphertext::derived(ring.ntt_inverse(&ct.c0)?, ring.ntt_inverse(&ct.c1)?, ct.owner))
    }

    pub fn ntt_zero(&self, owner: KeyOwner) -> NttCiphertext {
        NttCiphertext::zero(self.n(), self.ctx.params().q, owner)
    }

    pub fn mul_prepared(&self, ct: &NttCiphertext, pt: &PreparedPlaintext) -> Result<NttCiphertext> {
        let ring = self.ctx.q_ring();
        Ok(NttCiphertext {
            c0: ring.pointwise(&ct.c0, &pt.ntt)?,
            c1: ring.pointwise(&ct.c1, &pt.ntt)?,
            owner: ct.owner,
        })
    }

    /// `acc += ct * pt`, all in the evaluation domain.
    pub fn mul_prepared_accumulate(&self, acc: &mut NttCiphertext, ct: &NttCiphertext, pt: &PreparedPlaintext) -> Result<()> {
        same_owner(acc.owner, ct.owner)?;
        let ring = self.ctx.q_ring();
        ring.pointwise_accumulate(&mut acc.c0, &ct.c0, &pt.ntt)?;
        ring.pointwise_accumulate(&mut acc.c1, &ct.c1, &pt.ntt)?;
        Ok(())
    }

    /// Applies `x -> x^g` and switches back to the original key.
    pub fn apply_galois(&self, ct: &Ciphertext, g: u64, keys: &GaloisKeys) -> Result<Ciphertext> {
        same_owner(keys.owner(), ct.owner)?;
        let key = keys.get(g)?;
        let ring = self.ctx.q_ring();
        let mut c0 = ring.automorphism(&ct.c0, g)?;
        let c1 = ring.automorphism(&ct.c1, g)?;
        let (d0, d1) = key.switch_key().apply(&self.ctx, &c1)?;
        ring.add_assign(&mut c0, &d0)?;
        Ok(Ciphertext::derived(c0, d1, ct.owner))
    }

    /// Rotates both rows left by `steps` (negative rotates right).
    pub fn rotate(&self, ct: &Ciphertext, steps: i64, keys: &GaloisKeys) -> Result<Ciphertext> {
        let plan = rotation_plan(self.n(), steps, keys.mode());
        let mut out = ct.clone();
        for g in plan {
            out = self.apply_galois(&out, g, keys)?;
        }
        Ok(out)
    }

    /// Number of automorphisms `rotate` performs for `steps` under `keys`.
    pub fn rotation_cost(&self, steps: i64, keys: &GaloisKeys) -> usize {
        rotation_plan(self.n(), steps, keys.mode()).len()
    }

    pub fn swap_rows(&self, ct: &Ciphertext, keys: &GaloisKeys) -> Result<Ciphertext> {
        self.apply_galois(ct, row_swap_element(self.n()), keys)
    }

    /// Switches a client-key ciphertext to the proxy key.
    pub fn reencrypt(&self, ct: &Ciphertext, rk: &ReEncryptionKey) -> Result<Ciphertext> {
        same_owner(KeyOwner::Client, ct.owner)?;
        let ring = self.ctx.q_ring();
        let (d0, d1) = rk.switch_key().apply(&self.ctx, &ct.c1)?;
        let c0 = ring.add(&ct.c0, &d0)?;
        Ok(Ciphertext::derived(c0, d1, KeyOwner::Proxy))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::{seed_from_u64, PolyRing, RingParams};
    use rand::Rng;
    use rand_chacha::ChaCha20Rng;

    fn small() -> (Bfv, ChaCha20Rng) {
        // n = 8, t = 17, q = 1 mod 16 and large enough for a few operations
        let q = (1u64 << 40..).step_by(1).find(|&q| q % 16 == 1 && crate::ring::is_prime(q)).unwrap();
        let ctx = RingContext::new(RingParams::new(8, q, 17, 3.2).unwrap()).unwrap();
        (Bfv::new(ctx), rng_from_seed(seed_from_u64(11)))
    }

    #[test]
    fn roundtrip_small() {
        let (bfv, mut rng) = small();
        let sk = SecretKey::generate(bfv.context(), KeyOwner::Client, &mut rng);
        for _ in 0..50 {
            let v = SlotVector((0..8).map(|_| rng.gen_range(0..17)).collect());
            let ct = bfv.encrypt_slots(&sk, &v, &mut rng).unwrap();
            assert_eq!(bfv.decrypt_slots(&sk, &ct).unwrap(), v);
        }
    }

    #[test]
    fn owner_mismatch_is_rejected() {
        let (bfv, mut rng) = small();
        let a = SecretKey::generate(bfv.context(), KeyOwner::Client, &mut rng);
        let b = SecretKey::generate(bfv.context(), KeyOwner::Proxy, &mut rng);
        let v = SlotVector(vec![1; 8]);
        let x = bfv.encrypt_slots(&a, &v, &mut rng).unwrap();
        let y = bfv.encrypt_slots(&b, &v, &mut rng).unwrap();
        assert!(matches!(bfv.add(&x, &y), Err(Error::KeyOwner { .. })));
    }

    #[test]
    fn seeded_serialization_roundtrip() {
        let (bfv, mut rng) = small();
        let sk = SecretKey::generate(bfv.context(), KeyOwner::Client, &mut rng);
        let ct = bfv.encrypt_slots(&sk, &SlotVector(vec![3; 8]), &mut rng).unwrap();
        let bytes = ct.to_bytes();
        // tag + owner + (8 + 8*8) + 32
        assert_eq!(bytes.len(), 2 + 72 + 32);
        let back = Ciphertext::read_from(bfv.context(), &mut crate::codec::Reader::new(&bytes)).unwrap();
        assert_eq!(back, ct);
        let derived = ct.clone().into_derived();
        let bytes = derived.to_bytes();
        assert_eq!(bytes.len(), 2 + 2 * 72);
        let back = Ciphertext::read_from(bfv.context(), &mut crate::codec::Reader::new(&bytes)).unwrap();
        assert_eq!(back, derived);
    }

    #[test]
    fn key_switch_relation_holds() {
        let (bfv, mut rng) = small();
        let ctx = bfv.context().clone();
        let sc = SecretKey::generate(&ctx, KeyOwner::Client, &mut rng);
        let sp = SecretKey::generate(&ctx, KeyOwner::Proxy, &mut rng);
        let rk = ReEncryptionKey::generate(&ctx, &sc, &sp, 1 << 10, &mut rng).unwrap();
        let ring: &PolyRing = ctx.q_ring();
        let q = ring.modulus();
        let mut power = 1u64;
        for (b, a) in rk.switch_key().parts(&ctx) {
            let mut r = ring.add(&b, &ring.mul(&a, sp.poly()).unwrap()).unwrap();
            ring.sub_assign(&mut r, &ring.scalar_mul(sc.poly(), power).unwrap()).unwrap();
            assert!(r.inf_norm() <= ctx.params().error_bound());
            power = q.mul(power, 1 << 10);
        }
    }
}
