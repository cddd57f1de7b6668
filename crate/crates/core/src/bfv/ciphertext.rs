use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::ring::{rng_from_seed, sample_uniform, Domain, Polynomial, RingContext, Seed};

use super::keys::KeyOwner;
use super::tags;

/// Element of `R_t` in coefficient form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Plaintext(pub(crate) Polynomial);

impl Plaintext {
    pub fn new(p: Polynomial) -> Self {
        Plaintext(p)
    }

    pub fn poly(&self) -> &Polynomial {
        &self.0
    }

    pub fn into_poly(self) -> Polynomial {
        self.0
    }
}

/// A plaintext lifted to `R_q` (centered) and kept in the evaluation domain,
/// ready for repeated multiplication.
#[derive(Clone, Debug)]
pub struct PreparedPlaintext {
    pub(crate) ntt: Polynomial,
    pub(crate) is_zero: bool,
}

impl PreparedPlaintext {
    pub fn is_zero(&self) -> bool {
        self.is_zero
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ciphertext {
    pub(crate) c0: Polynomial,
    pub(crate) c1: Polynomial,
    pub(crate) owner: KeyOwner,
    // set on fresh encryptions, whose c1 is expanded from this seed
    pub(crate) seed: Option<Seed>,
}

impl Ciphertext {
    pub fn c0(&self) -> &Polynomial {
        &self.c0
    }

    pub fn c1(&self) -> &Polynomial {
        &self.c1
    }

    pub fn owner(&self) -> KeyOwner {
        self.owner
    }

    pub fn is_fresh(&self) -> bool {
        self.seed.is_some()
    }

    pub(crate) fn derived(c0: Polynomial, c1: Polynomial, owner: KeyOwner) -> Self {
        Ciphertext { c0, c1, owner, seed: None }
    }

    /// Drops the seed so the ciphertext serializes both components in full.
    pub fn into_derived(mut self) -> Self {
        self.seed = None;
        self
    }

    pub fn write_to(&self, w: &mut Writer) {
        match &self.seed {
            Some(seed) => {
                w.u8(tags::CIPHERTEXT_SEEDED);
                w.u8(self.owner.tag());
                self.c0.write_to(w);
                w.bytes(seed);
            }
            None => {
                w.u8(tags::CIPHERTEXT);
                w.u8(self.owner.tag());
                self.c0.write_to(w);
                self.c1.write_to(w);
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.write_to(&mut w);
        w.into_bytes()
    }

    pub fn read_from(ctx: &RingContext, r: &mut Reader<'_>) -> Result<Self> {
        let tag = r.u8()?;
        let owner = KeyOwner::from_tag(r.u8()?)?;
        let q = ctx.params().q;
        let c0 = Polynomial::read_from(r, q)?;
        if c0.degree() != ctx.n() {
            return Err(Error::Decode(format!("ciphertext of degree {} in ring of degree {}", c0.degree(), ctx.n())));
        }
        match tag {
            tags::CIPHERTEXT => {
                let c1 = Polynomial::read_from(r, q)?;
                if c1.degree() != ctx.n() {
                    return Err(Error::Decode("ciphertext components differ in degree".into()));
                }
                Ok(Ciphertext::derived(c0, c1, owner))
            }
            tags::CIPHERTEXT_SEEDED => {
                let seed: Seed = r.array()?;
                let c1 = sample_uniform(ctx.q_ring(), &mut rng_from_seed(seed));
                Ok(Ciphertext {
                    c0,
                    c1,
                    owner,
                    seed: Some(seed),
                })
            }
            t => Err(Error::Decode(format!("expected a ciphertext, found tag {t:#04x}"))),
        }
    }
}

/// Ciphertext with both components in the evaluation domain, for batches
/// of plaintext multiplications against one input.
#[derive(Clone, Debug)]
pub struct NttCiphertext {
    pub(crate) c0: Polynomial,
    pub(crate) c1: Polynomial,
    pub(crate) owner: KeyOwner,
}

impl NttCiphertext {
    pub fn owner(&self) -> KeyOwner {
        self.owner
    }

    pub(crate) fn zero(n: usize, q: u64, owner: KeyOwner) -> Self {
        NttCiphertext {
            c0: Polynomial::from_raw(vec![0; n], q, Domain::Evaluation),
            c1: Polynomial::from_raw(vec![0; n], q, Domain::Evaluation),
            owner,
        }
    }
}
