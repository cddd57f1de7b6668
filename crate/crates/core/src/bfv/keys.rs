use std::collections::BTreeMap;
use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::ring::{
    base_decompose, digit_count, sample_gaussian, sample_ternary, sample_uniform, Domain, Polynomial,
    RingContext,
};

use super::tags;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KeyOwner {
    Client,
    Proxy,
}

impl KeyOwner {
    pub fn tag(self) -> u8 {
        match self {
            KeyOwner::Client => 1,
            KeyOwner::Proxy => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            1 => Ok(KeyOwner::Client),
            2 => Ok(KeyOwner::Proxy),
            t => Err(Error::Decode(format!("unknown key owner tag {t}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KeyOwner::Client => "client",
            KeyOwner::Proxy => "proxy",
        }
    }
}

/// Ternary secret `s` with its evaluation-domain image cached.
#[derive(Clone, Debug)]
pub struct SecretKey {
    owner: KeyOwner,
    s: Polynomial,
    s_ntt: Polynomial,
}

impl SecretKey {
    pub fn generate<R: RngCore>(ctx: &RingContext, owner: KeyOwner, rng: &mut R) -> Self {
        let s = sample_ternary(ctx.q_ring(), rng);
        Self::from_poly(ctx, owner, s).expect("sampled key is well formed")
    }

    pub fn from_poly(ctx: &RingContext, owner: KeyOwner, s: Polynomial) -> Result<Self> {
        let s_ntt = ctx.q_ring().ntt_forward(&s)?;
        Ok(SecretKey { owner, s, s_ntt })
    }

    pub fn owner(&self) -> KeyOwner {
        self.owner
    }

    pub fn poly(&self) -> &Polynomial {
        &self.s
    }

    pub(crate) fn ntt(&self) -> &Polynomial {
        &self.s_ntt
    }

    pub fn write_to(&self, w: &mut Writer) {
        w.u8(tags::SECRET_KEY);
        w.u8(self.owner.tag());
        self.s.write_to(w);
    }

    pub fn read_from(ctx: &RingContext, r: &mut Reader<'_>) -> Result<Self> {
        tags::expect(r, tags::SECRET_KEY)?;
        let owner = KeyOwner::from_tag(r.u8()?)?;
        let s = Polynomial::read_from(r, ctx.params().q)?;
        check_degree(ctx, &s)?;
        Self::from_poly(ctx, owner, s)
    }
}

fn check_degree(ctx: &RingContext, p: &Polynomial) -> Result<()> {
    if p.degree() != ctx.n() {
        return Err(Error::Decode(format!("polynomial of degree {} in ring of degree {}", p.degree(), ctx.n())));
    }
    Ok(())
}

/// Decomposed switching material from a source secret to a target key:
/// part `i` is `(-(a_i s_to + e_i) + w^i s_from, a_i)`.
#[derive(Clone, Debug)]
pub struct KeySwitchKey {
    base: u64,
    // evaluation domain
    b: Vec<Polynomial>,
    a: Vec<Polynomial>,
}

impl KeySwitchKey {
    pub fn generate<R: RngCore>(
        ctx: &RingContext,
        from: &Polynomial,
        to: &SecretKey,
        base: u64,
        rng: &mut R,
    ) -> Result<Self> {
        if base < 2 {
            return Err(Error::Params(format!("decomposition base {base} < 2")));
        }
        let ring = ctx.q_ring();
        let q = ring.modulus();
        let l = digit_count(q.value(), base);
        let mut b = Vec::with_capacity(l);
        let mut a = Vec::with_capacity(l);
        let mut power = 1u64;
        for _ in 0..l {
            let ai = sample_uniform(ring, rng);
            let ei = sample_gaussian(ring, ctx.gaussian(), rng);
            let ai_ntt = ring.ntt_forward(&ai)?;
            let mut as_ = ring.pointwise(&ai_ntt, to.ntt())?;
            ring.ntt_inverse_in_place(&mut as_)?;
            let mut bi = ring.scalar_mul(from, power)?;
            ring.sub_assign(&mut bi, &as_)?;
            ring.sub_assign(&mut bi, &ei)?;
            ring.ntt_forward_in_place(&mut bi)?;
            b.push(bi);
            a.push(ai_ntt);
            power = q.mul(power, q.reduce(base));
        }
        Ok(KeySwitchKey { base, b, a })
    }

    pub fn base(&self) -> u64 {
        self.base
    }

    pub fn digits(&self) -> usize {
        self.b.len()
    }

    /// Coefficient-domain parts `(b_i, a_i)`.
    pub fn parts(&self, ctx: &RingContext) -> Vec<(Polynomial, Polynomial)> {
        let ring = ctx.q_ring();
        self.b
            .iter()
            .zip(&self.a)
            .map(|(b, a)| (ring.ntt_inverse(b).unwrap(), ring.ntt_inverse(a).unwrap()))
            .collect()
    }

    /// Returns `(sum d_i b_i, sum d_i a_i)` for the base-`w` digits `d_i` of `p`.
    pub fn apply(&self, ctx: &RingContext, p: &Polynomial) -> Result<(Polynomial, Polynomial)> {
        let ring = ctx.q_ring();
        let digits = base_decompose(p, self.base)?;
        let q = ring.modulus().value();
        let mut acc0 = Polynomial::from_raw(vec![0; ctx.n()], q, Domain::Evaluation);
        let mut acc1 = acc0.clone();
        for ((mut d, b), a) in digits.into_iter().zip(&self.b).zip(&self.a) {
            if d.is_zero() {
                continue;
            }
            ring.ntt_forward_in_place(&mut d)?;
            ring.pointwise_accumulate(&mut acc0, &d, b)?;
            ring.pointwise_accumulate(&mut acc1, &d, a)?;
        }
        ring.ntt_inverse_in_place(&mut acc0)?;
        ring.ntt_inverse_in_place(&mut acc1)?;
        Ok((acc0, acc1))
    }

    pub fn write_to(&self, ctx: &RingContext, w: &mut Writer) {
        w.u64(self.base);
        w.u32(self.b.len() as u32);
        for (b, a) in self.parts(ctx) {
            b.write_to(w);
            a.write_to(w);
        }
    }

    pub fn read_from(ctx: &RingContext, r: &mut Reader<'_>) -> Result<Self> {
        let base = r.u64()?;
        if base < 2 {
            return Err(Error::Decode(format!("decomposition base {base} < 2")));
        }
        let l = r.count(16)?;
        if l != digit_count(ctx.params().q, base) {
            return Err(Error::Decode(format!("{l} key parts for base {base}")));
        }
        let ring = ctx.q_ring();
        let mut b = Vec::with_capacity(l);
        let mut a = Vec::with_capacity(l);
        for _ in 0..l {
            let mut bi = Polynomial::read_from(r, ctx.params().q)?;
            let mut ai = Polynomial::read_from(r, ctx.params().q)?;
            check_degree(ctx, &bi)?;
            check_degree(ctx, &ai)?;
            ring.ntt_forward_in_place(&mut bi)?;
            ring.ntt_forward_in_place(&mut ai)?;
            b.push(bi);
            a.push(ai);
        }
        Ok(KeySwitchKey { base, b, a })
    }
}

/// Switching key for the automorphism `x -> x^g` under one secret.
#[derive(Clone, Debug)]
pub struct EvaluationKey {
    galois_element: u64,
    owner: KeyOwner,
    ksk: KeySwitchKey,
}

impl EvaluationKey {
    pub fn generate<R: RngCore>(ctx: &RingContext, sk: &SecretKey, g: u64, base: u64, rng: &mut R) -> Result<Self> {
        let twisted = ctx.q_ring().automorphism(sk.poly(), g)?;
        let ksk = KeySwitchKey::generate(ctx, &twisted, sk, base, rng)?;
        Ok(EvaluationKey {
            galois_element: g % (2 * ctx.n() as u64),
            owner: sk.owner(),
            ksk,
        })
    }

    pub fn galois_element(&self) -> u64 {
        self.galois_element
    }

    pub fn owner(&self) -> KeyOwner {
        self.owner
    }

    pub fn switch_key(&self) -> &KeySwitchKey {
        &self.ksk
    }

    pub fn write_to(&self, ctx: &RingContext, w: &mut Writer) {
        w.u8(tags::GALOIS_KEY);
        w.u8(self.owner.tag());
        w.u64(self.galois_element);
        self.ksk.write_to(ctx, w);
    }

    pub fn read_from(ctx: &RingContext, r: &mut Reader<'_>) -> Result<Self> {
        tags::expect(r, tags::GALOIS_KEY)?;
        let owner = KeyOwner::from_tag(r.u8()?)?;
        let galois_element = r.u64()?;
        if galois_element % 2 == 0 || galois_element >= 2 * ctx.n() as u64 {
            return Err(Error::Decode(format!("invalid galois element {galois_element}")));
        }
        let ksk = KeySwitchKey::read_from(ctx, r)?;
        Ok(EvaluationKey {
            galois_element,
            owner,
            ksk,
        })
    }
}

/// Client-to-proxy switching key: part `i` is
/// `([-(a_i s_p + e_i) + w^i s_c]_q, a_i)`.
#[derive(Clone, Debug)]
pub struct ReEncryptionKey {
    ksk: KeySwitchKey,
}

impl ReEncryptionKey {
    pub fn generate<R: RngCore>(
        ctx: &RingContext,
        client: &SecretKey,
        proxy: &SecretKey,
        base: u64,
        rng: &mut R,
    ) -> Result<Self> {
        if client.owner() != KeyOwner::Client || proxy.owner() != KeyOwner::Proxy {
            return Err(Error::Mismatch(format!(
                "re-encryption key needs (client, proxy) keys, got ({}, {})",
                client.owner().name(),
                proxy.owner().name()
            )));
        }
        if client.poly().degree() != proxy.poly().degree() || client.poly().modulus() != proxy.poly().modulus() {
            return Err(Error::Mismatch("client and proxy keys use different parameters".into()));
        }
        Ok(ReEncryptionKey {
            ksk: KeySwitchKey::generate(ctx, client.poly(), proxy, base, rng)?,
        })
    }

    pub fn base(&self) -> u64 {
        self.ksk.base()
    }

    pub fn digits(&self) -> usize {
        self.ksk.digits()
    }

    pub fn switch_key(&self) -> &KeySwitchKey {
        &self.ksk
    }

    pub fn write_to(&self, ctx: &RingContext, w: &mut Writer) {
        w.u8(tags::REENC_KEY);
        w.u8(KeyOwner::Client.tag());
        self.ksk.write_to(ctx, w);
    }

    pub fn read_from(ctx: &RingContext, r: &mut Reader<'_>) -> Result<Self> {
        tags::expect(r, tags::REENC_KEY)?;
        KeyOwner::from_tag(r.u8()?)?;
        Ok(ReEncryptionKey {
            ksk: KeySwitchKey::read_from(ctx, r)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeyMode {
    /// One key per required rotation step; every rotation is one automorphism.
    AllKeys,
    /// Power-of-two steps plus the row swap; rotations compose per set bit.
    LogKeys,
}

impl std::str::FromStr for KeyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all-keys" | "all" => Ok(KeyMode::AllKeys),
            "log-keys" | "log" => Ok(KeyMode::LogKeys),
            other => Err(Error::Params(format!("unknown key mode {other:?}"))),
        }
    }
}

impl KeyMode {
    pub fn name(self) -> &'static str {
        match self {
            KeyMode::AllKeys => "all-keys",
            KeyMode::LogKeys => "log-keys",
        }
    }
}

/// Galois element rotating each row left by `step` slots.
pub fn galois_element_for_step(n: usize, step: i64) -> u64 {
    let half = (n / 2) as i64;
    let k = step.rem_euclid(half) as u64;
    let two_n = 2 * n as u64;
    let mut g = 1u64;
    for _ in 0..k {
        g = g * 3 % two_n;
    }
    g
}

pub fn row_swap_element(n: usize) -> u64 {
    2 * n as u64 - 1
}

/// Galois elements applied, in order, to rotate by `step` under `mode`.
pub fn rotation_plan(n: usize, step: i64, mode: KeyMode) -> Vec<u64> {
    let half = (n / 2) as i64;
    let k = step.rem_euclid(half);
    if k == 0 {
        return Vec::new();
    }
    match mode {
        KeyMode::AllKeys => vec![galois_element_for_step(n, k)],
        KeyMode::LogKeys => (0..half.trailing_zeros())
            .filter(|bit| k >> bit & 1 == 1)
            .map(|bit| galois_element_for_step(n, 1 << bit))
            .collect(),
    }
}

/// Galois keys held by the cloud for one secret.
#[derive(Clone, Debug)]
pub struct GaloisKeys {
    owner: KeyOwner,
    mode: KeyMode,
    keys: BTreeMap<u64, Arc<EvaluationKey>>,
}

impl GaloisKeys {
    /// `steps` lists the rotations needed in all-keys mode (`None` means
    /// every row rotation); it is ignored in log-keys mode.
    pub fn generate<R: RngCore>(
        ctx: &RingContext,
        sk: &SecretKey,
        mode: KeyMode,
        steps: Option<&[i64]>,
        base: u64,
        rng: &mut R,
    ) -> Result<Self> {
        let n = ctx.n();
        let half = (n / 2) as i64;
        let mut elements: Vec<u64> = match mode {
            KeyMode::LogKeys => (0..half.trailing_zeros())
                .map(|bit| galois_element_for_step(n, 1 << bit))
                .collect(),
            KeyMode::AllKeys => {
                let mut ks: Vec<i64> = match steps {
                    Some(s) => s.iter().map(|&k| k.rem_euclid(half)).filter(|&k| k != 0).collect(),
                    None => (1..half).collect(),
                };
                ks.sort_unstable();
                ks.dedup();
                ks.into_iter().map(|k| galois_element_for_step(n, k)).collect()
            }
        };
        elements.push(row_swap_element(n));
        let mut keys = BTreeMap::new();
        for g in elements {
            keys.insert(g, Arc::new(EvaluationKey::generate(ctx, sk, g, base, rng)?));
        }
        Ok(GaloisKeys {
            owner: sk.owner(),
            mode,
            keys,
        })
    }

    /// A key set with no elements, for layers that never rotate.
    pub fn empty(owner: KeyOwner, mode: KeyMode) -> Self {
        GaloisKeys {
            owner,
            mode,
            keys: BTreeMap::new(),
        }
    }

    pub fn owner(&self) -> KeyOwner {
        self.owner
    }

    pub fn mode(&self) -> KeyMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn elements(&self) -> impl Iterator<Item = u64> + '_ {
        self.keys.keys().copied()
    }

    pub fn get(&self, g: u64) -> Result<&EvaluationKey> {
        self.keys
            .get(&g)
            .map(|k| k.as_ref())
            .ok_or(Error::MissingGaloisKey { element: g })
    }

    pub fn base(&self) -> Option<u64> {
        self.keys.values().next().map(|k| k.switch_key().base())
    }

    pub fn write_to(&self, ctx: &RingContext, w: &mut Writer) {
        w.u8(tags::GALOIS_KEY_SET);
        w.u8(self.owner.tag());
        w.u8(match self.mode {
            KeyMode::AllKeys => 0,
            KeyMode::LogKeys => 1,
        });
        w.u32(self.keys.len() as u32);
        for k in self.keys.values() {
            k.write_to(ctx, w);
        }
    }

    pub fn read_from(ctx: &RingContext, r: &mut Reader<'_>) -> Result<Self> {
        tags::expect(r, tags::GALOIS_KEY_SET)?;
        let owner = KeyOwner::from_tag(r.u8()?)?;
        let mode = match r.u8()? {
            0 => KeyMode::AllKeys,
            1 => KeyMode::LogKeys,
            m => return Err(Error::Decode(format!("unknown key mode {m}"))),
        };
        let count = r.count(16)?;
        let mut keys = BTreeMap::new();
        for _ in 0..count {
            let k = EvaluationKey::read_from(ctx, r)?;
            if k.owner() != owner {
                return Err(Error::Decode("galois key owner differs from its set".into()));
            }
            keys.insert(k.galois_element(), Arc::new(k));
        }
        Ok(GaloisKeys { owner, mode, keys })
    }
}
