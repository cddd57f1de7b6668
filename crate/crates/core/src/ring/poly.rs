use std::sync::Arc;

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};

use super::modulus::Modulus;
use super::ntt::NttTable;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Domain {
    Coefficient,
    Evaluation,
}

/// An element of `Z_m[x]/(x^n + 1)` tagged with its modulus and domain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Polynomial {
    coeffs: Vec<u64>,
    modulus: u64,
    domain: Domain,
}

impl Polynomial {
    pub fn zero(n: usize, modulus: u64) -> Self {
        Polynomial {
            coeffs: vec![0; n],
            modulus,
            domain: Domain::Coefficient,
        }
    }

    /// Coefficient-domain polynomial; every value must already be reduced.
    pub fn from_coeffs(coeffs: Vec<u64>, modulus: u64) -> Result<Self> {
        if let Some(c) = coeffs.iter().find(|&&c| c >= modulus) {
            return Err(Error::OutOfRange(format!("coefficient {c} >= modulus {modulus}")));
        }
        Ok(Polynomial {
            coeffs,
            modulus,
            domain: Domain::Coefficient,
        })
    }

    pub(crate) fn from_raw(coeffs: Vec<u64>, modulus: u64, domain: Domain) -> Self {
        Polynomial { coeffs, modulus, domain }
    }

    pub fn coeffs(&self) -> &[u64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<u64> {
        self.coeffs
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0)
    }

    /// Largest centered coefficient magnitude.
    pub fn inf_norm(&self) -> u64 {
        let half = self.modulus / 2;
        self.coeffs
            .iter()
            .map(|&c| if c > half { self.modulus - c } else { c })
            .max()
            .unwrap_or(0)
    }

    /// 8-byte little-endian count, then one 8-byte word per coefficient.
    pub fn write_to(&self, w: &mut Writer) {
        w.u64(self.coeffs.len() as u64);
        for &c in &self.coeffs {
            w.u64(c);
        }
    }

    pub fn read_from(r: &mut Reader<'_>, modulus: u64) -> Result<Self> {
        let n = r.u64()? as usize;
        if n > 1 << 20 {
            return Err(Error::Decode(format!("polynomial length {n} too large")));
        }
        let mut coeffs = Vec::with_capacity(n);
        for _ in 0..n {
            coeffs.push(r.u64()?);
        }
        Polynomial::from_coeffs(coeffs, modulus).map_err(|e| Error::Decode(e.to_string()))
    }
}

/// Arithmetic context for one `(n, modulus)` pair.
#[derive(Clone, Debug)]
pub struct PolyRing {
    n: usize,
    modulus: Modulus,
    ntt: Option<Arc<NttTable>>,
}

impl PolyRing {
    /// Builds the NTT tables when the modulus permits, schoolbook otherwise.
    pub fn new(n: usize, modulus: u64) -> Result<Self> {
        if !n.is_power_of_two() || n < 2 {
            return Err(Error::Params(format!("ring degree {n} is not a power of two >= 2")));
        }
        let m = Modulus::new(modulus);
        let ntt = NttTable::new(n, m).ok().map(Arc::new);
        Ok(PolyRing { n, modulus: m, ntt })
    }

    /// Like [`PolyRing::new`] but fails when no negacyclic NTT exists.
    pub fn with_ntt(n: usize, modulus: u64) -> Result<Self> {
        let m = Modulus::new(modulus);
        let table = NttTable::new(n, m)?;
        Ok(PolyRing {
            n,
            modulus: m,
            ntt: Some(Arc::new(table)),
        })
    }

    pub fn degree(&self) -> usize {
        self.n
    }

    pub fn modulus(&self) -> &Modulus {
        &self.modulus
    }

    pub fn ntt_table(&self) -> Option<&NttTable> {
        self.ntt.as_deref()
    }

    pub fn zero(&self) -> Polynomial {
        Polynomial::zero(self.n, self.modulus.value())
    }

    pub fn constant(&self, c: u64) -> Polynomial {
        let mut p = self.zero();
        p.coeffs[0] = self.modulus.reduce(c);
        p
    }

    pub fn from_signed(&self, values: &[i64]) -> Polynomial {
        assert_eq!(values.len(), self.n);
        Polynomial::from_raw(
            values.iter().map(|&v| self.modulus.from_i64(v)).collect(),
            self.modulus.value(),
            Domain::Coefficient,
        )
    }

    fn check(&self, p: &Polynomial) -> Result<()> {
        if p.modulus != self.modulus.value() || p.coeffs.len() != self.n {
            return Err(Error::Mismatch(format!(
                "polynomial (n={}, modulus={}) used in ring (n={}, modulus={})",
                p.coeffs.len(),
                p.modulus,
                self.n,
                self.modulus.value()
            )));
        }
        Ok(())
    }

    fn check_pair(&self, a: &Polynomial, b: &Polynomial) -> Result<()> {
        self.check(a)?;
        self.check(b)?;
        if a.domain != b.domain {
            return Err(Error::Mismatch("operands are in different domains".into()));
        }
        Ok(())
    }

    pub fn ntt_forward(&self, p: &Polynomial) -> Result<Polynomial> {
        let mut out = p.clone();
        self.ntt_forward_in_place(&mut out)?;
        Ok(out)
    }

    pub fn ntt_forward_in_place(&self, p: &mut Polynomial) -> Result<()> {
        self.check(p)?;
        if p.domain != Domain::Coefficient {
            return Err(Error::Mismatch("forward NTT expects the coefficient domain".into()));
        }
        let table = self.require_ntt()?;
        table.forward(&mut p.coeffs);
        p.domain = Domain::Evaluation;
        Ok(())
    }

    pub fn ntt_inverse(&self, p: &Polynomial) -> Result<Polynomial> {
        let mut out = p.clone();
        self.ntt_inverse_in_place(&mut out)?;
        Ok(out)
    }

    pub fn ntt_inverse_in_place(&self, p: &mut Polynomial) -> Result<()> {
        self.check(p)?;
        if p.domain != Domain::Evaluation {
            return Err(Error::Mismatch("inverse NTT expects the evaluation domain".into()));
        }
        let table = self.require_ntt()?;
        table.inverse(&mut p.coeffs);
        p.domain = Domain::Coefficient;
        Ok(())
    }

    fn require_ntt(&self) -> Result<&NttTable> {
        self.ntt.as_deref().ok_or_else(|| {
            Error::Params(format!(
                "modulus {} has no primitive {}-th root of unity",
                self.modulus.value(),
                2 * self.n
            ))
        })
    }

    pub fn add(&self, a: &Polynomial, b: &Polynomial) -> Result<Polynomial> {
        let mut out = a.clone();
        self.add_assign(&mut out, b)?;
        Ok(out)
    }

    pub fn add_assign(&self, a: &mut Polynomial, b: &Polynomial) -> Result<()> {
        self.check_pair(a, b)?;
        let m = &self.modulus;
        for (x, &y) in a.coeffs.iter_mut().zip(&b.coeffs) {
            *x = m.add(*x, y);
        }
        Ok(())
    }

    pub fn sub(&self, a: &Polynomial, b: &Polynomial) -> Result<Polynomial> {
        let mut out = a.clone();
        self.sub_assign(&mut out, b)?;
        Ok(out)
    }

    pub fn sub_assign(&self, a: &mut Polynomial, b: &Polynomial) -> Result<()> {
        self.check_pair(a, b)?;
        let m = &self.modulus;
        for (x, &y) in a.coeffs.iter_mut().zip(&b.coeffs) {
            *x = m.sub(*x, y);
        }
        Ok(())
    }

    pub fn neg(&self, a: &Polynomial) -> Result<Polynomial> {
        self.check(a)?;
        let m = &self.modulus;
        let mut out = a.clone();
        for x in out.coeffs.iter_mut() {
            *x = m.neg(*x);
        }
        Ok(out)
    }

    pub fn scalar_mul(&self, a: &Polynomial, c: u64) -> Result<Polynomial> {
        self.check(a)?;
        let m = &self.modulus;
        let c = m.reduce(c);
        let cs = m.shoup(c);
        let mut out = a.clone();
        for x in out.coeffs.iter_mut() {
            *x = m.mul_shoup(*x, c, cs);
        }
        Ok(out)
    }

    /// Slot-wise product of two evaluation-domain polynomials.
    pub fn pointwise(&self, a: &Polynomial, b: &Polynomial) -> Result<Polynomial> {
        self.check_pair(a, b)?;
        if a.domain != Domain::Evaluation {
            return Err(Error::Mismatch("pointwise product expects the evaluation domain".into()));
        }
        let m = &self.modulus;
        let coeffs = a.coeffs.iter().zip(&b.coeffs).map(|(&x, &y)| m.mul(x, y)).collect();
        Ok(Polynomial::from_raw(coeffs, m.value(), Domain::Evaluation))
    }

    /// `acc += a * b` in the evaluation domain.
    pub fn pointwise_accumulate(&self, acc: &mut Polynomial, a: &Polynomial, b: &Polynomial) -> Result<()> {
        self.check_pair(acc, a)?;
        self.check_pair(a, b)?;
        let m = &self.modulus;
        for ((z, &x), &y) in acc.coeffs.iter_mut().zip(&a.coeffs).zip(&b.coeffs) {
            *z = m.add(*z, m.mul(x, y));
        }
        Ok(())
    }

    /// Negacyclic product of two coefficient-domain polynomials.
    pub fn mul(&self, a: &Polynomial, b: &Polynomial) -> Result<Polynomial> {
        self.check_pair(a, b)?;
        if a.domain != Domain::Coefficient {
            return Err(Error::Mismatch("ring product expects the coefficient domain".into()));
        }
        match &self.ntt {
            Some(table) => {
                let mut x = a.coeffs.clone();
                let mut y = b.coeffs.clone();
                table.forward(&mut x);
                table.forward(&mut y);
                let m = &self.modulus;
                for (u, &v) in x.iter_mut().zip(&y) {
                    *u = m.mul(*u, v);
                }
                table.inverse(&mut x);
                Ok(Polynomial::from_raw(x, m.value(), Domain::Coefficient))
            }
            None => Ok(self.schoolbook(a, b)),
        }
    }

    fn schoolbook(&self, a: &Polynomial, b: &Polynomial) -> Polynomial {
        let m = &self.modulus;
        let n = self.n;
        let mut out = vec![0u64; n];
        for (i, &x) in a.coeffs.iter().enumerate() {
            if x == 0 {
                continue;
            }
            for (j, &y) in b.coeffs.iter().enumerate() {
                let prod = m.mul(x, y);
                let k = i + j;
                if k < n {
                    out[k] = m.add(out[k], prod);
                } else {
                    out[k - n] = m.sub(out[k - n], prod);
                }
            }
        }
        Polynomial::from_raw(out, m.value(), Domain::Coefficient)
    }

    /// `p(x) -> p(x^g)` for odd `g`, in the coefficient domain.
    pub fn automorphism(&self, p: &Polynomial, g: u64) -> Result<Polynomial> {
        self.check(p)?;
        if p.domain != Domain::Coefficient {
            return Err(Error::Mismatch("automorphism expects the coefficient domain".into()));
        }
        let two_n = 2 * self.n as u64;
        if g.is_multiple_of(2) {
            return Err(Error::Params(format!("galois element {g} is even")));
        }
        let m = &self.modulus;
        let mut out = vec![0u64; self.n];
        let g = g % two_n;
        for (i, &c) in p.coeffs.iter().enumerate() {
            let idx = (i as u64 * g) % two_n;
            if idx < self.n as u64 {
                out[idx as usize] = c;
            } else {
                out[(idx - self.n as u64) as usize] = m.neg(c);
            }
        }
        Ok(Polynomial::from_raw(out, m.value(), Domain::Coefficient))
    }
}
