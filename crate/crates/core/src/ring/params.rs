use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::modulus::is_prime;

/// Plaintext modulus shared by the presets: a 19-bit prime that is 1 mod 8192.
pub const PRESET_T: u64 = 417_793;
/// 60-bit ciphertext prime, 1 mod `8192 * PRESET_T`, so it supports every
/// preset degree and leaves `q mod t = 1`.
pub const PRESET_Q: u64 = 1_152_921_464_242_716_673;
pub const PRESET_SIGMA: f64 = 3.2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RingParams {
    pub n: usize,
    pub q: u64,
    pub t: u64,
    pub sigma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// n = 256; fast enough for unit tests of whole sessions.
    Mini,
    /// n = 2048.
    Toy,
    /// n = 4096 with a 19-bit plaintext and 60-bit ciphertext modulus.
    Paper,
}

impl Preset {
    pub fn params(self) -> RingParams {
        let n = match self {
            Preset::Mini => 256,
            Preset::Toy => 2048,
            Preset::Paper => 4096,
        };
        RingParams {
            n,
            q: PRESET_Q,
            t: PRESET_T,
            sigma: PRESET_SIGMA,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Mini => "mini",
            Preset::Toy => "toy",
            Preset::Paper => "paper",
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mini" => Ok(Preset::Mini),
            "toy" => Ok(Preset::Toy),
            "paper" => Ok(Preset::Paper),
            other => Err(Error::Params(format!("unknown preset {other:?} (expected mini, toy or paper)"))),
        }
    }
}

impl RingParams {
    pub fn new(n: usize, q: u64, t: u64, sigma: f64) -> Result<Self> {
        let p = RingParams { n, q, t, sigma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let two_n = 2 * self.n as u64;
        if self.n < 2 || !self.n.is_power_of_two() {
            return Err(Error::Params(format!("n = {} is not a power of two >= 2", self.n)));
        }
        if self.q >= 1 << 62 {
            return Err(Error::Params(format!("q = {} does not fit below 2^62", self.q)));
        }
        if !is_prime(self.q) {
            return Err(Error::Params(format!("q = {} is not prime", self.q)));
        }
        if !is_prime(self.t) {
            return Err(Error::Params(format!("t = {} is not prime", self.t)));
        }
        if self.q <= self.t {
            return Err(Error::Params(format!("q = {} must exceed t = {}", self.q, self.t)));
        }
        if self.q % two_n != 1 {
            return Err(Error::Params(format!("q = {} is not 1 mod 2n = {two_n}", self.q)));
        }
        if self.t % two_n != 1 {
            return Err(Error::Params(format!("t = {} is not 1 mod 2n = {two_n}", self.t)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Params(format!("sigma = {} must be positive", self.sigma)));
        }
        Ok(())
    }

    /// Bit width of plaintext residues, `ceil(log2 t)`.
    pub fn t_bits(&self) -> u32 {
        64 - (self.t - 1).leading_zeros()
    }

    /// Slots per batching row.
    pub fn row_size(&self) -> usize {
        self.n / 2
    }

    /// Per-coefficient error bound `ceil(6 sigma)` of the truncated sampler.
    pub fn error_bound(&self) -> u64 {
        (6.0 * self.sigma).ceil() as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for p in [Preset::Mini, Preset::Toy, Preset::Paper] {
            let params = p.params();
            params.validate().unwrap();
            assert_eq!(params.t_bits(), 19);
            assert_eq!(64 - params.q.leading_zeros(), 60);
            assert_eq!(params.q % params.t, 1);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(RingParams::new(6, 97, 17, 3.2).is_err());
        assert!(RingParams::new(8, 96, 17, 3.2).is_err());
        assert!(RingParams::new(8, 97, 13, 3.2).is_err());
        assert!(RingParams::new(8, 17, 97, 3.2).is_err());
        assert!(RingParams::new(8, 97, 17, 0.0).is_err());
        assert!(RingParams::new(8, 97, 17, 3.2).is_ok());
    }
}
