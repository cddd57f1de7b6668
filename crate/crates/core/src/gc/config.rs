use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LABEL_BITS: u32 = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GcMode {
    /// Shares in Z_t, full-width adders with conditional subtraction of t.
    #[serde(rename = "mod_t")]
    ModT,
    /// Shares truncated by f bits, arithmetic mod 2^b without wrap handling.
    #[serde(rename = "truncated")]
    Truncated,
}

impl GcMode {
    pub fn name(self) -> &'static str {
        match self {
            GcMode::ModT => "mod_t",
            GcMode::Truncated => "truncated",
        }
    }
}

impl fmt::Display for GcMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GcMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mod_t" | "mod-t" | "modt" => Ok(GcMode::ModT),
            "truncated" | "trunc" => Ok(GcMode::Truncated),
            _ => Err(Error::Params(format!("unknown gc mode `{s}`"))),
        }
    }
}

pub fn bit_width(t: u64) -> u32 {
    64 - (t - 1).leading_zeros()
}

/// Widths for the activation circuits.
///
/// In truncated mode operands are `b` bits and the output is `out_bits`
/// bits, reduced mod `2^out_bits`; the protocol picks `out_bits = t_bits`
/// and an output mask that cannot wrap past `t`. In mod-t mode all words are
/// `t_bits` wide and reduced mod `t`, and `f` is the shift applied after the
/// ReLU.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GcConfig {
    pub mode: GcMode,
    pub t: u64,
    pub t_bits: u32,
    pub f: u32,
    pub b: u32,
    pub out_bits: u32,
    pub label_bits: u32,
    /// Adds an f-bit borrow stage so truncation is exact instead of `+1`-off.
    pub exact: bool,
}

impl GcConfig {
    pub fn mod_t(t: u64, f: u32) -> Result<Self> {
        if t < 3 {
            return Err(Error::Params(format!("plaintext modulus {t}")));
        }
        let t_bits = bit_width(t);
        let cfg = GcConfig {
            mode: GcMode::ModT,
            t,
            t_bits,
            f,
            b: t_bits,
            out_bits: t_bits,
            label_bits: LABEL_BITS,
            exact: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn truncated(t: u64, f: u32) -> Result<Self> {
        if t < 3 {
            return Err(Error::Params(format!("plaintext modulus {t}")));
        }
        let t_bits = bit_width(t);
        let b = t_bits.checked_sub(f).ok_or_else(|| Error::Params(format!("f = {f} exceeds {t_bits} bits")))?;
        let cfg = GcConfig {
            mode: GcMode::Truncated,
            t,
            t_bits,
            f,
            b,
            out_bits: b,
            label_bits: LABEL_BITS,
            exact: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Truncated mode on `b`-bit operands with nothing dropped.
    pub fn with_width(b: u32) -> Result<Self> {
        if b == 0 || b > 62 {
            return Err(Error::Params(format!("circuit width {b}")));
        }
        Self::truncated(1 << b, 0)
    }

    pub fn with_out_bits(mut self, out_bits: u32) -> Result<Self> {
        self.out_bits = out_bits;
        self.validate()?;
        Ok(self)
    }

    pub fn with_exact(mut self, exact: bool) -> Result<Self> {
        self.exact = exact;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Params(m));
        if self.t < 3 || self.t_bits != bit_width(self.t) {
            return bad(format!("t_bits {} does not match t = {}", self.t_bits, self.t));
        }
        if self.b == 0 || self.b > self.t_bits {
            return bad(format!("width b = {} outside [1, {}]", self.b, self.t_bits));
        }
        if self.label_bits != LABEL_BITS {
            return bad(format!("only {LABEL_BITS}-bit labels are supported, got {}", self.label_bits));
        }
        match self.mode {
            GcMode::ModT => {
                if self.b != self.t_bits || self.out_bits != self.t_bits {
                    return bad("mod-t circuits run at full width".into());
                }
                if self.f >= self.t_bits {
                    return bad(format!("shift {} drops every bit", self.f));
                }
                if self.exact {
                    return bad("exact truncation only applies to truncated mode".into());
                }
            }
            GcMode::Truncated => {
                if self.b + self.f > self.t_bits {
                    return bad(format!("b + f = {} exceeds t_bits = {}", self.b + self.f, self.t_bits));
                }
                if self.out_bits < self.b || self.out_bits > 63 {
                    return bad(format!("output width {} must be in [b, 63]", self.out_bits));
                }
                if self.exact && self.f == 0 {
                    return bad("exact truncation needs f > 0".into());
                }
            }
        }
        Ok(())
    }

    /// Width of each operand share.
    pub fn share_width(&self) -> u32 {
        self.b
    }

    pub fn out_width(&self) -> u32 {
        self.out_bits
    }

    pub fn label_bytes(&self) -> usize {
        self.label_bits as usize / 8
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn widths() {
        assert_eq!(bit_width(417793), 19);
        assert_eq!(bit_width(1 << 10), 10);
        assert_eq!(bit_width(521), 10);
        let c = GcConfig::truncated(417793, 9).unwrap();
        assert_eq!((c.b, c.t_bits), (10, 19));
        assert!(GcConfig::truncated(417793, 19).is_err());
        assert!(GcConfig::with_width(0).is_err());
        assert!(GcConfig::mod_t(417793, 0).unwrap().with_exact(true).is_err());
        assert_eq!("mod-t".parse::<GcMode>().unwrap(), GcMode::ModT);
    }
}
