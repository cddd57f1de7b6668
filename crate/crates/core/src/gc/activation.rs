use serde::{Deserialize, Serialize};

use super::circuit::{from_bits, to_bits, Bit, BooleanCircuit, CircuitBuilder, Word};
use super::config::{GcConfig, GcMode};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivationKind {
    Relu,
    MaxPool,
    /// ReLU then MaxPool in one circuit: `max(relu(x_i)) = relu(max(x_i))`.
    ReluMaxPool,
}

impl ActivationKind {
    pub fn tag(self) -> u8 {
        match self {
            ActivationKind::Relu => 1,
            ActivationKind::MaxPool => 2,
            ActivationKind::ReluMaxPool => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            1 => Ok(ActivationKind::Relu),
            2 => Ok(ActivationKind::MaxPool),
            3 => Ok(ActivationKind::ReluMaxPool),
            _ => Err(Error::Decode(format!("unknown activation tag {tag}"))),
        }
    }

    pub fn has_relu(self) -> bool {
        !matches!(self, ActivationKind::MaxPool)
    }
}

/// One activation instance as a circuit, together with the input and output
/// bit layout both parties agree on.
///
/// Garbler inputs, in order: for each of the `arity` operands its share
/// (`share_width` bits) and, with exact truncation, the low `f` bits of its
/// mask; then the output mask `s_y` (`out_width` bits). Evaluator inputs: for
/// each operand its share and, with exact truncation, its low `f` bits.
#[derive(Clone, Debug)]
pub struct ActivationCircuit {
    pub kind: ActivationKind,
    pub cfg: GcConfig,
    pub arity: usize,
    pub circuit: BooleanCircuit,
}

struct Inputs {
    garbler: Vec<(Word, Word)>,
    evaluator: Vec<(Word, Word)>,
    s_y: Word,
}

impl ActivationCircuit {
    pub fn relu(cfg: GcConfig) -> Result<Self> {
        Self::build(cfg, ActivationKind::Relu, 1)
    }

    pub fn maxpool(cfg: GcConfig, pool: usize, fused_relu: bool) -> Result<Self> {
        if pool < 2 {
            return Err(Error::Params(format!("pool of {pool} values")));
        }
        let kind = if fused_relu { ActivationKind::ReluMaxPool } else { ActivationKind::MaxPool };
        Self::build(cfg, kind, pool)
    }

    pub fn build(cfg: GcConfig, kind: ActivationKind, arity: usize) -> Result<Self> {
        cfg.validate()?;
        if kind == ActivationKind::Relu && arity != 1 {
            return Err(Error::Params("relu takes one operand".into()));
        }
        if cfg.mode == GcMode::ModT && kind == ActivationKind::MaxPool && cfg.f > 0 {
            return Err(Error::Params(
                "mod-t max pool without relu cannot shift signed values; use f = 0".into(),
            ));
        }
        let mut b = CircuitBuilder::new();
        let inputs = Self::declare_inputs(&mut b, &cfg, arity);
        let out = match cfg.mode {
            GcMode::Truncated => truncated_body(&mut b, &cfg, kind, &inputs),
            GcMode::ModT => mod_t_body(&mut b, &cfg, kind, &inputs),
        };
        let circuit = b.finish(&out);
        debug_assert!(circuit.is_well_formed());
        Ok(ActivationCircuit { kind, cfg, arity, circuit })
    }

    fn declare_inputs(b: &mut CircuitBuilder, cfg: &GcConfig, arity: usize) -> Inputs {
        let w = cfg.share_width() as usize;
        let low = if cfg.exact { cfg.f as usize } else { 0 };
        let garbler = (0..arity).map(|_| (b.garbler_input(w), b.garbler_input(low))).collect();
        let s_y = b.garbler_input(cfg.out_width() as usize);
        let evaluator = (0..arity).map(|_| (b.evaluator_input(w), b.evaluator_input(low))).collect();
        Inputs { garbler, evaluator, s_y }
    }

    pub fn share_width(&self) -> usize {
        self.cfg.share_width() as usize
    }

    pub fn out_width(&self) -> usize {
        self.cfg.out_width() as usize
    }

    fn low_width(&self) -> usize {
        if self.cfg.exact {
            self.cfg.f as usize
        } else {
            0
        }
    }

    /// `low` is ignored unless exact truncation is enabled.
    pub fn garbler_bits(&self, shares: &[u64], low: &[u64], s_y: u64) -> Result<Vec<bool>> {
        let mut bits = self.operand_bits(shares, low)?;
        bits.extend(to_bits(s_y, self.out_width()));
        Ok(bits)
    }

    pub fn evaluator_bits(&self, shares: &[u64], low: &[u64]) -> Result<Vec<bool>> {
        self.operand_bits(shares, low)
    }

    fn operand_bits(&self, shares: &[u64], low: &[u64]) -> Result<Vec<bool>> {
        if shares.len() != self.arity || (self.cfg.exact && low.len() != self.arity) {
            return Err(Error::Mismatch(format!("{} shares for an activation of arity {}", shares.len(), self.arity)));
        }
        let mut bits = Vec::with_capacity(self.arity * (self.share_width() + self.low_width()));
        for i in 0..self.arity {
            bits.extend(to_bits(shares[i], self.share_width()));
            if self.cfg.exact {
                bits.extend(to_bits(low[i], self.low_width()));
            }
        }
        Ok(bits)
    }

    pub fn decode_output(&self, bits: &[bool]) -> u64 {
        from_bits(bits)
    }

    /// Evaluates the plain circuit on share values.
    pub fn eval_plain(&self, garbler: (&[u64], &[u64], u64), evaluator: (&[u64], &[u64])) -> Result<u64> {
        let g = self.garbler_bits(garbler.0, garbler.1, garbler.2)?;
        let e = self.evaluator_bits(evaluator.0, evaluator.1)?;
        Ok(self.decode_output(&self.circuit.evaluate(&g, &e)))
    }
}

fn zero_extend(w: &[Bit], width: usize) -> Word {
    let mut out = w.to_vec();
    out.resize(width, Bit::Const(false));
    out
}

fn sign_extend(w: &[Bit], width: usize) -> Word {
    let mut out = w.to_vec();
    let top = *w.last().expect("empty word");
    out.resize(width, top);
    out
}

/// Clears a two's-complement word when its sign bit is set.
fn relu_word(b: &mut CircuitBuilder, x: &[Bit]) -> Word {
    let top = x.len() - 1;
    let keep = b.not(x[top]);
    let mut out: Word = x[..top].iter().map(|&v| b.and(v, keep)).collect();
    out.push(Bit::Const(false));
    out
}

fn truncated_body(b: &mut CircuitBuilder, cfg: &GcConfig, kind: ActivationKind, inp: &Inputs) -> Word {
    let xs: Vec<Word> = inp
        .garbler
        .iter()
        .zip(&inp.evaluator)
        .map(|((s, s_low), (p, p_low))| {
            let x = b.add_mod(s, p);
            if cfg.exact {
                // the low parts carried into the kept bits iff p_low < r_low
                let no_carry = b.ge_unsigned(p_low, s_low);
                let carry = b.not(no_carry);
                let minus: Word = vec![carry; x.len()];
                b.add_mod(&x, &minus)
            } else {
                x
            }
        })
        .collect();
    let mut v = max_tree(b, xs, |b, x, y| b.ge_signed(x, y));
    let out_w = cfg.out_width() as usize;
    v = if kind.has_relu() {
        zero_extend(&relu_word(b, &v), out_w)
    } else {
        sign_extend(&v, out_w)
    };
    b.add_mod(&v, &inp.s_y)
}

fn max_tree(b: &mut CircuitBuilder, mut xs: Vec<Word>, ge: impl Fn(&mut CircuitBuilder, &[Bit], &[Bit]) -> Bit) -> Word {
    while xs.len() > 1 {
        let mut next = Vec::with_capacity(xs.len().div_ceil(2));
        for pair in xs.chunks(2) {
            if let [x, y] = pair {
                let s = ge(b, x, y);
                next.push(b.mux_word(s, x, y));
            } else {
                next.push(pair[0].clone());
            }
        }
        xs = next;
    }
    xs.pop().expect("empty operand list")
}

/// `(x + y) mod t` for `x, y < t`.
fn add_mod_t(b: &mut CircuitBuilder, x: &[Bit], y: &[Bit], t: u64) -> Word {
    let w = x.len();
    let (mut sum, carry) = b.add(x, y, Bit::Const(false), true);
    sum.push(carry.unwrap());
    let tw = CircuitBuilder::constant(t, w + 1);
    let (diff, ge) = b.sub(&sum, &tw, true);
    b.mux_word(ge.unwrap(), &diff[..w], &sum[..w])
}

fn mod_t_body(b: &mut CircuitBuilder, cfg: &GcConfig, kind: ActivationKind, inp: &Inputs) -> Word {
    let t = cfg.t;
    let w = cfg.t_bits as usize;
    let half = CircuitBuilder::constant(t.div_ceil(2), w);
    // a residue is negative in the centred lift iff it is at least (t + 1) / 2
    let mut vals: Vec<(Word, Bit)> = inp
        .garbler
        .iter()
        .zip(&inp.evaluator)
        .map(|((s, _), (p, _))| {
            let x = add_mod_t(b, s, p, t);
            let neg = b.ge_unsigned(&x, &half);
            (x, neg)
        })
        .collect();
    while vals.len() > 1 {
        let mut next = Vec::with_capacity(vals.len().div_ceil(2));
        for pair in vals.chunks(2) {
            if let [(x, nx), (y, ny)] = pair {
                let uge = b.ge_unsigned(x, y);
                let differ = b.xor(*nx, *ny);
                // with equal signs the residues order like the values
                let ge = b.mux(differ, *ny, uge);
                let m = b.mux_word(ge, x, y);
                let nm = b.mux(ge, *nx, *ny);
                next.push((m, nm));
            } else {
                next.push(pair[0].clone());
            }
        }
        vals = next;
    }
    let (x, neg) = vals.pop().expect("empty operand list");
    let v: Word = if kind.has_relu() {
        // the shift by f is wiring, so the dropped bits are never computed
        let keep = b.not(neg);
        let mut shifted: Word = x[cfg.f as usize..].iter().map(|&v| b.and(v, keep)).collect();
        shifted.resize(w, Bit::Const(false));
        shifted
    } else {
        x
    };
    add_mod_t(b, &v, &inp.s_y, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signed(v: u64, bits: u32) -> i64 {
        let v = v & ((1 << bits) - 1);
        if v >> (bits - 1) == 1 {
            v as i64 - (1i64 << bits)
        } else {
            v as i64
        }
    }

    #[test]
    fn relu_examples() {
        let cfg = GcConfig::with_width(8).unwrap();
        let c = ActivationCircuit::relu(cfg).unwrap();
        let m = 0xff;
        // x = 0
        assert_eq!(c.eval_plain((&[17], &[], 42), (&[(256 - 17) & m], &[])).unwrap(), 42);
        // x = -5
        assert_eq!(c.eval_plain((&[100], &[], 42), (&[(256 - 105) & m], &[])).unwrap(), 42);
        // x = 9
        assert_eq!(c.eval_plain((&[100], &[], 42), (&[(9 + 256 - 100) & m], &[])).unwrap(), 51);
    }

    #[test]
    fn truncated_relu_exhaustive_at_four_bits() {
        let c = ActivationCircuit::relu(GcConfig::with_width(4).unwrap()).unwrap();
        for s in 0..16u64 {
            for p in 0..16u64 {
                for y in 0..16u64 {
                    let x = signed(s + p, 4);
                    let want = (x.max(0) as u64 + y) % 16;
                    assert_eq!(c.eval_plain((&[s], &[], y), (&[p], &[])).unwrap(), want);
                }
            }
        }
    }

    #[test]
    fn mod_t_relu_against_oracle() {
        let t = 521u64;
        for f in [0u32, 3] {
            let cfg = GcConfig::mod_t(t, f).unwrap();
            let c = ActivationCircuit::relu(cfg).unwrap();
            for x in (0..t).step_by(7) {
                for s in [0u64, 1, 260, 520] {
                    let p = (x + t - s) % t;
                    let s_y = (x * 31 + s) % t;
                    let centred = if x > t / 2 { x as i64 - t as i64 } else { x as i64 };
                    let want = ((centred.max(0) as u64 >> f) + s_y) % t;
                    assert_eq!(c.eval_plain((&[s], &[], s_y), (&[p], &[])).unwrap(), want, "x={x} s={s}");
                }
            }
        }
    }

    #[test]
    fn exact_truncation_removes_the_carry() {
        let (t, f) = (521u64, 3u32);
        let cfg = GcConfig::truncated(t, f).unwrap().with_exact(true).unwrap();
        let c = ActivationCircuit::relu(cfg).unwrap();
        let bw = cfg.b;
        let mask = (1u64 << bw) - 1;
        for x in -60i64..60 {
            for r in [64u64, 77, 100, 255] {
                let p = (x + r as i64) as u64;
                let s_share = (mask + 1 - (r >> f)) & mask;
                let got = c
                    .eval_plain((&[s_share], &[r & 7], 0), (&[(p >> f) & mask], &[p & 7]))
                    .unwrap();
                assert_eq!(got as i64, (x >> f).max(0), "x={x} r={r}");
            }
        }
    }

    #[test]
    fn maxpool_examples() {
        let cfg = GcConfig::with_width(6).unwrap();
        let c = ActivationCircuit::maxpool(cfg, 4, false).unwrap();
        let zeros = [0u64; 4];
        // all four equal to -3
        let v = 64 - 3;
        assert_eq!(c.eval_plain((&zeros, &[], 5), (&[v; 4], &[])).unwrap(), (64 - 3 + 5) % 64);
        // {min, 0, 0, 0}
        assert_eq!(c.eval_plain((&zeros, &[], 5), (&[32, 0, 0, 0], &[])).unwrap(), 5);
        let fused = ActivationCircuit::maxpool(cfg, 4, true).unwrap();
        assert_eq!(fused.eval_plain((&zeros, &[], 5), (&[v; 4], &[])).unwrap(), 5);
    }

    #[test]
    fn mod_t_maxpool_signed_order() {
        let t = 521u64;
        let cfg = GcConfig::mod_t(t, 0).unwrap();
        let c = ActivationCircuit::maxpool(cfg, 4, false).unwrap();
        let enc = |v: i64| v.rem_euclid(t as i64) as u64;
        for vals in [[-5i64, -7, -200, -1], [3, -3, 0, 260], [-260, -259, -1, -2]] {
            let s = [11u64, 300, 0, 520];
            let p: Vec<u64> = vals.iter().zip(&s).map(|(&v, &s)| (enc(v) + t - s) % t).collect();
            let want = enc(*vals.iter().max().unwrap());
            assert_eq!(c.eval_plain((&s, &[], 0), (&p, &[])).unwrap(), want, "{vals:?}");
        }
    }

    #[test]
    fn truncated_has_fewer_ands_and_gap_grows_with_f() {
        let t = 417793;
        let mut last_gap = 0;
        for f in [1u32, 5, 9] {
            let m = ActivationCircuit::relu(GcConfig::mod_t(t, f).unwrap()).unwrap().circuit.and_count();
            let tr = ActivationCircuit::relu(GcConfig::truncated(t, f).unwrap()).unwrap().circuit.and_count();
            assert!(tr < m);
            assert!(m - tr > last_gap);
            last_gap = m - tr;
        }
    }
}
