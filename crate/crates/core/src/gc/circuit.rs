use sha2::{Digest, Sha256};

use crate::codec::Writer;

pub type WireId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    Xor { a: WireId, b: WireId, out: WireId },
    And { a: WireId, b: WireId, out: WireId },
    Not { a: WireId, out: WireId },
}

/// Topologically ordered gate list over numbered wires.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BooleanCircuit {
    pub wires: u32,
    pub gates: Vec<Gate>,
    pub garbler_inputs: Vec<WireId>,
    pub evaluator_inputs: Vec<WireId>,
    pub outputs: Vec<WireId>,
}

impl BooleanCircuit {
    pub fn and_count(&self) -> usize {
        self.gates.iter().filter(|g| matches!(g, Gate::And { .. })).count()
    }

    pub fn xor_count(&self) -> usize {
        self.gates.iter().filter(|g| matches!(g, Gate::Xor { .. })).count()
    }

    pub fn not_count(&self) -> usize {
        self.gates.iter().filter(|g| matches!(g, Gate::Not { .. })).count()
    }

    /// Plain evaluation.
    pub fn evaluate(&self, garbler: &[bool], evaluator: &[bool]) -> Vec<bool> {
        assert_eq!(garbler.len(), self.garbler_inputs.len(), "garbler input width");
        assert_eq!(evaluator.len(), self.evaluator_inputs.len(), "evaluator input width");
        let mut v = vec![false; self.wires as usize];
        for (&w, &b) in self.garbler_inputs.iter().zip(garbler) {
            v[w as usize] = b;
        }
        for (&w, &b) in self.evaluator_inputs.iter().zip(evaluator) {
            v[w as usize] = b;
        }
        for g in &self.gates {
            match *g {
                Gate::Xor { a, b, out } => v[out as usize] = v[a as usize] ^ v[b as usize],
                Gate::And { a, b, out } => v[out as usize] = v[a as usize] & v[b as usize],
                Gate::Not { a, out } => v[out as usize] = !v[a as usize],
            }
        }
        self.outputs.iter().map(|&w| v[w as usize]).collect()
    }

    /// Checks that every gate reads only wires defined before it.
    pub fn is_well_formed(&self) -> bool {
        let mut defined = vec![false; self.wires as usize];
        for &w in self.garbler_inputs.iter().chain(&self.evaluator_inputs) {
            if w >= self.wires || defined[w as usize] {
                return false;
            }
            defined[w as usize] = true;
        }
        for g in &self.gates {
            let (ins, out) = match *g {
                Gate::Xor { a, b, out } | Gate::And { a, b, out } => ([a, b], out),
                Gate::Not { a, out } => ([a, a], out),
            };
            if out >= self.wires || defined[out as usize] || ins.iter().any(|&w| w >= self.wires || !defined[w as usize]) {
                return false;
            }
            defined[out as usize] = true;
        }
        self.outputs.iter().all(|&w| w < self.wires && defined[w as usize])
    }

    /// SHA-256 over a canonical encoding of the circuit.
    pub fn digest(&self) -> [u8; 32] {
        let mut w = Writer::new();
        w.u32(self.wires);
        for list in [&self.garbler_inputs, &self.evaluator_inputs, &self.outputs] {
            w.u32(list.len() as u32);
            for &x in list.iter() {
                w.u32(x);
            }
        }
        w.u32(self.gates.len() as u32);
        for g in &self.gates {
            match *g {
                Gate::Xor { a, b, out } => {
                    w.u8(0);
                    w.u32(a);
                    w.u32(b);
                    w.u32(out);
                }
                Gate::And { a, b, out } => {
                    w.u8(1);
                    w.u32(a);
                    w.u32(b);
                    w.u32(out);
                }
                Gate::Not { a, out } => {
                    w.u8(2);
                    w.u32(a);
                    w.u32(out);
                }
            }
        }
        Sha256::digest(w.into_bytes()).into()
    }
}

/// A bit during construction: either a known constant or a wire.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bit {
    Const(bool),
    Wire(WireId),
}

/// Little-endian bit vector.
pub type Word = Vec<Bit>;

/// Circuit builder that folds constants so they never cost gates.
#[derive(Debug, Default)]
pub struct CircuitBuilder {
    wires: u32,
    gates: Vec<Gate>,
    garbler_inputs: Vec<WireId>,
    evaluator_inputs: Vec<WireId>,
}

impl CircuitBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn fresh(&mut self) -> WireId {
        let w = self.wires;
        self.wires += 1;
        w
    }

    pub fn garbler_input(&mut self, width: usize) -> Word {
        (0..width)
            .map(|_| {
                let w = self.fresh();
                self.garbler_inputs.push(w);
                Bit::Wire(w)
            })
            .collect()
    }

    pub fn evaluator_input(&mut self, width: usize) -> Word {
        (0..width)
            .map(|_| {
                let w = self.fresh();
                self.evaluator_inputs.push(w);
                Bit::Wire(w)
            })
            .collect()
    }

    pub fn xor(&mut self, a: Bit, b: Bit) -> Bit {
        match (a, b) {
            (Bit::Const(x), Bit::Const(y)) => Bit::Const(x ^ y),
            (Bit::Const(false), w) | (w, Bit::Const(false)) => w,
            (Bit::Const(true), w) | (w, Bit::Const(true)) => self.not(w),
            (Bit::Wire(x), Bit::Wire(y)) if x == y => Bit::Const(false),
            (Bit::Wire(x), Bit::Wire(y)) => {
                let out = self.fresh();
                self.gates.push(Gate::Xor { a: x, b: y, out });
                Bit::Wire(out)
            }
        }
    }

    pub fn and(&mut self, a: Bit, b: Bit) -> Bit {
        match (a, b) {
            (Bit::Const(x), Bit::Const(y)) => Bit::Const(x & y),
            (Bit::Const(false), _) | (_, Bit::Const(false)) => Bit::Const(false),
            (Bit::Const(true), w) | (w, Bit::Const(true)) => w,
            (Bit::Wire(x), Bit::Wire(y)) if x == y => Bit::Wire(x),
            (Bit::Wire(x), Bit::Wire(y)) => {
                let out = self.fresh();
                self.gates.push(Gate::And { a: x, b: y, out });
                Bit::Wire(out)
            }
        }
    }

    pub fn not(&mut self, a: Bit) -> Bit {
        match a {
            Bit::Const(x) => Bit::Const(!x),
            Bit::Wire(x) => {
                let out = self.fresh();
                self.gates.push(Gate::Not { a: x, out });
                Bit::Wire(out)
            }
        }
    }

    /// `a ? x : y` with one AND.
    pub fn mux(&mut self, s: Bit, x: Bit, y: Bit) -> Bit {
        let d = self.xor(x, y);
        let m = self.and(s, d);
        self.xor(y, m)
    }

    pub fn constant(value: u64, width: usize) -> Word {
        (0..width).map(|i| Bit::Const(value >> i & 1 == 1)).collect()
    }

    /// Ripple-carry sum of equal-width words with carry in; returns the sum
    /// and, if requested, the carry out. One AND per bit whose carry is used.
    pub fn add(&mut self, a: &[Bit], b: &[Bit], carry_in: Bit, want_carry: bool) -> (Word, Option<Bit>) {
        assert_eq!(a.len(), b.len());
        let mut c = carry_in;
        let mut sum = Vec::with_capacity(a.len());
        for i in 0..a.len() {
            let ac = self.xor(a[i], c);
            let bc = self.xor(b[i], c);
            let s = self.xor(ac, b[i]);
            sum.push(s);
            if i + 1 < a.len() || want_carry {
                let t = self.and(ac, bc);
                c = self.xor(c, t);
            }
        }
        (sum, want_carry.then_some(c))
    }

    /// `a + b mod 2^width`.
    pub fn add_mod(&mut self, a: &[Bit], b: &[Bit]) -> Word {
        self.add(a, b, Bit::Const(false), false).0
    }

    /// `a - b` via `a + !b + 1`; the carry out is 1 iff `a >= b` unsigned.
    pub fn sub(&mut self, a: &[Bit], b: &[Bit], want_carry: bool) -> (Word, Option<Bit>) {
        let nb: Word = b.iter().map(|&x| self.not(x)).collect();
        self.add(a, &nb, Bit::Const(true), want_carry)
    }

    /// Unsigned `a >= b`; only the carry chain is built.
    pub fn ge_unsigned(&mut self, a: &[Bit], b: &[Bit]) -> Bit {
        assert_eq!(a.len(), b.len());
        let mut c = Bit::Const(true);
        for i in 0..a.len() {
            let nb = self.not(b[i]);
            let ac = self.xor(a[i], c);
            let bc = self.xor(nb, c);
            let t = self.and(ac, bc);
            c = self.xor(c, t);
        }
        c
    }

    /// Two's-complement `a >= b`: flip the sign bits, compare unsigned.
    pub fn ge_signed(&mut self, a: &[Bit], b: &[Bit]) -> Bit {
        let top = a.len() - 1;
        let mut a2 = a.to_vec();
        let mut b2 = b.to_vec();
        a2[top] = self.not(a[top]);
        b2[top] = self.not(b[top]);
        self.ge_unsigned(&a2, &b2)
    }

    pub fn mux_word(&mut self, s: Bit, x: &[Bit], y: &[Bit]) -> Word {
        x.iter().zip(y).map(|(&a, &b)| self.mux(s, a, b)).collect()
    }

    /// Builds the circuit; constant outputs are materialized from a
    /// self-XOR of the first input wire.
    pub fn finish(mut self, outputs: &[Bit]) -> BooleanCircuit {
        let anchor = self
            .garbler_inputs
            .first()
            .or(self.evaluator_inputs.first())
            .copied()
            .expect("circuit without inputs");
        let mut zero: Option<WireId> = None;
        let mut one: Option<WireId> = None;
        let mut out = Vec::with_capacity(outputs.len());
        for &b in outputs {
            let w = match b {
                Bit::Wire(w) => w,
                Bit::Const(v) => {
                    let z = *zero.get_or_insert_with(|| {
                        let w = self.wires;
                        self.wires += 1;
                        self.gates.push(Gate::Xor { a: anchor, b: anchor, out: w });
                        w
                    });
                    if v {
                        *one.get_or_insert_with(|| {
                            let w = self.wires;
                            self.wires += 1;
                            self.gates.push(Gate::Not { a: z, out: w });
                            w
                        })
                    } else {
                        z
                    }
                }
            };
            out.push(w);
        }
        BooleanCircuit {
            wires: self.wires,
            gates: self.gates,
            garbler_inputs: self.garbler_inputs,
            evaluator_inputs: self.evaluator_inputs,
            outputs: out,
        }
    }
}

pub fn to_bits(value: u64, width: usize) -> Vec<bool> {
    (0..width).map(|i| value >> i & 1 == 1).collect()
}

pub fn from_bits(bits: &[bool]) -> u64 {
    bits.iter().enumerate().fold(0, |acc, (i, &b)| acc | (b as u64) << i)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval_words(c: &BooleanCircuit, g: &[(u64, usize)], e: &[(u64, usize)]) -> u64 {
        let gb: Vec<bool> = g.iter().flat_map(|&(v, w)| to_bits(v, w)).collect();
        let eb: Vec<bool> = e.iter().flat_map(|&(v, w)| to_bits(v, w)).collect();
        from_bits(&c.evaluate(&gb, &eb))
    }

    #[test]
    fn adder_exhaustive() {
        let mut b = CircuitBuilder::new();
        let x = b.garbler_input(4);
        let y = b.evaluator_input(4);
        let (s, c) = b.add(&x, &y, Bit::Const(false), true);
        let mut out = s;
        out.push(c.unwrap());
        let circuit = b.finish(&out);
        assert!(circuit.is_well_formed());
        assert_eq!(circuit.and_count(), 4);
        for u in 0..16 {
            for v in 0..16 {
                assert_eq!(eval_words(&circuit, &[(u, 4)], &[(v, 4)]), u + v);
            }
        }
    }

    #[test]
    fn comparisons_exhaustive() {
        let mut b = CircuitBuilder::new();
        let x = b.garbler_input(4);
        let y = b.evaluator_input(4);
        let u = b.ge_unsigned(&x, &y);
        let s = b.ge_signed(&x, &y);
        let circuit = b.finish(&[u, s]);
        let signed = |v: u64| if v >= 8 { v as i64 - 16 } else { v as i64 };
        for p in 0..16 {
            for q in 0..16 {
                let r = eval_words(&circuit, &[(p, 4)], &[(q, 4)]);
                assert_eq!(r & 1 == 1, p >= q);
                assert_eq!(r >> 1 == 1, signed(p) >= signed(q));
            }
        }
    }

    #[test]
    fn constants_fold_away() {
        let mut b = CircuitBuilder::new();
        let x = b.garbler_input(3);
        let k = CircuitBuilder::constant(0b101, 3);
        let masked: Word = x.iter().zip(&k).map(|(&a, &c)| b.and(a, c)).collect();
        let circuit = b.finish(&masked);
        assert_eq!(circuit.and_count(), 0);
        assert_eq!(eval_words(&circuit, &[(0b111, 3)], &[]), 0b101);
    }

    #[test]
    fn digest_tracks_structure() {
        let build = |and: bool| {
            let mut b = CircuitBuilder::new();
            let x = b.garbler_input(1);
            let y = b.evaluator_input(1);
            let o = if and { b.and(x[0], y[0]) } else { b.xor(x[0], y[0]) };
            b.finish(&[o])
        };
        assert_eq!(build(true).digest(), build(true).digest());
        assert_ne!(build(true).digest(), build(false).digest());
    }
}
