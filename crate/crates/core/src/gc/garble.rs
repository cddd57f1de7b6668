//! Four-row garbling with free-XOR and point-and-permute.
//!
//! Each AND row is `H(A, B, tweak) xor (C || check(C))` truncated to 24
//! bytes, with `H` = SHA-256 and `check` a 64-bit mixing checksum, so a
//! corrupted row fails to open. NOT gates cost nothing: the garbler flips the zero label by the
//! global offset and the evaluator passes its label through.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use super::circuit::{BooleanCircuit, Gate};
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::ring::{rng_from_seed, Seed};

pub type Label = u128;

pub const TAG_BYTES: usize = 8;
pub const ROW_BYTES: usize = 16 + TAG_BYTES;
pub const TABLE_BYTES: usize = 4 * ROW_BYTES;

const WIRE_VERSION: u8 = 1;

fn lsb(l: Label) -> usize {
    (l & 1) as usize
}

/// Injective in each half of the label, so flipping bits of one half always
/// changes it.
pub(crate) fn check_word(l: Label) -> u64 {
    let lo = l as u64;
    let hi = (l >> 64) as u64;
    let x = (lo ^ hi.wrapping_mul(0x9e37_79b9_7f4a_7c15)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^ (x >> 31)
}

pub(crate) fn seal_row(label: Label, pad: &[u8; ROW_BYTES]) -> [u8; ROW_BYTES] {
    let mut out = *pad;
    for (o, b) in out.iter_mut().zip(label.to_le_bytes().into_iter().chain(check_word(label).to_le_bytes())) {
        *o ^= b;
    }
    out
}

pub(crate) fn open_row(row: &[u8], pad: &[u8; ROW_BYTES]) -> Option<Label> {
    let mut plain = [0u8; ROW_BYTES];
    for i in 0..ROW_BYTES {
        plain[i] = row[i] ^ pad[i];
    }
    let label = Label::from_le_bytes(plain[..16].try_into().unwrap());
    (u64::from_le_bytes(plain[16..].try_into().unwrap()) == check_word(label)).then_some(label)
}

fn row_pad(a: Label, b: Label, tweak: u64) -> [u8; ROW_BYTES] {
    let mut h = Sha256::new();
    h.update(b"gc-row");
    h.update(a.to_le_bytes());
    h.update(b.to_le_bytes());
    h.update(tweak.to_le_bytes());
    let d = h.finalize();
    let mut out = [0u8; ROW_BYTES];
    out.copy_from_slice(&d[..ROW_BYTES]);
    out
}

/// Independently garbled copies of one circuit sharing a free-XOR offset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GarbledCircuit {
    pub id: u64,
    pub digest: [u8; 32],
    pub instances: usize,
    pub and_gates: usize,
    pub outputs: usize,
    pub tables: Vec<u8>,
    pub decode: Vec<bool>,
}

/// The garbler's private side: the offset and every input wire's zero label.
#[derive(Clone, Debug)]
pub struct GarblerSecrets {
    delta: Label,
    garbler_zero: Vec<Vec<Label>>,
    evaluator_zero: Vec<Vec<Label>>,
}

impl GarblerSecrets {
    pub fn delta(&self) -> Label {
        self.delta
    }

    fn select(&self, zero: &[Label], bits: &[bool]) -> Result<Vec<Label>> {
        if zero.len() != bits.len() {
            return Err(Error::Mismatch(format!("{} bits for {} input wires", bits.len(), zero.len())));
        }
        Ok(zero.iter().zip(bits).map(|(&l, &b)| if b { l ^ self.delta } else { l }).collect())
    }

    pub fn garbler_labels(&self, instance: usize, bits: &[bool]) -> Result<Vec<Label>> {
        self.select(&self.garbler_zero[instance], bits)
    }

    /// Label pairs `(bit 0, bit 1)` for every evaluator input of an instance.
    pub fn evaluator_pairs(&self, instance: usize) -> Vec<(Label, Label)> {
        self.evaluator_zero[instance].iter().map(|&l| (l, l ^ self.delta)).collect()
    }

    /// The labels the evaluator should end up holding; used by the dealer.
    pub fn evaluator_labels(&self, instance: usize, bits: &[bool]) -> Result<Vec<Label>> {
        self.select(&self.evaluator_zero[instance], bits)
    }
}

fn garble_instance(
    circuit: &BooleanCircuit,
    delta: Label,
    tweak_base: u64,
    rng: &mut ChaCha20Rng,
    tables: &mut [u8],
    decode: &mut [bool],
) -> (Vec<Label>, Vec<Label>) {
    let mut zero = vec![0 as Label; circuit.wires as usize];
    let mut fresh = |w: u32, zero: &mut Vec<Label>| {
        let l: Label = rng.gen();
        zero[w as usize] = l;
        l
    };
    let g: Vec<Label> = circuit.garbler_inputs.iter().map(|&w| fresh(w, &mut zero)).collect();
    let e: Vec<Label> = circuit.evaluator_inputs.iter().map(|&w| fresh(w, &mut zero)).collect();
    let mut and_index = 0usize;
    for gate in &circuit.gates {
        match *gate {
            Gate::Xor { a, b, out } => zero[out as usize] = zero[a as usize] ^ zero[b as usize],
            Gate::Not { a, out } => zero[out as usize] = zero[a as usize] ^ delta,
            Gate::And { a, b, out } => {
                let (a0, b0) = (zero[a as usize], zero[b as usize]);
                let c0: Label = rng.gen();
                zero[out as usize] = c0;
                let tweak = tweak_base + and_index as u64;
                let table = &mut tables[and_index * TABLE_BYTES..(and_index + 1) * TABLE_BYTES];
                for va in 0..2u8 {
                    for vb in 0..2u8 {
                        let la = if va == 1 { a0 ^ delta } else { a0 };
                        let lb = if vb == 1 { b0 ^ delta } else { b0 };
                        let lc = if va & vb == 1 { c0 ^ delta } else { c0 };
                        let pad = row_pad(la, lb, tweak);
                        let row = 2 * lsb(la) + lsb(lb);
                        table[row * ROW_BYTES..(row + 1) * ROW_BYTES].copy_from_slice(&seal_row(lc, &pad));
                    }
                }
                and_index += 1;
            }
        }
    }
    for (d, &w) in decode.iter_mut().zip(&circuit.outputs) {
        *d = lsb(zero[w as usize]) == 1;
    }
    (g, e)
}

fn worker_count(jobs: usize) -> usize {
    let hw = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    hw.min(jobs / 64 + 1).max(1)
}

/// Garbles `instances` copies of `circuit`.
pub fn garble_batch<R: RngCore>(circuit: &BooleanCircuit, instances: usize, id: u64, rng: &mut R) -> (GarbledCircuit, GarblerSecrets) {
    let delta: Label = rng.gen::<Label>() | 1;
    let seeds: Vec<Seed> = (0..instances).map(|_| rng.gen()).collect();
    let and_gates = circuit.and_count();
    let outputs = circuit.outputs.len();
    let per = instances.div_ceil(worker_count(instances)).max(1);
    let mut tables = Vec::with_capacity(instances * and_gates * TABLE_BYTES);
    let mut decode = Vec::with_capacity(instances * outputs);
    let mut garbler_zero = Vec::with_capacity(instances);
    let mut evaluator_zero = Vec::with_capacity(instances);
    std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .chunks(per)
            .enumerate()
            .map(|(c, chunk)| {
                scope.spawn(move || {
                    let mut tab = vec![0u8; chunk.len() * and_gates * TABLE_BYTES];
                    let mut dec = vec![false; chunk.len() * outputs];
                    let mut zeros = Vec::with_capacity(chunk.len());
                    for (k, seed) in chunk.iter().enumerate() {
                        let mut r = ChaCha20Rng::from_seed(*seed);
                        let tweak = ((c * per + k) * and_gates) as u64;
                        zeros.push(garble_instance(
                            circuit,
                            delta,
                            tweak,
                            &mut r,
                            &mut tab[k * and_gates * TABLE_BYTES..(k + 1) * and_gates * TABLE_BYTES],
                            &mut dec[k * outputs..(k + 1) * outputs],
                        ));
                    }
                    (tab, dec, zeros)
                })
            })
            .collect();
        for h in handles {
            let (tab, dec, zeros) = h.join().expect("garbling worker panicked");
            tables.extend(tab);
            decode.extend(dec);
            for (g, e) in zeros {
                garbler_zero.push(g);
                evaluator_zero.push(e);
            }
        }
    });

    (
        GarbledCircuit {
            id,
            digest: circuit.digest(),
            instances,
            and_gates,
            outputs,
            tables,
            decode,
        },
        GarblerSecrets {
            delta,
            garbler_zero,
            evaluator_zero,
        },
    )
}

/// Garbles a single copy from a seed.
pub fn garble(circuit: &BooleanCircuit, seed: Seed) -> (GarbledCircuit, GarblerSecrets) {
    garble_batch(circuit, 1, 0, &mut rng_from_seed(seed))
}

impl GarbledCircuit {
    fn check(&self, circuit: &BooleanCircuit) -> Result<()> {
        if circuit.digest() != self.digest || circuit.and_count() != self.and_gates {
            return Err(Error::Mismatch("garbled tables belong to a different circuit".into()));
        }
        Ok(())
    }

    fn eval_instance(&self, circuit: &BooleanCircuit, instance: usize, g: &[Label], e: &[Label]) -> Result<Vec<Label>> {
        if instance >= self.instances {
            return Err(Error::OutOfRange(format!("instance {instance} of {}", self.instances)));
        }
        if g.len() != circuit.garbler_inputs.len() || e.len() != circuit.evaluator_inputs.len() {
            return Err(Error::Mismatch("input label count".into()));
        }
        let mut w = vec![0 as Label; circuit.wires as usize];
        for (&i, &l) in circuit.garbler_inputs.iter().zip(g) {
            w[i as usize] = l;
        }
        for (&i, &l) in circuit.evaluator_inputs.iter().zip(e) {
            w[i as usize] = l;
        }
        let tables = &self.tables[instance * self.and_gates * TABLE_BYTES..(instance + 1) * self.and_gates * TABLE_BYTES];
        let tweak_base = instance as u64 * self.and_gates as u64;
        let mut and_index = 0usize;
        for gate in &circuit.gates {
            match *gate {
                Gate::Xor { a, b, out } => w[out as usize] = w[a as usize] ^ w[b as usize],
                Gate::Not { a, out } => w[out as usize] = w[a as usize],
                Gate::And { a, b, out } => {
                    let (la, lb) = (w[a as usize], w[b as usize]);
                    let row = 2 * lsb(la) + lsb(lb);
                    let off = and_index * TABLE_BYTES + row * ROW_BYTES;
                    let pad = row_pad(la, lb, tweak_base + and_index as u64);
                    w[out as usize] = open_row(&tables[off..off + ROW_BYTES], &pad)
                        .ok_or(Error::GarbledIntegrity { gate: and_index })?;
                    and_index += 1;
                }
            }
        }
        Ok(circuit.outputs.iter().map(|&o| w[o as usize]).collect())
    }

    /// Evaluates one instance and returns its output labels.
    pub fn evaluate(&self, circuit: &BooleanCircuit, instance: usize, garbler: &[Label], evaluator: &[Label]) -> Result<Vec<Label>> {
        self.check(circuit)?;
        self.eval_instance(circuit, instance, garbler, evaluator)
    }

    pub fn decode(&self, instance: usize, labels: &[Label]) -> Vec<bool> {
        let d = &self.decode[instance * self.outputs..(instance + 1) * self.outputs];
        labels.iter().zip(d).map(|(&l, &d)| (lsb(l) == 1) ^ d).collect()
    }

    /// Evaluates and decodes every instance, in parallel.
    pub fn evaluate_all(&self, circuit: &BooleanCircuit, garbler: &[Vec<Label>], evaluator: &[Vec<Label>]) -> Result<Vec<Vec<bool>>> {
        self.check(circuit)?;
        if garbler.len() != self.instances || evaluator.len() != self.instances {
            return Err(Error::Mismatch(format!(
                "labels for {} / {} instances, batch has {}",
                garbler.len(),
                evaluator.len(),
                self.instances
            )));
        }
        let workers = worker_count(self.instances);
        let per = self.instances.div_ceil(workers).max(1);
        let mut out: Vec<Result<Vec<bool>>> = Vec::with_capacity(self.instances);
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..self.instances)
                .step_by(per)
                .map(|start| {
                    let end = (start + per).min(self.instances);
                    scope.spawn(move || {
                        (start..end)
                            .map(|i| {
                                self.eval_instance(circuit, i, &garbler[i], &evaluator[i])
                                    .map(|labels| self.decode(i, &labels))
                            })
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                out.extend(h.join().expect("evaluation worker panicked"));
            }
        });
        out.into_iter().collect()
    }

    pub fn table_bytes(&self) -> usize {
        self.tables.len()
    }

    /// Serialized size without building the buffer.
    pub fn wire_bytes(&self) -> usize {
        1 + 32 + 8 + 3 * 4 + self.tables.len() + (self.decode.len()).div_ceil(8)
    }

    pub fn write_to(&self, w: &mut Writer) {
        w.u8(WIRE_VERSION);
        w.bytes(&self.digest);
        w.u64(self.id);
        w.u32(self.instances as u32);
        w.u32(self.and_gates as u32);
        w.u32(self.outputs as u32);
        w.bytes(&self.tables);
        let mut packed = vec![0u8; self.decode.len().div_ceil(8)];
        for (i, &d) in self.decode.iter().enumerate() {
            packed[i / 8] |= (d as u8) << (i % 8);
        }
        w.bytes(&packed);
    }

    pub fn read_from(r: &mut Reader) -> Result<Self> {
        let v = r.u8()?;
        if v != WIRE_VERSION {
            return Err(Error::Decode(format!("garbled circuit version {v}")));
        }
        let digest = r.array::<32>()?;
        let id = r.u64()?;
        let instances = r.u32()? as usize;
        let and_gates = r.u32()? as usize;
        let outputs = r.u32()? as usize;
        let table_len = instances
            .checked_mul(and_gates)
            .and_then(|x| x.checked_mul(TABLE_BYTES))
            .ok_or_else(|| Error::Decode("table size overflow".into()))?;
        let tables = r.take(table_len)?.to_vec();
        let nd = instances * outputs;
        let packed = r.take(nd.div_ceil(8))?;
        let decode = (0..nd).map(|i| packed[i / 8] >> (i % 8) & 1 == 1).collect();
        Ok(GarbledCircuit {
            id,
            digest,
            instances,
            and_gates,
            outputs,
            tables,
            decode,
        })
    }
}
