//! Protocol messages and their wire framing.
//!
//! A frame is the 4-byte magic `IMPL`, a version byte, a message-type byte,
//! the payload length as a little-endian `u64`, then the payload.

use std::io::{Read, Write};

use serde::Serialize;

use crate::bfv::{Ciphertext, GaloisKeys, ReEncryptionKey, SecretKey};
use crate::codec::{Reader, Writer};
use crate::error::{Error, ErrorClass, Result};
use crate::gc::{GarbledCircuit, Label, POINT_BYTES, ROW_BYTES};
use crate::ring::RingContext;

pub const MAGIC: &[u8; 4] = b"IMPL";
pub const WIRE_VERSION: u8 = 1;
pub const HEADER_BYTES: usize = 4 + 1 + 1 + 8;
/// Frames larger than this are rejected before allocation.
pub const MAX_PAYLOAD: u64 = 1 << 34;

const SEALED_BYTES: usize = 2 * ROW_BYTES;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Party {
    Client,
    Cloud,
    Proxy,
}

impl Party {
    pub const ALL: [Party; 3] = [Party::Client, Party::Cloud, Party::Proxy];

    pub fn name(self) -> &'static str {
        match self {
            Party::Client => "client",
            Party::Cloud => "cloud",
            Party::Proxy => "proxy",
        }
    }

    fn tag(self) -> u8 {
        self as u8
    }

    fn from_tag(t: u8) -> Result<Self> {
        Party::ALL
            .get(t as usize)
            .copied()
            .ok_or_else(|| Error::Decode(format!("party tag {t}")))
    }
}

impl std::fmt::Display for Party {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Party {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Party::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Params(format!("unknown role {s:?} (expected client, cloud or proxy)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum MessageKind {
    KeyMaterial,
    InputCiphertexts,
    MaskedResult,
    GarbledBundle,
    EvalLabels,
    ActivationCiphertexts,
    FinalResult,
    Control,
}

impl MessageKind {
    pub fn tag(self) -> u8 {
        match self {
            MessageKind::KeyMaterial => 1,
            MessageKind::InputCiphertexts => 2,
            MessageKind::MaskedResult => 3,
            MessageKind::GarbledBundle => 4,
            MessageKind::EvalLabels => 5,
            MessageKind::ActivationCiphertexts => 6,
            MessageKind::FinalResult => 7,
            MessageKind::Control => 0x10,
        }
    }

    pub fn from_tag(t: u8) -> Result<Self> {
        Ok(match t {
            1 => MessageKind::KeyMaterial,
            2 => MessageKind::InputCiphertexts,
            3 => MessageKind::MaskedResult,
            4 => MessageKind::GarbledBundle,
            5 => MessageKind::EvalLabels,
            6 => MessageKind::ActivationCiphertexts,
            7 => MessageKind::FinalResult,
            0x10 => MessageKind::Control,
            t => return Err(Error::Decode(format!("unknown message type {t:#04x}"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            MessageKind::KeyMaterial => "KeyMaterial",
            MessageKind::InputCiphertexts => "InputCiphertexts",
            MessageKind::MaskedResult => "MaskedResult",
            MessageKind::GarbledBundle => "GarbledBundle",
            MessageKind::EvalLabels => "EvalLabels",
            MessageKind::ActivationCiphertexts => "ActivationCiphertexts",
            MessageKind::FinalResult => "FinalResult",
            MessageKind::Control => "Control",
        }
    }

    /// Key material and garbled tables can be produced ahead of the input.
    pub fn is_offline(self) -> bool {
        matches!(self, MessageKind::KeyMaterial | MessageKind::GarbledBundle)
    }

    /// Protocol phase the message belongs to.
    pub fn phase(self) -> &'static str {
        match self {
            MessageKind::KeyMaterial => "keygen",
            MessageKind::InputCiphertexts => "encrypt",
            MessageKind::MaskedResult => "linear",
            MessageKind::GarbledBundle | MessageKind::EvalLabels | MessageKind::ActivationCiphertexts => "activation",
            MessageKind::FinalResult => "result",
            MessageKind::Control => "control",
        }
    }
}

/// Evaluation keys for the cloud. Holds no secret key by construction.
#[derive(Clone, Debug)]
pub struct CloudKeys {
    pub client_galois: Option<GaloisKeys>,
    pub proxy_galois: Option<GaloisKeys>,
    pub reencryption: ReEncryptionKey,
}

/// Garbled tables of one activation round, sent ahead of the masked values.
#[derive(Clone, Debug)]
pub struct GarbledBundle {
    pub inference: u64,
    pub stage: usize,
    pub round: usize,
    pub circuit: GarbledCircuit,
    /// The sender's first OT message when labels travel by base OT.
    pub ot_setup: Option<[u8; 32]>,
}

#[derive(Clone, Debug)]
pub struct MaskedResult {
    pub inference: u64,
    pub stage: usize,
    pub ciphertexts: Vec<Ciphertext>,
    /// Garbler input labels indexed by round, then instance.
    pub garbler_labels: Vec<Vec<Vec<Label>>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LabelRequestBody {
    /// Dealer delivery: the evaluator's bits in the clear.
    Bits(Vec<bool>),
    /// Base-OT receiver points, one per bit.
    Points(Vec<[u8; POINT_BYTES]>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LabelResponseBody {
    Labels(Vec<Label>),
    Sealed(Vec<[u8; SEALED_BYTES]>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Control {
    /// First frame on a TCP connection.
    Hello(Party),
    Shutdown,
    Abort { party: Party, class: ErrorClass, reason: String },
}

#[derive(Clone, Debug)]
pub enum Message {
    CloudKeys(CloudKeys),
    ProxyKey(SecretKey),
    Input {
        inference: u64,
        ciphertexts: Vec<Ciphertext>,
    },
    Garbled(GarbledBundle),
    Masked(MaskedResult),
    LabelRequest {
        inference: u64,
        stage: usize,
        round: usize,
        body: LabelRequestBody,
    },
    LabelResponse {
        inference: u64,
        stage: usize,
        round: usize,
        body: LabelResponseBody,
    },
    Activation {
        inference: u64,
        stage: usize,
        ciphertexts: Vec<Ciphertext>,
    },
    Final {
        inference: u64,
        ciphertexts: Vec<Ciphertext>,
    },
    Control(Control),
}

fn class_tag(c: ErrorClass) -> u8 {
    match c {
        ErrorClass::Validation => 2,
        ErrorClass::Protocol => 3,
        ErrorClass::Integrity => 4,
    }
}

fn class_from_tag(t: u8) -> Result<ErrorClass> {
    Ok(match t {
        2 => ErrorClass::Validation,
        3 => ErrorClass::Protocol,
        4 => ErrorClass::Integrity,
        t => return Err(Error::Decode(format!("error class {t}"))),
    })
}

fn write_cts(w: &mut Writer, cts: &[Ciphertext]) {
    w.u32(cts.len() as u32);
    for c in cts {
        c.write_to(w);
    }
}

fn read_cts(ctx: &RingContext, r: &mut Reader<'_>) -> Result<Vec<Ciphertext>> {
    let n = r.count(1)?;
    (0..n).map(|_| Ciphertext::read_from(ctx, r)).collect()
}

fn write_opt_galois(ctx: &RingContext, w: &mut Writer, g: &Option<GaloisKeys>) {
    match g {
        Some(g) => {
            w.u8(1);
            g.write_to(ctx, w);
        }
        None => w.u8(0),
    }
}

fn read_opt_galois(ctx: &RingContext, r: &mut Reader<'_>) -> Result<Option<GaloisKeys>> {
    match r.u8()? {
        0 => Ok(None),
        1 => Ok(Some(GaloisKeys::read_from(ctx, r)?)),
        t => Err(Error::Decode(format!("option tag {t}"))),
    }
}

fn write_bits(w: &mut Writer, bits: &[bool]) {
    w.u32(bits.len() as u32);
    let mut packed = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        packed[i / 8] |= (b as u8) << (i % 8);
    }
    w.bytes(&packed);
}

fn read_bits(r: &mut Reader<'_>) -> Result<Vec<bool>> {
    let n = r.u32()? as usize;
    let packed = r.take(n.div_ceil(8))?;
    Ok((0..n).map(|i| packed[i / 8] >> (i % 8) & 1 == 1).collect())
}

fn read_stage(r: &mut Reader<'_>) -> Result<(u64, usize, usize)> {
    Ok((r.u64()?, r.u16()? as usize, r.u8()? as usize))
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        match self {
            Message::CloudKeys(_) | Message::ProxyKey(_) => MessageKind::KeyMaterial,
            Message::Input { .. } => MessageKind::InputCiphertexts,
            Message::Garbled(_) => MessageKind::GarbledBundle,
            Message::Masked(_) => MessageKind::MaskedResult,
            Message::LabelRequest { .. } | Message::LabelResponse { .. } => MessageKind::EvalLabels,
            Message::Activation { .. } => MessageKind::ActivationCiphertexts,
            Message::Final { .. } => MessageKind::FinalResult,
            Message::Control(_) => MessageKind::Control,
        }
    }

    pub fn inference(&self) -> Option<u64> {
        match self {
            Message::Input { inference, .. }
            | Message::LabelRequest { inference, .. }
            | Message::LabelResponse { inference, .. }
            | Message::Activation { inference, .. }
            | Message::Final { inference, .. } => Some(*inference),
            Message::Garbled(g) => Some(g.inference),
            Message::Masked(m) => Some(m.inference),
            Message::CloudKeys(_) | Message::ProxyKey(_) | Message::Control(_) => None,
        }
    }

    /// Stage index for per-layer messages.
    pub fn stage(&self) -> Option<usize> {
        match self {
            Message::LabelRequest { stage, .. }
            | Message::LabelResponse { stage, .. }
            | Message::Activation { stage, .. } => Some(*stage),
            Message::Garbled(g) => Some(g.stage),
            Message::Masked(m) => Some(m.stage),
            _ => None,
        }
    }

    pub fn encode(&self, ctx: &RingContext) -> Vec<u8> {
        let mut w = Writer::new();
        match self {
            Message::CloudKeys(k) => {
                w.u8(0);
                write_opt_galois(ctx, &mut w, &k.client_galois);
                write_opt_galois(ctx, &mut w, &k.proxy_galois);
                k.reencryption.write_to(ctx, &mut w);
            }
            Message::ProxyKey(sk) => {
                w.u8(1);
                sk.write_to(&mut w);
            }
            Message::Input { inference, ciphertexts } | Message::Final { inference, ciphertexts } => {
                w.u64(*inference);
                write_cts(&mut w, ciphertexts);
            }
            Message::Garbled(g) => {
                w.u64(g.inference);
                w.u16(g.stage as u16);
                w.u8(g.round as u8);
                match &g.ot_setup {
                    Some(p) => {
                        w.u8(1);
                        w.bytes(p);
                    }
                    None => w.u8(0),
                }
                g.circuit.write_to(&mut w);
            }
            Message::Masked(m) => {
                w.u64(m.inference);
                w.u16(m.stage as u16);
                w.u8(0);
                write_cts(&mut w, &m.ciphertexts);
                w.u32(m.garbler_labels.len() as u32);
                for round in &m.garbler_labels {
                    w.u32(round.len() as u32);
                    w.u32(round.first().map_or(0, |l| l.len()) as u32);
                    for inst in round {
                        for &l in inst {
                            w.u128(l);
                        }
                    }
                }
            }
            Message::LabelRequest {
                inference,
                stage,
                round,
                body,
            } => {
                w.u64(*inference);
                w.u16(*stage as u16);
                w.u8(*round as u8);
                match body {
                    LabelRequestBody::Bits(bits) => {
                        w.u8(0);
                        write_bits(&mut w, bits);
                    }
                    LabelRequestBody::Points(points) => {
                        w.u8(1);
                        w.u32(points.len() as u32);
                        for p in points {
                            w.bytes(p);
                        }
                    }
                }
            }
            Message::LabelResponse {
                inference,
                stage,
                round,
                body,
            } => {
                w.u64(*inference);
                w.u16(*stage as u16);
                w.u8(*round as u8);
                match body {
                    LabelResponseBody::Labels(labels) => {
                        w.u8(2);
                        w.u32(labels.len() as u32);
                        for &l in labels {
                            w.u128(l);
                        }
                    }
                    LabelResponseBody::Sealed(rows) => {
                        w.u8(3);
                        w.u32(rows.len() as u32);
                        for row in rows {
                            w.bytes(row);
                        }
                    }
                }
            }
            Message::Activation {
                inference,
                stage,
                ciphertexts,
            } => {
                w.u64(*inference);
                w.u16(*stage as u16);
                w.u8(0);
                write_cts(&mut w, ciphertexts);
            }
            Message::Control(c) => match c {
                Control::Hello(p) => {
                    w.u8(0);
                    w.u8(p.tag());
                }
                Control::Shutdown => w.u8(1),
                Control::Abort { party, class, reason } => {
                    w.u8(2);
                    w.u8(party.tag());
                    w.u8(class_tag(*class));
                    w.blob(reason.as_bytes());
                }
            },
        }
        w.into_bytes()
    }

    pub fn decode(ctx: &RingContext, kind: MessageKind, payload: &[u8]) -> Result<Message> {
        let mut r = Reader::new(payload);
        let msg = match kind {
            MessageKind::KeyMaterial => match r.u8()? {
                0 => Message::CloudKeys(CloudKeys {
                    client_galois: read_opt_galois(ctx, &mut r)?,
                    proxy_galois: read_opt_galois(ctx, &mut r)?,
                    reencryption: ReEncryptionKey::read_from(ctx, &mut r)?,
                }),
                1 => Message::ProxyKey(SecretKey::read_from(ctx, &mut r)?),
                t => return Err(Error::Decode(format!("key material variant {t}"))),
            },
            MessageKind::InputCiphertexts => Message::Input {
                inference: r.u64()?,
                ciphertexts: read_cts(ctx, &mut r)?,
            },
            MessageKind::FinalResult => Message::Final {
                inference: r.u64()?,
                ciphertexts: read_cts(ctx, &mut r)?,
            },
            MessageKind::GarbledBundle => {
                let (inference, stage, round) = read_stage(&mut r)?;
                let ot_setup = match r.u8()? {
                    0 => None,
                    1 => Some(r.array::<32>()?),
                    t => return Err(Error::Decode(format!("option tag {t}"))),
                };
                Message::Garbled(GarbledBundle {
                    inference,
                    stage,
                    round,
                    circuit: GarbledCircuit::read_from(&mut r)?,
                    ot_setup,
                })
            }
            MessageKind::MaskedResult => {
                let (inference, stage, _) = read_stage(&mut r)?;
                let ciphertexts = read_cts(ctx, &mut r)?;
                let rounds = r.count(8)?;
                let mut garbler_labels = Vec::with_capacity(rounds);
                for _ in 0..rounds {
                    let inst = r.u32()? as usize;
                    let width = r.u32()? as usize;
                    if inst.saturating_mul(width).saturating_mul(16) > r.remaining() {
                        return Err(Error::Decode("label block exceeds payload".into()));
                    }
                    let round = (0..inst)
                        .map(|_| (0..width).map(|_| r.u128()).collect::<Result<Vec<_>>>())
                        .collect::<Result<Vec<_>>>()?;
                    garbler_labels.push(round);
                }
                Message::Masked(MaskedResult {
                    inference,
                    stage,
                    ciphertexts,
                    garbler_labels,
                })
            }
            MessageKind::EvalLabels => {
                let (inference, stage, round) = read_stage(&mut r)?;
                let tag = r.u8()?;
                match tag {
                    0 => Message::LabelRequest {
                        inference,
                        stage,
                        round,
                        body: LabelRequestBody::Bits(read_bits(&mut r)?),
                    },
                    1 => {
                        let n = r.count(POINT_BYTES)?;
                        let points = (0..n).map(|_| r.array::<POINT_BYTES>()).collect::<Result<_>>()?;
                        Message::LabelRequest {
                            inference,
                            stage,
                            round,
                            body: LabelRequestBody::Points(points),
                        }
                    }
                    2 => {
                        let n = r.count(16)?;
                        let labels = (0..n).map(|_| r.u128()).collect::<Result<_>>()?;
                        Message::LabelResponse {
                            inference,
                            stage,
                            round,
                            body: LabelResponseBody::Labels(labels),
                        }
                    }
                    3 => {
                        let n = r.count(SEALED_BYTES)?;
                        let rows = (0..n).map(|_| r.array::<SEALED_BYTES>()).collect::<Result<_>>()?;
                        Message::LabelResponse {
                            inference,
                            stage,
                            round,
                            body: LabelResponseBody::Sealed(rows),
                        }
                    }
                    t => return Err(Error::Decode(format!("label body {t}"))),
                }
            }
            MessageKind::ActivationCiphertexts => {
                let (inference, stage, _) = read_stage(&mut r)?;
                Message::Activation {
                    inference,
                    stage,
                    ciphertexts: read_cts(ctx, &mut r)?,
                }
            }
            MessageKind::Control => match r.u8()? {
                0 => Message::Control(Control::Hello(Party::from_tag(r.u8()?)?)),
                1 => Message::Control(Control::Shutdown),
                2 => {
                    let party = Party::from_tag(r.u8()?)?;
                    let class = class_from_tag(r.u8()?)?;
                    let reason = String::from_utf8_lossy(r.blob()?).into_owned();
                    Message::Control(Control::Abort { party, class, reason })
                }
                t => return Err(Error::Decode(format!("control variant {t}"))),
            },
        };
        r.finish()?;
        Ok(msg)
    }

    /// Header plus payload.
    pub fn frame(&self, ctx: &RingContext) -> Vec<u8> {
        frame_bytes(self.kind(), &self.encode(ctx))
    }
}

pub fn frame_bytes(kind: MessageKind, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_BYTES + payload.len());
    out.extend_from_slice(MAGIC);
    out.push(WIRE_VERSION);
    out.push(kind.tag());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
    out
}

pub fn write_frame<W: Write>(w: &mut W, kind: MessageKind, payload: &[u8]) -> Result<()> {
    w.write_all(&frame_bytes(kind, payload))?;
    w.flush()?;
    Ok(())
}

/// Reads one frame; `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<(MessageKind, Vec<u8>)>> {
    let mut header = [0u8; HEADER_BYTES];
    match r.read_exact(&mut header[..1]) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    r.read_exact(&mut header[1..])?;
    if &header[..4] != MAGIC {
        return Err(Error::Decode("bad frame magic".into()));
    }
    if header[4] != WIRE_VERSION {
        return Err(Error::Decode(format!("frame version {}", header[4])));
    }
    let kind = MessageKind::from_tag(header[5])?;
    let len = u64::from_le_bytes(header[6..].try_into().unwrap());
    if len > MAX_PAYLOAD {
        return Err(Error::Decode(format!("frame of {len} bytes")));
    }
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload)?;
    Ok(Some((kind, payload)))
}
