use std::collections::BTreeMap;

use serde::Serialize;

use super::cloud::CloudEvent;
use super::message::{Message, MessageKind, Party};
use super::plan::SessionPlan;
use crate::error::{Error, Result};
use crate::linear::OpCounts;
use crate::model::{error_band, reference_inference, ModelSpec};

/// One framed message as it crossed the wire.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TranscriptEntry {
    pub seq: usize,
    pub from: Party,
    pub to: Party,
    pub kind: MessageKind,
    pub phase: &'static str,
    pub offline: bool,
    pub inference: Option<u64>,
    pub stage: Option<usize>,
    /// Layer index of the stage, when the message belongs to one.
    pub layer: Option<usize>,
    /// Frame bytes including the header.
    pub bytes: usize,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
    /// Operations the cloud reported, in order.
    pub events: Vec<CloudEvent>,
}

impl Transcript {
    pub fn record(&mut self, plan: &SessionPlan, from: Party, to: Party, msg: &Message, bytes: usize) {
        let kind = msg.kind();
        let stage = msg.stage();
        self.entries.push(TranscriptEntry {
            seq: self.entries.len(),
            from,
            to,
            kind,
            phase: kind.phase(),
            offline: kind.is_offline(),
            inference: msg.inference(),
            stage,
            layer: stage.and_then(|s| plan.stages.get(s)).map(|s| s.layer),
            bytes,
        });
    }

    /// Appends another party's entries, renumbering them.
    pub fn merge(&mut self, other: Transcript) {
        for mut e in other.entries {
            e.seq = self.entries.len();
            self.entries.push(e);
        }
        self.events.extend(other.events);
    }

    pub fn bytes_where(&self, f: impl Fn(&TranscriptEntry) -> bool) -> usize {
        self.entries.iter().filter(|e| f(e)).map(|e| e.bytes).sum()
    }

    pub fn total_bytes(&self) -> usize {
        self.bytes_where(|_| true)
    }

    /// Bytes sent or received by `party` for each inference. Key setup and
    /// control frames belong to no inference and are left out.
    pub fn inference_bytes(&self, party: Option<Party>) -> BTreeMap<u64, usize> {
        let mut out = BTreeMap::new();
        for e in &self.entries {
            let Some(i) = e.inference else { continue };
            if party.is_none_or(|p| e.from == p || e.to == p) {
                *out.entry(i).or_insert(0) += e.bytes;
            }
        }
        out
    }

    /// Re-encryption operations per inference.
    pub fn reencryptions(&self) -> BTreeMap<u64, usize> {
        let mut out = BTreeMap::new();
        for ev in &self.events {
            let CloudEvent::ReEncrypt { inference, .. } = ev;
            *out.entry(*inference).or_insert(0) += 1;
        }
        out
    }

    pub fn bandwidth(&self) -> BandwidthReport {
        let mut rows: BTreeMap<RowKey, (usize, usize)> = BTreeMap::new();
        for e in &self.entries {
            let r = rows.entry((e.from, e.to, e.phase, e.layer, e.offline)).or_default();
            r.0 += e.bytes;
            r.1 += 1;
        }
        let rows: Vec<BandwidthRow> = rows
            .into_iter()
            .map(|((party, peer, phase, layer, offline), (bytes, messages))| BandwidthRow {
                party,
                peer,
                phase,
                layer,
                offline,
                bytes,
                messages,
            })
            .collect();
        BandwidthReport {
            total_bytes: self.total_bytes(),
            offline_bytes: self.bytes_where(|e| e.offline),
            online_bytes: self.bytes_where(|e| !e.offline),
            client_bytes: self.bytes_where(|e| e.from == Party::Client || e.to == Party::Client),
            rows,
        }
    }
}

/// `(from, to, phase, layer, offline)`.
type RowKey = (Party, Party, &'static str, Option<usize>, bool);

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BandwidthRow {
    /// Sender.
    pub party: Party,
    pub peer: Party,
    pub phase: &'static str,
    pub layer: Option<usize>,
    pub offline: bool,
    pub bytes: usize,
    pub messages: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BandwidthReport {
    pub rows: Vec<BandwidthRow>,
    pub total_bytes: usize,
    pub offline_bytes: usize,
    pub online_bytes: usize,
    pub client_bytes: usize,
}

/// Work done by the cloud for one stage of one inference.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OpRow {
    pub inference: u64,
    pub stage: usize,
    pub layer: usize,
    pub ops: OpCounts,
    /// Ciphertexts re-encrypted to the proxy key.
    pub reencrypted: usize,
    pub rounds: usize,
    pub instances: usize,
    pub and_gates: usize,
}

/// Checks protocol logits against the plaintext reference and its error
/// band (each activation may round up by one unless truncation is exact).
pub fn check_against_oracle(model: &ModelSpec, image: &[i64], logits: &[i64], truncation_error: bool) -> Result<()> {
    let want = reference_inference(model, image)?;
    let band = error_band(model, truncation_error)?;
    if logits.len() != want.len() {
        return Err(Error::ResultMismatch(format!("{} logits, the model has {}", logits.len(), want.len())));
    }
    for (i, ((&got, &w), &(lo, hi))) in logits.iter().zip(&want).zip(&band).enumerate() {
        let d = got - w;
        if d < lo || d > hi {
            return Err(Error::ResultMismatch(format!(
                "logit {i} is {got}, reference {w}, allowed difference [{lo}, {hi}]"
            )));
        }
    }
    Ok(())
}
