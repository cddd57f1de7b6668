use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use rand_chacha::ChaCha20Rng;

use super::message::{Control, GarbledBundle, LabelRequestBody, LabelResponseBody, MaskedResult, Message, Party};
use super::plan::SessionPlan;
use super::shares::{low_bits, truncate_proxy};
use super::{Envelope, Role};
use crate::bfv::{Bfv, Ciphertext, KeyOwner, SecretKey};
use crate::error::{Error, Result};
use crate::gc::{GcMode, Label, OtReceiver};
use crate::ring::{rng_from_seed, RingContext, Seed};

/// What the proxy saw, for tests.
#[cfg(feature = "escrow")]
#[derive(Clone, Debug, Default)]
pub struct ProxyEscrow {
    /// `(inference, stage, x + r)` as decrypted.
    pub decrypted: Vec<(u64, usize, Vec<u64>)>,
    /// `(inference, stage, round, y + s_y)` as evaluated.
    pub outputs: Vec<(u64, usize, usize, Vec<u64>)>,
}

struct Round {
    inference: u64,
    stage: usize,
    round: usize,
    garbler_labels: Vec<Vec<Vec<Label>>>,
    /// Inputs of the current round: decrypted values or previous outputs.
    operands: Vec<u64>,
    receiver: Option<OtReceiver>,
}

/// Decrypts masked values with `s_p` and evaluates the garbled activations.
pub struct Proxy {
    plan: Arc<SessionPlan>,
    bfv: Bfv,
    rng: ChaCha20Rng,
    key: Option<SecretKey>,
    bundles: HashMap<(u64, usize, usize), GarbledBundle>,
    used: HashSet<u64>,
    current: Option<Round>,
    done: bool,
    #[cfg(feature = "escrow")]
    pub escrow: ProxyEscrow,
}

impl Proxy {
    pub fn new(plan: Arc<SessionPlan>, ctx: Arc<RingContext>, seed: Seed) -> Self {
        Proxy {
            plan,
            bfv: Bfv::new(ctx),
            rng: rng_from_seed(seed),
            key: None,
            bundles: HashMap::new(),
            used: HashSet::new(),
            current: None,
            done: false,
            #[cfg(feature = "escrow")]
            escrow: ProxyEscrow::default(),
        }
    }

    /// Decrypts and unpacks ciphertexts the proxy can read.
    pub fn probe(&self, cts: &[Ciphertext], stage: usize) -> Result<Vec<u64>> {
        let key = self.key.as_ref().ok_or_else(|| Error::Protocol("proxy has no key yet".into()))?;
        let slots = cts.iter().map(|c| self.bfv.decrypt_slots(key, c)).collect::<Result<Vec<_>>>()?;
        self.plan.stages[stage].output.unpack(&slots)
    }

    fn accept_key(&mut self, sk: SecretKey) -> Result<()> {
        if sk.owner() != KeyOwner::Proxy {
            return Err(Error::KeyOwner {
                expected: "proxy",
                found: sk.owner().name(),
            });
        }
        if self.key.is_some() {
            return Err(Error::Protocol("proxy key sent twice".into()));
        }
        self.key = Some(sk);
        Ok(())
    }

    fn begin(&mut self, m: MaskedResult) -> Result<Vec<Envelope>> {
        let stage = self
            .plan
            .stages
            .get(m.stage)
            .filter(|s| !s.is_last())
            .ok_or_else(|| Error::Protocol(format!("masked result for stage {}", m.stage)))?;
        if m.garbler_labels.len() != stage.rounds.len() {
            return Err(Error::Mismatch(format!(
                "garbler labels for {} rounds, stage has {}",
                m.garbler_labels.len(),
                stage.rounds.len()
            )));
        }
        let p = self.probe(&m.ciphertexts, m.stage)?;
        if let Some(limit) = stage.mask.and_then(|mp| mp.masked_limit()) {
            if let Some(v) = p.iter().find(|&&v| v >= limit) {
                return Err(Error::ResultMismatch(format!(
                    "decrypted masked value {v} is outside the mask range [0, {limit}); ciphertext noise is exhausted"
                )));
            }
        }
        #[cfg(feature = "escrow")]
        self.escrow.decrypted.push((m.inference, m.stage, p.clone()));
        self.current = Some(Round {
            inference: m.inference,
            stage: m.stage,
            round: 0,
            garbler_labels: m.garbler_labels,
            operands: p,
            receiver: None,
        });
        self.request()
    }

    /// Sends the evaluator bits (dealer) or OT points for the current round.
    fn request(&mut self) -> Result<Vec<Envelope>> {
        let plan = self.plan.clone();
        let cur = self.current.as_mut().expect("round in progress");
        let rp = &plan.stages[cur.stage].rounds[cur.round];
        let cfg = rp.circuit.cfg;
        let (shares, lows): (Vec<u64>, Vec<u64>) = if cur.round == 0 {
            cur.operands
                .iter()
                .map(|&p| match cfg.mode {
                    GcMode::Truncated => (truncate_proxy(p, cfg.f, cfg.b), if cfg.exact { low_bits(p, cfg.f) } else { 0 }),
                    GcMode::ModT => (p, 0),
                })
                .unzip()
        } else {
            cur.operands.iter().map(|&z| (z, 0)).unzip()
        };
        let mut bits = Vec::with_capacity(rp.instances() * rp.circuit.circuit.evaluator_inputs.len());
        for w in &rp.windows {
            let sh: Vec<u64> = w.iter().map(|&k| shares[k]).collect();
            let lw: Vec<u64> = w.iter().map(|&k| lows[k]).collect();
            bits.extend(rp.circuit.evaluator_bits(&sh, &lw)?);
        }
        let bundle = &self.bundles[&(cur.inference, cur.stage, cur.round)];
        let body = match bundle.ot_setup {
            None => LabelRequestBody::Bits(bits),
            Some(setup) => {
                let (receiver, points) = OtReceiver::new(&setup, &bits, &mut self.rng)?;
                cur.receiver = Some(receiver);
                LabelRequestBody::Points(points)
            }
        };
        Ok(vec![Envelope::new(
            Party::Cloud,
            Message::LabelRequest {
                inference: cur.inference,
                stage: cur.stage,
                round: cur.round,
                body,
            },
        )])
    }

    fn evaluate(&mut self, inference: u64, stage: usize, round: usize, body: LabelResponseBody) -> Result<Vec<Envelope>> {
        let plan = self.plan.clone();
        let cur = self
            .current
            .as_mut()
            .filter(|c| (c.inference, c.stage, c.round) == (inference, stage, round))
            .ok_or_else(|| Error::Protocol(format!("labels for inference {inference} stage {stage} round {round} out of turn")))?;
        let rp = &plan.stages[stage].rounds[round];
        let bundle = self
            .bundles
            .remove(&(inference, stage, round))
            .ok_or_else(|| Error::Protocol("garbled tables missing".into()))?;
        if !self.used.insert(bundle.circuit.id) {
            return Err(Error::Reused(bundle.circuit.id));
        }
        let labels = match (body, cur.receiver.take()) {
            (LabelResponseBody::Labels(l), None) => l,
            (LabelResponseBody::Sealed(rows), Some(rx)) => rx.finish(bundle.circuit.id, &rows)?,
            _ => return Err(Error::Protocol("label response does not match the delivery mode".into())),
        };
        let per = rp.circuit.circuit.evaluator_inputs.len();
        if labels.len() != per * rp.instances() {
            return Err(Error::Mismatch(format!("{} evaluator labels, expected {}", labels.len(), per * rp.instances())));
        }
        let evaluator: Vec<Vec<Label>> = labels.chunks(per.max(1)).map(|c| c.to_vec()).collect();
        let outputs = bundle
            .circuit
            .evaluate_all(&rp.circuit.circuit, &cur.garbler_labels[round], &evaluator)?;
        let z: Vec<u64> = outputs.iter().map(|b| rp.circuit.decode_output(b)).collect();
        #[cfg(feature = "escrow")]
        self.escrow.outputs.push((inference, stage, round, z.clone()));
        if round + 1 < plan.stages[stage].rounds.len() {
            cur.round += 1;
            cur.operands = z;
            return self.request();
        }
        self.current = None;
        let next = &plan.stages[stage + 1];
        let key = self.key.as_ref().expect("key checked by ready()");
        let ciphertexts = next
            .input
            .pack(&z)?
            .iter()
            .map(|v| self.bfv.encrypt_slots(key, v, &mut self.rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(vec![Envelope::new(
            Party::Cloud,
            Message::Activation {
                inference,
                stage,
                ciphertexts,
            },
        )])
    }
}

impl Role for Proxy {
    fn party(&self) -> Party {
        Party::Proxy
    }

    fn ready(&self, _from: Party, msg: &Message) -> bool {
        match msg {
            Message::Masked(m) => {
                let rounds = self.plan.stages.get(m.stage).map_or(0, |s| s.rounds.len());
                self.key.is_some()
                    && self.current.is_none()
                    && (0..rounds).all(|j| self.bundles.contains_key(&(m.inference, m.stage, j)))
            }
            _ => true,
        }
    }

    fn handle(&mut self, from: Party, msg: Message) -> Result<Vec<Envelope>> {
        let layer_of = |s: usize| self.plan.stages.get(s).map(|s| s.layer);
        match (from, msg) {
            (Party::Client, Message::ProxyKey(sk)) => {
                self.accept_key(sk).map_err(|e| e.in_phase("proxy", "keygen", None))?;
                Ok(Vec::new())
            }
            (Party::Cloud, Message::Garbled(g)) => {
                let key = (g.inference, g.stage, g.round);
                if self.used.contains(&g.circuit.id) || self.bundles.contains_key(&key) {
                    return Err(Error::Reused(g.circuit.id).in_phase("proxy", "activation", layer_of(g.stage)));
                }
                self.bundles.insert(key, g);
                Ok(Vec::new())
            }
            (Party::Cloud, Message::Masked(m)) => {
                let layer = layer_of(m.stage);
                self.begin(m).map_err(|e| e.in_phase("proxy", "activation", layer))
            }
            (
                Party::Cloud,
                Message::LabelResponse {
                    inference,
                    stage,
                    round,
                    body,
                },
            ) => {
                let layer = layer_of(stage);
                self.evaluate(inference, stage, round, body)
                    .map_err(|e| e.in_phase("proxy", "activation", layer))
            }
            (Party::Client, Message::Control(Control::Shutdown)) => {
                self.done = true;
                Ok(Vec::new())
            }
            (from, m) => Err(Error::Protocol(format!("proxy got {} from {from}", m.kind().name()))),
        }
    }

    fn is_done(&self) -> bool {
        self.done
    }
}
