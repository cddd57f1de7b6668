use std::collections::VecDeque;
use std::sync::Arc;

use rand_chacha::ChaCha20Rng;

use super::message::{CloudKeys, Control, Message, Party};
use super::plan::SessionPlan;
use super::{Envelope, Role};
use crate::bfv::{Bfv, Ciphertext, GaloisKeys, KeyOwner, ReEncryptionKey, SecretKey};
use crate::error::{Error, Result};
use crate::model::argmax;
use crate::ring::{rng_from_seed, RingContext, Seed};

#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize)]
pub struct InferenceResult {
    pub inference: u64,
    pub logits: Vec<i64>,
    pub argmax: usize,
}

/// Holds both secrets, generates every key and consumes the final result.
pub struct Client {
    plan: Arc<SessionPlan>,
    bfv: Bfv,
    rng: ChaCha20Rng,
    input_bits: u32,
    s_c: SecretKey,
    s_p: SecretKey,
    keys_sent: bool,
    queue: VecDeque<Vec<i64>>,
    waiting: Option<u64>,
    next_id: u64,
    results: Vec<InferenceResult>,
    close_when_idle: bool,
    closed: bool,
}

impl Client {
    pub fn new(plan: Arc<SessionPlan>, ctx: Arc<RingContext>, input_bits: u32, seed: Seed) -> Self {
        let mut rng = rng_from_seed(seed);
        let s_c = SecretKey::generate(&ctx, KeyOwner::Client, &mut rng);
        let s_p = SecretKey::generate(&ctx, KeyOwner::Proxy, &mut rng);
        Client {
            plan,
            bfv: Bfv::new(ctx),
            rng,
            input_bits,
            s_c,
            s_p,
            keys_sent: false,
            queue: VecDeque::new(),
            waiting: None,
            next_id: 0,
            results: Vec::new(),
            close_when_idle: false,
            closed: false,
        }
    }

    /// Galois keys for both key domains, the re-encryption key, and `s_p`
    /// for the proxy.
    pub fn key_material(&mut self) -> Result<Vec<Envelope>> {
        let ctx = self.bfv.context().clone();
        let plan = &self.plan;
        let w_a = plan.bases.w_a;
        let galois = |sk: &SecretKey, steps: &Option<Vec<i64>>, rng: &mut ChaCha20Rng| {
            steps
                .as_ref()
                .map(|s| GaloisKeys::generate(&ctx, sk, plan.key_mode, Some(s), w_a, rng))
                .transpose()
        };
        let client_galois = galois(&self.s_c, &plan.client_steps, &mut self.rng)?;
        let proxy_galois = galois(&self.s_p, &plan.proxy_steps, &mut self.rng)?;
        let reencryption = ReEncryptionKey::generate(&ctx, &self.s_c, &self.s_p, plan.bases.w_sw, &mut self.rng)?;
        self.keys_sent = true;
        Ok(vec![
            Envelope::new(
                Party::Cloud,
                Message::CloudKeys(CloudKeys {
                    client_galois,
                    proxy_galois,
                    reencryption,
                }),
            ),
            Envelope::new(Party::Proxy, Message::ProxyKey(self.s_p.clone())),
        ])
    }

    /// Checks and encrypts one image under `s_c`.
    pub fn encrypt_input(&mut self, image: &[i64]) -> Result<Vec<Ciphertext>> {
        let map = &self.plan.stages[0].input;
        if image.is_empty() {
            return Err(Error::Params("empty input image".into()));
        }
        if image.len() != map.len() {
            return Err(Error::Params(format!("image has {} values, the model takes {}", image.len(), map.len())));
        }
        let lim = 1i64 << self.input_bits;
        if let Some(v) = image.iter().find(|v| v.abs() >= lim) {
            return Err(Error::OutOfRange(format!("input value {v} exceeds {} bits", self.input_bits)));
        }
        let t = self.plan.params.t as i64;
        let values: Vec<u64> = image.iter().map(|v| v.rem_euclid(t) as u64).collect();
        map.pack(&values)?
            .iter()
            .map(|v| self.bfv.encrypt_slots(&self.s_c, v, &mut self.rng))
            .collect()
    }

    /// Queues images; they are sent one at a time.
    pub fn enqueue(&mut self, images: impl IntoIterator<Item = Vec<i64>>) -> Result<()> {
        for image in images {
            // reject bad images before anything is sent
            if image.is_empty() {
                return Err(Error::Params("empty input image".into()));
            }
            self.queue.push_back(image);
        }
        Ok(())
    }

    /// Send `Shutdown` to both peers once the queue drains.
    pub fn close_when_idle(&mut self) {
        self.close_when_idle = true;
    }

    /// Messages to send now: key material on first use, then the next input
    /// if no inference is in flight.
    pub fn poll(&mut self) -> Result<Vec<Envelope>> {
        let mut out = Vec::new();
        if !self.keys_sent {
            out.extend(self.key_material().map_err(|e| e.in_phase("client", "keygen", None))?);
        }
        if self.waiting.is_some() || self.closed {
            return Ok(out);
        }
        if let Some(image) = self.queue.pop_front() {
            let ciphertexts = self
                .encrypt_input(&image)
                .map_err(|e| e.in_phase("client", "encrypt", Some(self.plan.stages[0].layer)))?;
            let inference = self.next_id;
            self.next_id += 1;
            self.waiting = Some(inference);
            out.push(Envelope::new(Party::Cloud, Message::Input { inference, ciphertexts }));
        } else if self.close_when_idle {
            self.closed = true;
            for p in [Party::Cloud, Party::Proxy] {
                out.push(Envelope::new(p, Message::Control(Control::Shutdown)));
            }
        }
        Ok(out)
    }

    pub fn results(&self) -> &[InferenceResult] {
        &self.results
    }

    pub fn take_results(&mut self) -> Vec<InferenceResult> {
        std::mem::take(&mut self.results)
    }

    pub fn is_idle(&self) -> bool {
        self.waiting.is_none() && self.queue.is_empty()
    }

    fn finish(&mut self, inference: u64, ciphertexts: &[Ciphertext]) -> Result<InferenceResult> {
        let last = self.plan.stages.last().expect("plan has stages");
        let slots = ciphertexts
            .iter()
            .map(|c| self.bfv.decrypt_slots(&self.s_p, c))
            .collect::<Result<Vec<_>>>()?;
        let t = self.plan.params.t;
        let lim = 1i64 << (last.bound_bits - 1);
        let logits: Vec<i64> = last
            .output
            .unpack(&slots)?
            .into_iter()
            .map(|v| if v > t / 2 { v as i64 - t as i64 } else { v as i64 })
            .collect();
        if let Some(v) = logits.iter().find(|v| v.abs() >= lim) {
            return Err(Error::ResultMismatch(format!(
                "logit {v} outside the certified {} bits; the ciphertext noise is exhausted or a share was corrupted",
                last.bound_bits
            )));
        }
        Ok(InferenceResult {
            inference,
            argmax: argmax(&logits),
            logits,
        })
    }

    #[cfg(feature = "escrow")]
    pub fn escrow_keys(&self) -> (&SecretKey, &SecretKey) {
        (&self.s_c, &self.s_p)
    }
}

impl Role for Client {
    fn party(&self) -> Party {
        Party::Client
    }

    fn ready(&self, _from: Party, _msg: &Message) -> bool {
        true
    }

    fn handle(&mut self, from: Party, msg: Message) -> Result<Vec<Envelope>> {
        let layer = self.plan.stages.last().map(|s| s.layer);
        match (from, msg) {
            (Party::Cloud, Message::Final { inference, ciphertexts }) => {
                if self.waiting != Some(inference) {
                    return Err(Error::Protocol(format!("unexpected result for inference {inference}"))
                        .in_phase("client", "result", layer));
                }
                let r = self
                    .finish(inference, &ciphertexts)
                    .map_err(|e| e.in_phase("client", "result", layer))?;
                self.results.push(r);
                self.waiting = None;
                self.poll()
            }
            (_, Message::Control(Control::Shutdown)) => {
                self.closed = true;
                Ok(Vec::new())
            }
            (from, m) => Err(Error::Protocol(format!("client got {} from {from}", m.kind().name()))),
        }
    }

    fn is_done(&self) -> bool {
        self.closed
    }
}
