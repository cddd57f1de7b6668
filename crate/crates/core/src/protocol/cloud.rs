use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use super::message::{CloudKeys, Control, GarbledBundle, LabelRequestBody, LabelResponseBody, MaskedResult, Message, Party};
use super::plan::{Faults, ProtocolConfig, SessionPlan, StagePlan};
use super::report::OpRow;
use super::shares::{cloud_share, low_bits, truncate_cloud};
use super::{Envelope, Role};
use crate::bfv::{Bfv, Ciphertext, GaloisKeys, KeyOwner};
use crate::error::{Error, Result};
use crate::gc::{dealer_select, garble_batch, GarblerSecrets, GcMode, Label, LabelDelivery, OtSender, ROW_BYTES};
use crate::linear::{he_conv, he_fc, prepare_conv, prepare_fc, ConvOptions, OpCounts, PreparedConv, PreparedFc};
use crate::model::{LinearOp, ModelSpec};
use crate::ring::{rng_from_seed, RingContext, Seed, SlotVector};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum CloudEvent {
    /// The first-layer result was switched from the client key to the proxy
    /// key. One event covers all ciphertexts of that layer.
    ReEncrypt { inference: u64, layer: usize, ciphertexts: usize },
}

/// What the cloud saw, kept only in test builds so tests can check that
/// masks are fresh and that the cloud's view is unreadable without `s_p`.
#[cfg(feature = "escrow")]
#[derive(Clone, Debug, Default)]
pub struct CloudEscrow {
    /// `(inference, stage, r)`
    pub masks: Vec<(u64, usize, Vec<u64>)>,
    /// `(inference, stage, round, s_y)`
    pub output_masks: Vec<(u64, usize, usize, Vec<u64>)>,
    /// Linear-layer results before masking, under the proxy key.
    pub linear_outputs: Vec<(u64, usize, Vec<Ciphertext>)>,
    /// Activation ciphertexts after `s_y` was removed.
    pub activations: Vec<(u64, usize, Vec<Ciphertext>)>,
}

enum PreparedLinear {
    Conv(PreparedConv),
    Fc(PreparedFc),
}

struct RoundSecrets {
    id: u64,
    secrets: GarblerSecrets,
    ot: Option<OtSender>,
    served: bool,
}

struct Running {
    inference: u64,
    /// Stage whose activation is in progress.
    stage: usize,
    rounds: RoundSecretMap,
    /// Output masks of the last round of `stage`.
    s_y: Vec<u64>,
}

/// Garbler secrets by `(stage, round)`.
type RoundSecretMap = HashMap<(usize, usize), RoundSecrets>;

/// Holds the weights and evaluation keys; never holds a secret key.
pub struct Cloud {
    plan: Arc<SessionPlan>,
    bfv: Bfv,
    rng: ChaCha20Rng,
    linear: Vec<PreparedLinear>,
    options: ConvOptions,
    faults: Faults,
    keys: Option<CloudKeys>,
    empty_client: GaloisKeys,
    empty_proxy: GaloisKeys,
    current: Option<Running>,
    seen: HashSet<u64>,
    next_bundle: u64,
    tampered: bool,
    events: Vec<CloudEvent>,
    ops: Vec<OpRow>,
    done: bool,
    #[cfg(feature = "escrow")]
    pub escrow: CloudEscrow,
}

impl Cloud {
    pub fn new(
        model: &ModelSpec,
        plan: Arc<SessionPlan>,
        ctx: Arc<RingContext>,
        cfg: &ProtocolConfig,
        seed: Seed,
    ) -> Result<Self> {
        let bfv = Bfv::new(ctx);
        let stages = model.stages()?;
        if stages.len() != plan.stages.len() {
            return Err(Error::Params("plan and model disagree on the number of layers".into()));
        }
        let linear = stages
            .iter()
            .map(|s| {
                Ok(match &s.linear {
                    LinearOp::Conv { spec, kernels } => PreparedLinear::Conv(prepare_conv(&bfv, spec, kernels)?),
                    LinearOp::Fc { n_in, n_out, matrix } => PreparedLinear::Fc(prepare_fc(&bfv, *n_in, *n_out, matrix)?),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Cloud {
            empty_client: GaloisKeys::empty(KeyOwner::Client, plan.key_mode),
            empty_proxy: GaloisKeys::empty(KeyOwner::Proxy, plan.key_mode),
            plan,
            bfv,
            rng: rng_from_seed(seed),
            linear,
            options: ConvOptions {
                dedup_rotations: cfg.dedup_rotations,
            },
            faults: cfg.faults,
            keys: None,
            current: None,
            seen: HashSet::new(),
            next_bundle: 0,
            tampered: false,
            events: Vec::new(),
            ops: Vec::new(),
            done: false,
            #[cfg(feature = "escrow")]
            escrow: CloudEscrow::default(),
        })
    }

    pub fn events(&self) -> &[CloudEvent] {
        &self.events
    }

    pub fn take_events(&mut self) -> Vec<CloudEvent> {
        std::mem::take(&mut self.events)
    }

    pub fn ops(&self) -> &[OpRow] {
        &self.ops
    }

    /// Number of Galois keys held per key domain, and whether the
    /// re-encryption key is present.
    pub fn key_counts(&self) -> Option<(usize, usize, bool)> {
        self.keys.as_ref().map(|k| {
            (
                k.client_galois.as_ref().map_or(0, |g| g.len()),
                k.proxy_galois.as_ref().map_or(0, |g| g.len()),
                true,
            )
        })
    }

    fn accept_keys(&mut self, k: CloudKeys) -> Result<()> {
        if self.keys.is_some() {
            return Err(Error::Protocol("key material sent twice".into()));
        }
        let check = |g: &Option<GaloisKeys>, want: KeyOwner| match g {
            Some(g) if g.owner() != want => Err(Error::KeyOwner {
                expected: want.name(),
                found: g.owner().name(),
            }),
            _ => Ok(()),
        };
        check(&k.client_galois, KeyOwner::Client)?;
        check(&k.proxy_galois, KeyOwner::Proxy)?;
        self.keys = Some(k);
        Ok(())
    }

    fn galois(&self, stage: usize) -> &GaloisKeys {
        let keys = self.keys.as_ref().expect("keys checked by ready()");
        if stage == 0 {
            keys.client_galois.as_ref().unwrap_or(&self.empty_client)
        } else {
            keys.proxy_galois.as_ref().unwrap_or(&self.empty_proxy)
        }
    }

    fn run_linear(&self, stage: usize, inputs: &[Ciphertext]) -> Result<(Vec<Ciphertext>, OpCounts)> {
        let keys = self.galois(stage);
        match &self.linear[stage] {
            PreparedLinear::Conv(p) => he_conv(&self.bfv, inputs, p, keys, self.options),
            PreparedLinear::Fc(p) => {
                let [ct] = inputs else {
                    return Err(Error::Mismatch(format!("{} ciphertexts for a dense layer", inputs.len())));
                };
                let (out, ops) = he_fc(&self.bfv, ct, p, keys)?;
                Ok((vec![out], ops))
            }
        }
    }

    /// Garbles every round of every stage for one inference.
    fn garble_all(&mut self, inference: u64) -> Result<(RoundSecretMap, Vec<Envelope>)> {
        let mut secrets = HashMap::new();
        let mut out = Vec::new();
        let plan = self.plan.clone();
        for stage in &plan.stages {
            for (j, round) in stage.rounds.iter().enumerate() {
                let id = self.next_bundle;
                self.next_bundle += 1;
                let (mut circuit, s) = garble_batch(&round.circuit.circuit, round.instances(), id, &mut self.rng);
                if self.faults.tamper_gc && !self.tampered && circuit.tables.len() >= 4 * ROW_BYTES {
                    // one byte of every row of the first gate, so whichever
                    // row the evaluator opens is corrupt
                    for row in 0..4 {
                        circuit.tables[row * ROW_BYTES] ^= 0x01;
                    }
                    self.tampered = true;
                }
                let ot = (plan.delivery == LabelDelivery::BaseOt).then(|| OtSender::new(&mut self.rng));
                out.push(Envelope::new(
                    Party::Proxy,
                    Message::Garbled(GarbledBundle {
                        inference,
                        stage: stage.index,
                        round: j,
                        circuit,
                        ot_setup: ot.as_ref().map(|o| o.setup_message()),
                    }),
                ));
                secrets.insert(
                    (stage.index, j),
                    RoundSecrets {
                        id,
                        secrets: s,
                        ot,
                        served: false,
                    },
                );
            }
        }
        Ok((secrets, out))
    }

    fn start(&mut self, inference: u64, ciphertexts: Vec<Ciphertext>) -> Result<Vec<Envelope>> {
        if !self.seen.insert(inference) {
            return Err(Error::Protocol(format!("inference id {inference} reused")));
        }
        let plan = self.plan.clone();
        let s0 = &plan.stages[0];
        if let Some(c) = ciphertexts.iter().find(|c| c.owner() != KeyOwner::Client) {
            return Err(Error::KeyOwner {
                expected: "client",
                found: c.owner().name(),
            });
        }
        let (rounds, mut out) = self.garble_all(inference)?;
        self.current = Some(Running {
            inference,
            stage: 0,
            rounds,
            s_y: Vec::new(),
        });
        let (linear, ops) = self.run_linear(0, &ciphertexts)?;
        let reencrypted = linear
            .iter()
            .map(|c| self.bfv.reencrypt(c, &self.keys.as_ref().expect("checked").reencryption))
            .collect::<Result<Vec<_>>>()?;
        self.events.push(CloudEvent::ReEncrypt {
            inference,
            layer: s0.layer,
            ciphertexts: reencrypted.len(),
        });
        out.extend(self.finish_stage(s0, reencrypted, ops, true)?);
        Ok(out)
    }

    fn add_mask(&self, cts: &mut [Ciphertext], vectors: &[SlotVector]) -> Result<()> {
        for (c, v) in cts.iter_mut().zip(vectors) {
            *c = self.bfv.add_plain(c, &self.bfv.encode(v)?)?;
        }
        Ok(())
    }

    /// Masks a linear-layer result (under the proxy key) and sends it on.
    fn finish_stage(&mut self, stage: &StagePlan, mut cts: Vec<Ciphertext>, ops: OpCounts, first: bool) -> Result<Vec<Envelope>> {
        let run = self.current.as_ref().expect("inference in progress");
        let inference = run.inference;
        #[cfg(feature = "escrow")]
        self.escrow.linear_outputs.push((inference, stage.index, cts.clone()));
        let instances = stage.rounds.iter().map(|r| r.instances()).sum();
        self.ops.push(OpRow {
            inference,
            stage: stage.index,
            layer: stage.layer,
            ops,
            reencrypted: if first { cts.len() } else { 0 },
            rounds: stage.rounds.len(),
            instances,
            and_gates: stage.rounds.iter().map(|r| r.circuit.circuit.and_count() * r.instances()).sum(),
        });
        let Some(mask) = stage.mask else {
            // last layer: hide whatever the unused slots accumulated
            let zeros = vec![0; stage.output.len()];
            let t = self.plan.params.t;
            let rng = &mut self.rng;
            let vectors = stage.output.pack_with(&zeros, || rng.gen_range(0..t))?;
            self.add_mask(&mut cts, &vectors)?;
            self.current = None;
            return Ok(vec![Envelope::new(
                Party::Client,
                Message::Final {
                    inference,
                    ciphertexts: cts,
                },
            )]);
        };
        let t = self.plan.params.t;
        let r: Vec<u64> = (0..stage.output.len())
            .map(|_| if self.faults.zero_masks { 0 } else { mask.sample(&mut self.rng) })
            .collect();
        let rng = &mut self.rng;
        let vectors = stage.output.pack_with(&r, || rng.gen_range(0..t))?;
        self.add_mask(&mut cts, &vectors)?;
        #[cfg(feature = "escrow")]
        self.escrow.masks.push((inference, stage.index, r.clone()));

        let mut garbler_labels = Vec::with_capacity(stage.rounds.len());
        let mut prev: Vec<u64> = Vec::new();
        for (j, round) in stage.rounds.iter().enumerate() {
            let cfg = round.circuit.cfg;
            let (shares, lows): (Vec<u64>, Vec<u64>) = if j == 0 {
                r.iter()
                    .map(|&r| match cfg.mode {
                        GcMode::Truncated => (truncate_cloud(r, cfg.f, cfg.b), if cfg.exact { low_bits(r, cfg.f) } else { 0 }),
                        GcMode::ModT => (cloud_share(r, t), 0),
                    })
                    .unzip()
            } else {
                let m = round.share_modulus();
                prev.iter().map(|&s| (((m - s as u128 % m) % m) as u64, 0)).unzip()
            };
            let (lo, hi) = round.output_mask;
            let s_y: Vec<u64> = (0..round.instances()).map(|_| self.rng.gen_range(lo..hi)).collect();
            let rs = &self.current.as_ref().expect("in progress").rounds[&(stage.index, j)];
            let labels = round
                .windows
                .iter()
                .zip(&s_y)
                .enumerate()
                .map(|(i, (w, &sy))| {
                    let sh: Vec<u64> = w.iter().map(|&k| shares[k]).collect();
                    let lw: Vec<u64> = w.iter().map(|&k| lows[k]).collect();
                    let bits = round.circuit.garbler_bits(&sh, &lw, sy)?;
                    rs.secrets.garbler_labels(i, &bits)
                })
                .collect::<Result<Vec<Vec<Label>>>>()?;
            garbler_labels.push(labels);
            #[cfg(feature = "escrow")]
            self.escrow.output_masks.push((inference, stage.index, j, s_y.clone()));
            prev = s_y;
        }
        let run = self.current.as_mut().expect("in progress");
        run.stage = stage.index;
        run.s_y = prev;
        Ok(vec![Envelope::new(
            Party::Proxy,
            Message::Masked(MaskedResult {
                inference,
                stage: stage.index,
                ciphertexts: cts,
                garbler_labels,
            }),
        )])
    }

    fn serve_labels(&mut self, inference: u64, stage: usize, round: usize, body: LabelRequestBody) -> Result<Vec<Envelope>> {
        let run = self
            .current
            .as_mut()
            .filter(|r| r.inference == inference && r.stage == stage)
            .ok_or_else(|| Error::Protocol(format!("label request for inference {inference} stage {stage} out of turn")))?;
        let plan = self.plan.clone();
        let rp = plan
            .stages
            .get(stage)
            .and_then(|s| s.rounds.get(round))
            .ok_or_else(|| Error::Protocol(format!("no round {round} in stage {stage}")))?;
        let rs = run
            .rounds
            .get_mut(&(stage, round))
            .ok_or_else(|| Error::Protocol(format!("round {round} of stage {stage} not garbled")))?;
        if rs.served {
            return Err(Error::Reused(rs.id));
        }
        rs.served = true;
        let per = rp.circuit.circuit.evaluator_inputs.len();
        let total = per * rp.instances();
        let pairs: Vec<_> = (0..rp.instances()).flat_map(|i| rs.secrets.evaluator_pairs(i)).collect();
        let body = match (body, &rs.ot) {
            (LabelRequestBody::Bits(bits), None) => {
                if bits.len() != total {
                    return Err(Error::Mismatch(format!("{} evaluator bits, expected {total}", bits.len())));
                }
                LabelResponseBody::Labels(dealer_select(&pairs, &bits)?)
            }
            (LabelRequestBody::Points(points), Some(ot)) => LabelResponseBody::Sealed(ot.respond(rs.id, &points, &pairs)?),
            _ => return Err(Error::Protocol("label request does not match the delivery mode".into())),
        };
        Ok(vec![Envelope::new(
            Party::Proxy,
            Message::LabelResponse {
                inference,
                stage,
                round,
                body,
            },
        )])
    }

    fn next_stage(&mut self, inference: u64, stage: usize, cts: Vec<Ciphertext>) -> Result<Vec<Envelope>> {
        let run = self
            .current
            .as_ref()
            .filter(|r| r.inference == inference && r.stage == stage)
            .ok_or_else(|| Error::Protocol(format!("activation for inference {inference} stage {stage} out of turn")))?;
        let plan = self.plan.clone();
        let next = plan
            .stages
            .get(stage + 1)
            .ok_or_else(|| Error::Protocol(format!("activation after the last stage {stage}")))?;
        if cts.len() != next.input.ciphertexts {
            return Err(Error::Mismatch(format!("{} activation ciphertexts, expected {}", cts.len(), next.input.ciphertexts)));
        }
        if let Some(c) = cts.iter().find(|c| c.owner() != KeyOwner::Proxy) {
            return Err(Error::KeyOwner {
                expected: "proxy",
                found: c.owner().name(),
            });
        }
        let s_y = next.input.pack(&run.s_y)?;
        let inputs = cts
            .iter()
            .zip(&s_y)
            .map(|(c, v)| self.bfv.sub_plain(c, &self.bfv.encode(v)?))
            .collect::<Result<Vec<_>>>()?;
        #[cfg(feature = "escrow")]
        self.escrow.activations.push((inference, next.index, inputs.clone()));
        let (linear, ops) = self.run_linear(next.index, &inputs)?;
        self.finish_stage(next, linear, ops, false)
    }
}

impl Role for Cloud {
    fn party(&self) -> Party {
        Party::Cloud
    }

    fn ready(&self, _from: Party, msg: &Message) -> bool {
        match msg {
            Message::Input { .. } => self.keys.is_some() && self.current.is_none(),
            _ => true,
        }
    }

    fn handle(&mut self, from: Party, msg: Message) -> Result<Vec<Envelope>> {
        let layer_of = |plan: &SessionPlan, s: usize| plan.stages.get(s).map(|s| s.layer);
        match (from, msg) {
            (Party::Client, Message::CloudKeys(k)) => {
                self.accept_keys(k).map_err(|e| e.in_phase("cloud", "keygen", None))?;
                Ok(Vec::new())
            }
            (Party::Client, Message::Input { inference, ciphertexts }) => {
                let layer = layer_of(&self.plan, 0);
                self.start(inference, ciphertexts).map_err(|e| e.in_phase("cloud", "linear", layer))
            }
            (
                Party::Proxy,
                Message::LabelRequest {
                    inference,
                    stage,
                    round,
                    body,
                },
            ) => {
                let layer = layer_of(&self.plan, stage);
                self.serve_labels(inference, stage, round, body)
                    .map_err(|e| e.in_phase("cloud", "activation", layer))
            }
            (
                Party::Proxy,
                Message::Activation {
                    inference,
                    stage,
                    ciphertexts,
                },
            ) => {
                let layer = layer_of(&self.plan, stage + 1);
                self.next_stage(inference, stage, ciphertexts)
                    .map_err(|e| e.in_phase("cloud", "linear", layer))
            }
            (Party::Client, Message::Control(Control::Shutdown)) => {
                self.done = true;
                Ok(Vec::new())
            }
            (from, m) => Err(Error::Protocol(format!("cloud got {} from {from}", m.kind().name()))),
        }
    }

    fn is_done(&self) -> bool {
        self.done
    }
}
