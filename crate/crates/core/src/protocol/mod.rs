//! The three-party inference protocol.
//!
//! The client encrypts its image under `s_c` and sends it to the cloud. The
//! cloud evaluates the first linear layer, re-encrypts the result to the
//! proxy key `s_p` once, and adds a fresh mask `r`. The proxy decrypts
//! `x + r`, both sides truncate their shares locally, and a garbled circuit
//! (garbled by the cloud, evaluated by the proxy) computes the activation
//! masked by a cloud-chosen `s_y`. The proxy encrypts its output under `s_p`,
//! the cloud removes `s_y` homomorphically and continues with the next layer.
//! The last linear layer goes straight back to the client, which holds both
//! secrets and decrypts with `s_p`.
//!
//! Roles are message-driven state machines. A message that arrives before
//! its role can use it (garbled tables racing the masked values, say) waits
//! in a deferred queue. [`sim`] runs the roles in one thread with a
//! deterministic scheduler; [`net`] runs each role over TCP.

mod client;
mod cloud;
mod message;
pub mod net;
mod plan;
mod probe;
mod proxy;
mod report;
mod shares;
pub mod sim;

use std::collections::VecDeque;

pub use client::{Client, InferenceResult};
pub use cloud::{Cloud, CloudEvent};
pub use message::{
    frame_bytes, read_frame, write_frame, CloudKeys, Control, GarbledBundle, LabelRequestBody, LabelResponseBody,
    MaskedResult, Message, MessageKind, Party, HEADER_BYTES, MAGIC, MAX_PAYLOAD, WIRE_VERSION,
};
pub use plan::{
    plan_bases, stage_load, Faults, LinearShapeSpec, ProtocolConfig, PublicModel, PublicStage, RoundPlan, SessionPlan, SlotMap,
    StagePlan,
};
pub use probe::{measure_stage_noise, MeasuredNoise};
pub use proxy::Proxy;
pub use report::{check_against_oracle, BandwidthReport, BandwidthRow, OpRow, Transcript, TranscriptEntry};
pub use shares::{
    cloud_share, low_bits, mask_value, output_mask_range, truncate_cloud, truncate_proxy, truncate_shares, MaskPlan,
    ShareRing, ShareVector, Side, DEFAULT_LAMBDA,
};

#[cfg(feature = "escrow")]
pub use cloud::CloudEscrow;
#[cfg(feature = "escrow")]
pub use proxy::ProxyEscrow;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::ring::{derive_seed, seed_from_u64, RingContext, Seed};

/// An outgoing message and its recipient.
#[derive(Clone, Debug)]
pub struct Envelope {
    pub to: Party,
    pub msg: Message,
}

impl Envelope {
    pub fn new(to: Party, msg: Message) -> Self {
        Envelope { to, msg }
    }
}

/// A party's message handler.
pub trait Role {
    fn party(&self) -> Party;

    /// Whether `msg` can be handled now. Messages that are not ready are
    /// deferred and retried after every handled message.
    fn ready(&self, from: Party, msg: &Message) -> bool;

    fn handle(&mut self, from: Party, msg: Message) -> Result<Vec<Envelope>>;

    /// True once the role expects no further messages.
    fn is_done(&self) -> bool;
}

/// A role plus its deferred queue.
#[derive(Debug)]
pub struct Machine<R> {
    pub role: R,
    deferred: VecDeque<(Party, Message)>,
}

impl<R: Role> Machine<R> {
    pub fn new(role: R) -> Self {
        Machine {
            role,
            deferred: VecDeque::new(),
        }
    }

    pub fn deferred(&self) -> usize {
        self.deferred.len()
    }

    pub fn deliver(&mut self, from: Party, msg: Message) -> Result<Vec<Envelope>> {
        if let Message::Control(Control::Abort { party, class, reason }) = msg {
            return Err(Error::Remote {
                party: party.name(),
                class,
                message: reason,
            });
        }
        if !self.role.ready(from, &msg) {
            self.deferred.push_back((from, msg));
            return Ok(Vec::new());
        }
        let mut out = self.role.handle(from, msg)?;
        while let Some(i) = self.deferred.iter().position(|(f, m)| self.role.ready(*f, m)) {
            let (f, m) = self.deferred.remove(i).expect("index from position");
            out.extend(self.role.handle(f, m)?);
        }
        Ok(out)
    }
}

/// Parameters, plan and per-role seeds shared by every role of a session.
#[derive(Clone)]
pub struct Setup {
    pub ctx: Arc<RingContext>,
    pub plan: Arc<SessionPlan>,
    pub public: PublicModel,
    pub config: ProtocolConfig,
    root: Seed,
}

impl Setup {
    pub fn new(public: PublicModel, config: &ProtocolConfig, seed: u64) -> Result<Self> {
        let plan = SessionPlan::new(&public, config)?;
        for w in &plan.warnings {
            log::warn!("{w}");
        }
        Ok(Setup {
            ctx: RingContext::new(config.params)?,
            plan: Arc::new(plan),
            public,
            config: config.clone(),
            root: seed_from_u64(seed),
        })
    }

    pub fn for_model(model: &ModelSpec, config: &ProtocolConfig, seed: u64) -> Result<Self> {
        Self::new(PublicModel::of(model)?, config, seed)
    }

    pub fn seed(&self, party: Party) -> Seed {
        derive_seed(&self.root, party.name())
    }

    pub fn client(&self) -> Client {
        Client::new(self.plan.clone(), self.ctx.clone(), self.public.input_bits, self.seed(Party::Client))
    }

    pub fn cloud(&self, model: &ModelSpec) -> Result<Cloud> {
        if PublicModel::of(model)? != self.public {
            return Err(Error::Params("the cloud's model does not match the session's public model".into()));
        }
        Cloud::new(model, self.plan.clone(), self.ctx.clone(), &self.config, self.seed(Party::Cloud))
    }

    pub fn proxy(&self) -> Proxy {
        Proxy::new(self.plan.clone(), self.ctx.clone(), self.seed(Party::Proxy))
    }
}
