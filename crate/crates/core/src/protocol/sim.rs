//! All three roles in one thread. Messages are delivered first-in first-out,
//! and every one is encoded and decoded on the way, so byte counts and the
//! wire format match the TCP transport exactly.

use std::collections::VecDeque;

use super::client::{Client, InferenceResult};
use super::cloud::Cloud;
use super::message::{Message, MessageKind, Party, HEADER_BYTES};
use super::proxy::Proxy;
use super::report::{OpRow, Transcript};
use super::{Envelope, Machine, ProtocolConfig, Setup};
use crate::error::{Error, Result};
use crate::model::ModelSpec;

pub struct SimSession {
    pub setup: Setup,
    pub client: Machine<Client>,
    pub cloud: Machine<Cloud>,
    pub proxy: Machine<Proxy>,
    /// Keep a copy of every payload in `frames`.
    pub capture: bool,
    pub frames: Vec<(Party, Party, MessageKind, Vec<u8>)>,
    transcript: Transcript,
}

impl SimSession {
    pub fn new(model: &ModelSpec, cfg: &ProtocolConfig, seed: u64) -> Result<Self> {
        let setup = Setup::for_model(model, cfg, seed)?;
        Ok(SimSession {
            client: Machine::new(setup.client()),
            cloud: Machine::new(setup.cloud(model)?),
            proxy: Machine::new(setup.proxy()),
            setup,
            capture: false,
            frames: Vec::new(),
            transcript: Transcript::default(),
        })
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn ops(&self) -> &[OpRow] {
        self.cloud.role.ops()
    }

    /// Runs one inference per image. Keys are generated and sent on the
    /// first call only.
    pub fn run(&mut self, images: &[Vec<i64>]) -> Result<Vec<InferenceResult>> {
        self.client.role.enqueue(images.iter().cloned())?;
        let out = self.client.role.poll()?;
        self.pump(Party::Client, out)?;
        if !self.client.role.is_idle() {
            return Err(Error::Protocol(format!(
                "session stalled with {} / {} / {} deferred messages",
                self.client.deferred(),
                self.cloud.deferred(),
                self.proxy.deferred()
            )));
        }
        Ok(self.client.role.take_results())
    }

    /// Sends `Shutdown` to the cloud and proxy.
    pub fn close(&mut self) -> Result<()> {
        self.client.role.close_when_idle();
        let out = self.client.role.poll()?;
        self.pump(Party::Client, out)
    }

    fn pump(&mut self, from: Party, first: Vec<Envelope>) -> Result<()> {
        let mut queue: VecDeque<(Party, Envelope)> = first.into_iter().map(|e| (from, e)).collect();
        while let Some((from, env)) = queue.pop_front() {
            let ctx = &self.setup.ctx;
            let kind = env.msg.kind();
            let payload = env.msg.encode(ctx);
            self.transcript
                .record(&self.setup.plan, from, env.to, &env.msg, HEADER_BYTES + payload.len());
            drop(env.msg);
            let msg = Message::decode(ctx, kind, &payload)?;
            if self.capture {
                self.frames.push((from, env.to, kind, payload));
            }
            let out = match env.to {
                Party::Client => self.client.deliver(from, msg),
                Party::Cloud => self.cloud.deliver(from, msg),
                Party::Proxy => self.proxy.deliver(from, msg),
            };
            self.transcript.events.extend(self.cloud.role.take_events());
            queue.extend(out?.into_iter().map(|e| (env.to, e)));
        }
        Ok(())
    }
}

/// Logits, transcript and cloud operation counts of a simulated session.
pub struct SimOutput {
    pub results: Vec<InferenceResult>,
    pub transcript: Transcript,
    pub ops: Vec<OpRow>,
}

pub fn run_sim(model: &ModelSpec, images: &[Vec<i64>], cfg: &ProtocolConfig, seed: u64) -> Result<SimOutput> {
    let mut s = SimSession::new(model, cfg, seed)?;
    let results = s.run(images)?;
    s.close()?;
    Ok(SimOutput {
        results,
        ops: s.ops().to_vec(),
        transcript: s.transcript,
    })
}
