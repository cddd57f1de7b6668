//! TCP transport: one connection per ordered pair of parties. Each role
//! listens for its peers, connects to each of them and opens every outgoing
//! connection with a `Hello` frame naming itself. Incoming frames are read on
//! a thread per connection and funnelled into the role's mailbox.

use std::collections::HashMap;
use std::io::BufReader;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::mpsc::{self, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use super::client::InferenceResult;
use super::message::{read_frame, write_frame, Control, Message, Party, HEADER_BYTES};
use super::report::{OpRow, Transcript};
use super::{Envelope, Machine, ProtocolConfig, Role, SessionPlan, Setup};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::ring::RingContext;

/// Addresses every role listens on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Endpoints {
    pub client: SocketAddr,
    pub cloud: SocketAddr,
    pub proxy: SocketAddr,
}

impl Endpoints {
    pub fn of(&self, p: Party) -> SocketAddr {
        match p {
            Party::Client => self.client,
            Party::Cloud => self.cloud,
            Party::Proxy => self.proxy,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct NetOptions {
    /// How long to keep retrying connections to peers that are not up yet.
    pub connect_timeout: Duration,
    /// Longest wait for any message before giving up.
    pub idle_timeout: Duration,
}

impl Default for NetOptions {
    fn default() -> Self {
        NetOptions {
            connect_timeout: Duration::from_secs(30),
            idle_timeout: Duration::from_secs(600),
        }
    }
}

enum Incoming {
    Msg(Party, Message),
    Closed(Party),
    Failed(Error),
}

fn read_loop(ctx: Arc<RingContext>, stream: TcpStream, tx: Sender<Incoming>) {
    let mut r = BufReader::new(stream);
    let hello = match read_frame(&mut r).and_then(|f| {
        let (kind, payload) = f.ok_or_else(|| Error::Protocol("connection closed before hello".into()))?;
        Message::decode(&ctx, kind, &payload)
    }) {
        Ok(Message::Control(Control::Hello(p))) => p,
        Ok(m) => {
            let _ = tx.send(Incoming::Failed(Error::Protocol(format!("expected hello, got {}", m.kind().name()))));
            return;
        }
        Err(e) => {
            let _ = tx.send(Incoming::Failed(e));
            return;
        }
    };
    loop {
        let item = match read_frame(&mut r) {
            Ok(Some((kind, payload))) => match Message::decode(&ctx, kind, &payload) {
                Ok(m) => Incoming::Msg(hello, m),
                Err(e) => Incoming::Failed(e),
            },
            Ok(None) => Incoming::Closed(hello),
            Err(e) => Incoming::Failed(e),
        };
        let stop = !matches!(item, Incoming::Msg(..));
        if tx.send(item).is_err() || stop {
            return;
        }
    }
}

fn connect(addr: SocketAddr, deadline: Instant) -> Result<TcpStream> {
    loop {
        match TcpStream::connect(addr) {
            Ok(s) => {
                s.set_nodelay(true)?;
                return Ok(s);
            }
            Err(e) if Instant::now() >= deadline => return Err(e.into()),
            Err(_) => thread::sleep(Duration::from_millis(20)),
        }
    }
}

/// Runs one role until it is done. `initial` is sent before anything is
/// received. Returns the frames this role sent.
pub fn serve<R: Role>(
    machine: &mut Machine<R>,
    listener: TcpListener,
    endpoints: &Endpoints,
    ctx: Arc<RingContext>,
    plan: &SessionPlan,
    initial: Vec<Envelope>,
    opts: NetOptions,
) -> Result<Transcript> {
    let me = machine.role.party();
    let peers: Vec<Party> = Party::ALL.into_iter().filter(|&p| p != me).collect();
    let (tx, rx) = mpsc::channel();
    {
        let ctx = ctx.clone();
        let tx = tx.clone();
        let expected = peers.len();
        thread::spawn(move || {
            for _ in 0..expected {
                match listener.accept() {
                    Ok((s, _)) => {
                        let (ctx, tx) = (ctx.clone(), tx.clone());
                        thread::spawn(move || read_loop(ctx, s, tx));
                    }
                    Err(e) => {
                        let _ = tx.send(Incoming::Failed(e.into()));
                        return;
                    }
                }
            }
        });
    }
    drop(tx);
    let deadline = Instant::now() + opts.connect_timeout;
    let mut out: HashMap<Party, TcpStream> = HashMap::new();
    for &p in &peers {
        let mut s = connect(endpoints.of(p), deadline)?;
        let hello = Message::Control(Control::Hello(me));
        write_frame(&mut s, hello.kind(), &hello.encode(&ctx))?;
        out.insert(p, s);
    }
    let mut transcript = Transcript::default();
    let send = |out: &mut HashMap<Party, TcpStream>, t: &mut Transcript, env: Envelope| -> Result<()> {
        let payload = env.msg.encode(&ctx);
        let s = out.get_mut(&env.to).ok_or_else(|| Error::Protocol(format!("no connection to {}", env.to)))?;
        write_frame(s, env.msg.kind(), &payload)?;
        t.record(plan, me, env.to, &env.msg, HEADER_BYTES + payload.len());
        Ok(())
    };
    let abort = |out: &mut HashMap<Party, TcpStream>, e: &Error| {
        let msg = Message::Control(Control::Abort {
            party: me,
            class: e.class(),
            reason: e.to_string(),
        });
        let payload = msg.encode(&ctx);
        for s in out.values_mut() {
            let _ = write_frame(s, msg.kind(), &payload);
        }
    };
    let result = (|| -> Result<()> {
        for env in initial {
            send(&mut out, &mut transcript, env)?;
        }
        let mut closed = 0;
        while !machine.role.is_done() {
            let item = match rx.recv_timeout(opts.idle_timeout) {
                Ok(item) => item,
                Err(RecvTimeoutError::Timeout) => {
                    return Err(Error::Protocol(format!("{me} waited {:?} without a message", opts.idle_timeout)))
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(Error::Protocol(format!("{me} lost every peer connection")));
                }
            };
            match item {
                Incoming::Msg(from, msg) => {
                    for env in machine.deliver(from, msg)? {
                        send(&mut out, &mut transcript, env)?;
                    }
                }
                Incoming::Closed(p) => {
                    closed += 1;
                    if closed == peers.len() {
                        return Err(Error::Protocol(format!("{me}: {p} closed the connection before shutdown")));
                    }
                }
                Incoming::Failed(e) => return Err(e),
            }
        }
        Ok(())
    })();
    if let Err(e) = &result {
        // a peer that aborted already knows
        if !matches!(e, Error::Remote { .. }) {
            abort(&mut out, e);
        }
    }
    for s in out.values() {
        let _ = s.shutdown(std::net::Shutdown::Write);
    }
    result.map(|()| transcript)
}

pub struct NetOutput {
    pub results: Vec<InferenceResult>,
    pub transcript: Transcript,
    pub ops: Vec<OpRow>,
}

/// Runs all three roles over loopback TCP, each on its own thread.
pub fn run_net(model: &ModelSpec, images: &[Vec<i64>], cfg: &ProtocolConfig, seed: u64) -> Result<NetOutput> {
    let setup = Setup::for_model(model, cfg, seed)?;
    let listeners: Vec<TcpListener> = (0..3).map(|_| TcpListener::bind("127.0.0.1:0")).collect::<std::io::Result<_>>()?;
    let addr = |i: usize| listeners[i].local_addr();
    let endpoints = Endpoints {
        client: addr(0)?,
        cloud: addr(1)?,
        proxy: addr(2)?,
    };
    let mut listeners = listeners.into_iter();
    let (l_client, l_cloud, l_proxy) = (listeners.next().unwrap(), listeners.next().unwrap(), listeners.next().unwrap());
    let opts = NetOptions::default();

    let mut client = Machine::new(setup.client());
    client.role.enqueue(images.iter().cloned())?;
    client.role.close_when_idle();
    let mut cloud = Machine::new(setup.cloud(model)?);
    let mut proxy = Machine::new(setup.proxy());

    let (ctx, plan) = (setup.ctx.clone(), setup.plan.clone());
    let (rc, rl, rp) = thread::scope(|s| {
        let h_cloud = s.spawn(|| {
            serve(&mut cloud, l_cloud, &endpoints, ctx.clone(), &plan, Vec::new(), opts).map(|mut t| {
                t.events = cloud.role.take_events();
                t
            })
        });
        let h_proxy = s.spawn(|| serve(&mut proxy, l_proxy, &endpoints, ctx.clone(), &plan, Vec::new(), opts));
        let h_client = s.spawn(|| {
            let first = client.role.poll()?;
            serve(&mut client, l_client, &endpoints, ctx.clone(), &plan, first, opts)
        });
        (
            h_client.join().expect("client thread panicked"),
            h_cloud.join().expect("cloud thread panicked"),
            h_proxy.join().expect("proxy thread panicked"),
        )
    });
    // report the party that failed first rather than one that was told to abort
    let mut results = vec![rc, rl, rp];
    if let Some(i) = results.iter().position(|r| matches!(r, Err(e) if !matches!(e, Error::Remote { .. }))) {
        return Err(results.swap_remove(i).unwrap_err());
    }
    let mut transcript = Transcript::default();
    for r in results {
        transcript.merge(r?);
    }
    Ok(NetOutput {
        results: client.role.take_results(),
        ops: cloud.role.ops().to_vec(),
        transcript,
    })
}
