use std::collections::BTreeMap;
use std::net::TcpListener;
use std::time::Instant;

use serde::Serialize;
use triad::model::{argmax, random_inputs, read_tensors, reference_inference, ModelSpec};
use triad::protocol::net::{serve, Endpoints, NetOptions};
use triad::protocol::sim::SimSession;
use triad::protocol::{
    check_against_oracle, BandwidthReport, InferenceResult, Machine, OpRow, Party, ProtocolConfig, Setup, Transcript,
};
use triad::{Error, Result};

use crate::config::RunConfig;
use crate::output::{bytes, table, Output};
use crate::{FaultArgs, InputArgs, RoleArgs, RoleName, SimArgs};

pub fn load_model(path: &std::path::Path) -> Result<ModelSpec> {
    let (model, warnings) = ModelSpec::load(path)?;
    for w in warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(model)
}

pub fn load_images(model: &ModelSpec, input: &InputArgs, seed: u64) -> Result<Vec<Vec<i64>>> {
    match &input.input {
        Some(path) => {
            let (shape, images) = read_tensors(path)?;
            if shape != model.input {
                return Err(Error::Params(format!(
                    "{} holds {}x{}x{} tensors, the model takes {}x{}x{}",
                    path.display(),
                    shape.channels,
                    shape.height,
                    shape.width,
                    model.input.channels,
                    model.input.height,
                    model.input.width
                )));
            }
            Ok(images)
        }
        None => Ok(random_inputs(model, input.random.unwrap_or(1), seed)),
    }
}

fn protocol_config(cfg: &RunConfig, faults: &FaultArgs) -> ProtocolConfig {
    let mut pc = cfg.protocol();
    pc.faults.tamper_gc = faults.tamper_gc;
    pc.faults.exhaust_noise = faults.exhaust_noise;
    pc
}

#[derive(Serialize)]
struct ResultRow {
    inference: u64,
    logits: Vec<i64>,
    argmax: usize,
    /// Argmax of the plaintext reference, when checked.
    reference_argmax: Option<usize>,
}

#[derive(Serialize)]
struct RunReport {
    model: String,
    preset: &'static str,
    party: Option<Party>,
    results: Vec<ResultRow>,
    bandwidth: BandwidthReport,
    /// Per-inference bytes to or from the client.
    client_bytes: BTreeMap<u64, usize>,
    reencryptions: BTreeMap<u64, usize>,
    ops: Vec<OpRow>,
    /// Informational only; depends on the machine.
    wall_seconds: f64,
}

fn check(model: &ModelSpec, images: &[Vec<i64>], results: &[InferenceResult], pc: &ProtocolConfig) -> Result<Vec<usize>> {
    images
        .iter()
        .zip(results)
        .map(|(img, r)| {
            check_against_oracle(model, img, &r.logits, pc.truncation_error())?;
            Ok(argmax(&reference_inference(model, img)?))
        })
        .collect()
}

fn rows(results: Vec<InferenceResult>, reference: Option<Vec<usize>>) -> Vec<ResultRow> {
    results
        .into_iter()
        .enumerate()
        .map(|(i, r)| ResultRow {
            inference: r.inference,
            logits: r.logits,
            argmax: r.argmax,
            reference_argmax: reference.as_ref().map(|v| v[i]),
        })
        .collect()
}

pub fn sim(cfg: &RunConfig, args: &SimArgs, out: Output) -> Result<()> {
    let model = load_model(&args.model)?;
    let images = load_images(&model, &args.input, cfg.seed)?;
    let pc = protocol_config(cfg, &args.faults);
    let start = Instant::now();
    let mut s = SimSession::new(&model, &pc, cfg.seed)?;
    let results = s.run(&images)?;
    s.close()?;
    let wall_seconds = start.elapsed().as_secs_f64();
    let reference = if args.check { Some(check(&model, &images, &results, &pc)?) } else { None };
    let report = RunReport {
        model: model.name.clone(),
        preset: cfg.preset.name(),
        party: None,
        results: rows(results, reference),
        bandwidth: s.transcript().bandwidth(),
        client_bytes: s.transcript().inference_bytes(Some(Party::Client)),
        reencryptions: s.transcript().reencryptions(),
        ops: s.ops().to_vec(),
        wall_seconds,
    };
    out.emit(&report, || text(&report))
}

pub fn role(cfg: &RunConfig, args: &RoleArgs, out: Output) -> Result<()> {
    let model = load_model(&args.model)?;
    let pc = protocol_config(cfg, &args.faults);
    let mut endpoints: Endpoints = cfg.endpoints();
    for (slot, flag) in [
        (&mut endpoints.client, args.client),
        (&mut endpoints.cloud, args.cloud),
        (&mut endpoints.proxy, args.proxy),
    ] {
        if let Some(a) = flag {
            *slot = a;
        }
    }
    let party = match args.role {
        RoleName::Client => Party::Client,
        RoleName::Cloud => Party::Cloud,
        RoleName::Proxy => Party::Proxy,
    };
    let listener = TcpListener::bind(args.listen.unwrap_or(endpoints.of(party)))?;
    let setup = Setup::for_model(&model, &pc, cfg.seed)?;
    let (ctx, plan) = (setup.ctx.clone(), setup.plan.clone());
    let opts = NetOptions::default();
    let start = Instant::now();
    let mut results = Vec::new();
    let mut ops = Vec::new();
    let mut images = Vec::new();
    let transcript: Transcript = match party {
        Party::Client => {
            images = load_images(&model, &args.input, cfg.seed)?;
            let mut m = Machine::new(setup.client());
            m.role.enqueue(images.iter().cloned())?;
            m.role.close_when_idle();
            let first = m.role.poll()?;
            let t = serve(&mut m, listener, &endpoints, ctx, &plan, first, opts)?;
            results = m.role.take_results();
            t
        }
        Party::Cloud => {
            let mut m = Machine::new(setup.cloud(&model)?);
            let mut t = serve(&mut m, listener, &endpoints, ctx, &plan, Vec::new(), opts)?;
            t.events = m.role.take_events();
            ops = m.role.ops().to_vec();
            t
        }
        Party::Proxy => {
            let mut m = Machine::new(setup.proxy());
            serve(&mut m, listener, &endpoints, ctx, &plan, Vec::new(), opts)?
        }
    };
    let wall_seconds = start.elapsed().as_secs_f64();
    let reference = if args.check && party == Party::Client {
        Some(check(&model, &images, &results, &pc)?)
    } else {
        None
    };
    let report = RunReport {
        model: model.name.clone(),
        preset: cfg.preset.name(),
        party: Some(party),
        results: rows(results, reference),
        bandwidth: transcript.bandwidth(),
        client_bytes: transcript.inference_bytes(Some(Party::Client)),
        reencryptions: transcript.reencryptions(),
        ops,
        wall_seconds,
    };
    out.emit(&report, || text(&report))
}

fn text(r: &RunReport) -> String {
    let mut s = match r.party {
        Some(p) => format!("{p} of model {} at preset {}\n", r.model, r.preset),
        None => format!("model {} at preset {}\n", r.model, r.preset),
    };
    for row in &r.results {
        s.push_str(&format!("inference {}: argmax {} logits {:?}", row.inference, row.argmax, row.logits));
        if let Some(a) = row.reference_argmax {
            s.push_str(&format!(" (reference argmax {a}, within band)"));
        }
        s.push('\n');
    }
    let b = &r.bandwidth;
    s.push_str(&format!(
        "\nbandwidth: total {} (offline {}, online {}), client {}\n",
        bytes(b.total_bytes),
        bytes(b.offline_bytes),
        bytes(b.online_bytes),
        bytes(b.client_bytes)
    ));
    let rows: Vec<Vec<String>> = b
        .rows
        .iter()
        .map(|row| {
            vec![
                row.party.to_string(),
                row.peer.to_string(),
                row.phase.to_string(),
                row.layer.map_or("-".into(), |l| l.to_string()),
                if row.offline { "offline" } else { "online" }.to_string(),
                row.messages.to_string(),
                row.bytes.to_string(),
            ]
        })
        .collect();
    s.push_str(&table(&["from", "to", "phase", "layer", "split", "msgs", "bytes"], &rows));
    if !r.reencryptions.is_empty() {
        let per: Vec<String> = r.reencryptions.values().map(|c| c.to_string()).collect();
        s.push_str(&format!("re-encryptions per inference: {}\n", per.join(" ")));
    }
    if !r.ops.is_empty() {
        s.push_str("\ncloud operations:\n");
        let rows: Vec<Vec<String>> = r
            .ops
            .iter()
            .map(|o| {
                vec![
                    o.inference.to_string(),
                    o.layer.to_string(),
                    o.ops.pmult.to_string(),
                    o.ops.rotations.to_string(),
                    o.ops.automorphisms.to_string(),
                    o.reencrypted.to_string(),
                    o.instances.to_string(),
                    o.and_gates.to_string(),
                ]
            })
            .collect();
        s.push_str(&table(
            &["inference", "layer", "pmult", "rot", "autom", "reenc", "gc inst", "and gates"],
            &rows,
        ));
    }
    s.push_str(&format!("\nwall time {:.2} s (informational)\n", r.wall_seconds));
    s
}
