use std::time::Instant;

use serde::Serialize;
use triad::bfv::{Bfv, GaloisKeys, KeyOwner, SecretKey};
use triad::gc::{circuit_stats, garble_batch, ActivationCircuit, GcConfig};
use triad::linear::{he_conv, op_count, prepare_conv, ConvOptions, Padding};
use triad::model::{gen_random_model, random_inputs, tiny_plan, LinearOp, ModelPlan, ModelSpec, PlanLayer, Shape};
use triad::protocol::sim::run_sim;
use triad::ring::{derive_seed, rng_from_seed, seed_from_u64, RingContext};
use triad::Result;

use crate::config::RunConfig;
use crate::output::{bytes, table, Output};
use crate::run::{load_model, load_images};
use crate::{BenchArgs, InputArgs, Suite};

const ALPHAS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 0.9];
const GC_BATCH: usize = 1000;

#[derive(Serialize)]
struct ConvRow {
    alpha: f64,
    nnz: usize,
    pmult: usize,
    rotations: usize,
    automorphisms: usize,
    seconds: f64,
}

#[derive(Serialize)]
struct GcRow {
    mode: &'static str,
    instances: usize,
    and_gates: usize,
    offline_bytes: usize,
    online_bytes: usize,
    seconds: f64,
}

#[derive(Serialize)]
struct LayerRow {
    layer: usize,
    pmult: usize,
    rotations: usize,
    automorphisms: usize,
    gc_instances: usize,
    and_gates: usize,
    offline_bytes: usize,
    online_bytes: usize,
}

#[derive(Serialize, Default)]
struct BenchReport {
    conv: Vec<ConvRow>,
    gc: Vec<GcRow>,
    sim: Vec<LayerRow>,
    sim_seconds: Option<f64>,
}

pub fn run(cfg: &RunConfig, args: &BenchArgs, out: Output) -> Result<()> {
    let mut report = BenchReport::default();
    let all = args.suite == Suite::All;
    if all || args.suite == Suite::Conv {
        report.conv = conv(cfg)?;
    }
    if all || args.suite == Suite::Gc {
        report.gc = gc(cfg)?;
    }
    if all || args.suite == Suite::Sim {
        let model = match &args.model {
            Some(p) => load_model(p)?,
            None => gen_random_model(&tiny_plan(cfg.preset.params().t), 0.0, cfg.seed)?.0,
        };
        let (rows, secs) = sim(cfg, &model)?;
        report.sim = rows;
        report.sim_seconds = Some(secs);
    }
    out.emit(&report, || text(&report))
}

/// A 4 -> 4 channel 3x3 convolution on 8x8 inputs at each sparsity.
fn conv(cfg: &RunConfig) -> Result<Vec<ConvRow>> {
    let pc = cfg.protocol();
    let ctx = RingContext::new(pc.params)?;
    let bfv = Bfv::new(ctx.clone());
    let mut rng = rng_from_seed(derive_seed(&seed_from_u64(cfg.seed), "bench-conv"));
    let sk = SecretKey::generate(&ctx, KeyOwner::Client, &mut rng);
    let mut rows = Vec::new();
    for alpha in ALPHAS {
        let plan = ModelPlan {
            name: "conv".into(),
            plaintext_modulus: pc.params.t,
            input: Shape::new(4, 8, 8),
            input_bits: 4,
            weight_max: 3,
            shift: 0,
            layers: vec![PlanLayer::Conv {
                out_channels: 4,
                kernel: 3,
                stride: 1,
                padding: Padding::Same,
            }],
        };
        let (model, _) = gen_random_model(&plan, alpha, cfg.seed)?;
        let stage = model.stages()?.remove(0);
        let LinearOp::Conv { spec, kernels } = &stage.linear else {
            unreachable!("plan has one convolution")
        };
        let prepared = prepare_conv(&bfv, spec, kernels)?;
        let keys = GaloisKeys::generate(&ctx, &sk, pc.key_mode, Some(&prepared.rotation_steps()), 1 << 16, &mut rng)?;
        let t = pc.params.t as i64;
        let image = &random_inputs(&model, 1, cfg.seed)[0];
        let residues: Vec<u64> = image.iter().map(|&v| v.rem_euclid(t) as u64).collect();
        let cts = prepared
            .input_layout
            .pack(&residues)?
            .iter()
            .map(|v| bfv.encrypt_slots(&sk, v, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let start = Instant::now();
        let (_, counts) = he_conv(&bfv, &cts, &prepared, &keys, ConvOptions::default())?;
        let seconds = start.elapsed().as_secs_f64();
        debug_assert_eq!(counts, op_count(spec, kernels, ctx.n(), pc.key_mode)?);
        rows.push(ConvRow {
            alpha,
            nnz: prepared.nnz(),
            pmult: counts.pmult,
            rotations: counts.rotations,
            automorphisms: counts.automorphisms,
            seconds,
        });
    }
    Ok(rows)
}

fn gc(cfg: &RunConfig) -> Result<Vec<GcRow>> {
    let t = cfg.preset.params().t;
    let mut rng = rng_from_seed(derive_seed(&seed_from_u64(cfg.seed), "bench-gc"));
    [GcConfig::mod_t(t, cfg.f)?, GcConfig::truncated(t, cfg.f)?]
        .into_iter()
        .map(|gcfg| {
            let relu = ActivationCircuit::relu(gcfg)?;
            let stats = circuit_stats(&relu.circuit, &relu.cfg, cfg.delivery).times(GC_BATCH);
            let start = Instant::now();
            let _ = garble_batch(&relu.circuit, GC_BATCH, 0, &mut rng);
            Ok(GcRow {
                mode: gcfg.mode.name(),
                instances: GC_BATCH,
                and_gates: stats.and_gates,
                offline_bytes: stats.garbled_bytes,
                online_bytes: stats.online_label_bytes,
                seconds: start.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

fn sim(cfg: &RunConfig, model: &ModelSpec) -> Result<(Vec<LayerRow>, f64)> {
    let images = load_images(model, &InputArgs { input: None, random: Some(1) }, cfg.seed)?;
    let start = Instant::now();
    let run = run_sim(model, &images, &cfg.protocol(), cfg.seed)?;
    let secs = start.elapsed().as_secs_f64();
    let tr = &run.transcript;
    let rows = run
        .ops
        .iter()
        .map(|o| LayerRow {
            layer: o.layer,
            pmult: o.ops.pmult,
            rotations: o.ops.rotations,
            automorphisms: o.ops.automorphisms,
            gc_instances: o.instances,
            and_gates: o.and_gates,
            offline_bytes: tr.bytes_where(|e| e.layer == Some(o.layer) && e.offline),
            online_bytes: tr.bytes_where(|e| e.layer == Some(o.layer) && !e.offline),
        })
        .collect();
    Ok((rows, secs))
}

fn text(r: &BenchReport) -> String {
    let mut s = String::new();
    if !r.conv.is_empty() {
        s.push_str("sparse convolution, 4 -> 4 channels, 3x3, 8x8:\n");
        let rows: Vec<Vec<String>> = r
            .conv
            .iter()
            .map(|c| {
                vec![
                    format!("{:.2}", c.alpha),
                    c.nnz.to_string(),
                    c.pmult.to_string(),
                    c.rotations.to_string(),
                    c.automorphisms.to_string(),
                    format!("{:.3}", c.seconds),
                ]
            })
            .collect();
        s.push_str(&table(&["alpha", "nnz", "pmult", "rot", "autom", "wall s (info)"], &rows));
        s.push('\n');
    }
    if !r.gc.is_empty() {
        s.push_str("garbling a batch of ReLUs:\n");
        let rows: Vec<Vec<String>> = r
            .gc
            .iter()
            .map(|g| {
                vec![
                    g.mode.to_string(),
                    g.instances.to_string(),
                    g.and_gates.to_string(),
                    bytes(g.offline_bytes),
                    bytes(g.online_bytes),
                    format!("{:.3}", g.seconds),
                ]
            })
            .collect();
        s.push_str(&table(&["mode", "relus", "and gates", "offline", "online", "wall s (info)"], &rows));
        s.push('\n');
    }
    if !r.sim.is_empty() {
        s.push_str("one simulated inference, per layer:\n");
        let rows: Vec<Vec<String>> = r
            .sim
            .iter()
            .map(|l| {
                vec![
                    l.layer.to_string(),
                    l.pmult.to_string(),
                    l.rotations.to_string(),
                    l.automorphisms.to_string(),
                    l.gc_instances.to_string(),
                    l.and_gates.to_string(),
                    bytes(l.offline_bytes),
                    bytes(l.online_bytes),
                ]
            })
            .collect();
        s.push_str(&table(
            &["layer", "pmult", "rot", "autom", "gc inst", "and gates", "offline", "online"],
            &rows,
        ));
        if let Some(secs) = r.sim_seconds {
            s.push_str(&format!("wall time {secs:.2} s including key setup (informational)\n"));
        }
    }
    s
}
