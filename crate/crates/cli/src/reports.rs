use serde::Serialize;
use triad::gc::{bit_width, circuit_stats, ActivationCircuit, GcConfig, GcStats, LabelDelivery};
use triad::model::{burden_plan, deep_plan, gen_random_model, random_inputs, tiny_plan, write_tensors, ModelPlan};
use triad::noise::{Bases, ConvVariant, NoiseModel};
use triad::protocol::{measure_stage_noise, stage_load, LinearShapeSpec, PublicModel, SessionPlan};
use triad::{Error, Result};

use crate::config::RunConfig;
use crate::output::{bytes, table, Output};
use crate::run::load_model;
use crate::{GcStatsArgs, GenModelArgs, NoiseArgs, PlanName};

#[derive(Serialize)]
struct NoiseLayer {
    stage: usize,
    layer: usize,
    kind: &'static str,
    variant: ConvVariant,
    estimate_bits: f64,
    budget_bits: f64,
    measured_noise_bits: Option<f64>,
    measured_budget_bits: Option<f64>,
    correct: Option<bool>,
}

#[derive(Serialize)]
struct NoiseReport {
    model: String,
    preset: &'static str,
    capacity_bits: f64,
    bases: Bases,
    layers: Vec<NoiseLayer>,
}

pub fn noise(cfg: &RunConfig, args: &NoiseArgs, out: Output) -> Result<()> {
    let model = load_model(&args.model)?;
    let pc = cfg.protocol();
    let public = PublicModel::of(&model)?;
    let plan = SessionPlan::new(&public, &pc)?;
    let nm = NoiseModel::new(pc.params);
    let measured = if args.trials > 0 {
        measure_stage_noise(&model, &pc, args.trials, cfg.seed)?
    } else {
        Vec::new()
    };
    let layers = public
        .stages
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let load = stage_load(&s.linear, pc.params.n, pc.key_mode)?;
            let w_sw = (k == 0).then_some(plan.bases.w_sw);
            let est = nm.stage_noise(load, plan.bases.w_a, pc.variant, w_sw);
            let m = measured.iter().find(|m| m.stage == k);
            Ok(NoiseLayer {
                stage: k,
                layer: s.layer,
                kind: match s.linear {
                    LinearShapeSpec::Conv(_) => "conv",
                    LinearShapeSpec::Fc { .. } => "fc",
                },
                variant: pc.variant,
                estimate_bits: est.inf_norm_bound.max(1.0).log2(),
                budget_bits: est.budget_bits,
                measured_noise_bits: m.map(|m| m.max_noise_bits),
                measured_budget_bits: m.map(|m| m.min_budget_bits),
                correct: m.map(|m| m.correct),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = NoiseReport {
        model: model.name.clone(),
        preset: cfg.preset.name(),
        capacity_bits: nm.capacity_bits(),
        bases: plan.bases,
        layers,
    };
    out.emit(&report, || {
        let mut s = format!(
            "model {} at preset {}: capacity {:.2} bits, w_A = 2^{}, w_SW = 2^{}\n",
            report.model,
            report.preset,
            report.capacity_bits,
            report.bases.w_a.trailing_zeros(),
            report.bases.w_sw.trailing_zeros()
        );
        let opt = |v: Option<f64>| v.map_or("-".into(), |v| format!("{v:.2}"));
        let rows: Vec<Vec<String>> = report
            .layers
            .iter()
            .map(|l| {
                vec![
                    l.layer.to_string(),
                    l.kind.to_string(),
                    l.variant.name().to_string(),
                    format!("{:.2}", l.estimate_bits),
                    format!("{:.2}", l.budget_bits),
                    opt(l.measured_noise_bits),
                    opt(l.measured_budget_bits),
                    l.correct.map_or("-".into(), |c| if c { "yes" } else { "NO" }.into()),
                ]
            })
            .collect();
        s.push_str(&table(
            &["layer", "kind", "variant", "est bits", "budget", "measured bits", "measured budget", "correct"],
            &rows,
        ));
        s
    })
}

#[derive(Serialize)]
struct GcSide {
    mode: &'static str,
    share_bits: u32,
    stats: GcStats,
}

#[derive(Serialize)]
struct GcReport {
    t_bits: u32,
    f: u32,
    b: u32,
    count: usize,
    delivery: LabelDelivery,
    mod_t: GcSide,
    truncated: GcSide,
    offline_ratio: f64,
    online_ratio: f64,
}

pub fn gc_stats(cfg: &RunConfig, args: &GcStatsArgs, out: Output) -> Result<()> {
    let t = cfg.preset.params().t;
    let t_bits = bit_width(t);
    let f = match args.b {
        Some(b) if b == 0 || b > t_bits => {
            return Err(Error::Params(format!("b = {b} must lie in 1..={t_bits}")));
        }
        Some(b) => t_bits - b,
        None => cfg.f,
    };
    let side = |gc: GcConfig| -> Result<GcSide> {
        let relu = ActivationCircuit::relu(gc.with_exact(cfg.exact_truncation && gc.mode == triad::gc::GcMode::Truncated)?)?;
        Ok(GcSide {
            mode: gc.mode.name(),
            share_bits: gc.share_width(),
            stats: circuit_stats(&relu.circuit, &relu.cfg, cfg.delivery).times(args.count),
        })
    };
    let mod_t = side(GcConfig::mod_t(t, f)?)?;
    let truncated = side(GcConfig::truncated(t, f)?)?;
    let ratio = |a: usize, b: usize| a as f64 / b as f64;
    let report = GcReport {
        t_bits,
        f,
        b: t_bits - f,
        count: args.count,
        delivery: cfg.delivery,
        offline_ratio: ratio(truncated.stats.garbled_bytes, mod_t.stats.garbled_bytes),
        online_ratio: ratio(truncated.stats.online_label_bytes, mod_t.stats.online_label_bytes),
        mod_t,
        truncated,
    };
    out.emit(&report, || {
        let mut s = format!(
            "{} ReLUs, t_bits = {}, b = {}, labels by {}\n",
            report.count, report.t_bits, report.b, report.delivery
        );
        let row = |name: &str, a: usize, b: usize, fmt: &dyn Fn(usize) -> String| {
            vec![name.to_string(), fmt(a), fmt(b), format!("{:.3}", ratio(b, a))]
        };
        let plain = |v: usize| v.to_string();
        let (a, b) = (&report.mod_t.stats, &report.truncated.stats);
        let rows = vec![
            row("and gates", a.and_gates, b.and_gates, &plain),
            row("evaluator bits", a.evaluator_inputs, b.evaluator_inputs, &plain),
            row("offline (tables)", a.garbled_bytes, b.garbled_bytes, &bytes),
            row("online (labels)", a.online_label_bytes, b.online_label_bytes, &bytes),
        ];
        s.push_str(&table(&["", "mod t", "truncated", "ratio"], &rows));
        s
    })
}

#[derive(Serialize)]
struct GenReport {
    model: String,
    path: String,
    requested_sparsity: f64,
    realized_sparsity: f64,
    digest: String,
}

pub fn gen_model(cfg: &RunConfig, args: &GenModelArgs, out: Output) -> Result<()> {
    let t = cfg.preset.params().t;
    let plan: ModelPlan = match &args.plan_file {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text).map_err(|e| Error::Document(format!("{}: {e}", p.display())))?
        }
        None => match args.plan {
            PlanName::Tiny => tiny_plan(t),
            PlanName::Deep => deep_plan(t),
            PlanName::Burden2 => burden_plan(t, 2),
            PlanName::Burden4 => burden_plan(t, 4),
        },
    };
    if !(0.0..1.0).contains(&args.alpha) {
        return Err(Error::Params(format!("alpha = {} must lie in [0, 1)", args.alpha)));
    }
    let (model, realized) = gen_random_model(&plan, args.alpha, cfg.seed)?;
    model.save(&args.out)?;
    if let (Some(path), Some(count)) = (&args.inputs, args.count) {
        write_tensors(path, model.input, &random_inputs(&model, count, cfg.seed))?;
    }
    let report = GenReport {
        model: model.name.clone(),
        path: args.out.display().to_string(),
        requested_sparsity: args.alpha,
        realized_sparsity: realized,
        digest: model.digest().iter().map(|b| format!("{b:02x}")).collect(),
    };
    out.emit(&report, || {
        format!(
            "wrote {} to {} (sparsity {:.3}, digest {})\n",
            report.model, report.path, report.realized_sparsity, report.digest
        )
    })
}
