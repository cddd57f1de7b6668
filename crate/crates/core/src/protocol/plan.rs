//! Everything the three roles agree on before any message is sent: slot
//! layouts, rotation steps, mask plans and activation circuits. A plan is
//! derived from the public part of a model (shapes, shifts and bounds) and
//! the run configuration, never from the weights.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::shares::{output_mask_range, MaskPlan, DEFAULT_LAMBDA};
use crate::bfv::{rotation_plan, KeyMode};
use crate::error::{Error, Result};
use crate::gc::{ActivationCircuit, ActivationKind, GcConfig, GcMode, LabelDelivery};
use crate::linear::{ConvSpec, FcLayout, PackedLayout};
use crate::model::{pool_windows, ActivationGroup, LinearOp, ModelSpec, Shape};
use crate::noise::{Bases, ConvVariant, LinearShape, NoiseModel, StageLoad};
use crate::ring::{Preset, RingParams, SlotVector};

/// Deliberate faults for failure-detection tests.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Faults {
    /// Flip one byte of the first garbled table the cloud sends.
    pub tamper_gc: bool,
    /// Generate the re-encryption key with a single-digit base so the
    /// re-encrypted ciphertexts carry far more noise than the budget.
    pub exhaust_noise: bool,
    /// Use `r = 0` so the proxy sees the true linear outputs.
    pub zero_masks: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    pub params: RingParams,
    pub key_mode: KeyMode,
    pub gc_mode: GcMode,
    /// Adds the f-bit borrow stage so activations are bit-exact.
    pub exact_truncation: bool,
    /// Requested mask slack in truncated mode.
    pub lambda: u32,
    pub delivery: LabelDelivery,
    /// Run ReLU and a following max pool as two garbled rounds.
    pub separate_rounds: bool,
    pub variant: ConvVariant,
    /// Minimum analytic budget, in bits, when choosing decomposition bases.
    pub margin_bits: f64,
    pub dedup_rotations: bool,
    pub faults: Faults,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            params: Preset::Toy.params(),
            key_mode: KeyMode::LogKeys,
            gc_mode: GcMode::Truncated,
            exact_truncation: false,
            lambda: DEFAULT_LAMBDA,
            delivery: LabelDelivery::BaseOt,
            separate_rounds: false,
            variant: ConvVariant::Cheetah,
            margin_bits: 1.0,
            dedup_rotations: true,
            faults: Faults::default(),
        }
    }
}

impl ProtocolConfig {
    /// Whether activations may round up by one relative to the reference.
    pub fn truncation_error(&self) -> bool {
        self.gc_mode == GcMode::Truncated && !self.exact_truncation
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinearShapeSpec {
    Conv(ConvSpec),
    Fc { n_in: usize, n_out: usize },
}

/// A stage with its weights removed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PublicStage {
    pub layer: usize,
    pub input: Shape,
    pub linear: LinearShapeSpec,
    pub linear_output: Shape,
    pub activation: Option<ActivationGroup>,
    pub shift: u32,
    pub bound_bits: u32,
    pub output: Shape,
}

/// What the client and proxy know about the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PublicModel {
    pub name: String,
    pub plaintext_modulus: u64,
    pub input: Shape,
    pub input_bits: u32,
    pub stages: Vec<PublicStage>,
}

impl PublicModel {
    pub fn of(model: &ModelSpec) -> Result<Self> {
        let stages = model
            .stages()?
            .into_iter()
            .map(|s| PublicStage {
                layer: s.layer,
                input: s.input,
                linear: match s.linear {
                    LinearOp::Conv { spec, .. } => LinearShapeSpec::Conv(spec),
                    LinearOp::Fc { n_in, n_out, .. } => LinearShapeSpec::Fc { n_in, n_out },
                },
                linear_output: s.linear_output,
                activation: s.activation,
                shift: s.shift,
                bound_bits: s.bound_bits,
                output: s.output,
            })
            .collect();
        Ok(PublicModel {
            name: model.name.clone(),
            plaintext_modulus: model.plaintext_modulus,
            input: model.input,
            input_bits: model.input_bits,
            stages,
        })
    }

    /// Noise-model shapes of the linear layers, in order.
    pub fn linear_shapes(&self, slots: usize) -> Result<Vec<LinearShape>> {
        self.stages
            .iter()
            .map(|s| match s.linear {
                LinearShapeSpec::Conv(c) => Ok(LinearShape::conv(c.c_in, c.kernel)),
                LinearShapeSpec::Fc { n_in, n_out } => Ok(LinearShape::fc(FcLayout::new(n_in, n_out, slots)?.dim)),
            })
            .collect()
    }
}

/// Where each value of a tensor lives: one or more `(ciphertext, slot)`
/// positions per value (more than one when the layout replicates).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlotMap {
    pub ciphertexts: usize,
    pub slots: usize,
    pub positions: Vec<Vec<(usize, usize)>>,
}

impl SlotMap {
    pub fn packed(layout: &PackedLayout) -> Self {
        let mut positions = Vec::with_capacity(layout.len());
        for c in 0..layout.channels {
            for y in 0..layout.height {
                for x in 0..layout.width {
                    positions.push(vec![layout.position(c, y, x)]);
                }
            }
        }
        SlotMap {
            ciphertexts: layout.ciphertexts(),
            slots: layout.slots,
            positions,
        }
    }

    pub fn fc_input(layout: &FcLayout) -> Self {
        SlotMap {
            ciphertexts: 1,
            slots: layout.slots,
            positions: (0..layout.n_in).map(|i| vec![(0, i), (0, layout.dim + i)]).collect(),
        }
    }

    pub fn fc_output(layout: &FcLayout) -> Self {
        SlotMap {
            ciphertexts: 1,
            slots: layout.slots,
            positions: (0..layout.n_out).map(|j| vec![(0, j)]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Packs `values`; slots holding no value get `fill()`.
    pub fn pack_with(&self, values: &[u64], mut fill: impl FnMut() -> u64) -> Result<Vec<SlotVector>> {
        if values.is_empty() {
            return Err(Error::Mismatch("empty tensor".into()));
        }
        if values.len() != self.len() {
            return Err(Error::Mismatch(format!("{} values for a layout of {}", values.len(), self.len())));
        }
        let mut used = vec![vec![false; self.slots]; self.ciphertexts];
        let mut out = vec![SlotVector::zeros(self.slots); self.ciphertexts];
        for (v, pos) in values.iter().zip(&self.positions) {
            for &(ct, slot) in pos {
                out[ct].0[slot] = *v;
                used[ct][slot] = true;
            }
        }
        for (vec, used) in out.iter_mut().zip(&used) {
            for (x, &u) in vec.0.iter_mut().zip(used) {
                if !u {
                    *x = fill();
                }
            }
        }
        Ok(out)
    }

    pub fn pack(&self, values: &[u64]) -> Result<Vec<SlotVector>> {
        self.pack_with(values, || 0)
    }

    pub fn unpack(&self, slots: &[SlotVector]) -> Result<Vec<u64>> {
        if slots.len() != self.ciphertexts {
            return Err(Error::Mismatch(format!("{} slot vectors for a layout of {}", slots.len(), self.ciphertexts)));
        }
        Ok(self.positions.iter().map(|p| slots[p[0].0].0[p[0].1]).collect())
    }
}

/// One garbled round of an activation group.
#[derive(Clone, Debug)]
pub struct RoundPlan {
    pub circuit: ActivationCircuit,
    /// Operand indices of every instance: linear outputs for the first
    /// round, instances of the previous round otherwise.
    pub windows: Vec<Vec<usize>>,
    pub from_previous: bool,
    /// Half-open range of the output mask `s_y`.
    pub output_mask: (u64, u64),
}

impl RoundPlan {
    pub fn instances(&self) -> usize {
        self.windows.len()
    }

    /// Ring the operand shares of this round live in.
    pub fn share_modulus(&self) -> u128 {
        match self.circuit.cfg.mode {
            GcMode::ModT => self.circuit.cfg.t as u128,
            GcMode::Truncated => 1u128 << self.circuit.cfg.b,
        }
    }
}

#[derive(Clone, Debug)]
pub struct StagePlan {
    pub index: usize,
    pub layer: usize,
    pub linear: LinearShapeSpec,
    pub input: SlotMap,
    pub output: SlotMap,
    /// Rotations a dense layer of this shape needs.
    pub rotation_steps: Vec<i64>,
    pub bound_bits: u32,
    pub shift: u32,
    /// `None` on the last stage, which has no activation.
    pub mask: Option<MaskPlan>,
    pub rounds: Vec<RoundPlan>,
}

impl StagePlan {
    pub fn is_last(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn output_values(&self) -> usize {
        self.rounds.last().map_or(self.output.len(), |r| r.instances())
    }
}

#[derive(Clone, Debug)]
pub struct SessionPlan {
    pub params: RingParams,
    pub stages: Vec<StagePlan>,
    pub bases: Bases,
    pub key_mode: KeyMode,
    pub delivery: LabelDelivery,
    /// Rotation steps under the client key (first stage), if any.
    pub client_steps: Option<Vec<i64>>,
    /// Rotation steps under the proxy key (later stages), if any.
    pub proxy_steps: Option<Vec<i64>>,
    pub warnings: Vec<String>,
}

impl SessionPlan {
    pub fn new(model: &PublicModel, cfg: &ProtocolConfig) -> Result<Self> {
        let params = cfg.params;
        params.validate()?;
        if model.plaintext_modulus != params.t {
            return Err(Error::Params(format!(
                "model is quantized for t = {}, parameters use t = {}",
                model.plaintext_modulus, params.t
            )));
        }
        if model.stages.is_empty() {
            return Err(Error::Params("model has no linear layer".into()));
        }
        let n = params.n;
        let mut warnings = Vec::new();
        let mut stages = Vec::with_capacity(model.stages.len());
        for (k, s) in model.stages.iter().enumerate() {
            let at = |e: Error| match e {
                e @ (Error::Infeasible { .. } | Error::Model { .. }) => e,
                e => Error::Model {
                    layer: s.layer,
                    reason: e.to_string(),
                },
            };
            let (input, output, rotation_steps) = match s.linear {
                LinearShapeSpec::Conv(c) => (
                    SlotMap::packed(&c.input_layout(n).map_err(at)?),
                    SlotMap::packed(&c.output_layout(n).map_err(at)?),
                    c.rotation_steps(n).map_err(at)?,
                ),
                LinearShapeSpec::Fc { n_in, n_out } => {
                    let l = FcLayout::new(n_in, n_out, n).map_err(at)?;
                    (SlotMap::fc_input(&l), SlotMap::fc_output(&l), (1..l.dim as i64).collect())
                }
            };
            let (mask, rounds) = match s.activation {
                None => (None, Vec::new()),
                Some(group) => {
                    let (mask, warn) = MaskPlan::new(cfg.gc_mode, params.t, s.bound_bits, cfg.lambda, s.layer)?;
                    warnings.extend(warn);
                    (Some(mask), plan_rounds(s, group, cfg).map_err(at)?)
                }
            };
            stages.push(StagePlan {
                index: k,
                layer: s.layer,
                linear: s.linear,
                input,
                output,
                rotation_steps,
                bound_bits: s.bound_bits,
                shift: s.shift,
                mask,
                rounds,
            });
        }
        let bases = plan_bases(model, cfg)?;
        let union = |st: &[StagePlan]| {
            let mut v: Vec<i64> = st.iter().flat_map(|s| s.rotation_steps.iter().copied()).collect();
            v.sort_unstable();
            v.dedup();
            (!v.is_empty()).then_some(v)
        };
        Ok(SessionPlan {
            params,
            client_steps: union(&stages[..1]),
            proxy_steps: union(&stages[1..]),
            stages,
            bases,
            key_mode: cfg.key_mode,
            delivery: cfg.delivery,
            warnings,
        })
    }
}

/// Decomposition bases for a session. Convolutions must satisfy the Table 1
/// estimate; every stage, dense layers included, must also satisfy the
/// per-stage estimate that counts each automorphism the plan performs.
pub fn plan_bases(model: &PublicModel, cfg: &ProtocolConfig) -> Result<Bases> {
    let nm = NoiseModel::new(cfg.params);
    let n = cfg.params.n;
    let shapes = model.linear_shapes(n)?;
    let convs: Vec<LinearShape> = model
        .stages
        .iter()
        .zip(&shapes)
        .filter(|(s, _)| matches!(s.linear, LinearShapeSpec::Conv(_)))
        .map(|(_, &sh)| sh)
        .collect();
    let loads = model
        .stages
        .iter()
        .map(|s| stage_load(&s.linear, n, cfg.key_mode))
        .collect::<Result<Vec<_>>>()?;
    let mut bases = nm.select_session_bases(&convs, &loads, cfg.margin_bits, cfg.variant)?;
    if cfg.faults.exhaust_noise {
        bases.w_sw = 1u64 << (63 - cfg.params.q.leading_zeros());
    }
    Ok(bases)
}

/// Dense-kernel worst case of the products and automorphisms landing in
/// one output ciphertext of a stage (the maximum over its outputs).
pub fn stage_load(linear: &LinearShapeSpec, slots: usize, mode: KeyMode) -> Result<StageLoad> {
    let (terms, offsets): (usize, Vec<(usize, i64)>) = match *linear {
        LinearShapeSpec::Conv(c) => {
            let per_ct = c.output_layout(slots)?.channels_per_ct;
            (per_ct.min(c.c_out) * c.c_in * c.kernel * c.kernel, c.term_offsets(slots)?)
        }
        LinearShapeSpec::Fc { n_in, n_out } => {
            let dim = FcLayout::new(n_in, n_out, slots)?.dim;
            (dim, (1..dim as i64).map(|i| (0, i)).collect())
        }
    };
    let mut uses: BTreeMap<usize, BTreeMap<u64, usize>> = BTreeMap::new();
    for (ct, o) in offsets {
        let per = uses.entry(ct).or_default();
        for g in rotation_plan(slots, o, mode) {
            *per.entry(g).or_default() += 1;
        }
    }
    let mut load = StageLoad {
        terms,
        ..StageLoad::default()
    };
    for per in uses.values() {
        load.automorphisms = load.automorphisms.max(per.values().sum());
        load.repeated_uses = load.repeated_uses.max(per.values().map(|u| u * u).sum());
    }
    Ok(load)
}

fn activation_config(cfg: &ProtocolConfig, t: u64, f: u32) -> Result<GcConfig> {
    match cfg.gc_mode {
        GcMode::ModT => GcConfig::mod_t(t, f),
        GcMode::Truncated => {
            let c = GcConfig::truncated(t, f)?;
            let c = c.with_out_bits(c.t_bits)?;
            c.with_exact(cfg.exact_truncation && f > 0)
        }
    }
}

fn plan_rounds(s: &PublicStage, group: ActivationGroup, cfg: &ProtocolConfig) -> Result<Vec<RoundPlan>> {
    let t = cfg.params.t;
    let f = s.shift;
    // |floor(x / 2^f)| plus the truncation carry
    let bound = ((1u64 << (s.bound_bits - 1)) >> f) + 1;
    let each: Vec<Vec<usize>> = (0..s.linear_output.len()).map(|i| vec![i]).collect();
    let round = |circuit: ActivationCircuit, windows: Vec<Vec<usize>>, from_previous: bool, signed: bool| -> Result<RoundPlan> {
        Ok(RoundPlan {
            circuit,
            windows,
            from_previous,
            output_mask: output_mask_range(t, bound, signed)?,
        })
    };
    let main = activation_config(cfg, t, f)?;
    Ok(match group {
        ActivationGroup::Relu => vec![round(ActivationCircuit::relu(main)?, each, false, false)?],
        ActivationGroup::MaxPool { size } => vec![round(
            ActivationCircuit::maxpool(main, size * size, false)?,
            pool_windows(s.linear_output, size),
            false,
            true,
        )?],
        ActivationGroup::ReluMaxPool { size } if !cfg.separate_rounds => vec![round(
            ActivationCircuit::maxpool(main, size * size, true)?,
            pool_windows(s.linear_output, size),
            false,
            false,
        )?],
        ActivationGroup::ReluMaxPool { size } => {
            let pool_cfg = activation_config(cfg, t, 0)?;
            vec![
                round(ActivationCircuit::relu(main)?, each, false, false)?,
                round(
                    ActivationCircuit::build(pool_cfg, ActivationKind::MaxPool, size * size)?,
                    pool_windows(s.linear_output, size),
                    true,
                    false,
                )?,
            ]
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gen_random_model, tiny_plan};
    use crate::ring::PRESET_T;

    #[test]
    fn tiny_plan_shapes() {
        let (m, _) = gen_random_model(&tiny_plan(PRESET_T), 0.0, 1).unwrap();
        let public = PublicModel::of(&m).unwrap();
        let plan = SessionPlan::new(&public, &ProtocolConfig::default()).unwrap();
        assert_eq!(plan.stages.len(), 2);
        let s0 = &plan.stages[0];
        assert_eq!(s0.rounds.len(), 1);
        assert_eq!(s0.rounds[0].instances(), 4 * 4 * 4);
        assert_eq!(s0.rounds[0].circuit.arity, 4);
        assert_eq!(s0.output_values(), plan.stages[1].input.len());
        assert!(plan.stages[1].is_last());
        assert!(plan.client_steps.is_some() && plan.proxy_steps.is_some());
        let sep = ProtocolConfig {
            separate_rounds: true,
            ..ProtocolConfig::default()
        };
        let plan = SessionPlan::new(&public, &sep).unwrap();
        assert_eq!(plan.stages[0].rounds.len(), 2);
        assert_eq!(plan.stages[0].rounds[0].instances(), 256);
    }

    #[test]
    fn fc_input_map_replicates() {
        let l = FcLayout::new(3, 2, 64).unwrap();
        let m = SlotMap::fc_input(&l);
        let packed = m.pack(&[1, 2, 3]).unwrap();
        assert_eq!(&packed[0].0[..8], &[1, 2, 3, 0, 1, 2, 3, 0]);
        assert_eq!(m.unpack(&packed).unwrap(), vec![1, 2, 3]);
        let mut k = 100;
        let filled = m
            .pack_with(&[1, 2, 3], || {
                k += 1;
                k
            })
            .unwrap();
        assert_eq!(filled[0].0[3], 101);
        assert_eq!(filled[0].0[4], 1);
    }
}
