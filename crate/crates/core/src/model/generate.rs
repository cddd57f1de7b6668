use rand::Rng;
use serde::{Deserialize, Serialize};

use super::oracle::worst_case_bits;
use super::spec::{LayerSpec, ModelSpec, Shape, Weights, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::linear::Padding;
use crate::ring::{rng_from_seed, seed_from_u64};

/// Rounds `w * 2^f` half-to-even and clamps to the centred range of Z_t.
/// Returns the integers and how many were clamped.
pub fn quantize(weights: &[f64], f: u32, t: u64) -> (Vec<i64>, usize) {
    let half = ((t - 1) / 2) as f64;
    let scale = (f as f64).exp2();
    let mut clamped = 0;
    let out = weights
        .iter()
        .map(|&w| {
            let v = (w * scale).round_ties_even();
            if v.abs() > half {
                clamped += 1;
                v.clamp(-half, half) as i64
            } else {
                v as i64
            }
        })
        .collect();
    (out, clamped)
}

pub fn dequantize(v: &[i64], f: u32) -> Vec<f64> {
    let scale = (f as f64).exp2();
    v.iter().map(|&x| x as f64 / scale).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PlanLayer {
    Conv {
        out_channels: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default = "same")]
        padding: Padding,
    },
    Fc {
        outputs: usize,
    },
    Relu,
    #[serde(rename = "maxpool")]
    MaxPool { size: usize },
}

fn one() -> usize {
    1
}
fn same() -> Padding {
    Padding::Same
}

/// Shape plan for a random model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelPlan {
    pub name: String,
    pub plaintext_modulus: u64,
    pub input: Shape,
    pub input_bits: u32,
    /// Non-zero weights are drawn from `[-weight_max, weight_max] \ {0}`.
    pub weight_max: i64,
    /// Shift after every activation group.
    pub shift: u32,
    pub layers: Vec<PlanLayer>,
}

/// Draws weights with i.i.d. zeros at rate `alpha` and sets every bound to
/// the worst case over admissible inputs. Returns the model and the realized
/// sparsity over all linear weights.
pub fn gen_random_model(plan: &ModelPlan, alpha: f64, seed: u64) -> Result<(ModelSpec, f64)> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Params(format!("sparsity {alpha} outside [0, 1]")));
    }
    if plan.weight_max < 1 {
        return Err(Error::Params("weight_max must be positive".into()));
    }
    let mut rng = rng_from_seed(seed_from_u64(seed));
    let last_linear = plan
        .layers
        .iter()
        .rposition(|l| matches!(l, PlanLayer::Conv { .. } | PlanLayer::Fc { .. }))
        .ok_or_else(|| Error::Params("plan has no linear layer".into()))?;
    let mut spec = ModelSpec {
        format: FORMAT_VERSION,
        name: plan.name.clone(),
        plaintext_modulus: plan.plaintext_modulus,
        input: plan.input,
        input_bits: plan.input_bits,
        layers: Vec::with_capacity(plan.layers.len()),
    };
    let mut shape = plan.input;
    let (mut zeros, mut total) = (0usize, 0usize);
    let mut draw = |count: usize, rng: &mut rand_chacha::ChaCha20Rng| -> Vec<i64> {
        (0..count)
            .map(|_| {
                total += 1;
                if rng.gen::<f64>() < alpha {
                    zeros += 1;
                    0
                } else {
                    let w = rng.gen_range(1..=plan.weight_max);
                    if rng.gen() {
                        w
                    } else {
                        -w
                    }
                }
            })
            .collect()
    };
    for (i, l) in plan.layers.iter().enumerate() {
        let shift = if i == last_linear { 0 } else { plan.shift };
        let layer = match *l {
            PlanLayer::Conv {
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let n = out_channels * shape.channels * kernel * kernel;
                let out = crate::linear::ConvSpec {
                    c_in: shape.channels,
                    c_out: out_channels,
                    kernel,
                    height: shape.height,
                    width: shape.width,
                    stride,
                    padding,
                };
                out.validate()?;
                shape = Shape::new(out_channels, out.out_height(), out.out_width());
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                    stride,
                    padding,
                    shift,
                    bound_bits: 2,
                    weights: Weights(draw(n, &mut rng)),
                    sparsity: None,
                }
            }
            PlanLayer::Fc { outputs } => {
                let n = outputs * shape.len();
                shape = Shape::flat(outputs);
                LayerSpec::Fc {
                    outputs,
                    shift,
                    bound_bits: 2,
                    weights: Weights(draw(n, &mut rng)),
                    sparsity: None,
                }
            }
            PlanLayer::Relu => LayerSpec::Relu,
            PlanLayer::MaxPool { size } => {
                shape = Shape::new(shape.channels, shape.height / size.max(1), shape.width / size.max(1));
                LayerSpec::MaxPool { size }
            }
        };
        spec.layers.push(layer);
    }
    let stages = spec.stages()?;
    let bits = worst_case_bits(&stages, plan.input_bits);
    for (stage, m) in stages.iter().zip(bits) {
        if let LayerSpec::Conv { bound_bits, .. } | LayerSpec::Fc { bound_bits, .. } = &mut spec.layers[stage.layer] {
            *bound_bits = m.max(2);
        }
    }
    for l in spec.layers.iter_mut() {
        if let LayerSpec::Conv { weights, sparsity, .. } | LayerSpec::Fc { weights, sparsity, .. } = l {
            let z = weights.0.iter().filter(|&&w| w == 0).count();
            *sparsity = Some(z as f64 / weights.0.len().max(1) as f64);
        }
    }
    spec.validate()?;
    let realized = if total == 0 { 0.0 } else { zeros as f64 / total as f64 };
    Ok((spec, realized))
}

/// Uniform random inputs in `[0, 2^input_bits)`.
pub fn random_inputs(model: &ModelSpec, count: usize, seed: u64) -> Vec<Vec<i64>> {
    let mut rng = rng_from_seed(seed_from_u64(seed));
    let hi = 1i64 << model.input_bits;
    (0..count)
        .map(|_| (0..model.input.len()).map(|_| rng.gen_range(0..hi)).collect())
        .collect()
}
