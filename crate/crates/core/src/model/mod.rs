//! Fixed-point CNN description, random generation and the plaintext
//! reference used as the oracle everywhere.
//!
//! A model is a JSON document:
//!
//! ```json
//! {
//!   "format": 1,
//!   "name": "tiny",
//!   "plaintext_modulus": 417793,
//!   "input": { "channels": 1, "height": 8, "width": 8 },
//!   "input_bits": 6,
//!   "layers": [
//!     { "kind": "conv", "out_channels": 4, "kernel": 3, "stride": 1, "padding": "same",
//!       "shift": 2, "bound_bits": 12, "weights": "<base64 of i32 LE>" },
//!     { "kind": "relu" },
//!     { "kind": "maxpool", "size": 2 },
//!     { "kind": "fc", "outputs": 10, "shift": 0, "bound_bits": 18, "weights": "..." }
//!   ]
//! }
//! ```
//!
//! Every linear layer except the last is followed by `relu`, `maxpool` or
//! `relu` + `maxpool`; `shift` is applied after that activation and
//! `bound_bits` is the certified magnitude of the layer output.

mod calib;
mod generate;
mod oracle;
mod spec;

pub use calib::{decode_tensors, encode_tensors, read_tensors, write_tensors};
pub use generate::{dequantize, gen_random_model, quantize, random_inputs, ModelPlan, PlanLayer};
pub use oracle::{
    apply_activation, argmax, certify, conv_reference, error_band, fc_reference, linear_reference, observed_bits,
    pool_windows, reference_inference, reference_trace, worst_case_bits, Trace,
};
pub use spec::{ActivationGroup, LayerSpec, LinearOp, ModelSpec, Shape, Stage, Weights, FORMAT_VERSION};

use crate::linear::Padding;

/// conv3x3(1 -> 4) -> ReLU -> maxpool 2x2 -> fc(64 -> 10) on 8x8 inputs.
pub fn tiny_plan(t: u64) -> ModelPlan {
    ModelPlan {
        name: "tiny".into(),
        plaintext_modulus: t,
        input: Shape::new(1, 8, 8),
        input_bits: 6,
        weight_max: 3,
        shift: 2,
        layers: vec![
            PlanLayer::Conv {
                out_channels: 4,
                kernel: 3,
                stride: 1,
                padding: Padding::Same,
            },
            PlanLayer::Relu,
            PlanLayer::MaxPool { size: 2 },
            PlanLayer::Fc { outputs: 10 },
        ],
    }
}

/// Same input as [`tiny_plan`] with two more linear layers.
pub fn deep_plan(t: u64) -> ModelPlan {
    ModelPlan {
        name: "deep".into(),
        plaintext_modulus: t,
        input: Shape::new(1, 8, 8),
        input_bits: 6,
        weight_max: 2,
        shift: 4,
        layers: vec![
            PlanLayer::Conv {
                out_channels: 4,
                kernel: 3,
                stride: 1,
                padding: Padding::Same,
            },
            PlanLayer::Relu,
            PlanLayer::Conv {
                out_channels: 4,
                kernel: 3,
                stride: 1,
                padding: Padding::Same,
            },
            PlanLayer::Relu,
            PlanLayer::MaxPool { size: 2 },
            PlanLayer::Fc { outputs: 16 },
            PlanLayer::Relu,
            PlanLayer::Fc { outputs: 10 },
        ],
    }
}

/// Client-traffic models: a 16x16 input, conv3x3(1 -> 8), ReLU, maxpool 2x2
/// and fc(512 -> 10). `depth = 4` inserts two conv3x3(8 -> 8) + ReLU layers
/// before the pool; input and output sizes do not change.
pub fn burden_plan(t: u64, depth: usize) -> ModelPlan {
    let conv = |out_channels| PlanLayer::Conv {
        out_channels,
        kernel: 3,
        stride: 1,
        padding: Padding::Same,
    };
    let mut layers = vec![conv(8), PlanLayer::Relu];
    for _ in 2..depth {
        layers.extend([conv(8), PlanLayer::Relu]);
    }
    layers.extend([PlanLayer::MaxPool { size: 2 }, PlanLayer::Fc { outputs: 10 }]);
    ModelPlan {
        name: format!("burden{depth}"),
        plaintext_modulus: t,
        input: Shape::new(1, 16, 16),
        input_bits: 6,
        weight_max: 2,
        shift: 6,
        layers,
    }
}
