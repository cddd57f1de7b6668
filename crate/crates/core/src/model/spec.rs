use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::codec::Writer;
use crate::error::{Error, Result};
use crate::linear::{ConvSpec, Padding};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Shape { channels, height, width }
    }

    pub fn flat(n: usize) -> Self {
        Shape::new(n, 1, 1)
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Integer weights stored in the document as base64 of little-endian `i32`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Weights(pub Vec<i64>);

impl Serialize for Weights {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut bytes = Vec::with_capacity(self.0.len() * 4);
        for &w in &self.0 {
            let v = i32::try_from(w).map_err(|_| serde::ser::Error::custom(format!("weight {w} exceeds i32")))?;
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        s.serialize_str(&STANDARD.encode(bytes))
    }
}

impl<'de> Deserialize<'de> for Weights {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        let bytes = STANDARD.decode(text.as_bytes()).map_err(serde::de::Error::custom)?;
        if bytes.len() % 4 != 0 {
            return Err(serde::de::Error::custom("weight blob length is not a multiple of 4"));
        }
        Ok(Weights(
            bytes
                .chunks_exact(4)
                .map(|c| i32::from_le_bytes(c.try_into().unwrap()) as i64)
                .collect(),
        ))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerSpec {
    Conv {
        out_channels: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default = "same")]
        padding: Padding,
        /// Right shift applied after the following activation.
        #[serde(default)]
        shift: u32,
        /// The layer output satisfies `|x| < 2^(bound_bits - 1)`.
        bound_bits: u32,
        /// `[out][in][ky][kx]`.
        weights: Weights,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sparsity: Option<f64>,
    },
    Fc {
        outputs: usize,
        #[serde(default)]
        shift: u32,
        bound_bits: u32,
        /// `[out][in]`, inputs flattened in `(channel, y, x)` order.
        weights: Weights,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sparsity: Option<f64>,
    },
    Relu,
    #[serde(rename = "maxpool")]
    MaxPool {
        #[serde(default = "two")]
        size: usize,
    },
}

fn one() -> usize {
    1
}
fn two() -> usize {
    2
}
fn same() -> Padding {
    Padding::Same
}

impl LayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::Fc { .. } => "fc",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool { .. } => "maxpool",
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. } | LayerSpec::Fc { .. })
    }

    pub fn weights(&self) -> Option<&[i64]> {
        match self {
            LayerSpec::Conv { weights, .. } | LayerSpec::Fc { weights, .. } => Some(&weights.0),
            _ => None,
        }
    }

    pub fn realized_sparsity(&self) -> Option<f64> {
        self.weights()
            .filter(|w| !w.is_empty())
            .map(|w| w.iter().filter(|&&x| x == 0).count() as f64 / w.len() as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(default = "format_version")]
    pub format: u32,
    pub name: String,
    /// Plaintext modulus the model is certified against.
    pub plaintext_modulus: u64,
    pub input: Shape,
    /// Inputs satisfy `|v| < 2^input_bits`.
    pub input_bits: u32,
    pub layers: Vec<LayerSpec>,
}

fn format_version() -> u32 {
    FORMAT_VERSION
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivationGroup {
    Relu,
    MaxPool { size: usize },
    ReluMaxPool { size: usize },
}

impl ActivationGroup {
    pub fn pool(&self) -> usize {
        match *self {
            ActivationGroup::Relu => 1,
            ActivationGroup::MaxPool { size } | ActivationGroup::ReluMaxPool { size } => size,
        }
    }

    pub fn has_relu(&self) -> bool {
        !matches!(self, ActivationGroup::MaxPool { .. })
    }

    pub fn output_shape(&self, s: Shape) -> Shape {
        let p = self.pool();
        Shape::new(s.channels, s.height / p, s.width / p)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LinearOp {
    Conv { spec: ConvSpec, kernels: Vec<i64> },
    Fc { n_in: usize, n_out: usize, matrix: Vec<i64> },
}

impl LinearOp {
    pub fn weights(&self) -> &[i64] {
        match self {
            LinearOp::Conv { kernels, .. } => kernels,
            LinearOp::Fc { matrix, .. } => matrix,
        }
    }
}

/// One linear layer with the activation group that follows it.
#[derive(Clone, Debug, PartialEq)]
pub struct Stage {
    /// Index of the linear layer in the layer list.
    pub layer: usize,
    pub input: Shape,
    pub linear: LinearOp,
    pub linear_output: Shape,
    pub activation: Option<ActivationGroup>,
    pub shift: u32,
    pub bound_bits: u32,
    pub output: Shape,
}

impl ModelSpec {
    pub fn from_json(text: &str) -> Result<(Self, Vec<String>)> {
        let spec: ModelSpec = serde_json::from_str(text).map_err(|e| Error::Document(e.to_string()))?;
        let warnings = spec.validate()?;
        Ok((spec, warnings))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Document(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<(Self, Vec<String>)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Document(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::Document(format!("{}: {e}", path.display())))
    }

    fn t_bits(&self) -> u32 {
        64 - (self.plaintext_modulus - 1).leading_zeros()
    }

    /// Checks the whole document; returns non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        self.stages_with_warnings().map(|(_, w)| w)
    }

    pub fn stages(&self) -> Result<Vec<Stage>> {
        self.stages_with_warnings().map(|(s, _)| s)
    }

    fn stages_with_warnings(&self) -> Result<(Vec<Stage>, Vec<String>)> {
        let doc = |m: String| Error::Document(m);
        if self.format != FORMAT_VERSION {
            return Err(doc(format!("unsupported model format {}", self.format)));
        }
        if self.plaintext_modulus < 3 {
            return Err(doc(format!("plaintext modulus {}", self.plaintext_modulus)));
        }
        if self.input.is_empty() {
            return Err(doc("empty input shape".into()));
        }
        let t_bits = self.t_bits();
        if self.input_bits == 0 || self.input_bits + 1 >= t_bits {
            return Err(doc(format!("input_bits {} outside [1, {})", self.input_bits, t_bits - 1)));
        }
        let half = (self.plaintext_modulus - 1) as i64 / 2;
        let mut warnings = Vec::new();
        let mut stages = Vec::new();
        let mut shape = self.input;
        let mut i = 0;
        let layers = &self.layers;
        if layers.is_empty() {
            return Err(doc("model has no layers".into()));
        }
        while i < layers.len() {
            let layer = &layers[i];
            let err = |reason: String| Error::Model { layer: i, reason };
            let (linear, out, shift, bound_bits) = match layer {
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                    stride,
                    padding,
                    shift,
                    bound_bits,
                    weights,
                    ..
                } => {
                    let spec = ConvSpec {
                        c_in: shape.channels,
                        c_out: *out_channels,
                        kernel: *kernel,
                        height: shape.height,
                        width: shape.width,
                        stride: *stride,
                        padding: *padding,
                    };
                    spec.validate().map_err(|e| err(e.to_string()))?;
                    if weights.0.len() != spec.weight_count() {
                        return Err(err(format!("{} weights, shape needs {}", weights.0.len(), spec.weight_count())));
                    }
                    let out = Shape::new(spec.c_out, spec.out_height(), spec.out_width());
                    (LinearOp::Conv { spec, kernels: weights.0.clone() }, out, *shift, *bound_bits)
                }
                LayerSpec::Fc {
                    outputs,
                    shift,
                    bound_bits,
                    weights,
                    ..
                } => {
                    let n_in = shape.len();
                    if *outputs == 0 {
                        return Err(err("fc with no outputs".into()));
                    }
                    if weights.0.len() != n_in * outputs {
                        return Err(err(format!("{} weights, shape needs {}x{}", weights.0.len(), outputs, n_in)));
                    }
                    (
                        LinearOp::Fc {
                            n_in,
                            n_out: *outputs,
                            matrix: weights.0.clone(),
                        },
                        Shape::flat(*outputs),
                        *shift,
                        *bound_bits,
                    )
                }
                other => {
                    return Err(err(format!("{} must follow a conv or fc layer", other.kind_name())));
                }
            };
            if let Some(w) = linear.weights().iter().find(|w| w.abs() > half) {
                return Err(err(format!("weight {w} outside the centred range of Z_{}", self.plaintext_modulus)));
            }
            if bound_bits < 2 || bound_bits >= t_bits {
                return Err(err(format!("bound_bits {bound_bits} outside [2, {t_bits})")));
            }
            if let (Some(declared), Some(real)) = (
                match layer {
                    LayerSpec::Conv { sparsity, .. } | LayerSpec::Fc { sparsity, .. } => *sparsity,
                    _ => None,
                },
                layer.realized_sparsity(),
            ) {
                if (declared - real).abs() > 1e-9 {
                    warnings.push(format!("layer {i}: declared sparsity {declared:.4} but weights give {real:.4}"));
                }
            }
            let linear_layer = i;
            i += 1;
            let mut activation = None;
            match (layers.get(i), layers.get(i + 1)) {
                (Some(LayerSpec::Relu), Some(LayerSpec::MaxPool { size })) => {
                    activation = Some(ActivationGroup::ReluMaxPool { size: *size });
                    i += 2;
                }
                (Some(LayerSpec::Relu), _) => {
                    activation = Some(ActivationGroup::Relu);
                    i += 1;
                }
                (Some(LayerSpec::MaxPool { size }), _) if *size >= 2 => {
                    activation = Some(ActivationGroup::MaxPool { size: *size });
                    i += 1;
                }
                _ => {}
            }
            if let Some(a) = activation {
                let p = a.pool();
                if p > 1 && (out.height % p != 0 || out.width % p != 0) {
                    return Err(Error::Model {
                        layer: i - 1,
                        reason: format!("pool size {p} does not divide {}x{}", out.height, out.width),
                    });
                }
            }
            let last = i >= layers.len();
            if activation.is_none() && !last {
                return Err(Error::Model {
                    layer: i,
                    reason: "consecutive linear layers need an activation between them".into(),
                });
            }
            if last && activation.is_some() {
                return Err(Error::Model {
                    layer: i - 1,
                    reason: "the model must end with a linear layer producing logits".into(),
                });
            }
            if last && shift != 0 {
                return Err(Error::Model {
                    layer: linear_layer,
                    reason: "the final linear layer cannot shift".into(),
                });
            }
            let output = activation.map_or(out, |a| a.output_shape(out));
            stages.push(Stage {
                layer: linear_layer,
                input: shape,
                linear,
                linear_output: out,
                activation,
                shift,
                bound_bits,
                output,
            });
            shape = output;
        }
        Ok((stages, warnings))
    }

    pub fn logits(&self) -> usize {
        self.stages().map(|s| s.last().map_or(0, |s| s.output.len())).unwrap_or(0)
    }

    /// SHA-256 of a canonical binary encoding, independent of JSON layout.
    pub fn digest(&self) -> [u8; 32] {
        let mut w = Writer::new();
        w.u32(self.format);
        w.blob(self.name.as_bytes());
        w.u64(self.plaintext_modulus);
        for d in [self.input.channels, self.input.height, self.input.width] {
            w.u64(d as u64);
        }
        w.u32(self.input_bits);
        w.u32(self.layers.len() as u32);
        for l in &self.layers {
            w.blob(l.kind_name().as_bytes());
            match l {
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                    stride,
                    padding,
                    shift,
                    bound_bits,
                    weights,
                    ..
                } => {
                    for d in [*out_channels, *kernel, *stride] {
                        w.u64(d as u64);
                    }
                    w.u8(matches!(padding, Padding::Same) as u8);
                    w.u32(*shift);
                    w.u32(*bound_bits);
                    write_weights(&mut w, &weights.0);
                }
                LayerSpec::Fc {
                    outputs,
                    shift,
                    bound_bits,
                    weights,
                    ..
                } => {
                    w.u64(*outputs as u64);
                    w.u32(*shift);
                    w.u32(*bound_bits);
                    write_weights(&mut w, &weights.0);
                }
                LayerSpec::Relu => {}
                LayerSpec::MaxPool { size } => w.u64(*size as u64),
            }
        }
        Sha256::digest(w.into_bytes()).into()
    }
}

fn write_weights(w: &mut Writer, v: &[i64]) {
    w.u64(v.len() as u64);
    for &x in v {
        w.u64(x as u64);
    }
}
