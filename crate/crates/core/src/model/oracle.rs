//! Plaintext integer reference: exact linear layers over Z, then the
//! activation, then an arithmetic right shift.

use super::spec::{ActivationGroup, LinearOp, ModelSpec, Shape, Stage};
use crate::error::{Error, Result};
use crate::linear::{ConvSpec, Padding};

pub fn conv_reference(spec: &ConvSpec, input: &[i64], kernels: &[i64]) -> Vec<i64> {
    let pad = match spec.padding {
        Padding::Same => (spec.kernel / 2) as isize,
        Padding::Valid => 0,
    };
    let (ho, wo, k) = (spec.out_height(), spec.out_width(), spec.kernel);
    let mut out = vec![0i64; spec.c_out * ho * wo];
    for co in 0..spec.c_out {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = 0i64;
                for ci in 0..spec.c_in {
                    for ky in 0..k {
                        let iy = (oy * spec.stride + ky) as isize - pad;
                        if iy < 0 || iy >= spec.height as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * spec.stride + kx) as isize - pad;
                            if ix < 0 || ix >= spec.width as isize {
                                continue;
                            }
                            let w = kernels[((co * spec.c_in + ci) * k + ky) * k + kx];
                            acc += w * input[(ci * spec.height + iy as usize) * spec.width + ix as usize];
                        }
                    }
                }
                out[(co * ho + oy) * wo + ox] = acc;
            }
        }
    }
    out
}

pub fn fc_reference(n_in: usize, n_out: usize, matrix: &[i64], x: &[i64]) -> Vec<i64> {
    (0..n_out)
        .map(|j| (0..n_in).map(|i| matrix[j * n_in + i] * x[i]).sum())
        .collect()
}

pub fn linear_reference(op: &LinearOp, x: &[i64]) -> Vec<i64> {
    match op {
        LinearOp::Conv { spec, kernels } => conv_reference(spec, x, kernels),
        LinearOp::Fc { n_in, n_out, matrix } => fc_reference(*n_in, *n_out, matrix, x),
    }
}

/// Indices of each pooling window in `(c, y, x)` order, windows enumerated
/// in output order.
pub fn pool_windows(shape: Shape, size: usize) -> Vec<Vec<usize>> {
    let (ho, wo) = (shape.height / size, shape.width / size);
    let mut out = Vec::with_capacity(shape.channels * ho * wo);
    for c in 0..shape.channels {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut win = Vec::with_capacity(size * size);
                for dy in 0..size {
                    for dx in 0..size {
                        win.push((c * shape.height + oy * size + dy) * shape.width + ox * size + dx);
                    }
                }
                out.push(win);
            }
        }
    }
    out
}

pub fn apply_activation(group: Option<ActivationGroup>, shape: Shape, x: &[i64]) -> Vec<i64> {
    match group {
        None => x.to_vec(),
        Some(ActivationGroup::Relu) => x.iter().map(|&v| v.max(0)).collect(),
        Some(ActivationGroup::MaxPool { size }) => pool_windows(shape, size)
            .iter()
            .map(|w| w.iter().map(|&i| x[i]).max().unwrap())
            .collect(),
        Some(ActivationGroup::ReluMaxPool { size }) => pool_windows(shape, size)
            .iter()
            .map(|w| w.iter().map(|&i| x[i]).max().unwrap().max(0))
            .collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    /// Output of every linear layer, before activation.
    pub linear: Vec<Vec<i64>>,
    pub logits: Vec<i64>,
}

fn check_input(model: &ModelSpec, image: &[i64]) -> Result<()> {
    if image.is_empty() {
        return Err(Error::Mismatch("empty image".into()));
    }
    if image.len() != model.input.len() {
        return Err(Error::Mismatch(format!("image has {} values, model expects {}", image.len(), model.input.len())));
    }
    let lim = 1i64 << model.input_bits;
    if let Some(v) = image.iter().find(|v| v.abs() >= lim) {
        return Err(Error::OutOfRange(format!("input value {v} exceeds {} bits", model.input_bits)));
    }
    Ok(())
}

pub fn reference_trace(model: &ModelSpec, image: &[i64]) -> Result<Trace> {
    let stages = model.stages()?;
    check_input(model, image)?;
    Ok(trace_stages(&stages, image))
}

pub(crate) fn trace_stages(stages: &[Stage], image: &[i64]) -> Trace {
    let mut x = image.to_vec();
    let mut linear = Vec::with_capacity(stages.len());
    for s in stages {
        let y = linear_reference(&s.linear, &x);
        x = apply_activation(s.activation, s.linear_output, &y)
            .into_iter()
            .map(|v| v >> s.shift)
            .collect();
        linear.push(y);
    }
    Trace { linear, logits: x }
}

pub fn reference_inference(model: &ModelSpec, image: &[i64]) -> Result<Vec<i64>> {
    Ok(reference_trace(model, image)?.logits)
}

/// Largest observed magnitude of every linear output, as bits `m` with
/// `|x| < 2^(m-1)`.
pub fn observed_bits(trace: &Trace) -> Vec<u32> {
    trace
        .linear
        .iter()
        .map(|v| {
            let m = v.iter().map(|x| x.unsigned_abs()).max().unwrap_or(0);
            65 - m.leading_zeros()
        })
        .collect()
}

/// Runs every calibration input and checks the declared bounds; returns the
/// tightest bits observed per stage.
pub fn certify(model: &ModelSpec, inputs: &[Vec<i64>]) -> Result<Vec<u32>> {
    let stages = model.stages()?;
    let mut worst = vec![0u32; stages.len()];
    for img in inputs {
        check_input(model, img)?;
        let trace = trace_stages(&stages, img);
        for (k, bits) in observed_bits(&trace).into_iter().enumerate() {
            if bits > stages[k].bound_bits {
                return Err(Error::Model {
                    layer: stages[k].layer,
                    reason: format!("output needs {bits} bits, bound declares {}", stages[k].bound_bits),
                });
            }
            worst[k] = worst[k].max(bits);
        }
    }
    Ok(worst)
}

/// Worst-case bound bits for every stage over all inputs with
/// `|v| < 2^input_bits`.
pub fn worst_case_bits(stages: &[Stage], input_bits: u32) -> Vec<u32> {
    let mut in_max = vec![(1i64 << input_bits) - 1; stages.first().map_or(0, |s| s.input.len())];
    let mut out = Vec::with_capacity(stages.len());
    for s in stages {
        let abs: Vec<i64> = s.linear.weights().iter().map(|w| w.abs()).collect();
        let y = match &s.linear {
            LinearOp::Conv { spec, .. } => conv_reference(spec, &in_max, &abs),
            LinearOp::Fc { n_in, n_out, .. } => fc_reference(*n_in, *n_out, &abs, &in_max),
        };
        let m = y.iter().copied().max().unwrap_or(0) as u64;
        out.push(65 - m.leading_zeros());
        in_max = apply_activation(s.activation, s.linear_output, &y)
            .into_iter()
            .map(|v| v >> s.shift)
            .collect();
    }
    out
}

/// Per-logit interval `[lo, hi]` containing `protocol - oracle` when every
/// activation output may exceed the oracle by one (share truncation) and
/// linear layers are exact.
pub fn error_band(model: &ModelSpec, truncation_error: bool) -> Result<Vec<(i64, i64)>> {
    let stages = model.stages()?;
    let mut band = vec![(0i64, 0i64); model.input.len()];
    for s in &stages {
        // linear: worst case over signs of each weight
        let lin: Vec<(i64, i64)> = match &s.linear {
            LinearOp::Fc { n_in, n_out, matrix } => (0..*n_out)
                .map(|j| sum_band((0..*n_in).map(|i| (matrix[j * n_in + i], band[i]))))
                .collect(),
            LinearOp::Conv { spec, kernels } => {
                let per = spec.c_in * spec.kernel * spec.kernel;
                let plane = spec.out_height() * spec.out_width();
                let worst_in = band.iter().fold((0i64, 0i64), |a, b| (a.0.min(b.0), a.1.max(b.1)));
                (0..spec.c_out)
                    .flat_map(|co| {
                        let b = sum_band(kernels[co * per..(co + 1) * per].iter().map(|&w| (w, worst_in)));
                        std::iter::repeat_n(b, plane)
                    })
                    .collect()
            }
        };
        band = match s.activation {
            None => lin,
            Some(group) => {
                let pooled: Vec<(i64, i64)> = if group.pool() > 1 {
                    pool_windows(s.linear_output, group.pool())
                        .iter()
                        .map(|w| w.iter().fold((0, 0), |a, &i| (a.0.min(lin[i].0), a.1.max(lin[i].1))))
                        .collect()
                } else {
                    lin
                };
                let extra = truncation_error as i64;
                pooled
                    .into_iter()
                    .map(|(lo, hi)| (lo.min(0) >> s.shift, ceil_shift(hi.max(0), s.shift) + extra))
                    .collect()
            }
        };
    }
    Ok(band)
}

fn ceil_shift(v: i64, f: u32) -> i64 {
    -((-v) >> f)
}

fn sum_band(terms: impl Iterator<Item = (i64, (i64, i64))>) -> (i64, i64) {
    terms.fold((0, 0), |(lo, hi), (w, (l, h))| {
        if w >= 0 {
            (lo + w * l, hi + w * h)
        } else {
            (lo + w * h, hi + w * l)
        }
    })
}

pub fn argmax(v: &[i64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
