use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bfv::{rotation_plan, Bfv, Ciphertext, GaloisKeys, KeyMode, NttCiphertext, PreparedPlaintext};
use crate::error::{Error, Result};
use crate::ring::SlotVector;

use super::layout::PackedLayout;
use super::OpCounts;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Same,
    Valid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub height: usize,
    pub width: usize,
    pub stride: usize,
    pub padding: Padding,
}

impl ConvSpec {
    pub fn validate(&self) -> Result<()> {
        if self.c_in == 0 || self.c_out == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::Mismatch("convolution with an empty dimension".into()));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::Mismatch(format!("kernel width {} is not odd", self.kernel)));
        }
        if !(1..=2).contains(&self.stride) {
            return Err(Error::Mismatch(format!("stride {} is not 1 or 2", self.stride)));
        }
        if self.padding == Padding::Valid && (self.kernel > self.height || self.kernel > self.width) {
            return Err(Error::Mismatch(format!(
                "{k}x{k} kernel does not fit a {}x{} image without padding",
                self.height,
                self.width,
                k = self.kernel
            )));
        }
        Ok(())
    }

    /// Half kernel width `r`.
    pub fn radius(&self) -> usize {
        self.kernel / 2
    }

    fn pad(&self) -> usize {
        match self.padding {
            Padding::Same => self.radius(),
            Padding::Valid => 0,
        }
    }

    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.pad() - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.pad() - self.kernel) / self.stride + 1
    }

    pub fn weight_count(&self) -> usize {
        self.c_out * self.c_in * self.kernel * self.kernel
    }

    /// Compact layout of the input.
    pub fn input_layout(&self, slots: usize) -> Result<PackedLayout> {
        PackedLayout::compact(self.c_in, self.height, self.width, slots)
    }

    /// Outputs stay on the input grid: output `(oy, ox)` sits at the grid
    /// point of its kernel centre.
    pub fn output_layout(&self, slots: usize) -> Result<PackedLayout> {
        let input = self.input_layout(slots)?;
        let per_ct = (slots / 2 / input.plane()).min(self.c_out);
        Ok(PackedLayout {
            channels: self.c_out,
            height: self.out_height(),
            width: self.out_width(),
            grid_h: self.height,
            grid_w: self.width,
            stride: self.stride,
            offset: self.radius() - self.pad(),
            channels_per_ct: per_ct,
            slots,
        })
    }

    /// Rotation offsets a dense kernel of this shape needs. Depends on the
    /// shape only, so keys can be generated without seeing the weights.
    pub fn rotation_steps(&self, slots: usize) -> Result<Vec<i64>> {
        let mut steps: Vec<i64> = self.term_offsets(slots)?.into_iter().map(|(_, o)| o).collect();
        steps.sort_unstable();
        steps.dedup();
        Ok(steps)
    }

    /// `(output ciphertext, offset)` of every rotated term of a dense kernel.
    pub fn term_offsets(&self, slots: usize) -> Result<Vec<(usize, i64)>> {
        self.validate()?;
        let input = self.input_layout(slots)?;
        let output = self.output_layout(slots)?;
        let mut out = Vec::new();
        for co in 0..self.c_out {
            for ci in 0..self.c_in {
                for ky in 0..self.kernel {
                    for kx in 0..self.kernel {
                        let o = term_offset(self, &input, &output, co, ci, ky, kx);
                        if o != 0 {
                            out.push((co / output.channels_per_ct, o));
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    fn weight_index(&self, co: usize, ci: usize, ky: usize, kx: usize) -> usize {
        ((co * self.c_in + ci) * self.kernel + ky) * self.kernel + kx
    }
}

/// One kernel element of one (output, input) channel pair.
#[derive(Clone, Debug)]
pub struct ConvTerm {
    pub out_channel: usize,
    pub in_channel: usize,
    pub ky: usize,
    pub kx: usize,
    pub weight: i64,
    pub input_ct: usize,
    pub output_ct: usize,
    /// Left rotation moving each source slot onto its output slot.
    pub offset: i64,
    /// `None` marks a skipped (zero) kernel element.
    pub mask: Option<PreparedPlaintext>,
}

impl ConvTerm {
    pub fn is_skip(&self) -> bool {
        self.mask.is_none()
    }
}

#[derive(Clone, Debug)]
pub struct PreparedConv {
    pub spec: ConvSpec,
    pub input_layout: PackedLayout,
    pub output_layout: PackedLayout,
    pub terms: Vec<ConvTerm>,
}

impl PreparedConv {
    pub fn live_terms(&self) -> impl Iterator<Item = &ConvTerm> {
        self.terms.iter().filter(|t| !t.is_skip())
    }

    pub fn nnz(&self) -> usize {
        self.live_terms().count()
    }

    /// Distinct nonzero rotation offsets the live terms need.
    pub fn rotation_steps(&self) -> Vec<i64> {
        let mut steps: Vec<i64> = self.live_terms().map(|t| t.offset).filter(|&o| o != 0).collect();
        steps.sort_unstable();
        steps.dedup();
        steps
    }
}

fn term_offset(spec: &ConvSpec, input: &PackedLayout, output: &PackedLayout, co: usize, ci: usize, ky: usize, kx: usize) -> i64 {
    let r = spec.radius() as i64;
    let ci_local = (ci % input.channels_per_ct) as i64;
    let co_local = (co % output.channels_per_ct) as i64;
    (ci_local - co_local) * input.plane() as i64 + (ky as i64 - r) * input.grid_w as i64 + (kx as i64 - r)
}

/// Slot mask for one kernel element: the weight sits at every input slot
/// whose shifted contribution lands on a valid output, zero elsewhere
/// (which realizes zero padding and blocks wrap-around).
pub fn conv_mask(spec: &ConvSpec, input: &PackedLayout, ci: usize, ky: usize, kx: usize, weight: u64) -> SlotVector {
    let mut mask = SlotVector::zeros(input.slots);
    let pad = spec.pad() as i64;
    for oy in 0..spec.out_height() {
        let iy = (oy * spec.stride + ky) as i64 - pad;
        if iy < 0 || iy >= spec.height as i64 {
            continue;
        }
        for ox in 0..spec.out_width() {
            let ix = (ox * spec.stride + kx) as i64 - pad;
            if ix < 0 || ix >= spec.width as i64 {
                continue;
            }
            let (_, slot) = input.position(ci, iy as usize, ix as usize);
            mask.0[slot] = weight;
        }
    }
    mask
}

/// Builds masked plaintexts for every nonzero kernel element of a
/// `(c_out, c_in, k, k)` weight tensor given in centered form.
pub fn prepare_conv(bfv: &Bfv, spec: &ConvSpec, kernels: &[i64]) -> Result<PreparedConv> {
    spec.validate()?;
    if kernels.len() != spec.weight_count() {
        return Err(Error::Mismatch(format!(
            "kernel tensor has {} values, expected {}",
            kernels.len(),
            spec.weight_count()
        )));
    }
    let params = bfv.context().params();
    let t = params.t as i64;
    let slots = params.n;
    let input = spec.input_layout(slots)?;
    let output = spec.output_layout(slots)?;
    let mut terms = Vec::with_capacity(kernels.len());
    for co in 0..spec.c_out {
        for ci in 0..spec.c_in {
            for ky in 0..spec.kernel {
                for kx in 0..spec.kernel {
                    let weight = kernels[spec.weight_index(co, ci, ky, kx)];
                    if weight <= -(t + 1) / 2 || weight > t / 2 {
                        return Err(Error::OutOfRange(format!("kernel weight {weight} outside the centered range of t = {t}")));
                    }
                    let mask = if weight == 0 {
                        None
                    } else {
                        let slots = conv_mask(spec, &input, ci, ky, kx, weight.rem_euclid(t) as u64);
                        Some(bfv.prepare_plain(&bfv.encode(&slots)?)?)
                    };
                    terms.push(ConvTerm {
                        out_channel: co,
                        in_channel: ci,
                        ky,
                        kx,
                        weight,
                        input_ct: ci / input.channels_per_ct,
                        output_ct: co / output.channels_per_ct,
                        offset: term_offset(spec, &input, &output, co, ci, ky, kx),
                        mask,
                    });
                }
            }
        }
    }
    Ok(PreparedConv {
        spec: *spec,
        input_layout: input,
        output_layout: output,
        terms,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvOptions {
    /// Sum products sharing a rotation offset before rotating, so each
    /// distinct offset per output ciphertext is rotated once.
    pub dedup_rotations: bool,
}

/// Multiply-then-rotate convolution. Returns one ciphertext per output
/// channel group together with the operations actually executed.
pub fn he_conv(
    bfv: &Bfv,
    inputs: &[Ciphertext],
    prepared: &PreparedConv,
    keys: &GaloisKeys,
    options: ConvOptions,
) -> Result<(Vec<Ciphertext>, OpCounts)> {
    if inputs.len() != prepared.input_layout.ciphertexts() {
        return Err(Error::Mismatch(format!(
            "{} input ciphertexts, layout needs {}",
            inputs.len(),
            prepared.input_layout.ciphertexts()
        )));
    }
    let owner = inputs[0].owner();
    let inputs_ntt = inputs.iter().map(|c| bfv.to_ntt(c)).collect::<Result<Vec<_>>>()?;
    let groups = prepared.output_layout.ciphertexts();
    let mut counts = OpCounts::default();
    let mut outputs = Vec::with_capacity(groups);
    for g in 0..groups {
        let terms: Vec<&ConvTerm> = prepared.live_terms().filter(|t| t.output_ct == g).collect();
        let out = if options.dedup_rotations {
            conv_group_dedup(bfv, &inputs_ntt, &terms, keys, &mut counts)?
        } else {
            conv_group(bfv, &inputs_ntt, &terms, keys, &mut counts)?
        };
        outputs.push(out.unwrap_or_else(|| bfv.zero(owner)));
    }
    Ok((outputs, counts))
}

fn conv_group(
    bfv: &Bfv,
    inputs: &[NttCiphertext],
    terms: &[&ConvTerm],
    keys: &GaloisKeys,
    counts: &mut OpCounts,
) -> Result<Option<Ciphertext>> {
    let mut channels: Vec<Ciphertext> = Vec::new();
    let mut current: Option<(usize, Ciphertext)> = None;
    for term in terms {
        let mask = term.mask.as_ref().expect("live term");
        let mut prod = bfv.from_ntt(&bfv.mul_prepared(&inputs[term.input_ct], mask)?)?;
        counts.pmult += 1;
        if term.offset != 0 {
            prod = bfv.rotate(&prod, term.offset, keys)?;
            counts.rotations += 1;
            counts.automorphisms += bfv.rotation_cost(term.offset, keys);
        }
        match current.as_mut() {
            Some((co, acc)) if *co == term.out_channel => {
                bfv.add_assign(acc, &prod)?;
                counts.add += 1;
            }
            _ => {
                if let Some((_, done)) = current.replace((term.out_channel, prod)) {
                    channels.push(done);
                }
            }
        }
    }
    if let Some((_, done)) = current {
        channels.push(done);
    }
    merge(bfv, channels, counts)
}

fn merge(bfv: &Bfv, parts: Vec<Ciphertext>, counts: &mut OpCounts) -> Result<Option<Ciphertext>> {
    let mut parts = parts.into_iter();
    let Some(mut acc) = parts.next() else {
        return Ok(None);
    };
    for p in parts {
        bfv.add_assign(&mut acc, &p)?;
        counts.merge_add += 1;
    }
    Ok(Some(acc))
}

fn conv_group_dedup(
    bfv: &Bfv,
    inputs: &[NttCiphertext],
    terms: &[&ConvTerm],
    keys: &GaloisKeys,
    counts: &mut OpCounts,
) -> Result<Option<Ciphertext>> {
    let mut by_offset: BTreeMap<i64, NttCiphertext> = BTreeMap::new();
    for term in terms {
        let mask = term.mask.as_ref().expect("live term");
        let input = &inputs[term.input_ct];
        match by_offset.get_mut(&term.offset) {
            Some(acc) => {
                bfv.mul_prepared_accumulate(acc, input, mask)?;
                counts.add += 1;
            }
            None => {
                by_offset.insert(term.offset, bfv.mul_prepared(input, mask)?);
            }
        }
        counts.pmult += 1;
    }
    let mut parts = Vec::with_capacity(by_offset.len());
    for (offset, acc) in by_offset {
        let mut ct = bfv.from_ntt(&acc)?;
        if offset != 0 {
            ct = bfv.rotate(&ct, offset, keys)?;
            counts.rotations += 1;
            counts.automorphisms += bfv.rotation_cost(offset, keys);
        }
        parts.push(ct);
    }
    merge(bfv, parts, counts)
}

/// Operation counts of the per-term convolution, from the sparsity pattern
/// alone: one multiplication per nonzero element, one rotation unless the
/// element is the kernel centre of a channel pair sharing its local slot
/// position, `nnz - 1` additions per nonzero output channel, and one merge
/// per further nonzero channel in an output ciphertext.
pub fn op_count(spec: &ConvSpec, kernels: &[i64], slots: usize, mode: KeyMode) -> Result<OpCounts> {
    spec.validate()?;
    if kernels.len() != spec.weight_count() {
        return Err(Error::Mismatch("kernel tensor has the wrong length".into()));
    }
    let input = spec.input_layout(slots)?;
    let output = spec.output_layout(slots)?;
    let r = spec.radius();
    let mut counts = OpCounts::default();
    let mut live_channels = vec![0usize; output.ciphertexts()];
    for co in 0..spec.c_out {
        let mut nnz = 0;
        for ci in 0..spec.c_in {
            for ky in 0..spec.kernel {
                for kx in 0..spec.kernel {
                    if kernels[spec.weight_index(co, ci, ky, kx)] == 0 {
                        continue;
                    }
                    nnz += 1;
                    let aligned = ky == r && kx == r && ci % input.channels_per_ct == co % output.channels_per_ct;
                    if !aligned {
                        counts.rotations += 1;
                        let offset = term_offset(spec, &input, &output, co, ci, ky, kx);
                        counts.automorphisms += rotation_plan(slots, offset, mode).len();
                    }
                }
            }
        }
        counts.pmult += nnz;
        if nnz > 0 {
            counts.add += nnz - 1;
            live_channels[co / output.channels_per_ct] += 1;
        }
    }
    counts.merge_add = live_channels.iter().map(|&c| c.saturating_sub(1)).sum();
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(c_in: usize, c_out: usize, k: usize, hw: usize) -> ConvSpec {
        ConvSpec {
            c_in,
            c_out,
            kernel: k,
            height: hw,
            width: hw,
            stride: 1,
            padding: Padding::Same,
        }
    }

    #[test]
    fn dense_single_channel_counts() {
        let s = spec(1, 1, 3, 8);
        let c = op_count(&s, &[1; 9], 256, KeyMode::AllKeys).unwrap();
        assert_eq!((c.pmult, c.rotations, c.add), (9, 8, 8));
        let c = op_count(&s, &[0; 9], 256, KeyMode::AllKeys).unwrap();
        assert_eq!(c, OpCounts::default());
    }

    #[test]
    fn output_geometry() {
        let mut s = spec(1, 1, 3, 8);
        assert_eq!((s.out_height(), s.out_width()), (8, 8));
        s.padding = Padding::Valid;
        assert_eq!(s.out_height(), 6);
        s.stride = 2;
        assert_eq!(s.out_height(), 3);
        let out = s.output_layout(256).unwrap();
        // output (0, 0) sits at the centre of the first window
        assert_eq!(out.position(0, 0, 0), (0, 9));
        assert_eq!(out.position(0, 1, 1), (0, 3 * 8 + 3));
        s.padding = Padding::Same;
        assert_eq!(s.out_height(), 4);
        s.kernel = 4;
        assert!(s.validate().is_err());
    }

    #[test]
    fn mask_zeros_wrapping_positions() {
        let s = spec(1, 1, 3, 4);
        let input = s.input_layout(64).unwrap();
        // top-left element reads (y-1, x-1): outputs in row 0 or column 0 are padding
        let m = conv_mask(&s, &input, 0, 0, 0, 5);
        let expected: Vec<u64> = (0..16).map(|i| if i / 4 < 3 && i % 4 < 3 { 5 } else { 0 }).collect();
        assert_eq!(&m.0[..16], &expected[..]);
        let centre = conv_mask(&s, &input, 0, 1, 1, 1);
        assert!(centre.0[..16].iter().all(|&v| v == 1));
        assert!(centre.0[16..].iter().all(|&v| v == 0));
    }

    #[test]
    fn shape_steps_cover_any_sparsity() {
        let s = spec(2, 3, 3, 4);
        let steps = s.rotation_steps(64).unwrap();
        let input = s.input_layout(64).unwrap();
        let output = s.output_layout(64).unwrap();
        let mut dense = Vec::new();
        for co in 0..3 {
            for ci in 0..2 {
                for ky in 0..3 {
                    for kx in 0..3 {
                        dense.push(term_offset(&s, &input, &output, co, ci, ky, kx));
                    }
                }
            }
        }
        dense.retain(|&o| o != 0);
        assert!(dense.iter().all(|o| steps.contains(o)));
        assert!(!steps.contains(&0));
        assert!(spec(1, 1, 1, 4).rotation_steps(64).unwrap().is_empty());
    }
}
