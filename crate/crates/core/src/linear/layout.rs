use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ring::SlotVector;

/// Placement of a `(channel, y, x)` tensor in the first batching row of one
/// or more ciphertexts.
///
/// Channel `c` lives in ciphertext `c / channels_per_ct` at slot
/// `(c % channels_per_ct) * grid_h * grid_w + (y * stride + offset) * grid_w + x * stride + offset`.
/// Compact layouts have `stride = 1, offset = 0` and
/// a grid equal to the tensor size; convolution outputs stay on their input
/// grid and use the conv stride and centre offset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackedLayout {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub stride: usize,
    pub offset: usize,
    pub channels_per_ct: usize,
    pub slots: usize,
}

impl PackedLayout {
    /// Row-major, channel-contiguous layout filling as many channels per
    /// ciphertext as one row holds.
    pub fn compact(channels: usize, height: usize, width: usize, slots: usize) -> Result<Self> {
        let row = slots / 2;
        let plane = height * width;
        if channels == 0 || plane == 0 {
            return Err(Error::Mismatch("empty tensor".into()));
        }
        if plane > row {
            return Err(Error::Capacity(format!("{height}x{width} plane exceeds row of {row} slots")));
        }
        Ok(PackedLayout {
            channels,
            height,
            width,
            grid_h: height,
            grid_w: width,
            stride: 1,
            offset: 0,
            channels_per_ct: (row / plane).min(channels),
            slots,
        })
    }

    pub fn is_compact(&self) -> bool {
        self.stride == 1 && self.offset == 0 && self.grid_h == self.height && self.grid_w == self.width
    }

    pub fn ciphertexts(&self) -> usize {
        self.channels.div_ceil(self.channels_per_ct)
    }

    pub fn plane(&self) -> usize {
        self.grid_h * self.grid_w
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(ciphertext, slot)` of an element.
    pub fn position(&self, c: usize, y: usize, x: usize) -> (usize, usize) {
        let local = c % self.channels_per_ct;
        let slot = local * self.plane() + (y * self.stride + self.offset) * self.grid_w + x * self.stride + self.offset;
        (c / self.channels_per_ct, slot)
    }

    /// Packs a `(c, y, x)` row-major tensor of residues.
    pub fn pack(&self, values: &[u64]) -> Result<Vec<SlotVector>> {
        if values.is_empty() {
            return Err(Error::Mismatch("empty tensor".into()));
        }
        if values.len() != self.len() {
            return Err(Error::Mismatch(format!("tensor has {} values, layout expects {}", values.len(), self.len())));
        }
        let mut out = vec![SlotVector::zeros(self.slots); self.ciphertexts()];
        for c in 0..self.channels {
            for y in 0..self.height {
                for x in 0..self.width {
                    let (ct, slot) = self.position(c, y, x);
                    out[ct].0[slot] = values[(c * self.height + y) * self.width + x];
                }
            }
        }
        Ok(out)
    }

    pub fn unpack(&self, slots: &[SlotVector]) -> Result<Vec<u64>> {
        if slots.len() != self.ciphertexts() {
            return Err(Error::Mismatch(format!("{} slot vectors for a layout of {}", slots.len(), self.ciphertexts())));
        }
        let mut out = Vec::with_capacity(self.len());
        for c in 0..self.channels {
            for y in 0..self.height {
                for x in 0..self.width {
                    let (ct, slot) = self.position(c, y, x);
                    out.push(slots[ct].0[slot]);
                }
            }
        }
        Ok(out)
    }
}

/// Input placement for a diagonal-packed matrix-vector product: a vector of
/// padded length `dim` repeated twice in slots `[0, 2 dim)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FcLayout {
    pub n_in: usize,
    pub n_out: usize,
    pub dim: usize,
    pub slots: usize,
}

impl FcLayout {
    pub fn new(n_in: usize, n_out: usize, slots: usize) -> Result<Self> {
        if n_in == 0 || n_out == 0 {
            return Err(Error::Mismatch("empty matrix".into()));
        }
        let dim = n_in.max(n_out).next_power_of_two();
        if 2 * dim > slots / 2 {
            return Err(Error::Capacity(format!(
                "matrix {n_out}x{n_in} pads to {dim}, which needs {} slots in a row of {}",
                2 * dim,
                slots / 2
            )));
        }
        Ok(FcLayout { n_in, n_out, dim, slots })
    }

    pub fn pack_input(&self, values: &[u64]) -> Result<SlotVector> {
        if values.len() != self.n_in {
            return Err(Error::Mismatch(format!("vector has {} values, layer expects {}", values.len(), self.n_in)));
        }
        let mut v = SlotVector::zeros(self.slots);
        for (i, &x) in values.iter().enumerate() {
            v.0[i] = x;
            v.0[self.dim + i] = x;
        }
        Ok(v)
    }

    pub fn unpack_output(&self, v: &SlotVector) -> Vec<u64> {
        v.0[..self.n_out].to_vec()
    }
}
