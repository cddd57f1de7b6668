//! Homomorphic linear layers over packed ciphertexts.

mod conv;
mod fc;
mod layout;

use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

pub use conv::{conv_mask, he_conv, op_count, prepare_conv, ConvOptions, ConvSpec, ConvTerm, Padding, PreparedConv};
pub use fc::{fc_diagonal, fc_op_count, he_fc, prepare_fc, PreparedFc};
pub use layout::{FcLayout, PackedLayout};

/// Homomorphic operations executed (or predicted) for a layer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub pmult: usize,
    /// Logical slot rotations.
    pub rotations: usize,
    /// Galois automorphisms performed; exceeds `rotations` in log-keys mode.
    pub automorphisms: usize,
    /// Ciphertext additions accumulating one output channel.
    pub add: usize,
    /// Additions merging channels into a shared output ciphertext.
    pub merge_add: usize,
}

impl AddAssign for OpCounts {
    fn add_assign(&mut self, o: Self) {
        self.pmult += o.pmult;
        self.rotations += o.rotations;
        self.automorphisms += o.automorphisms;
        self.add += o.add;
        self.merge_add += o.merge_add;
    }
}
