use crate::bfv::{Bfv, Ciphertext, GaloisKeys, PreparedPlaintext};
use crate::error::{Error, Result};
use crate::ring::SlotVector;

use super::layout::FcLayout;
use super::OpCounts;

/// Diagonals of an `n_out x n_in` matrix padded to `dim x dim`, each shifted
/// so the product can be multiplied before it is rotated:
/// `y = sum_i rot_i(d'_i * x)` with `d'_i[i + j] = M[j][(j + i) mod dim]`.
#[derive(Clone, Debug)]
pub struct PreparedFc {
    pub layout: FcLayout,
    pub diagonals: Vec<PreparedPlaintext>,
}

impl PreparedFc {
    pub fn rotation_steps(&self) -> Vec<i64> {
        (1..self.layout.dim as i64).collect()
    }
}

/// Shifted diagonal `i` as slot values.
pub fn fc_diagonal(layout: &FcLayout, matrix: &[i64], i: usize, t: u64) -> SlotVector {
    let mut d = SlotVector::zeros(layout.slots);
    for j in 0..layout.n_out {
        let col = (j + i) % layout.dim;
        if col < layout.n_in {
            d.0[i + j] = matrix[j * layout.n_in + col].rem_euclid(t as i64) as u64;
        }
    }
    d
}

pub fn prepare_fc(bfv: &Bfv, n_in: usize, n_out: usize, matrix: &[i64]) -> Result<PreparedFc> {
    let params = bfv.context().params();
    let layout = FcLayout::new(n_in, n_out, params.n)?;
    if matrix.len() != n_in * n_out {
        return Err(Error::Mismatch(format!("matrix has {} entries, expected {n_out}x{n_in}", matrix.len())));
    }
    let t = params.t as i64;
    if let Some(w) = matrix.iter().find(|&&w| w <= -(t + 1) / 2 || w > t / 2) {
        return Err(Error::OutOfRange(format!("weight {w} outside the centered range of t = {t}")));
    }
    let diagonals = (0..layout.dim)
        .map(|i| bfv.prepare_plain(&bfv.encode(&fc_diagonal(&layout, matrix, i, params.t))?))
        .collect::<Result<Vec<_>>>()?;
    Ok(PreparedFc { layout, diagonals })
}

/// Matrix-vector product over an input packed by `FcLayout::pack_input`.
/// Every diagonal is processed, zero or not.
pub fn he_fc(bfv: &Bfv, ct: &Ciphertext, prepared: &PreparedFc, keys: &GaloisKeys) -> Result<(Ciphertext, OpCounts)> {
    let input = bfv.to_ntt(ct)?;
    let mut counts = OpCounts::default();
    let mut acc: Option<Ciphertext> = None;
    for (i, diag) in prepared.diagonals.iter().enumerate() {
        let mut prod = bfv.from_ntt(&bfv.mul_prepared(&input, diag)?)?;
        counts.pmult += 1;
        if i != 0 {
            prod = bfv.rotate(&prod, i as i64, keys)?;
            counts.rotations += 1;
            counts.automorphisms += bfv.rotation_cost(i as i64, keys);
        }
        match acc.as_mut() {
            Some(a) => {
                bfv.add_assign(a, &prod)?;
                counts.add += 1;
            }
            None => acc = Some(prod),
        }
    }
    Ok((acc.expect("at least one diagonal"), counts))
}

/// Counts for the diagonal method; independent of the weights.
pub fn fc_op_count(n_in: usize, n_out: usize, slots: usize) -> Result<OpCounts> {
    let dim = FcLayout::new(n_in, n_out, slots)?.dim;
    Ok(OpCounts {
        pmult: dim,
        rotations: dim - 1,
        add: dim - 1,
        ..OpCounts::default()
    })
}
