//! Boolean circuits for activations, their garbling, and input-label
//! delivery.

mod activation;
mod circuit;
mod config;
mod garble;
mod ot;

pub use activation::{ActivationCircuit, ActivationKind};
pub use circuit::{from_bits, to_bits, Bit, BooleanCircuit, CircuitBuilder, Gate, WireId, Word};
pub use config::{bit_width, GcConfig, GcMode, LABEL_BITS};
pub use garble::{garble, garble_batch, GarbledCircuit, GarblerSecrets, Label, ROW_BYTES, TABLE_BYTES, TAG_BYTES};
pub use ot::{dealer_select, LabelDelivery, OtReceiver, OtSender, OT_BYTES_PER_BIT, POINT_BYTES};

use serde::Serialize;

/// Size figures for one garbled instance, or a batch after [`GcStats::times`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct GcStats {
    pub and_gates: usize,
    pub xor_gates: usize,
    pub not_gates: usize,
    pub garbler_inputs: usize,
    pub evaluator_inputs: usize,
    /// Table bytes as serialized: four rows of label plus tag per AND gate.
    pub garbled_bytes: usize,
    /// Evaluator input labels, including OT traffic when OT is used.
    pub online_label_bytes: usize,
    /// Garbler input labels, sent alongside the masked values.
    pub garbler_label_bytes: usize,
}

impl GcStats {
    pub fn times(self, k: usize) -> Self {
        GcStats {
            and_gates: self.and_gates * k,
            xor_gates: self.xor_gates * k,
            not_gates: self.not_gates * k,
            garbler_inputs: self.garbler_inputs * k,
            evaluator_inputs: self.evaluator_inputs * k,
            garbled_bytes: self.garbled_bytes * k,
            online_label_bytes: self.online_label_bytes * k,
            garbler_label_bytes: self.garbler_label_bytes * k,
        }
    }
}

pub fn circuit_stats(circuit: &BooleanCircuit, cfg: &GcConfig, delivery: LabelDelivery) -> GcStats {
    let label = cfg.label_bytes();
    let and = circuit.and_count();
    GcStats {
        and_gates: and,
        xor_gates: circuit.xor_count(),
        not_gates: circuit.not_count(),
        garbler_inputs: circuit.garbler_inputs.len(),
        evaluator_inputs: circuit.evaluator_inputs.len(),
        garbled_bytes: and * TABLE_BYTES,
        online_label_bytes: delivery.online_bytes(circuit.evaluator_inputs.len(), label),
        garbler_label_bytes: circuit.garbler_inputs.len() * label,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table4_ratios() {
        let t = 417793;
        let base = ActivationCircuit::relu(GcConfig::mod_t(t, 9).unwrap()).unwrap();
        let trunc = ActivationCircuit::relu(GcConfig::truncated(t, 9).unwrap()).unwrap();
        for d in [LabelDelivery::Dealer, LabelDelivery::BaseOt] {
            let a = circuit_stats(&base.circuit, &base.cfg, d).times(10_000);
            let b = circuit_stats(&trunc.circuit, &trunc.cfg, d).times(10_000);
            let offline = b.garbled_bytes as f64 / a.garbled_bytes as f64;
            let online = b.online_label_bytes as f64 / a.online_label_bytes as f64;
            assert!(offline <= 0.35, "offline ratio {offline}");
            assert!(online <= 0.60, "online ratio {online}");
        }
    }
}
