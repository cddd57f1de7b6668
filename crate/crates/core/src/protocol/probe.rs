//! Measured noise of each linear stage, for comparison with the analytic
//! estimate. The probe plays both key owners with its own keys: the first
//! stage runs on an input under `s_c` and is re-encrypted to `s_p`, later
//! stages run on fresh `s_p` encryptions of the reference activations.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use super::plan::SessionPlan;
use super::{ProtocolConfig, PublicModel};
use crate::bfv::{Bfv, Ciphertext, GaloisKeys, KeyOwner, ReEncryptionKey, SecretKey};
use crate::error::{Error, Result};
use crate::linear::{he_conv, he_fc, prepare_conv, prepare_fc, ConvOptions};
use crate::model::{apply_activation, random_inputs, reference_trace, LinearOp, ModelSpec};
use crate::ring::RingContext;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeasuredNoise {
    pub stage: usize,
    pub layer: usize,
    /// Smallest remaining budget over the trials, in bits.
    pub min_budget_bits: f64,
    /// Largest noise infinity norm, as log2.
    pub max_noise_bits: f64,
    /// Whether every decrypted output equalled the plaintext reference mod t.
    pub correct: bool,
}

pub fn measure_stage_noise(model: &ModelSpec, cfg: &ProtocolConfig, trials: usize, seed: u64) -> Result<Vec<MeasuredNoise>> {
    if trials == 0 {
        return Err(Error::Params("at least one trial is needed".into()));
    }
    let plan = SessionPlan::new(&PublicModel::of(model)?, cfg)?;
    let ctx = RingContext::new(cfg.params)?;
    let bfv = Bfv::new(ctx.clone());
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let s_c = SecretKey::generate(&ctx, KeyOwner::Client, &mut rng);
    let s_p = SecretKey::generate(&ctx, KeyOwner::Proxy, &mut rng);
    let galois = |sk: &SecretKey, steps: &Option<Vec<i64>>, rng: &mut ChaCha20Rng| -> Result<GaloisKeys> {
        match steps {
            Some(s) => GaloisKeys::generate(&ctx, sk, plan.key_mode, Some(s), plan.bases.w_a, rng),
            None => Ok(GaloisKeys::empty(sk.owner(), plan.key_mode)),
        }
    };
    let client_keys = galois(&s_c, &plan.client_steps, &mut rng)?;
    let proxy_keys = galois(&s_p, &plan.proxy_steps, &mut rng)?;
    let rk = ReEncryptionKey::generate(&ctx, &s_c, &s_p, plan.bases.w_sw, &mut rng)?;
    let options = ConvOptions {
        dedup_rotations: cfg.dedup_rotations,
    };
    let stages = model.stages()?;
    let t = cfg.params.t as i64;
    let mut rows: Vec<MeasuredNoise> = plan
        .stages
        .iter()
        .map(|s| MeasuredNoise {
            stage: s.index,
            layer: s.layer,
            min_budget_bits: f64::INFINITY,
            max_noise_bits: 0.0,
            correct: true,
        })
        .collect();
    for image in random_inputs(model, trials, seed ^ 0x5eed) {
        let trace = reference_trace(model, &image)?;
        let mut x = image;
        for (i, (stage, sp)) in stages.iter().zip(&plan.stages).enumerate() {
            let (sk, keys) = if i == 0 { (&s_c, &client_keys) } else { (&s_p, &proxy_keys) };
            let packed: Vec<u64> = x.iter().map(|v| v.rem_euclid(t) as u64).collect();
            let cts = sp
                .input
                .pack(&packed)?
                .iter()
                .map(|v| bfv.encrypt_slots(sk, v, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let mut out: Vec<Ciphertext> = match &stage.linear {
                LinearOp::Conv { spec, kernels } => he_conv(&bfv, &cts, &prepare_conv(&bfv, spec, kernels)?, keys, options)?.0,
                LinearOp::Fc { n_in, n_out, matrix } => {
                    vec![he_fc(&bfv, &cts[0], &prepare_fc(&bfv, *n_in, *n_out, matrix)?, keys)?.0]
                }
            };
            if i == 0 {
                out = out.iter().map(|c| bfv.reencrypt(c, &rk)).collect::<Result<_>>()?;
            }
            let row = &mut rows[i];
            let mut slots = Vec::with_capacity(out.len());
            for c in &out {
                let b = bfv.measure_noise(&s_p, c)?;
                row.min_budget_bits = row.min_budget_bits.min(b.bits);
                row.max_noise_bits = row.max_noise_bits.max((b.inf_norm.max(1) as f64).log2());
                slots.push(bfv.decrypt_slots(&s_p, c)?);
            }
            let got = sp.output.unpack(&slots)?;
            let want = &trace.linear[i];
            row.correct &= got.iter().zip(want).all(|(&g, &w)| g == w.rem_euclid(t) as u64);
            x = apply_activation(stage.activation, stage.linear_output, want)
                .into_iter()
                .map(|v| v >> stage.shift)
                .collect();
        }
    }
    Ok(rows)
}
