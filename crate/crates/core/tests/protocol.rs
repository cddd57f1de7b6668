use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use triad::bfv::{Bfv, KeyMode};
use triad::codec::Writer;
use triad::gc::{circuit_stats, GcConfig, GcMode, LabelDelivery, OT_BYTES_PER_BIT};
use triad::linear::Padding;
use triad::model::{
    apply_activation, deep_plan, gen_random_model, random_inputs, reference_trace, tiny_plan, LayerSpec, ModelPlan,
    ModelSpec, PlanLayer, Shape, Weights,
};
use triad::protocol::net::run_net;
use triad::protocol::sim::{run_sim, SimSession};
use triad::protocol::{
    check_against_oracle, cloud_share, mask_value, measure_stage_noise, stage_load, truncate_cloud, truncate_proxy,
    truncate_shares, Faults, Message, MessageKind, Party, ProtocolConfig, PublicModel, SessionPlan, ShareRing,
    ShareVector, Side,
};
use triad::noise::NoiseModel;
use triad::ring::{Preset, PRESET_T};
use triad::{Error, ErrorClass};

fn mini() -> ProtocolConfig {
    ProtocolConfig {
        params: Preset::Mini.params(),
        ..ProtocolConfig::default()
    }
}

fn tiny(seed: u64) -> ModelSpec {
    gen_random_model(&tiny_plan(PRESET_T), 0.0, seed).unwrap().0
}

fn centered(v: u64, t: u64) -> i64 {
    if v > t / 2 {
        v as i64 - t as i64
    } else {
        v as i64
    }
}

#[test]
fn truncation_is_floor_or_floor_plus_one_exhaustively() {
    // t = 521 (10 bits), f = 3, values of m = 6 bits; mask range [2^5, 2^8)
    let (t, f, m) = (521u64, 3u32, 6u32);
    let cfg = GcConfig::truncated(t, f).unwrap();
    let b = cfg.b;
    let ring = ShareRing::Pow2(b);
    let mut plus_one = 0usize;
    let mut total = 0usize;
    for x in -(1i64 << (m - 1))..(1i64 << (m - 1)) {
        for r in (1u64 << (m - 1))..(1u64 << (m + 2)) {
            let p = mask_value(x, r, t);
            let got = ring.signed(ring.add(truncate_proxy(p, f, b), truncate_cloud(r, f, b)));
            let floor = x.div_euclid(1 << f);
            assert!(got == floor || got == floor + 1, "x={x} r={r} got {got}");
            plus_one += (got == floor + 1) as usize;
            total += 1;
            // the share-vector path agrees
            if r % 7 == 0 {
                let s = |values, side| ShareVector {
                    values,
                    ring: ShareRing::ModT(t),
                    side,
                };
                let pv = truncate_shares(&s(vec![p], Side::Proxy), &cfg).unwrap();
                let cv = truncate_shares(&s(vec![cloud_share(r, t)], Side::Cloud), &cfg).unwrap();
                assert_eq!(pv.reconstruct(&cv).unwrap(), vec![got]);
            }
        }
    }
    let freq = plus_one as f64 / total as f64;
    println!("truncation +1 frequency at t = {t}, f = {f}: {freq:.4} ({plus_one} of {total})");
    // a carry happens when the low f bits of x and r overflow: about (2^f - 1) / 2^(f+1)
    assert!((freq - 7.0 / 16.0).abs() < 0.02, "{freq}");
}

#[test]
fn mod_t_shares_reconstruct() {
    let t = PRESET_T;
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    for _ in 0..10_000 {
        let x = rng.gen_range(-(t as i64 / 2)..=(t as i64 / 2));
        let r = rng.gen_range(0..t);
        let p = ShareVector {
            values: vec![mask_value(x, r, t)],
            ring: ShareRing::ModT(t),
            side: Side::Proxy,
        };
        let c = ShareVector {
            values: vec![cloud_share(r, t)],
            ring: ShareRing::ModT(t),
            side: Side::Cloud,
        };
        assert_eq!(p.reconstruct(&c).unwrap(), vec![x]);
    }
}

#[test]
fn tiny_model_within_band_in_both_modes() {
    let m = tiny(1);
    let images = random_inputs(&m, 3, 5);
    for (mode, exact) in [(GcMode::Truncated, false), (GcMode::Truncated, true), (GcMode::ModT, false)] {
        let cfg = ProtocolConfig {
            gc_mode: mode,
            exact_truncation: exact,
            ..mini()
        };
        let out = run_sim(&m, &images, &cfg, 3).unwrap();
        assert_eq!(out.results.len(), images.len());
        let truncation_error = mode == GcMode::Truncated && !exact;
        for (img, r) in images.iter().zip(&out.results) {
            check_against_oracle(&m, img, &r.logits, truncation_error).unwrap();
        }
    }
}

#[test]
fn deep_model_and_separate_rounds() {
    let (m, _) = gen_random_model(&deep_plan(PRESET_T), 0.3, 4).unwrap();
    let images = random_inputs(&m, 2, 6);
    for separate in [false, true] {
        for delivery in [LabelDelivery::Dealer, LabelDelivery::BaseOt] {
            let cfg = ProtocolConfig {
                separate_rounds: separate,
                delivery,
                ..mini()
            };
            let out = run_sim(&m, &images, &cfg, 8).unwrap();
            for (img, r) in images.iter().zip(&out.results) {
                check_against_oracle(&m, img, &r.logits, true).unwrap();
            }
        }
    }
}

#[test]
fn first_round_outputs_are_within_one_of_the_oracle() {
    let m = tiny(2);
    let image = random_inputs(&m, 1, 1).remove(0);
    let mut s = SimSession::new(&m, &mini(), 5).unwrap();
    s.run(std::slice::from_ref(&image)).unwrap();
    let trace = reference_trace(&m, &image).unwrap();
    let stages = m.stages().unwrap();
    let want: Vec<i64> = apply_activation(stages[0].activation, stages[0].linear_output, &trace.linear[0])
        .into_iter()
        .map(|v| v >> stages[0].shift)
        .collect();
    let (_, _, _, z) = &s.proxy.role.escrow.outputs[0];
    let (_, _, _, s_y) = &s.cloud.role.escrow.output_masks[0];
    let t = PRESET_T;
    for ((&z, &s_y), &w) in z.iter().zip(s_y).zip(&want) {
        let y = centered((z + t - s_y) % t, t);
        assert!(y == w || y == w + 1, "got {y}, oracle {w}");
    }
}

#[test]
fn zero_masks_reveal_the_linear_output_to_the_proxy() {
    let m = tiny(3);
    let image = random_inputs(&m, 1, 2).remove(0);
    let cfg = ProtocolConfig {
        gc_mode: GcMode::ModT,
        faults: Faults {
            zero_masks: true,
            ..Faults::default()
        },
        ..mini()
    };
    let mut s = SimSession::new(&m, &cfg, 1).unwrap();
    s.run(std::slice::from_ref(&image)).unwrap();
    let trace = reference_trace(&m, &image).unwrap();
    let t = PRESET_T;
    let (_, stage, p) = &s.proxy.role.escrow.decrypted[0];
    assert_eq!(*stage, 0);
    let p: Vec<i64> = p.iter().map(|&v| centered(v, t)).collect();
    assert_eq!(p, trace.linear[0]);

    // with masks on, the same decryption shows x + r instead
    let mut s = SimSession::new(&m, &ProtocolConfig { gc_mode: GcMode::ModT, ..mini() }, 1).unwrap();
    s.run(std::slice::from_ref(&image)).unwrap();
    let (_, _, p) = &s.proxy.role.escrow.decrypted[0];
    let equal = p.iter().zip(&trace.linear[0]).filter(|(&a, &b)| centered(a, t) == b).count();
    assert!(equal < 3, "{equal} of {} masked values equal the linear output", p.len());
}

#[test]
fn cloud_view_needs_the_proxy_key() {
    let m = tiny(4);
    let image = random_inputs(&m, 1, 3).remove(0);
    let mut s = SimSession::new(&m, &mini(), 2).unwrap();
    s.run(std::slice::from_ref(&image)).unwrap();
    let trace = reference_trace(&m, &image).unwrap();
    let t = PRESET_T;
    let bfv = Bfv::new(s.setup.ctx.clone());
    let (s_c, s_p) = s.client.role.escrow_keys();
    let (_, stage, cts) = &s.cloud.role.escrow.linear_outputs[0];
    assert_eq!(*stage, 0);

    // the proxy's own decryption path
    let got: Vec<i64> = s.proxy.role.probe(cts, 0).unwrap().into_iter().map(|v| centered(v, t)).collect();
    assert_eq!(got, trace.linear[0]);

    // the same ciphertexts under the client key are unreadable
    let map = &s.setup.plan.stages[0].output;
    let slots: Vec<_> = cts.iter().map(|c| bfv.decrypt_slots(s_c, c)).collect::<Result<_, _>>().unwrap_or_default();
    if !slots.is_empty() {
        let wrong: Vec<i64> = map.unpack(&slots).unwrap().into_iter().map(|v| centered(v, t)).collect();
        assert_ne!(wrong, trace.linear[0]);
    }
    let _ = s_p;

    // activation ciphertexts held by the cloud decrypt to the next layer's input under s_p only
    let (_, next, acts) = &s.cloud.role.escrow.activations[0];
    assert_eq!(*next, 1);
    for c in acts {
        assert_eq!(c.owner(), triad::bfv::KeyOwner::Proxy);
    }
}

#[test]
fn no_secret_key_reaches_the_cloud() {
    let m = tiny(5);
    let images = random_inputs(&m, 2, 4);
    let mut s = SimSession::new(&m, &mini(), 3).unwrap();
    s.capture = true;
    s.run(&images).unwrap();
    s.close().unwrap();
    let (s_c, s_p) = s.client.role.escrow_keys();
    let key_bytes = |k: &triad::bfv::SecretKey| {
        let mut w = Writer::new();
        k.write_to(&mut w);
        // skip the two tag bytes; the coefficients are the secret
        w.into_bytes()[2..].to_vec()
    };
    let secrets = [key_bytes(s_c), key_bytes(s_p)];
    let mut to_cloud = 0;
    for (from, to, kind, payload) in &s.frames {
        let msg = Message::decode(&s.setup.ctx, *kind, payload).unwrap();
        if *to == Party::Cloud {
            to_cloud += 1;
            assert!(!matches!(msg, Message::ProxyKey(_)), "secret key sent to the cloud");
            for sk in &secrets {
                assert!(!payload.windows(sk.len()).any(|w| w == sk.as_slice()), "key bytes in a {kind:?} frame");
            }
            match &msg {
                Message::Input { ciphertexts, .. } => {
                    assert!(ciphertexts.iter().all(|c| c.owner() == triad::bfv::KeyOwner::Client))
                }
                Message::Activation { ciphertexts, .. } => {
                    assert!(ciphertexts.iter().all(|c| c.owner() == triad::bfv::KeyOwner::Proxy))
                }
                _ => {}
            }
        }
        if matches!(msg, Message::ProxyKey(_)) {
            assert_eq!((*from, *to), (Party::Client, Party::Proxy));
        }
    }
    assert!(to_cloud > 0);
}

#[test]
fn log_keys_count_per_domain() {
    let plan = ModelPlan {
        name: "keys".into(),
        plaintext_modulus: PRESET_T,
        input: Shape::new(1, 8, 8),
        input_bits: 4,
        weight_max: 2,
        shift: 1,
        layers: vec![
            PlanLayer::Conv {
                out_channels: 1,
                kernel: 3,
                stride: 1,
                padding: Padding::Same,
            },
            PlanLayer::Relu,
            PlanLayer::Conv {
                out_channels: 1,
                kernel: 1,
                stride: 1,
                padding: Padding::Same,
            },
        ],
    };
    let (m, _) = gen_random_model(&plan, 0.0, 1).unwrap();
    let cfg = mini();
    let mut s = SimSession::new(&m, &cfg, 1).unwrap();
    s.run(&random_inputs(&m, 1, 1)).unwrap();
    let n = cfg.params.n;
    let log_keys = (n / 2).trailing_zeros() as usize + 1;
    assert_eq!(s.cloud.role.key_counts(), Some((log_keys, 0, true)));
    let key_frames: Vec<_> = s.transcript().entries.iter().filter(|e| e.kind == MessageKind::KeyMaterial).collect();
    assert_eq!(key_frames.len(), 2);

    let all = ProtocolConfig {
        key_mode: KeyMode::AllKeys,
        ..mini()
    };
    let mut s = SimSession::new(&m, &all, 1).unwrap();
    s.run(&random_inputs(&m, 1, 1)).unwrap();
    // 8 distinct non-zero offsets of a 3x3 kernel, plus the row swap
    assert_eq!(s.cloud.role.key_counts(), Some((9, 0, true)));
}

#[test]
fn one_reencryption_per_inference() {
    let (m, _) = gen_random_model(&deep_plan(PRESET_T), 0.0, 2).unwrap();
    let out = run_sim(&m, &random_inputs(&m, 3, 1), &mini(), 4).unwrap();
    let re = out.transcript.reencryptions();
    assert_eq!(re, BTreeMap::from([(0, 1), (1, 1), (2, 1)]));
    for row in &out.ops {
        assert_eq!(row.reencrypted > 0, row.stage == 0);
    }
}

#[test]
fn masks_are_fresh_per_inference() {
    let m = tiny(6);
    let image = random_inputs(&m, 1, 9).remove(0);
    let mut s = SimSession::new(&m, &mini(), 7).unwrap();
    s.run(&[image.clone(), image.clone(), image]).unwrap();
    let masks = &s.cloud.role.escrow.masks;
    assert_eq!(masks.len(), 3);
    for i in 0..3 {
        for j in i + 1..3 {
            let same = masks[i].2.iter().zip(&masks[j].2).filter(|(a, b)| a == b).count();
            assert!(same * 20 < masks[i].2.len(), "masks {i} and {j} share {same} values");
        }
    }
    let outs = &s.cloud.role.escrow.output_masks;
    assert_ne!(outs[0].3, outs[1].3);
    // same image, fresh masks: the proxy sees different values each time
    let dec = &s.proxy.role.escrow.decrypted;
    assert_ne!(dec[0].2, dec[1].2);
}

#[test]
fn sim_and_net_agree() {
    let m = tiny(7);
    let images = random_inputs(&m, 2, 11);
    let cfg = mini();
    let sim = run_sim(&m, &images, &cfg, 21).unwrap();
    let net = run_net(&m, &images, &cfg, 21).unwrap();
    assert_eq!(sim.results, net.results);
    assert_eq!(sim.ops, net.ops);
    assert_eq!(sim.transcript.total_bytes(), net.transcript.total_bytes());
    assert_eq!(sim.transcript.bandwidth().rows, net.transcript.bandwidth().rows);
    assert_eq!(sim.transcript.reencryptions(), net.transcript.reencryptions());
}

#[test]
fn bad_images_are_rejected() {
    let m = tiny(8);
    let e = run_sim(&m, &[vec![]], &mini(), 1).err().unwrap();
    assert_eq!(e.class(), ErrorClass::Validation);
    let e = run_sim(&m, &[vec![1; 5]], &mini(), 1).err().unwrap();
    assert_eq!(e.class(), ErrorClass::Protocol, "{e}");
    let e = run_sim(&m, &[vec![1 << 10; 64]], &mini(), 1).err().unwrap();
    assert!(e.to_string().contains("exceeds"), "{e}");
}

fn identity_model() -> ModelSpec {
    ModelSpec {
        format: 1,
        name: "identity".into(),
        plaintext_modulus: PRESET_T,
        input: Shape::new(1, 2, 2),
        input_bits: 6,
        layers: vec![
            LayerSpec::Conv {
                out_channels: 1,
                kernel: 1,
                stride: 1,
                padding: Padding::Same,
                shift: 0,
                bound_bits: 8,
                weights: Weights(vec![1]),
                sparsity: None,
            },
            LayerSpec::Relu,
            LayerSpec::Fc {
                outputs: 4,
                shift: 0,
                bound_bits: 8,
                weights: Weights((0..16).map(|i| (i % 5 == 0) as i64).collect()),
                sparsity: None,
            },
        ],
    }
}

#[test]
fn identity_model_returns_its_input() {
    let m = identity_model();
    m.validate().unwrap();
    let images = vec![vec![0, 1, 62, 63], vec![5, 17, 33, 2]];
    for cfg in [mini(), ProtocolConfig { gc_mode: GcMode::ModT, ..mini() }] {
        let out = run_sim(&m, &images, &cfg, 2).unwrap();
        for (img, r) in images.iter().zip(&out.results) {
            assert_eq!(&r.logits, img);
        }
    }
}

#[test]
fn bandwidth_matches_circuit_stats() {
    let m = tiny(9);
    for delivery in [LabelDelivery::Dealer, LabelDelivery::BaseOt] {
        let cfg = ProtocolConfig { delivery, ..mini() };
        let out = run_sim(&m, &random_inputs(&m, 1, 1), &cfg, 1).unwrap();
        let s = SimSession::new(&m, &cfg, 1).unwrap();
        let round = &s.setup.plan.stages[0].rounds[0];
        let k = round.instances();
        let stats = circuit_stats(&round.circuit.circuit, &round.circuit.cfg, delivery).times(k);
        let t = &out.transcript;
        let garbled = t.bytes_where(|e| e.kind == MessageKind::GarbledBundle);
        let labels = t.bytes_where(|e| e.kind == MessageKind::EvalLabels);
        // framing: headers, ids, digest, decode bits
        let framing = garbled - stats.garbled_bytes;
        let decode_bits = k * round.circuit.circuit.outputs.len();
        assert!(garbled >= stats.garbled_bytes && framing <= 256 + decode_bits, "{framing}");
        // the dealer request carries the evaluator's bits in the clear
        let request_bits = match delivery {
            LabelDelivery::Dealer => stats.evaluator_inputs.div_ceil(8) as i64,
            LabelDelivery::BaseOt => 0,
        };
        let label_framing = labels as i64 - stats.online_label_bytes as i64 - request_bits;
        assert!((0..=128).contains(&label_framing), "label framing {label_framing}");
        if delivery == LabelDelivery::BaseOt {
            assert_eq!(stats.online_label_bytes, stats.evaluator_inputs * OT_BYTES_PER_BIT);
        }
    }
}

#[test]
fn client_bytes_do_not_depend_on_depth() {
    let (shallow, _) = gen_random_model(&tiny_plan(PRESET_T), 0.0, 1).unwrap();
    let (deep, _) = gen_random_model(&deep_plan(PRESET_T), 0.0, 1).unwrap();
    let bytes = |m: &ModelSpec| {
        let out = run_sim(m, &random_inputs(m, 1, 1), &mini(), 1).unwrap();
        (out.transcript.inference_bytes(Some(Party::Client))[&0], out.transcript.inference_bytes(None)[&0])
    };
    let (a, ta) = bytes(&shallow);
    let (b, tb) = bytes(&deep);
    assert_eq!(a, b);
    assert!(tb > ta);
}

#[test]
fn tampered_tables_are_an_integrity_error() {
    let m = tiny(10);
    let cfg = ProtocolConfig {
        faults: Faults {
            tamper_gc: true,
            ..Faults::default()
        },
        ..mini()
    };
    let e = run_sim(&m, &random_inputs(&m, 1, 1), &cfg, 1).err().unwrap();
    assert_eq!(e.class(), ErrorClass::Integrity, "{e}");
    assert_eq!(e.class().exit_code(), 4);
    let e = run_net(&m, &random_inputs(&m, 1, 1), &cfg, 1).err().unwrap();
    assert_eq!(e.class(), ErrorClass::Integrity, "{e}");
}

#[test]
fn exhausted_noise_is_detected() {
    let m = tiny(11);
    for mode in [GcMode::Truncated, GcMode::ModT] {
        let cfg = ProtocolConfig {
            gc_mode: mode,
            faults: Faults {
                exhaust_noise: true,
                ..Faults::default()
            },
            ..mini()
        };
        let e = run_sim(&m, &random_inputs(&m, 1, 1), &cfg, 1).err().unwrap();
        assert!(matches!(&e, Error::Phase { source, .. } if matches!(**source, Error::ResultMismatch(_))), "{e}");
        assert_eq!(e.class(), ErrorClass::Integrity);
    }
}

#[test]
fn replayed_tables_are_refused() {
    let m = tiny(12);
    let mut s = SimSession::new(&m, &mini(), 1).unwrap();
    s.capture = true;
    s.run(&random_inputs(&m, 1, 1)).unwrap();
    let (_, _, kind, payload) = s.frames.iter().find(|f| f.2 == MessageKind::GarbledBundle).unwrap().clone();
    let msg = Message::decode(&s.setup.ctx, kind, &payload).unwrap();
    let e = s.proxy.deliver(Party::Cloud, msg).unwrap_err();
    assert!(matches!(&e, Error::Phase { source, .. } if matches!(**source, Error::Reused(_))), "{e}");
}

#[test]
fn planned_bases_bound_the_measured_noise() {
    for (m, cfg) in [(tiny(3), mini()), (gen_random_model(&deep_plan(PRESET_T), 0.0, 3).unwrap().0, mini())] {
        let public = PublicModel::of(&m).unwrap();
        let plan = SessionPlan::new(&public, &cfg).unwrap();
        let nm = NoiseModel::new(cfg.params);
        let measured = measure_stage_noise(&m, &cfg, 4, 9).unwrap();
        for (row, stage) in measured.iter().zip(&public.stages) {
            let load = stage_load(&stage.linear, cfg.params.n, cfg.key_mode).unwrap();
            let w_sw = (row.stage == 0).then_some(plan.bases.w_sw);
            let est = nm.stage_noise(load, plan.bases.w_a, cfg.variant, w_sw);
            assert!(row.correct, "stage {} decrypted wrongly", row.stage);
            assert!(est.inf_norm_bound.log2() >= row.max_noise_bits, "{est:?} vs {row:?}");
            assert!(row.min_budget_bits >= cfg.margin_bits, "{row:?}");
        }
    }
}
