use rand::Rng;
use rand_chacha::ChaCha20Rng;
use triad::bfv::{Bfv, GaloisKeys, KeyMode, KeyOwner, ReEncryptionKey, SecretKey};
use triad::ring::{digit_count, is_prime, rng_from_seed, seed_from_u64, Preset, RingContext, RingParams, SlotVector};
use triad::Error;

fn toy() -> (Bfv, ChaCha20Rng) {
    let ctx = RingContext::new(Preset::Toy.params()).unwrap();
    (Bfv::new(ctx), rng_from_seed(seed_from_u64(2024)))
}

fn tiny() -> (Bfv, ChaCha20Rng) {
    // q = 1 mod 2n*t keeps t*round(q/t) = q - 1
    let q = (1u64 << 50..).find(|&q| q % (16 * 17) == 1 && is_prime(q)).unwrap();
    let ctx = RingContext::new(RingParams::new(8, q, 17, 3.2).unwrap()).unwrap();
    (Bfv::new(ctx), rng_from_seed(seed_from_u64(8)))
}

fn random_slots(rng: &mut ChaCha20Rng, n: usize, t: u64) -> SlotVector {
    SlotVector((0..n).map(|_| rng.gen_range(0..t)).collect())
}

fn rotate_rows(v: &SlotVector, k: i64) -> SlotVector {
    let half = v.len() / 2;
    let k = k.rem_euclid(half as i64) as usize;
    let mut out = vec![0; v.len()];
    for row in 0..2 {
        for i in 0..half {
            out[row * half + i] = v.0[row * half + (i + k) % half];
        }
    }
    SlotVector(out)
}

#[test]
fn roundtrip_many_plaintexts() {
    let (bfv, mut rng) = toy();
    let sk = SecretKey::generate(bfv.context(), KeyOwner::Client, &mut rng);
    let t = bfv.context().params().t;
    for _ in 0..1000 {
        let v = random_slots(&mut rng, 2048, t);
        let ct = bfv.encrypt_slots(&sk, &v, &mut rng).unwrap();
        assert_eq!(bfv.decrypt_slots(&sk, &ct).unwrap(), v);
    }
}

#[test]
fn fresh_noise_is_small_and_budget_large() {
    let (bfv, mut rng) = toy();
    let params = *bfv.context().params();
    let sk = SecretKey::generate(bfv.context(), KeyOwner::Client, &mut rng);
    let heuristic = 12.0 * params.n as f64 * params.sigma;
    for _ in 0..20 {
        let pt = bfv.encode(&random_slots(&mut rng, 2048, params.t)).unwrap();
        let ct = bfv.encrypt(&sk, &pt, &mut rng).unwrap();
        let b = bfv.noise_budget(&sk, &ct, &pt).unwrap();
        // symmetric encryption carries only e, far inside the public-key heuristic
        assert!(b.inf_norm as f64 <= heuristic);
        assert!(b.inf_norm <= params.error_bound());
        assert!(b.bits > 20.0, "budget {}", b.bits);
    }
}

#[test]
fn wrong_key_does_not_decrypt() {
    let (bfv, mut rng) = toy();
    let a = SecretKey::generate(bfv.context(), KeyOwner::Client, &mut rng);
    let b = SecretKey::generate(bfv.context(), KeyOwner::Client, &mut rng);
    for _ in 0..5 {
        let v = random_slots(&mut rng, 2048, 417_793);
        let ct = bfv.encrypt_slots(&a, &v, &mut rng).unwrap();
        assert_ne!(bfv.decrypt_slots(&b, &ct).unwrap(), v);
    }
}

#[test]
fn addition_identity_oracle_and_noise() {
    for (bfv, mut rng) in [tiny(), toy()] {
        let n = bfv.n();
        let t = bfv.context().params().t;
        let sk = SecretKey::generate(bfv.context(), KeyOwner::Client, &mut rng);
        for _ in 0..50 {
            let u = random_slots(&mut rng, n, t);
            let v = random_slots(&mut rng, n, t);
            let pu = bfv.encode(&u).unwrap();
            let pv = bfv.encode(&v).unwrap();
            let a = bfv.encrypt(&sk, &pu, &mut rng).unwrap();
            let b = bfv.encrypt(&sk, &pv, &mut rng).unwrap();
            let zero = bfv.encrypt_slots(&sk, &SlotVector::zeros(n), &mut rng).unwrap();
            assert_eq!(bfv.decrypt_slots(&sk, &bfv.add(&a, &zero).unwrap()).unwrap(), u);
            let sum = bfv.add(&a, &b).unwrap();
            let expected: Vec<u64> = (0..n).map(|i| (u.0[i] + v.0[i]) % t).collect();
            assert_eq!(bfv.decrypt_slots(&sk, &sum).unwrap().0, expected);
            let na = bfv.noise_budget(&sk, &a, &pu).unwrap().inf_norm;
            let nb = bfv.noise_budget(&sk, &b, &pv).unwrap().inf_norm;
            let ns = bfv.measure_noise(&sk, &sum).unwrap().inf_norm;
            assert!(ns <= na + nb + 1);
        }
    }
}

#[test]
fn plaintext_multiplication() {
    for (bfv, mut rng) in [tiny(), toy()] {
        let n = bfv.n();
        let t = bfv.context().params().t;
        let sk = SecretKey::generate(bfv.context(), KeyOwner::Client, &mut rng);
        let u = random_slots(&mut rng, n, t);
        let ct = bfv.encrypt_slots(&sk, &u, &mut rng).unwrap();
        let ones = bfv.encode(&SlotVector(vec![1; n])).unwrap();
        assert_eq!(bfv.decrypt_slots(&sk, &bfv.mul_plain(&ct, &ones).unwrap()).unwrap(), u);
        let zeros = bfv.encode(&SlotVector::zeros(n)).unwrap();
        assert_eq!(
            bfv.decrypt_slots(&sk, &bfv.mul_plain(&ct, &zeros).unwrap()).unwrap(),
            SlotVector::zeros(n)
        );
        for _ in 0..20 {
            let w = random_slots(&mut rng, n, t);
            let prod = bfv.mul_plain(&ct, &bfv.encode(&w).unwrap()).unwrap();
            let expected: Vec<u64> = (0..n).map(|i| u.0[i] * w.0[i] % t).collect();
            assert_eq!(bfv.decrypt_slots(&sk, &prod).unwrap().0, expected);
            let plus = bfv.add_plain(&ct, &bfv.encode(&w).unwrap()).unwrap();
            let expected: Vec<u64> = (0..n).map(|i| (u.0[i] + w.0[i]) % t).collect();
            assert_eq!(bfv.decrypt_slots(&sk, &plus).unwrap().0, expected);
        }
    }
}

#[test]
fn budget_shrinks_with_mult_and_add() {
    let (bfv, mut rng) = toy();
    let n = bfv.n();
    let t = bfv.context().params().t;
    let sk = SecretKey::generate(bfv.context(), KeyOwner::Client, &mut rng);
    let mut expected = random_slots(&mut rng, n, t);
    let mut ct = bfv.encrypt_slots(&sk, &expected, &mut rng).unwrap();
    let mut last = bfv.measure_noise(&sk, &ct).unwrap().bits;
    for c in [3u64, 5, 7, 2, 9] {
        let other = random_slots(&mut rng, n, t);
        let w = bfv.encode(&SlotVector(vec![c; n])).unwrap();
        let fresh = bfv.encrypt_slots(&sk, &other, &mut rng).unwrap();
        ct = bfv.add(&bfv.mul_plain(&ct, &w).unwrap(), &fresh).unwrap();
        for i in 0..n {
            expected.0[i] = (expected.0[i] * c + other.0[i]) % t;
        }
        let now = bfv.noise_budget(&sk, &ct, &bfv.encode(&expected).unwrap()).unwrap().bits;
        assert!(now < last, "{now} !< {last}");
        assert_eq!(bfv.decrypt_slots(&sk, &ct).unwrap(), expected);
        last = now;
    }
}

#[test]
fn overflowed_budget_breaks_decryption() {
    let (bfv, mut rng) = toy();
    let n = bfv.n();
    let t = bfv.context().params().t;
    let sk = SecretKey::generate(bfv.context(), KeyOwner::Client, &mut rng);
    let u = random_slots(&mut rng, n, t);
    let mut expected = u.clone();
    let mut ct = bfv.encrypt_slots(&sk, &u, &mut rng).unwrap();
    let mut broke = false;
    for _ in 0..8 {
        let w = random_slots(&mut rng, n, t);
        ct = bfv.mul_plain(&ct, &bfv.encode(&w).unwrap()).unwrap();
        for i in 0..n {
            expected.0[i] = expected.0[i] * w.0[i] % t;
        }
        let pt = bfv.encode(&expected).unwrap();
        let budget = bfv.noise_budget(&sk, &ct, &pt).unwrap();
        let decrypted = bfv.decrypt_slots(&sk, &ct).unwrap();
        if budget.bits > 0.0 {
            assert_eq!(decrypted, expected);
        } else {
            assert_ne!(decrypted, expected);
            broke = true;
            break;
        }
    }
    assert!(broke, "noise never overflowed");
}

#[test]
fn rotations_match_row_oracle() {
    for (bfv, mut rng) in [tiny(), toy()] {
        let n = bfv.n();
        let t = bfv.context().params().t;
        let half = (n / 2) as i64;
        let ctx = bfv.context().clone();
        let sk = SecretKey::generate(&ctx, KeyOwner::Client, &mut rng);
        let log = GaloisKeys::generate(&ctx, &sk, KeyMode::LogKeys, None, 1 << 20, &mut rng).unwrap();
        let steps: Vec<i64> = vec![1, 3, -1, -3, half - 1, 2];
        let both: Vec<i64> = steps.iter().flat_map(|&k| [k, -k]).collect();
        let all = GaloisKeys::generate(&ctx, &sk, KeyMode::AllKeys, Some(&both), 1 << 20, &mut rng).unwrap();
        let pattern = SlotVector((0..n as u64).map(|i| i % half as u64).collect());
        let ct = bfv.encrypt_slots(&sk, &pattern, &mut rng).unwrap();
        let r3 = bfv.decrypt_slots(&sk, &bfv.rotate(&ct, 3, &log).unwrap()).unwrap();
        if half > 5 {
            assert_eq!(&r3.0[..3], &[3, 4, 5]);
            assert_eq!(r3.0[half as usize - 1], 2);
        }
        assert_eq!(r3, rotate_rows(&pattern, 3));
        assert_eq!(bfv.decrypt_slots(&sk, &bfv.rotate(&ct, 0, &log).unwrap()).unwrap(), pattern);
        for keys in [&log, &all] {
            for &k in &steps {
                let v = random_slots(&mut rng, n, t);
                let ct = bfv.encrypt_slots(&sk, &v, &mut rng).unwrap();
                let r = bfv.rotate(&ct, k, keys).unwrap();
                assert_eq!(bfv.decrypt_slots(&sk, &r).unwrap(), rotate_rows(&v, k));
                let back = bfv.rotate(&r, -k, keys).unwrap();
                assert_eq!(bfv.decrypt_slots(&sk, &back).unwrap(), v);
            }
        }
        let swapped = bfv.decrypt_slots(&sk, &bfv.swap_rows(&ct, &log).unwrap()).unwrap();
        assert_eq!(&swapped.0[..n / 2], &pattern.0[n / 2..]);
    }
}

#[test]
fn key_sets_and_missing_keys() {
    let (bfv, mut rng) = toy();
    let ctx = bfv.context().clone();
    let sk = SecretKey::generate(&ctx, KeyOwner::Client, &mut rng);
    let log = GaloisKeys::generate(&ctx, &sk, KeyMode::LogKeys, None, 1 << 30, &mut rng).unwrap();
    // log2(n/2) power-of-two elements plus the row swap
    assert_eq!(log.len(), 10 + 1);
    assert_eq!(bfv.rotation_cost(7, &log), 3);
    let all = GaloisKeys::generate(&ctx, &sk, KeyMode::AllKeys, Some(&[5]), 1 << 30, &mut rng).unwrap();
    assert_eq!(all.len(), 2);
    assert_eq!(bfv.rotation_cost(5, &all), 1);
    let ct = bfv.encrypt_slots(&sk, &SlotVector::zeros(2048), &mut rng).unwrap();
    match bfv.rotate(&ct, 6, &all) {
        Err(Error::MissingGaloisKey { element }) => {
            assert_eq!(element, triad::bfv::galois_element_for_step(2048, 6))
        }
        other => panic!("expected a missing-key error, got {other:?}"),
    }
}

#[test]
fn reencryption_correctness_and_noise_bound() {
    let (bfv, mut rng) = toy();
    let ctx = bfv.context().clone();
    let params = *ctx.params();
    let sc = SecretKey::generate(&ctx, KeyOwner::Client, &mut rng);
    let sp = SecretKey::generate(&ctx, KeyOwner::Proxy, &mut rng);
    let w = 1u64 << 20;
    let rk = ReEncryptionKey::generate(&ctx, &sc, &sp, w, &mut rng).unwrap();
    assert_eq!(rk.digits(), digit_count(params.q, w));
    let bound = rk.digits() as f64 * w as f64 * params.error_bound() as f64 * params.n as f64 / 2.0;
    for _ in 0..100 {
        let pt = bfv.encode(&random_slots(&mut rng, 2048, params.t)).unwrap();
        let ct = bfv.encrypt(&sc, &pt, &mut rng).unwrap();
        let before = bfv.noise_budget(&sc, &ct, &pt).unwrap().inf_norm;
        let moved = bfv.reencrypt(&ct, &rk).unwrap();
        assert_eq!(moved.owner(), KeyOwner::Proxy);
        assert_eq!(bfv.decrypt(&sp, &moved).unwrap(), pt);
        let after = bfv.noise_budget(&sp, &moved, &pt).unwrap().inf_norm;
        assert!((after.abs_diff(before)) as f64 <= bound);
        assert!(after as f64 <= before as f64 + bound);
    }
    let proxy_ct = bfv.encrypt_slots(&sp, &SlotVector::zeros(2048), &mut rng).unwrap();
    assert!(matches!(bfv.reencrypt(&proxy_ct, &rk), Err(Error::KeyOwner { .. })));
    assert!(ReEncryptionKey::generate(&ctx, &sp, &sc, w, &mut rng).is_err());
}

#[test]
fn degenerate_single_digit_base() {
    let (bfv, mut rng) = tiny();
    let ctx = bfv.context().clone();
    let q = ctx.params().q;
    let sc = SecretKey::generate(&ctx, KeyOwner::Client, &mut rng);
    let sp = SecretKey::generate(&ctx, KeyOwner::Proxy, &mut rng);
    let rk = ReEncryptionKey::generate(&ctx, &sc, &sp, q, &mut rng).unwrap();
    assert_eq!(rk.digits(), 1);
}
