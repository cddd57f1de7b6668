use proptest::prelude::*;
use triad::ring::{base_decompose, digit_count, BatchEncoder, PolyRing, Polynomial, SlotVector, PRESET_Q, PRESET_T};

/// Negacyclic product over u128, independent of the library's reduction.
fn negacyclic(a: &[u64], b: &[u64], q: u64) -> Vec<u64> {
    let n = a.len();
    let q = q as u128;
    let mut out = vec![0u128; n];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            let p = x as u128 * y as u128 % q;
            let k = (i + j) % n;
            out[k] = if i + j < n { (out[k] + p) % q } else { (out[k] + q - p) % q };
        }
    }
    out.into_iter().map(|v| v as u64).collect()
}

fn poly(c: Vec<u64>, q: u64) -> Polynomial {
    Polynomial::from_coeffs(c, q).unwrap()
}

fn coeffs(n: usize, q: u64) -> impl Strategy<Value = Vec<u64>> {
    proptest::collection::vec(0..q, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn ntt_product_matches_schoolbook(a in coeffs(16, PRESET_Q), b in coeffs(16, PRESET_Q)) {
        let ring = PolyRing::with_ntt(16, PRESET_Q).unwrap();
        let got = ring.mul(&poly(a.clone(), PRESET_Q), &poly(b.clone(), PRESET_Q)).unwrap();
        prop_assert_eq!(got.coeffs(), &negacyclic(&a, &b, PRESET_Q)[..]);
    }

    #[test]
    fn ntt_roundtrip(a in coeffs(64, PRESET_Q)) {
        let ring = PolyRing::with_ntt(64, PRESET_Q).unwrap();
        let p = poly(a, PRESET_Q);
        let back = ring.ntt_inverse(&ring.ntt_forward(&p).unwrap()).unwrap();
        prop_assert_eq!(back.coeffs(), p.coeffs());
    }

    #[test]
    fn automorphism_is_multiplicative(a in coeffs(16, PRESET_T), b in coeffs(16, PRESET_T), k in 0u64..16) {
        let ring = PolyRing::with_ntt(16, PRESET_T).unwrap();
        let g = 2 * k + 1;
        let (pa, pb) = (poly(a, PRESET_T), poly(b, PRESET_T));
        let lhs = ring.automorphism(&ring.mul(&pa, &pb).unwrap(), g).unwrap();
        let rhs = ring.mul(&ring.automorphism(&pa, g).unwrap(), &ring.automorphism(&pb, g).unwrap()).unwrap();
        prop_assert_eq!(lhs.coeffs(), rhs.coeffs());
    }

    #[test]
    fn decomposition_recomposes(a in coeffs(8, PRESET_Q), log_w in 1u32..61) {
        let w = 1u64 << log_w;
        let digits = base_decompose(&poly(a.clone(), PRESET_Q), w).unwrap();
        prop_assert_eq!(digits.len(), digit_count(PRESET_Q, w));
        for (j, &c) in a.iter().enumerate() {
            let mut acc = 0u128;
            for d in digits.iter().rev() {
                prop_assert!(d.coeffs()[j] < w);
                acc = acc * w as u128 + d.coeffs()[j] as u128;
            }
            prop_assert_eq!(acc, c as u128);
        }
    }

    #[test]
    fn batching_is_slotwise(a in coeffs(8, PRESET_T), b in coeffs(8, PRESET_T)) {
        let enc = BatchEncoder::new(PolyRing::with_ntt(8, PRESET_T).unwrap()).unwrap();
        let (sa, sb) = (SlotVector(a.clone()), SlotVector(b.clone()));
        let (pa, pb) = (enc.encode(&sa).unwrap(), enc.encode(&sb).unwrap());
        prop_assert_eq!(&enc.decode(&pa).unwrap(), &sa);
        let prod = enc.decode(&enc.ring().mul(&pa, &pb).unwrap()).unwrap();
        let want: Vec<u64> = a.iter().zip(&b).map(|(x, y)| x * y % PRESET_T).collect();
        prop_assert_eq!(prod.0, want);
        let sum = enc.decode(&enc.ring().add(&pa, &pb).unwrap()).unwrap();
        let want: Vec<u64> = a.iter().zip(&b).map(|(x, y)| (x + y) % PRESET_T).collect();
        prop_assert_eq!(sum.0, want);
    }
}
