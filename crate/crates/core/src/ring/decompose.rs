use crate::error::{Error, Result};

use super::poly::{Domain, Polynomial};

/// Number of base-`w` digits needed for residues in `[0, q)`.
///
/// Equals `floor(log_w q) + 1` for every base except `w = q` exactly, where
/// residues (all below `q`) need a single digit.
pub fn digit_count(q: u64, w: u64) -> usize {
    assert!(w >= 2);
    let mut max = q - 1;
    let mut l = 1;
    while max >= w {
        max /= w;
        l += 1;
    }
    l
}

/// Splits every coefficient into `digit_count(q, w)` digits in `[0, w)`,
/// least significant first.
pub fn base_decompose(p: &Polynomial, w: u64) -> Result<Vec<Polynomial>> {
    if w < 2 {
        return Err(Error::Params(format!("decomposition base {w} < 2")));
    }
    if p.domain() != Domain::Coefficient {
        return Err(Error::Mismatch("decomposition expects the coefficient domain".into()));
    }
    let q = p.modulus();
    let l = digit_count(q, w);
    let n = p.degree();
    let mut digits = vec![vec![0u64; n]; l];
    let pow2 = w.is_power_of_two();
    let shift = w.trailing_zeros();
    for (j, &c) in p.coeffs().iter().enumerate() {
        let mut c = c;
        for d in digits.iter_mut() {
            if pow2 {
                d[j] = c & (w - 1);
                c >>= shift;
            } else {
                d[j] = c % w;
                c /= w;
            }
            if c == 0 {
                break;
            }
        }
    }
    Ok(digits
        .into_iter()
        .map(|d| Polynomial::from_raw(d, q, Domain::Coefficient))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn digit_counts() {
        assert_eq!(digit_count(97, 2), 7);
        assert_eq!(digit_count(97, 97), 1);
        assert_eq!(digit_count(97, 1 << 8), 1);
        assert_eq!(digit_count(97, 10), 2);
        let q = 1152921464242716673u64;
        assert_eq!(digit_count(q, 1 << 20), 3);
        assert_eq!(digit_count(q, 1 << 30), 2);
        assert_eq!(digit_count(q, q), 1);
    }

    #[test]
    fn zero_has_zero_digits() {
        let p = Polynomial::zero(8, 97);
        for d in base_decompose(&p, 4).unwrap() {
            assert!(d.is_zero());
        }
    }

    #[test]
    fn base_q_is_single_digit() {
        let p = Polynomial::from_coeffs(vec![3, 96, 0, 50, 1, 2, 3, 4], 97).unwrap();
        let d = base_decompose(&p, 97).unwrap();
        assert_eq!(d, vec![p]);
    }

    #[test]
    fn recomposition_over_integers() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let q = 1152921464242716673u64;
        for w in [2u64, 3, 1 << 8, 1000, 1 << 20] {
            let coeffs: Vec<u64> = (0..64).map(|_| rng.gen_range(0..q)).collect();
            let p = Polynomial::from_coeffs(coeffs.clone(), q).unwrap();
            let digits = base_decompose(&p, w).unwrap();
            assert_eq!(digits.len(), digit_count(q, w));
            for (j, &c) in coeffs.iter().enumerate() {
                let mut acc: u128 = 0;
                let mut pw: u128 = 1;
                for d in &digits {
                    assert!(d.coeffs()[j] < w);
                    acc += d.coeffs()[j] as u128 * pw;
                    pw *= w as u128;
                }
                assert_eq!(acc, c as u128);
            }
        }
        assert!(base_decompose(&Polynomial::zero(8, 97), 1).is_err());
    }
}
