//! Seeded sampling of uniform, discrete Gaussian and ternary polynomials.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use super::poly::{PolyRing, Polynomial};

pub type Seed = [u8; 32];

/// Deterministic generator used everywhere randomness is consumed.
pub fn rng_from_seed(seed: Seed) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(seed)
}

/// Derives an independent child seed for a labelled purpose.
pub fn derive_seed(parent: &Seed, label: &str) -> Seed {
    let mut h = Sha256::new();
    h.update(b"triad/seed");
    h.update(parent);
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    h.finalize().into()
}

pub fn seed_from_u64(x: u64) -> Seed {
    let mut s = [0u8; 32];
    s[..8].copy_from_slice(&x.to_le_bytes());
    derive_seed(&s, "u64")
}

/// Cumulative-distribution-table sampler for the centered discrete Gaussian
/// with parameter `sigma`, truncated at `ceil(6 sigma)`.
#[derive(Clone, Debug)]
pub struct GaussianSampler {
    bound: i64,
    // thresholds over u63 for |x| = 0, 1, ..., bound
    cdt: Vec<u64>,
}

impl GaussianSampler {
    pub fn new(sigma: f64) -> Self {
        let bound = (6.0 * sigma).ceil() as i64;
        let weights: Vec<f64> = (0..=bound)
            .map(|x| {
                let rho = (-((x * x) as f64) / (2.0 * sigma * sigma)).exp();
                if x == 0 {
                    rho
                } else {
                    2.0 * rho
                }
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let scale = (1u64 << 63) as f64;
        let mut acc = 0.0;
        let mut cdt: Vec<u64> = weights
            .iter()
            .map(|w| {
                acc += w / total;
                (acc * scale).min(scale - 1.0) as u64
            })
            .collect();
        *cdt.last_mut().unwrap() = u64::MAX >> 1;
        GaussianSampler { bound, cdt }
    }

    pub fn bound(&self) -> i64 {
        self.bound
    }

    pub fn sample<R: RngCore>(&self, rng: &mut R) -> i64 {
        let u = rng.next_u64() >> 1;
        let mag = self.cdt.partition_point(|&c| c < u) as i64;
        let mag = mag.min(self.bound);
        if mag != 0 && rng.gen::<bool>() {
            -mag
        } else {
            mag
        }
    }
}

pub fn sample_uniform<R: RngCore>(ring: &PolyRing, rng: &mut R) -> Polynomial {
    let q = ring.modulus().value();
    let coeffs = (0..ring.degree()).map(|_| rng.gen_range(0..q)).collect();
    Polynomial::from_coeffs(coeffs, q).expect("uniform samples are reduced")
}

pub fn sample_gaussian<R: RngCore>(ring: &PolyRing, sampler: &GaussianSampler, rng: &mut R) -> Polynomial {
    let values: Vec<i64> = (0..ring.degree()).map(|_| sampler.sample(rng)).collect();
    ring.from_signed(&values)
}

pub fn sample_ternary<R: RngCore>(ring: &PolyRing, rng: &mut R) -> Polynomial {
    let values: Vec<i64> = (0..ring.degree()).map(|_| rng.gen_range(-1i64..=1)).collect();
    ring.from_signed(&values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_respects_truncation() {
        let ring = PolyRing::new(2048, 1152921464242716673).unwrap();
        let sampler = GaussianSampler::new(3.2);
        let mut rng = rng_from_seed(seed_from_u64(1));
        let bound = (6.0f64 * 3.2).ceil() as u64;
        for _ in 0..20 {
            let p = sample_gaussian(&ring, &sampler, &mut rng);
            assert!(p.inf_norm() <= bound);
        }
    }

    #[test]
    fn gaussian_moments() {
        let sampler = GaussianSampler::new(3.2);
        let mut rng = rng_from_seed(seed_from_u64(9));
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| sampler.sample(&mut rng) as f64).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var.sqrt() - 3.2).abs() < 0.05, "std {}", var.sqrt());
    }

    #[test]
    fn uniform_in_range_and_deterministic() {
        let ring = PolyRing::new(256, 7681).unwrap();
        let a = sample_uniform(&ring, &mut rng_from_seed(seed_from_u64(5)));
        let b = sample_uniform(&ring, &mut rng_from_seed(seed_from_u64(5)));
        assert_eq!(a, b);
        assert!(a.coeffs().iter().all(|&c| c < 7681));
        let c = sample_uniform(&ring, &mut rng_from_seed(seed_from_u64(6)));
        assert_ne!(a, c);
    }

    #[test]
    fn ternary_values() {
        let ring = PolyRing::new(256, 7681).unwrap();
        let s = sample_ternary(&ring, &mut rng_from_seed(seed_from_u64(2)));
        assert!(s.coeffs().iter().all(|&c| c == 0 || c == 1 || c == 7680));
        assert!(s.inf_norm() <= 1);
    }

    #[test]
    fn derived_seeds_differ() {
        let s = seed_from_u64(1);
        assert_ne!(derive_seed(&s, "a"), derive_seed(&s, "b"));
        assert_eq!(derive_seed(&s, "a"), derive_seed(&s, "a"));
    }
}
