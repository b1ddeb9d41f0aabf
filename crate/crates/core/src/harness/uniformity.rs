//! Empirical checks that keys look uniform.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::HarnessError;
use crate::gf2::BitString;

pub const MIN_SAMPLES: usize = 1000;
pub const MAX_CHI_SQUARE_BITS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityReport {
    pub samples: usize,
    pub key_bits: usize,
    /// Empirical probability that two distinct samples coincide.
    pub collision_estimate: f64,
    /// The same probability under the uniform distribution.
    pub collision_uniform: f64,
    pub chi_square: f64,
    pub degrees_of_freedom: u64,
    pub p_value: f64,
}

/// Chi-square statistic and upper-tail p-value of `counts` against equal
/// cell probabilities.
pub fn chi_square_uniform(counts: &[u64]) -> (f64, f64) {
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).expect("at least two cells");
    (stat, dist.sf(stat))
}

pub fn estimate_uniformity(keys: &[BitString]) -> Result<UniformityReport, HarnessError> {
    if keys.len() < MIN_SAMPLES {
        return Err(HarnessError::Samples(format!("{} samples, need at least {MIN_SAMPLES}", keys.len())));
    }
    let bits = keys[0].len();
    if keys.iter().any(|k| k.len() != bits) {
        return Err(HarnessError::Samples("keys differ in length".into()));
    }
    if bits == 0 || bits > MAX_CHI_SQUARE_BITS {
        return Err(HarnessError::Samples(format!("{bits}-bit keys; chi-square needs 1..={MAX_CHI_SQUARE_BITS}")));
    }
    let mut counts = vec![0u64; 1 << bits];
    for k in keys {
        counts[k.to_u64() as usize] += 1;
    }
    let n = keys.len() as f64;
    let pairs: f64 = counts.iter().map(|&c| c as f64 * (c as f64 - 1.0)).sum();
    let (chi_square, p_value) = chi_square_uniform(&counts);
    Ok(UniformityReport {
        samples: keys.len(),
        key_bits: bits,
        collision_estimate: pairs / (n * (n - 1.0)),
        collision_uniform: 1.0 / counts.len() as f64,
        chi_square,
        degrees_of_freedom: counts.len() as u64 - 1,
        p_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn uniform_source_passes_calibration() {
        let meta = 300;
        let passed = (0..meta)
            .filter(|&m| {
                let mut rng = stream_rng(m, 11);
                let keys: Vec<BitString> = (0..2000).map(|_| BitString::random(&mut rng, 8)).collect();
                estimate_uniformity(&keys).unwrap().p_value > 1e-3
            })
            .count();
        assert!(passed * 100 >= meta as usize * 99, "{passed} of {meta}");
    }

    #[test]
    fn constant_source_fails() {
        let keys = vec![BitString::from_u64(0x5a, 8); 1000];
        let r = estimate_uniformity(&keys).unwrap();
        assert!(r.p_value < 1e-9);
        assert_eq!(r.collision_estimate, 1.0);
    }

    #[test]
    fn collision_estimate_of_two_values() {
        let keys: Vec<BitString> = (0..1000).map(|i| BitString::from_u64(i % 2, 1)).collect();
        let r = estimate_uniformity(&keys).unwrap();
        // 2 * C(500, 2) / C(1000, 2)
        assert!((r.collision_estimate - 499.0 / 999.0).abs() < 1e-12);
        assert_eq!(r.chi_square, 0.0);
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn input_checks() {
        assert!(estimate_uniformity(&vec![BitString::zeros(8); 999]).is_err());
        assert!(estimate_uniformity(&vec![BitString::zeros(17); 1000]).is_err());
    }

    #[test]
    fn chi_square_matches_closed_form() {
        // two cells, dof 1: sf(x) = erfc(sqrt(x / 2))
        let (stat, p) = chi_square_uniform(&[60, 40]);
        assert!((stat - 4.0).abs() < 1e-12);
        assert!((p - statrs::function::erf::erfc(2f64.sqrt())).abs() < 1e-10);
    }
}
