//! Deterministic seeded instance generation.
//!
//! A splitmix64 stream drives everything, so a given seed always produces
//! the same model (and therefore byte-identical model files).

use crate::bnn::{BnnModel, InputFile, Layer, ModelError, FORMAT_VERSION};
use crate::rat::Rat;
use num_traits::Zero;

/// splitmix64: tiny, seedable, and good enough for instance generation.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    /// Uniform integer in [0, n) via rejection sampling (no modulo bias).
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let u = self.next_u64();
            if u < zone {
                return u % n;
            }
        }
    }

    /// Bernoulli draw with exact rational probability.
    pub fn chance(&mut self, p: &Rat) -> bool {
        if *p <= Rat::zero() {
            return false;
        }
        if *p >= Rat::from_integer(1) {
            return true;
        }
        // u < p * 2^64, compared in u128 integer arithmetic.
        let num = *p.numer() as u128;
        let den = *p.denom() as u128;
        let threshold = (num << 64) / den;
        (self.next_u64() as u128) < threshold
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GenError {
    #[error("dims must list input width plus at least two layers")]
    BadDims,
    #[error("density must be in [0, 1]")]
    BadDensity,
    #[error("bias range is empty")]
    EmptyBiasRange,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Generates a ternary-weight model: each weight is 0 with probability
/// 1 − density, otherwise ±1 equiprobably; biases uniform in
/// [bias_lo, bias_hi]. `dims` is n⁰, n¹, …, n^{L+1}.
pub fn gen_model(
    dims: &[usize],
    q: u32,
    density: &Rat,
    bias_lo: i64,
    bias_hi: i64,
    seed: u64,
) -> Result<BnnModel, GenError> {
    if dims.len() < 3 || dims.iter().any(|&d| d == 0) {
        return Err(GenError::BadDims);
    }
    if *density < Rat::zero() || *density > Rat::from_integer(1) {
        return Err(GenError::BadDensity);
    }
    if bias_lo > bias_hi {
        return Err(GenError::EmptyBiasRange);
    }
    let mut rng = SplitMix64::new(seed);
    let span = (bias_hi - bias_lo + 1) as u64;
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for w in dims.windows(2) {
        let (n_prev, n_cur) = (w[0], w[1]);
        let mut weights = Vec::with_capacity(n_cur);
        for _ in 0..n_cur {
            let mut row = Vec::with_capacity(n_prev);
            for _ in 0..n_prev {
                if rng.chance(density) {
                    row.push(if rng.next_u64() & 1 == 1 { 1i8 } else { -1 });
                } else {
                    row.push(0);
                }
            }
            weights.push(row);
        }
        let biases = (0..n_cur)
            .map(|_| bias_lo + rng.below(span) as i64)
            .collect();
        layers.push(Layer { weights, biases });
    }
    Ok(BnnModel::new(q, layers)?)
}

/// Picks a uniform anchor in the quantized box and labels it with the
/// model's own prediction, so the anchor is always correctly classified.
pub fn gen_input(model: &BnnModel, seed: u64) -> InputFile {
    let mut rng = SplitMix64::new(seed);
    let y: Vec<i64> = (0..model.num_inputs())
        .map(|_| rng.below(model.q as u64 + 1) as i64)
        .collect();
    let prop = model.propagate(&y).expect("generated anchor is in range");
    InputFile {
        format_version: FORMAT_VERSION,
        y,
        true_class: prop.predicted,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::rat;

    #[test]
    fn deterministic() {
        let d = rat(1, 2);
        let a = gen_model(&[3, 4, 2], 2, &d, -2, 2, 42).unwrap();
        let b = gen_model(&[3, 4, 2], 2, &d, -2, 2, 42).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        let c = gen_model(&[3, 4, 2], 2, &d, -2, 2, 43).unwrap();
        assert_ne!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&c).unwrap()
        );
    }

    #[test]
    fn density_extremes() {
        let zero = gen_model(&[3, 3, 2], 1, &Rat::zero(), 0, 0, 7).unwrap();
        assert!(zero
            .layers
            .iter()
            .all(|l| l.weights.iter().all(|r| r.iter().all(|&w| w == 0))));
        let one = gen_model(&[3, 3, 2], 1, &Rat::from_integer(1), 0, 0, 7).unwrap();
        assert!(one
            .layers
            .iter()
            .all(|l| l.weights.iter().all(|r| r.iter().all(|&w| w != 0))));
    }

    #[test]
    fn bias_range_respected() {
        let m = gen_model(&[2, 5, 5, 3], 1, &rat(1, 2), -3, 3, 99).unwrap();
        for l in &m.layers {
            for &b in &l.biases {
                assert!((-3..=3).contains(&b));
            }
        }
    }

    #[test]
    fn input_is_self_consistent() {
        let m = gen_model(&[3, 4, 3], 2, &rat(2, 3), -1, 1, 5).unwrap();
        let inp = gen_input(&m, 11);
        let p = m.propagate(&inp.y).unwrap();
        assert_eq!(p.predicted, inp.true_class);
    }
}
