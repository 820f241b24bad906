//! Deterministic fixtures shared by the benchmarks.

use divrank_core::{CandidateSet, InterestProfile, ItemRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` Gaussian vectors projected onto the unit sphere in `d` dimensions.
pub fn unit_embeddings(n: usize, d: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
            let s = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / s).collect()
        })
        .collect()
}

pub fn gaussian(d: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn candidates(n: usize, d: usize, rng: &mut impl Rng) -> CandidateSet {
    let items = unit_embeddings(n, d, rng)
        .into_iter()
        .enumerate()
        .map(|(i, e)| ItemRecord::new(format!("i{i}"), e).with_score(rng.random_range(0.01..0.99)))
        .collect();
    CandidateSet {
        user_id: "u".into(),
        items,
    }
}

pub fn profile(d: usize, rng: &mut impl Rng) -> InterestProfile {
    InterestProfile {
        user_id: "u".into(),
        h_macro: gaussian(d, rng),
        h_micro: gaussian(d, rng),
        ..Default::default()
    }
}
