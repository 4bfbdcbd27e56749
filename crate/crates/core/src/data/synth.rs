//! Planted low-rank rating generator used where public data is unavailable.
//!
//! Each user and item gets a latent vector; the affinity of a pair is their dot
//! product plus item and user offsets and Gaussian noise. Which items a user rates
//! follows a Zipf popularity law, so the sparsity pattern looks like real catalogues.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{IdMap, RawDataset};
use crate::error::{Error, Result};

/// Rating scale of the generated file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    /// Integer 1..=5 stars, binarize at 3.
    Stars,
    /// Integer 0..=100, binarize at 50.
    Hundred,
    /// Continuous -10..10, binarize at 0.
    Continuous,
}

impl Scale {
    pub fn default_threshold(self) -> f64 {
        match self {
            Scale::Stars => 3.0,
            Scale::Hundred => 50.0,
            Scale::Continuous => 0.0,
        }
    }

    fn rate(self, affinity: f64) -> f64 {
        match self {
            Scale::Stars => (3.5 + affinity).round().clamp(1.0, 5.0),
            Scale::Hundred => (50.5 + 15.0 * affinity).round().clamp(0.0, 100.0),
            Scale::Continuous => ((4.0 * affinity).clamp(-10.0, 10.0) * 100.0).round() / 100.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub users: usize,
    pub items: usize,
    /// Median number of ratings per user.
    pub ratings_per_user: usize,
    pub min_ratings: usize,
    pub rank: usize,
    pub noise: f64,
    pub item_bias: f64,
    pub user_bias: f64,
    /// Zipf exponent of item popularity.
    pub popularity_skew: f64,
    pub scale: Scale,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            users: 400,
            items: 60,
            ratings_per_user: 20,
            min_ratings: 4,
            rank: 3,
            noise: 0.3,
            item_bias: 0.5,
            user_bias: 0.3,
            popularity_skew: 0.8,
            scale: Scale::Stars,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Same user/item/rating counts as the Yahoo! Music benchmark, 0-100 scale.
    pub fn yahoo_shape(seed: u64) -> Self {
        SynthConfig {
            users: 15_397,
            items: 1000,
            ratings_per_user: 18,
            min_ratings: 10,
            scale: Scale::Hundred,
            seed,
            ..Default::default()
        }
    }

    /// Same shape as the Flixter benchmark.
    pub fn flixter_shape(seed: u64) -> Self {
        SynthConfig {
            users: 35_657,
            items: 10_247,
            ratings_per_user: 150,
            min_ratings: 15,
            scale: Scale::Stars,
            seed,
            ..Default::default()
        }
    }
}

/// Generates a dataset; identical configs give identical output.
pub fn generate(config: &SynthConfig) -> RawDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let k = config.rank.max(1);
    let item_scale = 1.0 / (k as f64).sqrt();
    let user_vecs: Vec<Vec<f64>> = (0..config.users)
        .map(|_| (0..k).map(|_| unit.sample(&mut rng)).collect())
        .collect();
    let item_vecs: Vec<Vec<f64>> = (0..config.items)
        .map(|_| (0..k).map(|_| unit.sample(&mut rng) * item_scale * 1.5).collect())
        .collect();
    let item_off: Vec<f64> = (0..config.items)
        .map(|_| unit.sample(&mut rng) * config.item_bias)
        .collect();
    let user_off: Vec<f64> = (0..config.users)
        .map(|_| unit.sample(&mut rng) * config.user_bias)
        .collect();

    // popularity ranks are a random permutation so that item index carries no signal
    let mut ranks: Vec<usize> = (0..config.items).collect();
    for i in (1..ranks.len()).rev() {
        let j = rng.random_range(0..=i);
        ranks.swap(i, j);
    }
    let weights: Vec<f64> = ranks
        .iter()
        .map(|&r| 1.0 / ((r + 1) as f64).powf(config.popularity_skew))
        .collect();

    let count_dist = Normal::new((config.ratings_per_user.max(1) as f64).ln(), 0.6).unwrap();
    let mut entries = Vec::new();
    let mut keys: Vec<(f64, usize)> = Vec::with_capacity(config.items);
    for u in 0..config.users {
        let n = (count_dist.sample(&mut rng).exp().round() as usize)
            .max(config.min_ratings)
            .min(config.items);
        // weighted sampling without replacement (exponential keys)
        keys.clear();
        for (i, &w) in weights.iter().enumerate() {
            let x: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            keys.push((x.ln() / w, i));
        }
        let nth = n.saturating_sub(1).min(keys.len() - 1);
        keys.select_nth_unstable_by(nth, |a, b| {
            b.0.total_cmp(&a.0)
        });
        let mut chosen: Vec<usize> = keys[..n].iter().map(|e| e.1).collect();
        chosen.sort_unstable();
        for i in chosen {
            let aff: f64 = user_vecs[u]
                .iter()
                .zip(&item_vecs[i])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                + item_off[i]
                + user_off[u]
                + unit.sample(&mut rng) * config.noise;
            entries.push((u, i, config.scale.rate(aff)));
        }
    }
    RawDataset {
        user_ids: IdMap::identity(config.users),
        item_ids: IdMap::identity(config.items),
        entries,
    }
}

/// Writes `user\titem\trating` lines, loadable with the tab separator.
pub fn write_tsv(raw: &RawDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(raw.entries.len() * 16);
    for &(u, i, r) in &raw.entries {
        writeln!(
            out,
            "{}\t{}\t{}",
            raw.user_ids.original(u).unwrap(),
            raw.item_ids.original(i).unwrap(),
            r
        )
        .unwrap();
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_range() {
        let cfg = SynthConfig {
            seed: 4,
            ..Default::default()
        };
        let a = generate(&cfg);
        assert_eq!(a, generate(&cfg));
        assert!(a.entries.iter().all(|&(_, _, r)| (1.0..=5.0).contains(&r)));
        let data = a.binarize(3.0);
        let likes = data.triples().iter().filter(|t| t.value.value() > 0.0).count();
        let frac = likes as f64 / data.len() as f64;
        assert!(frac > 0.2 && frac < 0.8, "like rate {frac}");
        for u in 0..cfg.users {
            assert!(data.user_ratings(u).len() >= cfg.min_ratings);
        }
    }

    #[test]
    fn popularity_is_skewed() {
        let data = generate(&SynthConfig {
            users: 500,
            items: 80,
            popularity_skew: 1.0,
            ..Default::default()
        })
        .binarize(3.0);
        let mut freq: Vec<usize> = (0..80).map(|i| data.item_frequency(i)).collect();
        freq.sort_unstable();
        assert!(freq[79] > 3 * freq[10].max(1));
    }
}
