//! Item-based nearest neighbours with Pearson similarity on binarized votes.

use std::sync::Arc;

use rayon::prelude::*;

use crate::data::SparseRatings;
use crate::error::{check_index, Error, Result};
use crate::iam::AnswerList;

/// Catalogues larger than this are refused; the dense matrix would not fit.
pub const MAX_ITEMS: usize = 50_000;

/// Sufficient statistics of one item pair over its co-raters.
#[derive(Debug, Clone, Copy, Default)]
struct PairSums {
    n: u32,
    sx: f64,
    sy: f64,
    sxy: f64,
}

impl PairSums {
    #[inline]
    fn add(&mut self, x: f64, y: f64) {
        self.n += 1;
        self.sx += x;
        self.sy += y;
        self.sxy += x * y;
    }

    /// Values are ±1, so `Σx² = Σy² = n`.
    fn correlation(&self) -> Option<f64> {
        if self.n < 2 {
            return None;
        }
        let n = self.n as f64;
        let vx = n - self.sx * self.sx / n;
        let vy = n - self.sy * self.sy / n;
        if vx <= 1e-12 || vy <= 1e-12 {
            return None;
        }
        let cov = self.sxy - self.sx * self.sy / n;
        Some((cov / (vx * vy).sqrt()).clamp(-1.0, 1.0))
    }
}

/// Pearson correlation of items `i` and `j` over the users who rated both, each
/// side centered on its own co-rated mean. `None` below two co-raters or when
/// either side is constant.
pub fn pearson(data: &SparseRatings, i: usize, j: usize) -> Option<f64> {
    let (a, b) = (data.item_ratings(i), data.item_ratings(j));
    let mut sums = PairSums::default();
    let (mut x, mut y) = (0, 0);
    while x < a.len() && y < b.len() {
        match a[x].0.cmp(&b[y].0) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => {
                sums.add(a[x].1.value(), b[y].1.value());
                x += 1;
                y += 1;
            }
        }
    }
    sums.correlation()
}

/// Dense symmetric similarity table; `NaN` marks an undefined pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemSimilarityMatrix {
    num_items: usize,
    sims: Vec<f64>,
    support: Vec<u32>,
}

impl ItemSimilarityMatrix {
    /// All pairs, accumulated user-wise in `O(Σ_u n_u²)`. Row `i` only fills `j > i`
    /// and the lower triangle is mirrored afterwards.
    pub fn compute(data: &SparseRatings) -> Result<Self> {
        let n = data.num_items();
        if n > MAX_ITEMS {
            return Err(Error::TooManyItems(n, MAX_ITEMS));
        }
        let mut sims = vec![f64::NAN; n * n];
        let mut support = vec![0u32; n * n];
        sims.par_chunks_mut(n.max(1))
            .zip(support.par_chunks_mut(n.max(1)))
            .enumerate()
            .for_each_init(
                || vec![PairSums::default(); n],
                |buf, (i, (sim_row, sup_row))| {
                    let touched: Vec<usize> = {
                        let mut t = Vec::new();
                        for &(u, xi) in data.item_ratings(i) {
                            for &(j, xj) in data.user_ratings(u) {
                                if j > i {
                                    if buf[j].n == 0 {
                                        t.push(j);
                                    }
                                    buf[j].add(xi.value(), xj.value());
                                }
                            }
                        }
                        t
                    };
                    for j in touched {
                        sup_row[j] = buf[j].n;
                        if let Some(r) = buf[j].correlation() {
                            sim_row[j] = r;
                        }
                        buf[j] = PairSums::default();
                    }
                    if data.item_frequency(i) >= 2 && {
                        let s: f64 = data.item_ratings(i).iter().map(|e| e.1.value()).sum();
                        let f = data.item_frequency(i) as f64;
                        f - s * s / f > 1e-12
                    } {
                        sim_row[i] = 1.0;
                    }
                    sup_row[i] = data.item_frequency(i) as u32;
                },
            );
        for i in 0..n {
            for j in (i + 1)..n {
                sims[j * n + i] = sims[i * n + j];
                support[j * n + i] = support[i * n + j];
            }
        }
        Ok(ItemSimilarityMatrix {
            num_items: n,
            sims,
            support,
        })
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let v = self.sims[i * self.num_items + j];
        if v.is_nan() {
            None
        } else {
            Some(v)
        }
    }

    pub fn support(&self, i: usize, j: usize) -> u32 {
        self.support[i * self.num_items + j]
    }

    /// Row-major similarities and supports.
    pub fn raw(&self) -> (&[f64], &[u32]) {
        (&self.sims, &self.support)
    }

    pub fn from_raw(num_items: usize, sims: Vec<f64>, support: Vec<u32>) -> Self {
        assert_eq!(sims.len(), num_items * num_items);
        assert_eq!(support.len(), num_items * num_items);
        ItemSimilarityMatrix {
            num_items,
            sims,
            support,
        }
    }
}

/// Weighted vote of the `k` answered items most similar to `item`
/// (`k = None` uses every neighbour). Ties in similarity go to the lower index.
pub fn itemknn_predict(
    sims: &ItemSimilarityMatrix,
    item_mean: &[f64],
    global_mean: f64,
    answers: &AnswerList,
    item: usize,
    k: Option<usize>,
) -> f64 {
    let mut neighbours: Vec<(f64, usize, f64)> = answers
        .entries()
        .iter()
        .filter(|&&(j, _)| j != item && j < sims.num_items)
        .filter_map(|&(j, v)| sims.get(item, j).map(|s| (s, j, v.value())))
        .collect();
    neighbours.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    if let Some(k) = k {
        neighbours.truncate(k);
    }
    let den: f64 = neighbours.iter().map(|n| n.0.abs()).sum();
    if den > 0.0 {
        neighbours.iter().map(|n| n.0 * n.2).sum::<f64>() / den
    } else if let Some(&m) = item_mean.get(item).filter(|m| !m.is_nan()) {
        m
    } else {
        global_mean
    }
}

/// A fitted ItemKNN predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemKnn {
    pub sims: Arc<ItemSimilarityMatrix>,
    /// Training mean vote per item; `NaN` for unrated items.
    pub item_mean: Vec<f64>,
    pub global_mean: f64,
    pub k: Option<usize>,
}

impl ItemKnn {
    pub fn fit(data: &SparseRatings, k: Option<usize>) -> Result<Self> {
        if k == Some(0) {
            return Err(Error::InvalidHyper("neighbour count must be >= 1".into()));
        }
        let sims = Arc::new(ItemSimilarityMatrix::compute(data)?);
        let item_mean = (0..data.num_items())
            .map(|i| {
                let r = data.item_ratings(i);
                if r.is_empty() {
                    f64::NAN
                } else {
                    r.iter().map(|e| e.1.value()).sum::<f64>() / r.len() as f64
                }
            })
            .collect();
        Ok(ItemKnn {
            sims,
            item_mean,
            global_mean: data.global_mean(),
            k,
        })
    }

    pub fn with_k(&self, k: Option<usize>) -> Self {
        ItemKnn { k, ..self.clone() }
    }

    pub fn predict(&self, answers: &AnswerList, item: usize) -> Result<f64> {
        check_index("item", item, self.sims.num_items)?;
        Ok(itemknn_predict(
            &self.sims,
            &self.item_mean,
            self.global_mean,
            answers,
            item,
            self.k,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{RatingTriple, Vote};
    use proptest::prelude::*;

    fn data_from(cols: &[&[i8]]) -> SparseRatings {
        // cols[item][user]: +1, -1 or 0 for missing
        let mut triples = Vec::new();
        let users = cols[0].len();
        for (i, col) in cols.iter().enumerate() {
            for (u, &v) in col.iter().enumerate() {
                if v != 0 {
                    let vote = if v > 0 { Vote::Like } else { Vote::Dislike };
                    triples.push(RatingTriple {
                        user: u,
                        item: i,
                        raw: v as f64,
                        value: vote,
                    });
                }
            }
        }
        SparseRatings::new(users, cols.len(), triples)
    }

    /// Textbook sample correlation with explicit means.
    fn oracle(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        cov / (vx * vy).sqrt()
    }

    #[test]
    fn pearson_examples() {
        let d = data_from(&[&[1, 1, -1], &[1, -1, -1], &[1, 1, -1], &[-1, -1, 1]]);
        assert!((pearson(&d, 0, 1).unwrap() - 0.5).abs() < 1e-12);
        assert!((oracle(&[1.0, 1.0, -1.0], &[1.0, -1.0, -1.0]) - 0.5).abs() < 1e-12);
        assert!((pearson(&d, 0, 2).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&d, 0, 3).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_undefined_cases() {
        let d = data_from(&[&[1, 1, 0], &[1, 0, 1], &[1, 1, -1], &[1, 1, 1]]);
        assert_eq!(pearson(&d, 0, 1), None); // one co-rater
        assert_eq!(pearson(&d, 2, 3), None); // constant side
    }

    #[test]
    fn matrix_agrees_with_direct_pearson() {
        let d = crate::data::synth::generate(&crate::data::synth::SynthConfig {
            users: 80,
            items: 15,
            ratings_per_user: 8,
            ..Default::default()
        })
        .binarize(3.0);
        let m = ItemSimilarityMatrix::compute(&d).unwrap();
        for i in 0..15 {
            for j in 0..15 {
                if i != j {
                    match (m.get(i, j), pearson(&d, i, j)) {
                        (Some(a), Some(b)) => assert!((a - b).abs() < 1e-12),
                        (a, b) => assert_eq!(a, b),
                    }
                    assert_eq!(m.get(i, j).map(f64::to_bits), m.get(j, i).map(f64::to_bits));
                }
            }
        }
    }

    #[test]
    fn prediction_examples() {
        let d = data_from(&[&[1, 1, -1], &[1, -1, -1], &[1, 1, -1]]);
        let mut knn = ItemKnn::fit(&d, Some(10)).unwrap();
        let sims = Arc::make_mut(&mut knn.sims);
        sims.sims = vec![f64::NAN; 9];
        sims.sims[1] = 0.8;
        sims.sims[3] = 0.8;
        let p = knn.predict(&AnswerList::from_pairs([(1, Vote::Like)]), 0).unwrap();
        assert_eq!(p, 1.0);
        let sims = Arc::make_mut(&mut knn.sims);
        sims.sims[1 * 3 + 2] = 0.5;
        sims.sims[2 * 3 + 1] = 0.5;
        sims.sims[1] = 0.5;
        sims.sims[2] = 0.5;
        let p = knn
            .predict(&AnswerList::from_pairs([(1, Vote::Like), (2, Vote::Dislike)]), 0)
            .unwrap();
        assert_eq!(p, 0.0);
        knn.item_mean[0] = 0.2;
        assert_eq!(knn.predict(&AnswerList::new(), 0).unwrap(), 0.2);
        knn.item_mean[0] = f64::NAN;
        assert_eq!(knn.predict(&AnswerList::new(), 0).unwrap(), knn.global_mean);
    }

    #[test]
    fn catalogue_guard() {
        let d = SparseRatings::new(1, MAX_ITEMS + 1, vec![]);
        assert!(matches!(ItemSimilarityMatrix::compute(&d), Err(Error::TooManyItems(..))));
    }

    proptest! {
        #[test]
        fn binary_inputs_give_bounded_predictions(
            cols in prop::collection::vec(prop::collection::vec(-1i8..=1, 6), 5),
            ans in prop::collection::vec(any::<bool>(), 4),
            k in 1usize..5,
        ) {
            let refs: Vec<&[i8]> = cols.iter().map(|c| c.as_slice()).collect();
            let d = data_from(&refs);
            let knn = ItemKnn::fit(&d, Some(k)).unwrap();
            let answers = AnswerList::from_pairs(
                ans.iter().enumerate().map(|(j, &b)| (j + 1, if b { Vote::Like } else { Vote::Dislike })),
            );
            let p = knn.predict(&answers, 0).unwrap();
            prop_assert!((-1.0..=1.0).contains(&p));
            for i in 0..5 {
                for j in 0..5 {
                    prop_assert_eq!(knn.sims.get(i, j).map(f64::to_bits), knn.sims.get(j, i).map(f64::to_bits));
                    if let Some(s) = knn.sims.get(i, j) {
                        prop_assert!((-1.0..=1.0).contains(&s));
                    }
                }
            }
        }
    }
}
