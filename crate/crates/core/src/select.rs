//! Static interview selection: popularity and HELF.

use crate::data::{SparseRatings, Vote};
use crate::error::{Error, Result};
use crate::iam::{Interview, InterviewSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionMethod {
    Pop,
    Helf,
}

impl SelectionMethod {
    fn source(self) -> InterviewSource {
        match self {
            SelectionMethod::Pop => InterviewSource::Pop,
            SelectionMethod::Helf => InterviewSource::Helf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionScore {
    pub item: usize,
    pub score: f64,
    pub method: SelectionMethod,
}

/// Number of training ratings per item.
pub fn pop_scores(train: &SparseRatings) -> Vec<SelectionScore> {
    (0..train.num_items())
        .map(|item| SelectionScore {
            item,
            score: train.item_frequency(item) as f64,
            method: SelectionMethod::Pop,
        })
        .collect()
}

/// Harmonic mean of `LF′ = log(freq)/log(users)` (clamped to `[0, 1]`) and the
/// binary entropy of the like share, in bits. `freq = 0` scores 0.
pub fn helf_score(freq: usize, likes: usize, users: usize) -> f64 {
    if freq == 0 {
        return 0.0;
    }
    let lf = if users > 1 {
        ((freq as f64).ln() / (users as f64).ln()).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let p = likes as f64 / freq as f64;
    let h = -[p, 1.0 - p]
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.log2())
        .sum::<f64>();
    let h = h.clamp(0.0, 1.0);
    if lf + h == 0.0 {
        0.0
    } else {
        2.0 * lf * h / (lf + h)
    }
}

/// HELF score per item, normalized by the number of users with training ratings.
pub fn helf_scores(train: &SparseRatings) -> Vec<SelectionScore> {
    let users = train.active_users();
    (0..train.num_items())
        .map(|item| {
            let r = train.item_ratings(item);
            let likes = r.iter().filter(|e| e.1 == Vote::Like).count();
            SelectionScore {
                item,
                score: helf_score(r.len(), likes, users),
                method: SelectionMethod::Helf,
            }
        })
        .collect()
}

/// The `k` best items by score, ties by ascending index.
fn top_k(mut scores: Vec<SelectionScore>, k: usize, method: SelectionMethod) -> Result<Interview> {
    if k > scores.len() {
        return Err(Error::Range {
            requested: k,
            available: scores.len(),
        });
    }
    scores.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.item.cmp(&b.item)));
    scores.truncate(k);
    Ok(Interview {
        items: scores.iter().map(|s| s.item).collect(),
        weights: scores.iter().map(|s| s.score).collect(),
        source: method.source(),
    })
}

pub fn select_pop(train: &SparseRatings, k: usize) -> Result<Interview> {
    top_k(pop_scores(train), k, SelectionMethod::Pop)
}

pub fn select_helf(train: &SparseRatings, k: usize) -> Result<Interview> {
    top_k(helf_scores(train), k, SelectionMethod::Helf)
}

pub fn select(train: &SparseRatings, k: usize, method: SelectionMethod) -> Result<Interview> {
    match method {
        SelectionMethod::Pop => select_pop(train, k),
        SelectionMethod::Helf => select_helf(train, k),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RatingTriple;
    use proptest::prelude::*;

    fn with_counts(counts: &[usize]) -> SparseRatings {
        let users = *counts.iter().max().unwrap();
        let mut triples = Vec::new();
        for (i, &c) in counts.iter().enumerate() {
            for u in 0..c {
                let v = if u % 2 == 0 { Vote::Like } else { Vote::Dislike };
                triples.push(RatingTriple {
                    user: u,
                    item: i,
                    raw: v.value(),
                    value: v,
                });
            }
        }
        SparseRatings::new(users, counts.len(), triples)
    }

    #[test]
    fn pop_examples() {
        let d = with_counts(&[5, 9, 9, 1]);
        assert_eq!(select_pop(&d, 2).unwrap().items, vec![1, 2]);
        assert!(select_pop(&d, 0).unwrap().is_empty());
        assert_eq!(select_pop(&d, 4).unwrap().items, vec![1, 2, 0, 3]);
        assert!(matches!(select_pop(&d, 5), Err(Error::Range { .. })));
        assert!(matches!(select_helf(&d, 5), Err(Error::Range { .. })));
    }

    /// Binary entropy written out from its definition.
    fn entropy_bits(p: f64) -> f64 {
        -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
    }

    #[test]
    fn helf_examples() {
        assert!((helf_score(100, 50, 100) - 1.0).abs() < 1e-12);
        assert_eq!(helf_score(30, 30, 100), 0.0);
        assert_eq!(helf_score(0, 0, 100), 0.0);
        let h = entropy_bits(0.7);
        assert!((h - 0.8813).abs() < 1e-4);
        let expected = 2.0 * 0.5 * h / (0.5 + h);
        assert!((helf_score(10, 7, 100) - expected).abs() < 1e-12);
        assert!((helf_score(10, 7, 100) - 0.638).abs() < 1e-3);
    }

    #[test]
    fn helf_prefers_frequent_controversial_items() {
        let mut triples = Vec::new();
        for u in 0..20 {
            // item 0: everyone, split; item 1: everyone, all like; item 2: four users, split
            let split = if u % 2 == 0 { Vote::Like } else { Vote::Dislike };
            triples.push(RatingTriple { user: u, item: 0, raw: 0.0, value: split });
            triples.push(RatingTriple { user: u, item: 1, raw: 0.0, value: Vote::Like });
            if u < 4 {
                triples.push(RatingTriple { user: u, item: 2, raw: 0.0, value: split });
            }
        }
        let d = SparseRatings::new(20, 3, triples);
        assert_eq!(select_helf(&d, 3).unwrap().items, vec![0, 2, 1]);
    }

    proptest! {
        #[test]
        fn helf_is_bounded(freq in 0usize..500, like_share in 0.0f64..=1.0, users in 1usize..1000) {
            let likes = (like_share * freq as f64).round() as usize;
            let s = helf_score(freq, likes.min(freq), users);
            prop_assert!((0.0..=1.0).contains(&s));
        }

        #[test]
        fn selection_is_deterministic(counts in prop::collection::vec(1usize..12, 1..10), k in 0usize..10) {
            let d = with_counts(&counts);
            let k = k.min(counts.len());
            prop_assert_eq!(select_pop(&d, k).unwrap(), select_pop(&d, k).unwrap());
            prop_assert_eq!(select_helf(&d, k).unwrap(), select_helf(&d, k).unwrap());
            for s in pop_scores(&d) {
                prop_assert!(s.score >= 0.0 && s.score.fract() == 0.0);
            }
        }
    }
}
