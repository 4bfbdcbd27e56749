//! Rating storage, ingestion and the user/answer splitting protocol.

mod load;
mod split;
pub mod synth;

pub use load::{load_dataset, LoadOptions, Separator};
pub use split::{split_answers, split_users, DatasetSplit, UserSet, UserSplit};

use std::collections::HashMap;

/// A binarized opinion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Vote {
    Dislike,
    Like,
}

impl Vote {
    #[inline]
    pub fn value(self) -> f64 {
        match self {
            Vote::Like => 1.0,
            Vote::Dislike => -1.0,
        }
    }

    /// `+1` iff `raw > threshold`.
    #[inline]
    pub fn from_raw(raw: f64, threshold: f64) -> Vote {
        if raw > threshold {
            Vote::Like
        } else {
            Vote::Dislike
        }
    }

    /// Sign rule used by the accuracy metric: zero counts as a like.
    #[inline]
    pub fn from_prediction(pred: f64) -> Vote {
        if pred >= 0.0 {
            Vote::Like
        } else {
            Vote::Dislike
        }
    }

    pub fn flip(self) -> Vote {
        match self {
            Vote::Like => Vote::Dislike,
            Vote::Dislike => Vote::Like,
        }
    }
}

/// Dense index <-> original identifier table.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Dense indices for `0..n` mapped to their decimal string.
    pub fn identity(n: usize) -> Self {
        Self::from_ids((0..n).map(|i| i.to_string()).collect())
    }

    pub fn from_ids(ids: Vec<String>) -> Self {
        let index = ids.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        IdMap { ids, index }
    }

    pub fn intern(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.ids.len();
        self.ids.push(id.to_string());
        self.index.insert(id.to_string(), i);
        i
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn original(&self, dense: usize) -> Option<&str> {
        self.ids.get(dense).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatingTriple {
    pub user: usize,
    pub item: usize,
    pub raw: f64,
    pub value: Vote,
}

/// Raw ratings after id remapping, before binarization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub user_ids: IdMap,
    pub item_ids: IdMap,
    /// `(user, item, raw)` sorted by `(user, item)`, unique pairs.
    pub entries: Vec<(usize, usize, f64)>,
}

impl RawDataset {
    pub fn binarize(&self, threshold: f64) -> SparseRatings {
        let triples = self
            .entries
            .iter()
            .map(|&(user, item, raw)| RatingTriple {
                user,
                item,
                raw,
                value: Vote::from_raw(raw, threshold),
            })
            .collect();
        SparseRatings::with_ids(self.user_ids.clone(), self.item_ids.clone(), triples)
    }

    /// Keeps users with at least `k` ratings; users and items are re-indexed densely.
    pub fn filter_min_user_ratings(&self, k: usize) -> RawDataset {
        let mut counts = vec![0usize; self.user_ids.len()];
        for &(u, _, _) in &self.entries {
            counts[u] += 1;
        }
        let mut users = IdMap::new();
        let mut items = IdMap::new();
        let mut entries = Vec::new();
        for &(u, i, raw) in &self.entries {
            if counts[u] < k {
                continue;
            }
            let nu = users.intern(self.user_ids.original(u).unwrap());
            let ni = items.intern(self.item_ids.original(i).unwrap());
            entries.push((nu, ni, raw));
        }
        entries.sort_by_key(|e| (e.0, e.1));
        RawDataset {
            user_ids: users,
            item_ids: items,
            entries,
        }
    }
}

/// Binarize raw ratings: `+1` iff `raw > threshold`.
pub fn binarize(raw: &RawDataset, threshold: f64) -> SparseRatings {
    raw.binarize(threshold)
}

/// The observed rating set with per-user and per-item adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRatings {
    num_users: usize,
    num_items: usize,
    triples: Vec<RatingTriple>,
    by_user: Vec<Vec<(usize, Vote)>>,
    by_item: Vec<Vec<(usize, Vote)>>,
    user_ids: IdMap,
    item_ids: IdMap,
}

impl SparseRatings {
    /// Builds from triples with identity id maps. Duplicate pairs keep the last triple.
    pub fn new(num_users: usize, num_items: usize, triples: Vec<RatingTriple>) -> Self {
        Self::with_ids(IdMap::identity(num_users), IdMap::identity(num_items), triples)
    }

    pub fn with_ids(user_ids: IdMap, item_ids: IdMap, triples: Vec<RatingTriple>) -> Self {
        let num_users = user_ids.len();
        let num_items = item_ids.len();
        Self::build(num_users, num_items, user_ids, item_ids, triples)
    }

    fn build(
        num_users: usize,
        num_items: usize,
        user_ids: IdMap,
        item_ids: IdMap,
        triples: Vec<RatingTriple>,
    ) -> Self {
        let mut triples = triples;
        for t in &triples {
            assert!(t.user < num_users && t.item < num_items, "triple out of range");
        }
        // stable sort keeps input order among duplicates, so the last one wins below
        triples.sort_by_key(|t| (t.user, t.item));
        let mut dedup: Vec<RatingTriple> = Vec::with_capacity(triples.len());
        for t in triples {
            match dedup.last_mut() {
                Some(last) if last.user == t.user && last.item == t.item => *last = t,
                _ => dedup.push(t),
            }
        }
        let mut by_user = vec![Vec::new(); num_users];
        let mut by_item = vec![Vec::new(); num_items];
        for t in &dedup {
            by_user[t.user].push((t.item, t.value));
        }
        for t in &dedup {
            by_item[t.item].push((t.user, t.value));
        }
        for list in &mut by_item {
            list.sort_unstable_by_key(|e| e.0);
        }
        SparseRatings {
            num_users,
            num_items,
            triples: dedup,
            by_user,
            by_item,
            user_ids,
            item_ids,
        }
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> &[RatingTriple] {
        &self.triples
    }

    /// `(item, vote)` pairs of a user, ascending by item.
    pub fn user_ratings(&self, user: usize) -> &[(usize, Vote)] {
        &self.by_user[user]
    }

    /// `(user, vote)` pairs of an item, ascending by user.
    pub fn item_ratings(&self, item: usize) -> &[(usize, Vote)] {
        &self.by_item[item]
    }

    pub fn user_ids(&self) -> &IdMap {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &IdMap {
        &self.item_ids
    }

    pub fn item_frequency(&self, item: usize) -> usize {
        self.by_item[item].len()
    }

    /// Number of users with at least one rating.
    pub fn active_users(&self) -> usize {
        self.by_user.iter().filter(|r| !r.is_empty()).count()
    }

    pub fn rating(&self, user: usize, item: usize) -> Option<Vote> {
        let list = &self.by_user[user];
        list.binary_search_by_key(&item, |e| e.0).ok().map(|k| list[k].1)
    }

    /// Re-binarizes from the raw values.
    pub fn binarize(&self, threshold: f64) -> SparseRatings {
        let triples = self
            .triples
            .iter()
            .map(|t| RatingTriple {
                value: Vote::from_raw(t.raw, threshold),
                ..*t
            })
            .collect();
        Self::build(
            self.num_users,
            self.num_items,
            self.user_ids.clone(),
            self.item_ids.clone(),
            triples,
        )
    }

    /// Same index space, only the triples accepted by `keep`.
    pub fn filter(&self, mut keep: impl FnMut(&RatingTriple) -> bool) -> SparseRatings {
        let triples = self.triples.iter().filter(|t| keep(t)).copied().collect();
        Self::build(
            self.num_users,
            self.num_items,
            self.user_ids.clone(),
            self.item_ids.clone(),
            triples,
        )
    }

    /// Ratings of the given users only, same index space.
    pub fn restrict_users(&self, users: &[usize]) -> SparseRatings {
        let mut mask = vec![false; self.num_users];
        for &u in users {
            mask[u] = true;
        }
        self.filter(|t| mask[t.user])
    }

    /// Adds triples (same index space); later entries override existing pairs.
    pub fn extended(&self, extra: impl IntoIterator<Item = RatingTriple>) -> SparseRatings {
        let mut triples = self.triples.clone();
        triples.extend(extra);
        Self::build(
            self.num_users,
            self.num_items,
            self.user_ids.clone(),
            self.item_ids.clone(),
            triples,
        )
    }

    pub fn global_mean(&self) -> f64 {
        if self.triples.is_empty() {
            return 0.0;
        }
        self.triples.iter().map(|t| t.value.value()).sum::<f64>() / self.triples.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(user: usize, item: usize, raw: f64) -> RatingTriple {
        RatingTriple {
            user,
            item,
            raw,
            value: Vote::from_raw(raw, 3.0),
        }
    }

    #[test]
    fn binarization_is_strict() {
        assert_eq!(Vote::from_raw(4.0, 3.0), Vote::Like);
        assert_eq!(Vote::from_raw(3.0, 3.0), Vote::Dislike);
        assert_eq!(Vote::from_raw(-2.5, 0.0), Vote::Dislike);
    }

    #[test]
    fn duplicates_keep_last() {
        let data = SparseRatings::new(1, 1, vec![t(0, 0, 1.0), t(0, 0, 5.0)]);
        assert_eq!(data.len(), 1);
        assert_eq!(data.triples()[0].raw, 5.0);
        assert_eq!(data.triples()[0].value, Vote::Like);
    }

    #[test]
    fn rating_lookup() {
        let data = SparseRatings::new(2, 3, vec![t(0, 2, 5.0), t(1, 0, 1.0), t(0, 1, 2.0)]);
        assert_eq!(data.rating(0, 2), Some(Vote::Like));
        assert_eq!(data.rating(0, 1), Some(Vote::Dislike));
        assert_eq!(data.rating(1, 1), None);
        assert_eq!(data.user_ratings(0), &[(1, Vote::Dislike), (2, Vote::Like)]);
        assert_eq!(data.item_frequency(0), 1);
    }

    #[test]
    fn min_user_filter_reindexes() {
        let raw = RawDataset {
            user_ids: IdMap::from_ids(vec!["a".into(), "b".into()]),
            item_ids: IdMap::from_ids(vec!["x".into(), "y".into()]),
            entries: vec![(0, 1, 4.0), (1, 0, 2.0), (1, 1, 5.0)],
        };
        let kept = raw.filter_min_user_ratings(2);
        assert_eq!(kept.user_ids.ids(), &["b".to_string()]);
        assert_eq!(kept.entries, vec![(0, 0, 2.0), (0, 1, 5.0)]);
        assert_eq!(kept.item_ids.ids(), &["x".to_string(), "y".to_string()]);
    }

    fn arb_triples() -> impl Strategy<Value = (usize, usize, Vec<(usize, usize, u8)>)> {
        (1usize..8, 1usize..8).prop_flat_map(|(u, i)| {
            (
                Just(u),
                Just(i),
                prop::collection::vec((0..u, 0..i, 1u8..=5), 0..40),
            )
        })
    }

    proptest! {
        #[test]
        fn adjacency_views_are_consistent((u, i, raw) in arb_triples()) {
            let triples: Vec<_> = raw.iter().map(|&(a, b, r)| t(a, b, r as f64)).collect();
            let data = SparseRatings::new(u, i, triples);
            let mut from_users: Vec<_> = (0..u)
                .flat_map(|uu| data.user_ratings(uu).iter().map(move |&(it, v)| (uu, it, v)))
                .collect();
            let mut from_items: Vec<_> = (0..i)
                .flat_map(|ii| data.item_ratings(ii).iter().map(move |&(us, v)| (us, ii, v)))
                .collect();
            let mut from_triples: Vec<_> = data.triples().iter().map(|t| (t.user, t.item, t.value)).collect();
            from_users.sort();
            from_items.sort();
            from_triples.sort();
            prop_assert_eq!(&from_users, &from_triples);
            prop_assert_eq!(&from_items, &from_triples);
        }

        #[test]
        fn binarize_is_idempotent((u, i, raw) in arb_triples(), th in 0.0f64..6.0) {
            let triples: Vec<_> = raw.iter().map(|&(a, b, r)| t(a, b, r as f64)).collect();
            let data = SparseRatings::new(u, i, triples);
            let once = data.binarize(th);
            prop_assert_eq!(once.binarize(th), once.clone());
            for tr in once.triples() {
                prop_assert_eq!(tr.value, Vote::from_raw(tr.raw, th));
            }
        }
    }
}
