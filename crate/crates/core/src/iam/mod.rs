//! Inductive additive model.
//!
//! A user is represented by a default vector `Ψ0` plus one learned translation per
//! rating they gave: `Ψ_i^{+1}` for a like of item `i`, `Ψ_i^{-1}` for a dislike.
//! Ratings are predicted as `q_i · rep`. The cold-start variant scales each
//! translation by a per-item weight `α_i` driven sparse by an L1 penalty; the items
//! with a non-zero weight form the interview. The mixed variant (`Csw`) learns the
//! translations in warm mode, then only the weights, and squashes the representation
//! with `tanh` before every dot product.

mod clip;
pub mod objective;
mod train;

pub use clip::l1_clip_step;
pub use train::{
    iam_train_cold, iam_train_csw, iam_train_csw_phase2, iam_train_warm, train_cold_observed,
    train_csw_observed, train_warm_observed,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{SparseRatings, Vote};
use crate::error::{check_index, Error, Result};
use crate::hyper::Hyperparams;
use crate::linalg::{axpy, dot, gaussian_vec, Matrix};
use crate::mf::INIT_STD;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Warm,
    Cold,
    Csw,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Warm => "warm",
            Mode::Cold => "cold",
            Mode::Csw => "csw",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IamModel {
    /// Item vectors, `I × N`.
    pub q: Matrix,
    /// Representation of a user without answers.
    pub psi0: Vec<f64>,
    /// Like translations, `I × N`.
    pub psi_pos: Matrix,
    /// Dislike translations, `I × N`.
    pub psi_neg: Matrix,
    /// Interview weights; all ones in warm mode.
    pub alpha: Vec<f64>,
    pub mode: Mode,
    pub hyper: Hyperparams,
}

impl IamModel {
    /// Gaussian(0, 0.01²) parameters drawn from `hyper.seed`, unit weights.
    pub fn init(num_items: usize, hyper: &Hyperparams, mode: Mode) -> Self {
        let n = hyper.latent_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        let q = Matrix::gaussian(num_items, n, INIT_STD, &mut rng);
        let psi0 = gaussian_vec(n, INIT_STD, &mut rng);
        let psi_pos = Matrix::gaussian(num_items, n, INIT_STD, &mut rng);
        let psi_neg = Matrix::gaussian(num_items, n, INIT_STD, &mut rng);
        IamModel {
            q,
            psi0,
            psi_pos,
            psi_neg,
            alpha: vec![1.0; num_items],
            mode,
            hyper: *hyper,
        }
    }

    pub fn num_items(&self) -> usize {
        self.q.rows
    }

    pub fn latent_dim(&self) -> usize {
        self.q.cols
    }

    #[inline]
    pub fn translation(&self, item: usize, vote: Vote) -> &[f64] {
        match vote {
            Vote::Like => self.psi_pos.row(item),
            Vote::Dislike => self.psi_neg.row(item),
        }
    }

    #[inline]
    pub(crate) fn translation_mut(&mut self, item: usize, vote: Vote) -> &mut [f64] {
        match vote {
            Vote::Like => self.psi_pos.row_mut(item),
            Vote::Dislike => self.psi_neg.row_mut(item),
        }
    }

    /// Scale of an interview answer on `item`; 1 in warm mode.
    #[inline]
    pub fn weight(&self, item: usize) -> f64 {
        match self.mode {
            Mode::Warm => 1.0,
            Mode::Cold | Mode::Csw => self.alpha[item],
        }
    }

    /// Scale of a rating folded in after the interview. Mixed models use the
    /// un-scaled warm translation for items that carry no learned weight.
    #[inline]
    pub fn update_weight(&self, item: usize) -> f64 {
        match self.mode {
            Mode::Warm => 1.0,
            Mode::Cold => self.alpha[item],
            Mode::Csw => {
                if self.alpha[item] != 0.0 {
                    self.alpha[item]
                } else {
                    1.0
                }
            }
        }
    }

    /// `Ψ0 + Σ α_i Ψ_i^{v}` over the answers that can contribute (all of them in warm
    /// mode, those with `α_i ≠ 0` otherwise), summed in ascending item order.
    pub fn representation(&self, answers: &AnswerList) -> Result<Vec<f64>> {
        self.representation_excluding(answers, None)
    }

    pub fn representation_excluding(
        &self,
        answers: &AnswerList,
        exclude: Option<usize>,
    ) -> Result<Vec<f64>> {
        let mut rep = self.psi0.clone();
        for &(item, vote) in answers.entries() {
            check_index("item", item, self.num_items())?;
            if Some(item) == exclude {
                continue;
            }
            let w = self.weight(item);
            if w == 0.0 {
                continue;
            }
            axpy(w, self.translation(item, vote), &mut rep);
        }
        Ok(rep)
    }

    /// `q_i · rep`, with `tanh` applied to `rep` first in mixed mode.
    #[inline]
    pub fn score(&self, rep: &[f64], item: usize) -> f64 {
        let q = self.q.row(item);
        match self.mode {
            Mode::Csw => q.iter().zip(rep).map(|(qk, rk)| qk * rk.tanh()).sum(),
            _ => dot(q, rep),
        }
    }

    /// Prediction for `item` from `answers`; an answer on `item` itself is left out.
    pub fn predict(&self, answers: &AnswerList, item: usize) -> Result<f64> {
        check_index("item", item, self.num_items())?;
        let rep = self.representation_excluding(answers, Some(item))?;
        Ok(self.score(&rep, item))
    }

    /// Folds one more rating into a representation.
    pub fn update(&self, rep: &[f64], item: usize, vote: Vote) -> Result<Vec<f64>> {
        check_index("item", item, self.num_items())?;
        let mut out = rep.to_vec();
        axpy(self.update_weight(item), self.translation(item, vote), &mut out);
        Ok(out)
    }

    /// Subtracts the translation [`update`](Self::update) added.
    pub fn retract(&self, rep: &[f64], item: usize, vote: Vote) -> Result<Vec<f64>> {
        check_index("item", item, self.num_items())?;
        let mut out = rep.to_vec();
        axpy(-self.update_weight(item), self.translation(item, vote), &mut out);
        Ok(out)
    }

    /// Items with a non-zero weight, largest `|α|` first, ties by index.
    pub fn interview(&self) -> Result<Interview> {
        if self.mode == Mode::Warm {
            return Err(Error::Mode("a warm model has no learned interview".into()));
        }
        let mut items: Vec<usize> = (0..self.num_items()).filter(|&i| self.alpha[i] != 0.0).collect();
        items.sort_by(|&a, &b| {
            self.alpha[b]
                .abs()
                .total_cmp(&self.alpha[a].abs())
                .then(a.cmp(&b))
        });
        let weights = items.iter().map(|&i| self.alpha[i]).collect();
        Ok(Interview {
            items,
            weights,
            source: InterviewSource::LearnedAlpha,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.q.is_finite()
            && self.psi_pos.is_finite()
            && self.psi_neg.is_finite()
            && self.psi0.iter().all(|v| v.is_finite())
            && self.alpha.iter().all(|v| v.is_finite())
    }
}

/// Free-function form of [`IamModel::interview`].
pub fn interview_items(model: &IamModel) -> Result<Interview> {
    model.interview()
}

/// A user's answers: unique items, kept sorted by item index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnswerList {
    entries: Vec<(usize, Vote)>,
}

impl AnswerList {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sorts by item; a repeated item keeps its last vote.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, Vote)>) -> Self {
        let mut entries: Vec<(usize, Vote)> = pairs.into_iter().collect();
        entries.reverse();
        // stable sort on the reversed list puts the last occurrence first
        entries.sort_by_key(|e| e.0);
        entries.dedup_by_key(|e| e.0);
        AnswerList { entries }
    }

    pub fn entries(&self) -> &[(usize, Vote)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, item: usize) -> Option<Vote> {
        self.entries
            .binary_search_by_key(&item, |e| e.0)
            .ok()
            .map(|k| self.entries[k].1)
    }

    pub fn contains(&self, item: usize) -> bool {
        self.get(item).is_some()
    }

    pub fn insert(&mut self, item: usize, vote: Vote) {
        match self.entries.binary_search_by_key(&item, |e| e.0) {
            Ok(k) => self.entries[k].1 = vote,
            Err(k) => self.entries.insert(k, (item, vote)),
        }
    }

    pub fn remove(&mut self, item: usize) -> Option<Vote> {
        match self.entries.binary_search_by_key(&item, |e| e.0) {
            Ok(k) => Some(self.entries.remove(k).1),
            Err(_) => None,
        }
    }

    /// Only the answers on items where `mask` is true.
    pub fn restricted(&self, mask: &[bool]) -> AnswerList {
        AnswerList {
            entries: self.entries.iter().filter(|e| mask[e.0]).copied().collect(),
        }
    }

    pub fn items(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterviewSource {
    LearnedAlpha,
    Pop,
    Helf,
    Manual,
}

impl InterviewSource {
    pub fn name(self) -> &'static str {
        match self {
            InterviewSource::LearnedAlpha => "alpha",
            InterviewSource::Pop => "pop",
            InterviewSource::Helf => "helf",
            InterviewSource::Manual => "manual",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "alpha" | "learned-alpha" => InterviewSource::LearnedAlpha,
            "pop" => InterviewSource::Pop,
            "helf" => InterviewSource::Helf,
            "manual" => InterviewSource::Manual,
            _ => return None,
        })
    }
}

/// The fixed list of items every new user is asked about.
#[derive(Debug, Clone, PartialEq)]
pub struct Interview {
    pub items: Vec<usize>,
    /// One number per item: `α_i` for learned interviews, the selection score otherwise.
    pub weights: Vec<f64>,
    pub source: InterviewSource,
}

impl Interview {
    pub fn empty(source: InterviewSource) -> Self {
        Interview {
            items: Vec::new(),
            weights: Vec::new(),
            source,
        }
    }

    pub fn manual(items: Vec<usize>) -> Self {
        let weights = vec![1.0; items.len()];
        Interview {
            items,
            weights,
            source: InterviewSource::Manual,
        }
    }

    pub fn all_items(num_items: usize) -> Self {
        Self::manual((0..num_items).collect())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn mask(&self, num_items: usize) -> Vec<bool> {
        let mut mask = vec![false; num_items];
        for &i in &self.items {
            if i < num_items {
                mask[i] = true;
            }
        }
        mask
    }

    /// The first `m` questions.
    pub fn truncated(&self, m: usize) -> Interview {
        let m = m.min(self.items.len());
        Interview {
            items: self.items[..m].to_vec(),
            weights: self.weights[..m].to_vec(),
            source: self.source,
        }
    }

    /// Tab-separated `item_id  weight` lines using original item ids.
    pub fn to_text(&self, data_items: &crate::data::IdMap) -> String {
        use std::fmt::Write as _;
        let mut out = format!("# interview source={} size={}\n", self.source.name(), self.len());
        for (i, w) in self.items.iter().zip(&self.weights) {
            let id = data_items.original(*i).map(str::to_string).unwrap_or_else(|| i.to_string());
            writeln!(out, "{id}\t{w:e}").unwrap();
        }
        out
    }

    pub fn from_text(text: &str, data_items: &crate::data::IdMap) -> Result<Interview> {
        let mut items = Vec::new();
        let mut weights = Vec::new();
        let mut source = InterviewSource::Manual;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                for tok in rest.split_whitespace() {
                    if let Some(s) = tok.strip_prefix("source=") {
                        source = InterviewSource::from_name(s).unwrap_or(InterviewSource::Manual);
                    }
                }
                continue;
            }
            let mut parts = line.split('\t');
            let id = parts.next().unwrap_or_default();
            let item = data_items.get(id).ok_or_else(|| Error::Parse {
                line: n + 1,
                message: format!("unknown item id {id:?}"),
            })?;
            let w = match parts.next() {
                Some(w) => w.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line: n + 1,
                    message: format!("invalid weight {w:?}"),
                })?,
                None => 1.0,
            };
            items.push(item);
            weights.push(w);
        }
        Ok(Interview {
            items,
            weights,
            source,
        })
    }
}

/// Item frequencies of `data`, used for popularity-damped weight initialization.
pub(crate) fn popularity_damped_alpha(data: &SparseRatings) -> Vec<f64> {
    let raw: Vec<f64> = (0..data.num_items())
        .map(|i| 1.0 / ((data.item_frequency(i) + 1) as f64).sqrt())
        .collect();
    let max = raw.iter().copied().fold(0.0f64, f64::max);
    if max > 0.0 {
        raw.iter().map(|v| v / max).collect()
    } else {
        raw
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tiny(mode: Mode) -> IamModel {
        let hyper = Hyperparams {
            latent_dim: 2,
            seed: 1,
            ..Default::default()
        };
        IamModel::init(5, &hyper, mode)
    }

    #[test]
    fn empty_answers_give_default_representation() {
        let m = tiny(Mode::Warm);
        assert_eq!(m.representation(&AnswerList::new()).unwrap(), m.psi0);
    }

    #[test]
    fn warm_single_answer() {
        let m = tiny(Mode::Warm);
        let rep = m.representation(&AnswerList::from_pairs([(3, Vote::Like)])).unwrap();
        let expected: Vec<f64> = m.psi0.iter().zip(m.psi_pos.row(3)).map(|(a, b)| a + b).collect();
        assert_eq!(rep, expected);
    }

    #[test]
    fn cold_scaled_single_answer() {
        let mut m = tiny(Mode::Cold);
        m.psi0 = vec![0.0, 0.0];
        m.alpha[2] = 0.5;
        m.psi_pos.row_mut(2).copy_from_slice(&[1.0, -1.0]);
        let rep = m.representation(&AnswerList::from_pairs([(2, Vote::Like)])).unwrap();
        assert_eq!(rep, vec![0.5, -0.5]);
    }

    #[test]
    fn zero_alpha_masks_answers() {
        let mut m = tiny(Mode::Cold);
        m.alpha[1] = 0.0;
        let with = m.representation(&AnswerList::from_pairs([(1, Vote::Dislike), (4, Vote::Like)])).unwrap();
        let without = m.representation(&AnswerList::from_pairs([(4, Vote::Like)])).unwrap();
        assert_eq!(with, without);
    }

    #[test]
    fn prediction_leaves_target_out() {
        let m = tiny(Mode::Warm);
        let only_self = AnswerList::from_pairs([(2, Vote::Like)]);
        assert_eq!(m.predict(&only_self, 2).unwrap(), dot(m.q.row(2), &m.psi0));
        assert_eq!(m.predict(&AnswerList::new(), 2).unwrap(), dot(m.q.row(2), &m.psi0));
    }

    #[test]
    fn csw_saturates() {
        let mut m = tiny(Mode::Csw);
        m.psi0 = vec![50.0, 80.0];
        let p = m.predict(&AnswerList::new(), 1).unwrap();
        let expected = m.q.row(1)[0] + m.q.row(1)[1];
        assert!((p - expected).abs() < 1e-12);
    }

    #[test]
    fn update_matches_definition() {
        let m = tiny(Mode::Warm);
        let rep = m.update(&m.psi0, 3, Vote::Like).unwrap();
        let direct = m.representation(&AnswerList::from_pairs([(3, Vote::Like)])).unwrap();
        assert_eq!(rep, direct);
        assert!(m.update(&m.psi0, 5, Vote::Like).is_err());
        assert!(m.predict(&AnswerList::new(), 7).is_err());
        assert!(m
            .representation(&AnswerList::from_pairs([(9, Vote::Like)]))
            .is_err());
    }

    #[test]
    fn csw_update_weight_defaults_to_one() {
        let mut m = tiny(Mode::Csw);
        m.alpha = vec![0.0, 0.3, 0.0, 0.0, 0.0];
        assert_eq!(m.update_weight(0), 1.0);
        assert_eq!(m.update_weight(1), 0.3);
        m.mode = Mode::Cold;
        assert_eq!(m.update_weight(0), 0.0);
    }

    #[test]
    fn interview_ordering() {
        let mut m = tiny(Mode::Cold);
        m.alpha = vec![0.0, 0.3, 0.0, -0.1, 0.0];
        assert_eq!(m.interview().unwrap().items, vec![1, 3]);
        m.alpha = vec![0.0; 5];
        assert!(m.interview().unwrap().is_empty());
        m.alpha = vec![0.2, 0.2, 0.0, 0.0, 0.0];
        assert_eq!(m.interview().unwrap().items, vec![0, 1]);
        m.mode = Mode::Warm;
        assert!(matches!(m.interview(), Err(Error::Mode(_))));
    }

    #[test]
    fn answer_list_keeps_last_and_sorts() {
        let a = AnswerList::from_pairs([(4, Vote::Like), (1, Vote::Dislike), (4, Vote::Dislike)]);
        assert_eq!(a.entries(), &[(1, Vote::Dislike), (4, Vote::Dislike)]);
    }

    #[test]
    fn interview_text_round_trip() {
        let ids = crate::data::IdMap::from_ids(vec!["a".into(), "b".into(), "c".into()]);
        let iv = Interview {
            items: vec![2, 0],
            weights: vec![0.75, -0.125],
            source: InterviewSource::LearnedAlpha,
        };
        let back = Interview::from_text(&iv.to_text(&ids), &ids).unwrap();
        assert_eq!(back, iv);
    }

    fn dyadic() -> impl Strategy<Value = f64> {
        (-64i32..64).prop_map(|k| k as f64 / 8.0)
    }

    proptest! {
        #[test]
        fn representation_is_order_invariant(
            perm in Just((0..5usize).collect::<Vec<_>>()).prop_shuffle(),
            votes in prop::collection::vec(any::<bool>(), 5),
            seed in 0u64..1000,
        ) {
            let hyper = Hyperparams { latent_dim: 3, seed, ..Default::default() };
            let mut m = IamModel::init(5, &hyper, Mode::Cold);
            m.alpha = vec![0.9, 0.0, -0.4, 1.3, 0.2];
            let vote = |b: bool| if b { Vote::Like } else { Vote::Dislike };
            let forward = AnswerList::from_pairs((0..5).map(|i| (i, vote(votes[i]))));
            let shuffled = AnswerList::from_pairs(perm.iter().map(|&i| (i, vote(votes[i]))));
            prop_assert_eq!(m.representation(&forward).unwrap(), m.representation(&shuffled).unwrap());
        }

        #[test]
        fn update_then_retract_restores_exactly_on_dyadic_values(
            rep in prop::collection::vec(dyadic(), 3),
            t in prop::collection::vec(dyadic(), 3),
        ) {
            let mut m = IamModel::init(2, &Hyperparams { latent_dim: 3, ..Default::default() }, Mode::Warm);
            m.psi_pos.row_mut(1).copy_from_slice(&t);
            let up = m.update(&rep, 1, Vote::Like).unwrap();
            prop_assert_eq!(m.retract(&up, 1, Vote::Like).unwrap(), rep);
        }

        #[test]
        fn update_then_retract_is_close_on_random_values(
            rep in prop::collection::vec(-10.0f64..10.0, 4),
            seed in 0u64..500,
        ) {
            let m = IamModel::init(3, &Hyperparams { latent_dim: 4, seed, ..Default::default() }, Mode::Warm);
            let up = m.update(&rep, 2, Vote::Dislike).unwrap();
            let back = m.retract(&up, 2, Vote::Dislike).unwrap();
            for (a, b) in back.iter().zip(&rep) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn updates_commute_on_dyadic_values(
            rep in prop::collection::vec(dyadic(), 2),
            a in prop::collection::vec(dyadic(), 2),
            b in prop::collection::vec(dyadic(), 2),
        ) {
            let mut m = IamModel::init(2, &Hyperparams { latent_dim: 2, ..Default::default() }, Mode::Warm);
            m.psi_pos.row_mut(0).copy_from_slice(&a);
            m.psi_neg.row_mut(1).copy_from_slice(&b);
            let ab = m.update(&m.update(&rep, 0, Vote::Like).unwrap(), 1, Vote::Dislike).unwrap();
            let ba = m.update(&m.update(&rep, 1, Vote::Dislike).unwrap(), 0, Vote::Like).unwrap();
            prop_assert_eq!(ab, ba);
        }
    }
}
