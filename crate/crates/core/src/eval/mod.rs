//! Metrics and the interview simulation loop.

mod grid;
pub mod protocol;
mod table;

pub use grid::{average_reports, grid_search, GridCell, GridConfig, GridResult};
pub use table::{read_results, write_results, ResultRow};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{DatasetSplit, UserSet, Vote};
use crate::error::{Error, Result};
use crate::hyper::Hyperparams;
use crate::iam::{AnswerList, IamModel, Interview};
use crate::knn::ItemKnn;
use crate::mf::MfModel;
use crate::observe::LeakageAudit;

/// `sqrt(mean((pred − actual)²))` over all pairs.
pub fn rmse(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::NoData("rmse of an empty list"));
    }
    let sse: f64 = pairs.iter().map(|(p, a)| (p - a) * (p - a)).sum();
    Ok((sse / pairs.len() as f64).sqrt())
}

/// Share of pairs whose predicted sign matches the actual vote; `sign(0) = +1`.
pub fn local_accuracy(pairs: &[(f64, f64)]) -> Option<f64> {
    if pairs.is_empty() {
        return None;
    }
    let hits = pairs
        .iter()
        .filter(|(p, a)| Vote::from_prediction(*p).value() == *a)
        .count();
    Some(hits as f64 / pairs.len() as f64)
}

/// Unweighted mean of per-user local accuracies; users with no pairs are skipped.
pub fn accuracy<'a>(per_user: impl IntoIterator<Item = &'a [(f64, f64)]>) -> Result<f64> {
    let (sum, n) = per_user
        .into_iter()
        .filter_map(local_accuracy)
        .fold((0.0, 0usize), |(s, n), a| (s + a, n + 1));
    if n == 0 {
        return Err(Error::NoData("accuracy without any evaluated user"));
    }
    Ok(sum / n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub rmse: f64,
    pub accuracy: f64,
    /// Number of interview items actually asked (`#Q`).
    pub interview_size: usize,
    /// Interview size that was asked for, when it was capped by the model.
    pub requested_questions: Option<usize>,
    pub users_evaluated: usize,
    pub method: String,
    pub hyper: Option<Hyperparams>,
    pub seeds: Vec<u64>,
}

impl MetricsReport {
    fn from_lists(lists: &[Vec<(f64, f64)>], interview_size: usize, method: &str) -> Result<Self> {
        let pooled: Vec<(f64, f64)> = lists.iter().flatten().copied().collect();
        Ok(MetricsReport {
            rmse: rmse(&pooled)?,
            accuracy: accuracy(lists.iter().map(Vec::as_slice))?,
            interview_size,
            requested_questions: None,
            users_evaluated: lists.iter().filter(|l| !l.is_empty()).count(),
            method: method.to_string(),
            hyper: None,
            seeds: Vec::new(),
        })
    }

    pub fn with_run(mut self, hyper: &Hyperparams) -> Self {
        self.hyper = Some(*hyper);
        self.seeds = vec![hyper.seed];
        self
    }
}

/// Anything that predicts a rating from a user's visible answers.
pub trait Predictor: Sync {
    fn name(&self) -> &str;

    fn predict(&self, user: usize, answers: &AnswerList, item: usize) -> Result<f64>;

    fn predict_many(&self, user: usize, answers: &AnswerList, items: &[usize]) -> Result<Vec<f64>> {
        items.iter().map(|&i| self.predict(user, answers, i)).collect()
    }
}

impl Predictor for IamModel {
    fn name(&self) -> &str {
        match self.mode {
            crate::iam::Mode::Warm => "iam",
            crate::iam::Mode::Cold => "csiam",
            crate::iam::Mode::Csw => "cswiam",
        }
    }

    fn predict(&self, _user: usize, answers: &AnswerList, item: usize) -> Result<f64> {
        IamModel::predict(self, answers, item)
    }

    fn predict_many(&self, _user: usize, answers: &AnswerList, items: &[usize]) -> Result<Vec<f64>> {
        let rep = self.representation(answers)?;
        items
            .iter()
            .map(|&i| {
                if answers.contains(i) {
                    IamModel::predict(self, answers, i)
                } else {
                    crate::error::check_index("item", i, self.num_items())?;
                    Ok(self.score(&rep, i))
                }
            })
            .collect()
    }
}

impl Predictor for MfModel {
    fn name(&self) -> &str {
        "mf"
    }

    /// Transductive: the answers must already be part of the training data.
    fn predict(&self, user: usize, _answers: &AnswerList, item: usize) -> Result<f64> {
        if !self.known_users.get(user).copied().unwrap_or(false) {
            return Err(Error::Capability(format!(
                "user {user} was not part of the MF training population; retrain with the evaluation users folded in"
            )));
        }
        MfModel::predict(self, user, item)
    }
}

impl Predictor for ItemKnn {
    fn name(&self) -> &str {
        "itemknn"
    }

    fn predict(&self, _user: usize, answers: &AnswerList, item: usize) -> Result<f64> {
        ItemKnn::predict(self, answers, item)
    }
}

/// Predicts the same value everywhere.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPredictor(pub f64);

impl Predictor for ConstantPredictor {
    fn name(&self) -> &str {
        "constant"
    }

    fn predict(&self, _user: usize, _answers: &AnswerList, _item: usize) -> Result<f64> {
        Ok(self.0)
    }
}

/// Runs `visible(u)` / predict over the users of `set` and aggregates.
fn evaluate_with<P, V>(
    predictor: &P,
    split: &DatasetSplit,
    set: UserSet,
    interview_size: usize,
    audit: Option<&LeakageAudit>,
    visible: V,
) -> Result<MetricsReport>
where
    P: Predictor + ?Sized,
    V: Fn(usize) -> AnswerList + Sync,
{
    let users = split.users(set);
    let lists: Vec<Vec<(f64, f64)>> = users
        .par_iter()
        .map(|&u| {
            let answers = visible(u);
            if let Some(a) = audit {
                for j in answers.items() {
                    a.record_read(u, j);
                }
            }
            let eval = split.evaluation_of(u);
            let items: Vec<usize> = eval.iter().map(|e| e.0).collect();
            let preds = predictor.predict_many(u, &answers, &items)?;
            Ok(preds.into_iter().zip(eval).map(|(p, e)| (p, e.1.value())).collect())
        })
        .collect::<Result<_>>()?;
    MetricsReport::from_lists(&lists, interview_size, predictor.name())
}

/// Cold-start evaluation: each user of `set` reveals only the Answer-Set ratings that
/// fall on interview items.
pub fn run_cold_eval<P: Predictor + ?Sized>(
    predictor: &P,
    split: &DatasetSplit,
    interview: &Interview,
    set: UserSet,
) -> Result<MetricsReport> {
    run_cold_eval_audited(predictor, split, interview, set, None)
}

pub fn run_cold_eval_audited<P: Predictor + ?Sized>(
    predictor: &P,
    split: &DatasetSplit,
    interview: &Interview,
    set: UserSet,
    audit: Option<&LeakageAudit>,
) -> Result<MetricsReport> {
    let mask = interview.mask(interview.items.iter().copied().max().map_or(0, |m| m + 1));
    evaluate_with(predictor, split, set, interview.len(), audit, |u| {
        AnswerList::from_pairs(split.answers_of(u).iter().copied().filter(|e| mask.get(e.0) == Some(&true)))
    })
}

/// Warm evaluation: the whole Answer Set is visible.
pub fn run_warm_eval<P: Predictor + ?Sized>(
    predictor: &P,
    split: &DatasetSplit,
    set: UserSet,
) -> Result<MetricsReport> {
    run_warm_eval_audited(predictor, split, set, None)
}

pub fn run_warm_eval_audited<P: Predictor + ?Sized>(
    predictor: &P,
    split: &DatasetSplit,
    set: UserSet,
    audit: Option<&LeakageAudit>,
) -> Result<MetricsReport> {
    evaluate_with(predictor, split, set, 0, audit, |u| {
        AnswerList::from_pairs(split.answers_of(u).iter().copied())
    })
}

/// The Answer-Set ratings outside `interview`, in a per-user seeded order.
/// Prefixes of this list are what a user adds after the interview.
pub fn post_interview_order(split: &DatasetSplit, interview: &Interview, user: usize, seed: u64) -> Vec<(usize, Vote)> {
    let mut rest: Vec<(usize, Vote)> = split
        .answers_of(user)
        .iter()
        .copied()
        .filter(|e| !interview.items.contains(&e.0))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(user as u64);
    rest.shuffle(&mut rng);
    rest
}

/// Mixed-regime evaluation: after the interview each user adds the first
/// `⌊fraction·|rest|⌋` of their remaining Answer-Set ratings, folded in one by one.
pub fn run_csw_eval(
    model: &IamModel,
    split: &DatasetSplit,
    interview: &Interview,
    set: UserSet,
    fraction: f64,
    seed: u64,
    audit: Option<&LeakageAudit>,
) -> Result<MetricsReport> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidHyper(format!("fraction {fraction} outside [0, 1]")));
    }
    let mask = interview.mask(model.num_items());
    let users = split.users(set);
    let lists: Vec<Vec<(f64, f64)>> = users
        .par_iter()
        .map(|&u| {
            let asked = AnswerList::from_pairs(split.answers_of(u).iter().copied().filter(|e| mask.get(e.0) == Some(&true)));
            let rest = post_interview_order(split, interview, u, seed);
            let take = (fraction * rest.len() as f64).floor() as usize;
            if let Some(a) = audit {
                for j in asked.items().chain(rest[..take].iter().map(|e| e.0)) {
                    a.record_read(u, j);
                }
            }
            let mut rep = model.representation(&asked)?;
            for &(j, v) in &rest[..take] {
                rep = model.update(&rep, j, v)?;
            }
            Ok(split
                .evaluation_of(u)
                .iter()
                .map(|&(i, v)| (model.score(&rep, i), v.value()))
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut report = MetricsReport::from_lists(&lists, interview.len(), Predictor::name(model))?;
    report.hyper = Some(model.hyper);
    report.seeds = vec![model.hyper.seed];
    Ok(report)
}

/// [`run_csw_eval`] at each fraction.
pub fn csw_sweep(
    model: &IamModel,
    split: &DatasetSplit,
    interview: &Interview,
    set: UserSet,
    fractions: &[f64],
    seed: u64,
) -> Result<Vec<(f64, MetricsReport)>> {
    fractions
        .iter()
        .map(|&f| Ok((f, run_csw_eval(model, split, interview, set, f, seed, None)?)))
        .collect()
}
