//! Train-and-evaluate drivers for each method under the warm and cold protocols.

use std::fmt;
use std::str::FromStr;

use super::{run_cold_eval_audited, run_warm_eval_audited, MetricsReport};
use crate::data::{DatasetSplit, SparseRatings, UserSet};
use crate::error::{Error, Result};
use crate::hyper::Hyperparams;
use crate::iam::{self, IamModel, Interview};
use crate::knn::ItemKnn;
use crate::mf;
use crate::observe::{ClipRecord, LeakageAudit, TrainObserver};
use crate::select::{self, SelectionMethod};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Mf,
    Iam,
    CsIam,
    CswIam,
    ItemKnn,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Mf, Method::Iam, Method::CsIam, Method::CswIam, Method::ItemKnn];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mf => "mf",
            Method::Iam => "iam",
            Method::CsIam => "csiam",
            Method::CswIam => "cswiam",
            Method::ItemKnn => "itemknn",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Format(format!("unknown method {s:?}")))
    }
}

/// Where the interview of a cold run comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selector {
    Pop,
    Helf,
    /// Non-zero weights of a cold-start model.
    Alpha,
}

impl Selector {
    pub fn name(self) -> &'static str {
        match self {
            Selector::Pop => "pop",
            Selector::Helf => "helf",
            Selector::Alpha => "alpha",
        }
    }
}

impl FromStr for Selector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pop" => Ok(Selector::Pop),
            "helf" => Ok(Selector::Helf),
            "alpha" => Ok(Selector::Alpha),
            _ => Err(Error::Format(format!("unknown selector {s:?}"))),
        }
    }
}

/// Forwards to an optional audit.
struct Audited<'a>(Option<&'a LeakageAudit>);

impl TrainObserver for Audited<'_> {
    fn on_visit(&mut self, user: usize, item: usize) {
        if let Some(a) = self.0 {
            a.record_read(user, item);
        }
    }

    fn wants_contributors(&self) -> bool {
        self.0.is_some()
    }

    fn on_contributors(&mut self, user: usize, target: usize, contributors: &[usize]) {
        if let Some(mut a) = self.0 {
            a.on_contributors(user, target, contributors);
        }
    }

    fn on_clip(&mut self, _record: ClipRecord) {}
}

/// Trains the inductive IAM variant of `method` on the training users only.
pub fn train_iam(method: Method, train: &SparseRatings, hyper: &Hyperparams, audit: Option<&LeakageAudit>) -> Result<IamModel> {
    let mut obs = Audited(audit);
    match method {
        Method::Iam => iam::train_warm_observed(train, hyper, &mut obs),
        Method::CsIam => iam::train_cold_observed(train, hyper, &mut obs),
        Method::CswIam => iam::train_csw_observed(train, hyper, &mut obs),
        _ => Err(Error::Mode(format!("{method} is not an IAM variant"))),
    }
}

fn fit_knn(train: &SparseRatings, k: Option<usize>, audit: Option<&LeakageAudit>) -> Result<ItemKnn> {
    if let Some(a) = audit {
        a.record_dataset(train);
    }
    ItemKnn::fit(train, k)
}

/// Warm protocol: every Answer Set is visible. MF and ItemKNN see the Answer Sets of
/// `set` at training time, the IAM variants only at prediction time.
pub fn warm_run(
    data: &SparseRatings,
    split: &DatasetSplit,
    set: UserSet,
    method: Method,
    hyper: &Hyperparams,
    knn_k: Option<usize>,
    audit: Option<&LeakageAudit>,
) -> Result<MetricsReport> {
    let report = match method {
        Method::Mf => {
            let model = mf::mf_train_warm_protocol(data, split, set, hyper, &mut Audited(audit))?;
            run_warm_eval_audited(&model, split, set, audit)?
        }
        Method::ItemKnn => {
            let knn = fit_knn(&split.training_with_answers(data, set, |_| true), knn_k, audit)?;
            run_warm_eval_audited(&knn, split, set, audit)?
        }
        _ => {
            let model = train_iam(method, &split.training_data(data), hyper, audit)?;
            run_warm_eval_audited(&model, split, set, audit)?
        }
    };
    Ok(report.with_run(hyper))
}

/// The interview a cold run asks. `Alpha` trains a cold-start model unless one is given.
pub fn build_interview(
    train: &SparseRatings,
    selector: Selector,
    questions: Option<usize>,
    hyper: &Hyperparams,
    cold_model: Option<&IamModel>,
) -> Result<Interview> {
    match selector {
        Selector::Pop | Selector::Helf => {
            let k = questions.ok_or_else(|| Error::InvalidHyper("pop/helf selection needs a question count".into()))?;
            let method = if selector == Selector::Pop { SelectionMethod::Pop } else { SelectionMethod::Helf };
            select::select(train, k, method)
        }
        Selector::Alpha => {
            let iv = match cold_model {
                Some(m) => m.interview()?,
                None => iam::iam_train_cold(train, hyper)?.interview()?,
            };
            Ok(match questions {
                Some(k) => iv.truncated(k),
                None => iv,
            })
        }
    }
}

/// Cold-start protocol: users of `set` reveal only their answers to the interview.
#[allow(clippy::too_many_arguments)]
pub fn cold_run(
    data: &SparseRatings,
    split: &DatasetSplit,
    set: UserSet,
    method: Method,
    selector: Selector,
    questions: Option<usize>,
    hyper: &Hyperparams,
    knn_k: Option<usize>,
    audit: Option<&LeakageAudit>,
) -> Result<MetricsReport> {
    let train = split.training_data(data);
    let mut report = match method {
        Method::CsIam | Method::CswIam | Method::Iam => {
            let model = train_iam(method, &train, hyper, audit)?;
            let own = (model.mode != iam::Mode::Warm).then_some(&model);
            let interview = build_interview(&train, selector, questions, hyper, own)?;
            run_cold_eval_audited(&model, split, &interview, set, audit)?
        }
        Method::Mf => {
            let interview = build_interview(&train, selector, questions, hyper, None)?;
            let model = mf::mf_train_coldstart_observed(data, split, set, &interview, hyper, &mut Audited(audit))?;
            run_cold_eval_audited(&model, split, &interview, set, audit)?
        }
        Method::ItemKnn => {
            let interview = build_interview(&train, selector, questions, hyper, None)?;
            let knn = fit_knn(&train, knn_k, audit)?;
            run_cold_eval_audited(&knn, split, &interview, set, audit)?
        }
    };
    report.requested_questions = questions;
    report.method = format!("{}-{}", method.name(), selector.name());
    Ok(report.with_run(hyper))
}
