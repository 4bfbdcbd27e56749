//! Training hooks and the leakage audit.

use std::collections::HashSet;
use std::sync::Mutex;

use crate::data::{DatasetSplit, SparseRatings};

/// One lazy-L1 clipping event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipRecord {
    pub item: usize,
    /// Weight before the gradient step.
    pub before: f64,
    /// Weight after the gradient step, before the penalty.
    pub stepped: f64,
    pub penalty: f64,
    pub after: f64,
}

impl ClipRecord {
    /// The penalty snapped a non-zero weight to exactly zero.
    pub fn zeroed(&self) -> bool {
        self.after == 0.0 && self.stepped != 0.0
    }
}

/// Callbacks fired by the SGD trainers. Every method defaults to a no-op.
pub trait TrainObserver {
    /// A training rating is about to be used as an SGD target.
    fn on_visit(&mut self, _user: usize, _item: usize) {}

    /// Whether `on_contributors` should be fed (building the list costs O(n_u)).
    fn wants_contributors(&self) -> bool {
        false
    }

    /// Items whose translations built the representation used to predict `target`.
    fn on_contributors(&mut self, _user: usize, _target: usize, _contributors: &[usize]) {}

    fn on_clip(&mut self, _record: ClipRecord) {}

    fn on_epoch(&mut self, _epoch: usize, _loss: f64) {}
}

/// Observer that ignores everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoObserver;

impl TrainObserver for NoObserver {}

/// Records losses and clip events; handy in tests and for the CLI's progress log.
#[derive(Debug, Default, Clone)]
pub struct Recorder {
    pub epoch_losses: Vec<f64>,
    pub clips: Vec<ClipRecord>,
    pub visits: usize,
}

impl TrainObserver for Recorder {
    fn on_visit(&mut self, _user: usize, _item: usize) {
        self.visits += 1;
    }

    fn on_clip(&mut self, record: ClipRecord) {
        self.clips.push(record);
    }

    fn on_epoch(&mut self, _epoch: usize, loss: f64) {
        self.epoch_losses.push(loss);
    }
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct AuditCounts {
    /// Every (user, item) input seen by a trainer or predictor.
    pub reads: usize,
    /// Inputs that belong to some Evaluation Set.
    pub forbidden_reads: usize,
    /// Training predictions whose representation contained the target itself.
    pub self_contributions: usize,
    pub first_violation: Option<(usize, usize)>,
}

/// Counts every model input against the Evaluation Sets of a split.
///
/// Plug it into a trainer as a [`TrainObserver`] and into the evaluation harness;
/// a clean run ends with `forbidden_reads == 0 && self_contributions == 0`.
#[derive(Debug)]
pub struct LeakageAudit {
    forbidden: HashSet<(usize, usize)>,
    counts: Mutex<AuditCounts>,
}

impl LeakageAudit {
    pub fn new(split: &DatasetSplit) -> Self {
        let forbidden = split
            .evaluation
            .iter()
            .flat_map(|(&u, list)| list.iter().map(move |&(i, _)| (u, i)))
            .collect();
        LeakageAudit {
            forbidden,
            counts: Mutex::new(AuditCounts::default()),
        }
    }

    pub fn record_read(&self, user: usize, item: usize) {
        let mut c = self.counts.lock().unwrap();
        c.reads += 1;
        if self.forbidden.contains(&(user, item)) {
            c.forbidden_reads += 1;
            c.first_violation.get_or_insert((user, item));
        }
    }

    /// Audits a whole training set handed to a memory-based model.
    pub fn record_dataset(&self, data: &SparseRatings) {
        for t in data.triples() {
            self.record_read(t.user, t.item);
        }
    }

    pub fn counts(&self) -> AuditCounts {
        self.counts.lock().unwrap().clone()
    }

    pub fn is_clean(&self) -> bool {
        let c = self.counts.lock().unwrap();
        c.forbidden_reads == 0 && c.self_contributions == 0
    }

    pub fn forbidden_len(&self) -> usize {
        self.forbidden.len()
    }
}

impl TrainObserver for &LeakageAudit {
    fn on_visit(&mut self, user: usize, item: usize) {
        self.record_read(user, item);
    }

    fn wants_contributors(&self) -> bool {
        true
    }

    fn on_contributors(&mut self, user: usize, target: usize, contributors: &[usize]) {
        let mut c = self.counts.lock().unwrap();
        for &j in contributors {
            c.reads += 1;
            if j == target {
                c.self_contributions += 1;
            }
            if self.forbidden.contains(&(user, j)) {
                c.forbidden_reads += 1;
                c.first_violation.get_or_insert((user, j));
            }
        }
    }
}
