//! Transductive matrix factorization baseline.
//!
//! Predicts `q_i · p_u` and learns both factor matrices by per-rating SGD on the
//! L2-regularized squared loss. No bias terms, no clamping of predictions.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{DatasetSplit, SparseRatings, UserSet};
use crate::error::{check_index, Error, Result};
use crate::hyper::Hyperparams;
use crate::iam::Interview;
use crate::linalg::{dot, Matrix};
use crate::observe::{NoObserver, TrainObserver};

pub(crate) const INIT_STD: f64 = 0.01;
/// An epoch loss above this multiple of the initial loss aborts training.
pub(crate) const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct MfModel {
    /// User factors, `U × N`.
    pub p: Matrix,
    /// Item factors, `I × N`.
    pub q: Matrix,
    pub hyper: Hyperparams,
    /// Users that belonged to the training population and so own a meaningful `p_u`.
    pub known_users: Vec<bool>,
}

impl MfModel {
    pub fn init(num_users: usize, num_items: usize, hyper: &Hyperparams) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        let p = Matrix::gaussian(num_users, hyper.latent_dim, INIT_STD, &mut rng);
        let q = Matrix::gaussian(num_items, hyper.latent_dim, INIT_STD, &mut rng);
        MfModel {
            p,
            q,
            hyper: *hyper,
            known_users: vec![false; num_users],
        }
    }

    pub fn num_users(&self) -> usize {
        self.p.rows
    }

    pub fn num_items(&self) -> usize {
        self.q.rows
    }

    pub fn predict(&self, user: usize, item: usize) -> Result<f64> {
        check_index("user", user, self.p.rows)?;
        check_index("item", item, self.q.rows)?;
        Ok(dot(self.q.row(item), self.p.row(user)))
    }

    pub fn is_finite(&self) -> bool {
        self.p.is_finite() && self.q.is_finite()
    }
}

/// Squared error plus the L2 terms of the two touched vectors.
pub fn triple_loss(p: &[f64], q: &[f64], rating: f64, lambda: f64) -> f64 {
    let e = rating - dot(q, p);
    e * e + lambda * (dot(p, p) + dot(q, q))
}

/// Gradient of [`triple_loss`] w.r.t. `(p, q)`.
pub fn triple_gradient(p: &[f64], q: &[f64], rating: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let e = rating - dot(q, p);
    let gp = p.iter().zip(q).map(|(pk, qk)| -2.0 * e * qk + 2.0 * lambda * pk).collect();
    let gq = p.iter().zip(q).map(|(pk, qk)| -2.0 * e * pk + 2.0 * lambda * qk).collect();
    (gp, gq)
}

/// Full objective: squared errors over `data` plus `λ(Σ‖q_i‖² + Σ‖p_u‖²)`.
pub fn objective(model: &MfModel, data: &SparseRatings) -> f64 {
    let lambda = model.hyper.lambda1;
    let fit: f64 = data
        .triples()
        .iter()
        .map(|t| {
            let e = t.value.value() - dot(model.q.row(t.item), model.p.row(t.user));
            e * e
        })
        .sum();
    fit + lambda * (dot(&model.p.data, &model.p.data) + dot(&model.q.data, &model.q.data))
}

/// Gradient of [`objective`] as `(∂P, ∂Q)`.
pub fn gradient(model: &MfModel, data: &SparseRatings) -> (Matrix, Matrix) {
    let lambda = model.hyper.lambda1;
    let mut gp = Matrix::zeros(model.p.rows, model.p.cols);
    let mut gq = Matrix::zeros(model.q.rows, model.q.cols);
    for t in data.triples() {
        let p = model.p.row(t.user);
        let q = model.q.row(t.item);
        let e = t.value.value() - dot(q, p);
        for k in 0..p.len() {
            gp.row_mut(t.user)[k] -= 2.0 * e * q[k];
            gq.row_mut(t.item)[k] -= 2.0 * e * p[k];
        }
    }
    for (g, v) in gp.data.iter_mut().zip(&model.p.data) {
        *g += 2.0 * lambda * v;
    }
    for (g, v) in gq.data.iter_mut().zip(&model.q.data) {
        *g += 2.0 * lambda * v;
    }
    (gp, gq)
}

/// Trains on every triple of `train`.
pub fn mf_train(train: &SparseRatings, hyper: &Hyperparams) -> Result<MfModel> {
    mf_train_observed(train, hyper, &[], &mut NoObserver)
}

/// `extra_known` marks users that belong to the population even without triples.
pub fn mf_train_observed<O: TrainObserver>(
    train: &SparseRatings,
    hyper: &Hyperparams,
    extra_known: &[usize],
    observer: &mut O,
) -> Result<MfModel> {
    hyper.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut model = MfModel::init(train.num_users(), train.num_items(), hyper);
    for t in train.triples() {
        model.known_users[t.user] = true;
    }
    for &u in extra_known {
        model.known_users[u] = true;
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    rng.set_stream(1);
    let eta = hyper.learning_rate;
    let lambda = hyper.lambda1;
    let initial = objective(&model, train).max(f64::MIN_POSITIVE);
    let n = hyper.latent_dim;
    let mut p_old = vec![0.0; n];
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let mut loss = 0.0;
        for &idx in &order {
            let t = train.triples()[idx];
            observer.on_visit(t.user, t.item);
            let r = t.value.value();
            p_old.copy_from_slice(model.p.row(t.user));
            let e = r - dot(model.q.row(t.item), &p_old);
            loss += e * e;
            {
                let q = model.q.row(t.item);
                let p = model.p.row_mut(t.user);
                for k in 0..n {
                    p[k] += eta * (e * q[k] - lambda * p[k]);
                }
            }
            let q = model.q.row_mut(t.item);
            for k in 0..n {
                q[k] += eta * (e * p_old[k] - lambda * q[k]);
            }
        }
        observer.on_epoch(epoch, loss);
        log::debug!("mf epoch {epoch}: loss {loss:.6}");
        if !loss.is_finite() || loss > DIVERGENCE_FACTOR * initial {
            return Err(Error::Divergence {
                epoch,
                loss,
                initial,
            });
        }
    }
    Ok(model)
}

/// Cold-start baseline: training users plus the `set` users' Answer-Set ratings on
/// interview items. Every `set` user gets a `p_u`, trained or not.
pub fn mf_train_coldstart_baseline(
    data: &SparseRatings,
    split: &DatasetSplit,
    set: UserSet,
    interview: &Interview,
    hyper: &Hyperparams,
) -> Result<MfModel> {
    mf_train_coldstart_observed(data, split, set, interview, hyper, &mut NoObserver)
}

pub fn mf_train_coldstart_observed<O: TrainObserver>(
    data: &SparseRatings,
    split: &DatasetSplit,
    set: UserSet,
    interview: &Interview,
    hyper: &Hyperparams,
    observer: &mut O,
) -> Result<MfModel> {
    let mask = interview.mask(data.num_items());
    let train = split.training_with_answers(data, set, |i| mask[i]);
    mf_train_observed(&train, hyper, split.users(set), observer)
}

/// Warm protocol: training users plus every Answer Set of `set`.
pub fn mf_train_warm_protocol<O: TrainObserver>(
    data: &SparseRatings,
    split: &DatasetSplit,
    set: UserSet,
    hyper: &Hyperparams,
    observer: &mut O,
) -> Result<MfModel> {
    let train = split.training_with_answers(data, set, |_| true);
    mf_train_observed(&train, hyper, split.users(set), observer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{RatingTriple, Vote};
    use crate::observe::Recorder;

    fn triple(user: usize, item: usize, v: Vote) -> RatingTriple {
        RatingTriple {
            user,
            item,
            raw: v.value(),
            value: v,
        }
    }

    #[test]
    fn predict_is_a_dot_product() {
        let mut m = MfModel::init(1, 1, &Hyperparams { latent_dim: 2, ..Default::default() });
        m.p.row_mut(0).copy_from_slice(&[1.0, 2.0]);
        m.q.row_mut(0).copy_from_slice(&[0.5, -1.0]);
        assert_eq!(m.predict(0, 0).unwrap(), -1.5);
        m.q.row_mut(0).copy_from_slice(&[1.0, 2.0]);
        assert_eq!(m.predict(0, 0).unwrap(), 5.0);
        m.p.row_mut(0).copy_from_slice(&[0.0, 0.0]);
        assert_eq!(m.predict(0, 0).unwrap(), 0.0);
        assert!(matches!(m.predict(1, 0), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(m.predict(0, 3), Err(Error::IndexOutOfRange { .. })));
    }

    /// `x ← x + η(1 − x²)x`: the symmetric 1-D reduction of the single-rating problem.
    fn scalar_oracle(x0: f64, eta: f64, epochs: usize) -> f64 {
        let mut x = x0;
        for _ in 0..epochs {
            x += eta * (1.0 - x * x) * x;
        }
        x * x
    }

    #[test]
    fn single_rating_converges_to_target() {
        // the closed-form minimum is q·p = 1; the scalar recursion reaches it from the
        // same initial scale well inside the epoch budget
        assert!((scalar_oracle(0.01, 0.1, 200) - 1.0).abs() < 1e-6);
        let data = SparseRatings::new(1, 1, vec![triple(0, 0, Vote::Like)]);
        let hyper = Hyperparams {
            latent_dim: 2,
            learning_rate: 0.1,
            lambda1: 0.0,
            epochs: 200,
            seed: 3,
            ..Default::default()
        };
        let m = mf_train(&data, &hyper).unwrap();
        assert!((m.predict(0, 0).unwrap() - 1.0).abs() < 0.01);
    }

    #[test]
    fn single_rating_error_decreases_monotonically() {
        let data = SparseRatings::new(1, 1, vec![triple(0, 0, Vote::Like)]);
        let hyper = Hyperparams {
            latent_dim: 2,
            learning_rate: 0.01,
            lambda1: 0.0,
            epochs: 400,
            seed: 1,
            ..Default::default()
        };
        let mut rec = Recorder::default();
        mf_train_observed(&data, &hyper, &[], &mut rec).unwrap();
        for w in rec.epoch_losses.windows(2) {
            assert!(w[1] <= w[0], "{} then {}", w[0], w[1]);
        }
    }

    #[test]
    fn constant_matrix_is_recovered() {
        let triples = (0..6)
            .flat_map(|u| (0..5).map(move |i| triple(u, i, Vote::Like)))
            .collect();
        let data = SparseRatings::new(6, 5, triples);
        let hyper = Hyperparams {
            latent_dim: 3,
            learning_rate: 0.05,
            lambda1: 0.0,
            epochs: 300,
            seed: 9,
            ..Default::default()
        };
        let m = mf_train(&data, &hyper).unwrap();
        for u in 0..6 {
            for i in 0..5 {
                assert!((m.predict(u, i).unwrap() - 1.0).abs() < 0.05);
            }
        }
    }

    #[test]
    fn planted_rank_one_signs_are_recovered() {
        // planted model: a_u, b_i in {-2..2} \ {0}; oracle accuracy of the planted
        // model on its own signs is 1 by construction
        let a: Vec<f64> = (0..20).map(|u| [-2.0, -1.0, 1.0, 2.0][u % 4] * (1.0 + u as f64 / 40.0)).collect();
        let b: Vec<f64> = (0..20).map(|i| [1.0, -1.0, 2.0, -2.0, 1.5][i % 5] * (1.0 + i as f64 / 30.0)).collect();
        let mut triples = Vec::new();
        for u in 0..20 {
            for i in 0..20 {
                let v = if a[u] * b[i] >= 0.0 { Vote::Like } else { Vote::Dislike };
                triples.push(triple(u, i, v));
            }
        }
        let oracle_correct = triples
            .iter()
            .filter(|t| Vote::from_prediction(a[t.user] * b[t.item]) == t.value)
            .count();
        assert_eq!(oracle_correct, 400);
        let data = SparseRatings::new(20, 20, triples);
        let hyper = Hyperparams {
            latent_dim: 4,
            learning_rate: 0.05,
            lambda1: 1e-4,
            epochs: 200,
            seed: 2,
            ..Default::default()
        };
        let m = mf_train(&data, &hyper).unwrap();
        let correct = data
            .triples()
            .iter()
            .filter(|t| Vote::from_prediction(m.predict(t.user, t.item).unwrap()) == t.value)
            .count();
        assert!(correct as f64 / 400.0 >= 0.95, "{correct}/400");
    }

    #[test]
    fn seed_determinism() {
        let triples = (0..4)
            .flat_map(|u| (0..3).map(move |i| triple(u, i, if (u + i) % 2 == 0 { Vote::Like } else { Vote::Dislike })))
            .collect();
        let data = SparseRatings::new(4, 3, triples);
        let hyper = Hyperparams { latent_dim: 2, epochs: 5, seed: 42, ..Default::default() };
        assert_eq!(mf_train(&data, &hyper).unwrap(), mf_train(&data, &hyper).unwrap());
        let other = mf_train(&data, &hyper.with_seed(43)).unwrap();
        assert_ne!(mf_train(&data, &hyper).unwrap(), other);
    }

    #[test]
    fn divergence_is_reported() {
        let triples = (0..5)
            .flat_map(|u| (0..5).map(move |i| triple(u, i, Vote::Like)))
            .collect();
        let data = SparseRatings::new(5, 5, triples);
        let hyper = Hyperparams {
            latent_dim: 4,
            learning_rate: 50.0,
            lambda1: 0.0,
            epochs: 50,
            seed: 0,
            ..Default::default()
        };
        assert!(matches!(mf_train(&data, &hyper), Err(Error::Divergence { .. })));
    }

    #[test]
    fn sgd_step_is_half_eta_gradient() {
        let data = SparseRatings::new(1, 1, vec![triple(0, 0, Vote::Dislike)]);
        let hyper = Hyperparams { latent_dim: 3, learning_rate: 0.1, lambda1: 0.2, epochs: 1, seed: 5, ..Default::default() };
        let init = MfModel::init(1, 1, &hyper);
        let (gp, gq) = triple_gradient(init.p.row(0), init.q.row(0), -1.0, 0.2);
        let trained = mf_train(&data, &hyper).unwrap();
        for k in 0..3 {
            assert!((trained.p.row(0)[k] - (init.p.row(0)[k] - 0.05 * gp[k])).abs() < 1e-15);
            assert!((trained.q.row(0)[k] - (init.q.row(0)[k] - 0.05 * gq[k])).abs() < 1e-15);
        }
    }
}
