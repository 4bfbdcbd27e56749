//! Per-rating SGD for the three regimes.
//!
//! Epochs visit users in a shuffled order and, inside a user, that user's ratings in
//! a shuffled order. Every step uses the parameters as they were before the step.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::objective::{data_loss, TripleSpec};
use super::{l1_clip_step, popularity_damped_alpha, IamModel, Mode};
use crate::data::{SparseRatings, Vote};
use crate::error::{Error, Result};
use crate::hyper::Hyperparams;
use crate::linalg::{axpy, dot};
use crate::mf::DIVERGENCE_FACTOR;
use crate::observe::{ClipRecord, NoObserver, TrainObserver};

/// Below this scale the deferred decay is folded back into the stored rows.
const LAZY_FLUSH: f64 = 1e-3;

pub fn iam_train_warm(train: &SparseRatings, hyper: &Hyperparams) -> Result<IamModel> {
    train_warm_observed(train, hyper, &mut NoObserver)
}

pub fn iam_train_cold(train: &SparseRatings, hyper: &Hyperparams) -> Result<IamModel> {
    train_cold_observed(train, hyper, &mut NoObserver)
}

/// Warm phase on `(q, Ψ0, Ψ)`, then a weight-only phase under `tanh`.
pub fn iam_train_csw(train: &SparseRatings, hyper: &Hyperparams) -> Result<IamModel> {
    train_csw_observed(train, hyper, &mut NoObserver)
}

/// Runs only the weight phase, starting from a trained warm model.
pub fn iam_train_csw_phase2(warm: &IamModel, train: &SparseRatings, hyper: &Hyperparams) -> Result<IamModel> {
    hyper.validate()?;
    if warm.mode != Mode::Warm {
        return Err(Error::Mode(format!("expected a warm model, got {}", warm.mode.name())));
    }
    let mut model = warm.clone();
    model.mode = Mode::Csw;
    model.hyper = *hyper;
    model.alpha.iter_mut().for_each(|a| *a = 1.0);
    let mut rng = epoch_rng(hyper.seed, 2);
    csw_epochs(&mut model, train, hyper, &mut rng, &mut NoObserver)?;
    Ok(model)
}

pub fn train_warm_observed<O: TrainObserver>(
    train: &SparseRatings,
    hyper: &Hyperparams,
    observer: &mut O,
) -> Result<IamModel> {
    check_inputs(train, hyper)?;
    let mut model = IamModel::init(train.num_items(), hyper, Mode::Warm);
    let mut rng = epoch_rng(hyper.seed, 1);
    warm_epochs(&mut model, train, hyper, &mut rng, observer)?;
    Ok(model)
}

pub fn train_cold_observed<O: TrainObserver>(
    train: &SparseRatings,
    hyper: &Hyperparams,
    observer: &mut O,
) -> Result<IamModel> {
    check_inputs(train, hyper)?;
    let mut model = IamModel::init(train.num_items(), hyper, Mode::Cold);
    model.alpha = popularity_damped_alpha(train);
    let mut rng = epoch_rng(hyper.seed, 1);
    cold_epochs(&mut model, train, hyper, &mut rng, observer)?;
    Ok(model)
}

pub fn train_csw_observed<O: TrainObserver>(
    train: &SparseRatings,
    hyper: &Hyperparams,
    observer: &mut O,
) -> Result<IamModel> {
    check_inputs(train, hyper)?;
    let mut model = IamModel::init(train.num_items(), hyper, Mode::Warm);
    let mut rng = epoch_rng(hyper.seed, 1);
    warm_epochs(&mut model, train, hyper, &mut rng, observer)?;
    model.mode = Mode::Csw;
    let mut rng = epoch_rng(hyper.seed, 2);
    csw_epochs(&mut model, train, hyper, &mut rng, observer)?;
    Ok(model)
}

fn check_inputs(train: &SparseRatings, hyper: &Hyperparams) -> Result<()> {
    hyper.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(())
}

pub(crate) fn epoch_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Users of one epoch, in visiting order.
pub(crate) fn shuffled_users(data: &SparseRatings, rng: &mut ChaCha8Rng, users: &mut Vec<usize>) {
    users.clear();
    users.extend(0..data.num_users());
    users.shuffle(rng);
}

/// Positions of one user's ratings, in visiting order.
pub(crate) fn shuffled_positions(n: usize, rng: &mut ChaCha8Rng, pos: &mut Vec<usize>) {
    pos.clear();
    pos.extend(0..n);
    pos.shuffle(rng);
}

fn report_contributors<O: TrainObserver>(
    observer: &mut O,
    model: &IamModel,
    spec: &TripleSpec,
    user: usize,
    ratings: &[(usize, Vote)],
    t: usize,
    buf: &mut Vec<usize>,
) {
    if !observer.wants_contributors() {
        return;
    }
    buf.clear();
    buf.extend(
        ratings
            .iter()
            .enumerate()
            .filter(|&(pos, &(j, _))| pos != t && spec.weight(model, j) != 0.0)
            .map(|(_, &(j, _))| j),
    );
    observer.on_contributors(user, ratings[t].0, buf);
}

fn end_epoch<O: TrainObserver>(observer: &mut O, epoch: usize, loss: f64, initial: f64, tag: &str) -> Result<()> {
    observer.on_epoch(epoch, loss);
    log::debug!("{tag} epoch {epoch}: loss {loss:.6}");
    if !loss.is_finite() || loss > DIVERGENCE_FACTOR * initial {
        return Err(Error::Divergence {
            epoch,
            loss,
            initial,
        });
    }
    Ok(())
}

/// Warm SGD in `O(|ratings|·N)` per epoch.
///
/// A step decays every translation of the user by `c = 1 − ηλ1` and adds the same
/// vector `δ = η e q_i` to all of them except the target's. Inside a user block the
/// stored rows are kept as `base_j` with the true value `C·base_j + A`, so a step only
/// touches `C`, `A`, the target row and the running sum `S = Σ_j current_j`.
fn warm_epochs<O: TrainObserver>(
    model: &mut IamModel,
    train: &SparseRatings,
    hyper: &Hyperparams,
    rng: &mut ChaCha8Rng,
    observer: &mut O,
) -> Result<()> {
    let spec = TripleSpec::warm(hyper.lambda1);
    let n = hyper.latent_dim;
    let eta = hyper.learning_rate;
    let lambda = hyper.lambda1;
    let c = 1.0 - eta * lambda;
    let initial = data_loss(model, train, &spec).max(f64::MIN_POSITIVE);
    let mut users = Vec::new();
    let mut pos = Vec::new();
    let mut contributors = Vec::new();
    let (mut s, mut a, mut f, mut cur, mut q_old, mut delta) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for epoch in 0..hyper.epochs {
        shuffled_users(train, rng, &mut users);
        let mut loss = 0.0;
        for &u in &users {
            let r = train.user_ratings(u);
            if r.is_empty() {
                continue;
            }
            shuffled_positions(r.len(), rng, &mut pos);
            let others = (r.len() - 1) as f64;
            let mut scale = 1.0;
            a.iter_mut().for_each(|v| *v = 0.0);
            s.iter_mut().for_each(|v| *v = 0.0);
            for &(j, v) in r {
                axpy(1.0, model.translation(j, v), &mut s);
            }
            for &t in &pos {
                let (i, v) = r[t];
                observer.on_visit(u, i);
                report_contributors(observer, model, &spec, u, r, t, &mut contributors);
                {
                    let base = model.translation(i, v);
                    for k in 0..n {
                        cur[k] = scale * base[k] + a[k];
                        f[k] = model.psi0[k] + s[k] - cur[k];
                    }
                }
                q_old.copy_from_slice(model.q.row(i));
                let e = v.value() - dot(&q_old, &f);
                loss += e * e;
                {
                    let q = model.q.row_mut(i);
                    for k in 0..n {
                        q[k] += eta * (e * f[k] - lambda * q[k]);
                    }
                }
                for k in 0..n {
                    model.psi0[k] += eta * (e * q_old[k] - lambda * model.psi0[k]);
                    delta[k] = eta * e * q_old[k];
                }
                scale *= c;
                for k in 0..n {
                    a[k] = c * a[k] + delta[k];
                    s[k] = c * (s[k] - cur[k]) + others * delta[k] + cur[k];
                }
                {
                    let base = model.translation_mut(i, v);
                    for k in 0..n {
                        base[k] = (cur[k] - a[k]) / scale;
                    }
                }
                if scale < LAZY_FLUSH {
                    materialize(model, r, scale, &a);
                    scale = 1.0;
                    a.iter_mut().for_each(|v| *v = 0.0);
                }
            }
            materialize(model, r, scale, &a);
        }
        end_epoch(observer, epoch, loss, initial, "iam-warm")?;
    }
    Ok(())
}

fn materialize(model: &mut IamModel, ratings: &[(usize, Vote)], scale: f64, a: &[f64]) {
    if scale == 1.0 && a.iter().all(|&v| v == 0.0) {
        return;
    }
    for &(j, v) in ratings {
        let row = model.translation_mut(j, v);
        for (x, ak) in row.iter_mut().zip(a) {
            *x = scale * *x + ak;
        }
    }
}

/// Cold SGD on `(q, Ψ0, Ψ, α)` with the lazy L1 step on every touched weight.
fn cold_epochs<O: TrainObserver>(
    model: &mut IamModel,
    train: &SparseRatings,
    hyper: &Hyperparams,
    rng: &mut ChaCha8Rng,
    observer: &mut O,
) -> Result<()> {
    let spec = TripleSpec::cold(hyper.lambda1);
    let n = hyper.latent_dim;
    let eta = hyper.learning_rate;
    let lambda = hyper.lambda1;
    let c = 1.0 - eta * lambda;
    let penalty = eta * hyper.lambda2;
    let initial = data_loss(model, train, &spec).max(f64::MIN_POSITIVE);
    let mut users = Vec::new();
    let mut pos = Vec::new();
    let mut contributors = Vec::new();
    let (mut s, mut f, mut q_old, mut gf) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for epoch in 0..hyper.epochs {
        shuffled_users(train, rng, &mut users);
        let mut loss = 0.0;
        for &u in &users {
            let r = train.user_ratings(u);
            if r.is_empty() {
                continue;
            }
            shuffled_positions(r.len(), rng, &mut pos);
            weighted_sum(model, r, &mut s);
            for &t in &pos {
                let (i, v) = r[t];
                observer.on_visit(u, i);
                report_contributors(observer, model, &spec, u, r, t, &mut contributors);
                let alpha_t = model.alpha[i];
                {
                    let psi_t = model.translation(i, v);
                    for k in 0..n {
                        f[k] = model.psi0[k] + s[k] - alpha_t * psi_t[k];
                    }
                }
                q_old.copy_from_slice(model.q.row(i));
                let e = v.value() - dot(&q_old, &f);
                loss += e * e;
                for k in 0..n {
                    gf[k] = -2.0 * e * q_old[k];
                }
                {
                    let q = model.q.row_mut(i);
                    for k in 0..n {
                        q[k] += eta * (e * f[k] - lambda * q[k]);
                    }
                }
                for k in 0..n {
                    model.psi0[k] += eta * (e * q_old[k] - lambda * model.psi0[k]);
                }
                s.iter_mut().for_each(|x| *x = 0.0);
                for (p, &(j, vj)) in r.iter().enumerate() {
                    if p != t {
                        let before = model.alpha[j];
                        let stepped = before - 0.5 * eta * dot(&gf, model.translation(j, vj));
                        let after = l1_clip_step(stepped, penalty);
                        observer.on_clip(ClipRecord {
                            item: j,
                            before,
                            stepped,
                            penalty,
                            after,
                        });
                        model.alpha[j] = after;
                        let psi = model.translation_mut(j, vj);
                        for k in 0..n {
                            psi[k] = c * psi[k] - 0.5 * eta * before * gf[k];
                        }
                    }
                    let w = model.alpha[j];
                    if w != 0.0 {
                        axpy(w, model.translation(j, vj), &mut s);
                    }
                }
            }
        }
        end_epoch(observer, epoch, loss, initial, "iam-cold")?;
    }
    Ok(())
}

/// Weight-only SGD under `tanh`; `q`, `Ψ0` and `Ψ` stay fixed.
fn csw_epochs<O: TrainObserver>(
    model: &mut IamModel,
    train: &SparseRatings,
    hyper: &Hyperparams,
    rng: &mut ChaCha8Rng,
    observer: &mut O,
) -> Result<()> {
    let spec = TripleSpec::csw();
    let n = hyper.latent_dim;
    let eta = hyper.learning_rate;
    let penalty = eta * hyper.lambda2;
    let initial = data_loss(model, train, &spec).max(f64::MIN_POSITIVE);
    let mut users = Vec::new();
    let mut pos = Vec::new();
    let mut contributors = Vec::new();
    let (mut s, mut f, mut h, mut gf) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for epoch in 0..hyper.epochs {
        shuffled_users(train, rng, &mut users);
        let mut loss = 0.0;
        for &u in &users {
            let r = train.user_ratings(u);
            if r.is_empty() {
                continue;
            }
            shuffled_positions(r.len(), rng, &mut pos);
            weighted_sum(model, r, &mut s);
            for &t in &pos {
                let (i, v) = r[t];
                observer.on_visit(u, i);
                report_contributors(observer, model, &spec, u, r, t, &mut contributors);
                let alpha_t = model.alpha[i];
                {
                    let psi_t = model.translation(i, v);
                    for k in 0..n {
                        f[k] = model.psi0[k] + s[k] - alpha_t * psi_t[k];
                        h[k] = f[k].tanh();
                    }
                }
                let q = model.q.row(i);
                let e = v.value() - dot(q, &h);
                loss += e * e;
                for k in 0..n {
                    gf[k] = -2.0 * e * q[k] * (1.0 - h[k] * h[k]);
                }
                s.iter_mut().for_each(|x| *x = 0.0);
                for (p, &(j, vj)) in r.iter().enumerate() {
                    if p != t {
                        let before = model.alpha[j];
                        let stepped = before - 0.5 * eta * dot(&gf, model.translation(j, vj));
                        let after = l1_clip_step(stepped, penalty);
                        observer.on_clip(ClipRecord {
                            item: j,
                            before,
                            stepped,
                            penalty,
                            after,
                        });
                        model.alpha[j] = after;
                    }
                    let w = model.alpha[j];
                    if w != 0.0 {
                        axpy(w, model.translation(j, vj), &mut s);
                    }
                }
            }
        }
        end_epoch(observer, epoch, loss, initial, "iam-csw")?;
    }
    Ok(())
}

/// `Σ_j α_j Ψ_j` over `ratings` (without `Ψ0`).
fn weighted_sum(model: &IamModel, ratings: &[(usize, Vote)], s: &mut [f64]) {
    s.iter_mut().for_each(|x| *x = 0.0);
    for &(j, v) in ratings {
        let w = model.alpha[j];
        if w != 0.0 {
            axpy(w, model.translation(j, v), s);
        }
    }
}
