//! Per-triple loss and analytic gradients.
//!
//! A training triple is one rating `(u, i, r)` of a user with rating list `R_u`.
//! Its representation uses every other rating of `R_u`:
//!
//! ```text
//! f   = Ψ0 + Σ_{j ∈ R_u, j ≠ i} w_j Ψ_j^{r_j}      w_j = 1 (warm) or α_j
//! h   = f, or tanh(f) elementwise in mixed mode
//! ℓ   = (r − q_i·h)² + λ1 (‖q_i‖² + ‖Ψ0‖² + Σ_{j ∈ R_u, j ≠ i} ‖Ψ_j^{r_j}‖²)
//! ```
//!
//! The SGD trainers step every parameter by `−(η/2)·∂ℓ`.

use crate::data::{SparseRatings, Vote};
use crate::linalg::{axpy, dot, Matrix};

use super::{IamModel, Mode};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripleSpec {
    pub lambda1: f64,
    /// Scale translations by `α`.
    pub weighted: bool,
    pub tanh: bool,
}

impl TripleSpec {
    pub fn warm(lambda1: f64) -> Self {
        TripleSpec {
            lambda1,
            weighted: false,
            tanh: false,
        }
    }

    pub fn cold(lambda1: f64) -> Self {
        TripleSpec {
            lambda1,
            weighted: true,
            tanh: false,
        }
    }

    /// Second phase of the mixed regime: only `α` moves, so no L2 term.
    pub fn csw() -> Self {
        TripleSpec {
            lambda1: 0.0,
            weighted: true,
            tanh: true,
        }
    }

    /// The loss the trainer of `model.mode` descends.
    pub fn for_model(model: &IamModel) -> Self {
        match model.mode {
            Mode::Warm => Self::warm(model.hyper.lambda1),
            Mode::Cold => Self::cold(model.hyper.lambda1),
            Mode::Csw => Self::csw(),
        }
    }

    #[inline]
    pub(crate) fn weight(&self, model: &IamModel, item: usize) -> f64 {
        if self.weighted {
            model.alpha[item]
        } else {
            1.0
        }
    }
}

/// Gradient with the same layout as [`IamModel`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct IamGradient {
    pub q: Matrix,
    pub psi0: Vec<f64>,
    pub psi_pos: Matrix,
    pub psi_neg: Matrix,
    pub alpha: Vec<f64>,
}

impl IamGradient {
    pub fn zeros_like(model: &IamModel) -> Self {
        let (i, n) = (model.num_items(), model.latent_dim());
        IamGradient {
            q: Matrix::zeros(i, n),
            psi0: vec![0.0; n],
            psi_pos: Matrix::zeros(i, n),
            psi_neg: Matrix::zeros(i, n),
            alpha: vec![0.0; i],
        }
    }

    fn translation_mut(&mut self, item: usize, vote: Vote) -> &mut [f64] {
        match vote {
            Vote::Like => self.psi_pos.row_mut(item),
            Vote::Dislike => self.psi_neg.row_mut(item),
        }
    }

    /// Concatenation in [`flat_params`] order.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.q.data.len() * 3 + self.psi0.len() + self.alpha.len());
        v.extend_from_slice(&self.q.data);
        v.extend_from_slice(&self.psi0);
        v.extend_from_slice(&self.psi_pos.data);
        v.extend_from_slice(&self.psi_neg.data);
        v.extend_from_slice(&self.alpha);
        v
    }
}

/// All parameters as one vector: `q`, `Ψ0`, `Ψ+`, `Ψ−`, `α`.
pub fn flat_params(model: &IamModel) -> Vec<f64> {
    let g = IamGradient {
        q: model.q.clone(),
        psi0: model.psi0.clone(),
        psi_pos: model.psi_pos.clone(),
        psi_neg: model.psi_neg.clone(),
        alpha: model.alpha.clone(),
    };
    g.flat()
}

/// Inverse of [`flat_params`].
pub fn set_flat_params(model: &mut IamModel, params: &[f64]) {
    let mut rest = params;
    for dst in [
        &mut model.q.data,
        &mut model.psi0,
        &mut model.psi_pos.data,
        &mut model.psi_neg.data,
        &mut model.alpha,
    ] {
        let (head, tail) = rest.split_at(dst.len());
        dst.copy_from_slice(head);
        rest = tail;
    }
    assert!(rest.is_empty(), "parameter vector has the wrong length");
}

/// Computes `f` and `h` for target position `t` of `ratings`; returns `q_i·h`.
pub(crate) fn forward(
    model: &IamModel,
    ratings: &[(usize, Vote)],
    t: usize,
    spec: &TripleSpec,
    f: &mut [f64],
    h: &mut [f64],
) -> f64 {
    f.copy_from_slice(&model.psi0);
    for (pos, &(j, vote)) in ratings.iter().enumerate() {
        if pos == t {
            continue;
        }
        let w = spec.weight(model, j);
        if w != 0.0 {
            axpy(w, model.translation(j, vote), f);
        }
    }
    finish(model, ratings[t].0, spec, f, h)
}

#[inline]
pub(crate) fn finish(model: &IamModel, item: usize, spec: &TripleSpec, f: &[f64], h: &mut [f64]) -> f64 {
    if spec.tanh {
        for (hk, fk) in h.iter_mut().zip(f) {
            *hk = fk.tanh();
        }
    } else {
        h.copy_from_slice(f);
    }
    dot(model.q.row(item), h)
}

/// Loss of the triple at position `t` of `ratings`.
pub fn triple_loss(model: &IamModel, ratings: &[(usize, Vote)], t: usize, spec: &TripleSpec) -> f64 {
    let n = model.latent_dim();
    let (mut f, mut h) = (vec![0.0; n], vec![0.0; n]);
    let (item, vote) = ratings[t];
    let e = vote.value() - forward(model, ratings, t, spec, &mut f, &mut h);
    let mut reg = dot(model.q.row(item), model.q.row(item)) + dot(&model.psi0, &model.psi0);
    for (pos, &(j, v)) in ratings.iter().enumerate() {
        if pos != t {
            let psi = model.translation(j, v);
            reg += dot(psi, psi);
        }
    }
    e * e + spec.lambda1 * reg
}

/// Adds the gradient of [`triple_loss`] to `grad`.
pub fn accumulate_triple_gradient(
    model: &IamModel,
    ratings: &[(usize, Vote)],
    t: usize,
    spec: &TripleSpec,
    grad: &mut IamGradient,
) {
    let n = model.latent_dim();
    let (mut f, mut h) = (vec![0.0; n], vec![0.0; n]);
    let (item, vote) = ratings[t];
    let e = vote.value() - forward(model, ratings, t, spec, &mut f, &mut h);
    let q = model.q.row(item);
    let lam2 = 2.0 * spec.lambda1;
    // ∂ℓ/∂f
    let gf: Vec<f64> = (0..n)
        .map(|k| {
            let d = if spec.tanh { 1.0 - h[k] * h[k] } else { 1.0 };
            -2.0 * e * q[k] * d
        })
        .collect();
    for k in 0..n {
        grad.q.row_mut(item)[k] += -2.0 * e * h[k] + lam2 * q[k];
        grad.psi0[k] += gf[k] + lam2 * model.psi0[k];
    }
    for (pos, &(j, v)) in ratings.iter().enumerate() {
        if pos == t {
            continue;
        }
        let w = spec.weight(model, j);
        let psi = model.translation(j, v);
        if spec.weighted {
            grad.alpha[j] += dot(&gf, psi);
        }
        let g = grad.translation_mut(j, v);
        for k in 0..n {
            g[k] += w * gf[k] + lam2 * psi[k];
        }
    }
}

pub fn triple_gradient(model: &IamModel, ratings: &[(usize, Vote)], t: usize, spec: &TripleSpec) -> IamGradient {
    let mut g = IamGradient::zeros_like(model);
    accumulate_triple_gradient(model, ratings, t, spec, &mut g);
    g
}

/// Sum of [`triple_loss`] over every rating in `data`.
pub fn objective(model: &IamModel, data: &SparseRatings, spec: &TripleSpec) -> f64 {
    (0..data.num_users())
        .map(|u| {
            let r = data.user_ratings(u);
            (0..r.len()).map(|t| triple_loss(model, r, t, spec)).sum::<f64>()
        })
        .sum()
}

/// Gradient of [`objective`].
pub fn gradient(model: &IamModel, data: &SparseRatings, spec: &TripleSpec) -> IamGradient {
    let mut g = IamGradient::zeros_like(model);
    for u in 0..data.num_users() {
        let r = data.user_ratings(u);
        for t in 0..r.len() {
            accumulate_triple_gradient(model, r, t, spec, &mut g);
        }
    }
    g
}

/// Squared-error part of [`objective`] in `O(|ratings|·N)` per user.
pub(crate) fn data_loss(model: &IamModel, data: &SparseRatings, spec: &TripleSpec) -> f64 {
    let n = model.latent_dim();
    let mut s = vec![0.0; n];
    let mut f = vec![0.0; n];
    let mut h = vec![0.0; n];
    let mut total = 0.0;
    for u in 0..data.num_users() {
        let r = data.user_ratings(u);
        s.copy_from_slice(&model.psi0);
        for &(j, v) in r {
            let w = spec.weight(model, j);
            if w != 0.0 {
                axpy(w, model.translation(j, v), &mut s);
            }
        }
        for &(i, v) in r {
            f.copy_from_slice(&s);
            let w = spec.weight(model, i);
            if w != 0.0 {
                axpy(-w, model.translation(i, v), &mut f);
            }
            let e = v.value() - finish(model, i, spec, &f, &mut h);
            total += e * e;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyper::Hyperparams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(seed: u64, mode: Mode) -> (IamModel, Vec<(usize, Vote)>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hyper = Hyperparams {
            latent_dim: 3,
            seed,
            ..Default::default()
        };
        let mut m = IamModel::init(6, &hyper, mode);
        for v in m
            .q
            .data
            .iter_mut()
            .chain(m.psi0.iter_mut())
            .chain(m.psi_pos.data.iter_mut())
            .chain(m.psi_neg.data.iter_mut())
        {
            *v = rng.random_range(-0.8..0.8);
        }
        for a in m.alpha.iter_mut() {
            *a = rng.random_range(-1.0..1.0);
        }
        m.alpha[5] = 0.0;
        let ratings = vec![(0, Vote::Like), (2, Vote::Dislike), (3, Vote::Like), (5, Vote::Dislike)];
        (m, ratings)
    }

    fn fd_check(mode: Mode, spec: TripleSpec) {
        for seed in 0..5 {
            let (mut m, r) = random_instance(seed, mode);
            for t in 0..r.len() {
                let analytic = triple_gradient(&m, &r, t, &spec).flat();
                let base = flat_params(&m);
                let hstep = 1e-5;
                let mut numeric = vec![0.0; base.len()];
                for k in 0..base.len() {
                    let mut p = base.clone();
                    p[k] += hstep;
                    set_flat_params(&mut m, &p);
                    let up = triple_loss(&m, &r, t, &spec);
                    p[k] -= 2.0 * hstep;
                    set_flat_params(&mut m, &p);
                    let down = triple_loss(&m, &r, t, &spec);
                    numeric[k] = (up - down) / (2.0 * hstep);
                }
                set_flat_params(&mut m, &base);
                for (a, b) in analytic.iter().zip(&numeric) {
                    assert!((a - b).abs() <= 1e-6 * (1.0 + b.abs()), "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn warm_gradient_matches_finite_differences() {
        fd_check(Mode::Warm, TripleSpec::warm(0.1));
    }

    #[test]
    fn cold_gradient_matches_finite_differences() {
        fd_check(Mode::Cold, TripleSpec::cold(0.05));
    }

    #[test]
    fn csw_gradient_matches_finite_differences() {
        fd_check(Mode::Csw, TripleSpec::csw());
    }

    #[test]
    fn data_loss_matches_objective_without_l2() {
        let (m, r) = random_instance(3, Mode::Cold);
        let data = SparseRatings::new(
            1,
            6,
            r.iter()
                .map(|&(i, v)| crate::data::RatingTriple {
                    user: 0,
                    item: i,
                    raw: v.value(),
                    value: v,
                })
                .collect(),
        );
        for spec in [TripleSpec::warm(0.0), TripleSpec::cold(0.0), TripleSpec::csw()] {
            let a = objective(&m, &data, &spec);
            let b = data_loss(&m, &data, &spec);
            assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn flat_params_round_trip() {
        let (mut m, _) = random_instance(1, Mode::Cold);
        let p = flat_params(&m);
        let before = m.clone();
        set_flat_params(&mut m, &p);
        assert_eq!(m, before);
    }
}
