//! Two-component PCA of the weighted translations of a cold-start model.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::{IdMap, Vote};
use crate::error::{Error, Result};
use crate::iam::{IamModel, Mode};
use crate::linalg::{dot, norm};

const TOLERANCE: f64 = 1e-10;
const MAX_ITERATIONS: usize = 10_000;

/// Principal directions of a vector set.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Unit components, largest eigenvalue first.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
}

/// `(1/m) Σ (x − x̄)(x − x̄)ᵀ`.
fn covariance(vectors: &[Vec<f64>], mean: &[f64]) -> Vec<Vec<f64>> {
    let n = mean.len();
    let mut cov = vec![vec![0.0; n]; n];
    for v in vectors {
        for a in 0..n {
            let da = v[a] - mean[a];
            for b in a..n {
                cov[a][b] += da * (v[b] - mean[b]);
            }
        }
    }
    let m = vectors.len() as f64;
    for a in 0..n {
        for b in a..n {
            cov[a][b] /= m;
            cov[b][a] = cov[a][b];
        }
    }
    cov
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, v)).collect()
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let c = dot(v, b);
        for (x, y) in v.iter_mut().zip(b) {
            *x -= c * y;
        }
    }
}

/// First non-zero coordinate positive.
fn fix_sign(v: &mut [f64]) {
    if let Some(&first) = v.iter().find(|x| x.abs() > 1e-12) {
        if first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Power iteration with deflation; each iterate is re-orthogonalized against the
/// components already found.
pub fn pca(vectors: &[Vec<f64>], k: usize) -> Result<Pca> {
    if vectors.len() < 3 {
        return Err(Error::Insufficient(format!("PCA needs at least 3 vectors, got {}", vectors.len())));
    }
    let n = vectors[0].len();
    if k > n {
        return Err(Error::Insufficient(format!("cannot extract {k} components from {n} dimensions")));
    }
    let m = vectors.len() as f64;
    let mut mean = vec![0.0; n];
    for v in vectors {
        for (a, x) in mean.iter_mut().zip(v) {
            *a += x / m;
        }
    }
    let mut cov = covariance(vectors, &mean);
    let mut components: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut eigenvalues = Vec::with_capacity(k);
    for c in 0..k {
        // deterministic start: all ones nudged per coordinate
        let mut v: Vec<f64> = (0..n).map(|a| 1.0 + (a + c) as f64 * 0.1).collect();
        orthogonalize(&mut v, &components);
        let mut len = norm(&v);
        if len < 1e-300 {
            v = (0..n).map(|a| if a == c { 1.0 } else { 0.0 }).collect();
            orthogonalize(&mut v, &components);
            len = norm(&v);
        }
        v.iter_mut().for_each(|x| *x /= len);
        let mut lambda = 0.0;
        for _ in 0..MAX_ITERATIONS {
            let mut w = mat_vec(&cov, &v);
            orthogonalize(&mut w, &components);
            let wn = norm(&w);
            if wn < 1e-300 {
                // remaining spectrum is zero; any orthogonal unit vector will do
                lambda = 0.0;
                break;
            }
            w.iter_mut().for_each(|x| *x /= wn);
            let diff = v.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let flip = v.iter().zip(&w).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
            v = w;
            lambda = wn;
            if diff.min(flip) < TOLERANCE {
                break;
            }
        }
        let rayleigh = dot(&v, &mat_vec(&cov, &v));
        lambda = if lambda == 0.0 { 0.0 } else { rayleigh };
        fix_sign(&mut v);
        for a in 0..n {
            for b in 0..n {
                cov[a][b] -= lambda * v[a] * v[b];
            }
        }
        components.push(v);
        eigenvalues.push(lambda);
    }
    Ok(Pca {
        mean,
        components,
        eigenvalues,
    })
}

impl Pca {
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        let centered: Vec<f64> = v.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        self.components.iter().map(|c| dot(c, &centered)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaRow {
    pub item: usize,
    pub vote: Vote,
    pub x: f64,
    pub y: f64,
    /// `‖α_i Ψ_i^r‖`.
    pub norm: f64,
}

/// Projects `{α_i Ψ_i^{±1} : α_i ≠ 0}` onto its top two principal components.
pub fn export_pca(model: &IamModel) -> Result<Vec<PcaRow>> {
    if model.mode == Mode::Warm {
        return Err(Error::Mode("PCA export needs a cold-start or mixed model".into()));
    }
    if model.latent_dim() < 2 {
        return Err(Error::Insufficient("PCA export needs latent dimension >= 2".into()));
    }
    let mut keys = Vec::new();
    let mut vectors = Vec::new();
    for i in 0..model.num_items() {
        let a = model.alpha[i];
        if a == 0.0 {
            continue;
        }
        for vote in [Vote::Like, Vote::Dislike] {
            keys.push((i, vote));
            vectors.push(model.translation(i, vote).iter().map(|x| a * x).collect::<Vec<f64>>());
        }
    }
    let p = pca(&vectors, 2)?;
    Ok(keys
        .into_iter()
        .zip(&vectors)
        .map(|((item, vote), v)| {
            let xy = p.project(v);
            PcaRow {
                item,
                vote,
                x: xy[0],
                y: xy[1],
                norm: norm(v),
            }
        })
        .collect())
}

/// `item_id  sign  x  y  norm`, tab-separated with a header.
pub fn write_pca(rows: &[PcaRow], item_ids: &IdMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("item\tsign\tx\ty\tnorm\n");
    for r in rows {
        let id = item_ids.original(r.item).map(str::to_string).unwrap_or_else(|| r.item.to_string());
        let sign = if r.vote == Vote::Like { "+1" } else { "-1" };
        writeln!(out, "{id}\t{sign}\t{:.12e}\t{:.12e}\t{:.12e}", r.x, r.y, r.norm).unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyper::Hyperparams;
    use nalgebra::{DMatrix, SymmetricEigen};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(rows: usize, cols: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..rows)
            .map(|_| (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn projected_variance_matches_eigen_oracle() {
        for seed in 0..10 {
            let set = random_set(10, 5, seed);
            let p = pca(&set, 2).unwrap();
            let proj: Vec<Vec<f64>> = set.iter().map(|v| p.project(v)).collect();
            let var: f64 = proj.iter().map(|xy| xy[0] * xy[0] + xy[1] * xy[1]).sum::<f64>() / 10.0;
            let cov = covariance(&set, &p.mean);
            let m = DMatrix::from_fn(5, 5, |a, b| cov[a][b]);
            let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
            ev.sort_by(|a, b| b.total_cmp(a));
            assert!((var - (ev[0] + ev[1])).abs() < 1e-8, "{var} vs {}", ev[0] + ev[1]);
            for a in 0..2 {
                for b in 0..2 {
                    let d = dot(&p.components[a], &p.components[b]);
                    assert!((d - if a == b { 1.0 } else { 0.0 }).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn two_dimensional_input_is_an_isometry() {
        let set = random_set(7, 2, 3);
        let p = pca(&set, 2).unwrap();
        let proj: Vec<Vec<f64>> = set.iter().map(|v| p.project(v)).collect();
        for a in 0..7 {
            for b in 0..7 {
                let d0 = norm(&[set[a][0] - set[b][0], set[a][1] - set[b][1]]);
                let d1 = norm(&[proj[a][0] - proj[b][0], proj[a][1] - proj[b][1]]);
                assert!((d0 - d1).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn collinear_input_has_flat_second_coordinate() {
        let dir = [0.3, -1.2, 0.7, 2.0];
        let set: Vec<Vec<f64>> = (0..6).map(|t| dir.iter().map(|d| d * (t as f64 - 2.5)).collect()).collect();
        let p = pca(&set, 2).unwrap();
        for v in &set {
            assert!(p.project(v)[1].abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic_with_sign_convention() {
        let set = random_set(12, 4, 8);
        let a = pca(&set, 2).unwrap();
        assert_eq!(a, pca(&set, 2).unwrap());
        for c in &a.components {
            assert!(c.iter().find(|x| x.abs() > 1e-12).unwrap() > &0.0);
        }
    }

    #[test]
    fn export_requires_enough_translations() {
        let hyper = Hyperparams { latent_dim: 3, ..Default::default() };
        let mut m = IamModel::init(4, &hyper, Mode::Cold);
        m.alpha = vec![0.5, 0.0, 0.0, 0.0];
        assert!(matches!(export_pca(&m), Err(Error::Insufficient(_))));
        m.alpha = vec![0.5, 0.0, -1.0, 0.0];
        let rows = export_pca(&m).unwrap();
        assert_eq!(rows.len(), 4);
        let expected = norm(m.psi_neg.row(2));
        assert!((rows.iter().find(|r| r.item == 2 && r.vote == Vote::Dislike).unwrap().norm - expected).abs() < 1e-15);
        m.mode = Mode::Warm;
        assert!(matches!(export_pca(&m), Err(Error::Mode(_))));
    }
}
