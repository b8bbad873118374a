// SPDX-License-Identifier: MIT OR Apache-2.0

//! Independent reference implementations used only by tests.
//!
//! These are deliberately written the slow, obvious way and share no code
//! with the library they check.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array4;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Attention ratio by literal quadruple summation over `attn[l][h][j][k]`.
pub fn naive_ratio(attn: &Array4<f64>, layer: usize, head: usize, tokens: &[usize]) -> f64 {
    let t = attn.shape()[2];
    let mut total = 0.0;
    for &i in tokens {
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..t {
            if j <= i {
                continue;
            }
            num += attn[[layer, head, j, i]];
            for k in 0..t {
                den += attn[[layer, head, j, k]];
            }
        }
        total += num / den;
    }
    total / tokens.len() as f64
}

/// Random causal row-stochastic attention `[l, h, t, t]`.
pub fn random_causal_attention(rng: &mut impl Rng, l: usize, h: usize, t: usize) -> Array4<f64> {
    let mut a = Array4::<f64>::zeros((l, h, t, t));
    for li in 0..l {
        for hi in 0..h {
            for j in 0..t {
                let w: Vec<f64> = (0..=j).map(|_| rng.random_range(0.01..1.0)).collect();
                let s: f64 = w.iter().sum();
                for (k, v) in w.into_iter().enumerate() {
                    a[[li, hi, j, k]] = v / s;
                }
            }
        }
    }
    a
}

/// Uniform causal attention: row `j` spreads mass `1/(j+1)` over keys `0..=j`.
pub fn uniform_causal_attention(l: usize, h: usize, t: usize) -> Array4<f64> {
    Array4::from_shape_fn((l, h, t, t), |(_, _, j, k)| {
        if k <= j {
            1.0 / (j as f64 + 1.0)
        } else {
            0.0
        }
    })
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn center(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut c = x.clone();
    for mut col in c.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    c
}

/// PCA by eigendecomposition of the scatter matrix, keeping the smallest
/// number of components whose eigenvalues reach `keep` of the total.
fn pca_scores(x: &DMatrix<f64>, keep: f64) -> DMatrix<f64> {
    let xc = center(x);
    let scatter = xc.transpose() * &xc;
    let eig = SymmetricEigen::new(scatter);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = vals.iter().sum();
    let tol = 1e-12 * vals.first().copied().unwrap_or(0.0).max(1.0);
    let mut k = 0;
    let mut acc = 0.0;
    for v in &vals {
        if *v <= tol {
            break;
        }
        k += 1;
        acc += v;
        if acc >= keep * total - 1e-15 * total {
            break;
        }
    }
    let mut basis = DMatrix::zeros(x.ncols(), k);
    for (c, &i) in order.iter().take(k).enumerate() {
        basis.set_column(c, &eig.eigenvectors.column(i));
    }
    xc * basis
}

/// Mean canonical correlation after PCA truncation, computed through a
/// Cholesky-whitened eigenproblem.
pub fn svcca_oracle(x: &DMatrix<f64>, y: &DMatrix<f64>, keep: f64) -> f64 {
    let a = pca_scores(x, keep);
    let b = pca_scores(y, keep);
    let cxx = a.transpose() * &a;
    let cyy = b.transpose() * &b;
    let cxy = a.transpose() * &b;
    let l = cxx.cholesky().expect("cxx positive definite").l();
    let linv = l.try_inverse().unwrap();
    let cyy_inv = cyy.try_inverse().unwrap();
    let m = &linv * &cxy * cyy_inv * cxy.transpose() * linv.transpose();
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);
    let mut rho: Vec<f64> = eig.eigenvalues.iter().map(|v| v.max(0.0).sqrt().min(1.0)).collect();
    rho.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let n = a.ncols().min(b.ncols());
    rho.truncate(n);
    rho.iter().sum::<f64>() / n as f64
}

/// Random orthogonal matrix via QR of a Gaussian-ish matrix.
pub fn random_orthogonal(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let m = random_matrix(rng, n, n);
    m.qr().q()
}
