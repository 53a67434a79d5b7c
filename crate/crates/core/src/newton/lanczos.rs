//! Thick-restart block Lanczos for the leading eigenpairs of a symmetric
//! operator.
//!
//! Every new Krylov vector is orthogonalized twice against the full basis,
//! so the projected matrix is accumulated explicitly (banded between
//! restarts, arrowhead right after one). The block width matters for
//! voxelized symmetric shapes, whose cubic symmetry leaves exactly
//! threefold-degenerate eigenvalues that a single-vector recurrence misses.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct LanczosOptions {
    /// Largest Krylov basis kept in memory.
    pub max_basis: usize,
    /// Convergence threshold on `‖A y − θ y‖ / |θ_1|`.
    pub tolerance: f64,
    pub max_restarts: usize,
    /// Number of unapplied vectors carried ahead of the expansion.
    pub block: usize,
    pub seed: u64,
}

impl LanczosOptions {
    pub fn for_modes(k: usize, n: usize) -> Self {
        LanczosOptions {
            max_basis: (2 * k + 40).max(k + 20).min(n),
            tolerance: 1e-11,
            max_restarts: 400,
            block: 4,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EigenPairs {
    /// Descending.
    pub values: Vec<f64>,
    /// Euclidean-orthonormal eigenvectors.
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub matvecs: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Orthogonalizes `w` against `basis` twice; returns the accumulated
/// projection coefficients.
fn orthogonalize(basis: &[Vec<f64>], w: &mut [f64]) -> Vec<f64> {
    let mut coeffs = vec![0.0; basis.len()];
    for _ in 0..2 {
        let c: Vec<f64> = basis.par_iter().map(|v| dot(v, w)).collect();
        for (v, ci) in basis.iter().zip(&c) {
            for (wi, vi) in w.iter_mut().zip(v) {
                *wi -= ci * vi;
            }
        }
        for (a, b) in coeffs.iter_mut().zip(&c) {
            *a += b;
        }
    }
    coeffs
}

fn random_unit_orthogonal(n: usize, basis: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
    for _ in 0..5 {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        orthogonalize(basis, &mut v);
        let nv = norm(&v);
        if nv > 1e-8 {
            v.iter_mut().for_each(|x| *x /= nv);
            return Some(v);
        }
    }
    None
}

/// Leading `k` eigenpairs of the symmetric map `apply`.
///
/// Block Krylov expansion: each restart cycle applies the operator to
/// basis vectors in order while keeping `block` unapplied vectors ahead,
/// which resolves eigenvalues of multiplicity up to `block`.
pub fn top_eigenpairs<F>(n: usize, k: usize, mut apply: F, opts: LanczosOptions) -> Result<EigenPairs>
where
    F: FnMut(&[f64], &mut [f64]),
{
    if k == 0 || k > n {
        return Err(Error::param(format!("mode count {k} must lie in 1..={n}")));
    }
    let block = opts.block.clamp(1, n);
    // Applied vectors per cycle; the basis holds `m + block` vectors.
    let m = opts.max_basis.max(k + block).min(n.saturating_sub(block).max(k));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + block);
    for _ in 0..block {
        let v = random_unit_orthogonal(n, &basis, &mut rng).expect("random start block");
        basis.push(v);
    }
    let cap = m + block;
    let mut proj = DMatrix::<f64>::zeros(cap, cap);
    let mut applied = 0usize;
    let mut matvecs = 0usize;
    let mut w = vec![0.0; n];
    let mut worst = f64::INFINITY;

    for restart in 0..=opts.max_restarts {
        let mut exhausted = false;
        while applied < m {
            let j = applied;
            apply(&basis[j], &mut w);
            matvecs += 1;
            let coeffs = orthogonalize(&basis, &mut w);
            for (i, c) in coeffs.iter().enumerate() {
                proj[(i, j)] = *c;
                proj[(j, i)] = *c;
            }
            applied += 1;
            let beta = norm(&w);
            let scale = proj[(0, 0)].abs().max(1e-300);
            if basis.len() >= n {
                exhausted = true;
                continue;
            }
            if beta <= 1e-13 * scale {
                match random_unit_orthogonal(n, &basis, &mut rng) {
                    Some(v) => basis.push(v),
                    None => exhausted = true,
                }
            } else {
                let v: Vec<f64> = w.iter().map(|x| x / beta).collect();
                proj[(basis.len(), j)] = beta;
                proj[(j, basis.len())] = beta;
                basis.push(v);
            }
            if exhausted {
                break;
            }
        }
        let size = applied;
        let tail = basis.len() - size;
        let sub = proj.view((0, 0), (size, size)).into_owned();
        let eig = SymmetricEigen::new(sub);
        let mut order: Vec<usize> = (0..size).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let theta_max = eig.eigenvalues[order[0]].abs().max(1e-300);
        let coupling = proj.view((size, 0), (tail, size)).into_owned();
        let residuals: Vec<f64> = order
            .iter()
            .map(|&c| (&coupling * eig.eigenvectors.column(c)).norm())
            .collect();
        let kk = k.min(size);
        worst = residuals[..kk].iter().cloned().fold(0.0, f64::max) / theta_max;
        let converged = kk == k && (worst <= opts.tolerance || exhausted);

        let keep = if converged {
            k
        } else {
            (k + (m - k) / 2).clamp(k, m.saturating_sub(1).max(k))
        };
        let ritz: Vec<Vec<f64>> = (0..keep)
            .into_par_iter()
            .map(|c| {
                let col = order[c];
                let mut y = vec![0.0; n];
                for (i, v) in basis[..size].iter().enumerate() {
                    let coef = eig.eigenvectors[(i, col)];
                    for (yi, vi) in y.iter_mut().zip(v) {
                        *yi += coef * vi;
                    }
                }
                y
            })
            .collect();

        if converged {
            let values = order[..k].iter().map(|&c| eig.eigenvalues[c]).collect();
            return Ok(EigenPairs {
                values,
                vectors: ritz,
                residuals: residuals[..k].to_vec(),
                matvecs,
            });
        }
        if restart == opts.max_restarts {
            break;
        }

        // Thick restart: kept Ritz vectors followed by the unapplied block.
        let residual_block: Vec<Vec<f64>> = basis.drain(size..).collect();
        proj.fill(0.0);
        for (i, &c) in order[..keep].iter().enumerate() {
            proj[(i, i)] = eig.eigenvalues[c];
        }
        basis = ritz;
        for mut r in residual_block {
            orthogonalize(&basis, &mut r);
            let nr = norm(&r);
            if nr > 1e-8 {
                r.iter_mut().for_each(|x| *x /= nr);
                basis.push(r);
            } else if let Some(v) = random_unit_orthogonal(n, &basis, &mut rng) {
                basis.push(v);
            }
        }
        applied = keep;
    }
    Err(Error::NoConvergence {
        iterations: matvecs,
        worst_residual: worst,
        tolerance: opts.tolerance,
    })
}
