use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::lanczos::{top_eigenpairs, LanczosOptions};
use super::operator::NewtonOperator;
use crate::error::{Error, Result};
use crate::geometry::DomainGrid;

/// Leading eigenpairs of the Newton operator with their couplings to the
/// constant function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDecomposition {
    /// Descending, positive.
    pub eigenvalues: Vec<f64>,
    /// Per-cell coefficients, orthonormal in the weighted inner product.
    pub eigenvectors: Vec<Vec<f64>>,
    /// `c_k = |⟨e_k, 1⟩|²`, in volume units.
    pub couplings: Vec<f64>,
    /// `Σ_k c_k`.
    pub captured_mass: f64,
    /// Volume of the discretized domain.
    pub volume: f64,
    /// Relative eigen-residuals reported by the solver.
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EigenMethod {
    #[default]
    Lanczos,
    /// Full dense eigendecomposition (small grids only).
    Dense,
}

#[derive(Debug, Clone, Copy)]
pub struct EigenOptions {
    pub method: EigenMethod,
    pub seed: u64,
    pub tolerance: f64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            method: EigenMethod::Lanczos,
            seed: 0x5eed,
            tolerance: 1e-11,
        }
    }
}

impl SpectralDecomposition {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Keeps the leading `k` modes.
    pub fn truncated(&self, k: usize) -> SpectralDecomposition {
        let k = k.min(self.len());
        let couplings = self.couplings[..k].to_vec();
        SpectralDecomposition {
            eigenvalues: self.eigenvalues[..k].to_vec(),
            eigenvectors: self.eigenvectors.iter().take(k).cloned().collect(),
            captured_mass: couplings.iter().sum(),
            couplings,
            volume: self.volume,
            residuals: self.residuals.iter().take(k).cloned().collect(),
        }
    }

    /// Drops the eigenvectors, keeping only what the modulation signal
    /// needs.
    pub fn without_vectors(&self) -> SpectralDecomposition {
        SpectralDecomposition {
            eigenvectors: Vec::new(),
            ..self.clone()
        }
    }

    /// Builds a decomposition from known eigenvalues and couplings.
    pub fn from_modes(eigenvalues: Vec<f64>, couplings: Vec<f64>, volume: f64) -> Result<Self> {
        if eigenvalues.len() != couplings.len() || eigenvalues.is_empty() {
            return Err(Error::param("eigenvalue and coupling lists must be non-empty and of equal length"));
        }
        if eigenvalues.iter().any(|l| !(*l > 0.0)) || couplings.iter().any(|c| !(*c >= 0.0)) {
            return Err(Error::param("eigenvalues must be positive and couplings non-negative"));
        }
        if eigenvalues.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::param("eigenvalues must be sorted in descending order"));
        }
        Ok(SpectralDecomposition {
            residuals: vec![0.0; eigenvalues.len()],
            captured_mass: couplings.iter().sum(),
            eigenvalues,
            couplings,
            eigenvectors: Vec::new(),
            volume,
        })
    }

    /// Smallest mode count whose captured mass reaches `(1 − delta)·|Ω|`.
    pub fn modes_for_captured_mass(&self, delta: f64) -> Option<usize> {
        let target = (1.0 - delta) * self.volume;
        let mut acc = 0.0;
        for (k, c) in self.couplings.iter().enumerate() {
            acc += c;
            if acc >= target {
                return Some(k + 1);
            }
        }
        None
    }

    /// CSV with columns `k, lambda, coupling, captured_mass_cumulative`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,lambda,coupling,captured_mass_cumulative\n");
        let mut acc = 0.0;
        for (k, (l, c)) in self.eigenvalues.iter().zip(&self.couplings).enumerate() {
            acc += c;
            out.push_str(&format!("{},{},{},{}\n", k + 1, crate::Num(*l), crate::Num(*c), crate::Num(acc)));
        }
        out
    }
}

/// `c_k = (Σ_j w_j e_k(x_j))²` for every computed mode.
pub fn couplings(eigenvectors: &[Vec<f64>], grid: &DomainGrid) -> Vec<f64> {
    eigenvectors
        .iter()
        .map(|e| {
            let p: f64 = e.iter().zip(&grid.weights).map(|(e, w)| e * w).sum();
            p * p
        })
        .collect()
}

/// Leading `k` eigenpairs with the default solver settings.
pub fn eigensolve(op: &NewtonOperator, k: usize) -> Result<SpectralDecomposition> {
    eigensolve_with(op, k, EigenOptions::default())
}

pub fn eigensolve_with(op: &NewtonOperator, k: usize, opts: EigenOptions) -> Result<SpectralDecomposition> {
    let n = op.len();
    if k == 0 || k > n {
        return Err(Error::param(format!("mode count must lie in 1..={n}, got {k}")));
    }
    let grid = op.grid();
    let (values, vectors, residuals) = match opts.method {
        EigenMethod::Lanczos => {
            let mut lopts = LanczosOptions::for_modes(k, n);
            lopts.seed = opts.seed;
            lopts.tolerance = opts.tolerance;
            let pairs = top_eigenpairs(n, k, |x, y| op.apply_symmetric(x, y), lopts)?;
            let theta = pairs.values[0].abs().max(1e-300);
            let res = pairs.residuals.iter().map(|r| r / theta).collect();
            (pairs.values, pairs.vectors, res)
        }
        EigenMethod::Dense => {
            let m = DMatrix::from_row_slice(n, n, &op.symmetric_matrix());
            let eig = SymmetricEigen::new(m);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
            let values = order[..k].iter().map(|&c| eig.eigenvalues[c]).collect();
            let vectors = order[..k]
                .iter()
                .map(|&c| eig.eigenvectors.column(c).iter().cloned().collect())
                .collect();
            (values, vectors, vec![0.0; k])
        }
    };
    if let Some(bad) = values.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Quality(format!("non-positive Newton eigenvalue {bad}")));
    }
    // Back to weighted-orthonormal coefficients e = W^{-1/2} y.
    let eigenvectors: Vec<Vec<f64>> = vectors
        .into_iter()
        .map(|y| y.iter().zip(&grid.weights).map(|(y, w)| y / w.sqrt()).collect())
        .collect();
    let couplings = couplings(&eigenvectors, grid);
    Ok(SpectralDecomposition {
        eigenvalues: values,
        captured_mass: couplings.iter().sum(),
        couplings,
        eigenvectors,
        volume: grid.volume,
        residuals,
    })
}

/// Solves for increasing mode counts until the captured mass reaches
/// `(1 − delta)|Ω|`, then truncates to the smallest sufficient count.
pub fn eigensolve_captured_mass(op: &NewtonOperator, delta: f64, max_modes: usize) -> Result<SpectralDecomposition> {
    eigensolve_captured_mass_with(op, delta, max_modes, EigenOptions::default())
}

pub fn eigensolve_captured_mass_with(
    op: &NewtonOperator,
    delta: f64,
    max_modes: usize,
    opts: EigenOptions,
) -> Result<SpectralDecomposition> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param(format!("captured-mass deficit must lie in (0,1), got {delta}")));
    }
    let cap = max_modes.min(op.len());
    let mut k = 8.min(cap);
    loop {
        let dec = eigensolve_with(op, k, opts)?;
        if let Some(kk) = dec.modes_for_captured_mass(delta) {
            return Ok(dec.truncated(kk));
        }
        if k == cap {
            return Err(Error::Quality(format!(
                "captured mass {:.6} of volume {:.6} after {k} modes is below target 1-{delta}",
                dec.captured_mass, dec.volume
            )));
        }
        k = (2 * k).min(cap);
    }
}

/// `sup_{λ ∈ {0} ∪ σ} 1/|1 + z²λ|`, with `λ = 0` standing in for the
/// accumulation point of the spectrum.
pub fn resolvent_norm(dec: &SpectralDecomposition, z: Complex64) -> Result<f64> {
    if !(z.re > 0.0) {
        return Err(Error::param(format!("resolvent requires Re z > 0, got {z}")));
    }
    if dec.is_empty() {
        return Err(Error::param("empty spectral decomposition"));
    }
    let z2 = z * z;
    Ok(dec
        .eigenvalues
        .iter()
        .map(|&l| 1.0 / (Complex64::new(1.0, 0.0) + z2 * l).norm())
        .fold(1.0, f64::max))
}

/// Upper bound on `‖(1 + z²N₀)^{-1}‖` valid for any non-negative spectrum.
pub fn resolvent_bound(z: Complex64) -> f64 {
    let (c, g) = (z.re, z.im.abs());
    if g <= c {
        1.0
    } else {
        z.norm_sqr() / (2.0 * c * g)
    }
}
