//! Collocation of the Newton potential `N₀u(x) = (1/4π) ∫_Ω u(y)/|x−y| dy`
//! on a voxel grid.
//!
//! Off-diagonal entries use the centre-to-centre kernel. The singular self
//! cell is replaced by the potential of a ball of equal volume at its
//! centre, `R_eq²/2` with `R_eq = (3w/4π)^{1/3}`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::geometry::DomainGrid;

/// How the matrix-vector product is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatvecBackend {
    /// FFT lattice convolution when the grid is large, direct otherwise.
    #[default]
    Auto,
    /// O(n²) kernel evaluation on the fly.
    Direct,
    /// Precomputed dense matrix.
    Dense,
    /// Zero-padded lattice convolution with the 1/|x| kernel.
    Fft,
}

/// Cell count above which `Auto` switches to the FFT convolution.
pub const AUTO_FFT_THRESHOLD: usize = 3000;
/// Largest grid for which a dense matrix is materialized.
pub const DENSE_LIMIT: usize = 8000;

/// Self-cell value `R_eq²/2` of the equivalent-volume ball.
pub fn self_term(weight: f64) -> f64 {
    let r_eq = (3.0 * weight / (4.0 * PI)).cbrt();
    0.5 * r_eq * r_eq
}

/// Discretized Newton operator on a [`DomainGrid`].
pub struct NewtonOperator {
    grid: Arc<DomainGrid>,
    backend: Backend,
}

enum Backend {
    Direct,
    Dense(Vec<f64>),
    Fft(Box<LatticeConvolution>),
}

impl std::fmt::Debug for NewtonOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.backend {
            Backend::Direct => "direct",
            Backend::Dense(_) => "dense",
            Backend::Fft(_) => "fft",
        };
        f.debug_struct("NewtonOperator")
            .field("cells", &self.grid.len())
            .field("backend", &kind)
            .finish()
    }
}

/// Assembles the operator with the default backend.
pub fn assemble_newton(grid: &DomainGrid) -> NewtonOperator {
    NewtonOperator::new(Arc::new(grid.clone()), MatvecBackend::Auto)
}

impl NewtonOperator {
    pub fn new(grid: Arc<DomainGrid>, backend: MatvecBackend) -> Self {
        let uniform = grid.weights.windows(2).all(|w| w[0] == w[1]);
        let n = grid.len();
        let backend = match backend {
            MatvecBackend::Auto if n > AUTO_FFT_THRESHOLD && uniform => MatvecBackend::Fft,
            MatvecBackend::Auto => MatvecBackend::Direct,
            MatvecBackend::Fft if !uniform => MatvecBackend::Direct,
            MatvecBackend::Dense if n > DENSE_LIMIT => MatvecBackend::Direct,
            b => b,
        };
        let backend = match backend {
            MatvecBackend::Dense => Backend::Dense(dense_matrix(&grid)),
            MatvecBackend::Fft => Backend::Fft(Box::new(LatticeConvolution::new(&grid))),
            _ => Backend::Direct,
        };
        NewtonOperator { grid, backend }
    }

    pub fn grid(&self) -> &DomainGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn backend(&self) -> MatvecBackend {
        match self.backend {
            Backend::Direct => MatvecBackend::Direct,
            Backend::Dense(_) => MatvecBackend::Dense,
            Backend::Fft(_) => MatvecBackend::Fft,
        }
    }

    /// Symmetric under the weighted inner product for any positive weights.
    pub fn is_symmetric(&self) -> bool {
        true
    }

    /// `v_i = Σ_j w_j u_j /(4π|x_i − x_j|)` plus the self-cell term.
    pub fn apply(&self, u: &[f64], v: &mut [f64]) {
        assert_eq!(u.len(), self.len());
        assert_eq!(v.len(), self.len());
        match &self.backend {
            Backend::Direct => direct_apply(&self.grid, u, v),
            Backend::Dense(m) => {
                let n = self.len();
                v.par_iter_mut().enumerate().for_each(|(i, vi)| {
                    let row = &m[i * n..(i + 1) * n];
                    *vi = row.iter().zip(u).map(|(a, b)| a * b).sum();
                });
            }
            Backend::Fft(conv) => conv.apply(u, v),
        }
    }

    pub fn apply_vec(&self, u: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; u.len()];
        self.apply(u, &mut v);
        v
    }

    /// `W^{1/2} N W^{-1/2} x`, the Euclidean-symmetric form used by the
    /// eigensolver.
    pub fn apply_symmetric(&self, x: &[f64], y: &mut [f64]) {
        let w = &self.grid.weights;
        let scaled: Vec<f64> = x.iter().zip(w).map(|(x, w)| x / w.sqrt()).collect();
        self.apply(&scaled, y);
        for (yi, wi) in y.iter_mut().zip(w) {
            *yi *= wi.sqrt();
        }
    }

    /// Dense Euclidean-symmetric matrix, row-major. Intended for small grids.
    pub fn symmetric_matrix(&self) -> Vec<f64> {
        let n = self.len();
        let w = &self.grid.weights;
        let mut m = dense_matrix(&self.grid);
        for i in 0..n {
            for j in 0..n {
                m[i * n + j] *= w[i].sqrt() / w[j].sqrt();
            }
        }
        m
    }
}

fn kernel(xi: [f64; 3], xj: [f64; 3]) -> f64 {
    let d = [xi[0] - xj[0], xi[1] - xj[1], xi[2] - xj[2]];
    1.0 / (4.0 * PI * (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt())
}

fn direct_apply(grid: &DomainGrid, u: &[f64], v: &mut [f64]) {
    let centers = &grid.centers;
    let w = &grid.weights;
    v.par_iter_mut().enumerate().for_each(|(i, vi)| {
        let xi = centers[i];
        let mut acc = 0.0;
        for j in 0..centers.len() {
            if j != i {
                acc += w[j] * u[j] * kernel(xi, centers[j]);
            }
        }
        *vi = acc + self_term(w[i]) * u[i];
    });
}

fn dense_matrix(grid: &DomainGrid) -> Vec<f64> {
    let n = grid.len();
    let mut m = vec![0.0; n * n];
    m.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, a) in row.iter_mut().enumerate() {
            *a = if i == j {
                self_term(grid.weights[i])
            } else {
                grid.weights[j] * kernel(grid.centers[i], grid.centers[j])
            };
        }
    });
    m
}

/// Circular convolution on a zero-padded lattice twice the grid extent, so
/// the periodic wrap never aliases two occupied cells.
struct LatticeConvolution {
    dims: [usize; 3],
    lattice: Vec<[usize; 3]>,
    kernel_hat: Vec<Complex64>,
    plans: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
}

impl LatticeConvolution {
    fn new(grid: &DomainGrid) -> Self {
        let dims = [2 * grid.dims[0], 2 * grid.dims[1], 2 * grid.dims[2]];
        let mut planner = FftPlanner::new();
        let plans = [
            planner.plan_fft_forward(dims[0]),
            planner.plan_fft_forward(dims[1]),
            planner.plan_fft_forward(dims[2]),
        ];
        let inverse = [
            planner.plan_fft_inverse(dims[0]),
            planner.plan_fft_inverse(dims[1]),
            planner.plan_fft_inverse(dims[2]),
        ];
        let w = grid.weights[0];
        let h = grid.h;
        let total = dims[0] * dims[1] * dims[2];
        let mut kern = vec![Complex64::new(0.0, 0.0); total];
        let signed = |i: usize, n: usize| -> f64 {
            if i <= n / 2 {
                i as f64
            } else {
                i as f64 - n as f64
            }
        };
        for i in 0..dims[0] {
            let di = signed(i, dims[0]);
            for j in 0..dims[1] {
                let dj = signed(j, dims[1]);
                for k in 0..dims[2] {
                    let dk = signed(k, dims[2]);
                    let r = h * (di * di + dj * dj + dk * dk).sqrt();
                    let val = if r == 0.0 { self_term(w) } else { w / (4.0 * PI * r) };
                    kern[(i * dims[1] + j) * dims[2] + k] = Complex64::new(val, 0.0);
                }
            }
        }
        let mut conv = LatticeConvolution {
            dims,
            lattice: grid.lattice.clone(),
            kernel_hat: Vec::new(),
            plans,
            inverse,
        };
        conv.transform(&mut kern, false);
        let scale = 1.0 / total as f64;
        for k in &mut kern {
            *k *= scale;
        }
        conv.kernel_hat = kern;
        conv
    }

    fn index(&self, idx: [usize; 3]) -> usize {
        (idx[0] * self.dims[1] + idx[1]) * self.dims[2] + idx[2]
    }

    fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        let plans = if inverse { &self.inverse } else { &self.plans };
        let [n0, n1, n2] = self.dims;
        // Contiguous axis.
        buf.par_chunks_mut(n2).for_each(|line| plans[2].process(line));
        // Middle axis: one slab per first index.
        buf.par_chunks_mut(n1 * n2).for_each(|slab| {
            let mut line = vec![Complex64::new(0.0, 0.0); n1];
            for k in 0..n2 {
                for j in 0..n1 {
                    line[j] = slab[j * n2 + k];
                }
                plans[1].process(&mut line);
                for j in 0..n1 {
                    slab[j * n2 + k] = line[j];
                }
            }
        });
        // Outer axis.
        let stride = n1 * n2;
        let mut line = vec![Complex64::new(0.0, 0.0); n0];
        for jk in 0..stride {
            for i in 0..n0 {
                line[i] = buf[i * stride + jk];
            }
            plans[0].process(&mut line);
            for i in 0..n0 {
                buf[i * stride + jk] = line[i];
            }
        }
    }

    fn apply(&self, u: &[f64], v: &mut [f64]) {
        let total = self.dims[0] * self.dims[1] * self.dims[2];
        let mut buf = vec![Complex64::new(0.0, 0.0); total];
        for (idx, &ui) in self.lattice.iter().zip(u) {
            buf[self.index(*idx)] = Complex64::new(ui, 0.0);
        }
        self.transform(&mut buf, false);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= k;
        }
        self.transform(&mut buf, true);
        for (idx, vi) in self.lattice.iter().zip(v.iter_mut()) {
            *vi = buf[self.index(*idx)].re;
        }
    }
}
