//! Newton potential operator of the inclusion: assembly, leading
//! eigenpairs, couplings to the constant function, and resolvent norms.

mod lanczos;
mod operator;
mod spectrum;

pub use lanczos::{top_eigenpairs, EigenPairs, LanczosOptions};
pub use operator::{assemble_newton, self_term, MatvecBackend, NewtonOperator, AUTO_FFT_THRESHOLD, DENSE_LIMIT};
pub use spectrum::{
    couplings, eigensolve, eigensolve_captured_mass, eigensolve_captured_mass_with, eigensolve_with, resolvent_bound, resolvent_norm, EigenMethod,
    EigenOptions, SpectralDecomposition,
};
