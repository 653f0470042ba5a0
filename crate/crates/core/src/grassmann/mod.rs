//! Differential forms on `ℂ^Λ`: wedge algebra, supersymmetry, Gaussian
//! integration and the τ-isomorphism.

pub mod form;
pub mod gaussian;
pub mod markov;
pub mod smooth;
pub mod susy;

pub use form::{
    action, collapse, cross_laplacian, heat, heat_with_time, laplacian, Form, Mask,
};
pub use gaussian::{
    gaussian_convolve, gaussian_expectation, gaussian_partial_integrate, mu_convolve_poly,
    GaussianForm,
};
pub use markov::{tau_isomorphism_check, TauIsoReport, TauObservable};
pub use smooth::{integrate, GrassElem, QuadOptions, QuadResult, ScalarFunction, SmoothForm};
pub use susy::{
    collapse_to_tau, collapse_to_tau_scalar, exterior_d, f_of_tau_poly, f_of_weighted_tau,
    interior_x, lie_x, susy_q,
};
