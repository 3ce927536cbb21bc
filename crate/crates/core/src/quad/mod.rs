//! Adaptive quadrature over admissible domains and their boundaries.

pub mod cubature;
pub mod domain;
pub mod identities;

pub use cubature::{integrate_boxes, QuadSettings, VectorResult};
pub use domain::{
    integrate_boundary_pairing, integrate_boundary_vec, integrate_boundary_xk, integrate_volume,
    halton, integrate_volume_vec, Domain, Excision, QuadratureResult, Shape, SingularSet,
};
pub use identities::{
    divergence_residual, factorization_residual, gauge_identity_residual, greens_first_residual,
    greens_second_residual, harmonic_power_residual, IdentityResidual,
};
