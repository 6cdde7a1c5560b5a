//! Two-dimensional Q^k spectral element kit on Gauss-Lobatto-Legendre nodes.
//!
//! The crate solves linear second-order evolution problems
//!
//! ```text
//!   wave:        u_tt = -Lu + f
//!   parabolic:   u_t  = -Lu + f
//!   schrodinger: i u_t = Lu + V u + f      (L = -Laplacian here)
//! ```
//!
//! with `Lu = -div(a(x,t) grad u) + b(x,t) . grad u + c(x,t) u` on rectangular
//! and curvilinear quadrilateral meshes, using continuous Q^k elements with
//! every integral evaluated by the (k+1)-point tensor GLL rule. That quadrature
//! choice makes the mass matrix diagonal and is the reason nodal errors
//! superconverge at order k+2 on uniform and smoothly mapped grids; the
//! benchmark problems in [`problems`] together with the [`runner`] reproduce
//! those rates, including the documented degradations (k+1 on randomly
//! perturbed meshes, order 2 on straight-sided approximations of a curved
//! domain, ~k+5/3 for Neumann problems on deformed grids).
//!
//! Module map:
//! - [`gll`]: 1-D GLL rules, differentiation matrices, barycentric interpolation
//! - [`mesh`]: structured quadrilateral meshes (Cartesian, perturbed, smooth-mapped, annulus)
//! - [`operator`]: matrix-free stiffness/mass application, Dirichlet lifting, elliptic projection
//! - [`krylov`]: BiCGStab and restarted GMRES for the implicit solves
//! - [`timeint`]: even-derivative Taylor two-step (wave), BDF3 (parabolic), AB4 (Schrodinger)
//! - [`problems`]: benchmark definitions with exact solutions and manufactured forcings
//! - [`analysis`]: discrete l2/linf norms, time-integrated errors, rate fits, CSV reports
//! - [`runner`]: configuration-driven convergence studies and the full study suite

pub mod analysis;
pub mod gll;
pub mod krylov;
pub mod mesh;
pub mod operator;
pub mod problems;
pub mod rng;
pub mod runner;
pub mod timeint;

/// A nodal degree-of-freedom vector over the global GLL nodes of a mesh.
///
/// Real problems use one lane per node. Complex states (Schrodinger) are
/// stored interleaved as `[re_0, im_0, re_1, im_1, ...]`; the operator kernel
/// is lane-generic, so applying it to an interleaved field is arithmetically
/// identical to applying it to the two planes separately.
pub type Field = Vec<f64>;

/// Crate-level error wrapper so binaries can bubble any module failure.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Gll(#[from] gll::GllError),
    #[error(transparent)]
    Mesh(#[from] mesh::MeshError),
    #[error(transparent)]
    Operator(#[from] operator::OperatorError),
    #[error(transparent)]
    Krylov(#[from] krylov::KrylovError),
    #[error(transparent)]
    Problem(#[from] problems::ProblemError),
    #[error(transparent)]
    Timeint(#[from] timeint::TimeintError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
