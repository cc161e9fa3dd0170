//! Plane-strain P1 finite elements for unilateral and ideal multibody
//! contact, solved by penalty regularization and a family of parallel
//! domain-decomposition iterations.
//!
//! The crate is organized bottom-up:
//!
//! - [`sparse`]: CSR symmetric matrices, conjugate gradients, Dirichlet
//!   elimination
//! - [`material`]: the nonlinear constitutive law sigma = lambda Theta I +
//!   2 mu eps - 2 mu omega(e) dev eps and the admissible omega families
//! - [`mesh`]: per-body triangulations, boundary tags, contact-pair
//!   quadrature built by closest-point projection, mesh generators
//! - [`io`]: plain-text problem files (round-trip exact)
//! - [`dof`]: body-major free-dof numbering
//! - [`penalty`]: the penalty functional J, its gradient, the per-body
//!   interface operators X for each characteristic-function policy
//! - [`forms`]: the elastic form A, loads L, nonlinear energy H with
//!   derivatives, and numeric estimation of the convergence constants
//! - [`solver`]: the stationary / nonstationary / Newton-like
//!   domain-decomposition iterations with per-body parallel subdomain solves
//! - [`oracle`]: a monolithic semismooth-Newton reference solver and
//!   derivative/contact audits
//! - [`suites`]: shared benchmark problem definitions

pub mod dof;
pub mod forms;
pub mod io;
pub mod material;
pub mod mesh;
pub mod oracle;
pub mod penalty;
pub mod solver;
pub mod sparse;
pub mod suites;
