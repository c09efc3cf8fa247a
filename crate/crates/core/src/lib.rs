//! Mean-field gradient flow of wide shallow models, instantiated on free-knot
//! linear splines `φ(c, h, x) = c·(x − h)₊` over `[0, 1]`.
//!
//! The crate simulates the weights of an N-unit model as interacting
//! particles, evaluates distribution-level quantities (mean-field loss,
//! stationarity), provides the closed-form spectral theory of the linearized
//! dynamics, the localized Gaussian moment closure, and a set of independent
//! numerical oracles used to cross-check all of it.
//!
//! | module | contents |
//! |--------|----------|
//! | [`spline_model`] | the model, ground truths, residual integrals, `u` and `∇u` |
//! | [`ensemble`] | particle initialization, Euler gradient descent, traces |
//! | [`meanfield`] | mixed densities, mean-field loss, stationarity certificates |
//! | [`spectral`] | eigenpairs of the small-`c` kernel and of the linearized generator |
//! | [`gaussian_local`] | moment ODEs for a narrow Gaussian cloud and its stability |
//! | [`stationary`] | equidistant atomic stationary families for `f = x²` |
//! | [`verify`] | finite differences, Nyström/Jacobi, the one-point exact model |
//! | [`scenario`] | configuration and the experiment runners behind the CLI |

pub mod ensemble;
pub mod error;
pub mod gaussian_local;
pub mod meanfield;
pub mod poly;
pub mod quadrature;
pub mod scenario;
pub mod spectral;
pub mod spline_model;
pub mod stationary;
pub mod verify;

pub use ensemble::{init, simulate, simulate_from, Ensemble, InitKind, InitSpec, SimOptions, Trace};
pub use error::{Error, Result};
pub use meanfield::MixedDensity;
pub use spline_model::{GroundTruth, Model, Predictor, Weight};
