//! Updating a low-fidelity optimal control with a handful of high-fidelity
//! evaluations.
//!
//! The pipeline solves a linear-quadratic control problem with a cheap
//! model, calibrates an affine-in-control model discrepancy from high
//! fidelity data through a closed-form Gaussian posterior, and moves the
//! optimum along the post-optimality sensitivity `−H⁻¹B`. The discrepancy
//! coefficients live in a space of dimension `m(n + 1)`; nothing of that size
//! is ever formed outside [`oracle`].

pub mod calibration;
pub mod cli;
pub mod config;
pub mod control;
pub mod error;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod models;
pub mod oracle;
pub mod pipeline;
pub mod prior;
pub mod problem;
pub mod sampler;
pub mod sensitivity;

pub use calibration::{build_g_spectrum, calibrate, GSpectrum, PosteriorMean, ThetaBlocks};
pub use control::{solve_lf_optimum, LfOptimum, ObjectiveSpec, ReducedHessian};
pub use error::{Error, Result};
pub use mesh::Mesh1D;
pub use models::{generate_discrepancy_data, DiscrepancyData, LinearForwardModel};
pub use prior::{build_elliptic_prior, EllipticPrior, PriorSpec};
pub use problem::{BenchmarkParams, ControlDesign, Problem};
pub use sampler::{sample_prior, PriorSampleSet, SamplePlan};
pub use sensitivity::{apply_b_thetabar, update_solution, UpdateResult};
pub use config::{RunConfig, Stage};
pub use pipeline::Pipeline;
