//! Self-corrective SLAM for sparse, near-uniform landmark point clouds.
//!
//! The pipeline builds an odometry chain from fast pairwise ICP matches,
//! screens long-span frame pairs by view-cone overlap and match error,
//! refines the promising ones with a branch-and-bound global registration,
//! and distributes each accepted correction over the intermediate frames by
//! raising the correction transform to fractional matrix powers. Map quality
//! is tracked with a grid-occupancy blur ratio and per-cluster RMSE.
//!
//! Modules map onto the pipeline stages:
//!
//! * [`se3`] — rigid-transformation algebra: compose, invert, log/exp,
//!   matrix power `τ^u` and geodesic interpolation.
//! * [`cloud`] — sparse landmark frames, nearest-neighbor match error,
//!   natural-neighbor spacing `L0` and view-cone overlap.
//! * [`icp`] — trimmed point-to-point ICP and the convergence-ellipse test.
//! * [`goicp`] — branch-and-bound global registration with auto-tuned
//!   granularity.
//! * [`chain`] — the odometry chain: globalization, correction propagation,
//!   power-coefficient rules, frame weights.
//! * [`select`] — extra-match candidate screening, grid-rounding Poisson
//!   sampling and the improvement loop.
//! * [`quality`] — fused-map metrics: blur ratio, clustering, box-counting
//!   dimension.
//! * [`sim`] — synthetic forests, scan simulation and odometry perturbation.
//! * [`config`] / [`io`] — the line-oriented config format and the text file
//!   formats shared with the CLI.
//!
//! With the default `parallel` feature the data-parallel inner loops (pair
//! screening, branch-and-bound node evaluation, map fusion) run on rayon;
//! without it the same code paths run sequentially. Parallel results are
//! bit-identical to sequential ones: all parallel sections are
//! order-preserving maps whose results are combined sequentially.

pub mod chain;
pub mod cloud;
pub mod config;
pub mod goicp;
pub mod icp;
pub mod io;
pub mod quality;
pub mod se3;
pub mod select;
pub mod sim;

mod parallel;

pub use chain::{Chain, CorrectionRecord, PowerRule};
pub use cloud::{ConePose, Frame, ViewCone};
pub use goicp::BnbConfig;
pub use icp::{ConvergenceLimits, IcpResult};
pub use se3::{RigidTransform, Twist};
