//! Differentiable Gaussian splatting for incremental scene reconstruction.
//!
//! This crate is the allocation-only core: it has no IO and builds without
//! `std`. It provides
//!
//! - [`gaussian`], [`sh`], [`camera`], [`image`]: the scene representation,
//! - [`rasterizer`]: tile-based forward rendering with per-bucket pixel-state
//!   checkpoints, and two interchangeable backward passes (pixel-wise with
//!   shared accumulators, splat-wise over buckets of splats),
//! - [`losses`]: L1 + SSIM photometric loss, opacity regularization, PSNR/SSIM,
//! - [`scheduler`]: loss-prioritized keyframe selection with per-keyframe
//!   iteration budgets, plus the uniform-random baseline,
//! - [`densify`]: seeding from colored points, gradient-driven clone/split and
//!   opacity pruning,
//! - [`optimizer`]: per-attribute adaptive-moment updates.
//!
//! Enable the `parallel` feature to run tiles and work units on rayon.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod camera;
pub mod densify;
pub mod error;
pub mod gaussian;
pub mod image;
pub mod linalg;
pub mod losses;
pub mod optimizer;
mod parallel;
pub mod rasterizer;
pub mod real;
pub mod scheduler;
pub mod sh;

pub use camera::{Camera, Pose};
pub use error::{Error, Result};
pub use gaussian::{GaussianMap, GaussianPrimitive, GradStat, PrimitiveGrad};
pub use image::Image;
pub use real::Real;
