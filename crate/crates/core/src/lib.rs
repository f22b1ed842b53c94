//! Score distillation and REINFORCE-style policy gradients routed through a
//! hand-differentiated Gaussian-splat renderer.
//!
//! The diffusion critic is analytic (a Gaussian / Gaussian-mixture image prior
//! with a closed-form optimal noise predictor), so every gradient in the
//! pipeline can be checked against finite differences or quadrature.
//!
//! Module map:
//! - [`renderer`]: orthographic splat projection, compositing and its exact VJP.
//! - [`critic`]: DDPM schedule, closed-form noise prediction, stochastic steps.
//! - [`sds`]: score-distillation gradients in image and parameter space.
//! - [`policygrad`]: immediate and discounted REINFORCE terms.
//! - [`rewards`]: aesthetic proxy, compression size, brightness.
//! - [`trainer`]: the optimization loop with term scheduling and metrics.

pub mod buffer;
pub mod critic;
pub mod error;
pub mod exec;
pub mod gradcheck;
pub mod linalg;
pub mod policygrad;
pub mod renderer;
pub mod rewards;
pub mod rng;
pub mod sds;
pub mod trainer;

pub use buffer::Buffer;
pub use error::{Error, Result};
