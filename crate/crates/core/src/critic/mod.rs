//! Closed-form stand-in for a frozen diffusion denoiser.
//!
//! The image prior is a Gaussian (or a mixture of Gaussians) around procedural
//! targets, which makes the MMSE noise predictor, its Jacobian and the DDPM
//! transition densities available exactly.

mod context;
mod denoiser;
mod schedule;
mod step;

pub use context::{Context, MixtureComponent, CONTEXT_NAMES};
pub use denoiser::{derivative_calls, predict_eps, EpsJacobian, EpsPrediction};
pub use schedule::{add_noise, NoiseSchedule};
pub use step::{ddpm_step, logprob_grad_wrt_zt, mean_vjp, transition_log_prob, PolicyStep};
