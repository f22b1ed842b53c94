//! Score distillation: the critic's noise residual used as an image gradient.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::buffer::Buffer;
use crate::critic::{add_noise, predict_eps, Context, NoiseSchedule};
use crate::error::{Error, Result};
use crate::renderer::{render, render_vjp, Camera, Image, ImageCotangent, SceneGradient, SplatScene};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightMode {
    /// `w(t) = 1`.
    #[serde(rename = "constant")]
    Constant,
    /// `w(t) = 1 - alpha_bar_t`.
    #[serde(rename = "one-minus-alpha-bar")]
    OneMinusAlphaBar,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdsConfig {
    pub t_min_frac: f64,
    pub t_max_frac: f64,
    pub weight_mode: WeightMode,
}

impl Default for SdsConfig {
    fn default() -> Self {
        SdsConfig {
            t_min_frac: 0.02,
            t_max_frac: 0.98,
            weight_mode: WeightMode::Constant,
        }
    }
}

impl SdsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.t_min_frac && self.t_min_frac < self.t_max_frac && self.t_max_frac <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "sds timestep range [{}, {}] must satisfy 0 <= min < max <= 1",
                self.t_min_frac, self.t_max_frac
            )));
        }
        Ok(())
    }

    pub fn weight(&self, t: usize, schedule: &NoiseSchedule) -> f64 {
        match self.weight_mode {
            WeightMode::Constant => 1.0,
            WeightMode::OneMinusAlphaBar => 1.0 - schedule.alpha_bar[t],
        }
    }

    /// Inclusive integer timestep range `[round(min * T), round(max * T)]`,
    /// clipped to valid steps.
    pub fn t_range(&self, steps: usize) -> (usize, usize) {
        let last = steps - 1;
        let lo = ((self.t_min_frac * steps as f64).round() as usize).min(last);
        let hi = ((self.t_max_frac * steps as f64).round() as usize).min(last);
        (lo, hi.max(lo))
    }

    pub fn sample_t<R: Rng + ?Sized>(&self, rng: &mut R, steps: usize) -> usize {
        let (lo, hi) = self.t_range(steps);
        rng.random_range(lo..=hi)
    }
}

/// `w(t) (eps_hat(add_noise(rgb, t, eps), t) - eps)` on the RGB channels.
/// The alpha cotangent is zero.
pub fn sds_pixel_grad(
    image: &Image,
    context: &Context,
    t: usize,
    eps: &Buffer,
    schedule: &NoiseSchedule,
    config: &SdsConfig,
) -> Result<ImageCotangent> {
    let z = add_noise(&image.rgb, t, eps, schedule)?;
    let pred = predict_eps(&z, t, context, schedule)?;
    let w = config.weight(t, schedule);
    let mut grad = pred.eps;
    for (g, e) in grad.data.iter_mut().zip(&eps.data) {
        *g = w * (*g - e);
    }
    Ok(ImageCotangent::rgb(grad))
}

/// SDS gradient in scene-parameter space: render, residual, renderer VJP.
///
/// The residual is a constant cotangent; the critic's Jacobian is never used.
pub fn sds_param_grad(
    scene: &SplatScene,
    camera: &Camera,
    context: &Context,
    t: usize,
    eps: &Buffer,
    schedule: &NoiseSchedule,
    config: &SdsConfig,
) -> Result<SceneGradient> {
    let image = render(scene, camera)?;
    sds_param_grad_for_image(scene, camera, &image, context, t, eps, schedule, config)
}

/// [`sds_param_grad`] with the forward render supplied by the caller.
#[allow(clippy::too_many_arguments)]
pub fn sds_param_grad_for_image(
    scene: &SplatScene,
    camera: &Camera,
    image: &Image,
    context: &Context,
    t: usize,
    eps: &Buffer,
    schedule: &NoiseSchedule,
    config: &SdsConfig,
) -> Result<SceneGradient> {
    let cot = sds_pixel_grad(image, context, t, eps, schedule, config)?;
    render_vjp(scene, camera, &cot)
}
