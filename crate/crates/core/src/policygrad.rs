//! REINFORCE through the denoising chain, routed into the renderer.
//!
//! The rendered image `x` is noised to `z_{t_start}` with fresh noise, the
//! frozen critic takes one (immediate) or `t_start` (discounted) stochastic
//! steps, and the reward of the final sample scales the gradient of the step
//! log-densities with respect to `x`. Sampled actions are held fixed: only the
//! conditioning latents depend on `x`.
//!
//! Outputs follow the descent convention: they are the *negated* ascent
//! direction on expected reward, ready to be added to a loss gradient.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::buffer::Buffer;
use crate::critic::{add_noise, ddpm_step, logprob_grad_wrt_zt, mean_vjp, predict_eps, Context, NoiseSchedule, PolicyStep};
use crate::error::{Error, Result};
use crate::renderer::{render, render_vjp, Camera, ImageCotangent, SceneGradient, SplatScene};
use crate::rewards::RewardKind;
use crate::rng::normal_vec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PgMode {
    #[serde(rename = "immediate")]
    Immediate,
    #[serde(rename = "discounted")]
    Discounted,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PgConfig {
    pub mode: PgMode,
    pub t_start: usize,
    pub gamma: f64,
    pub baseline_decay: f64,
    pub pg_weight: f64,
}

impl PgConfig {
    /// Immediate mode from the middle of a `steps`-long schedule.
    pub fn for_steps(steps: usize) -> Self {
        PgConfig {
            mode: PgMode::Immediate,
            t_start: steps / 2,
            gamma: 1.0,
            baseline_decay: 0.9,
            pg_weight: 1.0,
        }
    }

    pub fn validate(&self, steps: usize) -> Result<()> {
        if !(1 <= self.t_start && self.t_start < steps) {
            return Err(Error::InvalidConfig(format!(
                "pg t_start {} must lie in [1, {steps})",
                self.t_start
            )));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidConfig(format!("pg gamma {} outside (0, 1]", self.gamma)));
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return Err(Error::InvalidConfig(format!(
                "baseline decay {} outside [0, 1)",
                self.baseline_decay
            )));
        }
        if !(self.pg_weight.is_finite() && self.pg_weight >= 0.0) {
            return Err(Error::InvalidConfig(format!("pg weight {} must be >= 0", self.pg_weight)));
        }
        Ok(())
    }
}

/// Exponential moving average of past rewards.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Baseline {
    pub value: f64,
    pub initialized: bool,
}

impl Baseline {
    pub fn advantage(&self, reward: f64) -> f64 {
        if self.initialized {
            reward - self.value
        } else {
            reward
        }
    }
}

pub fn update_baseline(baseline: Baseline, reward: f64, config: &PgConfig) -> Baseline {
    let value = if baseline.initialized {
        config.baseline_decay * baseline.value + (1.0 - config.baseline_decay) * reward
    } else {
        reward
    };
    Baseline {
        value,
        initialized: true,
    }
}

/// A scalar image reward with a name for error reporting.
pub trait Reward {
    fn name(&self) -> &str;
    fn score(&self, image: &Buffer) -> f64;
}

impl Reward for RewardKind {
    fn name(&self) -> &str {
        RewardKind::name(*self)
    }

    fn score(&self, image: &Buffer) -> f64 {
        self.evaluate(image)
    }
}

/// Adapts a closure into a [`Reward`].
pub struct FnReward<F> {
    pub name: String,
    pub f: F,
}

impl<F: Fn(&Buffer) -> f64> FnReward<F> {
    pub fn new(name: impl Into<String>, f: F) -> Self {
        FnReward { name: name.into(), f }
    }
}

impl<F: Fn(&Buffer) -> f64> Reward for FnReward<F> {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&self, image: &Buffer) -> f64 {
        (self.f)(image)
    }
}

/// Image-space result of one rollout.
#[derive(Clone, Debug)]
pub struct PgRollout {
    /// Descent-convention gradient with respect to the image.
    pub image_grad: Buffer,
    pub steps: Vec<PolicyStep>,
    pub raw_reward: f64,
    pub advantage: f64,
}

fn score_terminal(reward: &dyn Reward, z: &Buffer) -> Result<f64> {
    let r = reward.score(&z.clamp01());
    if !r.is_finite() {
        return Err(Error::NonFiniteReward {
            name: reward.name().to_string(),
            value: r,
        });
    }
    Ok(r)
}

fn scaled(g: &Buffer, k: f64) -> Buffer {
    g.map(|v| v * k)
}

/// Rolls out `steps` stochastic transitions from `t_start` and returns the
/// descent gradient `-A sqrt(abar) sum_k gamma^k d log p_k / d z_{t_start}`,
/// chaining later steps through the transition means.
#[allow(clippy::too_many_arguments)]
fn rollout<R: Rng + ?Sized>(
    x: &Buffer,
    context: &Context,
    reward: &dyn Reward,
    schedule: &NoiseSchedule,
    config: &PgConfig,
    n_steps: usize,
    baseline: &Baseline,
    rng: &mut R,
) -> Result<PgRollout> {
    config.validate(schedule.steps())?;
    let t0 = config.t_start;
    let eps = Buffer::from_vec(x.width, x.height, x.channels, normal_vec(rng, x.len()))?;
    let mut z = add_noise(x, t0, &eps, schedule)?;
    let mut steps = Vec::with_capacity(n_steps);
    for k in 0..n_steps {
        let step = ddpm_step(&z, t0 - k, context, schedule, rng)?;
        z = step.z_prev.clone();
        steps.push(step);
    }
    let raw_reward = score_terminal(reward, &z)?;
    steps.last_mut().expect("at least one step").reward = raw_reward;
    let advantage = baseline.advantage(raw_reward);

    // acc_k = gamma^k g_k + (d mu_k / d z_k)^T acc_{k+1}
    let mut acc: Option<Buffer> = None;
    for (k, step) in steps.iter().enumerate().rev() {
        let t = t0 - k;
        let mut term = logprob_grad_wrt_zt(step, t, context, schedule)?;
        if k > 0 {
            term.scale(config.gamma.powi(k as i32));
        }
        if let Some(next) = acc.take() {
            let jac = predict_eps(&step.z_t, t, context, schedule)?.jacobian;
            term.add_assign(&mean_vjp(&jac, &next, t, schedule));
        }
        acc = Some(term);
    }
    let acc = acc.expect("at least one step");
    let image_grad = scaled(&acc, -advantage * schedule.alpha_bar[t0].sqrt());
    Ok(PgRollout {
        image_grad,
        steps,
        raw_reward,
        advantage,
    })
}

/// One stochastic step from `t_start`; the reward is scored on `z_{t_start - 1}`.
#[allow(clippy::too_many_arguments)]
pub fn pg_immediate_image<R: Rng + ?Sized>(
    x: &Buffer,
    context: &Context,
    reward: &dyn Reward,
    schedule: &NoiseSchedule,
    config: &PgConfig,
    baseline: &Baseline,
    rng: &mut R,
) -> Result<PgRollout> {
    rollout(x, context, reward, schedule, config, 1, baseline, rng)
}

/// Stochastic steps `t_start, ..., 1`; the terminal reward is scored on `z_0`.
#[allow(clippy::too_many_arguments)]
pub fn pg_discounted_image<R: Rng + ?Sized>(
    x: &Buffer,
    context: &Context,
    reward: &dyn Reward,
    schedule: &NoiseSchedule,
    config: &PgConfig,
    baseline: &Baseline,
    rng: &mut R,
) -> Result<PgRollout> {
    rollout(x, context, reward, schedule, config, config.t_start, baseline, rng)
}

/// Dispatches on `config.mode`.
#[allow(clippy::too_many_arguments)]
pub fn pg_image<R: Rng + ?Sized>(
    x: &Buffer,
    context: &Context,
    reward: &dyn Reward,
    schedule: &NoiseSchedule,
    config: &PgConfig,
    baseline: &Baseline,
    rng: &mut R,
) -> Result<PgRollout> {
    match config.mode {
        PgMode::Immediate => pg_immediate_image(x, context, reward, schedule, config, baseline, rng),
        PgMode::Discounted => pg_discounted_image(x, context, reward, schedule, config, baseline, rng),
    }
}

fn to_scene(scene: &SplatScene, camera: &Camera, rollout: &PgRollout) -> Result<SceneGradient> {
    render_vjp(scene, camera, &ImageCotangent::rgb(rollout.image_grad.clone()))
}

#[allow(clippy::too_many_arguments)]
pub fn pg_immediate<R: Rng + ?Sized>(
    scene: &SplatScene,
    camera: &Camera,
    context: &Context,
    reward: &dyn Reward,
    schedule: &NoiseSchedule,
    config: &PgConfig,
    baseline: &Baseline,
    rng: &mut R,
) -> Result<(SceneGradient, PolicyStep, f64)> {
    let x = render(scene, camera)?.rgb;
    let mut out = pg_immediate_image(&x, context, reward, schedule, config, baseline, rng)?;
    let grad = to_scene(scene, camera, &out)?;
    Ok((grad, out.steps.remove(0), out.raw_reward))
}

#[allow(clippy::too_many_arguments)]
pub fn pg_discounted<R: Rng + ?Sized>(
    scene: &SplatScene,
    camera: &Camera,
    context: &Context,
    reward: &dyn Reward,
    schedule: &NoiseSchedule,
    config: &PgConfig,
    baseline: &Baseline,
    rng: &mut R,
) -> Result<(SceneGradient, Vec<PolicyStep>, f64)> {
    let x = render(scene, camera)?.rgb;
    let out = pg_discounted_image(&x, context, reward, schedule, config, baseline, rng)?;
    let grad = to_scene(scene, camera, &out)?;
    Ok((grad, out.steps, out.raw_reward))
}
