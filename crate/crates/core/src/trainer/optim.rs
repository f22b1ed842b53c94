use crate::renderer::{Gaussian3D, ParamGroup, SceneGradient, SplatScene, PARAMS_PER_GAUSSIAN};

use super::config::OptimizerConfig;

/// Adam moments shaped like the scene's Gaussian parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState {
    pub m: Vec<[f64; PARAMS_PER_GAUSSIAN]>,
    pub v: Vec<[f64; PARAMS_PER_GAUSSIAN]>,
    /// Completed updates.
    pub step: u64,
}

/// One Adam update of a scalar; returns the new parameter and updates the
/// moments in place. `step` is the 1-based index of this update.
#[allow(clippy::too_many_arguments)]
pub fn adam_scalar(theta: f64, g: f64, m: &mut f64, v: &mut f64, step: u64, lr: f64, b1: f64, b2: f64, eps: f64) -> f64 {
    *m = b1 * *m + (1.0 - b1) * g;
    *v = b2 * *v + (1.0 - b2) * g * g;
    let m_hat = *m / (1.0 - b1.powi(step as i32));
    let v_hat = *v / (1.0 - b2.powi(step as i32));
    theta - lr * m_hat / (v_hat.sqrt() + eps)
}

impl OptimState {
    pub fn new(n: usize) -> Self {
        OptimState {
            m: vec![[0.0; PARAMS_PER_GAUSSIAN]; n],
            v: vec![[0.0; PARAMS_PER_GAUSSIAN]; n],
            step: 0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().chain(&self.v).all(|row| row.iter().all(|x| x.is_finite()))
    }

    /// Applies `grad` to the Gaussians of `scene`. Colors are clamped back into
    /// `[0, 1]`; the background is not a trained parameter.
    pub fn apply(&mut self, scene: &mut SplatScene, grad: &SceneGradient, config: &OptimizerConfig) {
        self.step += 1;
        let lrs: [f64; PARAMS_PER_GAUSSIAN] = std::array::from_fn(|k| config.lr(ParamGroup::of_param(k)));
        for (i, gaussian) in scene.gaussians.iter_mut().enumerate() {
            let mut p = gaussian.to_params();
            let g = grad.gaussians[i].to_params();
            for k in 0..PARAMS_PER_GAUSSIAN {
                p[k] = adam_scalar(
                    p[k],
                    g[k],
                    &mut self.m[i][k],
                    &mut self.v[i][k],
                    self.step,
                    lrs[k],
                    config.beta1,
                    config.beta2,
                    config.eps,
                );
            }
            let mut next = Gaussian3D::from_params(&p);
            for c in &mut next.color {
                *c = c.clamp(0.0, 1.0);
            }
            *gaussian = next;
        }
    }
}
