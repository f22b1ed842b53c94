use rand::Rng;

use super::{predict_eps, Context, EpsJacobian, NoiseSchedule};
use crate::buffer::Buffer;
use crate::error::{Error, Result};
use crate::rng::standard_normal;

/// One denoising transition `z_t -> z_prev`, recorded as an MDP step.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyStep {
    pub t: usize,
    pub z_t: Buffer,
    pub z_prev: Buffer,
    pub mean: Buffer,
    pub variance: f64,
    pub log_prob: f64,
    pub reward: f64,
}

/// Gaussian transition log-density, summed over all entries. Zero when
/// `variance == 0`.
pub fn transition_log_prob(z_prev: &Buffer, mean: &Buffer, variance: f64) -> f64 {
    if variance == 0.0 {
        return 0.0;
    }
    let norm = 0.5 * (2.0 * std::f64::consts::PI * variance).ln();
    z_prev
        .data
        .iter()
        .zip(&mean.data)
        .map(|(x, m)| -(x - m) * (x - m) / (2.0 * variance) - norm)
        .sum()
}

fn posterior_mean(z: &Buffer, eps_hat: &Buffer, t: usize, schedule: &NoiseSchedule) -> Buffer {
    let inv_sqrt_alpha = 1.0 / schedule.alpha[t].sqrt();
    let coef = schedule.beta[t] / (1.0 - schedule.alpha_bar[t]).sqrt();
    Buffer {
        data: z
            .data
            .iter()
            .zip(&eps_hat.data)
            .map(|(zv, e)| inv_sqrt_alpha * (zv - coef * e))
            .collect(),
        ..*z
    }
}

/// Samples `z_prev ~ N(mu(z_t, t), sigma_t^2 I)` with the DDPM posterior mean
/// `mu = (z_t - beta_t / sqrt(1 - abar_t) * eps_hat) / sqrt(alpha_t)`.
///
/// Draws exactly one standard normal per entry from `rng` when `sigma_t > 0`
/// and none otherwise.
pub fn ddpm_step<R: Rng + ?Sized>(
    z_t: &Buffer,
    t: usize,
    context: &Context,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<PolicyStep> {
    let pred = predict_eps(z_t, t, context, schedule)?;
    let mean = posterior_mean(z_t, &pred.eps, t, schedule);
    let variance = schedule.posterior_var[t];
    let z_prev = if variance == 0.0 {
        mean.clone()
    } else {
        let sigma = variance.sqrt();
        Buffer {
            data: mean.data.iter().map(|m| m + sigma * standard_normal(rng)).collect(),
            ..mean
        }
    };
    let log_prob = transition_log_prob(&z_prev, &mean, variance);
    Ok(PolicyStep {
        t,
        z_t: z_t.clone(),
        z_prev,
        mean,
        variance,
        log_prob,
        reward: 0.0,
    })
}

/// `(d mu / d z_t)^T u` for the transition at `t`, given the noise-prediction
/// Jacobian at `z_t`.
pub fn mean_vjp(jacobian: &EpsJacobian, u: &Buffer, t: usize, schedule: &NoiseSchedule) -> Buffer {
    let inv_sqrt_alpha = 1.0 / schedule.alpha[t].sqrt();
    let coef = schedule.beta[t] / (1.0 - schedule.alpha_bar[t]).sqrt();
    let je = jacobian.vjp(u);
    Buffer {
        data: u
            .data
            .iter()
            .zip(&je.data)
            .map(|(uv, j)| inv_sqrt_alpha * (uv - coef * j))
            .collect(),
        ..*u
    }
}

/// Gradient of `step.log_prob` with respect to `z_t`, holding the action
/// `z_prev` fixed: `(d mu / d z_t)^T (z_prev - mu) / sigma_t^2`.
pub fn logprob_grad_wrt_zt(step: &PolicyStep, t: usize, context: &Context, schedule: &NoiseSchedule) -> Result<Buffer> {
    if step.variance == 0.0 || schedule.posterior_var[t] == 0.0 {
        return Err(Error::DeterministicStep);
    }
    let pred = predict_eps(&step.z_t, t, context, schedule)?;
    let residual = Buffer {
        data: step
            .z_prev
            .data
            .iter()
            .zip(&step.mean.data)
            .map(|(x, m)| (x - m) / step.variance)
            .collect(),
        ..step.z_prev
    };
    Ok(mean_vjp(&pred.jacobian, &residual, t, schedule))
}

#[cfg(test)]
mod tests {
    use super::super::{add_noise, MixtureComponent};
    use super::*;
    use crate::rng::seeded;

    fn single_pixel_context(mu: f64, std: f64) -> Context {
        Context::single("px", Buffer::from_vec(1, 1, 1, vec![mu]).unwrap(), std).unwrap()
    }

    #[test]
    fn zero_variance_step_is_the_mean() {
        let s = NoiseSchedule::default();
        let ctx = Context::named("disc", 4, 4, 0.05).unwrap();
        let z = Buffer::filled(4, 4, 3, 0.3);
        let step = ddpm_step(&z, 0, &ctx, &s, &mut seeded(0)).unwrap();
        assert_eq!(step.z_prev, step.mean);
        assert_eq!(step.log_prob, 0.0);
        assert!(matches!(logprob_grad_wrt_zt(&step, 0, &ctx, &s), Err(Error::DeterministicStep)));
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let s = NoiseSchedule::default();
        let ctx = Context::named("checker", 8, 8, 0.05).unwrap();
        let z = Buffer::filled(8, 8, 3, 0.1);
        let a = ddpm_step(&z, 20, &ctx, &s, &mut seeded(42)).unwrap();
        let b = ddpm_step(&z, 20, &ctx, &s, &mut seeded(42)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.reward, 0.0);
    }

    #[test]
    fn mean_matches_scalar_posterior_formula() {
        let s = NoiseSchedule::default();
        let (mu, std) = (0.7, 0.05);
        let ctx = single_pixel_context(mu, std);
        let t = 24;
        let z = 0.41;
        let step = ddpm_step(&Buffer::from_vec(1, 1, 1, vec![z]).unwrap(), t, &ctx, &s, &mut seeded(1)).unwrap();
        let beta = 1e-4 + (0.05 - 1e-4) * t as f64 / 49.0;
        let mut ab = 1.0;
        for i in 0..=t {
            ab *= 1.0 - (1e-4 + (0.05 - 1e-4) * i as f64 / 49.0);
        }
        let eps_hat = (1.0 - ab).sqrt() * (z - ab.sqrt() * mu) / (ab * std * std + 1.0 - ab);
        let mean = (z - beta / (1.0 - ab).sqrt() * eps_hat) / (1.0 - beta).sqrt();
        assert!((step.mean.data[0] - mean).abs() < 1e-12);
    }

    #[test]
    fn log_prob_matches_gaussian_density() {
        let s = NoiseSchedule::default();
        let ctx = Context::named("stripes", 3, 3, 0.05).unwrap();
        let z = Buffer::filled(3, 3, 3, 0.5);
        let step = ddpm_step(&z, 11, &ctx, &s, &mut seeded(5)).unwrap();
        let v = step.variance;
        let mut lp = 0.0;
        for (x, m) in step.z_prev.data.iter().zip(&step.mean.data) {
            lp += -(x - m).powi(2) / (2.0 * v) - 0.5 * (2.0 * std::f64::consts::PI * v).ln();
        }
        assert!((lp - step.log_prob).abs() < 1e-10);
    }

    #[test]
    fn density_integrates_to_one() {
        let s = NoiseSchedule::default();
        let ctx = single_pixel_context(0.4, 0.05);
        let step = ddpm_step(&Buffer::from_vec(1, 1, 1, vec![0.2]).unwrap(), 10, &ctx, &s, &mut seeded(3)).unwrap();
        let sigma = step.variance.sqrt();
        let m = step.mean.data[0];
        let n = 20_000;
        let (lo, hi) = (m - 12.0 * sigma, m + 12.0 * sigma);
        let dx = (hi - lo) / n as f64;
        let mut total = 0.0;
        for i in 0..=n {
            let x = lo + i as f64 * dx;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            let lp = transition_log_prob(&Buffer::from_vec(1, 1, 1, vec![x]).unwrap(), &step.mean, step.variance);
            total += w * lp.exp() * dx;
        }
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }

    #[test]
    fn residual_zero_gives_zero_gradient() {
        let s = NoiseSchedule::default();
        let ctx = Context::named("disc", 4, 4, 0.05).unwrap();
        let mut step = ddpm_step(&Buffer::filled(4, 4, 3, 0.3), 12, &ctx, &s, &mut seeded(1)).unwrap();
        step.z_prev = step.mean.clone();
        let g = logprob_grad_wrt_zt(&step, 12, &ctx, &s).unwrap();
        assert!(g.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_target_gradient_matches_closed_form_and_fd() {
        let s = NoiseSchedule::default();
        let std = 0.05;
        let ctx = Context::named("disc", 3, 3, std).unwrap();
        let t = 18;
        let mut rng = seeded(8);
        let eps = Buffer::from_vec(3, 3, 3, crate::rng::normal_vec(&mut rng, 27)).unwrap();
        let z = add_noise(&Buffer::filled(3, 3, 3, 0.5), t, &eps, &s).unwrap();
        let step = ddpm_step(&z, t, &ctx, &s, &mut rng).unwrap();
        let g = logprob_grad_wrt_zt(&step, t, &ctx, &s).unwrap();

        let (beta, ab) = (s.beta[t], s.alpha_bar[t]);
        let dmu = (1.0 / (1.0 - beta).sqrt()) * (1.0 - beta / (1.0 - ab).sqrt() * (1.0 - ab).sqrt() / (ab * std * std + 1.0 - ab));
        for i in 0..27 {
            let expected = dmu * (step.z_prev.data[i] - step.mean.data[i]) / step.variance;
            assert!((g.data[i] - expected).abs() < 1e-12 * expected.abs().max(1.0));
        }
        check_fd(&step, &ctx, &s, t, &g, 1e-5);
    }

    fn check_fd(step: &PolicyStep, ctx: &Context, s: &NoiseSchedule, t: usize, g: &Buffer, tol: f64) {
        let lp = |z: &Buffer| {
            let mean = posterior_mean(z, &predict_eps(z, t, ctx, s).unwrap().eps, t, s);
            transition_log_prob(&step.z_prev, &mean, step.variance)
        };
        for i in 0..step.z_t.len() {
            let h = 1e-6;
            let mut zp = step.z_t.clone();
            let mut zm = step.z_t.clone();
            zp.data[i] += h;
            zm.data[i] -= h;
            let fd = (lp(&zp) - lp(&zm)) / (2.0 * h);
            let err = (fd - g.data[i]).abs() / fd.abs().max(g.data[i].abs()).max(1e-3);
            assert!(err < tol, "{i}: {fd} vs {}", g.data[i]);
        }
    }

    #[test]
    fn mixture_gradient_matches_finite_differences() {
        use rand::Rng;
        let s = NoiseSchedule::default();
        let mut rng = seeded(12);
        let comps = (0..3)
            .map(|k| MixtureComponent {
                weight: [0.2, 0.5, 0.3][k],
                target: Buffer::from_vec(2, 2, 3, (0..12).map(|_| rng.random()).collect()).unwrap(),
            })
            .collect();
        let ctx = Context::mixture("mix", comps, 0.15).unwrap();
        let t = 35;
        let x0 = Buffer::from_vec(2, 2, 3, (0..12).map(|_| rng.random()).collect()).unwrap();
        let eps = Buffer::from_vec(2, 2, 3, crate::rng::normal_vec(&mut rng, 12)).unwrap();
        let z = add_noise(&x0, t, &eps, &s).unwrap();
        let step = ddpm_step(&z, t, &ctx, &s, &mut rng).unwrap();
        let g = logprob_grad_wrt_zt(&step, t, &ctx, &s).unwrap();
        check_fd(&step, &ctx, &s, t, &g, 1e-5);
    }
}
