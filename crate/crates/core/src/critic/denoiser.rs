use std::cell::Cell;

use super::{Context, NoiseSchedule};
use crate::buffer::Buffer;
use crate::error::{Error, Result};

thread_local! {
    static DERIVATIVE_CALLS: Cell<usize> = const { Cell::new(0) };
}

/// Number of times this thread has applied an [`EpsJacobian`].
pub fn derivative_calls() -> usize {
    DERIVATIVE_CALLS.with(|c| c.get())
}

/// Exact derivative of the noise prediction with respect to `z_t`.
#[derive(Clone, Debug)]
pub enum EpsJacobian {
    /// `d eps_hat / d z = k I`.
    Scaled(f64),
    /// Mixture posterior: `J = a I + sum_k r_k eps_k (g_k - g_bar)^T` where
    /// `g_k = -(z - sqrt(abar) mu_k) / s^2` is the per-component score.
    Mixture {
        a: f64,
        resp: Vec<f64>,
        eps: Vec<Buffer>,
        score: Vec<Buffer>,
        mean_score: Buffer,
    },
}

impl EpsJacobian {
    /// `J^T u`.
    pub fn vjp(&self, u: &Buffer) -> Buffer {
        DERIVATIVE_CALLS.with(|c| c.set(c.get() + 1));
        match self {
            EpsJacobian::Scaled(k) => u.map(|v| k * v),
            EpsJacobian::Mixture {
                a,
                resp,
                eps,
                score,
                mean_score,
            } => {
                let mut out = u.map(|v| a * v);
                for ((r, e), g) in resp.iter().zip(eps).zip(score) {
                    let coef = r * e.dot(u);
                    if coef == 0.0 {
                        continue;
                    }
                    for ((o, gk), gb) in out.data.iter_mut().zip(&g.data).zip(&mean_score.data) {
                        *o += coef * (gk - gb);
                    }
                }
                out
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct EpsPrediction {
    pub eps: Buffer,
    pub jacobian: EpsJacobian,
}

fn component_eps(z: &Buffer, target: &Buffer, sqrt_ab: f64, gain: f64) -> Buffer {
    Buffer {
        data: z.data.iter().zip(&target.data).map(|(zv, m)| gain * (zv - sqrt_ab * m)).collect(),
        ..*z
    }
}

/// MMSE noise prediction `E[eps | z_t]` under the context prior.
///
/// Single target: `sqrt(1-abar) (z - sqrt(abar) mu) / (abar sigma0^2 + 1 - abar)`.
/// Mixtures weight the per-component predictions by posterior
/// responsibilities computed in log space.
pub fn predict_eps(z: &Buffer, t: usize, context: &Context, schedule: &NoiseSchedule) -> Result<EpsPrediction> {
    schedule.check_t(t)?;
    z.check_shape(&context.target)?;
    let ab = schedule.alpha_bar[t];
    let sqrt_ab = ab.sqrt();
    let var = ab * context.prior_std * context.prior_std + 1.0 - ab;
    let gain = (1.0 - ab).sqrt() / var;

    let Some(components) = &context.mixture else {
        return Ok(EpsPrediction {
            eps: component_eps(z, &context.target, sqrt_ab, gain),
            jacobian: EpsJacobian::Scaled(gain),
        });
    };

    let log_w: Vec<f64> = components
        .iter()
        .map(|c| {
            let sq: f64 = z
                .data
                .iter()
                .zip(&c.target.data)
                .map(|(zv, m)| (zv - sqrt_ab * m).powi(2))
                .sum();
            c.weight.ln() - sq / (2.0 * var)
        })
        .collect();
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let unnorm: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = unnorm.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::DegenerateResponsibilities);
    }
    let resp: Vec<f64> = unnorm.iter().map(|u| u / total).collect();

    let eps_k: Vec<Buffer> = components
        .iter()
        .map(|c| component_eps(z, &c.target, sqrt_ab, gain))
        .collect();
    let mut eps = z.zeros_like();
    for (r, e) in resp.iter().zip(&eps_k) {
        for (o, v) in eps.data.iter_mut().zip(&e.data) {
            *o += r * v;
        }
    }
    let score: Vec<Buffer> = components
        .iter()
        .map(|c| Buffer {
            data: z.data.iter().zip(&c.target.data).map(|(zv, m)| -(zv - sqrt_ab * m) / var).collect(),
            ..*z
        })
        .collect();
    let mut mean_score = z.zeros_like();
    for (r, g) in resp.iter().zip(&score) {
        for (o, v) in mean_score.data.iter_mut().zip(&g.data) {
            *o += r * v;
        }
    }
    Ok(EpsPrediction {
        eps,
        jacobian: EpsJacobian::Mixture {
            a: gain,
            resp,
            eps: eps_k,
            score,
            mean_score,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::super::MixtureComponent;
    use super::*;
    use rand::Rng;

    fn two_component(rng: &mut impl Rng, w: usize, h: usize, c: usize, std: f64) -> Context {
        let n = w * h * c;
        let t1 = Buffer::from_vec(w, h, c, (0..n).map(|_| rng.random()).collect()).unwrap();
        let t2 = Buffer::from_vec(w, h, c, (0..n).map(|_| rng.random()).collect()).unwrap();
        Context::mixture(
            "pair",
            vec![
                MixtureComponent { weight: 0.35, target: t1 },
                MixtureComponent { weight: 0.65, target: t2 },
            ],
            std,
        )
        .unwrap()
    }

    #[test]
    fn residual_zero_at_scaled_target() {
        let s = NoiseSchedule::default();
        let ctx = Context::named("disc", 6, 6, 0.05).unwrap();
        let z = ctx.target.map(|v| s.alpha_bar[20].sqrt() * v);
        let p = predict_eps(&z, 20, &ctx, &s).unwrap();
        assert!(p.eps.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn point_mass_prior_recovers_exact_noise() {
        let s = NoiseSchedule::default();
        let ctx = Context::named("stripes", 4, 4, 0.0).unwrap();
        let mut rng = crate::rng::seeded(1);
        let eps = Buffer::from_vec(4, 4, 3, crate::rng::normal_vec(&mut rng, 48)).unwrap();
        let z = super::super::add_noise(&ctx.target, 33, &eps, &s).unwrap();
        let p = predict_eps(&z, 33, &ctx, &s).unwrap();
        for (a, b) in p.eps.data.iter().zip(&eps.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn one_component_mixture_is_bit_identical() {
        let s = NoiseSchedule::default();
        let single = Context::named("checker", 8, 8, 0.05).unwrap();
        let mix = Context::mixture(
            "checker",
            vec![MixtureComponent {
                weight: 1.0,
                target: single.target.clone(),
            }],
            0.05,
        )
        .unwrap();
        let mut rng = crate::rng::seeded(2);
        let z = Buffer::from_vec(8, 8, 3, crate::rng::normal_vec(&mut rng, 192)).unwrap();
        let a = predict_eps(&z, 17, &single, &s).unwrap();
        let b = predict_eps(&z, 17, &mix, &s).unwrap();
        assert_eq!(a.eps, b.eps);
    }

    #[test]
    fn responsibilities_survive_huge_inputs() {
        let s = NoiseSchedule::default();
        let mut rng = crate::rng::seeded(3);
        let ctx = two_component(&mut rng, 3, 3, 1, 0.05);
        for scale in [1e3, 1e6, -1e6] {
            let z = Buffer::from_vec(3, 3, 1, (0..9).map(|i| scale * (i as f64 - 4.0) / 4.0).collect()).unwrap();
            let p = predict_eps(&z, 5, &ctx, &s).unwrap();
            assert!(p.eps.is_finite());
        }
        let bad = Buffer::filled(3, 3, 1, f64::NAN);
        assert!(matches!(predict_eps(&bad, 5, &ctx, &s), Err(Error::DegenerateResponsibilities)));
    }

    #[test]
    fn mixture_jacobian_matches_finite_differences() {
        let s = NoiseSchedule::default();
        let mut rng = crate::rng::seeded(7);
        let ctx = two_component(&mut rng, 2, 2, 3, 0.2);
        let t = 30;
        let mid: Vec<f64> = (0..12).map(|_| rng.random_range(0.0..1.0)).collect();
        let z = Buffer::from_vec(2, 2, 3, mid).unwrap();
        let u = Buffer::from_vec(2, 2, 3, crate::rng::normal_vec(&mut rng, 12)).unwrap();
        let p = predict_eps(&z, t, &ctx, &s).unwrap();
        let analytic = p.jacobian.vjp(&u);
        for i in 0..12 {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp.data[i] += 1e-6;
            zm.data[i] -= 1e-6;
            let fp = predict_eps(&zp, t, &ctx, &s).unwrap().eps.dot(&u);
            let fm = predict_eps(&zm, t, &ctx, &s).unwrap().eps.dot(&u);
            let fd = (fp - fm) / 2e-6;
            assert!((fd - analytic.data[i]).abs() < 1e-7, "{i}: {fd} vs {}", analytic.data[i]);
        }
    }
}
