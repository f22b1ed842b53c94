use crate::buffer::Buffer;
use crate::error::{Error, Result};

/// DDPM constants, 0-indexed: step `t` in `0..steps`.
///
/// `posterior_var[t] = (1 - alpha_bar[t-1]) / (1 - alpha_bar[t]) * beta[t]`
/// with `alpha_bar[-1] = 1`, so step 0 is deterministic.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub alpha_bar: Vec<f64>,
    pub posterior_var: Vec<f64>,
}

impl NoiseSchedule {
    /// Linear betas from `beta_start` to `beta_end` inclusive.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if !(1..=1000).contains(&steps) {
            return Err(Error::InvalidSchedule(format!("step count {steps} outside 1..=1000")));
        }
        let ordered = if steps == 1 {
            beta_start <= beta_end
        } else {
            beta_start < beta_end
        };
        if !(beta_start > 0.0 && beta_end < 1.0 && ordered) {
            return Err(Error::InvalidSchedule(format!(
                "need 0 < beta_start < beta_end < 1, got {beta_start}, {beta_end}"
            )));
        }
        let beta = if steps == 1 {
            vec![beta_start]
        } else {
            (0..steps)
                .map(|i| beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64)
                .collect()
        };
        Self::from_betas(beta)
    }

    /// Derives the cumulative arrays from explicit betas in `[0, 1)`.
    pub fn from_betas(beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() || beta.iter().any(|b| !(b.is_finite() && (0.0..1.0).contains(b))) {
            return Err(Error::InvalidSchedule("betas must be finite and in [0, 1)".into()));
        }
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(beta.len());
        let mut acc = 1.0;
        for a in &alpha {
            acc *= a;
            alpha_bar.push(acc);
        }
        let posterior_var = (0..beta.len())
            .map(|t| {
                let prev = if t == 0 { 1.0 } else { alpha_bar[t - 1] };
                if t == 0 || alpha_bar[t] == 1.0 {
                    0.0
                } else {
                    (1.0 - prev) / (1.0 - alpha_bar[t]) * beta[t]
                }
            })
            .collect();
        Ok(NoiseSchedule {
            beta,
            alpha,
            alpha_bar,
            posterior_var,
        })
    }

    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    pub fn check_t(&self, t: usize) -> Result<()> {
        if t < self.steps() {
            Ok(())
        } else {
            Err(Error::TimestepOutOfRange { t, steps: self.steps() })
        }
    }
}

impl Default for NoiseSchedule {
    /// 50 steps, linear betas 1e-4 to 0.05.
    fn default() -> Self {
        NoiseSchedule::linear(50, 1e-4, 0.05).expect("default schedule is valid")
    }
}

/// `z_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps`.
pub fn add_noise(x0: &Buffer, t: usize, eps: &Buffer, schedule: &NoiseSchedule) -> Result<Buffer> {
    x0.check_shape(eps)?;
    schedule.check_t(t)?;
    let ab = schedule.alpha_bar[t];
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(Buffer {
        data: x0.data.iter().zip(&eps.data).map(|(x, e)| a * x + b * e).collect(),
        ..*x0
    })
}
