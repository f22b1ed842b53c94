use crate::buffer::Buffer;
use crate::error::{Error, Result};

/// Names accepted by [`Context::named`].
pub const CONTEXT_NAMES: [&str; 3] = ["disc", "stripes", "checker"];

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureComponent {
    pub weight: f64,
    pub target: Buffer,
}

/// Conditioning for the critic: the prior mean image and its spread.
///
/// With `mixture` set, the prior is `sum_k w_k N(target_k, prior_std^2 I)`
/// and `target` is ignored by the denoiser.
#[derive(Clone, Debug, PartialEq)]
pub struct Context {
    pub id: String,
    pub target: Buffer,
    pub prior_std: f64,
    pub mixture: Option<Vec<MixtureComponent>>,
}

impl Context {
    pub fn single(id: impl Into<String>, target: Buffer, prior_std: f64) -> Result<Self> {
        let ctx = Context {
            id: id.into(),
            target,
            prior_std,
            mixture: None,
        };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn mixture(id: impl Into<String>, components: Vec<MixtureComponent>, prior_std: f64) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidContext("mixture needs at least one component".into()))?;
        let ctx = Context {
            id: id.into(),
            target: first.target.clone(),
            prior_std,
            mixture: Some(components),
        };
        ctx.validate()?;
        Ok(ctx)
    }

    /// Built-in procedural target by name, RGB at `width x height`.
    ///
    /// - `disc`: red disc of radius `0.3 * min(W, H)` centered in the frame, on white.
    /// - `stripes`: four equal vertical stripes, black first.
    /// - `checker`: 8x8 black/white board, black top-left.
    ///
    /// Pixels are classified by their centers, without anti-aliasing.
    pub fn named(name: &str, width: usize, height: usize, prior_std: f64) -> Result<Self> {
        let (w, h) = (width as f64, height as f64);
        let pixel: Box<dyn Fn(f64, f64) -> [f64; 3]> = match name {
            "disc" => {
                let r = 0.3 * w.min(h);
                Box::new(move |x, y| {
                    let (dx, dy) = (x - w / 2.0, y - h / 2.0);
                    if dx * dx + dy * dy <= r * r {
                        [1.0, 0.0, 0.0]
                    } else {
                        [1.0, 1.0, 1.0]
                    }
                })
            }
            "stripes" => Box::new(move |x, _| {
                let band = (4.0 * x / w).floor() as usize;
                if band.is_multiple_of(2) {
                    [0.0; 3]
                } else {
                    [1.0; 3]
                }
            }),
            "checker" => Box::new(move |x, y| {
                let cell = (8.0 * x / w).floor() as usize + (8.0 * y / h).floor() as usize;
                if cell.is_multiple_of(2) {
                    [0.0; 3]
                } else {
                    [1.0; 3]
                }
            }),
            other => {
                return Err(Error::InvalidContext(format!(
                    "unknown context `{other}` (expected one of {})",
                    CONTEXT_NAMES.join(", ")
                )))
            }
        };
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&pixel(x as f64 + 0.5, y as f64 + 0.5));
            }
        }
        Context::single(name, Buffer::from_vec(width, height, 3, data)?, prior_std)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.prior_std.is_finite() && self.prior_std >= 0.0) {
            return Err(Error::InvalidContext(format!("prior_std {} must be >= 0", self.prior_std)));
        }
        let in_range = |b: &Buffer| b.data.iter().all(|v| (0.0..=1.0).contains(v));
        if !in_range(&self.target) {
            return Err(Error::InvalidContext("target values must lie in [0, 1]".into()));
        }
        if let Some(components) = &self.mixture {
            let mut total = 0.0;
            for c in components {
                if !(c.weight > 0.0 && c.weight <= 1.0) {
                    return Err(Error::InvalidContext(format!("mixture weight {} outside (0, 1]", c.weight)));
                }
                if !c.target.same_shape(&self.target) || !in_range(&c.target) {
                    return Err(Error::InvalidContext("mixture targets must match in shape and lie in [0, 1]".into()));
                }
                total += c.weight;
            }
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidContext(format!("mixture weights sum to {total}")));
            }
        }
        Ok(())
    }
}
