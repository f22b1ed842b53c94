use super::{Camera, Image, Splat2D};
use crate::buffer::Buffer;
use crate::exec::Execution;
use crate::linalg::{sym2_inverse, Sym2, Vec3};

/// Per-splat opacity ceiling after the kernel is applied.
pub const ALPHA_MAX: f64 = 0.999;

/// Cull radius in standard deviations.
const CULL_SIGMAS: f64 = 3.0;

/// Splat with its inverse covariance and cull box precomputed.
#[derive(Clone, Debug)]
pub(crate) struct Prepared {
    pub mean: [f64; 2],
    pub conic: Sym2,
    pub half_w: f64,
    pub half_h: f64,
    pub color: Vec3,
    pub color_mask: [bool; 3],
    pub opacity: f64,
}

impl Prepared {
    pub fn new(s: &Splat2D) -> Self {
        let mut color = [0.0; 3];
        let mut color_mask = [true; 3];
        for c in 0..3 {
            color[c] = s.color[c].clamp(0.0, 1.0);
            color_mask[c] = (0.0..=1.0).contains(&s.color[c]);
        }
        Prepared {
            mean: s.mean2d,
            conic: sym2_inverse(&s.cov2d),
            half_w: CULL_SIGMAS * s.cov2d[0].sqrt(),
            half_h: CULL_SIGMAS * s.cov2d[2].sqrt(),
            color,
            color_mask,
            opacity: s.opacity,
        }
    }

    fn covers_row(&self, py: f64) -> bool {
        (py - self.mean[1]).abs() <= self.half_h
    }
}

/// One splat's contribution at one pixel.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Hit {
    pub splat: usize,
    pub dx: f64,
    pub dy: f64,
    pub kernel: f64,
    pub alpha: f64,
    pub saturated: bool,
}

/// Kernel and alpha of `s` at offset `(dx, dy)`, or `None` when culled.
#[inline]
pub(crate) fn hit(s: &Prepared, splat: usize, px: f64, py: f64) -> Option<Hit> {
    let dx = px - s.mean[0];
    let dy = py - s.mean[1];
    if dx.abs() > s.half_w || dy.abs() > s.half_h {
        return None;
    }
    let q = s.conic[0] * dx * dx + 2.0 * s.conic[1] * dx * dy + s.conic[2] * dy * dy;
    let kernel = (-0.5 * q).exp();
    let raw = s.opacity * kernel;
    let saturated = raw > ALPHA_MAX;
    let alpha = raw.clamp(0.0, ALPHA_MAX);
    Some(Hit {
        splat,
        dx,
        dy,
        kernel,
        alpha,
        saturated,
    })
}

/// Splats (by position in `prepared`) whose box covers row `y`, back-to-front.
pub(crate) fn row_candidates(prepared: &[Prepared], y: usize) -> Vec<usize> {
    let py = y as f64 + 0.5;
    (0..prepared.len()).filter(|&i| prepared[i].covers_row(py)).collect()
}

fn render_row(prepared: &[Prepared], y: usize, width: usize, background: Vec3) -> (Vec<f64>, Vec<f64>) {
    let candidates = row_candidates(prepared, y);
    let py = y as f64 + 0.5;
    let mut rgb = Vec::with_capacity(width * 3);
    let mut alpha = Vec::with_capacity(width);
    for x in 0..width {
        let px = x as f64 + 0.5;
        let mut c = background;
        let mut transmittance = 1.0;
        for &i in &candidates {
            let s = &prepared[i];
            if let Some(h) = hit(s, i, px, py) {
                let a = h.alpha;
                for k in 0..3 {
                    c[k] = a * s.color[k] + (1.0 - a) * c[k];
                }
                transmittance *= 1.0 - a;
            }
        }
        rgb.extend_from_slice(&c);
        alpha.push(1.0 - transmittance);
    }
    (rgb, alpha)
}

pub(crate) fn clamp_background(bg: Vec3) -> Vec3 {
    [bg[0].clamp(0.0, 1.0), bg[1].clamp(0.0, 1.0), bg[2].clamp(0.0, 1.0)]
}

/// Composites depth-sorted splats over `background`.
///
/// Splat colors and the background are clamped to `[0, 1]` on use.
pub fn rasterize(splats: &[Splat2D], camera: &Camera, background: Vec3) -> Image {
    rasterize_with(splats, camera, background, Execution::default())
}

pub fn rasterize_with(splats: &[Splat2D], camera: &Camera, background: Vec3, exec: Execution) -> Image {
    let prepared: Vec<Prepared> = splats.iter().map(Prepared::new).collect();
    let bg = clamp_background(background);
    let (w, h) = (camera.width, camera.height);
    let rows = exec.map(h, |y| render_row(&prepared, y, w, bg));
    let mut rgb = Vec::with_capacity(w * h * 3);
    let mut alpha = Vec::with_capacity(w * h);
    for (r, a) in rows {
        rgb.extend(r);
        alpha.extend(a);
    }
    Image {
        width: w,
        height: h,
        rgb: Buffer {
            width: w,
            height: h,
            channels: 3,
            data: rgb,
        },
        alpha: Buffer {
            width: w,
            height: h,
            channels: 1,
            data: alpha,
        },
    }
}

/// Smallest distance (px) between any pixel-center coordinate and any edge of
/// any splat's cull box. Finite-difference checks need this to stay well above
/// the step size so that no pixel crosses a box edge.
pub fn cull_margin(splats: &[Splat2D], camera: &Camera) -> f64 {
    let mut margin = f64::INFINITY;
    for s in splats {
        let p = Prepared::new(s);
        let edges = [
            (p.mean[0] - p.half_w, camera.width),
            (p.mean[0] + p.half_w, camera.width),
            (p.mean[1] - p.half_h, camera.height),
            (p.mean[1] + p.half_h, camera.height),
        ];
        for (e, extent) in edges {
            let nearest = (e - 0.5).round().clamp(0.0, extent as f64 - 1.0) + 0.5;
            margin = margin.min((e - nearest).abs());
        }
    }
    margin
}
