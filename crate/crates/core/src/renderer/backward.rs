//! Reverse-mode pass for the splat renderer.
//!
//! Pixels are revisited front-to-back while a suffix transmittance is carried,
//! using the composites recorded by a forward replay. Per-splat screen-space
//! gradients are accumulated per row and the rows are folded in row order, so
//! the result does not depend on how rows were scheduled.

use super::project::{project_full, screen_jacobian, Floor, Projected};
use super::raster::{clamp_background, hit, row_candidates, Hit, Prepared};
use super::{Camera, Gaussian3D, ImageCotangent, SceneGradient, SplatScene};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg::{quat_to_mat_vjp, Mat3};

/// Screen-space gradient of one splat: mean (2), conic with full-entry
/// convention (xx, xy, yy), color (3), opacity (1).
#[derive(Clone, Copy, Debug, Default)]
struct SplatGrad {
    mean: [f64; 2],
    conic: [f64; 3],
    color: [f64; 3],
    opacity: f64,
}

impl SplatGrad {
    fn add(&mut self, o: &SplatGrad) {
        self.mean[0] += o.mean[0];
        self.mean[1] += o.mean[1];
        for k in 0..3 {
            self.conic[k] += o.conic[k];
            self.color[k] += o.color[k];
        }
        self.opacity += o.opacity;
    }
}

struct RowGrad {
    splats: Vec<SplatGrad>,
    background: [f64; 3],
}

fn backward_row(
    prepared: &[Prepared],
    y: usize,
    background: [f64; 3],
    cot: &ImageCotangent,
) -> RowGrad {
    let width = cot.rgb.width;
    let mut grads = vec![SplatGrad::default(); prepared.len()];
    let mut bg_grad = [0.0; 3];
    let candidates = row_candidates(prepared, y);
    let py = y as f64 + 0.5;
    // (hit, composite before this splat, transmittance before this splat)
    let mut hits: Vec<(Hit, [f64; 3], f64)> = Vec::with_capacity(candidates.len());
    for x in 0..width {
        let idx = y * width + x;
        let g_rgb = [
            cot.rgb.data[idx * 3],
            cot.rgb.data[idx * 3 + 1],
            cot.rgb.data[idx * 3 + 2],
        ];
        let g_alpha = cot.alpha.as_ref().map_or(0.0, |a| a.data[idx]);
        if g_rgb == [0.0; 3] && g_alpha == 0.0 {
            continue;
        }
        let px = x as f64 + 0.5;
        hits.clear();
        let mut c = background;
        let mut trans = 1.0;
        for &i in &candidates {
            if let Some(h) = hit(&prepared[i], i, px, py) {
                hits.push((h, c, trans));
                let s = &prepared[i];
                for k in 0..3 {
                    c[k] = h.alpha * s.color[k] + (1.0 - h.alpha) * c[k];
                }
                trans *= 1.0 - h.alpha;
            }
        }
        for k in 0..3 {
            bg_grad[k] += trans * g_rgb[k];
        }
        let mut suffix = 1.0;
        for &(h, c_before, trans_before) in hits.iter().rev() {
            let s = &prepared[h.splat];
            let g = &mut grads[h.splat];
            let mut d_alpha = g_alpha * trans_before * suffix;
            for k in 0..3 {
                d_alpha += g_rgb[k] * suffix * (s.color[k] - c_before[k]);
                if s.color_mask[k] {
                    g.color[k] += g_rgb[k] * suffix * h.alpha;
                }
            }
            suffix *= 1.0 - h.alpha;
            if h.saturated {
                continue;
            }
            g.opacity += h.kernel * d_alpha;
            let d_kernel = s.opacity * d_alpha;
            let d_q = -0.5 * h.kernel * d_kernel;
            let k = &s.conic;
            // q = d^T K d with d = p - mean
            let kd = [k[0] * h.dx + k[1] * h.dy, k[1] * h.dx + k[2] * h.dy];
            g.mean[0] -= 2.0 * d_q * kd[0];
            g.mean[1] -= 2.0 * d_q * kd[1];
            g.conic[0] += d_q * h.dx * h.dx;
            g.conic[1] += d_q * h.dx * h.dy;
            g.conic[2] += d_q * h.dy * h.dy;
        }
    }
    RowGrad {
        splats: grads,
        background: bg_grad,
    }
}

fn sym_full(s: &[f64; 3]) -> [[f64; 2]; 2] {
    [[s[0], s[1]], [s[1], s[2]]]
}

fn mul2(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

/// Pulls a covariance cotangent through the eigenvalue floor.
pub(crate) fn floor_vjp(floor: &Floor, g: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    match *floor {
        Floor::None => g,
        Floor::Both => [[0.0; 2]; 2],
        Floor::One { l1, l2, v1, v2 } => {
            let quad = |a: &[f64; 2], b: &[f64; 2]| {
                a[0] * (g[0][0] * b[0] + g[0][1] * b[1]) + a[1] * (g[1][0] * b[0] + g[1][1] * b[1])
            };
            let g22 = quad(&v2, &v2);
            let g12 = quad(&v1, &v2);
            let k = (super::COV_FLOOR - l2) / (l2 - l1);
            let mut out = g;
            for a in 0..2 {
                for b in 0..2 {
                    out[a][b] += -g22 * v2[a] * v2[b] + k * g12 * (v1[a] * v2[b] + v2[a] * v1[b]);
                }
            }
            out
        }
    }
}

fn gaussian_backward(p: &Projected, g: &SplatGrad, j: &[[f64; 3]; 2]) -> Gaussian3D {
    let conic = sym2_inverse_full(&p.splat.cov2d);
    // dL/dC = -K (dL/dK) K
    let gk = sym_full(&g.conic);
    let kg = mul2(&mul2(&conic, &gk), &conic);
    let g_cov = [[-kg[0][0], -kg[0][1]], [-kg[1][0], -kg[1][1]]];
    let g_raw = floor_vjp(&p.floor, g_cov);

    // dL/dSigma = J^T G J
    let mut g_sigma: Mat3 = [[0.0; 3]; 3];
    for (a, row) in g_sigma.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            let mut s = 0.0;
            for r in 0..2 {
                for c in 0..2 {
                    s += j[r][a] * g_raw[r][c] * j[c][b];
                }
            }
            *v = s;
        }
    }
    // Sigma = R D R^T
    let rot = &p.rot;
    let mut g_rot: Mat3 = [[0.0; 3]; 3];
    for a in 0..3 {
        for k in 0..3 {
            let gs_r: f64 = (0..3).map(|b| g_sigma[a][b] * rot[b][k]).sum();
            g_rot[a][k] = 2.0 * gs_r * p.variances[k];
        }
    }
    let mut log_scale = [0.0; 3];
    for (k, ls) in log_scale.iter_mut().enumerate() {
        let mut rtgr = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                rtgr += rot[a][k] * g_sigma[a][b] * rot[b][k];
            }
        }
        *ls = 2.0 * p.variances[k] * rtgr;
    }
    let g_unit = quat_to_mat_vjp(&p.quat_unit, &g_rot);
    let q = &p.quat_unit;
    let radial: f64 = (0..4).map(|i| q[i] * g_unit[i]).sum();
    let rotation = [
        (g_unit[0] - q[0] * radial) / p.quat_norm,
        (g_unit[1] - q[1] * radial) / p.quat_norm,
        (g_unit[2] - q[2] * radial) / p.quat_norm,
        (g_unit[3] - q[3] * radial) / p.quat_norm,
    ];
    let position = [
        j[0][0] * g.mean[0] + j[1][0] * g.mean[1],
        j[0][1] * g.mean[0] + j[1][1] * g.mean[1],
        j[0][2] * g.mean[0] + j[1][2] * g.mean[1],
    ];
    let op = p.splat.opacity;
    Gaussian3D {
        position,
        log_scale,
        rotation,
        color: g.color,
        opacity_logit: g.opacity * op * (1.0 - op),
    }
}

fn sym2_inverse_full(c: &[f64; 3]) -> [[f64; 2]; 2] {
    sym_full(&crate::linalg::sym2_inverse(c))
}

/// Exact gradient of `<cotangent, render(scene, camera)>` with respect to the
/// scene parameters.
pub fn render_vjp(scene: &SplatScene, camera: &Camera, cotangent: &ImageCotangent) -> Result<SceneGradient> {
    render_vjp_with(scene, camera, cotangent, Execution::default())
}

pub fn render_vjp_with(
    scene: &SplatScene,
    camera: &Camera,
    cotangent: &ImageCotangent,
    exec: Execution,
) -> Result<SceneGradient> {
    let (w, h) = (camera.width, camera.height);
    let rgb = &cotangent.rgb;
    if rgb.width != w || rgb.height != h || rgb.channels != 3 {
        return Err(Error::shape(format!("{w}x{h}x3"), rgb.shape_string()));
    }
    if let Some(a) = &cotangent.alpha {
        if a.width != w || a.height != h || a.channels != 1 {
            return Err(Error::shape(format!("{w}x{h}x1"), a.shape_string()));
        }
    }
    if !rgb.is_finite() || cotangent.alpha.as_ref().is_some_and(|a| !a.is_finite()) {
        return Err(Error::NonFiniteCotangent);
    }

    let projected = project_full(scene, camera)?;
    let prepared: Vec<Prepared> = projected.iter().map(|p| Prepared::new(&p.splat)).collect();
    let bg = clamp_background(scene.background);
    let rows = exec.map(h, |y| backward_row(&prepared, y, bg, cotangent));

    let mut splat_grads = vec![SplatGrad::default(); prepared.len()];
    let mut bg_grad = [0.0; 3];
    for row in &rows {
        for (acc, g) in splat_grads.iter_mut().zip(&row.splats) {
            acc.add(g);
        }
        for k in 0..3 {
            bg_grad[k] += row.background[k];
        }
    }
    for k in 0..3 {
        if !(0.0..=1.0).contains(&scene.background[k]) {
            bg_grad[k] = 0.0;
        }
    }

    let (_, j) = screen_jacobian(camera);
    let mut out = SceneGradient::zeros(scene.len());
    for (p, g) in projected.iter().zip(&splat_grads) {
        let idx = p.splat.index;
        out.gaussians[idx] = gaussian_backward(p, g, &j);
    }
    out.background = bg_grad;
    Ok(out)
}
