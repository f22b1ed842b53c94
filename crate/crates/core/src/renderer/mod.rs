//! Differentiable Gaussian splatting with an orthographic camera.
//!
//! Forward: [`project`] maps each 3D Gaussian to a screen-space splat and sorts
//! back-to-front, [`rasterize`] composites the splats with the "over" operator.
//! Backward: [`render_vjp`] returns the exact reverse-mode gradient of
//! `<cotangent, render(scene, camera)>` with respect to every scene parameter.

mod backward;
pub mod io;
mod project;
mod raster;

pub use backward::{render_vjp, render_vjp_with};
pub use project::{project, view_matrix, COV_FLOOR};
pub use raster::{cull_margin, rasterize, rasterize_with, ALPHA_MAX};

use crate::buffer::Buffer;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg::{Sym2, Vec3};

/// Number of scalar parameters per Gaussian.
pub const PARAMS_PER_GAUSSIAN: usize = 14;

/// One anisotropic 3D Gaussian.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gaussian3D {
    pub position: Vec3,
    /// Per-axis log standard deviation in world units.
    pub log_scale: Vec3,
    /// Quaternion `(w, x, y, z)`; normalized before every use.
    pub rotation: [f64; 4],
    pub color: Vec3,
    /// Opacity is `sigmoid(opacity_logit)`.
    pub opacity_logit: f64,
}

/// Parameter groups, in flattened order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Position,
    LogScale,
    Rotation,
    Color,
    Opacity,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 5] = [
        ParamGroup::Position,
        ParamGroup::LogScale,
        ParamGroup::Rotation,
        ParamGroup::Color,
        ParamGroup::Opacity,
    ];

    /// Group of flattened parameter `k` (`0..PARAMS_PER_GAUSSIAN`).
    pub fn of_param(k: usize) -> ParamGroup {
        match k {
            0..=2 => ParamGroup::Position,
            3..=5 => ParamGroup::LogScale,
            6..=9 => ParamGroup::Rotation,
            10..=12 => ParamGroup::Color,
            _ => ParamGroup::Opacity,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::Position => "position",
            ParamGroup::LogScale => "log_scale",
            ParamGroup::Rotation => "rotation",
            ParamGroup::Color => "color",
            ParamGroup::Opacity => "opacity_logit",
        }
    }
}

impl Gaussian3D {
    pub fn zeros() -> Self {
        Gaussian3D {
            position: [0.0; 3],
            log_scale: [0.0; 3],
            rotation: [0.0; 4],
            color: [0.0; 3],
            opacity_logit: 0.0,
        }
    }

    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn to_params(&self) -> [f64; PARAMS_PER_GAUSSIAN] {
        let mut p = [0.0; PARAMS_PER_GAUSSIAN];
        p[0..3].copy_from_slice(&self.position);
        p[3..6].copy_from_slice(&self.log_scale);
        p[6..10].copy_from_slice(&self.rotation);
        p[10..13].copy_from_slice(&self.color);
        p[13] = self.opacity_logit;
        p
    }

    pub fn from_params(p: &[f64; PARAMS_PER_GAUSSIAN]) -> Self {
        Gaussian3D {
            position: [p[0], p[1], p[2]],
            log_scale: [p[3], p[4], p[5]],
            rotation: [p[6], p[7], p[8], p[9]],
            color: [p[10], p[11], p[12]],
            opacity_logit: p[13],
        }
    }

    pub(crate) fn validate(&self, index: usize) -> Result<()> {
        let checks: [(&'static str, bool); 5] = [
            ("position", self.position.iter().all(|v| v.is_finite())),
            ("log_scale", self.log_scale.iter().all(|v| v.is_finite())),
            (
                "rotation",
                self.rotation.iter().all(|v| v.is_finite()) && self.rotation.iter().any(|&v| v != 0.0),
            ),
            ("color", self.color.iter().all(|v| v.is_finite())),
            ("opacity_logit", self.opacity_logit.is_finite()),
        ];
        for (field, ok) in checks {
            if !ok {
                return Err(Error::NonFiniteParameter { index, field });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplatScene {
    pub gaussians: Vec<Gaussian3D>,
    pub background: Vec3,
}

impl SplatScene {
    pub fn new(gaussians: Vec<Gaussian3D>, background: Vec3) -> Self {
        SplatScene {
            gaussians,
            background,
        }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }
}

/// Orthographic orbit camera.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    pub azimuth: f64,
    pub elevation: f64,
    pub width: usize,
    pub height: usize,
    /// World units per pixel.
    pub scale: f64,
}

impl Camera {
    pub fn new(azimuth: f64, elevation: f64, width: usize, height: usize, scale: f64) -> Self {
        Camera {
            azimuth,
            elevation,
            width,
            height,
            scale,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidCamera(format!(
                "viewport {}x{} must be at least 1x1",
                self.width, self.height
            )));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::InvalidCamera(format!("scale {} must be positive", self.scale)));
        }
        if !self.azimuth.is_finite() {
            return Err(Error::InvalidCamera("azimuth must be finite".into()));
        }
        let half_pi = std::f64::consts::FRAC_PI_2;
        if !(self.elevation >= -half_pi && self.elevation <= half_pi) {
            return Err(Error::InvalidCamera(format!(
                "elevation {} outside [-pi/2, pi/2]",
                self.elevation
            )));
        }
        Ok(())
    }

    pub fn center(&self) -> [f64; 2] {
        [self.width as f64 / 2.0, self.height as f64 / 2.0]
    }
}

/// Rendered RGB (3 channels) and coverage alpha (1 channel).
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub rgb: Buffer,
    pub alpha: Buffer,
}

impl Image {
    pub fn filled(width: usize, height: usize, rgb: Vec3) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Image {
            width,
            height,
            rgb: Buffer {
                width,
                height,
                channels: 3,
                data,
            },
            alpha: Buffer::zeros(width, height, 1),
        }
    }
}

/// Upstream gradient for [`render_vjp`]. The alpha cotangent defaults to zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageCotangent {
    pub rgb: Buffer,
    pub alpha: Option<Buffer>,
}

impl ImageCotangent {
    pub fn rgb(rgb: Buffer) -> Self {
        ImageCotangent { rgb, alpha: None }
    }
}

/// A projected Gaussian in pixel space.
#[derive(Clone, Debug, PartialEq)]
pub struct Splat2D {
    /// Index of the source Gaussian in the scene.
    pub index: usize,
    pub mean2d: [f64; 2],
    /// Floored screen covariance (px^2).
    pub cov2d: Sym2,
    pub depth: f64,
    pub color: Vec3,
    pub opacity: f64,
}

/// Gradient shaped exactly like a [`SplatScene`].
#[derive(Clone, Debug, PartialEq)]
pub struct SceneGradient {
    pub gaussians: Vec<Gaussian3D>,
    pub background: Vec3,
}

impl SceneGradient {
    pub fn zeros(n: usize) -> Self {
        SceneGradient {
            gaussians: vec![Gaussian3D::zeros(); n],
            background: [0.0; 3],
        }
    }

    pub fn zeros_like(scene: &SplatScene) -> Self {
        Self::zeros(scene.len())
    }

    pub fn add_assign(&mut self, other: &SceneGradient) {
        self.axpy(1.0, other);
    }

    /// `self += k * other`.
    pub fn axpy(&mut self, k: f64, other: &SceneGradient) {
        for (a, b) in self.gaussians.iter_mut().zip(&other.gaussians) {
            let mut pa = a.to_params();
            let pb = b.to_params();
            for (x, y) in pa.iter_mut().zip(pb) {
                *x += k * y;
            }
            *a = Gaussian3D::from_params(&pa);
        }
        for (x, y) in self.background.iter_mut().zip(other.background) {
            *x += k * y;
        }
    }

    pub fn scaled(&self, k: f64) -> SceneGradient {
        let mut out = SceneGradient::zeros(self.gaussians.len());
        out.axpy(k, self);
        out
    }

    /// Euclidean norm over the Gaussian parameters and background.
    pub fn norm(&self) -> f64 {
        let mut s: f64 = self.background.iter().map(|v| v * v).sum();
        for g in &self.gaussians {
            s += g.to_params().iter().map(|v| v * v).sum::<f64>();
        }
        s.sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.background.iter().all(|v| v.is_finite())
            && self.gaussians.iter().all(|g| g.to_params().iter().all(|v| v.is_finite()))
    }

    pub fn is_zero(&self) -> bool {
        self.background.iter().all(|&v| v == 0.0)
            && self.gaussians.iter().all(|g| g.to_params().iter().all(|&v| v == 0.0))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `project` followed by `rasterize`.
pub fn render(scene: &SplatScene, camera: &Camera) -> Result<Image> {
    render_with(scene, camera, Execution::default())
}

pub fn render_with(scene: &SplatScene, camera: &Camera, exec: Execution) -> Result<Image> {
    let splats = project(scene, camera)?;
    Ok(rasterize_with(&splats, camera, scene.background, exec))
}
