use super::{sigmoid, Camera, Gaussian3D, Splat2D, SplatScene};
use crate::error::Result;
use crate::linalg::{congruence_23, mat3_mul, mat3_vec, normalize_quat, quat_to_mat, sym2_eigen, Mat23, Mat3, Sym2};

/// Minimum eigenvalue of a screen covariance, in px^2.
pub const COV_FLOOR: f64 = 1e-6;

/// World-to-camera rotation: `Rx(pi) * Rx(elevation) * Ry(azimuth)`.
///
/// The leading flip makes camera y point down the image and camera z point
/// away from the viewer, so larger depth is farther.
pub fn view_matrix(azimuth: f64, elevation: f64) -> Mat3 {
    let (sa, ca) = azimuth.sin_cos();
    let (se, ce) = elevation.sin_cos();
    let ry = [[ca, 0.0, sa], [0.0, 1.0, 0.0], [-sa, 0.0, ca]];
    let rx = [[1.0, 0.0, 0.0], [0.0, ce, -se], [0.0, se, ce]];
    let flip = [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]];
    mat3_mul(&flip, &mat3_mul(&rx, &ry))
}

/// Which eigen-directions of the screen covariance were floored.
#[derive(Clone, Copy, Debug)]
pub(crate) enum Floor {
    None,
    /// Smaller eigenvalue clamped; carries `(lambda_max, lambda_min, v_max, v_min)`.
    One {
        l1: f64,
        l2: f64,
        v1: [f64; 2],
        v2: [f64; 2],
    },
    Both,
}

/// Projection of one Gaussian plus what the backward pass needs.
#[derive(Clone, Debug)]
pub(crate) struct Projected {
    pub splat: Splat2D,
    pub floor: Floor,
    pub rot: Mat3,
    pub quat_unit: [f64; 4],
    pub quat_norm: f64,
    pub variances: [f64; 3],
}

/// Screen Jacobian `P * V / scale` (2x3).
pub(crate) fn screen_jacobian(camera: &Camera) -> (Mat3, Mat23) {
    let view = view_matrix(camera.azimuth, camera.elevation);
    let s = camera.scale;
    let j = [
        [view[0][0] / s, view[0][1] / s, view[0][2] / s],
        [view[1][0] / s, view[1][1] / s, view[1][2] / s],
    ];
    (view, j)
}

pub(crate) fn floor_cov(raw: &Sym2) -> (Sym2, Floor) {
    let (l1, l2, v1, v2) = sym2_eigen(raw);
    if l2 >= COV_FLOOR {
        return (*raw, Floor::None);
    }
    if l1 < COV_FLOOR {
        return ([COV_FLOOR, 0.0, COV_FLOOR], Floor::Both);
    }
    let f = COV_FLOOR;
    let cov = [
        l1 * v1[0] * v1[0] + f * v2[0] * v2[0],
        l1 * v1[0] * v1[1] + f * v2[0] * v2[1],
        l1 * v1[1] * v1[1] + f * v2[1] * v2[1],
    ];
    (cov, Floor::One { l1, l2, v1, v2 })
}

pub(crate) fn project_one(g: &Gaussian3D, index: usize, view: &Mat3, j: &Mat23, center: [f64; 2]) -> Projected {
    let (quat_unit, quat_norm) = normalize_quat(&g.rotation);
    let rot = quat_to_mat(&quat_unit);
    let variances = [
        (2.0 * g.log_scale[0]).exp(),
        (2.0 * g.log_scale[1]).exp(),
        (2.0 * g.log_scale[2]).exp(),
    ];
    let mut sigma = [[0.0; 3]; 3];
    for (a, row) in sigma.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| rot[a][k] * variances[k] * rot[b][k]).sum();
        }
    }
    let raw = congruence_23(j, &sigma);
    let (cov2d, floor) = floor_cov(&raw);
    let p = &g.position;
    let mean2d = [
        j[0][0] * p[0] + j[0][1] * p[1] + j[0][2] * p[2] + center[0],
        j[1][0] * p[0] + j[1][1] * p[1] + j[1][2] * p[2] + center[1],
    ];
    let depth = mat3_vec(view, p)[2];
    Projected {
        splat: Splat2D {
            index,
            mean2d,
            cov2d,
            depth,
            color: g.color,
            opacity: sigmoid(g.opacity_logit),
        },
        floor,
        rot,
        quat_unit,
        quat_norm,
        variances,
    }
}

pub(crate) fn project_full(scene: &SplatScene, camera: &Camera) -> Result<Vec<Projected>> {
    camera.validate()?;
    for (i, g) in scene.gaussians.iter().enumerate() {
        g.validate(i)?;
    }
    let (view, j) = screen_jacobian(camera);
    let center = camera.center();
    let mut out: Vec<Projected> = scene
        .gaussians
        .iter()
        .enumerate()
        .map(|(i, g)| project_one(g, i, &view, &j, center))
        .collect();
    out.sort_by(|a, b| {
        b.splat
            .depth
            .total_cmp(&a.splat.depth)
            .then(a.splat.index.cmp(&b.splat.index))
    });
    Ok(out)
}

/// Projects every Gaussian and returns the splats sorted back-to-front
/// (descending depth, ties by ascending index).
pub fn project(scene: &SplatScene, camera: &Camera) -> Result<Vec<Splat2D>> {
    Ok(project_full(scene, camera)?.into_iter().map(|p| p.splat).collect())
}
