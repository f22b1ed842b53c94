//! Small fixed-size vector and matrix helpers for the renderer.

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];
/// Symmetric 2x2 stored as `[xx, xy, yy]`.
pub type Sym2 = [f64; 3];
/// 2x3 matrix, rows first.
pub type Mat23 = [[f64; 3]; 2];

pub fn mat3_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub fn mat3_vec(a: &Mat3, v: &Vec3) -> Vec3 {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

pub fn transpose3(a: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

pub fn dot3(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// `J * S * J^T` for a 2x3 `J` and symmetric 3x3 `S`.
pub fn congruence_23(j: &Mat23, s: &Mat3) -> Sym2 {
    let js = [mat3_vec(&transpose3(s), &j[0]), mat3_vec(&transpose3(s), &j[1])];
    [dot3(&js[0], &j[0]), dot3(&js[0], &j[1]), dot3(&js[1], &j[1])]
}

/// Rotation matrix of a unit quaternion `(w, x, y, z)`.
pub fn quat_to_mat(q: &[f64; 4]) -> Mat3 {
    let [w, x, y, z] = *q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// Pulls a cotangent on the rotation matrix back onto the (unit) quaternion
/// components, treating `quat_to_mat` as a polynomial map.
pub fn quat_to_mat_vjp(q: &[f64; 4], g: &Mat3) -> [f64; 4] {
    let [w, x, y, z] = *q;
    let gw = 2.0 * (-z * g[0][1] + y * g[0][2] + z * g[1][0] - x * g[1][2] - y * g[2][0] + x * g[2][1]);
    let gx = 2.0
        * (y * g[0][1] + z * g[0][2] + y * g[1][0] - 2.0 * x * g[1][1] - w * g[1][2] + z * g[2][0]
            + w * g[2][1]
            - 2.0 * x * g[2][2]);
    let gy = 2.0
        * (-2.0 * y * g[0][0] + x * g[0][1] + w * g[0][2] + x * g[1][0] + z * g[1][2] - w * g[2][0]
            + z * g[2][1]
            - 2.0 * y * g[2][2]);
    let gz = 2.0
        * (-2.0 * z * g[0][0] - w * g[0][1] + x * g[0][2] + w * g[1][0] - 2.0 * z * g[1][1]
            + y * g[1][2]
            + x * g[2][0]
            + y * g[2][1]);
    [gw, gx, gy, gz]
}

pub fn normalize_quat(q: &[f64; 4]) -> ([f64; 4], f64) {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    ([q[0] / n, q[1] / n, q[2] / n, q[3] / n], n)
}

/// Eigen-decomposition of a symmetric 2x2: `(lambda_max, lambda_min, v_max, v_min)`.
pub fn sym2_eigen(c: &Sym2) -> (f64, f64, [f64; 2], [f64; 2]) {
    let [a, b, d] = *c;
    let mean = 0.5 * (a + d);
    let half_diff = 0.5 * (a - d);
    let r = (half_diff * half_diff + b * b).sqrt();
    let l1 = mean + r;
    let l2 = mean - r;
    let v1 = if r == 0.0 {
        [1.0, 0.0]
    } else if half_diff >= 0.0 {
        let v = [half_diff + r, b];
        let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
        [v[0] / n, v[1] / n]
    } else {
        let v = [b, r - half_diff];
        let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
        [v[0] / n, v[1] / n]
    };
    let v2 = [-v1[1], v1[0]];
    (l1, l2, v1, v2)
}

pub fn sym2_inverse(c: &Sym2) -> Sym2 {
    let det = c[0] * c[2] - c[1] * c[1];
    [c[2] / det, -c[1] / det, c[0] / det]
}
