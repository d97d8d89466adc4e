//! Axis-angle and Euler-angle rotation conversions used by the angle metric.

use crate::error::{Error, Result};

pub type Mat3 = [[f64; 3]; 3];

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Rodrigues form: axis-angle 3-vector to rotation matrix. The angle is the
/// vector norm; below 1e-12 the exact identity is returned.
pub fn expmap_to_rotmat(v: [f64; 3]) -> Mat3 {
    let theta = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if theta < 1e-12 {
        return IDENTITY;
    }
    let (x, y, z) = (v[0] / theta, v[1] / theta, v[2] / theta);
    let (s, c) = theta.sin_cos();
    let t = 1.0 - c;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}

fn matmul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for (k, bk) in b.iter().enumerate() {
                out[i][j] += a[i][k] * bk[j];
            }
        }
    }
    out
}

/// Largest deviation from orthonormality: max |R^T R - I|, plus |det - 1|.
fn rotation_defect(r: &Mat3) -> f64 {
    let mut defect = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            let mut dot = 0.0;
            for row in r {
                dot += row[i] * row[j];
            }
            let target = if i == j { 1.0 } else { 0.0 };
            defect = defect.max((dot - target).abs());
        }
    }
    let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
        - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
        + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
    defect.max((det - 1.0).abs())
}

/// Intrinsic Z-Y-X decomposition: returns `(z, y, x)` angles such that
/// `Rz(z) * Ry(y) * Rx(x)` reproduces the input. At gimbal lock
/// (`|R[2][0]| >= 1 - 1e-9`) the x angle is pinned to 0.
pub fn rotmat_to_euler(r: &Mat3) -> Result<[f64; 3]> {
    let defect = rotation_defect(r);
    if defect > 1e-6 {
        return Err(Error::Data(format!(
            "matrix is not a rotation (defect {defect:.2e})"
        )));
    }
    let s = r[2][0];
    if s.abs() >= 1.0 - 1e-9 {
        let y = if s <= 0.0 {
            std::f64::consts::FRAC_PI_2
        } else {
            -std::f64::consts::FRAC_PI_2
        };
        let z = (-r[0][1]).atan2(r[1][1]);
        return Ok([z, y, 0.0]);
    }
    let y = (-s).asin();
    let z = r[1][0].atan2(r[0][0]);
    let x = r[2][1].atan2(r[2][2]);
    Ok([z, y, x])
}

/// Recompose `Rz(z) * Ry(y) * Rx(x)`.
pub fn euler_to_rotmat(angles: [f64; 3]) -> Mat3 {
    let (sz, cz) = angles[0].sin_cos();
    let (sy, cy) = angles[1].sin_cos();
    let (sx, cx) = angles[2].sin_cos();
    let rz = [[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]];
    let ry = [[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]];
    let rx = [[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]];
    matmul(&matmul(&rz, &ry), &rx)
}
