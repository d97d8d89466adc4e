//! Angle-space evaluation: axis-angle to rotation matrix to intrinsic Z-Y-X
//! Euler angles, and the mean angle error between two exponential-map poses.
//!
//! Run with: cargo run --example angle_metrics

use stsgcn::eval::{euler_to_rotmat, expmap_to_rotmat, mae_at_horizons, rotmat_to_euler};
use stsgcn::Tensor;

fn main() -> stsgcn::Result<()> {
    // a quarter turn about z
    let v = [0.0, 0.0, std::f64::consts::FRAC_PI_2];
    let r = expmap_to_rotmat(v);
    println!("axis-angle {v:?} ->");
    for row in &r {
        println!("  [{:7.4} {:7.4} {:7.4}]", row[0], row[1], row[2]);
    }
    let angles = rotmat_to_euler(&r)?;
    println!("euler (z, y, x) = {angles:?}");
    let back = euler_to_rotmat(angles);
    let gap = r
        .iter()
        .flatten()
        .zip(back.iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    println!("recomposition gap: {gap:.2e}");

    // MAE between two single-joint poses, one frame
    let pred = Tensor::new(vec![1, 3, 1, 1], vec![0.0, 0.0, 0.3])?;
    let target = Tensor::new(vec![1, 3, 1, 1], vec![0.0, 0.0, 0.0])?;
    let mae = mae_at_horizons(&pred, &target, &[1])?;
    println!("mae between a 0.3 rad z-rotation and identity: {:.4} rad", mae[0]);

    // the same rotation written with an extra full turn scores zero
    let wound = Tensor::new(
        vec![1, 3, 1, 1],
        vec![0.0, 0.0, 0.3 + std::f64::consts::TAU],
    )?;
    let same = mae_at_horizons(&pred, &wound, &[1])?;
    println!("mae between 0.3 rad and (0.3 + 2pi) rad: {:.2e} rad", same[0]);
    Ok(())
}
