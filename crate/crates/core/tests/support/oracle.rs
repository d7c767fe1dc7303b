//! Direct per-voxel evaluation of the detection model, written out from its
//! definition without the simulator's precomputation.

use std::cmp::Ordering;

use radarnet::terrain::ElevationGrid;
use radarnet::{Instance, RadarPhysics, VOXEL_COUNT};

const CELL: f64 = 50_000.0 / 30.0;

fn axis(f: f64, n: usize) -> (usize, usize, f64) {
    let f = f.clamp(0.0, (n - 1) as f64);
    let i = (f.floor() as usize).min(n - 2);
    (i, i + 1, f - i as f64)
}

fn ground(g: &ElevationGrid, x: f64, y: f64) -> f64 {
    let (c0, c1, tx) = axis(x / CELL - 0.5, 30);
    let (r0, r1, ty) = axis(y / CELL - 0.5, 30);
    let top = g.cell(r0, c0) * (1.0 - tx) + g.cell(r0, c1) * tx;
    let bottom = g.cell(r1, c0) * (1.0 - tx) + g.cell(r1, c1) * tx;
    top * (1.0 - ty) + bottom * ty
}

/// One radar, one voxel, written out from the model definition.
pub fn oracle_pd(
    g: &ElevationGrid,
    ph: &RadarPhysics,
    radar: &[f64],
    staring: bool,
    x: f64,
    y: f64,
    theta: f64,
) -> f64 {
    let (rx, ry) = (radar[0] * 50_000.0, radar[1] * 50_000.0);
    let tilt = ph.tilt_min + radar[2] * (ph.tilt_max - ph.tilt_min);
    let (dx, dy) = (x - rx, y - ry);
    let bearing = dx.atan2(-dy).to_degrees().rem_euclid(360.0);
    if staring {
        let angle = radar[3] * 360.0;
        let angle = if angle >= 360.0 { 0.0 } else { angle };
        let d = (bearing - angle).rem_euclid(360.0);
        if d.min(360.0 - d) > ph.staring_sector / 2.0 {
            return 0.0;
        }
    }
    let z0 = ground(g, rx, ry) + ph.antenna_height;
    let z1 = ground(g, x, y) + ph.object_altitude_agl;
    let horizontal = dx.hypot(dy);
    let elevation = (z1 - z0).atan2(horizontal).to_degrees();
    if elevation < tilt - ph.vertical_beamwidth / 2.0
        || elevation > tilt + ph.vertical_beamwidth / 2.0
    {
        return 0.0;
    }
    let n = (horizontal / (CELL / 2.0)).ceil() as usize;
    for k in 1..n {
        let t = k as f64 / n as f64;
        if ground(g, rx + t * dx, ry + t * dy).partial_cmp(&(z0 + t * (z1 - z0)))
            != Some(Ordering::Less)
        {
            return 0.0;
        }
    }
    let range = (horizontal * horizontal + (z1 - z0) * (z1 - z0)).sqrt();
    let snr_ref = if staring {
        ph.snr_ref_staring
    } else {
        ph.snr_ref_rotating
    };
    let back = (bearing + 180.0).rem_euclid(360.0);
    let snr = snr_ref - 40.0 * (range.max(1.0) / ph.reference_range).log10()
        + ph.rcs_modulation * (theta - back).to_radians().cos();
    1.0 / (1.0 + (-(ph.sigmoid_slope * (snr - ph.snr_50))).exp())
}

pub fn oracle_map(inst: &Instance, v: &[f64]) -> Vec<bool> {
    let mut map = vec![false; VOXEL_COUNT];
    for (k, slot) in map.iter_mut().enumerate() {
        let (it, iy, ix) = (k / 900, (k / 30) % 30, k % 30);
        let (x, y, theta) = (
            (ix as f64 + 0.5) * CELL,
            (iy as f64 + 0.5) * CELL,
            (it as f64 + 0.5) * 12.0,
        );
        let mut missed = 1.0;
        missed *= 1.0 - oracle_pd(&inst.grid, &inst.physics, &v[0..3], false, x, y, theta);
        for j in 0..3 {
            let b = 3 + 4 * j;
            missed *= 1.0 - oracle_pd(&inst.grid, &inst.physics, &v[b..b + 4], true, x, y, theta);
        }
        *slot = 1.0 - missed >= inst.tau;
    }
    map
}
