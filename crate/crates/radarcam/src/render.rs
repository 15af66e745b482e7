//! Absolute-error images.
//!
//! The error `e = |map − gt|` is normalized to `t = min(e / max_error, 1)` and
//! colored on a blue → green → red ramp:
//!
//! ```text
//! t ≤ 0.5:  (0, round(510·t), round(255 − 510·t))
//! t > 0.5:  (round(510·(t − 0.5)), round(255 − 510·(t − 0.5)), 0)
//! ```
//!
//! Pixels invalid in either map are black.

use radarcam_core::FloatMap;

use crate::error::{CliError, Result};

pub const DEFAULT_MAX_ERROR: f64 = 10.0;

pub fn ramp(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0);
    let c = |x: f64| x.round().clamp(0.0, 255.0) as u8;
    if t <= 0.5 {
        [0, c(510.0 * t), c(255.0 - 510.0 * t)]
    } else {
        let s = t - 0.5;
        [c(510.0 * s), c(255.0 - 510.0 * s), 0]
    }
}

pub fn error_image(map: &FloatMap, gt: &FloatMap, max_error: f64) -> Result<Vec<[u8; 3]>> {
    if map.shape() != gt.shape() {
        return Err(CliError::Shape(format!("{:?} vs {:?}", map.shape(), gt.shape())));
    }
    if !(max_error > 0.0 && max_error.is_finite()) {
        return Err(CliError::Usage("max error must be positive".into()));
    }
    Ok((0..map.len())
        .map(|i| match (map.at(i), gt.at(i)) {
            (Some(a), Some(b)) => ramp((a - b).abs() / max_error),
            _ => [0, 0, 0],
        })
        .collect())
}
