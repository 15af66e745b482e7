//! Scale-map refinement: composing a residual with the globally aligned
//! depth, the smoothed-L1 supervision loss, and a small convolutional
//! residual regressor trained with hand-derived gradients.

mod loss;
mod net;
mod train;

pub use loss::{sml_loss, smooth_l1, smooth_l1_with, SmoothL1Form};
pub use net::{refiner_forward, refiner_grad, ConvLayer, RefinerParams, LAYER_SHAPES, LEAKY_SLOPE};
pub use train::{train_refiner, train_refiner_with, batch_loss_and_grad, reduce, Diverged, TrainConfig, Trained, TrainingFrame};

use crate::error::Result;
use crate::map::{FloatMap, MapKind, Mask};

/// Lower clamp on the inverse scale `ReLU(1 + r)`.
pub const EPS_SCALE: f64 = 1e-3;

/// Output of [`compose`].
#[derive(Debug, Clone, PartialEq)]
pub struct Composition {
    pub scale: FloatMap,
    pub depth: FloatMap,
    /// Pixels where `ReLU(1 + r)` fell below [`EPS_SCALE`] and was clamped.
    pub clamped: Mask,
}

/// Inverse scale `max(ReLU(1 + r), EPS_SCALE)` and whether the clamp fired.
#[inline]
pub fn inverse_scale(r: f64) -> (f64, bool) {
    let inv = (1.0 + r).max(0.0);
    if inv < EPS_SCALE {
        (EPS_SCALE, true)
    } else {
        (inv, false)
    }
}

/// `1/s = ReLU(1 + r)`, `d = s / z_ga`.
///
/// Output pixels are valid where both `z_ga` and `r` are valid.
pub fn compose(z_ga: &FloatMap, r: &FloatMap) -> Result<Composition> {
    z_ga.expect_kind(MapKind::InverseDepth)?;
    r.expect_kind(MapKind::Residual)?;
    r.expect_shape(z_ga.shape())?;
    let (w, h) = z_ga.shape();
    let mut scale = FloatMap::invalid(MapKind::Scale, w, h);
    let mut depth = FloatMap::invalid(MapKind::Depth, w, h);
    let mut clamped = alloc::vec![false; w * h];
    for (i, res) in r.iter_valid() {
        let Some(z) = z_ga.at(i) else { continue };
        let (inv, hit) = inverse_scale(res);
        let s = 1.0 / inv;
        scale.put(i, s);
        depth.put(i, s / z);
        clamped[i] = hit;
    }
    Ok(Composition {
        scale,
        depth,
        clamped: Mask::new(w, h, clamped)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::invert_inverse_map;
    use proptest::prelude::*;

    #[test]
    fn zero_residual_is_identity() {
        let z = FloatMap::dense(MapKind::InverseDepth, 3, 1, alloc::vec![0.5, 0.1, 0.0125]).unwrap();
        let r = FloatMap::constant(MapKind::Residual, 3, 1, 0.0).unwrap();
        let c = compose(&z, &r).unwrap();
        assert_eq!(c.depth, invert_inverse_map(&z).unwrap());
        assert_eq!(c.clamped.count(), 0);
    }

    #[test]
    fn unit_residual() {
        let z = FloatMap::constant(MapKind::InverseDepth, 1, 1, 0.5).unwrap();
        let r = FloatMap::constant(MapKind::Residual, 1, 1, 1.0).unwrap();
        let c = compose(&z, &r).unwrap();
        assert_eq!(c.scale.at(0), Some(0.5));
        assert_eq!(c.depth.at(0), Some(1.0));
    }

    #[test]
    fn clamp_at_relu_boundary() {
        let z = FloatMap::constant(MapKind::InverseDepth, 2, 1, 0.5).unwrap();
        let r = FloatMap::dense(MapKind::Residual, 2, 1, alloc::vec![-1.0, -3.0]).unwrap();
        let c = compose(&z, &r).unwrap();
        for i in 0..2 {
            assert_eq!(c.depth.at(i), Some(1.0 / EPS_SCALE / 0.5));
        }
        assert_eq!(c.clamped.count(), 2);
    }

    #[test]
    fn compose_shape_and_validity() {
        let z = FloatMap::new(MapKind::InverseDepth, 2, 1, alloc::vec![0.5, 0.0], alloc::vec![true, false]).unwrap();
        let r = FloatMap::constant(MapKind::Residual, 2, 1, 0.0).unwrap();
        assert_eq!(compose(&z, &r).unwrap().depth.valid_count(), 1);
        let r2 = FloatMap::constant(MapKind::Residual, 1, 2, 0.0).unwrap();
        assert!(compose(&z, &r2).is_err());
    }

    proptest! {
        #[test]
        fn zero_residual_reproduces_aligned_depth(zs in proptest::collection::vec(1e-3f64..2.0, 1..40)) {
            let n = zs.len();
            let z = FloatMap::dense(MapKind::InverseDepth, n, 1, zs).unwrap();
            let r = FloatMap::constant(MapKind::Residual, n, 1, 0.0).unwrap();
            let d = compose(&z, &r).unwrap().depth;
            for i in 0..n {
                let want = 1.0 / z.at(i).unwrap();
                prop_assert!((d.at(i).unwrap() - want).abs() <= 1e-12 * want);
            }
        }
    }
}
