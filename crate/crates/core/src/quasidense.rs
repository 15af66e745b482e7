//! Quasi-dense depth from per-radar-point confidence maps.
//!
//! Each radar point owns a rectangular patch of association confidences
//! around its projection. Every pixel takes the depth of the point with the
//! highest confidence there, if that confidence clears a threshold `tau`.

use alloc::vec;
use alloc::vec::Vec;

use crate::camera::{CameraIntrinsics, PointCloud};
use crate::error::{Error, Result};
use crate::map::{FloatMap, MapKind, Mask, EPS_DEPTH};
use crate::sum::CompensatedSum;

/// Default association threshold.
pub const DEFAULT_TAU: f64 = 0.5;
/// Pixels whose interpolated depth is within this many meters of a radar
/// point's depth are positives for that point.
pub const LABEL_GATE: f64 = 0.5;
/// Probability clamp used by [`bce_loss`].
pub const BCE_EPS: f64 = 1e-7;

/// Image-space rectangle `[u0, u0 + w) × [v0, v0 + h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PatchWindow {
    pub u0: usize,
    pub v0: usize,
    pub w: usize,
    pub h: usize,
}

impl PatchWindow {
    pub fn len(&self) -> usize {
        self.w * self.h
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.u0 + self.w <= width && self.v0 + self.h <= height
    }
}

/// Patch window centred on the projection of `p`.
///
/// Near the border the window is shifted, not shrunk, so every patch keeps
/// the requested size.
pub fn make_patch_window(
    p: [f64; 3],
    k: &CameraIntrinsics,
    patch_w: usize,
    patch_h: usize,
) -> Result<PatchWindow> {
    if patch_w > k.width || patch_h > k.height || patch_w == 0 || patch_h == 0 {
        return Err(Error::PatchTooLarge {
            patch: (patch_w, patch_h),
            image: (k.width, k.height),
        });
    }
    let (u, v) = k.pixel_of(p).ok_or(Error::OutOfView)?;
    let u0 = u.saturating_sub(patch_w / 2).min(k.width - patch_w);
    let v0 = v.saturating_sub(patch_h / 2).min(k.height - patch_h);
    Ok(PatchWindow {
        u0,
        v0,
        w: patch_w,
        h: patch_h,
    })
}

/// Confidences of one radar point over its window, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidencePatch {
    pub point_index: usize,
    pub window: PatchWindow,
    conf: Vec<f64>,
}

impl ConfidencePatch {
    pub fn new(point_index: usize, window: PatchWindow, conf: Vec<f64>) -> Result<Self> {
        if conf.len() != window.len() {
            return Err(Error::ShapeMismatch {
                left: (window.w, window.h),
                right: (conf.len(), 1),
            });
        }
        if conf.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidValue("confidence outside [0, 1]"));
        }
        Ok(Self {
            point_index,
            window,
            conf,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.conf
    }

    /// Confidence at image pixel `(u, v)`, if inside the window.
    pub fn at_pixel(&self, u: usize, v: usize) -> Option<f64> {
        let w = &self.window;
        if u < w.u0 || v < w.v0 || u >= w.u0 + w.w || v >= w.v0 + w.h {
            return None;
        }
        Some(self.conf[(v - w.v0) * w.w + (u - w.u0)])
    }
}

/// Label-quality confidence: `1` where the interpolated depth lies within
/// [`LABEL_GATE`] of the point's depth, `0` elsewhere (including invalid
/// pixels). Doubles as the binary training label of the point.
pub fn oracle_confidence(
    point_index: usize,
    p: [f64; 3],
    window: PatchWindow,
    d_int: &FloatMap,
) -> Result<ConfidencePatch> {
    if !window.fits(d_int.width(), d_int.height()) {
        return Err(Error::ShapeMismatch {
            left: d_int.shape(),
            right: (window.u0 + window.w, window.v0 + window.h),
        });
    }
    let z = p[2];
    let mut conf = Vec::with_capacity(window.len());
    for v in window.v0..window.v0 + window.h {
        for u in window.u0..window.u0 + window.w {
            let hit = d_int
                .get(u, v)
                .is_some_and(|d| libm::fabs(d - z) < LABEL_GATE);
            conf.push(if hit { 1.0 } else { 0.0 });
        }
    }
    ConfidencePatch::new(point_index, window, conf)
}

/// Source of per-point confidence patches.
pub trait ConfidenceProvider {
    fn confidence(&self, point_index: usize, point: [f64; 3], window: PatchWindow) -> Result<ConfidencePatch>;
}

/// Upper-bound provider built from interpolated LiDAR depth.
#[derive(Debug, Clone, Copy)]
pub struct OracleConfidence<'a> {
    pub d_int: &'a FloatMap,
}

impl ConfidenceProvider for OracleConfidence<'_> {
    fn confidence(&self, point_index: usize, point: [f64; 3], window: PatchWindow) -> Result<ConfidencePatch> {
        oracle_confidence(point_index, point, window, self.d_int)
    }
}

/// `k` confidence patches for the points of one radar cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceStack {
    width: usize,
    height: usize,
    patches: Vec<ConfidencePatch>,
    cloud: PointCloud,
}

impl ConfidenceStack {
    pub fn new(
        width: usize,
        height: usize,
        patches: Vec<ConfidencePatch>,
        cloud: PointCloud,
    ) -> Result<Self> {
        let mut seen = vec![false; cloud.len()];
        for patch in &patches {
            let i = patch.point_index;
            if i >= cloud.len() {
                return Err(Error::InvalidValue("patch refers to a missing radar point"));
            }
            if core::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidValue("more than one patch for a radar point"));
            }
            if !patch.window.fits(width, height) {
                return Err(Error::InvalidValue("patch window outside the image"));
            }
            if !(cloud.points()[i][2] > EPS_DEPTH) {
                return Err(Error::InvalidValue("patch for a point behind the camera"));
            }
        }
        Ok(Self {
            width,
            height,
            patches,
            cloud,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn patches(&self) -> &[ConfidencePatch] {
        &self.patches
    }

    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }
}

/// Queries `provider` for every radar point that projects into the image.
pub fn build_stack(
    cloud: &PointCloud,
    k: &CameraIntrinsics,
    provider: &dyn ConfidenceProvider,
    patch_w: usize,
    patch_h: usize,
) -> Result<ConfidenceStack> {
    let mut patches = Vec::new();
    for (i, &p) in cloud.points().iter().enumerate() {
        let window = match make_patch_window(p, k, patch_w, patch_h) {
            Ok(w) => w,
            Err(Error::OutOfView) => continue,
            Err(e) => return Err(e),
        };
        patches.push(provider.confidence(i, p, window)?);
    }
    ConfidenceStack::new(k.width, k.height, patches, cloud.clone())
}

/// Per-pixel argmax over covering patches; the winner's depth is kept when
/// its confidence exceeds `tau`. Ties go to the lowest point index, so the
/// result does not depend on patch order.
pub fn assemble_quasi_dense(stack: &ConfidenceStack, tau: f64) -> FloatMap {
    let (w, h) = stack.shape();
    let mut best_conf = vec![f64::NEG_INFINITY; w * h];
    let mut best_idx = vec![usize::MAX; w * h];
    for patch in &stack.patches {
        let win = patch.window;
        for (row, line) in patch.conf.chunks_exact(win.w).enumerate() {
            let base = (win.v0 + row) * w + win.u0;
            for (col, &c) in line.iter().enumerate() {
                let i = base + col;
                if c > best_conf[i] || (c == best_conf[i] && patch.point_index < best_idx[i]) {
                    best_conf[i] = c;
                    best_idx[i] = patch.point_index;
                }
            }
        }
    }
    let points = stack.cloud.points();
    let mut out = FloatMap::invalid(MapKind::Depth, w, h);
    for i in 0..w * h {
        if best_conf[i] > tau {
            out.put(i, points[best_idx[i]][2]);
        }
    }
    out
}

/// Quasi-dense scale `d_q / d_ga` and its reciprocal with holes filled.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleMaps {
    /// Valid where both inputs are valid.
    pub scale: FloatMap,
    /// `1 / scale`, and exactly `1.0` wherever `scale` is missing.
    pub inv_filled: FloatMap,
    /// Pixels of `inv_filled` that hold the fill value.
    pub filled: Mask,
}

pub fn compute_scale_map(d_q: &FloatMap, d_ga: &FloatMap) -> Result<ScaleMaps> {
    d_q.expect_kind(MapKind::Depth)?;
    d_ga.expect_kind(MapKind::Depth)?;
    d_q.expect_shape(d_ga.shape())?;
    let (w, h) = d_q.shape();
    let mut scale = FloatMap::invalid(MapKind::Scale, w, h);
    let mut inv = vec![1.0; w * h];
    let mut filled = vec![true; w * h];
    for (i, q) in d_q.iter_valid() {
        if let Some(ga) = d_ga.at(i) {
            let s = q / ga;
            let r = 1.0 / s;
            if s.is_finite() && s > 0.0 && r.is_finite() {
                scale.put(i, s);
                inv[i] = r;
                filled[i] = false;
            }
        }
    }
    Ok(ScaleMaps {
        scale,
        inv_filled: FloatMap::dense(MapKind::Scale, w, h, inv)?,
        filled: Mask::new(w, h, filled)?,
    })
}

/// Mean binary cross-entropy of a predicted patch against a label patch.
pub fn bce_loss(pred: &ConfidencePatch, label: &ConfidencePatch) -> Result<f64> {
    if pred.window != label.window {
        return Err(Error::ShapeMismatch {
            left: (pred.window.w, pred.window.h),
            right: (label.window.w, label.window.h),
        });
    }
    if pred.conf.is_empty() {
        return Err(Error::EmptyDomain);
    }
    let total: CompensatedSum = pred
        .conf
        .iter()
        .zip(&label.conf)
        .map(|(&p, &y)| {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            -(y * libm::log(p) + (1.0 - y) * libm::log(1.0 - p))
        })
        .collect();
    Ok(total.total() / pred.conf.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn window(u0: usize, v0: usize, w: usize, h: usize) -> PatchWindow {
        PatchWindow { u0, v0, w, h }
    }

    #[test]
    fn window_centred_and_clamped() {
        let k = CameraIntrinsics::new(500.0, 500.0, 640.0, 150.0, 1280, 300).unwrap();
        let w = make_patch_window([0.0, 0.0, 10.0], &k, 100, 300).unwrap();
        assert_eq!(w, window(590, 0, 100, 300));
        assert_eq!(w.u0 + w.w / 2, 640);

        // u = 500·x/10 + 640 = 10
        let w = make_patch_window([-12.6, 0.0, 10.0], &k, 100, 300).unwrap();
        assert_eq!(w.u0, 0);
        assert_eq!(w.w, 100);

        let w = make_patch_window([12.7, 0.0, 10.0], &k, 100, 300).unwrap();
        assert_eq!(w.u0 + w.w, 1280);

        assert!(matches!(
            make_patch_window([0.0, 0.0, 10.0], &k, 2000, 100),
            Err(Error::PatchTooLarge { .. })
        ));
        assert_eq!(
            make_patch_window([0.0, 0.0, -1.0], &k, 100, 100),
            Err(Error::OutOfView)
        );
    }

    #[test]
    fn oracle_gate() {
        let d_int = FloatMap::new(
            MapKind::Depth,
            3,
            1,
            vec![10.3, 10.6, 0.0],
            vec![true, true, false],
        )
        .unwrap();
        let p = oracle_confidence(0, [0.0, 0.0, 10.0], window(0, 0, 3, 1), &d_int).unwrap();
        assert_eq!(p.values(), &[1.0, 0.0, 0.0]);
    }

    fn stack_of(patches: Vec<ConfidencePatch>, depths: &[f64], w: usize, h: usize) -> ConfidenceStack {
        let cloud = PointCloud::new(depths.iter().map(|&z| [0.0, 0.0, z]).collect()).unwrap();
        ConfidenceStack::new(w, h, patches, cloud).unwrap()
    }

    #[test]
    fn assemble_examples() {
        let one = ConfidencePatch::new(0, window(0, 0, 1, 1), vec![0.9]).unwrap();
        let s = stack_of(vec![one], &[7.0], 1, 1);
        assert_eq!(assemble_quasi_dense(&s, 0.5).at(0), Some(7.0));

        let a = ConfidencePatch::new(0, window(0, 0, 1, 1), vec![0.6]).unwrap();
        let b = ConfidencePatch::new(1, window(0, 0, 1, 1), vec![0.8]).unwrap();
        let s = stack_of(vec![a, b], &[7.0, 12.0], 1, 1);
        assert_eq!(assemble_quasi_dense(&s, 0.5).at(0), Some(12.0));

        let low = ConfidencePatch::new(0, window(0, 0, 1, 1), vec![0.4]).unwrap();
        let s = stack_of(vec![low], &[7.0], 1, 1);
        assert_eq!(assemble_quasi_dense(&s, 0.5).at(0), None);

        let empty = stack_of(vec![], &[], 4, 4);
        assert_eq!(assemble_quasi_dense(&empty, 0.5).valid_count(), 0);
    }

    #[test]
    fn ties_go_to_lowest_index_in_any_order() {
        let a = ConfidencePatch::new(0, window(0, 0, 1, 1), vec![0.8]).unwrap();
        let b = ConfidencePatch::new(1, window(0, 0, 1, 1), vec![0.8]).unwrap();
        let s1 = stack_of(vec![a.clone(), b.clone()], &[7.0, 12.0], 1, 1);
        let s2 = stack_of(vec![b, a], &[7.0, 12.0], 1, 1);
        assert_eq!(assemble_quasi_dense(&s1, 0.5).at(0), Some(7.0));
        assert_eq!(assemble_quasi_dense(&s2, 0.5).at(0), Some(7.0));
    }

    #[test]
    fn stack_validation() {
        let cloud = PointCloud::new(vec![[0.0, 0.0, 5.0]]).unwrap();
        let a = ConfidencePatch::new(0, window(0, 0, 2, 2), vec![0.5; 4]).unwrap();
        let dup = ConfidenceStack::new(4, 4, vec![a.clone(), a.clone()], cloud.clone());
        assert!(dup.is_err());
        let missing = ConfidencePatch::new(3, window(0, 0, 2, 2), vec![0.5; 4]).unwrap();
        assert!(ConfidenceStack::new(4, 4, vec![missing], cloud.clone()).is_err());
        assert!(ConfidenceStack::new(1, 1, vec![a], cloud).is_err());
        assert!(ConfidencePatch::new(0, window(0, 0, 2, 2), vec![0.5; 3]).is_err());
        assert!(ConfidencePatch::new(0, window(0, 0, 1, 1), vec![1.5]).is_err());
    }

    #[test]
    fn scale_map_examples() {
        let dq = FloatMap::new(MapKind::Depth, 2, 1, vec![10.0, 0.0], vec![true, false]).unwrap();
        let dga = FloatMap::constant(MapKind::Depth, 2, 1, 5.0).unwrap();
        let s = compute_scale_map(&dq, &dga).unwrap();
        assert_eq!(s.scale.at(0), Some(2.0));
        assert_eq!(s.scale.at(1), None);
        assert_eq!(s.inv_filled.at(0), Some(0.5));
        assert_eq!(s.inv_filled.at(1), Some(1.0));
        assert_eq!(s.filled.bits(), &[false, true]);

        let same = compute_scale_map(&dga, &dga).unwrap();
        assert!(same.scale.iter_valid().all(|(_, v)| v == 1.0));

        let other = FloatMap::constant(MapKind::Depth, 1, 2, 5.0).unwrap();
        assert!(matches!(compute_scale_map(&dq, &other), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn bce_examples() {
        let w = window(0, 0, 2, 1);
        let label = ConfidencePatch::new(0, w, vec![1.0, 0.0]).unwrap();
        assert!(bce_loss(&label, &label).unwrap() <= 1.2e-7);

        let half = ConfidencePatch::new(0, w, vec![0.5, 0.5]).unwrap();
        assert!((bce_loss(&half, &label).unwrap() - core::f64::consts::LN_2).abs() < 1e-12);

        let pred = ConfidencePatch::new(0, w, vec![0.9, 0.2]).unwrap();
        let expected = (-libm::log(0.9) - libm::log(0.8)) / 2.0;
        assert!((bce_loss(&pred, &label).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.1643).abs() < 1e-4);

        let other = ConfidencePatch::new(0, window(1, 0, 2, 1), vec![0.5, 0.5]).unwrap();
        assert!(matches!(bce_loss(&other, &label), Err(Error::ShapeMismatch { .. })));
    }

    proptest! {
        #[test]
        fn raising_tau_never_adds_pixels(
            confs in proptest::collection::vec(0.0f64..=1.0, 3 * 16),
            t1 in 0.0f64..1.0,
            t2 in 0.0f64..1.0,
        ) {
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            let patches = confs
                .chunks(16)
                .enumerate()
                .map(|(i, c)| ConfidencePatch::new(i, window(i, i, 4, 4), c.to_vec()).unwrap())
                .collect();
            let s = stack_of(patches, &[3.0, 7.0, 11.0], 8, 8);
            let a = assemble_quasi_dense(&s, lo);
            let b = assemble_quasi_dense(&s, hi);
            for i in 0..64 {
                prop_assert!(!b.is_valid(i) || a.is_valid(i));
                if let Some(d) = a.at(i) {
                    prop_assert!([3.0, 7.0, 11.0].contains(&d));
                }
            }
        }

        #[test]
        fn scale_map_reconstructs_quasi_dense(
            q in proptest::collection::vec(0.5f64..80.0, 16),
            ga in proptest::collection::vec(0.5f64..80.0, 16),
        ) {
            let dq = FloatMap::dense(MapKind::Depth, 4, 4, q).unwrap();
            let dga = FloatMap::dense(MapKind::Depth, 4, 4, ga).unwrap();
            let s = compute_scale_map(&dq, &dga).unwrap();
            for i in 0..16 {
                let r = s.scale.at(i).unwrap() * dga.at(i).unwrap();
                let t = dq.at(i).unwrap();
                prop_assert!((r - t).abs() <= 1e-12 * t);
            }
        }

        #[test]
        fn bce_is_non_negative(
            p in proptest::collection::vec(0.0f64..=1.0, 6),
            y in proptest::collection::vec(0.0f64..=1.0, 6),
        ) {
            let w = window(0, 0, 3, 2);
            let l = bce_loss(
                &ConfidencePatch::new(0, w, p).unwrap(),
                &ConfidencePatch::new(0, w, y).unwrap(),
            ).unwrap();
            prop_assert!(l >= 0.0);
        }
    }
}
