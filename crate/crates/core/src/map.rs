//! Dense H×W grids of reals with a per-pixel validity bit.
//!
//! Invalid pixels hold the sentinel `0.0`; the validity bit, not the value,
//! decides membership in every reduction.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::sum::CompensatedSum;

/// Depths (and their inverses) at or below this are treated as degenerate.
pub const EPS_DEPTH: f64 = 1e-6;

/// What the values of a [`FloatMap`] mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MapKind {
    /// Metric depth in meters.
    Depth,
    /// Inverse depth in 1/m.
    InverseDepth,
    Scale,
    /// Association confidence in `[0, 1]`.
    Confidence,
    Residual,
}

impl MapKind {
    /// Whether `v` may sit at a valid pixel of a map of this kind.
    pub fn admits(self, v: f64) -> bool {
        self.check(v).is_ok()
    }

    fn check(self, v: f64) -> Result<()> {
        if !v.is_finite() {
            return Err(Error::InvalidValue("non-finite value at a valid pixel"));
        }
        match self {
            MapKind::Depth | MapKind::InverseDepth | MapKind::Scale if v <= 0.0 => {
                Err(Error::InvalidValue("non-positive value in a positive map"))
            }
            MapKind::Confidence if !(0.0..=1.0).contains(&v) => {
                Err(Error::InvalidValue("confidence outside [0, 1]"))
            }
            _ => Ok(()),
        }
    }
}

/// A boolean H×W grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::ShapeMismatch {
                left: (width, height),
                right: (bits.len(), 1),
            });
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            bits: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// H×W grid of reals plus validity; see the module docs.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatMap {
    width: usize,
    height: usize,
    kind: MapKind,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl FloatMap {
    /// Builds a map, checking the kind's value invariants at valid pixels.
    /// Invalid pixels are reset to the `0.0` sentinel.
    pub fn new(
        kind: MapKind,
        width: usize,
        height: usize,
        mut values: Vec<f64>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        let n = width * height;
        if values.len() != n || valid.len() != n {
            return Err(Error::ShapeMismatch {
                left: (width, height),
                right: (values.len(), valid.len()),
            });
        }
        for (v, &ok) in values.iter_mut().zip(&valid) {
            if ok {
                kind.check(*v)?;
            } else {
                *v = 0.0;
            }
        }
        Ok(Self {
            width,
            height,
            kind,
            values,
            valid,
        })
    }

    /// Every pixel valid.
    pub fn dense(kind: MapKind, width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        let valid = vec![true; values.len()];
        Self::new(kind, width, height, values, valid)
    }

    /// Every pixel invalid.
    pub fn invalid(kind: MapKind, width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            kind,
            values: vec![0.0; width * height],
            valid: vec![false; width * height],
        }
    }

    pub fn constant(kind: MapKind, width: usize, height: usize, value: f64) -> Result<Self> {
        Self::dense(kind, width, height, vec![value; width * height])
    }

    /// Builds a map from a per-pixel closure; `None` marks the pixel invalid.
    pub fn from_fn(
        kind: MapKind,
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> Option<f64>,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(width * height);
        let mut valid = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                match f(x, y) {
                    Some(v) => {
                        values.push(v);
                        valid.push(true);
                    }
                    None => {
                        values.push(0.0);
                        valid.push(false);
                    }
                }
            }
        }
        Self::new(kind, width, height, values, valid)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    pub fn validity_mask(&self) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            bits: self.valid.clone(),
        }
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        self.at(self.index(x, y))
    }

    #[inline]
    pub fn at(&self, i: usize) -> Option<f64> {
        if self.valid[i] {
            Some(self.values[i])
        } else {
            None
        }
    }

    #[inline]
    pub fn is_valid(&self, i: usize) -> bool {
        self.valid[i]
    }

    /// `(flat index, value)` for every valid pixel in row-major order.
    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values
            .iter()
            .zip(&self.valid)
            .enumerate()
            .filter(|(_, (_, &ok))| ok)
            .map(|(i, (&v, _))| (i, v))
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&b| b).count()
    }

    pub fn sum(&self) -> Result<f64> {
        if self.valid_count() == 0 {
            return Err(Error::EmptyDomain);
        }
        Ok(self.iter_valid().map(|(_, v)| v).collect::<CompensatedSum>().total())
    }

    pub fn mean(&self) -> Result<f64> {
        let n = self.valid_count();
        self.sum().map(|s| s / n as f64)
    }

    pub fn min_max(&self) -> Result<(f64, f64)> {
        self.iter_valid()
            .map(|(_, v)| (v, v))
            .reduce(|(lo, hi), (a, b)| (lo.min(a), hi.max(b)))
            .ok_or(Error::EmptyDomain)
    }

    /// Same data relabelled as another kind, re-checking its invariants.
    pub fn with_kind(self, kind: MapKind) -> Result<Self> {
        Self::new(kind, self.width, self.height, self.values, self.valid)
    }

    pub fn expect_kind(&self, expected: MapKind) -> Result<()> {
        if self.kind == expected {
            Ok(())
        } else {
            Err(Error::KindMismatch {
                expected,
                actual: self.kind,
            })
        }
    }

    pub fn expect_shape(&self, shape: (usize, usize)) -> Result<()> {
        if self.shape() == shape {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                left: self.shape(),
                right: shape,
            })
        }
    }

    /// Writes a valid value without re-checking kind invariants.
    #[inline]
    pub(crate) fn put(&mut self, i: usize, v: f64) {
        self.values[i] = v;
        self.valid[i] = true;
    }
}

/// Per-pixel reciprocal of a depth map. Depths `<= EPS_DEPTH` become invalid.
pub fn invert_map(m: &FloatMap) -> Result<FloatMap> {
    m.expect_kind(MapKind::Depth)?;
    Ok(reciprocal(m, MapKind::InverseDepth))
}

/// Per-pixel reciprocal of an inverse-depth map.
pub fn invert_inverse_map(m: &FloatMap) -> Result<FloatMap> {
    m.expect_kind(MapKind::InverseDepth)?;
    Ok(reciprocal(m, MapKind::Depth))
}

pub(crate) fn reciprocal(m: &FloatMap, kind: MapKind) -> FloatMap {
    let mut out = FloatMap::invalid(kind, m.width, m.height);
    for (i, v) in m.iter_valid() {
        if v > EPS_DEPTH {
            let r = 1.0 / v;
            if r.is_finite() {
                out.put(i, r);
            }
        }
    }
    out
}

/// Clears validity wherever `mask` is false.
pub fn apply_mask(m: &FloatMap, mask: &Mask) -> Result<FloatMap> {
    if mask.shape() != m.shape() {
        return Err(Error::ShapeMismatch {
            left: m.shape(),
            right: mask.shape(),
        });
    }
    let mut out = m.clone();
    for (i, &keep) in mask.bits.iter().enumerate() {
        if !keep {
            out.valid[i] = false;
            out.values[i] = 0.0;
        }
    }
    Ok(out)
}

/// Bilinear resampling with corner-aligned grids.
///
/// Output pixel `x` samples source coordinate `x·(w_in−1)/(w_out−1)`. Source
/// pixels whose weight is exactly zero do not contribute; every contributing
/// pixel must be valid for the output pixel to be valid.
pub fn resize_bilinear(m: &FloatMap, width: usize, height: usize) -> Result<FloatMap> {
    if width < 2 || height < 2 {
        return Err(Error::InvalidValue("resize target must be at least 2×2"));
    }
    if m.shape() == (width, height) {
        return Ok(m.clone());
    }
    if m.width < 2 || m.height < 2 {
        return Err(Error::InvalidValue("resize source must be at least 2×2"));
    }
    let sx = (m.width - 1) as f64 / (width - 1) as f64;
    let sy = (m.height - 1) as f64 / (height - 1) as f64;
    let axis = |t: usize, step: f64, n: usize| -> (usize, usize, f64) {
        let p = t as f64 * step;
        let i0 = (libm::floor(p) as usize).min(n - 1);
        let f = p - i0 as f64;
        if f <= 0.0 || i0 + 1 >= n {
            (i0, i0, 0.0)
        } else {
            (i0, i0 + 1, f)
        }
    };
    let mut out = FloatMap::invalid(m.kind, width, height);
    for y in 0..height {
        let (y0, y1, fy) = axis(y, sy, m.height);
        for x in 0..width {
            let (x0, x1, fx) = axis(x, sx, m.width);
            let taps = [
                (x0, y0, (1.0 - fx) * (1.0 - fy)),
                (x1, y0, fx * (1.0 - fy)),
                (x0, y1, (1.0 - fx) * fy),
                (x1, y1, fx * fy),
            ];
            let mut acc = 0.0;
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            let mut ok = true;
            for &(tx, ty, w) in &taps {
                if w == 0.0 {
                    continue;
                }
                match m.get(tx, ty) {
                    Some(v) => {
                        acc += w * v;
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                let i = out.index(x, y);
                out.put(i, acc.clamp(lo, hi));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn depth(w: usize, h: usize, v: &[f64]) -> FloatMap {
        FloatMap::dense(MapKind::Depth, w, h, v.to_vec()).unwrap()
    }

    #[test]
    fn invert_values() {
        let m = depth(3, 1, &[2.0, 1.0, 1e-12]);
        let z = invert_map(&m).unwrap();
        assert_eq!(z.kind(), MapKind::InverseDepth);
        assert_eq!(z.at(0), Some(0.5));
        assert_eq!(z.at(1), Some(1.0));
        assert_eq!(z.at(2), None);
    }

    #[test]
    fn invert_rejects_wrong_kind() {
        let m = FloatMap::constant(MapKind::Scale, 2, 2, 1.0).unwrap();
        assert!(matches!(invert_map(&m), Err(Error::KindMismatch { .. })));
    }

    #[test]
    fn new_checks_invariants() {
        assert!(FloatMap::dense(MapKind::Depth, 1, 1, vec![-1.0]).is_err());
        assert!(FloatMap::dense(MapKind::Confidence, 1, 1, vec![1.5]).is_err());
        assert!(FloatMap::dense(MapKind::Residual, 1, 1, vec![-1.5]).is_ok());
        assert!(FloatMap::dense(MapKind::Residual, 1, 1, vec![f64::NAN]).is_err());
        // invalid pixels may carry anything; they are reset to the sentinel
        let m = FloatMap::new(MapKind::Depth, 1, 1, vec![f64::NAN], vec![false]).unwrap();
        assert_eq!(m.values()[0], 0.0);
    }

    #[test]
    fn reductions_on_empty_domain() {
        let m = FloatMap::invalid(MapKind::Depth, 4, 3);
        assert_eq!(m.mean(), Err(Error::EmptyDomain));
        assert_eq!(m.sum(), Err(Error::EmptyDomain));
        assert_eq!(m.min_max(), Err(Error::EmptyDomain));
    }

    #[test]
    fn mask_identity_and_annihilator() {
        let m = depth(3, 3, &[1.0; 9]);
        assert_eq!(apply_mask(&m, &Mask::filled(3, 3, true)).unwrap(), m);
        assert_eq!(
            apply_mask(&m, &Mask::filled(3, 3, false)).unwrap().valid_count(),
            0
        );
        assert!(apply_mask(&m, &Mask::filled(2, 3, true)).is_err());
    }

    #[test]
    fn checkerboard_mask_count() {
        for (w, h) in [(3, 3), (4, 5), (5, 7), (1, 1), (6, 2)] {
            let m = FloatMap::constant(MapKind::Depth, w, h, 2.0).unwrap();
            let mask = Mask::from_fn(w, h, |x, y| (x + y) % 2 == 0);
            let mut expected = 0;
            for y in 0..h {
                for x in 0..w {
                    if (x + y) % 2 == 0 {
                        expected += 1;
                    }
                }
            }
            assert_eq!(expected, (w * h).div_ceil(2));
            assert_eq!(apply_mask(&m, &mask).unwrap().valid_count(), expected);
        }
    }

    #[test]
    fn resize_identity_is_bit_exact() {
        let m = FloatMap::new(
            MapKind::Depth,
            3,
            2,
            vec![1.5, 2.25, 7.0, 0.3, 9.0, 1.0],
            vec![true, false, true, true, true, false],
        )
        .unwrap();
        assert_eq!(resize_bilinear(&m, 3, 2).unwrap(), m);
    }

    #[test]
    fn resize_constant() {
        let m = FloatMap::constant(MapKind::Scale, 5, 4, 0.7).unwrap();
        let r = resize_bilinear(&m, 13, 9).unwrap();
        assert_eq!(r.valid_count(), 13 * 9);
        assert!(r.iter_valid().all(|(_, v)| v == 0.7));
    }

    #[test]
    fn resize_two_by_two_to_three_columns() {
        let m = depth(2, 2, &[1.0, 3.0, 1.0, 3.0]);
        let r = resize_bilinear(&m, 3, 2).unwrap();
        assert_eq!(r.get(1, 0), Some(2.0));
        assert_eq!(r.get(1, 1), Some(2.0));
        assert_eq!(r.get(0, 0), Some(1.0));
        assert_eq!(r.get(2, 1), Some(3.0));
    }

    #[test]
    fn resize_invalidates_touching_pixels() {
        let m = FloatMap::new(
            MapKind::Depth,
            2,
            2,
            vec![1.0, 3.0, 1.0, 3.0],
            vec![true, false, true, true],
        )
        .unwrap();
        let r = resize_bilinear(&m, 3, 3).unwrap();
        assert_eq!(r.get(0, 0), Some(1.0));
        assert_eq!(r.get(1, 0), None);
        assert_eq!(r.get(1, 1), None);
        assert_eq!(r.get(0, 2), Some(1.0));
        assert_eq!(r.get(1, 2), Some(2.0));
    }

    #[test]
    fn resize_rejects_tiny_targets() {
        let m = depth(2, 2, &[1.0; 4]);
        assert!(resize_bilinear(&m, 1, 5).is_err());
    }
}
