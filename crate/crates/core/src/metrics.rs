//! Depth evaluation metrics with range capping.
//!
//! Depth errors are reported in millimeters, inverse-depth errors in 1/km.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::map::{FloatMap, MapKind};
use crate::sum::CompensatedSum;

/// Ratio bound of the δ1 accuracy (strict inequality).
pub const DELTA1_THRESHOLD: f64 = 1.25;

/// Evaluation ranges used for reporting, in meters.
pub const STANDARD_RANGE_CAPS: [f64; 3] = [50.0, 70.0, 80.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    /// Meters.
    pub range_cap: f64,
    pub n_pixels: usize,
    /// mm
    pub mae: f64,
    /// mm
    pub rmse: f64,
    /// 1/km
    pub imae: f64,
    /// 1/km
    pub irmse: f64,
    pub absrel: f64,
    /// mm
    pub sqrel: f64,
    pub delta1: f64,
}

#[derive(Default, Clone)]
struct Accumulator {
    n: usize,
    abs: CompensatedSum,
    sq: CompensatedSum,
    inv_abs: CompensatedSum,
    inv_sq: CompensatedSum,
    abs_rel: CompensatedSum,
    sq_rel: CompensatedSum,
    delta_hits: usize,
}

impl Accumulator {
    #[inline]
    fn add(&mut self, est: f64, gt: f64) {
        let diff = est - gt;
        let inv_diff = 1.0 / est - 1.0 / gt;
        self.n += 1;
        self.abs.add(libm::fabs(diff));
        self.sq.add(diff * diff);
        self.inv_abs.add(libm::fabs(inv_diff));
        self.inv_sq.add(inv_diff * inv_diff);
        self.abs_rel.add(libm::fabs(diff) / gt);
        self.sq_rel.add(diff * diff / gt);
        if (est / gt).max(gt / est) < DELTA1_THRESHOLD {
            self.delta_hits += 1;
        }
    }

    fn report(&self, range_cap: f64) -> Result<MetricsReport> {
        if self.n == 0 {
            return Err(Error::EmptyDomain);
        }
        let n = self.n as f64;
        Ok(MetricsReport {
            range_cap,
            n_pixels: self.n,
            mae: 1e3 * self.abs.total() / n,
            rmse: 1e3 * libm::sqrt(self.sq.total() / n),
            imae: 1e3 * self.inv_abs.total() / n,
            irmse: 1e3 * libm::sqrt(self.inv_sq.total() / n),
            absrel: self.abs_rel.total() / n,
            sqrel: 1e3 * self.sq_rel.total() / n,
            delta1: self.delta_hits as f64 / n,
        })
    }
}

fn check_inputs(d_hat: &FloatMap, d_gt: &FloatMap) -> Result<()> {
    d_hat.expect_kind(MapKind::Depth)?;
    d_gt.expect_kind(MapKind::Depth)?;
    d_hat.expect_shape(d_gt.shape())
}

/// Metrics over pixels valid in both maps with `0 < d_gt <= range_cap`.
pub fn evaluate(d_hat: &FloatMap, d_gt: &FloatMap, range_cap: f64) -> Result<MetricsReport> {
    check_inputs(d_hat, d_gt)?;
    let mut acc = Accumulator::default();
    for (i, gt) in d_gt.iter_valid() {
        if gt > 0.0 && gt <= range_cap {
            if let Some(est) = d_hat.at(i) {
                acc.add(est, gt);
            }
        }
    }
    acc.report(range_cap)
}

/// [`evaluate`] for several caps in one pass over the pixels.
pub fn evaluate_ranges(d_hat: &FloatMap, d_gt: &FloatMap, caps: &[f64]) -> Result<Vec<MetricsReport>> {
    check_inputs(d_hat, d_gt)?;
    let mut accs: Vec<Accumulator> = caps.iter().map(|_| Accumulator::default()).collect();
    for (i, gt) in d_gt.iter_valid() {
        if !(gt > 0.0) {
            continue;
        }
        let Some(est) = d_hat.at(i) else { continue };
        for (acc, &cap) in accs.iter_mut().zip(caps) {
            if gt <= cap {
                acc.add(est, gt);
            }
        }
    }
    accs.iter().zip(caps).map(|(a, &cap)| a.report(cap)).collect()
}
