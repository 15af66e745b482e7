use crate::error::{Error, Result};
use crate::map::{FloatMap, MapKind};
use crate::sum::CompensatedSum;

use super::TrainConfig;

/// Branch assignment of the smoothed-L1 penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SmoothL1Form {
    /// Quadratic `r²/2β` below `β`, linear `r − β/2` above.
    #[default]
    Standard,
    /// Linear below `β`, quadratic above. Can go negative near zero.
    Swapped,
}

impl SmoothL1Form {
    #[inline]
    pub fn value(self, r: f64, beta: f64) -> f64 {
        let quadratic = match self {
            SmoothL1Form::Standard => r < beta,
            SmoothL1Form::Swapped => r >= beta,
        };
        if quadratic {
            r * r / (2.0 * beta)
        } else {
            r - beta / 2.0
        }
    }

    /// Derivative w.r.t. the signed error `e` (with `r = |e|`). At `r = β` the
    /// quadratic side is used; at `e = 0` the linear branch contributes 0.
    #[inline]
    pub fn slope(self, e: f64, beta: f64) -> f64 {
        let r = libm::fabs(e);
        let quadratic = match self {
            SmoothL1Form::Standard => r <= beta,
            SmoothL1Form::Swapped => r >= beta,
        };
        if quadratic {
            e / beta
        } else if e > 0.0 {
            1.0
        } else if e < 0.0 {
            -1.0
        } else {
            0.0
        }
    }
}

/// Standard smoothed-L1 between a target and an estimate, averaged over the
/// pixels valid in both.
pub fn smooth_l1(d: &FloatMap, d_hat: &FloatMap, beta: f64) -> Result<f64> {
    smooth_l1_with(d, d_hat, beta, SmoothL1Form::Standard)
}

pub fn smooth_l1_with(d: &FloatMap, d_hat: &FloatMap, beta: f64, form: SmoothL1Form) -> Result<f64> {
    d.expect_kind(MapKind::Depth)?;
    d_hat.expect_kind(MapKind::Depth)?;
    d.expect_shape(d_hat.shape())?;
    if !(beta > 0.0) {
        return Err(Error::InvalidValue("beta must be positive"));
    }
    let mut acc = CompensatedSum::new();
    let mut n = 0usize;
    for (i, t) in d.iter_valid() {
        if let Some(e) = d_hat.at(i) {
            acc.add(form.value(libm::fabs(t - e), beta));
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyDomain);
    }
    Ok(acc.total() / n as f64)
}

/// `L(d_int, d̂) + λ_gt·L(d_gt, d̂)`; a term with an empty domain contributes
/// nothing, and an error is raised only when both are empty.
pub fn sml_loss(d_gt: &FloatMap, d_int: &FloatMap, d_hat: &FloatMap, cfg: &TrainConfig) -> Result<f64> {
    let term = |t: &FloatMap| match smooth_l1_with(t, d_hat, cfg.beta, cfg.form) {
        Ok(v) => Ok(Some(v)),
        Err(Error::EmptyDomain) => Ok(None),
        Err(e) => Err(e),
    };
    match (term(d_int)?, term(d_gt)?) {
        (None, None) => Err(Error::EmptyDomain),
        (a, b) => Ok(a.unwrap_or(0.0) + cfg.lambda_gt * b.unwrap_or(0.0)),
    }
}
