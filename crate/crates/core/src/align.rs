//! Global alignment of a scaleless monocular prediction to radar depth.
//!
//! Four strategies are provided: a dataset-wide constant scale
//! ([`estimate_const`]), a per-frame scale found by bracketed root finding
//! ([`fit_var`]), per-frame least-squares scale and offset ([`fit_ls`]) and
//! the same fit wrapped in RANSAC ([`fit_ransac`]).

use alloc::vec::Vec;

use rand::seq::index;

use crate::error::{Error, Result};
use crate::map::{reciprocal, FloatMap, MapKind, EPS_DEPTH};
use crate::rng::RngKey;
use crate::sum::CompensatedSum;

/// Which quantity the affine model acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum AlignSpace {
    /// `d_ga = scale·d_m + offset`
    Depth,
    /// `z_ga = scale·z_m + offset`, `d_ga = 1/z_ga`
    #[default]
    InverseDepth,
}

impl AlignSpace {
    /// Map kind a prediction must have to be aligned in this space.
    pub fn prediction_kind(self) -> MapKind {
        match self {
            AlignSpace::Depth => MapKind::Depth,
            AlignSpace::InverseDepth => MapKind::InverseDepth,
        }
    }

    /// Radar depth expressed in this space.
    #[inline]
    fn target(self, depth: f64) -> f64 {
        match self {
            AlignSpace::Depth => depth,
            AlignSpace::InverseDepth => 1.0 / depth,
        }
    }
}

/// Global scale and offset, plus the space they apply in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentParams {
    pub scale: f64,
    pub offset: f64,
    pub space: AlignSpace,
}

impl AlignmentParams {
    pub fn new(scale: f64, offset: f64, space: AlignSpace) -> Result<Self> {
        if !scale.is_finite() || !offset.is_finite() {
            return Err(Error::InvalidValue("alignment parameters must be finite"));
        }
        if scale <= 0.0 {
            return Err(Error::NonPositiveScale(scale));
        }
        Ok(Self {
            scale,
            offset,
            space,
        })
    }

    pub fn identity(space: AlignSpace) -> Self {
        Self {
            scale: 1.0,
            offset: 0.0,
            space,
        }
    }

    #[inline]
    fn aligned(&self, pred: f64) -> f64 {
        self.scale * pred + self.offset
    }

    /// Aligned `(depth, inverse depth)` of one prediction value; either may be
    /// non-positive when the offset dominates.
    #[inline]
    pub fn depth_and_inverse(&self, pred: f64) -> (f64, f64) {
        let v = self.aligned(pred);
        match self.space {
            AlignSpace::Depth => (v, 1.0 / v),
            AlignSpace::InverseDepth => (1.0 / v, v),
        }
    }
}

/// `(prediction value, radar depth)` pairs sampled at radar pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Correspondences {
    space: AlignSpace,
    pairs: Vec<(f64, f64)>,
}

impl Correspondences {
    pub fn new(space: AlignSpace, pairs: Vec<(f64, f64)>) -> Result<Self> {
        for &(p, d) in &pairs {
            if !p.is_finite() || !d.is_finite() || d <= 0.0 {
                return Err(Error::InvalidValue("correspondence needs finite values and radar depth > 0"));
            }
        }
        Ok(Self { space, pairs })
    }

    pub fn space(&self) -> AlignSpace {
        self.space
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    fn subset(&self, idx: impl Iterator<Item = usize>) -> Correspondences {
        Correspondences {
            space: self.space,
            pairs: idx.map(|i| self.pairs[i]).collect(),
        }
    }
}

/// One pair per pixel valid in both the prediction and the radar depth map.
///
/// The prediction's kind selects the alignment space: inverse-depth
/// predictions are aligned in inverse depth, depth predictions in depth.
pub fn build_correspondences(pred: &FloatMap, radar: &FloatMap) -> Result<Correspondences> {
    radar.expect_kind(MapKind::Depth)?;
    radar.expect_shape(pred.shape())?;
    let space = match pred.kind() {
        MapKind::InverseDepth => AlignSpace::InverseDepth,
        MapKind::Depth => AlignSpace::Depth,
        other => {
            return Err(Error::KindMismatch {
                expected: MapKind::InverseDepth,
                actual: other,
            })
        }
    };
    let pairs: Vec<(f64, f64)> = radar
        .iter_valid()
        .filter_map(|(i, d)| pred.at(i).map(|p| (p, d)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::EmptyOverlap);
    }
    Ok(Correspondences { space, pairs })
}

/// Closed-form least-squares scale and offset in the correspondences' space.
///
/// Minimises `Σ (scale·p_i + offset − t_i)²` where `t_i` is the radar depth
/// (or its inverse in inverse-depth space).
pub fn fit_ls(c: &Correspondences) -> Result<AlignmentParams> {
    let n = c.pairs.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let first = c.pairs[0].0;
    if c.pairs.iter().all(|&(p, _)| p == first) {
        return Err(Error::SingularSystem);
    }
    let space = c.space;
    let nf = n as f64;
    let mean_p = c.pairs.iter().map(|&(p, _)| p).collect::<CompensatedSum>().total() / nf;
    let mean_t = c
        .pairs
        .iter()
        .map(|&(_, d)| space.target(d))
        .collect::<CompensatedSum>()
        .total()
        / nf;
    let mut sxx = CompensatedSum::new();
    let mut sxy = CompensatedSum::new();
    for &(p, d) in &c.pairs {
        let dx = p - mean_p;
        sxx.add(dx * dx);
        sxy.add(dx * (space.target(d) - mean_t));
    }
    let sxx = sxx.total();
    if !(sxx > 0.0) {
        return Err(Error::SingularSystem);
    }
    let scale = sxy.total() / sxx;
    let offset = mean_t - scale * mean_p;
    AlignmentParams::new(scale, offset, space)
}

/// Relative bracket-width tolerance of the scale root finder.
pub const VAR_ROOT_TOL: f64 = 1e-10;
const VAR_SCALE_MIN: f64 = 1e-6;
const VAR_SCALE_MAX: f64 = 1e6;

/// Squared depth residual `E(s)` of the scale-only model.
pub fn var_objective(c: &Correspondences, scale: f64) -> f64 {
    let p = AlignmentParams {
        scale,
        offset: 0.0,
        space: c.space,
    };
    c.pairs
        .iter()
        .map(|&(x, d)| {
            let r = p.depth_and_inverse(x).0 - d;
            r * r
        })
        .collect::<CompensatedSum>()
        .total()
}

/// `dE/ds` of [`var_objective`].
pub fn var_gradient(c: &Correspondences, s: f64) -> f64 {
    c.pairs
        .iter()
        .map(|&(x, d)| match c.space {
            AlignSpace::InverseDepth => -2.0 * (1.0 / (s * x) - d) / (s * s * x),
            AlignSpace::Depth => 2.0 * (s * x - d) * x,
        })
        .collect::<CompensatedSum>()
        .total()
}

/// Per-frame scale with zero offset, found as the root of `dE/ds`.
///
/// The bracket starts around the geometric mean of per-point scales and is
/// expanded geometrically until the derivative changes sign; Brent's method
/// then refines it.
pub fn fit_var(c: &Correspondences) -> Result<AlignmentParams> {
    if c.pairs.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if c.pairs.iter().any(|&(x, _)| !(x > 0.0)) {
        return Err(Error::InvalidValue("scale-only alignment needs positive predictions"));
    }
    let log_guess = c
        .pairs
        .iter()
        .map(|&(x, d)| match c.space {
            AlignSpace::InverseDepth => -libm::log(x * d),
            AlignSpace::Depth => libm::log(d / x),
        })
        .collect::<CompensatedSum>()
        .total()
        / c.pairs.len() as f64;
    let guess = libm::exp(log_guess).clamp(VAR_SCALE_MIN, VAR_SCALE_MAX);

    let g = |s: f64| var_gradient(c, s);
    let (mut lo, mut hi) = (guess / 2.0, guess * 2.0);
    let (mut glo, mut ghi) = (g(lo), g(hi));
    while !(glo <= 0.0 && ghi >= 0.0) {
        if (glo > 0.0 && lo <= VAR_SCALE_MIN) || (ghi < 0.0 && hi >= VAR_SCALE_MAX) {
            return Err(Error::NoBracket);
        }
        if glo > 0.0 {
            lo = (lo / 4.0).max(VAR_SCALE_MIN);
            glo = g(lo);
        }
        if ghi < 0.0 {
            hi = (hi * 4.0).min(VAR_SCALE_MAX);
            ghi = g(hi);
        }
        if !glo.is_finite() || !ghi.is_finite() {
            return Err(Error::NoBracket);
        }
    }
    let scale = brent_root(g, lo, hi, glo, ghi, VAR_ROOT_TOL);
    AlignmentParams::new(scale, 0.0, c.space)
}

/// Brent's bracketed root finder; requires `fa` and `fb` of opposite sign
/// (or one of them zero).
fn brent_root(f: impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fb: f64, rel_tol: f64) -> f64 {
    let (mut a, mut b, mut fa, mut fb) = (a, b, fa, fb);
    if fa == 0.0 {
        return a;
    }
    if fb == 0.0 {
        return b;
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if (fb > 0.0) == (fc > 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if libm::fabs(fc) < libm::fabs(fb) {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * libm::fabs(b) + 0.5 * rel_tol * libm::fabs(b);
        let m = 0.5 * (c - b);
        if libm::fabs(m) <= tol || fb == 0.0 {
            return b;
        }
        if libm::fabs(e) >= tol && libm::fabs(fa) > libm::fabs(fb) {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - libm::fabs(tol * q)).min(libm::fabs(e * q)) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if libm::fabs(d) > tol {
            d
        } else if m > 0.0 {
            tol
        } else {
            -tol
        };
        fb = f(b);
    }
    b
}

/// RANSAC settings; defaults are 5-point samples, 90 % inlier acceptance,
/// a 6 m depth or 0.015 inverse-depth inlier gate and 400 iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacConfig {
    pub sample_size: usize,
    pub accept_ratio: f64,
    pub depth_tol: f64,
    pub inverse_depth_tol: f64,
    pub max_iters: usize,
    /// Re-run least squares on the inliers of the returned hypothesis.
    pub refit: bool,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            sample_size: 5,
            accept_ratio: 0.9,
            depth_tol: 6.0,
            inverse_depth_tol: 0.015,
            max_iters: 400,
            refit: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacFit {
    pub params: AlignmentParams,
    pub inlier_ratio: f64,
    /// Iterations drawn, including the accepted one.
    pub iterations: usize,
    /// Whether a hypothesis cleared the acceptance ratio before the cap.
    pub accepted: bool,
    pub inliers: Vec<bool>,
}

/// Inlier classification of every pair under `p`: an aligned-depth error
/// under `depth_tol` or an inverse-depth error under `inverse_depth_tol`.
pub fn classify_inliers(c: &Correspondences, p: &AlignmentParams, cfg: &RansacConfig) -> Vec<bool> {
    c.pairs
        .iter()
        .map(|&(x, d)| {
            let (dh, zh) = p.depth_and_inverse(x);
            let depth_ok = dh > EPS_DEPTH && libm::fabs(dh - d) < cfg.depth_tol;
            let inv_ok = libm::fabs(zh - 1.0 / d) < cfg.inverse_depth_tol;
            depth_ok || inv_ok
        })
        .collect()
}

struct Hypothesis {
    params: AlignmentParams,
    count: usize,
    residual: f64,
    inliers: Vec<bool>,
}

/// Mean squared fitting-space residual over the inliers.
fn inlier_residual(c: &Correspondences, p: &AlignmentParams, inliers: &[bool]) -> f64 {
    let mut acc = CompensatedSum::new();
    let mut n = 0usize;
    for (&(x, d), _) in c.pairs.iter().zip(inliers).filter(|(_, &ok)| ok) {
        let r = p.aligned(x) - c.space.target(d);
        acc.add(r * r);
        n += 1;
    }
    if n == 0 {
        f64::INFINITY
    } else {
        acc.total() / n as f64
    }
}

/// Least squares under RANSAC: the first sampled hypothesis whose inlier
/// ratio exceeds `accept_ratio` is returned; otherwise the one with the most
/// inliers within `max_iters` draws, ties going to the smaller mean squared
/// inlier residual.
pub fn fit_ransac(c: &Correspondences, cfg: &RansacConfig, key: RngKey) -> Result<RansacFit> {
    let n = c.pairs.len();
    if n < cfg.sample_size || cfg.sample_size < 2 {
        return Err(Error::InsufficientData {
            needed: cfg.sample_size.max(2),
            got: n,
        });
    }
    let mut rng = key.rng();
    let mut best: Option<Hypothesis> = None;
    let mut iterations = 0;
    let mut accepted = false;
    while iterations < cfg.max_iters {
        iterations += 1;
        let sample = index::sample(&mut rng, n, cfg.sample_size);
        let Ok(params) = fit_ls(&c.subset(sample.iter())) else {
            continue;
        };
        let inliers = classify_inliers(c, &params, cfg);
        let count = inliers.iter().filter(|&&b| b).count();
        let residual = inlier_residual(c, &params, &inliers);
        // equal inlier counts are common under loose gates; prefer the tighter fit
        let better = best.as_ref().is_none_or(|b| {
            count > b.count || (count == b.count && residual < b.residual)
        });
        if count as f64 / n as f64 > cfg.accept_ratio {
            best = Some(Hypothesis {
                params,
                count,
                residual,
                inliers,
            });
            accepted = true;
            break;
        }
        if better {
            best = Some(Hypothesis {
                params,
                count,
                residual,
                inliers,
            });
        }
    }
    let Hypothesis {
        mut params,
        count,
        mut inliers,
        ..
    } = best.ok_or(Error::SingularSystem)?;
    if cfg.refit {
        if let Ok(p) = fit_ls(&c.subset((0..n).filter(|&i| inliers[i]))) {
            params = p;
            inliers = classify_inliers(c, &params, cfg);
        }
    }
    let count = if cfg.refit {
        inliers.iter().filter(|&&b| b).count()
    } else {
        count
    };
    Ok(RansacFit {
        params,
        inlier_ratio: count as f64 / n as f64,
        iterations,
        accepted,
        inliers,
    })
}

/// Dataset-wide constant scale: the mean of per-frame scale estimates.
pub fn estimate_const(per_frame_scales: &[f64], space: AlignSpace) -> Result<AlignmentParams> {
    if per_frame_scales.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mean = crate::sum::sum(per_frame_scales.iter().copied()) / per_frame_scales.len() as f64;
    AlignmentParams::new(mean, 0.0, space)
}

/// Globally aligned depth and inverse depth.
#[derive(Debug, Clone, PartialEq)]
pub struct Aligned {
    pub depth: FloatMap,
    pub inverse: FloatMap,
}

/// Applies `p` to a prediction. Pixels whose aligned depth or inverse depth
/// is `<= EPS_DEPTH` become invalid.
pub fn apply_alignment(pred: &FloatMap, p: &AlignmentParams) -> Result<Aligned> {
    pred.expect_kind(p.space.prediction_kind())?;
    let (w, h) = pred.shape();
    let aligned_kind = match p.space {
        AlignSpace::Depth => MapKind::Depth,
        AlignSpace::InverseDepth => MapKind::InverseDepth,
    };
    let mut aligned = FloatMap::invalid(aligned_kind, w, h);
    for (i, v) in pred.iter_valid() {
        let a = p.aligned(v);
        if a > EPS_DEPTH && 1.0 / a > EPS_DEPTH {
            aligned.put(i, a);
        }
    }
    let other = reciprocal(&aligned, match p.space {
        AlignSpace::Depth => MapKind::InverseDepth,
        AlignSpace::InverseDepth => MapKind::Depth,
    });
    Ok(match p.space {
        AlignSpace::Depth => Aligned {
            depth: aligned,
            inverse: other,
        },
        AlignSpace::InverseDepth => Aligned {
            depth: other,
            inverse: aligned,
        },
    })
}

/// A configured global-alignment strategy.
#[derive(Debug, Clone, PartialEq)]
pub enum GlobalAlignment {
    /// A precomputed dataset-wide scale (see [`estimate_const`]).
    Const(AlignmentParams),
    Var,
    Ls,
    Ransac(RansacConfig),
}

/// Aligns one frame's prediction to its projected radar depth.
pub fn align_frame(
    pred: &FloatMap,
    radar: &FloatMap,
    method: &GlobalAlignment,
    key: RngKey,
) -> Result<AlignmentParams> {
    match method {
        GlobalAlignment::Const(p) => {
            pred.expect_kind(p.space.prediction_kind())?;
            Ok(*p)
        }
        GlobalAlignment::Var => fit_var(&build_correspondences(pred, radar)?),
        GlobalAlignment::Ls => fit_ls(&build_correspondences(pred, radar)?),
        GlobalAlignment::Ransac(cfg) => {
            fit_ransac(&build_correspondences(pred, radar)?, cfg, key).map(|f| f.params)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn inv_pairs(zm: &[f64], zr: &[f64]) -> Correspondences {
        let pairs = zm.iter().zip(zr).map(|(&m, &r)| (m, 1.0 / r)).collect();
        Correspondences::new(AlignSpace::InverseDepth, pairs).unwrap()
    }

    #[test]
    fn correspondences_from_maps() {
        let pred = FloatMap::new(
            MapKind::InverseDepth,
            3,
            2,
            vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            vec![true, true, true, true, false, true],
        )
        .unwrap();
        let radar = FloatMap::new(
            MapKind::Depth,
            3,
            2,
            vec![0.0, 5.0, 0.0, 7.0, 9.0, 0.0],
            vec![false, true, false, true, true, false],
        )
        .unwrap();
        let c = build_correspondences(&pred, &radar).unwrap();
        // pixel 4 is radar-valid but not prediction-valid
        assert_eq!(c.pairs(), &[(0.2, 5.0), (0.4, 7.0)]);
        assert_eq!(c.space(), AlignSpace::InverseDepth);

        let dense = FloatMap::constant(MapKind::InverseDepth, 3, 2, 0.5).unwrap();
        assert_eq!(build_correspondences(&dense, &radar).unwrap().len(), 3);

        let none = FloatMap::invalid(MapKind::Depth, 3, 2);
        assert_eq!(build_correspondences(&dense, &none), Err(Error::EmptyOverlap));
    }

    #[test]
    fn ls_exact_affine() {
        let zm = [0.1, 0.2, 0.3];
        let zr: Vec<f64> = zm.iter().map(|z| 2.0 * z + 0.05).collect();
        let p = fit_ls(&inv_pairs(&zm, &zr)).unwrap();
        assert!((p.scale - 2.0).abs() <= 1e-12, "{p:?}");
        assert!((p.offset - 0.05).abs() <= 1e-12, "{p:?}");
    }

    #[test]
    fn ls_errors() {
        let c = inv_pairs(&[0.1, 0.1, 0.1], &[0.2, 0.3, 0.4]);
        assert_eq!(fit_ls(&c), Err(Error::SingularSystem));
        let c = inv_pairs(&[0.1], &[0.2]);
        assert!(matches!(fit_ls(&c), Err(Error::InsufficientData { .. })));
        let c = inv_pairs(&[0.1, 0.2], &[0.4, 0.2]);
        assert!(matches!(fit_ls(&c), Err(Error::NonPositiveScale(_))));
    }

    /// Coarse-to-fine grid search over (scale, offset) minimising the SSE.
    fn grid_refine_ls(pairs: &[(f64, f64)]) -> (f64, f64) {
        let sse = |s: f64, t: f64| -> f64 {
            pairs.iter().map(|&(x, d)| (s * x + t - 1.0 / d).powi(2)).sum()
        };
        let (mut s0, mut t0) = (1.0, 0.0);
        let (mut hs, mut ht) = (4.0, 1.0);
        for _ in 0..60 {
            let mut best = (f64::INFINITY, s0, t0);
            for i in -10..=10 {
                for j in -10..=10 {
                    let s = s0 + hs * i as f64 / 10.0;
                    let t = t0 + ht * j as f64 / 10.0;
                    let e = sse(s, t);
                    if e < best.0 {
                        best = (e, s, t);
                    }
                }
            }
            s0 = best.1;
            t0 = best.2;
            hs *= 0.5;
            ht *= 0.5;
        }
        (s0, t0)
    }

    #[test]
    fn ls_matches_grid_oracle_on_noisy_data() {
        let mut rng = RngKey::new(3, 0).rng();
        let noise = Normal::new(0.0, 1e-3).unwrap();
        let pairs: Vec<(f64, f64)> = (0..200)
            .map(|_| {
                let zm: f64 = rng.gen_range(0.02..0.5);
                let zr = 1.7 * zm + 0.02 + noise.sample(&mut rng);
                (zm, 1.0 / zr)
            })
            .collect();
        let p = fit_ls(&Correspondences::new(AlignSpace::InverseDepth, pairs.clone()).unwrap()).unwrap();
        let (s, t) = grid_refine_ls(&pairs);
        // both sit within a few noise-σ of truth; they must agree far tighter
        assert!((p.scale - 1.7).abs() < 3e-2 && (p.offset - 0.02).abs() < 3e-3);
        assert!((p.scale - s).abs() < 1e-6, "{} vs {}", p.scale, s);
        assert!((p.offset - t).abs() < 1e-6, "{} vs {}", p.offset, t);
    }

    #[test]
    fn var_single_pair() {
        let c = Correspondences::new(AlignSpace::InverseDepth, vec![(0.5, 4.0)]).unwrap();
        let p = fit_var(&c).unwrap();
        assert!((p.scale - 0.5).abs() < 1e-9, "{p:?}");
        assert_eq!(p.offset, 0.0);
        assert_eq!(p.space, AlignSpace::InverseDepth);
    }

    #[test]
    fn var_consistent_scale() {
        let pairs: Vec<(f64, f64)> = [0.05, 0.1, 0.3, 0.7]
            .iter()
            .map(|&z| (z, 1.0 / (2.0 * z)))
            .collect();
        let p = fit_var(&Correspondences::new(AlignSpace::InverseDepth, pairs).unwrap()).unwrap();
        assert!((p.scale - 2.0).abs() / 2.0 < 1e-6, "{p:?}");
        let pairs = vec![(1.0, 3.0), (2.0, 6.0), (5.0, 15.0)];
        let p = fit_var(&Correspondences::new(AlignSpace::Depth, pairs).unwrap()).unwrap();
        assert!((p.scale - 3.0).abs() / 3.0 < 1e-6, "{p:?}");
    }

    #[test]
    fn var_rejects_empty_and_nonpositive() {
        let c = Correspondences::new(AlignSpace::InverseDepth, vec![]).unwrap();
        assert!(matches!(fit_var(&c), Err(Error::InsufficientData { .. })));
        let c = Correspondences::new(AlignSpace::InverseDepth, vec![(-0.5, 4.0)]).unwrap();
        assert!(fit_var(&c).is_err());
    }

    #[test]
    fn var_unbracketable_scale() {
        // the optimum sits at s = 1e-9, below the search floor
        let c = Correspondences::new(AlignSpace::InverseDepth, vec![(1e3, 1e6)]).unwrap();
        assert_eq!(fit_var(&c), Err(Error::NoBracket));
    }

    #[test]
    fn var_matches_log_grid_oracle() {
        let mut rng = RngKey::new(5, 0).rng();
        let noise = Normal::new(0.0, 0.5).unwrap();
        let pairs: Vec<(f64, f64)> = (0..50)
            .map(|_| {
                let d: f64 = rng.gen_range(2.0..60.0);
                let zm = 1.0 / (1.3 * d);
                (zm, (d + noise.sample(&mut rng)).max(0.5))
            })
            .collect();
        let c = Correspondences::new(AlignSpace::InverseDepth, pairs).unwrap();
        let p = fit_var(&c).unwrap();
        // 1e5 log-spaced candidates over [0.1, 10]
        let n = 100_000;
        let ratio = libm::pow(100.0, 1.0 / (n - 1) as f64);
        let mut best = (f64::INFINITY, 0.0);
        let mut s = 0.1;
        for _ in 0..n {
            let e = var_objective(&c, s);
            if e < best.0 {
                best = (e, s);
            }
            s *= ratio;
        }
        assert!((p.scale / best.1).ln().abs() <= ratio.ln(), "{} vs {}", p.scale, best.1);
        // residual optimality against ±0.1 % perturbations
        let e = var_objective(&c, p.scale);
        assert!(e <= var_objective(&c, p.scale * 1.001));
        assert!(e <= var_objective(&c, p.scale * 0.999));
        // the root of dE/ds in s is the closed-form minimiser in u = 1/s
        let num: f64 = c.pairs().iter().map(|&(z, d)| d / z).sum();
        let den: f64 = c.pairs().iter().map(|&(z, _)| 1.0 / (z * z)).sum();
        assert!((p.scale * num / den - 1.0).abs() < 1e-8);
    }

    fn affine_corr(n: usize, a: f64, b: f64, seed: u64) -> (Correspondences, Vec<f64>) {
        let mut rng = RngKey::new(seed, 0).rng();
        let zm: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0125..0.5)).collect();
        let pairs = zm.iter().map(|&z| (z, 1.0 / (a * z + b))).collect();
        (Correspondences::new(AlignSpace::InverseDepth, pairs).unwrap(), zm)
    }

    #[test]
    fn ransac_outlier_free_accepts_first_draw() {
        let (c, _) = affine_corr(40, 2.0, 0.05, 1);
        let fit = fit_ransac(&c, &RansacConfig::default(), RngKey::new(9, 0)).unwrap();
        assert!(fit.accepted);
        assert_eq!(fit.iterations, 1);
        assert!((fit.params.scale - 2.0).abs() < 1e-9);
        assert!((fit.params.offset - 0.05).abs() < 1e-9);
        let ls = fit_ls(&c).unwrap();
        assert!((fit.params.scale - ls.scale).abs() < 1e-9);
    }

    #[test]
    fn ransac_rejects_gross_outliers() {
        let (clean, _) = affine_corr(70, 1.5, 0.02, 2);
        let mut pairs = clean.pairs().to_vec();
        let (extra, _) = affine_corr(30, 1.5, 0.02, 3);
        pairs.extend(extra.pairs().iter().map(|&(z, d)| (z, d * 10.0)));
        let c = Correspondences::new(AlignSpace::InverseDepth, pairs).unwrap();
        let fit = fit_ransac(&c, &RansacConfig::default(), RngKey::new(4, 0)).unwrap();
        let oracle = fit_ls(&clean).unwrap();
        assert!((fit.params.scale - oracle.scale).abs() < 1e-6, "{fit:?} {oracle:?}");
        assert!((fit.params.offset - oracle.offset).abs() < 1e-6);
        let again = fit_ransac(&c, &RansacConfig::default(), RngKey::new(4, 0)).unwrap();
        assert_eq!(fit, again);
    }

    #[test]
    fn ransac_needs_five() {
        let (c, _) = affine_corr(4, 2.0, 0.0, 1);
        assert!(matches!(
            fit_ransac(&c, &RansacConfig::default(), RngKey::default()),
            Err(Error::InsufficientData { needed: 5, got: 4 })
        ));
    }

    #[test]
    fn ransac_inlier_gate() {
        let cfg = RansacConfig::default();
        let p = AlignmentParams::identity(AlignSpace::InverseDepth);
        // z_m = 1/10: aligned depth 10
        let c = Correspondences::new(
            AlignSpace::InverseDepth,
            vec![(0.1, 15.9), (0.1, 16.1), (0.01, 1000.0), (0.5, 1.0)],
        )
        .unwrap();
        // 5.9 m off: inlier; 6.1 m off: outlier by depth and by |0.1 − 0.0621| > 0.015;
        // 900 m off but inverse error 0.009: inlier; depth 2 vs 1: 1 m off: inlier
        assert_eq!(classify_inliers(&c, &p, &cfg), vec![true, false, true, true]);
    }

    #[test]
    fn const_examples() {
        let sp = AlignSpace::InverseDepth;
        assert_eq!(estimate_const(&[1.0, 3.0], sp).unwrap().scale, 2.0);
        assert_eq!(estimate_const(&[5.0], sp).unwrap().scale, 5.0);
        assert_eq!(estimate_const(&[], sp), Err(Error::EmptyInput));
        let mut rng = RngKey::new(8, 0).rng();
        let scales: Vec<f64> = (0..1000).map(|_| rng.gen_range(0.5..4.0)).collect();
        // streaming (Welford) mean as an independent oracle
        let mut mean = 0.0;
        for (k, s) in scales.iter().enumerate() {
            mean += (s - mean) / (k + 1) as f64;
        }
        let p = estimate_const(&scales, sp).unwrap();
        assert!((p.scale - mean).abs() < 1e-12);
        assert_eq!(p.offset, 0.0);
    }

    #[test]
    fn apply_examples() {
        let pred = FloatMap::dense(MapKind::InverseDepth, 2, 1, vec![0.2, 0.05]).unwrap();
        let id = apply_alignment(&pred, &AlignmentParams::identity(AlignSpace::InverseDepth)).unwrap();
        assert_eq!(id.inverse, pred);
        assert_eq!(id.depth.at(0), Some(5.0));

        let p = AlignmentParams::new(2.0, 0.1, AlignSpace::InverseDepth).unwrap();
        let a = apply_alignment(&pred, &p).unwrap();
        assert!((a.inverse.at(0).unwrap() - 0.5).abs() < 1e-15);
        assert!((a.depth.at(0).unwrap() - 2.0).abs() < 1e-14);

        let neg = AlignmentParams::new(1.0, -0.1, AlignSpace::InverseDepth).unwrap();
        let a = apply_alignment(&pred, &neg).unwrap();
        assert!(a.depth.at(0).is_some());
        assert_eq!(a.depth.at(1), None);
        assert_eq!(a.inverse.at(1), None);

        let depth_pred = FloatMap::dense(MapKind::Depth, 1, 1, vec![4.0]).unwrap();
        assert!(matches!(apply_alignment(&depth_pred, &p), Err(Error::KindMismatch { .. })));
        let dp = AlignmentParams::new(2.0, 1.0, AlignSpace::Depth).unwrap();
        let a = apply_alignment(&depth_pred, &dp).unwrap();
        assert_eq!(a.depth.at(0), Some(9.0));
        assert_eq!(a.inverse.at(0), Some(1.0 / 9.0));
    }

    proptest! {
        #[test]
        fn ls_recovers_any_affine(
            a in 0.1f64..10.0,
            b in -0.05f64..0.2,
            zs in proptest::collection::vec(0.01f64..1.0, 2..40),
        ) {
            prop_assume!(zs.iter().any(|&z| (z - zs[0]).abs() > 1e-3));
            prop_assume!(zs.iter().all(|&z| a * z + b > 1e-3));
            let pairs = zs.iter().map(|&z| (z, 1.0 / (a * z + b))).collect();
            let p = fit_ls(&Correspondences::new(AlignSpace::InverseDepth, pairs).unwrap()).unwrap();
            prop_assert!((p.scale - a).abs() <= 1e-9 * a.abs().max(1.0));
            prop_assert!((p.offset - b).abs() <= 1e-9 * b.abs().max(1.0));
        }

        #[test]
        fn ls_reparameterisation_invariance(
            alpha in 0.1f64..10.0,
            zs in proptest::collection::vec(0.01f64..1.0, 3..30),
            ds in proptest::collection::vec(1.0f64..80.0, 30),
        ) {
            prop_assume!(zs.iter().any(|&z| (z - zs[0]).abs() > 1e-3));
            let pairs: Vec<(f64, f64)> = zs.iter().zip(&ds).map(|(&z, &d)| (z, d)).collect();
            let scaled: Vec<(f64, f64)> = pairs.iter().map(|&(z, d)| (alpha * z, d)).collect();
            let p = fit_ls(&Correspondences::new(AlignSpace::InverseDepth, pairs).unwrap());
            let q = fit_ls(&Correspondences::new(AlignSpace::InverseDepth, scaled).unwrap());
            if let (Ok(p), Ok(q)) = (p, q) {
                prop_assert!((q.scale * alpha - p.scale).abs() <= 1e-9 * p.scale);
                prop_assert!((q.offset - p.offset).abs() <= 1e-9 * p.offset.abs().max(p.scale * 1e-2));
                for &z in &zs {
                    let a = p.depth_and_inverse(z).1;
                    let b = q.depth_and_inverse(alpha * z).1;
                    prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1e-3));
                }
            }
        }

        #[test]
        fn aligned_depth_is_positive(
            scale in 0.01f64..10.0,
            offset in -1.0f64..1.0,
            zs in proptest::collection::vec(1e-4f64..2.0, 1..50),
        ) {
            let n = zs.len();
            let pred = FloatMap::dense(MapKind::InverseDepth, n, 1, zs).unwrap();
            let p = AlignmentParams::new(scale, offset, AlignSpace::InverseDepth).unwrap();
            let a = apply_alignment(&pred, &p).unwrap();
            prop_assert!(a.depth.iter_valid().all(|(_, d)| d > 0.0 && d.is_finite()));
            prop_assert_eq!(a.depth.validity(), a.inverse.validity());
        }

        #[test]
        fn var_is_locally_optimal(
            s_true in 0.2f64..5.0,
            ds in proptest::collection::vec(1.0f64..80.0, 1..40),
            jitter in proptest::collection::vec(0.8f64..1.25, 40),
        ) {
            let pairs = ds.iter().zip(&jitter).map(|(&d, &j)| (j / (s_true * d), d)).collect();
            let c = Correspondences::new(AlignSpace::InverseDepth, pairs).unwrap();
            let p = fit_var(&c).unwrap();
            let e = var_objective(&c, p.scale);
            prop_assert!(e <= var_objective(&c, p.scale * 1.001));
            prop_assert!(e <= var_objective(&c, p.scale * 0.999));
        }
    }
}
