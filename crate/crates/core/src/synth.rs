//! Seeded synthetic scenes: ray-cast ground truth, simulated radar and LiDAR
//! clouds, and a distorted scaleless "monocular" prediction.
//!
//! Camera frame: x right, y down, z forward. Depth is the z coordinate.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::TAU;

use rand::distributions::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::camera::{Attribute, CameraIntrinsics, PointCloud, Pose};
use crate::error::{Error, Result};
use crate::geometry::{accumulate_lidar, interpolate_log, project_points};
use crate::map::{FloatMap, MapKind, EPS_DEPTH};
use crate::rng::RngKey;

const TAG_SCENE: u64 = 1;
const TAG_RADAR: u64 = 2;
const TAG_FIELD: u64 = 3;

/// Name of the per-point radar attribute marking injected outliers (0 or 1).
pub const OUTLIER_ATTRIBUTE: &str = "outlier";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Surface {
    /// The plane `z = depth` restricted to `x ∈ [x0, x1]`, `y ∈ [y0, y1]`.
    /// Infinite bounds are allowed.
    Wall { depth: f64, x: (f64, f64), y: (f64, f64) },
    /// Axis-aligned box.
    Cuboid { min: [f64; 3], max: [f64; 3] },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutlierMode {
    /// Depth replaced by a uniform draw in `[1, max_range]`.
    Uniform,
    /// True depth multiplied by the factor.
    Scale(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadarSpec {
    pub count: usize,
    /// Range noise standard deviation, meters.
    pub sigma_r: f64,
    /// Pixel jitter standard deviation.
    pub jitter_px: f64,
    pub outlier_fraction: f64,
    pub outlier_mode: OutlierMode,
    pub max_range: f64,
    /// Row density grows as `((v + 0.5) / H)^row_bias`; 0 is uniform.
    pub row_bias: f64,
}

impl Default for RadarSpec {
    fn default() -> Self {
        Self {
            count: 100,
            sigma_r: 0.0,
            jitter_px: 0.0,
            outlier_fraction: 0.0,
            outlier_mode: OutlierMode::Uniform,
            max_range: 80.0,
            row_bias: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarSpec {
    /// Sample every `stride`-th pixel along both axes.
    pub stride: usize,
    /// Number of sweeps accumulated into the dense reference.
    pub sweeps: usize,
    /// Forward camera motion between sweeps, meters.
    pub sweep_step: f64,
}

impl Default for LidarSpec {
    fn default() -> Self {
        Self {
            stride: 4,
            sweeps: 1,
            sweep_step: 1.0,
        }
    }
}

/// Inverse-depth distortion `(a/d + b)·exp(γF)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonoSpec {
    pub a: f64,
    pub b: f64,
    pub gamma: f64,
}

impl Default for MonoSpec {
    fn default() -> Self {
        Self {
            a: 1.0,
            b: 0.0,
            gamma: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub intrinsics: CameraIntrinsics,
    /// Height of the camera above a horizontal ground plane.
    pub ground_height: Option<f64>,
    pub surfaces: Vec<Surface>,
    /// Hits beyond this depth are discarded.
    pub max_depth: f64,
    pub radar: RadarSpec,
    pub lidar: LidarSpec,
    pub mono: MonoSpec,
    pub seed: u64,
    pub frame: u64,
}

impl SceneSpec {
    /// A 320×240 camera looking at a ground plane and a back wall.
    pub fn basic(seed: u64) -> Self {
        Self {
            intrinsics: CameraIntrinsics::new(250.0, 250.0, 159.5, 119.5, 320, 240)
                .expect("valid intrinsics"),
            ground_height: Some(1.5),
            surfaces: vec![Surface::Wall {
                depth: 60.0,
                x: (f64::NEG_INFINITY, f64::INFINITY),
                y: (f64::NEG_INFINITY, f64::INFINITY),
            }],
            max_depth: 80.0,
            radar: RadarSpec::default(),
            lidar: LidarSpec::default(),
            mono: MonoSpec::default(),
            seed,
            frame: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.radar;
        if !(r.sigma_r >= 0.0 && r.jitter_px >= 0.0 && r.row_bias >= 0.0) {
            return Err(Error::InvalidValue("radar noise and bias must be non-negative"));
        }
        if !(0.0..1.0).contains(&r.outlier_fraction) {
            return Err(Error::InvalidValue("outlier fraction must lie in [0, 1)"));
        }
        if !(r.max_range > 1.0 && r.max_range.is_finite()) {
            return Err(Error::InvalidValue("radar max range must exceed 1 m"));
        }
        if let OutlierMode::Scale(f) = r.outlier_mode {
            if !(f > 0.0 && f.is_finite()) {
                return Err(Error::InvalidValue("outlier scale must be positive"));
            }
        }
        if self.lidar.stride == 0 || !self.lidar.sweep_step.is_finite() {
            return Err(Error::InvalidValue("lidar stride must be at least 1"));
        }
        if !(self.max_depth > 0.0) {
            return Err(Error::InvalidValue("max depth must be positive"));
        }
        if let Some(h) = self.ground_height {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidValue("ground height must be positive"));
            }
        }
        for s in &self.surfaces {
            let ok = match *s {
                Surface::Wall { depth, x, y } => depth.is_finite() && x.0 <= x.1 && y.0 <= y.1,
                Surface::Cuboid { min, max } => (0..3).all(|i| min[i].is_finite() && max[i].is_finite() && min[i] < max[i]),
            };
            if !ok {
                return Err(Error::InvalidValue("malformed surface"));
            }
        }
        Ok(())
    }

    fn key(&self, tag: u64) -> RngKey {
        RngKey::new(self.seed, self.frame).purpose(tag)
    }
}

/// Replaces the surfaces of `template` with a random street-like layout for
/// `frame`: a back wall and a few boxes standing on the ground.
pub fn random_scene(template: &SceneSpec, frame: u64) -> SceneSpec {
    let mut spec = template.clone();
    spec.frame = frame;
    let mut rng = spec.key(TAG_SCENE).rng();
    let ground = spec.ground_height.unwrap_or(1.5);
    let far = rng.gen_range(0.5 * spec.max_depth..0.95 * spec.max_depth);
    spec.surfaces = vec![Surface::Wall {
        depth: far,
        x: (f64::NEG_INFINITY, f64::INFINITY),
        y: (f64::NEG_INFINITY, f64::INFINITY),
    }];
    let n_boxes = rng.gen_range(2..=5);
    for _ in 0..n_boxes {
        let z = rng.gen_range(5.0..0.8 * far);
        let x = rng.gen_range(-0.5 * z..0.5 * z);
        let (w, h, d) = (rng.gen_range(1.0..4.0), rng.gen_range(1.0..3.5), rng.gen_range(1.0..4.0));
        spec.surfaces.push(Surface::Cuboid {
            min: [x - w / 2.0, ground - h, z],
            max: [x + w / 2.0, ground, z + d],
        });
    }
    if rng.gen_bool(0.5) {
        let side: f64 = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let x = side * rng.gen_range(4.0..8.0);
        spec.surfaces.push(Surface::Cuboid {
            min: [x.min(x + side * 0.5), ground - 4.0, 8.0],
            max: [x.max(x + side * 0.5), ground, far],
        });
    }
    spec
}

/// Nearest positive ray parameter for `o + t·dir`, where `dir.z = 1`.
fn intersect(s: &Surface, o: [f64; 3], dir: [f64; 3]) -> Option<f64> {
    match *s {
        Surface::Wall { depth, x, y } => {
            let t = depth - o[2];
            if !(t > EPS_DEPTH) {
                return None;
            }
            let px = o[0] + t * dir[0];
            let py = o[1] + t * dir[1];
            (px >= x.0 && px <= x.1 && py >= y.0 && py <= y.1).then_some(t)
        }
        Surface::Cuboid { min, max } => {
            let mut near = f64::NEG_INFINITY;
            let mut far = f64::INFINITY;
            for i in 0..3 {
                if dir[i] == 0.0 {
                    if o[i] < min[i] || o[i] > max[i] {
                        return None;
                    }
                    continue;
                }
                let a = (min[i] - o[i]) / dir[i];
                let b = (max[i] - o[i]) / dir[i];
                near = near.max(a.min(b));
                far = far.min(a.max(b));
            }
            // a camera inside the box sees nothing of it
            (near <= far && near > EPS_DEPTH).then_some(near)
        }
    }
}

fn ground_hit(height: f64, o: [f64; 3], dir: [f64; 3]) -> Option<f64> {
    if dir[1] <= 0.0 {
        return None;
    }
    let t = (height - o[1]) / dir[1];
    (t > EPS_DEPTH).then_some(t)
}

/// Ground-truth depth seen from a camera translated by `origin` (no rotation).
pub fn render_from(spec: &SceneSpec, origin: [f64; 3]) -> Result<FloatMap> {
    if spec.surfaces.is_empty() && spec.ground_height.is_none() {
        return Err(Error::EmptyScene);
    }
    let k = &spec.intrinsics;
    FloatMap::from_fn(MapKind::Depth, k.width, k.height, |u, v| {
        let dir = [(u as f64 - k.cx) / k.fx, (v as f64 - k.cy) / k.fy, 1.0];
        let mut best = spec
            .ground_height
            .and_then(|h| ground_hit(h, origin, dir))
            .unwrap_or(f64::INFINITY);
        for s in &spec.surfaces {
            if let Some(t) = intersect(s, origin, dir) {
                best = best.min(t);
            }
        }
        (best <= spec.max_depth).then_some(best)
    })
}

/// Nearest-surface depth at every pixel center.
pub fn render_gt(spec: &SceneSpec) -> Result<FloatMap> {
    render_from(spec, [0.0; 3])
}

/// Simulated radar returns: row-biased pixel draws, Gaussian range noise,
/// pixel jitter and Bernoulli outliers, flagged in the `outlier` attribute.
pub fn sample_radar(spec: &SceneSpec, gt: &FloatMap) -> Result<PointCloud> {
    gt.expect_kind(MapKind::Depth)?;
    let k = &spec.intrinsics;
    gt.expect_shape((k.width, k.height))?;
    let r = &spec.radar;
    let candidates: Vec<(usize, f64)> = gt
        .iter_valid()
        .filter(|&(_, d)| d <= r.max_range)
        .collect();
    if r.count == 0 || candidates.is_empty() {
        return Ok(PointCloud::empty());
    }
    let h = k.height as f64;
    let weights = candidates.iter().map(|&(i, _)| {
        let v = (i / k.width) as f64;
        libm::pow((v + 0.5) / h, r.row_bias)
    });
    let pick = WeightedIndex::new(weights).map_err(|_| Error::InvalidValue("no radar candidates"))?;
    let mut rng = spec.key(TAG_RADAR).rng();
    let mut points = Vec::with_capacity(r.count);
    let mut flags = Vec::with_capacity(r.count);
    for _ in 0..r.count {
        let (i, d) = candidates[pick.sample(&mut rng)];
        let (u, v) = ((i % k.width) as f64, (i / k.width) as f64);
        let n_range: f64 = StandardNormal.sample(&mut rng);
        let n_u: f64 = StandardNormal.sample(&mut rng);
        let n_v: f64 = StandardNormal.sample(&mut rng);
        let outlier = rng.gen_bool(r.outlier_fraction);
        let mut z = d + r.sigma_r * n_range;
        if outlier {
            z = match r.outlier_mode {
                OutlierMode::Uniform => rng.gen_range(1.0..r.max_range),
                OutlierMode::Scale(f) => d * f,
            };
        }
        let z = z.max(0.1);
        points.push(k.back_project(u + r.jitter_px * n_u, v + r.jitter_px * n_v, z));
        flags.push(if outlier { 1.0 } else { 0.0 });
    }
    PointCloud::with_attributes(
        points,
        vec![Attribute {
            name: String::from(OUTLIER_ATTRIBUTE),
            values: flags,
        }],
    )
}

/// Smooth field on the pixel grid: four seeded low-frequency sinusoids,
/// shifted to zero mean and scaled to unit max-abs.
pub fn smooth_field(key: RngKey, width: usize, height: usize) -> Vec<f64> {
    let mut rng = key.rng();
    let waves: Vec<[f64; 4]> = (0..4)
        .map(|_| {
            [
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-1.5..1.5),
                rng.gen_range(0.0..TAU),
                rng.gen_range(0.5..1.0),
            ]
        })
        .collect();
    let mut f = Vec::with_capacity(width * height);
    for y in 0..height {
        let ny = (y as f64 + 0.5) / height as f64;
        for x in 0..width {
            let nx = (x as f64 + 0.5) / width as f64;
            let v: f64 = waves
                .iter()
                .map(|&[kx, ky, ph, amp]| amp * libm::sin(TAU * (kx * nx + ky * ny) + ph))
                .sum();
            f.push(v);
        }
    }
    let mean = crate::sum::sum(f.iter().copied()) / f.len().max(1) as f64;
    let peak = f.iter().map(|v| libm::fabs(v - mean)).fold(0.0, f64::max);
    for v in &mut f {
        *v = if peak > 0.0 { (*v - mean) / peak } else { 0.0 };
    }
    f
}

/// Scaleless inverse-depth prediction `(a/d + b)·exp(γF)`, clamped positive.
pub fn distort_mono(spec: &SceneSpec, gt: &FloatMap) -> Result<FloatMap> {
    gt.expect_kind(MapKind::Depth)?;
    let m = spec.mono;
    if !(m.a > 0.0 && m.a.is_finite() && m.b.is_finite() && m.gamma.is_finite()) {
        return Err(Error::InvalidDistortion);
    }
    let (w, h) = gt.shape();
    let field = if m.gamma != 0.0 {
        smooth_field(spec.key(TAG_FIELD), w, h)
    } else {
        Vec::new()
    };
    let mut values = vec![0.0; w * h];
    for (i, d) in gt.iter_valid() {
        let mut z = m.a / d + m.b;
        if m.gamma != 0.0 {
            z *= libm::exp(m.gamma * field[i]);
        }
        values[i] = z.max(EPS_DEPTH);
    }
    FloatMap::new(MapKind::InverseDepth, w, h, values, gt.validity().to_vec())
}

/// Noiseless LiDAR returns on a regular pixel grid with spacing `stride`.
pub fn sample_lidar(spec: &SceneSpec, gt: &FloatMap) -> Result<PointCloud> {
    gt.expect_kind(MapKind::Depth)?;
    let k = &spec.intrinsics;
    gt.expect_shape((k.width, k.height))?;
    let s = spec.lidar.stride.max(1);
    let mut points = Vec::new();
    for v in (0..k.height).step_by(s) {
        for u in (0..k.width).step_by(s) {
            if let Some(d) = gt.get(u, v) {
                points.push(k.back_project(u as f64, v as f64, d));
            }
        }
    }
    PointCloud::new(points)
}

/// LiDAR sweeps from earlier camera positions along the optical axis, each
/// with the pose into the current frame. Sweep 0 is the current frame.
pub fn lidar_sweeps(spec: &SceneSpec) -> Result<Vec<(PointCloud, Pose)>> {
    (0..spec.lidar.sweeps.max(1))
        .map(|i| {
            let origin = [0.0, 0.0, -(i as f64) * spec.lidar.sweep_step];
            let gt = render_from(spec, origin)?;
            Ok((sample_lidar(spec, &gt)?, Pose::translation(origin)))
        })
        .collect()
}

/// Everything generated for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthFrame {
    pub gt: FloatMap,
    pub radar: PointCloud,
    pub lidar: PointCloud,
    /// Projected single-sweep LiDAR.
    pub d_gt: FloatMap,
    /// Projected multi-sweep LiDAR.
    pub d_acc: FloatMap,
    /// Log-space interpolation of `d_acc`.
    pub d_int: FloatMap,
    pub mono: FloatMap,
}

pub fn generate_frame(spec: &SceneSpec) -> Result<SynthFrame> {
    spec.validate()?;
    let gt = render_gt(spec)?;
    let radar = sample_radar(spec, &gt)?;
    let sweeps = lidar_sweeps(spec)?;
    let lidar = sweeps[0].0.clone();
    let d_gt = project_points(&lidar, &spec.intrinsics);
    let d_acc = accumulate_lidar(&sweeps, &spec.intrinsics)?;
    let d_int = interpolate_log(&d_acc)?;
    let mono = distort_mono(spec, &gt)?;
    Ok(SynthFrame {
        gt,
        radar,
        lidar,
        d_gt,
        d_acc,
        d_int,
        mono,
    })
}
