//! Point-cloud projection, multi-frame accumulation and log-space
//! densification of sparse depth.

use alloc::vec::Vec;

use spade::{DelaunayTriangulation, HasPosition, Point2, Triangulation};

use crate::camera::{CameraIntrinsics, PointCloud, Pose};
use crate::error::{Error, Result};
use crate::map::{FloatMap, MapKind};

/// Projects camera-frame points into a sparse depth map.
///
/// Pixels are rounded to the nearest integer; collisions keep the smallest
/// depth. Points behind the camera or outside the image are dropped.
pub fn project_points(cloud: &PointCloud, k: &CameraIntrinsics) -> FloatMap {
    project_many(core::iter::once(cloud.points()), k)
}

fn project_many<'a>(
    clouds: impl Iterator<Item = &'a [[f64; 3]]>,
    k: &CameraIntrinsics,
) -> FloatMap {
    let mut out = FloatMap::invalid(MapKind::Depth, k.width, k.height);
    for points in clouds {
        for &p in points {
            if let Some((u, v)) = k.pixel_of(p) {
                let i = out.index(u, v);
                match out.at(i) {
                    Some(d) if d <= p[2] => {}
                    _ => out.put(i, p[2]),
                }
            }
        }
    }
    out
}

/// Maps every point through `pose`; attributes are carried unchanged.
pub fn transform_cloud(cloud: &PointCloud, pose: &Pose) -> PointCloud {
    let points = cloud.points().iter().map(|&p| pose.apply(p)).collect();
    PointCloud::with_attributes(points, cloud.attributes().to_vec())
        .expect("a rigid transform of finite points is finite")
}

/// Brings every frame into the reference frame and z-buffers the union.
pub fn accumulate_lidar(frames: &[(PointCloud, Pose)], k: &CameraIntrinsics) -> Result<FloatMap> {
    if frames.is_empty() {
        return Err(Error::EmptyInput);
    }
    let moved: Vec<PointCloud> = frames
        .iter()
        .map(|(cloud, pose)| transform_cloud(cloud, pose))
        .collect();
    Ok(project_many(moved.iter().map(|c| c.points()), k))
}

#[derive(Debug, Clone, Copy)]
struct Support {
    position: Point2<f64>,
    log_depth: f64,
    depth: f64,
}

impl HasPosition for Support {
    type Scalar = f64;

    fn position(&self) -> Point2<f64> {
        self.position
    }
}

/// Densifies a sparse depth map by linear interpolation of `ln(depth)` over
/// the Delaunay triangulation of its valid pixels.
///
/// Pixels outside the convex hull of the support stay invalid. Support pixels
/// keep their input value exactly.
pub fn interpolate_log(sparse: &FloatMap) -> Result<FloatMap> {
    sparse.expect_kind(MapKind::Depth)?;
    let w = sparse.width();
    let support: Vec<Support> = sparse
        .iter_valid()
        .map(|(i, d)| Support {
            position: Point2::new((i % w) as f64, (i / w) as f64),
            log_depth: libm::log(d),
            depth: d,
        })
        .collect();
    if support.len() < 3 {
        return Err(Error::DegenerateSupport);
    }
    let tri: DelaunayTriangulation<Support> =
        DelaunayTriangulation::bulk_load(support).map_err(|_| Error::DegenerateSupport)?;
    if tri.num_inner_faces() == 0 {
        return Err(Error::DegenerateSupport);
    }

    let mut out = FloatMap::invalid(MapKind::Depth, w, sparse.height());
    for face in tri.inner_faces() {
        let vs = face.vertices().map(|v| *v.data());
        rasterize(&mut out, &vs);
    }
    for (i, d) in sparse.iter_valid() {
        out.put(i, d);
    }
    Ok(out)
}

#[inline]
fn orient(a: (i64, i64), b: (i64, i64), p: (i64, i64)) -> i64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

fn rasterize(out: &mut FloatMap, vs: &[Support; 3]) {
    // support sits on integer pixel centres, so edge functions are exact
    let ip = |s: &Support| (s.position.x as i64, s.position.y as i64);
    let (a, b, c) = (ip(&vs[0]), ip(&vs[1]), ip(&vs[2]));
    let area = orient(a, b, c);
    if area == 0 {
        return;
    }
    let sign = area.signum();
    let area_f = (area * sign) as f64;
    let lo = vs.iter().map(|s| s.depth).fold(f64::INFINITY, f64::min);
    let hi = vs.iter().map(|s| s.depth).fold(f64::NEG_INFINITY, f64::max);

    let (x0, x1) = (a.0.min(b.0).min(c.0), a.0.max(b.0).max(c.0));
    let (y0, y1) = (a.1.min(b.1).min(c.1), a.1.max(b.1).max(c.1));
    for y in y0..=y1 {
        for x in x0..=x1 {
            let p = (x, y);
            let wa = orient(b, c, p) * sign;
            let wb = orient(c, a, p) * sign;
            let wc = orient(a, b, p) * sign;
            if wa < 0 || wb < 0 || wc < 0 {
                continue;
            }
            let i = out.index(x as usize, y as usize);
            if out.is_valid(i) {
                continue;
            }
            let l = (wa as f64 * vs[0].log_depth + wb as f64 * vs[1].log_depth + wc as f64 * vs[2].log_depth)
                / area_f;
            out.put(i, libm::exp(l).clamp(lo, hi));
        }
    }
}
