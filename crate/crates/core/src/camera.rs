//! Pinhole intrinsics, rigid poses and point clouds in the camera frame.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::map::EPS_DEPTH;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let finite = fx.is_finite() && fy.is_finite() && cx.is_finite() && cy.is_finite();
        if !finite || fx <= 0.0 || fy <= 0.0 {
            return Err(Error::InvalidValue("focal lengths must be finite and positive"));
        }
        if !(0.0..width as f64).contains(&cx) || !(0.0..height as f64).contains(&cy) {
            return Err(Error::InvalidValue("principal point outside the image"));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Continuous pixel coordinates of a camera-frame point, if it lies in
    /// front of the camera.
    #[inline]
    pub fn project(&self, p: [f64; 3]) -> Option<(f64, f64)> {
        let [x, y, z] = p;
        if !(z > EPS_DEPTH) {
            return None;
        }
        Some((self.fx * x / z + self.cx, self.fy * y / z + self.cy))
    }

    /// Nearest-integer pixel hit by `p`, or `None` if behind the camera or
    /// out of bounds.
    #[inline]
    pub fn pixel_of(&self, p: [f64; 3]) -> Option<(usize, usize)> {
        let (u, v) = self.project(p)?;
        let (u, v) = (libm::round(u), libm::round(v));
        if u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64 {
            Some((u as usize, v as usize))
        } else {
            None
        }
    }

    /// Camera-frame point at `depth` along the ray through pixel `(u, v)`.
    #[inline]
    pub fn back_project(&self, u: f64, v: f64, depth: f64) -> [f64; 3] {
        [
            (u - self.cx) / self.fx * depth,
            (v - self.cy) / self.fy * depth,
            depth,
        ]
    }
}

/// Rigid transform `p' = R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl Pose {
    pub const IDENTITY: Pose = Pose {
        rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        translation: [0.0; 3],
    };

    pub fn new(rotation: [[f64; 3]; 3], translation: [f64; 3]) -> Result<Self> {
        if rotation.iter().flatten().chain(&translation).any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue("pose has non-finite entries"));
        }
        let mut err = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| rotation[k][i] * rotation[k][j]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                err += (dot - target) * (dot - target);
            }
        }
        if libm::sqrt(err) >= 1e-6 {
            return Err(Error::InvalidValue("rotation block is not orthonormal"));
        }
        if det3(&rotation) <= 0.0 {
            return Err(Error::InvalidValue("rotation block is a reflection"));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn translation(t: [f64; 3]) -> Self {
        Self {
            translation: t,
            ..Self::IDENTITY
        }
    }

    /// Rotation by `angle` radians about the camera y axis.
    pub fn rotation_y(angle: f64) -> Self {
        let (s, c) = (libm::sin(angle), libm::cos(angle));
        Self {
            rotation: [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]],
            translation: [0.0; 3],
        }
    }

    /// Row-major 4×4 homogeneous matrix.
    pub fn from_matrix(m: [f64; 16]) -> Result<Self> {
        if m[12] != 0.0 || m[13] != 0.0 || m[14] != 0.0 || m[15] != 1.0 {
            return Err(Error::InvalidValue("bottom row of a pose must be 0 0 0 1"));
        }
        Self::new(
            [[m[0], m[1], m[2]], [m[4], m[5], m[6]], [m[8], m[9], m[10]]],
            [m[3], m[7], m[11]],
        )
    }

    pub fn to_matrix(&self) -> [f64; 16] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[0][0], r[0][1], r[0][2], t[0], r[1][0], r[1][1], r[1][2], t[1], r[2][0], r[2][1],
            r[2][2], t[2], 0.0, 0.0, 0.0, 1.0,
        ]
    }

    pub fn rotation(&self) -> &[[f64; 3]; 3] {
        &self.rotation
    }

    pub fn translation_vector(&self) -> [f64; 3] {
        self.translation
    }

    #[inline]
    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + t[0],
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + t[1],
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + t[2],
        ]
    }

    pub fn inverse(&self) -> Pose {
        let r = &self.rotation;
        let mut rt = [[0.0; 3]; 3];
        for (i, row) in rt.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = r[j][i];
            }
        }
        let t = self.translation;
        let ti = [
            -(rt[0][0] * t[0] + rt[0][1] * t[1] + rt[0][2] * t[2]),
            -(rt[1][0] * t[0] + rt[1][1] * t[1] + rt[1][2] * t[2]),
            -(rt[2][0] * t[0] + rt[2][1] * t[1] + rt[2][2] * t[2]),
        ];
        Pose {
            rotation: rt,
            translation: ti,
        }
    }
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// A named per-point scalar channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Attribute {
    pub name: String,
    pub values: Vec<f64>,
}

/// Points `(x, y, z)` in meters, camera frame, plus optional attributes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    points: Vec<[f64; 3]>,
    attributes: Vec<Attribute>,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 3]>) -> Result<Self> {
        Self::with_attributes(points, Vec::new())
    }

    pub fn with_attributes(points: Vec<[f64; 3]>, attributes: Vec<Attribute>) -> Result<Self> {
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue("non-finite point coordinate"));
        }
        if attributes.iter().any(|a| a.values.len() != points.len()) {
            return Err(Error::InvalidValue("attribute length differs from point count"));
        }
        Ok(Self { points, attributes })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn attribute(&self, name: &str) -> Option<&[f64]> {
        self.attributes
            .iter()
            .find(|a| a.name == name)
            .map(|a| a.values.as_slice())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(100.0, 100.0, 50.0, 50.0, 100, 100).is_ok());
        assert!(CameraIntrinsics::new(0.0, 100.0, 50.0, 50.0, 100, 100).is_err());
        assert!(CameraIntrinsics::new(100.0, 100.0, 100.0, 50.0, 100, 100).is_err());
    }

    #[test]
    fn pose_validation() {
        let reflect = [[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(Pose::new(reflect, [0.0; 3]).is_err());
        let skew = [[1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(Pose::new(skew, [0.0; 3]).is_err());
        let r = Pose::rotation_y(0.3);
        assert!(Pose::new(*r.rotation(), [1.0, 2.0, 3.0]).is_ok());
    }

    #[test]
    fn pose_inverse_round_trip() {
        let p = Pose::new(*Pose::rotation_y(0.7).rotation(), [1.0, -2.0, 0.5]).unwrap();
        let q = p.inverse().apply(p.apply([3.0, 4.0, 5.0]));
        for (a, b) in q.iter().zip([3.0, 4.0, 5.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(Pose::from_matrix(p.to_matrix()).unwrap(), p);
    }

    #[test]
    fn cloud_rejects_bad_attributes() {
        let a = Attribute {
            name: "i".into(),
            values: alloc::vec![1.0],
        };
        assert!(PointCloud::with_attributes(alloc::vec![], alloc::vec![a]).is_err());
        assert!(PointCloud::new(alloc::vec![[0.0, f64::NAN, 1.0]]).is_err());
    }
}
