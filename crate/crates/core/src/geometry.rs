//! Pinhole camera model and rigid-body algebra.
//!
//! Poses are stored as a rotation matrix plus translation. Twists are
//! ordered `(rho, omega)`: translational part first, rotational part last.

use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Rotation3, UnitQuaternion, Vector3, Vector4, Vector6};

use crate::error::{Error, Result};

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, serde::Deserialize, serde::Serialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Intrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx > 0.0
            && self.cx < self.width as f64
            && self.cy > 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid intrinsics {self:?}")))
        }
    }

    /// Intrinsics of an image downsampled by two in each direction.
    pub fn half(&self) -> Intrinsics {
        Intrinsics {
            fx: self.fx * 0.5,
            fy: self.fy * 0.5,
            cx: (self.cx + 0.5) * 0.5 - 0.5,
            cy: (self.cy + 0.5) * 0.5 - 0.5,
            width: self.width / 2,
            height: self.height / 2,
        }
    }
}

/// Homogeneous 3D point; `w` is 1 for every finite point produced here.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3H {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
}

impl Point3H {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Point3H { x, y, z, w: 1.0 }
    }

    pub fn euclidean(&self) -> Vector3<f64> {
        Vector3::new(self.x / self.w, self.y / self.w, self.z / self.w)
    }
}

impl From<Vector3<f64>> for Point3H {
    fn from(v: Vector3<f64>) -> Self {
        Point3H::new(v.x, v.y, v.z)
    }
}

/// Lifts pixel `(u, v)` with metric depth `d` to a camera-frame point.
pub fn backproject(u: f64, v: f64, d: f64, k: &Intrinsics) -> Result<Point3H> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::InvalidInput(format!("non-positive depth {d}")));
    }
    Ok(Point3H::new(
        (u - k.cx) / k.fx * d,
        (v - k.cy) / k.fy * d,
        d,
    ))
}

/// Projects a camera-frame point to `(u, v, depth)`.
pub fn project(p: &Point3H, k: &Intrinsics) -> Result<(f64, f64, f64)> {
    let e = p.euclidean();
    if !(e.z > 0.0) {
        return Err(Error::BehindCamera(e.z));
    }
    Ok((k.fx * e.x / e.z + k.cx, k.fy * e.y / e.z + k.cy, e.z))
}

/// Rotation about the x axis by `theta_deg` degrees.
///
/// Multiples of 90 degrees produce exact matrices.
pub fn rot_x(theta_deg: f64) -> Matrix3<f64> {
    let (s, c) = sin_cos_deg(theta_deg);
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_z(theta_deg: f64) -> Matrix3<f64> {
    let (s, c) = sin_cos_deg(theta_deg);
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn sin_cos_deg(theta_deg: f64) -> (f64, f64) {
    let r = theta_deg.rem_euclid(360.0);
    if r == 0.0 {
        (0.0, 1.0)
    } else if r == 90.0 {
        (1.0, 0.0)
    } else if r == 180.0 {
        (0.0, -1.0)
    } else if r == 270.0 {
        (-1.0, 0.0)
    } else {
        r.to_radians().sin_cos()
    }
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rigid transform mapping points of a local frame into a reference frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSE3 {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for PoseSE3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl PoseSE3 {
    pub fn identity() -> Self {
        PoseSE3 {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        PoseSE3 {
            rotation,
            translation,
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        PoseSE3::new(Matrix3::identity(), t)
    }

    pub fn from_quaternion(q: &UnitQuaternion<f64>, t: Vector3<f64>) -> Self {
        PoseSE3::new(q.to_rotation_matrix().into_inner(), t)
    }

    /// Rotation as a unit quaternion with non-negative scalar part.
    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(
            self.rotation,
        ));
        if q.w < 0.0 {
            UnitQuaternion::new_unchecked(-q.into_inner())
        } else {
            q
        }
    }

    pub fn compose(&self, other: &PoseSE3) -> PoseSE3 {
        PoseSE3 {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> PoseSE3 {
        let rt = self.rotation.transpose();
        PoseSE3 {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    #[inline]
    pub fn transform(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Largest deviation of `RᵀR` from identity, or of `det R` from one.
    pub fn orthonormality_error(&self) -> f64 {
        rotation_error(&self.rotation)
    }

    /// Projects the rotation back onto SO(3).
    pub fn orthonormalized(&self) -> PoseSE3 {
        PoseSE3 {
            rotation: nearest_rotation(&self.rotation),
            translation: self.translation,
        }
    }

    /// Rotation angle in radians.
    pub fn angle(&self) -> f64 {
        rotation_angle(&self.rotation)
    }

    /// Exponential map from a twist `(rho, omega)`.
    pub fn exp(xi: &Vector6<f64>) -> PoseSE3 {
        let rho = Vector3::new(xi[0], xi[1], xi[2]);
        let omega = Vector3::new(xi[3], xi[4], xi[5]);
        let theta2 = omega.norm_squared();
        let theta = theta2.sqrt();
        let w = skew(&omega);
        let w2 = w * w;
        let (a, b, c) = if theta < 1e-4 {
            // Taylor expansions of sin(t)/t, (1-cos t)/t^2, (t-sin t)/t^3
            (
                1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0,
                0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0,
                1.0 / 6.0 - theta2 / 120.0 + theta2 * theta2 / 5040.0,
            )
        } else {
            let (s, co) = theta.sin_cos();
            (s / theta, (1.0 - co) / theta2, (theta - s) / (theta2 * theta))
        };
        let rotation = Matrix3::identity() + w * a + w2 * b;
        let v = Matrix3::identity() + w * b + w2 * c;
        PoseSE3 {
            rotation,
            translation: v * rho,
        }
    }

    /// Logarithm map; fails when the rotation angle is within 1e-6 of pi.
    pub fn log(&self) -> Result<Vector6<f64>> {
        let omega = so3_log(&self.rotation)?;
        let theta2 = omega.norm_squared();
        let theta = theta2.sqrt();
        let w = skew(&omega);
        let coeff = if theta < 1e-4 {
            1.0 / 12.0 + theta2 / 720.0
        } else {
            let (s, c) = theta.sin_cos();
            (1.0 - theta * s / (2.0 * (1.0 - c))) / theta2
        };
        let v_inv = Matrix3::identity() - w * 0.5 + w * w * coeff;
        let rho = v_inv * self.translation;
        Ok(Vector6::new(rho.x, rho.y, rho.z, omega.x, omega.y, omega.z))
    }
}

impl Mul for PoseSE3 {
    type Output = PoseSE3;

    fn mul(self, rhs: PoseSE3) -> PoseSE3 {
        self.compose(&rhs)
    }
}

impl Mul<&PoseSE3> for &PoseSE3 {
    type Output = PoseSE3;

    fn mul(self, rhs: &PoseSE3) -> PoseSE3 {
        self.compose(rhs)
    }
}

pub fn compose(a: &PoseSE3, b: &PoseSE3) -> PoseSE3 {
    a.compose(b)
}

pub fn invert(a: &PoseSE3) -> PoseSE3 {
    a.inverse()
}

pub fn se3_exp(xi: &Vector6<f64>) -> PoseSE3 {
    PoseSE3::exp(xi)
}

pub fn se3_log(t: &PoseSE3) -> Result<Vector6<f64>> {
    t.log()
}

/// Applies `pose` to a homogeneous point; the result is a homogeneous point.
pub fn transform_h(pose: &PoseSE3, p: &Point3H) -> Point3H {
    let v = pose.to_matrix() * Vector4::new(p.x, p.y, p.z, p.w);
    Point3H {
        x: v.x,
        y: v.y,
        z: v.z,
        w: v.w,
    }
}

pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0).acos()
}

pub fn rotation_error(r: &Matrix3<f64>) -> f64 {
    let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
    ortho.max((r.determinant() - 1.0).abs())
}

pub fn nearest_rotation(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    u * d * vt
}

fn so3_log(r: &Matrix3<f64>) -> Result<Vector3<f64>> {
    let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = cos.acos();
    if theta > std::f64::consts::PI - 1e-6 {
        return Err(Error::NearSingularity(theta));
    }
    let vee = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    );
    if theta < 1e-4 {
        return Ok(vee * (0.5 + theta * theta / 12.0));
    }
    if theta < 2.5 {
        return Ok(vee * (theta / (2.0 * theta.sin())));
    }
    // Near pi the skew part vanishes; recover the axis from the symmetric part.
    let b = (r + r.transpose()) * 0.5 - Matrix3::identity() * cos;
    let k = (0..3)
        .max_by(|&i, &j| b[(i, i)].total_cmp(&b[(j, j)]))
        .unwrap();
    let mut axis: Vector3<f64> = b.column(k).into();
    axis /= axis.norm();
    if axis.dot(&vee) < 0.0 {
        axis = -axis;
    }
    Ok(axis * theta)
}
