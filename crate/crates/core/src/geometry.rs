//! Rotations, rigid camera poses and pinhole intrinsics.
//!
//! Quaternions are stored scalar-first `(w, x, y, z)`. Poses map camera-frame
//! points into the world frame, which for a stream is the frame of its first
//! camera.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Allowed deviation of a quaternion norm from one.
pub const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quat {
    pub const IDENTITY: Quat = Quat {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quat { w, x, y, z }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Quat::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(self, o: Quat) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn scaled(self, s: f64) -> Quat {
        Quat::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    /// Normalizes and resolves the double cover so that `w >= 0`.
    pub fn normalized(self) -> Result<Quat> {
        let n = self.norm();
        if !(n > 1e-12) || !n.is_finite() {
            return Err(Error::invalid(format!("cannot normalize quaternion {self:?}")));
        }
        if (n - 1.0).abs() <= 2.0 * f64::EPSILON {
            // already unit up to rounding; rescaling would drift by an ulp
            return Ok(self.canonical());
        }
        Ok(self.scaled(1.0 / n).canonical())
    }

    pub fn canonical(self) -> Quat {
        if self.w < 0.0 {
            self.scaled(-1.0)
        } else {
            self
        }
    }

    pub fn is_unit(self) -> bool {
        (self.norm() - 1.0).abs() <= UNIT_TOLERANCE
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64) -> Quat {
        let a = axis.normalize();
        let (s, c) = (0.5 * angle).sin_cos();
        Quat::new(c, a.x * s, a.y * s, a.z * s)
    }
}

/// Rotation matrix of a unit quaternion.
pub fn quat_to_rotmat(q: Quat) -> Result<Matrix3<f64>> {
    if !q.is_unit() {
        return Err(Error::invalid(format!(
            "quaternion norm {} is not 1 within {UNIT_TOLERANCE}",
            q.norm()
        )));
    }
    Ok(rotmat_unchecked(q))
}

/// The usual unit-quaternion rotation formula, applied without any norm check.
pub(crate) fn rotmat_unchecked(q: Quat) -> Matrix3<f64> {
    let Quat { w, x, y, z } = q;
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Inverse of [`quat_to_rotmat`], returning the `w >= 0` representative.
pub fn rotmat_to_quat(r: &Matrix3<f64>) -> Quat {
    // Shepperd's method: branch on the largest diagonal combination.
    let trace = r[(0, 0)] + r[(1, 1)] + r[(2, 2)];
    let q = if trace > 0.0 {
        let s = (trace + 1.0).sqrt() * 2.0;
        Quat::new(
            0.25 * s,
            (r[(2, 1)] - r[(1, 2)]) / s,
            (r[(0, 2)] - r[(2, 0)]) / s,
            (r[(1, 0)] - r[(0, 1)]) / s,
        )
    } else if r[(0, 0)] > r[(1, 1)] && r[(0, 0)] > r[(2, 2)] {
        let s = (1.0 + r[(0, 0)] - r[(1, 1)] - r[(2, 2)]).sqrt() * 2.0;
        Quat::new(
            (r[(2, 1)] - r[(1, 2)]) / s,
            0.25 * s,
            (r[(0, 1)] + r[(1, 0)]) / s,
            (r[(0, 2)] + r[(2, 0)]) / s,
        )
    } else if r[(1, 1)] > r[(2, 2)] {
        let s = (1.0 + r[(1, 1)] - r[(0, 0)] - r[(2, 2)]).sqrt() * 2.0;
        Quat::new(
            (r[(0, 2)] - r[(2, 0)]) / s,
            (r[(0, 1)] + r[(1, 0)]) / s,
            0.25 * s,
            (r[(1, 2)] + r[(2, 1)]) / s,
        )
    } else {
        let s = (1.0 + r[(2, 2)] - r[(0, 0)] - r[(1, 1)]).sqrt() * 2.0;
        Quat::new(
            (r[(1, 0)] - r[(0, 1)]) / s,
            (r[(0, 2)] + r[(2, 0)]) / s,
            (r[(1, 2)] + r[(2, 1)]) / s,
            0.25 * s,
        )
    };
    let n = q.norm();
    q.scaled(1.0 / n).canonical()
}

/// Σ = R S Sᵀ Rᵀ with S = diag(scale).
pub fn covariance_from_rs(rot: Quat, scale: Vector3<f64>) -> Result<Matrix3<f64>> {
    if scale.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::invalid(format!("scale components must be > 0, got {scale:?}")));
    }
    let r = quat_to_rotmat(rot)?;
    let m = r * Matrix3::from_diagonal(&scale);
    Ok(m * m.transpose())
}

/// Rigid transform taking camera-frame points to world-frame points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for CameraPose {
    fn default() -> Self {
        CameraPose::identity()
    }
}

impl CameraPose {
    pub fn identity() -> Self {
        CameraPose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose, checking orthonormality and handedness to 1e-6.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let pose = CameraPose { rotation, translation };
        pose.validate()?;
        Ok(pose)
    }

    pub fn from_quat(q: Quat, translation: Vector3<f64>) -> Result<Self> {
        Ok(CameraPose {
            rotation: quat_to_rotmat(q)?,
            translation,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let err = (self.rotation.transpose() * self.rotation - Matrix3::identity())
            .abs()
            .max();
        let det = self.rotation.determinant();
        if !(err <= 1e-6) || !((det - 1.0).abs() <= 1e-6) || !self.translation.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid(format!(
                "pose rotation is not a proper rotation (orthonormality error {err:e}, det {det})"
            )));
        }
        Ok(())
    }

    pub fn quat(&self) -> Quat {
        rotmat_to_quat(&self.rotation)
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &CameraPose) -> CameraPose {
        CameraPose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> CameraPose {
        let rt = self.rotation.transpose();
        CameraPose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn transform_points(&self, pts: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        pts.iter().map(|p| self.transform_point(p)).collect()
    }

    /// Camera centred at `eye`, looking at `target`, with image `y` pointing
    /// roughly along `-up` (OpenCV convention: x right, y down, z forward).
    pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> CameraPose {
        let z = (target - eye).normalize();
        let x = z.cross(&up).normalize();
        let y = z.cross(&x);
        CameraPose {
            rotation: Matrix3::from_columns(&[x, y, z]),
            translation: eye,
        }
    }
}

pub fn se3_compose(a: &CameraPose, b: &CameraPose) -> CameraPose {
    a.compose(b)
}

pub fn se3_inverse(a: &CameraPose) -> CameraPose {
    a.inverse()
}

pub fn transform_points(pose: &CameraPose, pts: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    pose.transform_points(pts)
}

/// Pinhole intrinsics. Pixel `(u, v)` is sampled at integer coordinates, so a
/// point on the optical axis lands exactly on pixel `(cx, cy)`.
#[derive(Debug, Clone, Copy, PartialEq)]
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
        let intr = Intrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    /// Square pixels, principal point at the image centre.
    pub fn centered(focal: f64, width: usize, height: usize) -> Self {
        Intrinsics {
            fx: focal,
            fy: focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.width > 0
            && self.height > 0
            && self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid intrinsics {self:?}")))
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_quat(rng: &mut impl Rng) -> Quat {
        loop {
            let q = Quat::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            if q.norm() > 0.1 {
                return q.normalized().unwrap();
            }
        }
    }

    fn random_pose(rng: &mut impl Rng) -> CameraPose {
        let t = Vector3::new(
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
        );
        CameraPose::from_quat(random_quat(rng), t).unwrap()
    }

    #[test]
    fn identity_quaternion_is_identity_matrix() {
        assert_eq!(quat_to_rotmat(Quat::IDENTITY).unwrap(), Matrix3::identity());
    }

    #[test]
    fn z_half_turn() {
        let r = quat_to_rotmat(Quat::new(0.0, 0.0, 0.0, 1.0)).unwrap();
        assert_eq!(r, Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0)));
    }

    #[test]
    fn non_unit_quaternion_rejected() {
        assert!(matches!(
            quat_to_rotmat(Quat::new(1.0, 0.1, 0.0, 0.0)),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn random_rotations_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let m = quat_to_rotmat(random_quat(&mut rng)).unwrap();
            assert!((m.transpose() * m - Matrix3::identity()).abs().max() < 1e-12);
            assert!((m.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn quaternion_round_trip_up_to_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let q = random_quat(&mut rng);
            let back = rotmat_to_quat(&quat_to_rotmat(q).unwrap());
            let d = q.dot(back).abs();
            assert!((d - 1.0).abs() < 1e-9, "{q:?} vs {back:?}");
            let sign = q.dot(back).signum();
            for (a, b) in q.to_array().iter().zip(back.to_array()) {
                assert!((a - sign * b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn covariance_examples() {
        let s = covariance_from_rs(Quat::IDENTITY, Vector3::new(1.0, 2.0, 3.0)).unwrap();
        assert_eq!(s, Matrix3::from_diagonal(&Vector3::new(1.0, 4.0, 9.0)));

        let q = Quat::from_axis_angle(Vector3::z(), std::f64::consts::FRAC_PI_2);
        let s = covariance_from_rs(q, Vector3::new(1.0, 2.0, 1.0)).unwrap();
        let expected = Matrix3::from_diagonal(&Vector3::new(4.0, 1.0, 1.0));
        assert!((s - expected).abs().max() < 1e-12);

        assert!(covariance_from_rs(Quat::IDENTITY, Vector3::new(1.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn covariance_eigenvalues_are_squared_scales() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let scale = Vector3::new(
                rng.gen_range(0.01..2.0),
                rng.gen_range(0.01..2.0),
                rng.gen_range(0.01..2.0),
            );
            let sigma = covariance_from_rs(random_quat(&mut rng), scale).unwrap();
            assert!((sigma - sigma.transpose()).abs().max() < 1e-15);
            let mut eig: Vec<f64> = sigma.symmetric_eigenvalues().iter().copied().collect();
            eig.sort_by(f64::total_cmp);
            let mut sq: Vec<f64> = scale.iter().map(|s| s * s).collect();
            sq.sort_by(f64::total_cmp);
            let min_sq = sq[0];
            for (e, s) in eig.iter().zip(&sq) {
                assert!((e - s).abs() < 1e-9);
                assert!(*e >= min_sq - 1e-9);
            }
        }
    }

    #[test]
    fn compose_and_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random_pose(&mut rng);
        assert_eq!(CameraPose::identity().compose(&p), p);
        let back = p.inverse().inverse();
        assert!((back.rotation - p.rotation).abs().max() < 1e-12);
        assert!((back.translation - p.translation).abs().max() < 1e-12);
        let id = p.compose(&p.inverse());
        assert!((id.rotation - Matrix3::identity()).abs().max() < 1e-9);
        assert!(id.translation.abs().max() < 1e-9);
    }

    #[test]
    fn chained_relative_poses_match_matrix_product() {
        // Oracle: 4x4 homogeneous matrix product.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rel: Vec<CameraPose> = (0..10).map(|_| random_pose(&mut rng)).collect();
        let mut chained = CameraPose::identity();
        let mut h = nalgebra::Matrix4::<f64>::identity();
        for p in &rel {
            chained = chained.compose(p);
            let mut m = nalgebra::Matrix4::identity();
            m.fixed_view_mut::<3, 3>(0, 0).copy_from(&p.rotation);
            m.fixed_view_mut::<3, 1>(0, 3).copy_from(&p.translation);
            h *= m;
        }
        assert!((chained.rotation - h.fixed_view::<3, 3>(0, 0)).abs().max() < 1e-9);
        assert!((chained.translation - h.fixed_view::<3, 1>(0, 3)).abs().max() < 1e-9);
    }

    #[test]
    fn intrinsics_validation() {
        assert!(Intrinsics::new(100.0, 100.0, 64.0, 64.0, 128, 128).is_ok());
        assert!(Intrinsics::new(0.0, 100.0, 64.0, 64.0, 128, 128).is_err());
        assert!(Intrinsics::new(100.0, 100.0, 128.0, 64.0, 128, 128).is_err());
    }

    proptest::proptest! {
        #[test]
        fn transforms_preserve_distances_and_compose(
            seed in 0u64..10_000,
            a in proptest::array::uniform3(-5.0f64..5.0),
            b in proptest::array::uniform3(-5.0f64..5.0),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p1 = random_pose(&mut rng);
            let p2 = random_pose(&mut rng);
            let (x, y) = (Vector3::from(a), Vector3::from(b));
            let d0 = (x - y).norm();
            let d1 = (p1.transform_point(&x) - p1.transform_point(&y)).norm();
            proptest::prop_assert!((d0 - d1).abs() < 1e-9);
            let lhs = p1.compose(&p2).transform_point(&x);
            let rhs = p1.transform_point(&p2.transform_point(&x));
            proptest::prop_assert!((lhs - rhs).abs().max() < 1e-9);
        }
    }
}
