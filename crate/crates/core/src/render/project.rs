use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};

use super::RenderSettings;
use crate::gaussian::{GaussianPrimitive, GaussianScene};
use crate::geometry::{rotmat_unchecked, CameraPose, Intrinsics};

/// Screen-space footprint of one primitive.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedGaussian {
    /// Projected centre in pixels.
    pub mean2d: Vector2<f64>,
    /// Screen covariance including the low-pass term (pixels²).
    pub cov2d: Matrix2<f64>,
    /// Inverse of `cov2d`.
    pub conic: Matrix2<f64>,
    /// Camera-frame z of the centre; also the sort key.
    pub depth: f64,
    pub base_opacity: f64,
    /// Inclusive pixel bounds of the support ellipse, clipped to the viewport.
    pub x_range: (usize, usize),
    pub y_range: (usize, usize),
}

/// Intermediates of the projection that the backward pass reuses.
#[derive(Debug, Clone)]
pub(crate) struct ProjectionParts {
    pub cam_point: Vector3<f64>,
    pub jacobian: Matrix2x3<f64>,
    /// Camera-frame 3D covariance W Σ Wᵀ.
    pub cov_cam: Matrix3<f64>,
    pub mean2d: Vector2<f64>,
    pub cov2d: Matrix2<f64>,
}

/// Projection math without culling. The rotation is normalized here so that
/// perturbed (non-unit) quaternions still render.
pub(crate) fn projection_parts(
    g: &GaussianPrimitive,
    world_to_cam: &Matrix3<f64>,
    cam_center: &Vector3<f64>,
    intr: &Intrinsics,
    settings: &RenderSettings,
) -> ProjectionParts {
    let t = world_to_cam * (g.mu - cam_center);
    let (tx, ty, tz) = (t.x, t.y, t.z);
    let jacobian = Matrix2x3::new(
        intr.fx / tz,
        0.0,
        -intr.fx * tx / (tz * tz),
        0.0,
        intr.fy / tz,
        -intr.fy * ty / (tz * tz),
    );
    let n = g.rot.norm();
    let q = if n > 0.0 {
        g.rot.scaled(1.0 / n)
    } else {
        crate::geometry::Quat::IDENTITY
    };
    let m = rotmat_unchecked(q) * Matrix3::from_diagonal(&g.scale);
    let cov3 = m * m.transpose();
    let cov_cam = world_to_cam * cov3 * world_to_cam.transpose();
    let cov2d = jacobian * cov_cam * jacobian.transpose() + Matrix2::identity() * settings.low_pass;
    let mean2d = Vector2::new(intr.fx * tx / tz + intr.cx, intr.fy * ty / tz + intr.cy);
    ProjectionParts {
        cam_point: t,
        jacobian,
        cov_cam,
        mean2d,
        cov2d,
    }
}

pub(crate) fn project_with(
    g: &GaussianPrimitive,
    world_to_cam: &Matrix3<f64>,
    cam_center: &Vector3<f64>,
    intr: &Intrinsics,
    settings: &RenderSettings,
) -> Option<ProjectedGaussian> {
    let t = world_to_cam * (g.mu - cam_center);
    if !(t.z > settings.near) {
        return None;
    }
    let parts = projection_parts(g, world_to_cam, cam_center, intr, settings);
    let cov2d = parts.cov2d;
    let det = cov2d.determinant();
    if !(det > 0.0) || !det.is_finite() {
        return None;
    }
    let conic = Matrix2::new(cov2d[(1, 1)], -cov2d[(0, 1)], -cov2d[(1, 0)], cov2d[(0, 0)]) / det;
    // The support ellipse dᵀ Σ⁻¹ d <= r² has axis-aligned half-extents r·sqrt(Σii).
    let r = settings.support_sigma;
    let hx = r * cov2d[(0, 0)].sqrt();
    let hy = r * cov2d[(1, 1)].sqrt();
    let x_range = pixel_range(parts.mean2d.x - hx, parts.mean2d.x + hx, intr.width)?;
    let y_range = pixel_range(parts.mean2d.y - hy, parts.mean2d.y + hy, intr.height)?;
    Some(ProjectedGaussian {
        mean2d: parts.mean2d,
        cov2d,
        conic,
        depth: t.z,
        base_opacity: g.opacity,
        x_range,
        y_range,
    })
}

fn pixel_range(lo: f64, hi: f64, size: usize) -> Option<(usize, usize)> {
    if !(lo.is_finite() && hi.is_finite()) {
        return None;
    }
    let lo = lo.ceil().max(0.0);
    let hi = hi.floor().min(size as f64 - 1.0);
    if lo > hi {
        None
    } else {
        Some((lo as usize, hi as usize))
    }
}

/// Projects one primitive; `None` means culled (behind the near plane or with
/// a support ellipse that misses the viewport).
pub fn project_gaussian(g: &GaussianPrimitive, cam: &CameraPose, intr: &Intrinsics) -> Option<ProjectedGaussian> {
    let w = cam.rotation.transpose();
    project_with(g, &w, &cam.translation, intr, &RenderSettings::default())
}

pub fn project_scene(
    scene: &GaussianScene,
    cam: &CameraPose,
    intr: &Intrinsics,
    settings: &RenderSettings,
) -> Vec<Option<ProjectedGaussian>> {
    let w = cam.rotation.transpose();
    scene
        .primitives()
        .iter()
        .map(|g| project_with(g, &w, &cam.translation, intr, settings))
        .collect()
}
