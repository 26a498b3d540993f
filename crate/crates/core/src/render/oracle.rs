//! Reference renderers. These evaluate the compositing sum directly per pixel
//! with a single global depth sort, no tiling and no transmittance cut-off.

use nalgebra::{Matrix2, Vector2};

use super::project::{project_with, projection_parts};
use super::{PixelDecisions, RenderSettings, RenderTarget};
use crate::gaussian::GaussianScene;
use crate::geometry::{CameraPose, Intrinsics};

pub fn brute_force_render(scene: &GaussianScene, cam: &CameraPose, intr: &Intrinsics) -> RenderTarget {
    brute_force_render_with(scene, cam, intr, &RenderSettings::default())
}

pub fn brute_force_render_with(
    scene: &GaussianScene,
    cam: &CameraPose,
    intr: &Intrinsics,
    settings: &RenderSettings,
) -> RenderTarget {
    let k = scene.k();
    let prims = scene.primitives();
    let w2c = cam.rotation.transpose();
    let mut visible: Vec<(usize, super::ProjectedGaussian)> = prims
        .iter()
        .enumerate()
        .filter_map(|(i, g)| project_with(g, &w2c, &cam.translation, intr, settings).map(|p| (i, p)))
        .collect();
    visible.sort_by(|a, b| a.1.depth.total_cmp(&b.1.depth).then(a.0.cmp(&b.0)));

    let max_m = settings.support_sigma * settings.support_sigma;
    let mut out = RenderTarget::zeros(intr.width, intr.height, k);
    for y in 0..intr.height {
        for x in 0..intr.width {
            let pix = y * intr.width + x;
            let mut transmittance = 1.0;
            for (i, p) in &visible {
                let dx = x as f64 - p.mean2d.x;
                let dy = y as f64 - p.mean2d.y;
                let m = p.conic[(0, 0)] * dx * dx + 2.0 * p.conic[(0, 1)] * dx * dy + p.conic[(1, 1)] * dy * dy;
                if m > max_m {
                    continue;
                }
                let a = (p.base_opacity * (-0.5 * m).exp()).clamp(0.0, settings.max_alpha);
                let w = a * transmittance;
                let g = &prims[*i];
                for c in 0..3 {
                    out.color[pix * 3 + c] += w * g.color[c];
                }
                for c in 0..k {
                    out.feature[pix * k + c] += w * g.lang[c];
                }
                out.depth[pix] += w * p.depth;
                transmittance *= 1.0 - a;
            }
            out.alpha[pix] = 1.0 - transmittance;
        }
    }
    out
}

/// Evaluates the compositing sum using a fixed per-pixel contributor list and
/// fixed clamp states, so the result is a smooth function of the primitive
/// parameters. Primitives listed for a pixel are composited even if they
/// would now fall outside their support; clamped entries use the clamp value.
pub fn render_with_decisions(
    scene: &GaussianScene,
    cam: &CameraPose,
    intr: &Intrinsics,
    settings: &RenderSettings,
    decisions: &PixelDecisions,
) -> RenderTarget {
    let k = scene.k();
    let prims = scene.primitives();
    let w2c = cam.rotation.transpose();
    let parts: Vec<_> = prims
        .iter()
        .map(|g| {
            let p = projection_parts(g, &w2c, &cam.translation, intr, settings);
            let inv = p.cov2d.try_inverse().unwrap_or_else(Matrix2::zeros);
            (p.mean2d, inv, p.cam_point.z)
        })
        .collect();
    let mut out = RenderTarget::zeros(intr.width, intr.height, k);
    for (pix, list) in decisions.lists.iter().enumerate() {
        let (x, y) = (pix % intr.width, pix / intr.width);
        let mut transmittance = 1.0;
        for &(idx, clamped) in list {
            let (mean, conic, z) = &parts[idx as usize];
            let d = Vector2::new(x as f64, y as f64) - mean;
            let m = (d.transpose() * conic * d)[(0, 0)];
            let g = &prims[idx as usize];
            let a = if clamped {
                if g.opacity > 0.0 {
                    settings.max_alpha
                } else {
                    0.0
                }
            } else {
                g.opacity * (-0.5 * m).exp()
            };
            let w = a * transmittance;
            for c in 0..3 {
                out.color[pix * 3 + c] += w * g.color[c];
            }
            for c in 0..k {
                out.feature[pix * k + c] += w * g.lang[c];
            }
            out.depth[pix] += w * z;
            transmittance *= 1.0 - a;
        }
        out.alpha[pix] = 1.0 - transmittance;
    }
    out
}
