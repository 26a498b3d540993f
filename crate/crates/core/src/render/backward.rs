//! Analytic gradients of the compositing chain with respect to every
//! primitive parameter.
//!
//! Per pixel, the forward list is replayed and walked back to front to get
//! dL/dα′ for each contribution. Those flow into opacity, the screen-space
//! conic and the projected centre; a second per-primitive pass pushes the
//! screen-space partials through the projection into centre, rotation and
//! scale. Tiles run in parallel and their partial sums are reduced in tile
//! order, so the result does not depend on scheduling.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};
use rayon::prelude::*;

use super::project::{project_with, projection_parts, ProjectedGaussian};
use super::raster::{walk_pixel, Contribution, TileGrid};
use super::RenderSettings;
use crate::error::{Error, Result};
use crate::gaussian::GaussianScene;
use crate::geometry::{rotmat_unchecked, CameraPose, Intrinsics, Quat};

/// Partials of a scalar loss with respect to the rendered buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderUpstream {
    pub width: usize,
    pub height: usize,
    pub k: usize,
    pub color: Vec<f64>,
    pub feature: Vec<f64>,
    pub depth: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl RenderUpstream {
    pub fn zeros(width: usize, height: usize, k: usize) -> Self {
        let n = width * height;
        RenderUpstream {
            width,
            height,
            k,
            color: vec![0.0; n * 3],
            feature: vec![0.0; n * k],
            depth: vec![0.0; n],
            alpha: vec![0.0; n],
        }
    }

    fn check(&self, intr: &Intrinsics, k: usize) -> Result<()> {
        let n = intr.pixel_count();
        if self.width != intr.width
            || self.height != intr.height
            || self.k != k
            || self.color.len() != n * 3
            || self.feature.len() != n * k
            || self.depth.len() != n
            || self.alpha.len() != n
        {
            return Err(Error::invalid(
                "upstream gradient buffers do not match the render target",
            ));
        }
        Ok(())
    }
}

/// Per-primitive gradients. `rot` is with respect to the stored (unit)
/// quaternion `(w, x, y, z)`; `lang` is flattened with stride `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderGradients {
    pub k: usize,
    pub mu: Vec<Vector3<f64>>,
    pub rot: Vec<[f64; 4]>,
    pub scale: Vec<Vector3<f64>>,
    pub opacity: Vec<f64>,
    pub color: Vec<Vector3<f64>>,
    pub lang: Vec<f64>,
}

impl RenderGradients {
    pub fn zeros(n: usize, k: usize) -> Self {
        RenderGradients {
            k,
            mu: vec![Vector3::zeros(); n],
            rot: vec![[0.0; 4]; n],
            scale: vec![Vector3::zeros(); n],
            opacity: vec![0.0; n],
            color: vec![Vector3::zeros(); n],
            lang: vec![0.0; n * k],
        }
    }

    pub fn len(&self) -> usize {
        self.opacity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.opacity.is_empty()
    }

    pub fn lang_of(&self, i: usize) -> &[f64] {
        &self.lang[i * self.k..(i + 1) * self.k]
    }

    /// Adds `other` scaled by `s`.
    pub fn add_scaled(&mut self, other: &RenderGradients, s: f64) {
        assert_eq!(self.len(), other.len());
        for i in 0..self.len() {
            self.mu[i] += other.mu[i] * s;
            self.scale[i] += other.scale[i] * s;
            self.color[i] += other.color[i] * s;
            self.opacity[i] += other.opacity[i] * s;
            for c in 0..4 {
                self.rot[i][c] += other.rot[i][c] * s;
            }
        }
        for (a, b) in self.lang.iter_mut().zip(&other.lang) {
            *a += b * s;
        }
    }

    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.len() {
            m = m
                .max(self.mu[i].abs().max())
                .max(self.scale[i].abs().max())
                .max(self.color[i].abs().max())
                .max(self.opacity[i].abs());
            for v in self.rot[i] {
                m = m.max(v.abs());
            }
        }
        self.lang.iter().fold(m, |m, v| m.max(v.abs()))
    }
}

/// Screen-space partials accumulated for one primitive.
#[derive(Debug, Clone)]
struct ScreenPartial {
    mean2d: Vector2<f64>,
    /// Full-matrix gradient with respect to the conic Σ₂⁻¹.
    conic: Matrix2<f64>,
    opacity: f64,
    color: Vector3<f64>,
    depth: f64,
}

impl ScreenPartial {
    fn zero() -> Self {
        ScreenPartial {
            mean2d: Vector2::zeros(),
            conic: Matrix2::zeros(),
            opacity: 0.0,
            color: Vector3::zeros(),
            depth: 0.0,
        }
    }
}

struct TileGrads {
    /// Primitive indices touched by this tile, in tile-list order.
    touched: Vec<u32>,
    partials: Vec<ScreenPartial>,
    lang: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn backward_tile(
    scene: &GaussianScene,
    projected: &[Option<ProjectedGaussian>],
    grid: &TileGrid,
    tile: usize,
    intr: &Intrinsics,
    settings: &RenderSettings,
    up: &RenderUpstream,
) -> TileGrads {
    let k = scene.k();
    let prims = scene.primitives();
    let list = &grid.lists[tile];
    let mut slot_of = std::collections::HashMap::with_capacity(list.len());
    for (s, &idx) in list.iter().enumerate() {
        slot_of.insert(idx, s);
    }
    let mut partials = vec![ScreenPartial::zero(); list.len()];
    let mut lang = vec![0.0; list.len() * k];
    let mut contribs: Vec<Contribution> = Vec::new();
    let mut behind_lang = vec![0.0; k];

    let (x0, x1, y0, y1) = grid.bounds(tile, intr);
    for py in y0..y1 {
        for px in x0..x1 {
            let pix = py * intr.width + px;
            let t_final = walk_pixel(px, py, list, projected, settings, &mut contribs);
            if contribs.is_empty() {
                continue;
            }
            let g_color = Vector3::new(up.color[pix * 3], up.color[pix * 3 + 1], up.color[pix * 3 + 2]);
            let g_feat = &up.feature[pix * k..(pix + 1) * k];
            let g_depth = up.depth[pix];
            let g_alpha = up.alpha[pix];

            let mut behind_color = Vector3::zeros();
            let mut behind_depth = 0.0;
            behind_lang.iter_mut().for_each(|v| *v = 0.0);
            for c in contribs.iter().rev() {
                let slot = slot_of[&c.idx];
                let g = &prims[c.idx as usize];
                let p = projected[c.idx as usize].as_ref().unwrap();
                let w = c.alpha * c.transmittance;

                let part = &mut partials[slot];
                part.color += g_color * w;
                part.depth += g_depth * w;
                let lang_slot = &mut lang[slot * k..(slot + 1) * k];
                for (dst, gf) in lang_slot.iter_mut().zip(g_feat) {
                    *dst += gf * w;
                }

                // dL/dα′ = T_i (v_i − B_i)·g_v summed over channels, plus the
                // alpha-buffer term T_final / (1 − α′_i).
                let mut d_alpha =
                    c.transmittance * ((g.color - behind_color).dot(&g_color) + (p.depth - behind_depth) * g_depth);
                let mut lang_term = 0.0;
                for ((l, b), gf) in g.lang.iter().zip(&behind_lang).zip(g_feat) {
                    lang_term += (l - b) * gf;
                }
                d_alpha += c.transmittance * lang_term;
                d_alpha += g_alpha * t_final / (1.0 - c.alpha);

                behind_color = g.color * c.alpha + behind_color * (1.0 - c.alpha);
                behind_depth = p.depth * c.alpha + behind_depth * (1.0 - c.alpha);
                for (b, l) in behind_lang.iter_mut().zip(&g.lang) {
                    *b = l * c.alpha + *b * (1.0 - c.alpha);
                }

                if c.clamped {
                    continue;
                }
                part.opacity += d_alpha * c.falloff;
                let d_falloff = d_alpha * g.opacity;
                let d_m = -0.5 * c.falloff * d_falloff;
                // m = dᵀ A d with d = pixel − mean.
                part.mean2d += (p.conic * c.offset) * (-2.0 * d_m);
                part.conic += (c.offset * c.offset.transpose()) * d_m;
            }
        }
    }
    TileGrads {
        touched: list.clone(),
        partials,
        lang,
    }
}

/// Derivatives of the rotation matrix entries with respect to (w, x, y, z).
fn rotmat_partials(q: Quat) -> [Matrix3<f64>; 4] {
    let Quat { w, x, y, z } = q;
    let two = 2.0;
    [
        Matrix3::new(0.0, -two * z, two * y, two * z, 0.0, -two * x, -two * y, two * x, 0.0),
        Matrix3::new(
            0.0,
            two * y,
            two * z,
            two * y,
            -4.0 * x,
            -two * w,
            two * z,
            two * w,
            -4.0 * x,
        ),
        Matrix3::new(
            -4.0 * y,
            two * x,
            two * w,
            two * x,
            0.0,
            two * z,
            -two * w,
            two * z,
            -4.0 * y,
        ),
        Matrix3::new(
            -4.0 * z,
            -two * w,
            two * x,
            two * w,
            -4.0 * z,
            two * y,
            two * x,
            two * y,
            0.0,
        ),
    ]
}

/// Analytic gradients of a loss with the given per-pixel partials, through
/// compositing and projection, for every primitive. Culled primitives get
/// exactly zero.
pub fn rasterize_backward(
    scene: &GaussianScene,
    cam: &CameraPose,
    intr: &Intrinsics,
    upstream: &RenderUpstream,
) -> Result<RenderGradients> {
    rasterize_backward_with(scene, cam, intr, upstream, &RenderSettings::default())
}

pub fn rasterize_backward_with(
    scene: &GaussianScene,
    cam: &CameraPose,
    intr: &Intrinsics,
    upstream: &RenderUpstream,
    settings: &RenderSettings,
) -> Result<RenderGradients> {
    let k = scene.k();
    upstream.check(intr, k)?;
    let n = scene.len();
    let prims = scene.primitives();
    let w2c = cam.rotation.transpose();
    let projected: Vec<Option<ProjectedGaussian>> = prims
        .iter()
        .map(|g| project_with(g, &w2c, &cam.translation, intr, settings))
        .collect();
    let grid = TileGrid::bin(&projected, intr, settings);
    let tiles: Vec<TileGrads> = (0..grid.lists.len())
        .into_par_iter()
        .map(|t| backward_tile(scene, &projected, &grid, t, intr, settings, upstream))
        .collect();

    let mut screen = vec![ScreenPartial::zero(); n];
    let mut grads = RenderGradients::zeros(n, k);
    for tile in &tiles {
        for (slot, &idx) in tile.touched.iter().enumerate() {
            let i = idx as usize;
            let src = &tile.partials[slot];
            let dst = &mut screen[i];
            dst.mean2d += src.mean2d;
            dst.conic += src.conic;
            dst.opacity += src.opacity;
            dst.color += src.color;
            dst.depth += src.depth;
            let l = &tile.lang[slot * k..(slot + 1) * k];
            for (a, b) in grads.lang[i * k..(i + 1) * k].iter_mut().zip(l) {
                *a += b;
            }
        }
    }

    for i in 0..n {
        if projected[i].is_none() {
            continue;
        }
        let sp = &screen[i];
        let g = &prims[i];
        grads.opacity[i] = sp.opacity;
        grads.color[i] = sp.color;

        let parts = projection_parts(g, &w2c, &cam.translation, intr, settings);
        let proj = projected[i].as_ref().unwrap();
        let conic = proj.conic;
        // A = Σ₂⁻¹  ⇒  dL/dΣ₂ = −A (dL/dA) A.
        let d_cov2d = -(conic * sp.conic * conic);
        let j = parts.jacobian;
        let v = parts.cov_cam;
        // Σ₂ = J V Jᵀ + λI.
        let d_j: Matrix2x3<f64> = (d_cov2d + d_cov2d.transpose()) * j * v;
        let d_v: Matrix3<f64> = j.transpose() * d_cov2d * j;
        let d_cov3 = cam.rotation * d_v * w2c;

        let t = parts.cam_point;
        let (fx, fy) = (intr.fx, intr.fy);
        let tz2 = t.z * t.z;
        let tz3 = tz2 * t.z;
        let mut d_t = j.transpose() * sp.mean2d;
        d_t.z += sp.depth;
        d_t.x += -fx / tz2 * d_j[(0, 2)];
        d_t.y += -fy / tz2 * d_j[(1, 2)];
        d_t.z += -fx / tz2 * d_j[(0, 0)] + 2.0 * fx * t.x / tz3 * d_j[(0, 2)] - fy / tz2 * d_j[(1, 1)]
            + 2.0 * fy * t.y / tz3 * d_j[(1, 2)];
        grads.mu[i] = w2c.transpose() * d_t;

        // Σ₃ = M Mᵀ with M = R diag(s).
        let qn = g.rot.norm();
        let q_hat = g.rot.scaled(1.0 / qn);
        let r = rotmat_unchecked(q_hat);
        let m = r * Matrix3::from_diagonal(&g.scale);
        let d_m = (d_cov3 + d_cov3.transpose()) * m;
        let mut d_r = Matrix3::zeros();
        for col in 0..3 {
            let mut s_grad = 0.0;
            for row in 0..3 {
                s_grad += d_m[(row, col)] * r[(row, col)];
                d_r[(row, col)] = d_m[(row, col)] * g.scale[col];
            }
            grads.scale[i][col] = s_grad;
        }
        let dq_hat: Vec<f64> = rotmat_partials(q_hat)
            .iter()
            .map(|p| p.component_mul(&d_r).sum())
            .collect();
        let q_arr = q_hat.to_array();
        let proj_dot: f64 = dq_hat.iter().zip(q_arr).map(|(a, b)| a * b).sum();
        for c in 0..4 {
            grads.rot[i][c] = (dq_hat[c] - q_arr[c] * proj_dot) / qn;
        }
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::GaussianPrimitive;
    use crate::render::rasterize;
    use nalgebra::Vector3;

    fn single(opacity: f64) -> GaussianScene {
        let mut g = GaussianPrimitive::isotropic(
            Vector3::new(0.05, -0.03, 2.0),
            0.12,
            opacity,
            Vector3::new(0.3, 0.5, 0.7),
            vec![0.2],
        );
        g.scale = Vector3::new(0.12, 0.08, 0.1);
        GaussianScene::from_primitives(1, 0.05, vec![g]).unwrap()
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let intr = Intrinsics::centered(20.0, 16, 16);
        let g = rasterize_backward(
            &single(0.6),
            &CameraPose::identity(),
            &intr,
            &RenderUpstream::zeros(16, 16, 1),
        )
        .unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn colour_gradient_is_total_blending_weight() {
        let intr = Intrinsics::centered(20.0, 16, 16);
        let scene = single(0.6);
        let mut up = RenderUpstream::zeros(16, 16, 1);
        up.color.iter_mut().step_by(3).for_each(|u| *u = 1.0);
        let g = rasterize_backward(&scene, &CameraPose::identity(), &intr, &up).unwrap();
        let alpha_sum: f64 = rasterize(&scene, &CameraPose::identity(), &intr).alpha.iter().sum();
        assert!((g.color[0][0] - alpha_sum).abs() < 1e-12);
        assert_eq!(g.color[0][1], 0.0);
    }

    #[test]
    fn opacity_gradient_matches_central_difference() {
        let intr = Intrinsics::centered(20.0, 16, 16);
        let mut up = RenderUpstream::zeros(16, 16, 1);
        up.alpha
            .iter_mut()
            .enumerate()
            .for_each(|(i, u)| *u = 1.0 + (i % 7) as f64 * 0.1);
        let loss = |o: f64| -> f64 {
            let t = rasterize(&single(o), &CameraPose::identity(), &intr);
            t.alpha.iter().zip(&up.alpha).map(|(a, u)| a * u).sum()
        };
        let h = 1e-6;
        let fd = (loss(0.6 + h) - loss(0.6 - h)) / (2.0 * h);
        let g = rasterize_backward(&single(0.6), &CameraPose::identity(), &intr, &up).unwrap();
        assert!(
            (g.opacity[0] - fd).abs() < 1e-6 * fd.abs().max(1.0),
            "{} vs {fd}",
            g.opacity[0]
        );
    }

    #[test]
    fn upstream_shape_is_checked() {
        let intr = Intrinsics::centered(20.0, 16, 16);
        assert!(rasterize_backward(
            &single(0.6),
            &CameraPose::identity(),
            &intr,
            &RenderUpstream::zeros(8, 16, 1)
        )
        .is_err());
    }
}
