use nalgebra::Vector2;
use rayon::prelude::*;

use super::project::{project_with, ProjectedGaussian};
use super::{RenderSettings, RenderTarget};
use crate::gaussian::GaussianScene;
use crate::geometry::{CameraPose, Intrinsics};

/// Per-pixel record of which primitives were composited, front to back, and
/// whether each one's effective opacity hit the upper clamp. Used to evaluate
/// the renderer with its discrete choices held fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelDecisions {
    pub width: usize,
    pub height: usize,
    pub lists: Vec<Vec<(u32, bool)>>,
}

pub(crate) struct TileGrid {
    pub tiles_x: usize,
    pub size: usize,
    /// Primitive indices per tile, sorted by (depth, index).
    pub lists: Vec<Vec<u32>>,
}

impl TileGrid {
    pub fn bin(projected: &[Option<ProjectedGaussian>], intr: &Intrinsics, settings: &RenderSettings) -> TileGrid {
        let size = settings.tile_size.max(1);
        let tiles_x = intr.width.div_ceil(size);
        let tiles_y = intr.height.div_ceil(size);
        let mut order: Vec<u32> = projected
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.as_ref().map(|_| i as u32))
            .collect();
        order.sort_by(|a, b| {
            let da = projected[*a as usize].as_ref().unwrap().depth;
            let db = projected[*b as usize].as_ref().unwrap().depth;
            da.total_cmp(&db).then(a.cmp(b))
        });
        let mut lists = vec![Vec::new(); tiles_x * tiles_y];
        for idx in order {
            let p = projected[idx as usize].as_ref().unwrap();
            for ty in p.y_range.0 / size..=p.y_range.1 / size {
                for tx in p.x_range.0 / size..=p.x_range.1 / size {
                    lists[ty * tiles_x + tx].push(idx);
                }
            }
        }
        TileGrid { tiles_x, size, lists }
    }

    /// Pixel bounds `[x0, x1) × [y0, y1)` of a tile.
    pub fn bounds(&self, tile: usize, intr: &Intrinsics) -> (usize, usize, usize, usize) {
        let (tx, ty) = (tile % self.tiles_x, tile / self.tiles_x);
        let x0 = tx * self.size;
        let y0 = ty * self.size;
        (
            x0,
            (x0 + self.size).min(intr.width),
            y0,
            (y0 + self.size).min(intr.height),
        )
    }
}

/// One composited primitive at one pixel.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Contribution {
    pub idx: u32,
    pub alpha: f64,
    /// exp(-m/2) before scaling by opacity.
    pub falloff: f64,
    /// Transmittance in front of this primitive.
    pub transmittance: f64,
    pub clamped: bool,
    /// Pixel minus projected centre.
    pub offset: Vector2<f64>,
}

/// Front-to-back traversal of one pixel. Returns the final transmittance.
pub(crate) fn walk_pixel(
    px: usize,
    py: usize,
    list: &[u32],
    projected: &[Option<ProjectedGaussian>],
    settings: &RenderSettings,
    out: &mut Vec<Contribution>,
) -> f64 {
    out.clear();
    let pix = Vector2::new(px as f64, py as f64);
    let max_m = settings.max_mahalanobis_sq();
    let mut t = 1.0;
    for &idx in list {
        let p = projected[idx as usize].as_ref().unwrap();
        let d = pix - p.mean2d;
        let m = (d.transpose() * p.conic * d)[(0, 0)];
        if !(m <= max_m) {
            continue;
        }
        let falloff = (-0.5 * m).exp();
        let raw = p.base_opacity * falloff;
        let (alpha, clamped) = if raw > settings.max_alpha {
            (settings.max_alpha, true)
        } else if raw < 0.0 {
            (0.0, true)
        } else {
            (raw, false)
        };
        out.push(Contribution {
            idx,
            alpha,
            falloff,
            transmittance: t,
            clamped,
            offset: d,
        });
        t *= 1.0 - alpha;
        if t < settings.min_transmittance {
            break;
        }
    }
    t
}

struct TileOutput {
    color: Vec<f64>,
    feature: Vec<f64>,
    depth: Vec<f64>,
    alpha: Vec<f64>,
    decisions: Vec<Vec<(u32, bool)>>,
}

fn render_tile(
    scene: &GaussianScene,
    projected: &[Option<ProjectedGaussian>],
    grid: &TileGrid,
    tile: usize,
    intr: &Intrinsics,
    settings: &RenderSettings,
    trace: bool,
) -> TileOutput {
    let k = scene.k();
    let (x0, x1, y0, y1) = grid.bounds(tile, intr);
    let n = (x1 - x0) * (y1 - y0);
    let mut out = TileOutput {
        color: vec![0.0; n * 3],
        feature: vec![0.0; n * k],
        depth: vec![0.0; n],
        alpha: vec![0.0; n],
        decisions: Vec::new(),
    };
    let list = &grid.lists[tile];
    let prims = scene.primitives();
    let mut contribs = Vec::new();
    let mut local = 0;
    for py in y0..y1 {
        for px in x0..x1 {
            let t_final = walk_pixel(px, py, list, projected, settings, &mut contribs);
            let color = &mut out.color[local * 3..local * 3 + 3];
            let feature = &mut out.feature[local * k..(local + 1) * k];
            let mut depth = 0.0;
            for c in &contribs {
                let g = &prims[c.idx as usize];
                let w = c.alpha * c.transmittance;
                for (acc, v) in color.iter_mut().zip(g.color.iter()) {
                    *acc += w * v;
                }
                for (f, l) in feature.iter_mut().zip(&g.lang) {
                    *f += w * l;
                }
                depth += w * projected[c.idx as usize].as_ref().unwrap().depth;
            }
            out.depth[local] = depth;
            out.alpha[local] = 1.0 - t_final;
            if trace {
                out.decisions
                    .push(contribs.iter().map(|c| (c.idx, c.clamped)).collect());
            }
            local += 1;
        }
    }
    out
}

fn rasterize_impl(
    scene: &GaussianScene,
    cam: &CameraPose,
    intr: &Intrinsics,
    settings: &RenderSettings,
    trace: bool,
) -> (RenderTarget, Option<PixelDecisions>) {
    let k = scene.k();
    let w2c = cam.rotation.transpose();
    let projected: Vec<Option<ProjectedGaussian>> = scene
        .primitives()
        .iter()
        .map(|g| project_with(g, &w2c, &cam.translation, intr, settings))
        .collect();
    let grid = TileGrid::bin(&projected, intr, settings);
    let tiles: Vec<TileOutput> = (0..grid.lists.len())
        .into_par_iter()
        .map(|t| render_tile(scene, &projected, &grid, t, intr, settings, trace))
        .collect();

    let mut target = RenderTarget::zeros(intr.width, intr.height, k);
    let mut decisions = trace.then(|| vec![Vec::new(); intr.pixel_count()]);
    for (tile, out) in tiles.into_iter().enumerate() {
        let (x0, x1, y0, y1) = grid.bounds(tile, intr);
        let mut dec_iter = out.decisions.into_iter();
        let mut local = 0;
        for py in y0..y1 {
            for px in x0..x1 {
                let pix = py * intr.width + px;
                target.color[pix * 3..pix * 3 + 3].copy_from_slice(&out.color[local * 3..local * 3 + 3]);
                target.feature[pix * k..(pix + 1) * k].copy_from_slice(&out.feature[local * k..(local + 1) * k]);
                target.depth[pix] = out.depth[local];
                target.alpha[pix] = out.alpha[local];
                if let Some(d) = decisions.as_mut() {
                    d[pix] = dec_iter.next().unwrap();
                }
                local += 1;
            }
        }
    }
    let decisions = decisions.map(|lists| PixelDecisions {
        width: intr.width,
        height: intr.height,
        lists,
    });
    (target, decisions)
}

/// Tiled front-to-back compositing of colour, language feature and depth with
/// the same per-pixel blending weights.
pub fn rasterize(scene: &GaussianScene, cam: &CameraPose, intr: &Intrinsics) -> RenderTarget {
    rasterize_with(scene, cam, intr, &RenderSettings::default())
}

pub fn rasterize_with(
    scene: &GaussianScene,
    cam: &CameraPose,
    intr: &Intrinsics,
    settings: &RenderSettings,
) -> RenderTarget {
    rasterize_impl(scene, cam, intr, settings, false).0
}

/// Like [`rasterize_with`], also returning the per-pixel compositing choices.
pub fn rasterize_traced(
    scene: &GaussianScene,
    cam: &CameraPose,
    intr: &Intrinsics,
    settings: &RenderSettings,
) -> (RenderTarget, PixelDecisions) {
    let (t, d) = rasterize_impl(scene, cam, intr, settings, true);
    (t, d.unwrap())
}
