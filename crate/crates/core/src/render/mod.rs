//! Software splat rasterizer: projection, tiled front-to-back compositing of
//! colour and language features with shared blending weights, a brute-force
//! reference renderer, and the analytic backward pass.

mod backward;
mod oracle;
mod project;
mod raster;

pub use backward::{rasterize_backward, rasterize_backward_with, RenderGradients, RenderUpstream};
pub use oracle::{brute_force_render, brute_force_render_with, render_with_decisions};
pub use project::{project_gaussian, project_scene, ProjectedGaussian};
pub use raster::{rasterize, rasterize_traced, rasterize_with, PixelDecisions};

/// Constants shared by the tiled renderer, the reference renderer and the
/// backward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderSettings {
    /// Tile edge in pixels.
    pub tile_size: usize,
    /// Camera-frame depth at or below which a primitive is culled.
    pub near: f64,
    /// Isotropic low-pass added to every screen-space covariance (pixels²).
    pub low_pass: f64,
    /// Upper clamp on effective opacity.
    pub max_alpha: f64,
    /// Per-pixel traversal stops once transmittance falls below this.
    pub min_transmittance: f64,
    /// Support cut-off, in units of the Mahalanobis radius.
    pub support_sigma: f64,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings {
            tile_size: 16,
            near: 0.01,
            low_pass: 0.3,
            max_alpha: 0.999,
            min_transmittance: 1e-8,
            support_sigma: 3.0,
        }
    }
}

impl RenderSettings {
    pub(crate) fn max_mahalanobis_sq(&self) -> f64 {
        self.support_sigma * self.support_sigma
    }
}

/// Rendered colour, language feature, expected depth and accumulated alpha.
/// Buffers are row-major; colour is interleaved RGB, feature is interleaved
/// per pixel with `k` channels.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderTarget {
    pub width: usize,
    pub height: usize,
    pub k: usize,
    pub color: Vec<f64>,
    pub feature: Vec<f64>,
    pub depth: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl RenderTarget {
    pub fn zeros(width: usize, height: usize, k: usize) -> Self {
        let n = width * height;
        RenderTarget {
            width,
            height,
            k,
            color: vec![0.0; n * 3],
            feature: vec![0.0; n * k],
            depth: vec![0.0; n],
            alpha: vec![0.0; n],
        }
    }

    pub fn pixel_color(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.color[i], self.color[i + 1], self.color[i + 2]]
    }

    pub fn pixel_feature(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.k;
        &self.feature[i..i + self.k]
    }

    /// Expected depth divided by accumulated alpha (zero where nothing was hit).
    pub fn normalized_depth(&self) -> Vec<f64> {
        self.depth
            .iter()
            .zip(&self.alpha)
            .map(|(d, a)| if *a > 1e-12 { d / a } else { 0.0 })
            .collect()
    }

    /// Largest absolute difference per buffer: (color, feature, depth, alpha).
    pub fn max_abs_diff(&self, other: &RenderTarget) -> [f64; 4] {
        fn diff(a: &[f64], b: &[f64]) -> f64 {
            assert_eq!(a.len(), b.len(), "buffer size mismatch");
            a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        }
        [
            diff(&self.color, &other.color),
            diff(&self.feature, &other.feature),
            diff(&self.depth, &other.depth),
            diff(&self.alpha, &other.alpha),
        ]
    }

    pub fn to_image(&self) -> crate::image::RgbImage {
        crate::image::RgbImage::from_raw(self.width, self.height, self.color.clone())
            .expect("render target colour buffer has image shape")
    }

    pub fn feature_map(&self) -> crate::image::FeatureMap {
        crate::image::FeatureMap::from_raw(self.width, self.height, self.k, self.feature.clone())
            .expect("render target feature buffer has map shape")
    }
}
