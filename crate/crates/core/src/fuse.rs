//! Confidence-weighted fusion of incoming primitives with the existing
//! primitives that share their voxel.
//!
//! Centres are merged by a confidence-weighted mean. Attribute latents are
//! merged by averaging the neighbours' latents with the same weights and
//! feeding `[own, averaged]` through a small two-layer MLP. Absorbed
//! neighbours are removed and the survivor carries the summed confidence.

use nalgebra::Vector3;
use rand::Rng;

use crate::error::{Error, Result};
use crate::gaussian::{GaussianPrimitive, GaussianScene};
use crate::net::WeightContainer;

pub type VoxelKey = (i64, i64, i64);

/// Section name of the fusion MLP inside a weight container.
pub const FUSION_SECTION: &str = "fusion_mlp";

/// Integer cell containing `position`: `floor(position / voxel_size)`.
pub fn voxel_key(position: &Vector3<f64>, voxel_size: f64) -> VoxelKey {
    (
        (position.x / voxel_size).floor() as i64,
        (position.y / voxel_size).floor() as i64,
        (position.z / voxel_size).floor() as i64,
    )
}

/// Existing primitives found around an incoming one.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionNeighborhood {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
    pub positions: Vec<Vector3<f64>>,
    pub features: Vec<Vec<f64>>,
}

impl FusionNeighborhood {
    pub fn empty() -> Self {
        FusionNeighborhood {
            indices: Vec::new(),
            weights: Vec::new(),
            positions: Vec::new(),
            features: Vec::new(),
        }
    }

    pub fn gather(scene: &GaussianScene, indices: Vec<usize>) -> Self {
        let prims = scene.primitives();
        FusionNeighborhood {
            weights: indices.iter().map(|&i| prims[i].confidence).collect(),
            positions: indices.iter().map(|&i| prims[i].mu).collect(),
            features: indices.iter().map(|&i| prims[i].latent()).collect(),
            indices,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Σ cᵢ gᵢ / Σ cᵢ, or `None` for an empty neighbourhood.
    pub fn pooled_feature(&self) -> Option<Vec<f64>> {
        let first = self.features.first()?;
        let mut acc = vec![0.0; first.len()];
        for (g, c) in self.features.iter().zip(&self.weights) {
            for (a, v) in acc.iter_mut().zip(g) {
                *a += c * v;
            }
        }
        let total = self.total_weight();
        acc.iter_mut().for_each(|a| *a /= total);
        Some(acc)
    }
}

/// Two dense layers with a rectifier in between: `W2 · max(0, W1 x + b1) + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionMlp {
    /// Feature width F; the input is `2F` wide.
    pub width: usize,
    pub hidden: usize,
    /// Row-major `hidden × 2F`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// Row-major `F × hidden`.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl FusionMlp {
    pub fn new(width: usize, hidden: usize, w1: Vec<f64>, b1: Vec<f64>, w2: Vec<f64>, b2: Vec<f64>) -> Result<Self> {
        if w1.len() != hidden * 2 * width || b1.len() != hidden || w2.len() != width * hidden || b2.len() != width {
            return Err(Error::invalid(format!(
                "fusion MLP shapes do not match width {width}, hidden {hidden}"
            )));
        }
        Ok(FusionMlp {
            width,
            hidden,
            w1,
            b1,
            w2,
            b2,
        })
    }

    /// Weights that return the first F inputs unchanged. Uses a hidden layer
    /// of 2F so that `max(0, x) − max(0, −x)` reproduces negative inputs
    /// exactly.
    pub fn identity(width: usize) -> Self {
        let hidden = 2 * width;
        let mut w1 = vec![0.0; hidden * 2 * width];
        let mut w2 = vec![0.0; width * hidden];
        for i in 0..width {
            w1[i * 2 * width + i] = 1.0;
            w1[(width + i) * 2 * width + i] = -1.0;
            w2[i * hidden + i] = 1.0;
            w2[i * hidden + width + i] = -1.0;
        }
        FusionMlp {
            width,
            hidden,
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: vec![0.0; width],
        }
    }

    /// Uniform(±1/√fan_in) initialization with hidden width F.
    pub fn random(width: usize, rng: &mut impl Rng) -> Self {
        let hidden = width;
        let b1_bound = 1.0 / ((2 * width) as f64).sqrt();
        let b2_bound = 1.0 / (hidden as f64).sqrt();
        let mut draw = |n: usize, b: f64| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-b..b) as f32 as f64).collect() };
        let w1 = draw(hidden * 2 * width, b1_bound);
        let b1 = draw(hidden, b1_bound);
        let w2 = draw(width * hidden, b2_bound);
        let b2 = draw(width, b2_bound);
        FusionMlp {
            width,
            hidden,
            w1,
            b1,
            w2,
            b2,
        }
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let n_in = 2 * self.width;
        if input.len() != n_in {
            return Err(Error::invalid(format!(
                "fusion MLP expects {n_in} inputs, got {}",
                input.len()
            )));
        }
        let hidden: Vec<f64> = (0..self.hidden)
            .map(|h| {
                let row = &self.w1[h * n_in..(h + 1) * n_in];
                let z = row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + self.b1[h];
                z.max(0.0)
            })
            .collect();
        Ok((0..self.width)
            .map(|o| {
                let row = &self.w2[o * self.hidden..(o + 1) * self.hidden];
                row.iter().zip(&hidden).map(|(w, x)| w * x).sum::<f64>() + self.b2[o]
            })
            .collect())
    }

    pub fn from_container(weights: &WeightContainer) -> Result<Self> {
        let get = |name: &str| weights.get(&format!("{FUSION_SECTION}.{name}"));
        let w1 = get("w1")?;
        let w2 = get("w2")?;
        if w1.shape.len() != 2 || w2.shape.len() != 2 || w1.shape[1] % 2 != 0 {
            return Err(Error::invalid("fusion MLP weights have unexpected rank"));
        }
        let (hidden, width) = (w1.shape[0], w1.shape[1] / 2);
        let to64 = |v: &[f32]| v.iter().map(|x| *x as f64).collect::<Vec<_>>();
        FusionMlp::new(
            width,
            hidden,
            to64(&w1.data),
            to64(&get("b1")?.data),
            to64(&w2.data),
            to64(&get("b2")?.data),
        )
    }

    pub fn to_container(&self, weights: &mut WeightContainer) {
        let to32 = |v: &[f64]| v.iter().map(|x| *x as f32).collect::<Vec<_>>();
        let n = |s: &str| format!("{FUSION_SECTION}.{s}");
        weights.insert(&n("w1"), vec![self.hidden, 2 * self.width], to32(&self.w1));
        weights.insert(&n("b1"), vec![self.hidden], to32(&self.b1));
        weights.insert(&n("w2"), vec![self.width, self.hidden], to32(&self.w2));
        weights.insert(&n("b2"), vec![self.width], to32(&self.b2));
    }
}

/// Confidence-weighted centre: `(c x + Σ cᵢ xᵢ) / (c + Σ cᵢ)`.
///
/// Evaluated as `x + Σ cᵢ (xᵢ − x) / (c + Σ cᵢ)`, which is the same quantity
/// but returns `x` bit-for-bit when every neighbour sits exactly at `x`.
pub fn fuse_center(x: &Vector3<f64>, c: f64, nbrs: &FusionNeighborhood) -> Vector3<f64> {
    if nbrs.is_empty() {
        return *x;
    }
    let total = c + nbrs.total_weight();
    let mut delta = Vector3::zeros();
    for (p, w) in nbrs.positions.iter().zip(&nbrs.weights) {
        delta += (p - x) * *w;
    }
    x + delta / total
}

/// `mlp([g, g̃])` with `g̃` the confidence-weighted neighbour mean. An empty
/// neighbourhood bypasses the MLP and returns `g` unchanged.
pub fn fuse_features(g: &[f64], nbrs: &FusionNeighborhood, mlp: &FusionMlp) -> Result<Vec<f64>> {
    if g.len() != mlp.width {
        return Err(Error::invalid(format!(
            "feature width {} does not match fusion MLP width {}",
            g.len(),
            mlp.width
        )));
    }
    let Some(pooled) = nbrs.pooled_feature() else {
        return Ok(g.to_vec());
    };
    if pooled.len() != g.len() {
        return Err(Error::invalid(
            "neighbour feature width differs from the incoming feature",
        ));
    }
    let mut input = Vec::with_capacity(2 * g.len());
    input.extend_from_slice(g);
    input.extend_from_slice(&pooled);
    mlp.forward(&input)
}

/// Outcome of integrating one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FusionReport {
    /// Incoming primitives that absorbed at least one neighbour.
    pub merges: usize,
    /// Existing primitives removed by absorption.
    pub absorbed: usize,
    /// Incoming primitives appended unchanged.
    pub appended: usize,
}

/// Fuses `incoming` into `scene`. Each incoming primitive is matched only
/// against primitives that were in the scene before this call; a neighbour
/// is absorbed by the first incoming primitive that finds it.
pub fn integrate_frame(
    scene: &mut GaussianScene,
    incoming: Vec<GaussianPrimitive>,
    mlp: &FusionMlp,
) -> Result<FusionReport> {
    let k = scene.k();
    if mlp.width != GaussianPrimitive::latent_width(k) {
        return Err(Error::invalid(format!(
            "fusion MLP width {} does not match latent width {} for K = {k}",
            mlp.width,
            GaussianPrimitive::latent_width(k)
        )));
    }
    for p in &incoming {
        p.validate(k)?;
    }
    let existing = scene.len();
    let mut claimed = vec![false; existing];
    let mut report = FusionReport::default();
    let mut outgoing = Vec::with_capacity(incoming.len());
    let mut removed = Vec::new();

    for mut p in incoming {
        let key = voxel_key(&p.mu, scene.voxel_size());
        let idx: Vec<usize> = scene
            .bucket(&key)
            .iter()
            .copied()
            .filter(|&i| i < existing && !claimed[i])
            .collect();
        if idx.is_empty() {
            report.appended += 1;
            outgoing.push(p);
            continue;
        }
        let nbrs = FusionNeighborhood::gather(scene, idx);
        let fused_latent = fuse_features(&p.latent(), &nbrs, mlp)?;
        let own_rot = p.rot;
        p.mu = fuse_center(&p.mu, p.confidence, &nbrs);
        p.set_latent(&fused_latent, own_rot)?;
        p.confidence += nbrs.total_weight();
        for &i in &nbrs.indices {
            claimed[i] = true;
            removed.push(i);
        }
        report.merges += 1;
        report.absorbed += nbrs.indices.len();
        outgoing.push(p);
    }

    removed.sort_unstable_by(|a, b| b.cmp(a));
    for i in removed {
        scene.swap_remove(i);
    }
    for p in outgoing {
        scene.push_unchecked(p);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Quat;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn nb(points: &[([f64; 3], f64)]) -> FusionNeighborhood {
        FusionNeighborhood {
            indices: (0..points.len()).collect(),
            weights: points.iter().map(|p| p.1).collect(),
            positions: points.iter().map(|p| Vector3::from(p.0)).collect(),
            features: vec![],
        }
    }

    #[test]
    fn voxel_keys() {
        assert_eq!(voxel_key(&Vector3::new(0.01, 0.01, 0.01), 0.05), (0, 0, 0));
        assert_eq!(voxel_key(&Vector3::new(-0.01, 0.0, 0.06), 0.05), (-1, 0, 1));
    }

    #[test]
    fn center_examples() {
        let x = Vector3::zeros();
        assert_eq!(
            fuse_center(&x, 1.0, &nb(&[([1.0, 0.0, 0.0], 1.0)])),
            Vector3::new(0.5, 0.0, 0.0)
        );
        assert_eq!(
            fuse_center(&x, 3.0, &nb(&[([4.0, 0.0, 0.0], 1.0)])),
            Vector3::new(1.0, 0.0, 0.0)
        );
        let y = Vector3::new(0.3, -0.2, 7.0);
        assert_eq!(fuse_center(&y, 2.0, &FusionNeighborhood::empty()), y);
    }

    #[test]
    fn pooled_feature_example() {
        let mut n = nb(&[([0.0; 3], 1.0), ([0.0; 3], 3.0)]);
        n.features = vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0]];
        assert_eq!(n.pooled_feature().unwrap(), vec![0.25, 0.75, 0.0, 0.0]);
    }

    #[test]
    fn identity_mlp_passes_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mlp = FusionMlp::identity(5);
        let g: Vec<f64> = (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let mut n = nb(&[([0.0; 3], 2.0)]);
        n.features = vec![(0..5).map(|_| rng.gen_range(-3.0..3.0)).collect()];
        assert_eq!(fuse_features(&g, &n, &mlp).unwrap(), g);
    }

    #[test]
    fn empty_neighbourhood_bypasses_mlp() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mlp = FusionMlp::random(4, &mut rng);
        let g = vec![0.1, -0.2, 0.3, 0.4];
        assert_eq!(fuse_features(&g, &FusionNeighborhood::empty(), &mlp).unwrap(), g);
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let mlp = FusionMlp::identity(4);
        assert!(fuse_features(&[0.0; 3], &FusionNeighborhood::empty(), &mlp).is_err());
        assert!(mlp.forward(&[0.0; 7]).is_err());
    }

    fn prim(mu: [f64; 3], k: usize) -> GaussianPrimitive {
        let mut p =
            GaussianPrimitive::isotropic(Vector3::from(mu), 0.01, 0.5, Vector3::new(0.2, 0.4, 0.6), vec![0.1; k]);
        p.rot = Quat::new(0.8, 0.6, 0.0, 0.0);
        p.confidence = 1.5;
        p
    }

    #[test]
    fn empty_voxel_appends() {
        let k = 2;
        let mut scene = GaussianScene::new(k, 0.05).unwrap();
        scene.push(prim([0.01, 0.01, 0.01], k)).unwrap();
        let mlp = FusionMlp::identity(GaussianPrimitive::latent_width(k));
        let r = integrate_frame(&mut scene, vec![prim([0.51, 0.01, 0.01], k)], &mlp).unwrap();
        assert_eq!(scene.len(), 2);
        assert_eq!(r.merges, 0);
        assert_eq!(r.appended, 1);
        scene.check_index().unwrap();
    }

    #[test]
    fn identical_neighbour_is_a_fixed_point() {
        let k = 3;
        let p = prim([0.02, 0.03, 0.04], k);
        let mut scene = GaussianScene::from_primitives(k, 0.05, vec![p.clone()]).unwrap();
        let mlp = FusionMlp::identity(GaussianPrimitive::latent_width(k));
        let r = integrate_frame(&mut scene, vec![p.clone()], &mlp).unwrap();
        assert_eq!(r.merges, 1);
        assert_eq!(scene.len(), 1);
        let q = &scene.primitives()[0];
        assert_eq!(q.mu, p.mu);
        assert_eq!(q.confidence, 2.0 * p.confidence);
        assert_eq!(q.lang, p.lang);
        assert_eq!(q.color, p.color);
        assert_eq!(q.opacity, p.opacity);
        scene.check_index().unwrap();
    }

    #[test]
    fn incoming_primitives_do_not_fuse_with_each_other() {
        let k = 1;
        let mut scene = GaussianScene::new(k, 0.05).unwrap();
        let mlp = FusionMlp::identity(GaussianPrimitive::latent_width(k));
        let r = integrate_frame(&mut scene, vec![prim([0.01; 3], k), prim([0.02; 3], k)], &mlp).unwrap();
        assert_eq!(r.appended, 2);
        assert_eq!(scene.len(), 2);
    }
}
