//! Gaussian primitives and the accumulated scene with its voxel index.

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::fuse::{voxel_key, VoxelKey};
use crate::geometry::Quat;

/// Language feature width used throughout unless a scene says otherwise.
pub const DEFAULT_LANG_DIM: usize = 16;

/// Default fusion voxel edge, in normalized scene units.
pub const DEFAULT_VOXEL_SIZE: f64 = 0.05;

/// One splat. Colour is the degree-0 (DC) band only.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrimitive {
    pub mu: Vector3<f64>,
    pub rot: Quat,
    pub scale: Vector3<f64>,
    pub opacity: f64,
    pub color: Vector3<f64>,
    pub lang: Vec<f64>,
    pub confidence: f64,
}

impl GaussianPrimitive {
    /// A unit-confidence primitive with the given centre, isotropic scale,
    /// colour and language feature.
    pub fn isotropic(mu: Vector3<f64>, scale: f64, opacity: f64, color: Vector3<f64>, lang: Vec<f64>) -> Self {
        GaussianPrimitive {
            mu,
            rot: Quat::IDENTITY,
            scale: Vector3::repeat(scale),
            opacity,
            color,
            lang,
            confidence: 1.0,
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        let bad = |what: &str| Err(Error::invalid(format!("primitive {what}: {self:?}")));
        if !self.rot.is_unit() {
            return bad("rotation is not a unit quaternion");
        }
        if !self.scale.iter().all(|s| *s > 0.0 && s.is_finite()) {
            return bad("scale must be positive");
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return bad("opacity outside [0, 1]");
        }
        if !self.color.iter().all(|c| (0.0..=1.0).contains(c)) {
            return bad("colour outside [0, 1]");
        }
        if self.lang.len() != k {
            return Err(Error::invalid(format!(
                "language feature has {} components, scene uses {k}",
                self.lang.len()
            )));
        }
        if !(self.confidence > 0.0 && self.confidence.is_finite()) {
            return bad("confidence must be positive");
        }
        if !self.mu.iter().chain(self.lang.iter()).all(|v| v.is_finite()) {
            return bad("non-finite centre or feature");
        }
        Ok(())
    }

    /// Width of the attribute latent used by fusion: scale, rot, opacity,
    /// colour, lang.
    pub fn latent_width(k: usize) -> usize {
        3 + 4 + 1 + 3 + k
    }

    pub fn latent(&self) -> Vec<f64> {
        let mut g = Vec::with_capacity(Self::latent_width(self.lang.len()));
        g.extend(self.scale.iter());
        g.extend(self.rot.to_array());
        g.push(self.opacity);
        g.extend(self.color.iter());
        g.extend(self.lang.iter());
        g
    }

    /// Decodes a fused latent back into attributes, projecting every field
    /// onto its valid range. `fallback_rot` is used if the rotation block
    /// collapsed to zero.
    pub fn set_latent(&mut self, g: &[f64], fallback_rot: Quat) -> Result<()> {
        let k = self.lang.len();
        if g.len() != Self::latent_width(k) {
            return Err(Error::invalid(format!(
                "latent width {} does not match {}",
                g.len(),
                Self::latent_width(k)
            )));
        }
        for (s, v) in self.scale.iter_mut().zip(g) {
            *s = v.max(1e-6);
        }
        self.rot = Quat::new(g[3], g[4], g[5], g[6]).normalized().unwrap_or(fallback_rot);
        self.opacity = g[7].clamp(0.0, 1.0);
        for i in 0..3 {
            self.color[i] = g[8 + i].clamp(0.0, 1.0);
        }
        self.lang.copy_from_slice(&g[11..]);
        Ok(())
    }
}

/// The growing global set of primitives plus a voxel-hash index over their
/// centres. Every primitive index lives in exactly one bucket.
#[derive(Debug, Clone)]
pub struct GaussianScene {
    primitives: Vec<GaussianPrimitive>,
    voxel_index: HashMap<VoxelKey, Vec<usize>>,
    voxel_size: f64,
    k: usize,
}

impl GaussianScene {
    pub fn new(k: usize, voxel_size: f64) -> Result<Self> {
        if !(voxel_size > 0.0) || !voxel_size.is_finite() {
            return Err(Error::invalid(format!("voxel size must be > 0, got {voxel_size}")));
        }
        Ok(GaussianScene {
            primitives: Vec::new(),
            voxel_index: HashMap::new(),
            voxel_size,
            k,
        })
    }

    pub fn from_primitives(k: usize, voxel_size: f64, primitives: Vec<GaussianPrimitive>) -> Result<Self> {
        let mut scene = GaussianScene::new(k, voxel_size)?;
        for p in primitives {
            scene.push(p)?;
        }
        Ok(scene)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn primitives(&self) -> &[GaussianPrimitive] {
        &self.primitives
    }

    pub fn get(&self, i: usize) -> Option<&GaussianPrimitive> {
        self.primitives.get(i)
    }

    pub fn into_primitives(self) -> Vec<GaussianPrimitive> {
        self.primitives
    }

    pub fn push(&mut self, p: GaussianPrimitive) -> Result<()> {
        p.validate(self.k)?;
        self.push_unchecked(p);
        Ok(())
    }

    pub(crate) fn push_unchecked(&mut self, p: GaussianPrimitive) {
        let idx = self.primitives.len();
        let key = voxel_key(&p.mu, self.voxel_size);
        self.primitives.push(p);
        self.voxel_index.entry(key).or_default().push(idx);
    }

    /// Indices stored in the bucket of `key`, in insertion order.
    pub fn bucket(&self, key: &VoxelKey) -> &[usize] {
        self.voxel_index.get(key).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn voxel_count(&self) -> usize {
        self.voxel_index.len()
    }

    /// Removes primitive `idx` by moving the last primitive into its slot.
    pub(crate) fn swap_remove(&mut self, idx: usize) -> GaussianPrimitive {
        let last = self.primitives.len() - 1;
        let key = voxel_key(&self.primitives[idx].mu, self.voxel_size);
        remove_from_bucket(&mut self.voxel_index, key, idx);
        if idx != last {
            let last_key = voxel_key(&self.primitives[last].mu, self.voxel_size);
            let bucket = self.voxel_index.get_mut(&last_key).expect("voxel index out of sync");
            let slot = bucket.iter().position(|&i| i == last).expect("voxel index out of sync");
            bucket[slot] = idx;
        }
        self.primitives.swap_remove(idx)
    }

    pub fn reindex(&mut self) {
        self.voxel_index.clear();
        for (i, p) in self.primitives.iter().enumerate() {
            self.voxel_index
                .entry(voxel_key(&p.mu, self.voxel_size))
                .or_default()
                .push(i);
        }
    }

    /// Checks the index invariant: each primitive appears exactly once, in
    /// the bucket matching its centre.
    pub fn check_index(&self) -> Result<()> {
        let total: usize = self.voxel_index.values().map(Vec::len).sum();
        if total != self.primitives.len() {
            return Err(Error::invalid(format!(
                "voxel index holds {total} entries for {} primitives",
                self.primitives.len()
            )));
        }
        let mut seen = vec![false; self.primitives.len()];
        for (key, bucket) in &self.voxel_index {
            for &i in bucket {
                if i >= seen.len() || seen[i] {
                    return Err(Error::invalid(format!("index {i} duplicated or out of range")));
                }
                seen[i] = true;
                if voxel_key(&self.primitives[i].mu, self.voxel_size) != *key {
                    return Err(Error::invalid(format!("primitive {i} filed under wrong voxel")));
                }
            }
        }
        Ok(())
    }

    pub fn total_confidence(&self) -> f64 {
        self.primitives.iter().map(|p| p.confidence).sum()
    }
}

fn remove_from_bucket(index: &mut HashMap<VoxelKey, Vec<usize>>, key: VoxelKey, idx: usize) {
    let bucket = index.get_mut(&key).expect("voxel index out of sync");
    let slot = bucket.iter().position(|&i| i == idx).expect("voxel index out of sync");
    bucket.remove(slot);
    if bucket.is_empty() {
        index.remove(&key);
    }
}
