//! Synthetic scenes with known cameras, colours and language labels. Every
//! fixture used by the tests and the `synth` command comes from here.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::eval::TextQuery;
use crate::gaussian::{GaussianPrimitive, GaussianScene, DEFAULT_VOXEL_SIZE};
use crate::geometry::{CameraPose, Intrinsics, Quat};
use crate::image::{FeatureMap, Mask, RgbImage};
use crate::io::features::write_features;
use crate::io::manifest::write_queries;
use crate::io::tum::{records_from_poses, write_tum};
use crate::io::{write_ogs, write_pgm, write_ppm, StreamConfig, StreamManifest};
use crate::render::{project_gaussian, rasterize};

/// Uniform random unit quaternion.
pub fn random_rotation(rng: &mut impl Rng) -> Quat {
    let (u1, u2, u3): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
    let tau = std::f64::consts::TAU;
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    Quat::new(
        a * (tau * u2).sin(),
        a * (tau * u2).cos(),
        b * (tau * u3).sin(),
        b * (tau * u3).cos(),
    )
    .canonical()
}

fn in_ball(rng: &mut impl Rng, radius: f64) -> Vector3<f64> {
    loop {
        let p = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        if p.norm_squared() <= 1.0 {
            return p * radius;
        }
    }
}

/// Randomly placed anisotropic blobs inside a ball of `radius` around the
/// origin, with random colours and unit-norm language features.
pub fn blob_scene(n: usize, k: usize, radius: f64, scale: (f64, f64), seed: u64) -> Result<GaussianScene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scene = GaussianScene::new(k, DEFAULT_VOXEL_SIZE)?;
    for _ in 0..n {
        let mut lang: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = lang.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        lang.iter_mut().for_each(|v| *v /= norm);
        scene.push(GaussianPrimitive {
            mu: in_ball(&mut rng, radius),
            rot: random_rotation(&mut rng),
            scale: Vector3::from_fn(|_, _| rng.gen_range(scale.0..scale.1)),
            opacity: rng.gen_range(0.6..0.95),
            color: Vector3::from_fn(|_, _| rng.gen_range(0.1..0.9)),
            lang,
            confidence: 1.0,
        })?;
    }
    Ok(scene)
}

/// Cameras on a horizontal arc of `radius` around the origin, all looking at
/// it, spanning `arc` radians in total.
pub fn orbit_poses(n: usize, radius: f64, arc: f64) -> Vec<CameraPose> {
    (0..n)
        .map(|i| {
            let a = if n > 1 {
                arc * (i as f64 / (n - 1) as f64 - 0.5)
            } else {
                0.0
            };
            let eye = Vector3::new(radius * a.sin(), -0.2 * radius, -radius * a.cos());
            CameraPose::look_at(eye, Vector3::zeros(), Vector3::new(0.0, -1.0, 0.0))
        })
        .collect()
}

/// Poses re-expressed in the first camera's frame, so pose 0 is the identity.
pub fn relative_to_first(poses: &[CameraPose]) -> Vec<CameraPose> {
    let Some(first) = poses.first() else {
        return Vec::new();
    };
    let inv = first.inverse();
    poses.iter().map(|p| inv.compose(p)).collect()
}

pub fn render_views(scene: &GaussianScene, poses: &[CameraPose], intr: &Intrinsics) -> Vec<RgbImage> {
    poses.iter().map(|p| rasterize(scene, p, intr).to_image()).collect()
}

/// The two-object segmentation scene: a reddish ball of Gaussians labelled
/// with feature `e0` and a bluish one labelled `e1`, side by side in front of
/// an identity camera.
pub struct TwoObjectScene {
    pub scene: GaussianScene,
    pub camera: CameraPose,
    pub intrinsics: Intrinsics,
    pub queries: Vec<TextQuery>,
    /// Primitive indices of each object, in query order.
    pub members: Vec<Vec<usize>>,
}

impl TwoObjectScene {
    pub fn new(k: usize, width: usize, height: usize) -> Result<Self> {
        assert!(k >= 2, "two orthogonal labels need k >= 2");
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut scene = GaussianScene::new(k, DEFAULT_VOXEL_SIZE)?;
        let mut members = vec![Vec::new(), Vec::new()];
        let objects = [(-0.45, [0.85, 0.25, 0.2]), (0.45, [0.2, 0.35, 0.85])];
        for (obj, (x, color)) in objects.iter().enumerate() {
            let mut lang = vec![0.0; k];
            lang[obj] = 1.0;
            for _ in 0..24 {
                members[obj].push(scene.len());
                scene.push(GaussianPrimitive {
                    mu: Vector3::new(*x, 0.0, 3.0) + in_ball(&mut rng, 0.15),
                    rot: random_rotation(&mut rng),
                    scale: Vector3::from_fn(|_, _| rng.gen_range(0.02..0.05)),
                    opacity: 0.8,
                    color: Vector3::from(*color),
                    lang: lang.clone(),
                    confidence: 1.0,
                })?;
            }
        }
        let queries = (0..2)
            .map(|i| {
                let mut e = vec![0.0; k];
                e[i] = 1.0;
                TextQuery::new(["red_object", "blue_object"][i], e)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TwoObjectScene {
            scene,
            camera: CameraPose::identity(),
            intrinsics: Intrinsics::centered(width as f64, width, height),
            queries,
            members,
        })
    }

    /// Ground-truth masks: the pixels inside the projected support ellipse of
    /// any member primitive.
    pub fn gt_masks(&self) -> Vec<Mask> {
        self.members
            .iter()
            .map(|m| support_mask(&self.scene, m, &self.camera, &self.intrinsics))
            .collect()
    }
}

/// Pixels covered by the projected support of the listed primitives.
pub fn support_mask(scene: &GaussianScene, members: &[usize], cam: &CameraPose, intr: &Intrinsics) -> Mask {
    let mut mask = Mask::new(intr.width, intr.height);
    let cutoff = crate::render::RenderSettings::default().support_sigma.powi(2);
    for &i in members {
        let g = &scene.primitives()[i];
        let Some(p) = project_gaussian(g, cam, intr) else {
            continue;
        };
        if g.opacity <= 0.0 {
            continue;
        }
        for y in p.y_range.0..=p.y_range.1 {
            for x in p.x_range.0..=p.x_range.1 {
                let d = nalgebra::Vector2::new(x as f64, y as f64) - p.mean2d;
                if (d.transpose() * p.conic * d)[(0, 0)] <= cutoff {
                    mask.set(x, y, true);
                }
            }
        }
    }
    mask
}

/// Target views of a frame-filling blob scene together with a random
/// initialization for direct optimization: `n_init` isotropic primitives
/// scattered through the same volume with random colours.
pub fn optimization_problem(
    n_init: usize,
    n_views: usize,
    size: usize,
    seed: u64,
) -> Result<(GaussianScene, Vec<crate::loss::View>)> {
    let gt = blob_scene(60, 0, 0.8, (0.08, 0.2), seed)?;
    let intr = Intrinsics::centered(90.0 * size as f64 / 64.0, size, size);
    let views = orbit_poses(n_views, 3.0, 1.0)
        .into_iter()
        .map(|camera| crate::loss::View {
            camera,
            intrinsics: intr,
            image: rasterize(&gt, &camera, &intr).to_image(),
            features: None,
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut init = GaussianScene::new(0, DEFAULT_VOXEL_SIZE)?;
    for _ in 0..n_init {
        let color = Vector3::from_fn(|_, _| rng.gen_range(0.0..1.0));
        init.push(GaussianPrimitive::isotropic(
            in_ball(&mut rng, 0.9),
            0.05,
            0.5,
            color,
            Vec::new(),
        ))?;
    }
    Ok((init, views))
}

/// A complete synthetic stream on disk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamFixtureOptions {
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub k: usize,
    pub blobs: usize,
    pub seed: u64,
}

impl Default for StreamFixtureOptions {
    fn default() -> Self {
        StreamFixtureOptions {
            frames: 8,
            width: 32,
            height: 32,
            k: crate::gaussian::DEFAULT_LANG_DIM,
            blobs: 120,
            seed: 0,
        }
    }
}

/// Paths written by [`write_stream_fixture`].
#[derive(Debug, Clone)]
pub struct StreamFixture {
    pub manifest: PathBuf,
    pub config: PathBuf,
    pub scene: PathBuf,
    pub trajectory: PathBuf,
    pub poses: Vec<CameraPose>,
    pub intrinsics: Intrinsics,
}

/// Writes frames (PPM), ground-truth feature maps, the ground-truth scene and
/// trajectory (relative to the first camera), a manifest and a config.
pub fn write_stream_fixture(dir: &Path, opts: &StreamFixtureOptions) -> Result<StreamFixture> {
    let io = |p: &Path, e| crate::error::Error::io(p, e);
    for sub in ["frames", "features"] {
        std::fs::create_dir_all(dir.join(sub)).map_err(|e| io(&dir.join(sub), e))?;
    }
    let scene = blob_scene(opts.blobs, opts.k, 0.6, (0.04, 0.12), opts.seed)?;
    let intr = Intrinsics::centered(opts.width as f64 * 1.2, opts.width, opts.height);
    let world = orbit_poses(opts.frames, 3.0, 0.5);
    let mut frames = Vec::new();
    let mut features = Vec::new();
    for (i, pose) in world.iter().enumerate() {
        let target = rasterize(&scene, pose, &intr);
        let f = PathBuf::from(format!("frames/{i:04}.ppm"));
        write_ppm(&dir.join(&f), &target.to_image())?;
        let g = PathBuf::from(format!("features/{i:04}.ogsf"));
        write_features(&dir.join(&g), &target.feature_map())?;
        frames.push(f);
        features.push(g);
    }
    let poses = relative_to_first(&world);
    let trajectory = dir.join("gt.tum");
    write_tum(&trajectory, &records_from_poses(&poses))?;
    let scene_path = dir.join("gt_scene.ogs");
    write_ogs(&scene_path, &scene)?;
    let mut manifest = StreamManifest::new(frames, intr);
    manifest.gt_trajectory = Some("gt.tum".into());
    manifest.gt_features = features;
    let manifest_path = dir.join("manifest.json");
    manifest.write(&manifest_path)?;
    let mut cfg = StreamConfig {
        width: Some(opts.width),
        height: Some(opts.height),
        seed: opts.seed,
        ..StreamConfig::default()
    };
    cfg.net.k = opts.k;
    let config = dir.join("stream.cfg");
    crate::io::write_file(&config, cfg.to_text().as_bytes())?;
    Ok(StreamFixture {
        manifest: manifest_path,
        config,
        scene: scene_path,
        trajectory,
        poses,
        intrinsics: intr,
    })
}

/// Paths written by [`write_segmentation_fixture`].
#[derive(Debug, Clone)]
pub struct SegmentationFixture {
    pub scene: PathBuf,
    pub queries: PathBuf,
    /// Ground-truth mask per query label, in label order.
    pub masks: Vec<(String, PathBuf)>,
}

/// Writes the two-object scene, its queries and ground-truth masks.
pub fn write_segmentation_fixture(dir: &Path, k: usize, width: usize, height: usize) -> Result<SegmentationFixture> {
    std::fs::create_dir_all(dir.join("gt_masks")).map_err(|e| crate::error::Error::io(dir, e))?;
    let two = TwoObjectScene::new(k, width, height)?;
    let scene = dir.join("two_objects.ogs");
    write_ogs(&scene, &two.scene)?;
    let queries = dir.join("queries.json");
    write_queries(&queries, &two.queries)?;
    let mut masks = Vec::new();
    for (q, m) in two.queries.iter().zip(two.gt_masks()) {
        let p = dir.join("gt_masks").join(format!("{}.pgm", q.label));
        write_pgm(&p, &m)?;
        masks.push((q.label.clone(), p));
    }
    Ok(SegmentationFixture { scene, queries, masks })
}

/// A constant feature map, handy for query tests.
pub fn uniform_features(width: usize, height: usize, f: &[f64]) -> FeatureMap {
    let mut m = FeatureMap::zeros(width, height, f.len());
    for px in m.data_mut().chunks_exact_mut(f.len().max(1)) {
        px.copy_from_slice(f);
    }
    m
}
