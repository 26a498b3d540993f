//! Acceptance suite: one line per criterion, `PASS` or `FAIL`, with the
//! measured quantity and wall time. Exits nonzero if any criterion fails.
//!
//! Run with `cargo test -p streamsplat --test acceptance`. A criterion number
//! (or several) may be passed after `--` to run a subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use streamsplat::cli::cmd_query;
use streamsplat::eval::{ate, miou_macc, psnr, rpe, umeyama_sim3, Sim3, Trajectory, DEFAULT_THRESHOLD};
use streamsplat::fuse::{fuse_center, integrate_frame, FusionMlp, FusionNeighborhood};
use streamsplat::image::{FeatureMap, RgbImage};
use streamsplat::io::features::feature_bytes;
use streamsplat::io::ogs::{ogs_bytes, parse_ogs};
use streamsplat::io::pnm::{parse_pgm, parse_ppm, pgm_bytes, ppm_bytes};
use streamsplat::io::read_pgm;
use streamsplat::io::tum::{parse_tum, records_from_poses, tum_string};
use streamsplat::loss::{
    finite_diff_check, lang_loss, loss_total, mse_loss, optimize_scene, LossWeights, OptimizeOptions, StageLosses,
    PARAM_GROUPS,
};
use streamsplat::net::{NetConfig, Network, WeightContainer};
use streamsplat::pipeline::Stream;
use streamsplat::render::{brute_force_render, rasterize};
use streamsplat::synth::{optimization_problem, random_rotation, write_segmentation_fixture, TwoObjectScene};
use streamsplat::{CameraPose, GaussianPrimitive, GaussianScene, Intrinsics};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// A scene in front of an identity camera with `n` random anisotropic
/// primitives, many of them partially outside the view.
fn random_scene(rng: &mut ChaCha8Rng, n: usize, k: usize) -> GaussianScene {
    let mut prims = Vec::with_capacity(n);
    for _ in 0..n {
        let z = rng.gen_range(1.5..5.0);
        prims.push(GaussianPrimitive {
            mu: Vector3::new(rng.gen_range(-0.7..0.7) * z, rng.gen_range(-0.7..0.7) * z, z),
            rot: random_rotation(rng),
            scale: Vector3::from_fn(|_, _| rng.gen_range(0.02..0.3)),
            opacity: rng.gen_range(0.05..0.99),
            color: Vector3::from_fn(|_, _| rng.gen_range(0.0..1.0)),
            lang: (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            confidence: rng.gen_range(0.5..3.0),
        });
    }
    GaussianScene::from_primitives(k, 0.05, prims).unwrap()
}

fn c1_renderer_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let intr = Intrinsics::centered(32.0, 32, 32);
    let mut worst = [0.0f64; 4];
    let scenes = 100;
    for _ in 0..scenes {
        let n = rng.gen_range(1..=200);
        let scene = random_scene(&mut rng, n, 4);
        let d = rasterize(&scene, &CameraPose::identity(), &intr).max_abs_diff(&brute_force_render(
            &scene,
            &CameraPose::identity(),
            &intr,
        ));
        for (w, v) in worst.iter_mut().zip(d) {
            *w = w.max(v);
        }
    }
    check(
        worst.iter().all(|v| *v <= 1e-6),
        format!(
            "{scenes} scenes, max |diff| color {:.1e} feature {:.1e} depth {:.1e} alpha {:.1e} (tol 1e-6)",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

/// Worst relative and absolute FD disagreement per parameter group over 20
/// random 10-primitive scenes, for MSE and language losses.
type GroupStats = ([f64; 6], [f64; 6], [usize; 6]);

fn fd_sweep(h: f64) -> Result<GroupStats, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let intr = Intrinsics::centered(16.0, 16, 16);
    let cam = CameraPose::identity();
    let k = 4;
    let (mut rel, mut abs, mut compared) = ([0.0f64; 6], [0.0f64; 6], [0usize; 6]);
    for _ in 0..20 {
        let scene = random_scene(&mut rng, 10, k);
        let gt = RgbImage::from_raw(16, 16, (0..16 * 16 * 3).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
        let gf = FeatureMap::from_raw(16, 16, k, (0..16 * 16 * k).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        for report in [
            finite_diff_check(&scene, &cam, &intr, &mse_loss(gt, k), h, 1e-2),
            finite_diff_check(&scene, &cam, &intr, &lang_loss(gf), h, 1e-2),
        ] {
            let r = report.map_err(|e| e.to_string())?;
            for g in 0..6 {
                rel[g] = rel[g].max(r.max_rel[g]);
                abs[g] = abs[g].max(r.max_abs[g]);
                compared[g] += r.compared[g];
            }
        }
    }
    Ok((rel, abs, compared))
}

fn c2_gradients() -> Outcome {
    let fmt = |rel: &[f64; 6], abs: &[f64; 6]| -> String {
        (0..6)
            .map(|g| format!("{} {:.1e}/{:.1e}", PARAM_GROUPS[g], rel[g], abs[g]))
            .collect::<Vec<_>>()
            .join(", ")
    };
    // Central differences with h = 1e-6; at h = 1e-3 the difference quotient's
    // own O(h^2) error exceeds the tolerance for sub-pixel primitives, so that
    // sweep is reported but not gated on.
    let (rel, abs, compared) = fd_sweep(1e-6)?;
    let (rel3, abs3, _) = fd_sweep(1e-3)?;
    check(
        rel.iter().all(|r| *r < 1e-3) && abs.iter().all(|a| *a < 1e-5) && compared.iter().all(|c| *c > 0),
        format!(
            "20 scenes x 2 losses, rel/abs at h=1e-6: {} (tol rel 1e-3, abs 1e-5); at h=1e-3: {}",
            fmt(&rel, &abs),
            fmt(&rel3, &abs3)
        ),
    )
}

fn c3_weight_sharing() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let intr = Intrinsics::centered(32.0, 32, 32);
    let k = 5;
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let w: Vec<f64> = (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let n = rng.gen_range(1..=100);
        let prims = random_scene(&mut rng, n, k)
            .into_primitives()
            .into_iter()
            .map(|mut p| {
                p.lang.clone_from(&w);
                p
            })
            .collect();
        let scene = GaussianScene::from_primitives(k, 0.05, prims).unwrap();
        let t = rasterize(&scene, &CameraPose::identity(), &intr);
        for (px, a) in t.feature.chunks_exact(k).zip(&t.alpha) {
            for (f, wc) in px.iter().zip(&w) {
                worst = worst.max((f - a * wc).abs());
            }
        }
    }
    check(
        worst <= 1e-7,
        format!("50 scenes, max |f - alpha*w| {worst:.1e} (tol 1e-7)"),
    )
}

/// True if `p` passes the support-function test against `pts` along the
/// coordinate axes and `dirs`: its projection never leaves the points' range.
fn in_hull(p: &Vector3<f64>, pts: &[Vector3<f64>], dirs: &[Vector3<f64>], tol: f64) -> bool {
    dirs.iter().all(|d| {
        let proj = p.dot(d);
        let (lo, hi) = pts
            .iter()
            .map(|q| q.dot(d))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        proj >= lo - tol && proj <= hi + tol
    })
}

fn c4_fusion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut dirs: Vec<Vector3<f64>> = vec![Vector3::x(), Vector3::y(), Vector3::z()];
    dirs.extend((0..61).map(|_| Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0)).normalize()));

    // confidence-weighted mean against a direct oracle
    let mut mean_err = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(1..8);
        let x = Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let c = rng.gen_range(0.1..5.0);
        let nb = FusionNeighborhood {
            indices: (0..n).collect(),
            weights: (0..n).map(|_| rng.gen_range(0.1..5.0)).collect(),
            positions: (0..n)
                .map(|_| Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0)))
                .collect(),
            features: vec![],
        };
        let mut num = x * c;
        let mut den = c;
        for (p, w) in nb.positions.iter().zip(&nb.weights) {
            num += p * *w;
            den += w;
        }
        mean_err = mean_err.max((fuse_center(&x, c, &nb) - num / den).amax());
    }

    // randomized merges through integrate_frame with a random MLP
    let k = 3;
    let width = GaussianPrimitive::latent_width(k);
    let mlp = FusionMlp::random(width, &mut rng);
    let (mut merges, mut hull_fail, mut conf_err) = (0usize, 0usize, 0.0f64);
    while merges < 1000 {
        let voxel = 0.5;
        let mut scene = GaussianScene::new(k, voxel).unwrap();
        let cell = Vector3::from_fn(|_, _| rng.gen_range(-4i32..4) as f64 * voxel);
        let existing = rng.gen_range(1..6);
        for _ in 0..existing {
            let mut p = random_scene(&mut rng, 1, k).into_primitives().pop().unwrap();
            p.mu = cell + Vector3::from_fn(|_, _| rng.gen_range(0.0..voxel));
            scene.push(p).unwrap();
        }
        let before: Vec<GaussianPrimitive> = scene.primitives().to_vec();
        let mut inc = random_scene(&mut rng, 1, k).into_primitives().pop().unwrap();
        inc.mu = cell + Vector3::from_fn(|_, _| rng.gen_range(0.0..voxel));
        let total_before = scene.total_confidence() + inc.confidence;
        let report = integrate_frame(&mut scene, vec![inc.clone()], &mlp).map_err(|e| e.to_string())?;
        if report.merges != 1 || scene.len() != 1 {
            return Err(format!("expected one merge into a single primitive, got {report:?}"));
        }
        let mut pts: Vec<Vector3<f64>> = before.iter().map(|p| p.mu).collect();
        pts.push(inc.mu);
        if !in_hull(&scene.primitives()[0].mu, &pts, &dirs, 1e-12) {
            hull_fail += 1;
        }
        conf_err = conf_err.max((scene.total_confidence() - total_before).abs() / total_before);
        merges += 1;
    }

    // identity MLP with one identical neighbour: geometry is a fixed point
    let id = FusionMlp::identity(width);
    let mut idem = true;
    for _ in 0..100 {
        let p = random_scene(&mut rng, 1, k).into_primitives().pop().unwrap();
        let mut scene = GaussianScene::from_primitives(k, 0.05, vec![p.clone()]).unwrap();
        integrate_frame(&mut scene, vec![p.clone()], &id).map_err(|e| e.to_string())?;
        let q = &scene.primitives()[0];
        idem &= scene.len() == 1 && q.mu == p.mu && q.latent() == p.latent() && q.confidence == 2.0 * p.confidence;
    }
    check(
        mean_err <= 1e-12 && hull_fail == 0 && conf_err <= 1e-12 && idem,
        format!(
            "mean vs oracle {mean_err:.1e} (tol 1e-12); {merges} merges, hull violations {hull_fail}, \
             confidence drift {conf_err:.1e}; identity idempotent: {idem}"
        ),
    )
}

fn stream_frames(n: usize, size: usize, seed: u64) -> Vec<RgbImage> {
    let scene = streamsplat::synth::blob_scene(120, 0, 0.6, (0.04, 0.12), seed).unwrap();
    let intr = Intrinsics::centered(size as f64 * 1.2, size, size);
    // a slow orbit so long streams keep overlapping content
    let poses = streamsplat::synth::orbit_poses(n, 3.0, 0.01 * n as f64);
    streamsplat::synth::render_views(&scene, &poses, &intr)
}

/// Per-step seconds for steps 2..=T and the final state size and token count.
fn timed_stream(net: &Network, frames: &[RgbImage]) -> Result<(Vec<f64>, usize, usize), String> {
    let mut stream = Stream::new(net.clone(), 0.05).map_err(|e| e.to_string())?;
    let mut times = Vec::new();
    for (i, f) in frames.iter().enumerate() {
        let t = Instant::now();
        stream.push_frame(f).map_err(|e| e.to_string())?;
        if i > 0 {
            times.push(t.elapsed().as_secs_f64());
        }
    }
    let sizes: Vec<usize> = stream.reports().iter().map(|r| r.state_bytes).collect();
    if sizes[1..].iter().any(|s| *s != sizes[1]) {
        return Err(format!("state size changed within the stream: {sizes:?}"));
    }
    Ok((times, stream.state().heap_bytes(), stream.state().anchor.len()))
}

fn c5_constant_memory() -> Outcome {
    let net = Network::random(NetConfig::default(), 5).map_err(|e| e.to_string())?;
    let frames = stream_frames(64, 32, 5);
    // warm caches and the thread pool
    timed_stream(&net, &frames[..4])?;
    let mut short = Vec::new();
    let (mut bytes4, mut tokens4) = (0, 0);
    for _ in 0..5 {
        let (t, b, k) = timed_stream(&net, &frames[..4])?;
        short.extend(t);
        bytes4 = b;
        tokens4 = k;
    }
    let (long, bytes64, tokens64) = timed_stream(&net, &frames)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (m4, m64) = (mean(&short), mean(&long));
    let tail = mean(&long[long.len() - 8..]);
    let ratio = m64 / m4;
    let tail_ratio = tail / m4;
    check(
        bytes4 == bytes64 && tokens4 == tokens64 && ratio <= 1.2 && tail_ratio <= 1.2,
        format!(
            "state bytes {bytes4} vs {bytes64}, anchor tokens {tokens4} vs {tokens64}; step time T=4 {:.2} ms, \
             T=64 {:.2} ms (x{ratio:.3}), last 8 steps x{tail_ratio:.3} (tol 1.2)",
            m4 * 1e3,
            m64 * 1e3
        ),
    )
}

fn c6_determinism() -> Outcome {
    let net = Network::random(NetConfig::default(), 6).map_err(|e| e.to_string())?;
    let frames = stream_frames(8, 32, 6);
    let run = |frames: &[RgbImage]| -> Result<(Vec<Vec<u8>>, Vec<String>), String> {
        let mut stream = Stream::new(net.clone(), 0.05).map_err(|e| e.to_string())?;
        let mut scenes = Vec::new();
        let mut trajs = Vec::new();
        for f in frames {
            stream.push_frame(f).map_err(|e| e.to_string())?;
            scenes.push(ogs_bytes(stream.scene()));
            trajs.push(tum_string(&records_from_poses(stream.trajectory())));
        }
        Ok((scenes, trajs))
    };
    let (s1, t1) = run(&frames)?;
    let (s2, t2) = run(&frames)?;
    let replay = s1 == s2 && t1 == t2;
    let mut prefix = true;
    for t in [1, 3, 5] {
        let (s, tr) = run(&frames[..t])?;
        prefix &= s.last() == s1.get(t - 1) && tr.last() == t1.get(t - 1);
    }
    check(
        replay && prefix,
        format!("replay bit-identical: {replay}; truncations at t=1,3,5 match the full run: {prefix}"),
    )
}

fn c7_umeyama() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut es, mut er, mut et, mut worst_ate, mut worst_rpe) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..50 {
        let n = rng.gen_range(5..40);
        let poses: Vec<CameraPose> = (0..n)
            .map(|_| {
                let q = random_rotation(&mut rng);
                CameraPose::from_quat(q, Vector3::from_fn(|_, _| rng.gen_range(-3.0..3.0))).unwrap()
            })
            .collect();
        let gt = Trajectory::from_poses(poses);
        let truth = Sim3 {
            scale: rng.gen_range(0.2..5.0),
            rotation: streamsplat::geometry::quat_to_rotmat(random_rotation(&mut rng)).unwrap(),
            translation: Vector3::from_fn(|_, _| rng.gen_range(-5.0..5.0)),
        };
        let moved = gt.transformed(&truth);
        // recover the map taking the moved trajectory back onto gt
        let est = umeyama_sim3(&moved.positions(), &gt.positions()).map_err(|e| e.to_string())?;
        let inv_scale = 1.0 / truth.scale;
        let inv_rot: Matrix3<f64> = truth.rotation.transpose();
        let inv_t = -(inv_rot * truth.translation) * inv_scale;
        es = es.max((est.scale - inv_scale).abs());
        er = er.max((est.rotation - inv_rot).amax());
        et = et.max((est.translation - inv_t).amax());
        worst_ate = worst_ate.max(ate(&moved, &gt).map_err(|e| e.to_string())?);
        let (rt, rr) = rpe(&gt, &gt, 1).map_err(|e| e.to_string())?;
        worst_rpe = worst_rpe.max(rt).max(rr);
    }
    check(
        es <= 1e-9 && er <= 1e-9 && et <= 1e-9 && worst_ate < 1e-9 && worst_rpe <= 1e-9,
        format!(
            "50 trajectories; |ds| {es:.1e}, |dR| {er:.1e}, |dt| {et:.1e}, ATE {worst_ate:.1e}, \
             RPE(exact) {worst_rpe:.1e} (tol 1e-9)"
        ),
    )
}

fn c8_direct_optimization() -> Outcome {
    let (init, views) = optimization_problem(500, 4, 64, 8).map_err(|e| e.to_string())?;
    let opts = OptimizeOptions {
        steps: 2000,
        ..OptimizeOptions::default()
    };
    let r = optimize_scene(&init, &views, &opts).map_err(|e| e.to_string())?;
    let monotone = r.curve.windows(2).all(|w| w[1].total <= w[0].total);
    let ps: Vec<f64> = views
        .iter()
        .map(|v| psnr(&rasterize(&r.scene, &v.camera, &v.intrinsics).to_image(), &v.image).unwrap())
        .collect();
    let min = ps.iter().cloned().fold(f64::INFINITY, f64::min);
    let first = views
        .iter()
        .map(|v| psnr(&rasterize(&init, &v.camera, &v.intrinsics).to_image(), &v.image).unwrap())
        .fold(f64::INFINITY, f64::min);
    check(
        min >= 30.0 && monotone && r.curve.len() == 2001,
        format!(
            "500 primitives, 4 views 64x64, 2000 steps ({} accepted); min view PSNR {first:.2} -> {min:.2} dB \
             (tol >= 30); loss curve non-increasing: {monotone}",
            r.accepted
        ),
    )
}

fn c9_segmentation() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (w, h, k) = (64, 48, 16);
    let fx = write_segmentation_fixture(dir.path(), k, w, h).map_err(|e| e.to_string())?;
    let two = TwoObjectScene::new(k, w, h).map_err(|e| e.to_string())?;
    let gt: Vec<_> = fx.masks.iter().map(|(_, p)| read_pgm(p).unwrap()).collect();
    let run = |t: f64| -> Result<Vec<streamsplat::image::Mask>, String> {
        let out = dir.path().join(format!("q{t}"));
        let s =
            cmd_query(&fx.scene, &two.camera, &two.intrinsics, &fx.queries, t, &out, 0).map_err(|e| e.to_string())?;
        if let Some(q) = s.iter().find(|q| q.result.is_err()) {
            return Err(format!("query {} failed", q.label));
        }
        fx.masks
            .iter()
            .map(|(label, _)| read_pgm(&out.join(format!("{label}.pgm"))).map_err(|e| e.to_string()))
            .collect()
    };
    let pred = run(DEFAULT_THRESHOLD)?;
    let (miou, macc) = miou_macc(&pred, &gt).map_err(|e| e.to_string())?;
    let sweep: Vec<f64> = (0..10).map(|i| -0.5 + 0.15 * i as f64).collect();
    let mut prev: Option<Vec<streamsplat::image::Mask>> = None;
    let mut monotone = true;
    let mut counts = Vec::new();
    for t in &sweep {
        let masks = run(*t)?;
        if let Some(p) = &prev {
            for (a, b) in p.iter().zip(&masks) {
                monotone &= a.data().iter().zip(b.data()).all(|(x, y)| *x || !*y);
            }
        }
        counts.push(masks.iter().map(|m| m.count()).sum::<usize>());
        prev = Some(masks);
    }
    check(
        miou == 100.0 && macc == 100.0 && monotone,
        format!("mIoU {miou:.2}%, mAcc {macc:.2}% at threshold 0.5; masks nested over a 10-point sweep: {monotone} {counts:?}"),
    )
}

fn c10_loss_composition() -> Outcome {
    let w = LossWeights::default();
    let g = loss_total(&StageLosses::new(1.0, 1.0, 1.0), &StageLosses::default(), &w).map_err(|e| e.to_string())?;
    let r = loss_total(&StageLosses::default(), &StageLosses::new(1.0, 1.0, 1.0), &w).map_err(|e| e.to_string())?;
    check(
        g == 2.5 && r == 2.0,
        format!(
            "weights ({}, {}, {}, {}): global-only {g}, relative-only {r}",
            w.lambda_aux, w.lambda1, w.lambda2, w.lambda3
        ),
    )
}

fn c11_round_trips() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let p = std::path::Path::new("mem");
    let scene = random_scene(&mut rng, 50, 16);
    let b = ogs_bytes(&scene);
    let ogs = ogs_bytes(&parse_ogs(&b, 0.05, p).map_err(|e| e.to_string())?) == b;

    let poses: Vec<CameraPose> = (0..20)
        .map(|_| {
            CameraPose::from_quat(
                random_rotation(&mut rng),
                Vector3::from_fn(|_, _| rng.gen_range(-2.0..2.0)),
            )
            .unwrap()
        })
        .collect();
    let t = tum_string(&records_from_poses(&poses));
    let tum = tum_string(&parse_tum(&t, p).map_err(|e| e.to_string())?) == t;

    let img = RgbImage::from_raw(13, 7, (0..13 * 7 * 3).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
    let b = ppm_bytes(&img);
    let ppm = ppm_bytes(&parse_ppm(&b, p).map_err(|e| e.to_string())?) == b;
    let mask = streamsplat::image::Mask::from_raw(9, 5, (0..45).map(|_| rng.gen_bool(0.5)).collect()).unwrap();
    let b = pgm_bytes(&mask);
    let pgm = pgm_bytes(&parse_pgm(&b, p).map_err(|e| e.to_string())?) == b;

    let w = NetConfig::default().random_weights(11).map_err(|e| e.to_string())?;
    let b = w.to_bytes();
    let weights = WeightContainer::from_bytes(&b, p)
        .map_err(|e| e.to_string())?
        .to_bytes()
        == b;

    let f = FeatureMap::from_raw(4, 3, 2, (0..24).map(|i| i as f64 * 0.25).collect()).unwrap();
    let b = feature_bytes(&f);
    let feat = feature_bytes(&streamsplat::io::features::parse_features(&b, p).map_err(|e| e.to_string())?) == b;
    check(
        ogs && tum && ppm && pgm && weights && feat,
        format!("OGS {ogs}, TUM {tum}, PPM {ppm}, PGM {pgm}, weights {weights}, feature planes {feat}"),
    )
}

fn main() {
    type Criterion = (u32, &'static str, fn() -> Outcome);
    let criteria: [Criterion; 11] = [
        (1, "renderer matches brute-force reference", c1_renderer_oracle),
        (2, "analytic gradients match finite differences", c2_gradients),
        (3, "feature weights equal alpha weights", c3_weight_sharing),
        (4, "fusion algebra and invariants", c4_fusion),
        (5, "constant online memory and step time", c5_constant_memory),
        (6, "streaming determinism and causality", c6_determinism),
        (7, "Umeyama alignment, ATE and RPE", c7_umeyama),
        (8, "direct optimization reaches 30 dB", c8_direct_optimization),
        (9, "open-vocabulary segmentation protocol", c9_segmentation),
        (10, "loss composition with default weights", c10_loss_composition),
        (11, "format round trips are byte-identical", c11_round_trips),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, f) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {id:>2} {name} [{secs:.1}s]: {detail}");
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
