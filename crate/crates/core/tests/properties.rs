use nalgebra::Vector3;
use proptest::prelude::*;

use streamsplat::fuse::{integrate_frame, FusionMlp};
use streamsplat::geometry::{quat_to_rotmat, rotmat_to_quat};
use streamsplat::render::rasterize;
use streamsplat::{CameraPose, GaussianPrimitive, GaussianScene, Intrinsics, Quat};

const K: usize = 3;

fn unit_quat() -> impl Strategy<Value = Quat> {
    prop::array::uniform4(-1.0f64..1.0)
        .prop_filter("non-degenerate", |a| a.iter().map(|v| v * v).sum::<f64>() > 1e-3)
        .prop_map(|a| Quat::from_array(a).normalized().unwrap())
}

fn vec3(r: f64) -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(-r..r).prop_map(Vector3::from)
}

fn primitive() -> impl Strategy<Value = GaussianPrimitive> {
    (
        (-1.0f64..1.0, -1.0f64..1.0, 1.0f64..4.0),
        unit_quat(),
        prop::array::uniform3(0.02f64..0.4),
        0.05f64..0.99,
        prop::array::uniform3(0.0f64..1.0),
        prop::collection::vec(-1.0f64..1.0, K),
        0.5f64..3.0,
    )
        .prop_map(
            |((x, y, z), rot, scale, opacity, color, lang, confidence)| GaussianPrimitive {
                mu: Vector3::new(x, y, z),
                rot,
                scale: scale.into(),
                opacity,
                color: color.into(),
                lang,
                confidence,
            },
        )
}

fn scene(max: usize) -> impl Strategy<Value = Vec<GaussianPrimitive>> {
    prop::collection::vec(primitive(), 1..max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quaternion_round_trip(q in unit_quat()) {
        let back = rotmat_to_quat(&quat_to_rotmat(q).unwrap());
        let d = back.dot(q).abs();
        prop_assert!((d - 1.0).abs() < 1e-9);
    }

    #[test]
    fn compose_matches_sequential_transform(qa in unit_quat(), qb in unit_quat(), ta in vec3(3.0), tb in vec3(3.0), x in vec3(5.0)) {
        let a = CameraPose::from_quat(qa, ta).unwrap();
        let b = CameraPose::from_quat(qb, tb).unwrap();
        let lhs = a.compose(&b).transform_point(&x);
        let rhs = a.transform_point(&b.transform_point(&x));
        prop_assert!((lhs - rhs).amax() < 1e-9);
    }

    #[test]
    fn render_ignores_storage_order(prims in scene(30), seed in any::<u64>()) {
        let intr = Intrinsics::centered(24.0, 24, 20);
        let a = GaussianScene::from_primitives(K, 0.05, prims.clone()).unwrap();
        let mut shuffled = prims;
        // deterministic Fisher-Yates driven by the seed
        let mut s = seed;
        for i in (1..shuffled.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        let b = GaussianScene::from_primitives(K, 0.05, shuffled).unwrap();
        let cam = CameraPose::identity();
        let d = rasterize(&a, &cam, &intr).max_abs_diff(&rasterize(&b, &cam, &intr));
        prop_assert!(d.iter().all(|v| *v <= 1e-6), "{d:?}");
    }

    #[test]
    fn appending_never_reduces_alpha(prims in scene(20), extra in primitive()) {
        let intr = Intrinsics::centered(24.0, 24, 20);
        let cam = CameraPose::identity();
        let before = rasterize(&GaussianScene::from_primitives(K, 0.05, prims.clone()).unwrap(), &cam, &intr);
        let mut more = prims;
        more.push(extra);
        let after = rasterize(&GaussianScene::from_primitives(K, 0.05, more).unwrap(), &cam, &intr);
        for (a, b) in before.alpha.iter().zip(&after.alpha) {
            prop_assert!(*b >= *a - 1e-12 && (0.0..=1.0).contains(b));
        }
    }

    #[test]
    fn integration_keeps_index_and_confidence(existing in scene(25), incoming in scene(25), seed in any::<u64>()) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mlp = FusionMlp::random(GaussianPrimitive::latent_width(K), &mut rng);
        // a coarse voxel so merges actually happen
        let mut scene = GaussianScene::from_primitives(K, 0.5, existing).unwrap();
        let (n0, m) = (scene.len(), incoming.len());
        let total = scene.total_confidence() + incoming.iter().map(|p| p.confidence).sum::<f64>();
        let report = integrate_frame(&mut scene, incoming, &mlp).unwrap();
        prop_assert!(scene.len() <= n0 + m);
        prop_assert_eq!(scene.len(), n0 + report.appended + report.merges - report.absorbed);
        prop_assert!(scene.check_index().is_ok());
        prop_assert!((scene.total_confidence() - total).abs() <= 1e-9 * total);
        for p in scene.primitives() {
            prop_assert!(p.validate(K).is_ok());
            prop_assert!((p.rot.norm() - 1.0).abs() < 1e-6);
        }
    }
}
