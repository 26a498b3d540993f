use std::ffi::{CStr, CString};
use std::ptr;

use streamsplat::io::write_ogs;
use streamsplat::synth::TwoObjectScene;
use streamsplat_ffi::*;

fn cpath(p: &std::path::Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

#[test]
fn scene_round_trip_and_render() {
    let dir = tempfile::tempdir().unwrap();
    let two = TwoObjectScene::new(4, 24, 16).unwrap();
    let src = dir.path().join("a.ogs");
    write_ogs(&src, &two.scene).unwrap();
    unsafe {
        let mut scene = ptr::null_mut();
        assert_eq!(ss_scene_read(cpath(&src).as_ptr(), &mut scene), SsStatus::Ok);
        assert_eq!(ss_scene_len(scene), two.scene.len());
        assert_eq!(ss_scene_k(scene), 4);

        let dst = dir.path().join("b.ogs");
        assert_eq!(ss_scene_write(scene, cpath(&dst).as_ptr()), SsStatus::Ok);
        assert_eq!(std::fs::read(&src).unwrap(), std::fs::read(&dst).unwrap());

        let k = SsIntrinsics {
            fx: 24.0,
            fy: 24.0,
            cx: 12.0,
            cy: 8.0,
            width: 24,
            height: 16,
        };
        let mut rgb = vec![0.0; 24 * 16 * 3];
        let mut feat = vec![0.0; 24 * 16 * 4];
        assert_eq!(
            ss_render(scene, ptr::null(), &k, rgb.as_mut_ptr(), feat.as_mut_ptr()),
            SsStatus::Ok
        );
        // the file stores f32, so compare against the scene as read back
        let stored = streamsplat::io::read_ogs(&src, 0.05).unwrap();
        let reference = streamsplat::render::rasterize(&stored, &two.camera, &two.intrinsics);
        assert!(rgb == reference.color && feat == reference.feature);

        let bad = SsIntrinsics { fx: -1.0, ..k };
        assert_eq!(
            ss_render(scene, ptr::null(), &bad, rgb.as_mut_ptr(), ptr::null_mut()),
            SsStatus::InvalidArgument
        );
        assert!(!ss_last_error().is_null());
        ss_scene_free(scene);
    }
}

#[test]
fn stream_produces_identity_first_pose() {
    unsafe {
        let mut stream = ptr::null_mut();
        assert_eq!(ss_stream_new(ptr::null(), 3, 0.05, &mut stream), SsStatus::Ok);
        let img = vec![0.5; 16 * 16 * 3];
        let mut pose = [9.0; 7];
        assert_eq!(
            ss_stream_push_frame(stream, img.as_ptr(), 16, 16, pose.as_mut_ptr()),
            SsStatus::Ok
        );
        assert_eq!(pose, [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(ss_stream_frames(stream), 1);

        let mut scene = ptr::null_mut();
        assert_eq!(ss_stream_scene(stream, &mut scene), SsStatus::Ok);
        assert_eq!(ss_scene_len(scene), 16 * 16);
        ss_scene_free(scene);

        // 15x16 is not a whole number of patches
        let small = vec![0.5; 15 * 16 * 3];
        let st = ss_stream_push_frame(stream, small.as_ptr(), 15, 16, ptr::null_mut());
        assert_eq!(st, SsStatus::InvalidArgument);
        let msg = CStr::from_ptr(ss_last_error()).to_str().unwrap();
        assert!(!msg.is_empty());
        assert_eq!(ss_stream_frames(stream), 1);
        ss_stream_free(stream);
    }
}

#[test]
fn version_is_nul_terminated() {
    let v = unsafe { CStr::from_ptr(ss_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
