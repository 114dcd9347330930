mod common;

use pla_core::geometry::{back_project, build_voxel_index, view_overlap, CameraFrame, Intrinsics, PointCloud};
use pla_core::linalg::RigidTransform;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cloud(points: Vec<[f64; 3]>) -> PointCloud {
    let n = points.len();
    PointCloud::new("s", points, vec![[0.5; 3]; n], vec![0; n], 1).unwrap()
}

#[test]
fn rotated_plane_matches_hand_multiplication() {
    // 30 degrees about the axis (1, 1, 1)/sqrt(3), then a translation
    let (s, c) = 30f64.to_radians().sin_cos();
    let a = 1.0 / 3f64.sqrt();
    let t = 1.0 - c;
    let r = [
        [c + a * a * t, a * a * t - a * s, a * a * t + a * s],
        [a * a * t + a * s, c + a * a * t, a * a * t - a * s],
        [a * a * t - a * s, a * a * t + a * s, c + a * a * t],
    ];
    let pose = RigidTransform::from_rotation_translation(r, [0.3, -1.2, 2.5]);
    let k = Intrinsics { fx: 3.0, fy: 2.5, cx: 1.5, cy: 1.25 };
    let frame = CameraFrame::new("rot", k, pose, 4, 4, vec![2.0; 16]).unwrap();
    let got = back_project(&frame, 1).unwrap();
    assert_eq!(got.len(), 16);
    let mut m = [[0.0; 4]; 4];
    for i in 0..3 {
        m[i][..3].copy_from_slice(&r[i]);
    }
    m[0][3] = 0.3;
    m[1][3] = -1.2;
    m[2][3] = 2.5;
    m[3][3] = 1.0;
    for v in 0..4 {
        for u in 0..4 {
            let want = common::hand_back_project(&m, [3.0, 2.5, 1.5, 1.25], u as f64, v as f64, 2.0);
            let p = got[v * 4 + u];
            for k in 0..3 {
                assert!((p[k] - want[k]).abs() < 1e-9, "pixel ({u},{v})");
            }
        }
    }
}

#[test]
fn stride_subsamples_rows_and_columns() {
    let k = Intrinsics { fx: 1.0, fy: 1.0, cx: 0.0, cy: 0.0 };
    let frame = CameraFrame::new("f", k, RigidTransform::IDENTITY, 5, 3, vec![1.0; 15]).unwrap();
    assert_eq!(back_project(&frame, 2).unwrap().len(), 3 * 2);
    assert!(back_project(&frame, 0).is_err());
}

#[test]
fn non_rigid_pose_rejected() {
    let mut pose = RigidTransform::IDENTITY;
    pose.m[0][0] = 1.01;
    let k = Intrinsics { fx: 1.0, fy: 1.0, cx: 0.0, cy: 0.0 };
    assert!(CameraFrame::new("f", k, pose, 1, 1, vec![1.0]).is_err());
}

#[test]
fn projection_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let k = Intrinsics { fx: 500.0, fy: 480.0, cx: 320.0, cy: 240.0 };
    for _ in 0..1000 {
        let eye = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(0.5..2.5)];
        let target = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.0..1.0)];
        let pose = RigidTransform::look_at(eye, target, [0.0, 0.0, 1.0]);
        let u = rng.random_range(0.0..640.0);
        let v = rng.random_range(0.0..480.0);
        let d = rng.random_range(0.2..8.0);
        let world = pose.apply(pla_core::geometry::unproject_camera(&k, u, v, d));
        let frame = CameraFrame::new("f", k, pose, 0, 0, vec![]).unwrap();
        let (pu, pv, pz) = frame.project(world).unwrap();
        let back = pose.apply(pla_core::geometry::unproject_camera(&k, pu, pv, pz));
        let err = (0..3).map(|i| (back[i] - world[i]).powi(2)).sum::<f64>().sqrt();
        assert!(err < 1e-6);
    }
}

#[test]
fn voxel_index_partitions_random_cube() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pts: Vec<[f64; 3]> = (0..1000).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
    let index = build_voxel_index(&pts, 0.1).unwrap();
    let mut seen = vec![0u32; 1000];
    for (cell, members) in index.cells() {
        for &i in members {
            seen[i as usize] += 1;
            let p = pts[i as usize];
            for k in 0..3 {
                assert_eq!((p[k] / 0.1).floor() as i64, cell[k]);
            }
        }
    }
    assert!(seen.iter().all(|&c| c == 1));
}

#[test]
fn non_finite_rejected() {
    assert!(build_voxel_index(&[[0.0, f64::NAN, 0.0]], 0.1).is_err());
    assert!(build_voxel_index(&[[0.0; 3]], 0.0).is_err());
}

#[test]
fn self_and_disjoint_overlap() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pts: Vec<[f64; 3]> = (0..300).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
    let scene = cloud(pts.clone());
    assert_eq!(view_overlap(&scene, &pts, 0.05, 0.01).unwrap().len(), 300);
    let far: Vec<[f64; 3]> = pts.iter().map(|p| [p[0] + 10.0, p[1], p[2]]).collect();
    assert!(view_overlap(&scene, &far, 0.05, 0.1).unwrap().is_empty());
    assert!(view_overlap(&scene, &[], 0.05, 0.1).unwrap().is_empty());
}

fn points(max: usize) -> impl Strategy<Value = Vec<[f64; 3]>> {
    prop::collection::vec(prop::array::uniform3(-0.5f64..0.5), 1..max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn overlap_matches_brute_force(
        scene in points(500),
        bp in points(500),
        vs in prop::sample::select(vec![0.02, 0.05, 0.1]),
        r_cells in prop::sample::select(vec![0.5, 1.0, 1.5, 2.0, 2.3]),
    ) {
        let r = vs * r_cells;
        let got = view_overlap(&cloud(scene.clone()), &bp, vs, r).unwrap();
        prop_assert_eq!(got.indices(), &common::brute_overlap(&scene, &bp, vs, r)[..]);
    }

    #[test]
    fn overlap_permutation_invariant(scene in points(200), bp in points(100), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut perm: Vec<usize> = (0..scene.len()).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let shuffled: Vec<[f64; 3]> = perm.iter().map(|&i| scene[i]).collect();
        let a = view_overlap(&cloud(scene), &bp, 0.05, 0.05).unwrap();
        let b = view_overlap(&cloud(shuffled), &bp, 0.05, 0.05).unwrap();
        let mut mapped: Vec<u32> = b.indices().iter().map(|&i| perm[i as usize] as u32).collect();
        mapped.sort_unstable();
        prop_assert_eq!(a.indices(), &mapped[..]);
    }

    #[test]
    fn overlap_monotone_in_radius(scene in points(200), bp in points(100), r1 in 0.01f64..0.2, extra in 0.0f64..0.2) {
        let s = cloud(scene);
        let small = view_overlap(&s, &bp, 0.05, r1).unwrap();
        let large = view_overlap(&s, &bp, 0.05, r1 + extra).unwrap();
        prop_assert!(small.difference(&large).is_empty());
    }
}
