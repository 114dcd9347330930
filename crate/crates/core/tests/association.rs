mod common;

use std::collections::BTreeSet;

use pla_core::association::{
    build_pairs, entity_pairs, extract_entities, AssociationConfig, CaptionRecord, EntityFilter, EntitySet, Level,
    Lexicon, ViewEntry,
};
use pla_core::geometry::{CameraFrame, Intrinsics, PointCloud};
use pla_core::index_set::PointIndexSet;
use pla_core::linalg::RigidTransform;
use pla_core::Error;
use proptest::prelude::*;

const WORDS: [&str; 6] = ["bed", "chair", "desk", "sofa", "table", "window"];

fn view(frame: &str, pts: &BTreeSet<u32>, words: &BTreeSet<String>) -> ViewEntry {
    ViewEntry {
        frame_id: frame.into(),
        points: PointIndexSet::from_sorted("s", pts.iter().copied().collect()).unwrap(),
        entities: EntitySet::from_words(words),
    }
}

fn index_set(max: u32) -> impl Strategy<Value = BTreeSet<u32>> {
    (0..max, 0..=max).prop_flat_map(move |(lo, len)| {
        prop::collection::btree_set(lo..(lo + len).min(max).max(lo + 1), 0..1000usize)
    })
}

fn word_set() -> impl Strategy<Value = BTreeSet<String>> {
    prop::collection::btree_set(prop::sample::select(WORDS.to_vec()).prop_map(String::from), 0..5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn entity_candidates_match_brute_force(
        pi in index_set(1500), pj in index_set(1500),
        wi in word_set(), wj in word_set(),
        gamma in prop::sample::select(vec![1usize, 10, 100]),
        delta in prop::sample::select(vec![0.3, 0.6, 1.0]),
    ) {
        let filter = EntityFilter::new(gamma, delta).unwrap();
        let a = view("a", &pi, &wi);
        let b = view("b", &pj, &wj);
        let got: Vec<(Vec<u32>, String)> = entity_pairs(&a, &b, &filter)
            .into_iter()
            .map(|p| (p.points.indices().to_vec(), p.caption.text))
            .collect();
        let want: Vec<(Vec<u32>, String)> = common::brute_entity(&pi, &pj, &wi, &wj, gamma, delta)
            .into_iter()
            .map(|(_, p, w)| (p, w))
            .collect();
        prop_assert_eq!(&got, &want);

        // symmetry: swapping the views permutes the candidates
        let mut swapped: Vec<(Vec<u32>, String)> = entity_pairs(&b, &a, &filter)
            .into_iter()
            .map(|p| (p.points.indices().to_vec(), p.caption.text))
            .collect();
        let mut sorted = got.clone();
        swapped.sort();
        sorted.sort();
        prop_assert_eq!(swapped, sorted);

        // every survivor satisfies the size filter literally
        for (p, w) in &got {
            prop_assert!(gamma < p.len());
            prop_assert!((p.len() as f64) < delta * pi.len().min(pj.len()) as f64);
            prop_assert!(!w.is_empty());
        }

        // partition law
        let union: BTreeSet<u32> = pi.union(&pj).copied().collect();
        let di: BTreeSet<u32> = pi.difference(&pj).copied().collect();
        let dj: BTreeSet<u32> = pj.difference(&pi).copied().collect();
        let both: BTreeSet<u32> = pi.intersection(&pj).copied().collect();
        prop_assert_eq!(di.len() + dj.len() + both.len(), union.len());
    }

    #[test]
    fn extraction_idempotent(words in prop::collection::vec(prop::sample::select(WORDS.to_vec()), 0..6)) {
        let lexicon = Lexicon::new(WORDS);
        let caption = format!("a room with {}", words.join(" and "));
        let first = extract_entities(&caption, &lexicon);
        let again = extract_entities(&first.words().join(" "), &lexicon);
        prop_assert_eq!(first, again);
    }
}

#[test]
fn boundary_at_gamma_dropped() {
    let pi: BTreeSet<u32> = (1..=300).collect();
    let pj: BTreeSet<u32> = (201..=500).collect();
    let wi: BTreeSet<String> = ["sofa", "table"].map(String::from).into();
    let wj: BTreeSet<String> = ["table", "chair"].map(String::from).into();
    let pairs = entity_pairs(&view("a", &pi, &wi), &view("b", &pj, &wj), &EntityFilter::default());
    // each difference has 200 points, above 0.3 * 300 = 90, so nothing survives
    assert!(pairs.is_empty());
    let loose = EntityFilter::new(100, 1.0).unwrap();
    let pairs = entity_pairs(&view("a", &pi, &wi), &view("b", &pj, &wj), &loose);
    let captions: Vec<&str> = pairs.iter().map(|p| p.caption.text.as_str()).collect();
    assert_eq!(captions, ["sofa", "chair"]);
}

fn plane_scene() -> PointCloud {
    // a 1 m x 1 m floor patch at z = 0, 2 cm spacing
    let mut pts = Vec::new();
    for i in 0..50 {
        for j in 0..50 {
            pts.push([i as f64 * 0.02 + 0.01, j as f64 * 0.02 + 0.01, 0.0]);
        }
    }
    let n = pts.len();
    PointCloud::new("s", pts, vec![[0.5; 3]; n], vec![0; n], 1).unwrap()
}

/// Downward-looking camera at height 1 m whose depth covers the square
/// `[x0, x0 + w] × [0, 1]` of the floor.
fn down_frame(id: &str, x0: f64, w: f64) -> CameraFrame {
    let r = [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]];
    let pose = RigidTransform::from_rotation_translation(r, [0.0, 1.0, 1.0]);
    let k = Intrinsics { fx: 50.0, fy: 50.0, cx: 0.0, cy: 0.0 };
    let (width, height) = (60, 60);
    let mut depth = vec![0.0; width * height];
    for v in 0..height {
        for u in 0..width {
            let x = u as f64 / 50.0;
            let y = 1.0 - v as f64 / 50.0;
            if x >= x0 && x <= x0 + w && (0.0..=1.0).contains(&y) {
                depth[v * width + u] = 1.0;
            }
        }
    }
    CameraFrame::new(id, k, pose, width, height, depth).unwrap()
}

#[test]
fn single_frame_yields_scene_and_view() {
    let scene = plane_scene();
    let frames = [down_frame("f0", 0.0, 1.0)];
    let captions = [CaptionRecord::view("s", "f0", "a room with a sofa")];
    let pairs = build_pairs(&scene, &frames, &captions, &Lexicon::new(WORDS), &AssociationConfig::default()).unwrap();
    let levels: Vec<Level> = pairs.iter().map(|p| p.level()).collect();
    assert_eq!(levels, [Level::Scene, Level::View]);
    assert_eq!(pairs[0].caption.text, "a room with a sofa");
}

#[test]
fn two_frames_filtered_by_hand() {
    let scene = plane_scene();
    let frames = [down_frame("f1", 0.0, 0.6), down_frame("f0", 0.4, 0.6)];
    let captions = [
        CaptionRecord::view("s", "f0", "a room with a sofa and a table"),
        CaptionRecord::view("s", "f1", "a room with a table and a chair"),
    ];
    let config = AssociationConfig { filter: EntityFilter::new(100, 1.0).unwrap(), ..Default::default() };
    let pairs = build_pairs(&scene, &frames, &captions, &Lexicon::new(WORDS), &config).unwrap();
    let summary = common::pair_summary(&pairs);
    assert_eq!(summary[0].2, "a room with a sofa and a table a room with a table and a chair");
    let views: Vec<_> = summary.iter().filter(|s| s.0 == Level::View).collect();
    assert_eq!(views.len(), 2);
    // recompute the filter for the consecutive pair (f0, f1) by hand
    let p0: BTreeSet<u32> = views[0].1.iter().copied().collect();
    let p1: BTreeSet<u32> = views[1].1.iter().copied().collect();
    let w0: BTreeSet<String> = ["sofa", "table"].map(String::from).into();
    let w1: BTreeSet<String> = ["chair", "table"].map(String::from).into();
    let want = common::brute_entity(&p0, &p1, &w0, &w1, 100, 1.0);
    let got: Vec<_> = summary.iter().filter(|s| s.0 == Level::Entity).map(|s| (s.1.clone(), s.2.clone())).collect();
    assert_eq!(got, want.into_iter().map(|(_, p, w)| (p, w)).collect::<Vec<_>>());
    // both difference strips pass and the shared strip has an entity
    assert_eq!(got.len(), 3);
    assert_eq!(got[2].1, "table");

    let rerun = build_pairs(&scene, &frames, &captions, &Lexicon::new(WORDS), &config).unwrap();
    assert_eq!(rerun, pairs);
}

#[test]
fn missing_inputs_named() {
    let scene = plane_scene();
    let frames = [down_frame("f0", 0.0, 1.0)];
    let orphan = [CaptionRecord::view("s", "f9", "a room")];
    assert!(matches!(
        build_pairs(&scene, &frames, &orphan, &Lexicon::new(WORDS), &AssociationConfig::default()),
        Err(Error::MissingFrame(f)) if f == "f9"
    ));
    assert!(matches!(
        build_pairs(&scene, &frames, &[], &Lexicon::new(WORDS), &AssociationConfig::default()),
        Err(Error::MissingCaption(f)) if f == "f0"
    ));
}
