//! Synthetic box rooms: labeled point clouds, z-buffered depth frames from a
//! ring of cameras and template captions.

use std::collections::BTreeMap;
use std::path::Path;

use pla_core::association::{CaptionRecord, Lexicon};
use pla_core::geometry::{back_project, view_overlap, CameraFrame, Intrinsics, PointCloud};
use pla_core::linalg::{RigidTransform, Vec3};
use pla_core::text::{fallback_embed, CategoryList, EmbeddingTable};
use pla_core::IGNORED;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::formats::{captions, categories, embeddings, frame, read_text, scene, write_bytes};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySpec {
    pub name: String,
    pub base: bool,
    pub color: [f64; 3],
}

/// Axis-aligned box. `category` names an entry of the category list; any
/// other name marks the box's points as ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub category: String,
    pub min: [f64; 3],
    pub max: [f64; 3],
    /// Overrides the category color (used for ignored clutter).
    #[serde(default)]
    pub color: Option<[f64; 3]>,
}

/// Cameras on a horizontal circle, all looking at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRing {
    pub count: usize,
    pub center: [f64; 2],
    pub radius: f64,
    pub height: f64,
    pub target: [f64; 3],
    /// Angle of the first camera, degrees.
    #[serde(default)]
    pub phase_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSpec {
    pub width: usize,
    pub height: usize,
    pub fov_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionRules {
    /// Used when no category is visible.
    pub empty: String,
    /// At most this many names, most-visible first.
    pub max_names: usize,
    /// A category is named only if it covers at least this many pixels.
    pub min_pixels: usize,
}

impl Default for CaptionRules {
    fn default() -> Self {
        Self { empty: "a room".into(), max_names: 3, min_pixels: 12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSceneSpec {
    pub id: String,
    /// Held out for evaluation instead of training.
    #[serde(default)]
    pub eval: bool,
    /// Room extents from the origin; z is up.
    pub room: [f64; 3],
    pub boxes: Vec<BoxSpec>,
    pub trajectory: CameraRing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub seed: u64,
    pub categories: Vec<CategorySpec>,
    pub scenes: Vec<SyntheticSceneSpec>,
    pub image: ImageSpec,
    pub captions: CaptionRules,
    /// Surface sampling pitch, meters.
    pub spacing: f64,
    /// Uniform per-channel color jitter amplitude.
    pub color_noise: f64,
    pub embedding_dim: usize,
    pub embedding_seed: u64,
    /// Values written to `pla.cfg`.
    pub voxel_size: f64,
    pub gamma: usize,
    pub delta: f64,
    pub iterations: usize,
    pub learning_rate: f64,
}

impl DatasetSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let spec: Self = serde_json::from_str(&read_text(path)?).map_err(|e| Error::parse(path, e.line(), e))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn category_list(&self) -> Result<CategoryList> {
        Ok(CategoryList::new(
            self.categories.iter().map(|c| c.name.clone()).collect(),
            self.categories.iter().map(|c| c.base).collect(),
        )?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.scenes.is_empty() || self.categories.is_empty() {
            return bad("synthetic spec needs at least one scene and one category".into());
        }
        self.category_list()?;
        if self.spacing.is_nan() || self.spacing <= 0.0 || self.image.width == 0 || self.image.height == 0 {
            return bad("spacing and image size must be positive".into());
        }
        if !(self.image.fov_deg > 0.0 && self.image.fov_deg < 180.0) {
            return bad("fov_deg must lie in (0, 180)".into());
        }
        if self.embedding_dim < 2 {
            return bad("embedding_dim must be at least 2".into());
        }
        let mut ids = std::collections::BTreeSet::new();
        for s in &self.scenes {
            if !ids.insert(&s.id) {
                return bad(format!("duplicate scene id `{}`", s.id));
            }
            if s.trajectory.count == 0 {
                return bad(format!("scene `{}`: trajectory needs at least one camera", s.id));
            }
            if s.boxes.is_empty() {
                return bad(format!("scene `{}` has no boxes", s.id));
            }
            for b in &s.boxes {
                let inside = (0..3).all(|a| 0.0 <= b.min[a] && b.min[a] <= b.max[a] && b.max[a] <= s.room[a]);
                if !inside {
                    return bad(format!("scene `{}`: `{}` box leaves the room", s.id, b.category));
                }
            }
        }
        Ok(())
    }

    /// The shipped fixture: six categories (sofa and bookshelf novel), a
    /// floor, three to five furniture boxes and one ignored clutter box per
    /// room, eight cameras per ring.
    pub fn default_fixture() -> Self {
        let seed = 17;
        let categories = [
            ("floor", true, [0.55, 0.45, 0.35]),
            ("cabinet", true, [0.80, 0.20, 0.20]),
            ("chair", true, [0.20, 0.70, 0.25]),
            ("table", true, [0.20, 0.30, 0.85]),
            ("sofa", false, [0.90, 0.75, 0.15]),
            ("bookshelf", false, [0.65, 0.25, 0.80]),
        ]
        .into_iter()
        .map(|(n, base, color)| CategorySpec { name: n.into(), base, color })
        .collect();
        // footprint x, footprint y, height
        let sizes: [(&str, [f64; 3]); 5] = [
            ("cabinet", [0.5, 0.45, 0.9]),
            ("chair", [0.45, 0.45, 0.85]),
            ("table", [1.1, 0.7, 0.75]),
            ("sofa", [1.5, 0.8, 0.8]),
            ("bookshelf", [0.9, 0.35, 1.7]),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut scenes = Vec::new();
        for s in 0..16 {
            let eval = s >= 12;
            let room = [rng.random_range(3.2..4.0), rng.random_range(3.2..4.0), 2.6];
            let mut boxes =
                vec![BoxSpec { category: "floor".into(), min: [0.0; 3], max: [room[0], room[1], 0.0], color: None }];
            // every room holds at least one novel object
            let mut picks: Vec<usize> = vec![3 + s % 2];
            let extra = rng.random_range(2..=4);
            while picks.len() < 1 + extra {
                let k = rng.random_range(0..sizes.len());
                if !picks.contains(&k) || rng.random_bool(0.25) {
                    picks.push(k);
                }
            }
            let mut placed: Vec<[f64; 4]> = Vec::new();
            let mut place = |size: [f64; 3], rng: &mut ChaCha8Rng| -> Option<([f64; 3], [f64; 3])> {
                for _ in 0..200 {
                    let (w, d) = if rng.random_bool(0.5) { (size[0], size[1]) } else { (size[1], size[0]) };
                    let x = rng.random_range(0.1..room[0] - w - 0.1);
                    let y = rng.random_range(0.1..room[1] - d - 0.1);
                    let rect = [x - 0.1, y - 0.1, x + w + 0.1, y + d + 0.1];
                    let clash = placed.iter().any(|r| rect[0] < r[2] && r[0] < rect[2] && rect[1] < r[3] && r[1] < rect[3]);
                    if !clash {
                        placed.push(rect);
                        return Some(([x, y, 0.0], [x + w, y + d, size[2]]));
                    }
                }
                None
            };
            for k in picks {
                let (name, size) = sizes[k];
                if let Some((min, max)) = place(size, &mut rng) {
                    boxes.push(BoxSpec { category: name.into(), min, max, color: None });
                }
            }
            if let Some((min, max)) = place([0.3, 0.3, 0.3], &mut rng) {
                boxes.push(BoxSpec { category: "clutter".into(), min, max, color: Some([0.5, 0.5, 0.5]) });
            }
            let center = [room[0] / 2.0, room[1] / 2.0];
            scenes.push(SyntheticSceneSpec {
                id: format!("{}{:02}", if eval { "eval" } else { "train" }, s),
                eval,
                room,
                boxes,
                trajectory: CameraRing {
                    count: 8,
                    center,
                    radius: 0.3 * room[0].min(room[1]),
                    height: 1.6,
                    target: [center[0], center[1], 0.4],
                    phase_deg: rng.random_range(0.0..45.0),
                },
            });
        }
        Self {
            seed,
            categories,
            scenes,
            image: ImageSpec { width: 64, height: 48, fov_deg: 70.0 },
            captions: CaptionRules::default(),
            spacing: 0.06,
            color_noise: 0.05,
            embedding_dim: 64,
            embedding_seed: 7,
            voxel_size: 0.06,
            gamma: 20,
            delta: 0.6,
            iterations: 600,
            learning_rate: 0.01,
        }
    }
}

/// One generated scene and everything needed to check it.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub cloud: PointCloud,
    pub eval: bool,
    pub frames: Vec<CameraFrame>,
    pub captions: Vec<CaptionRecord>,
    /// Indices of points that win at least one depth pixel.
    pub visible: Vec<u32>,
}

fn f32_round(v: f64) -> f64 {
    v as f32 as f64
}

/// Grid samples over the box surface. Zero-thickness axes give a single
/// face; bottoms resting on the floor are skipped.
fn sample_box(b: &BoxSpec, spacing: f64) -> Vec<Vec3> {
    let mut out = Vec::new();
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        let lu = b.max[u] - b.min[u];
        let lv = b.max[v] - b.min[v];
        if lu <= 0.0 || lv <= 0.0 {
            continue;
        }
        let nu = (lu / spacing).ceil().max(1.0) as usize;
        let nv = (lv / spacing).ceil().max(1.0) as usize;
        let flat = b.max[axis] <= b.min[axis];
        for side in [b.max[axis], b.min[axis]] {
            if side == b.min[axis] && axis == 2 && !flat && b.min[2] <= 0.0 {
                continue;
            }
            for i in 0..nu {
                for j in 0..nv {
                    let mut p = [0.0; 3];
                    p[axis] = side;
                    p[u] = b.min[u] + (i as f64 + 0.5) * lu / nu as f64;
                    p[v] = b.min[v] + (j as f64 + 0.5) * lv / nv as f64;
                    out.push(p.map(f32_round));
                }
            }
            if flat {
                break;
            }
        }
    }
    out
}

fn intrinsics(image: &ImageSpec) -> Intrinsics {
    let f = (image.width as f64 / 2.0) / (image.fov_deg.to_radians() / 2.0).tan();
    Intrinsics { fx: f, fy: f, cx: image.width as f64 / 2.0 - 0.5, cy: image.height as f64 / 2.0 - 0.5 }
}

/// Template caption over the categories covering the most pixels.
pub fn view_caption(pixel_counts: &BTreeMap<usize, usize>, categories: &CategoryList, rules: &CaptionRules) -> String {
    let mut seen: Vec<(usize, usize)> =
        pixel_counts.iter().filter(|(_, &n)| n >= rules.min_pixels).map(|(&k, &n)| (k, n)).collect();
    seen.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    seen.truncate(rules.max_names);
    let names: Vec<String> = seen.iter().map(|(k, _)| format!("a {}", categories.name(*k))).collect();
    match names.len() {
        0 => rules.empty.clone(),
        1 => format!("{} with {}", rules.empty, names[0]),
        n => format!("{} with {} and {}", rules.empty, names[..n - 1].join(", "), names[n - 1]),
    }
}

/// Z-buffered forward projection: per pixel, the nearest point's depth
/// and index.
fn render(cloud: &PointCloud, k: &Intrinsics, pose: &RigidTransform, image: &ImageSpec) -> (Vec<f64>, Vec<Option<u32>>) {
    let inv = pose.inverse();
    let mut depth = vec![0.0; image.width * image.height];
    let mut owner = vec![None; image.width * image.height];
    for (i, p) in cloud.positions.iter().enumerate() {
        let Some((u, v, z)) = pla_core::geometry::project_camera(k, inv.apply(*p)) else { continue };
        let (u, v) = (u.round(), v.round());
        if u < 0.0 || v < 0.0 || u >= image.width as f64 || v >= image.height as f64 {
            continue;
        }
        let at = v as usize * image.width + u as usize;
        let z = f32_round(z);
        if owner[at].is_none() || z < depth[at] {
            depth[at] = z;
            owner[at] = Some(i as u32);
        }
    }
    (depth, owner)
}

/// Generates every scene in `spec`.
pub fn generate(spec: &DatasetSpec) -> Result<Vec<SyntheticScene>> {
    spec.validate()?;
    let categories = spec.category_list()?;
    let k = intrinsics(&spec.image);
    let mut out = Vec::with_capacity(spec.scenes.len());
    for (si, s) in spec.scenes.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ (si as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let (mut positions, mut colors, mut labels) = (Vec::new(), Vec::new(), Vec::new());
        for b in &s.boxes {
            let label = categories.index_of(&b.category).map_or(IGNORED, |k| k as i32);
            let base_color = match (b.color, label) {
                (Some(c), _) => c,
                (None, l) if l >= 0 => spec.categories[l as usize].color,
                _ => [0.5; 3],
            };
            for p in sample_box(b, spec.spacing) {
                positions.push(p);
                let noise = spec.color_noise;
                colors.push(base_color.map(|c| f32_round((c + rng.random_range(-noise..=noise)).clamp(0.0, 1.0))));
                labels.push(label);
            }
        }
        let cloud = PointCloud::new(s.id.clone(), positions, colors, labels, categories.len())?;

        let ring = &s.trajectory;
        let mut frames = Vec::with_capacity(ring.count);
        let mut captions = Vec::with_capacity(ring.count);
        let mut visible = vec![false; cloud.len()];
        for c in 0..ring.count {
            let angle = (ring.phase_deg + 360.0 * c as f64 / ring.count as f64).to_radians();
            let eye = [ring.center[0] + ring.radius * angle.cos(), ring.center[1] + ring.radius * angle.sin(), ring.height];
            // looking outward across the room from near its middle
            let target = [2.0 * eye[0] - ring.target[0], 2.0 * eye[1] - ring.target[1], ring.target[2]];
            let pose = RigidTransform::look_at(eye, target, [0.0, 0.0, 1.0]);
            let (depth, owner) = render(&cloud, &k, &pose, &spec.image);
            let mut counts = BTreeMap::new();
            for i in owner.iter().flatten() {
                visible[*i as usize] = true;
                let l = cloud.labels[*i as usize];
                if l >= 0 {
                    *counts.entry(l as usize).or_insert(0) += 1;
                }
            }
            let frame_id = format!("f{c:02}");
            captions.push(CaptionRecord::view(s.id.clone(), frame_id.clone(), view_caption(&counts, &categories, &spec.captions)));
            frames.push(CameraFrame::new(frame_id, k, pose, spec.image.width, spec.image.height, depth)?);
        }
        let visible = visible.iter().enumerate().filter(|(_, v)| **v).map(|(i, _)| i as u32).collect();
        out.push(SyntheticScene { cloud, eval: s.eval, frames, captions, visible });
    }
    Ok(out)
}

/// Fraction of visible points that fall in the union of the view overlaps.
pub fn coverage(scene: &SyntheticScene, voxel_size: f64, radius: f64) -> Result<f64> {
    if scene.visible.is_empty() {
        return Ok(1.0);
    }
    let mut covered = vec![false; scene.cloud.len()];
    for f in &scene.frames {
        let lifted = back_project(f, 1)?;
        for &i in view_overlap(&scene.cloud, &lifted, voxel_size, radius)?.indices() {
            covered[i as usize] = true;
        }
    }
    let hit = scene.visible.iter().filter(|&&i| covered[i as usize]).count();
    Ok(hit as f64 / scene.visible.len() as f64)
}

/// Every word-sorted subset of the category names, as produced by entity
/// captions, capped at `max_words` words.
fn entity_captions(names: &[String], max_words: usize) -> Vec<String> {
    let mut sorted = names.to_vec();
    sorted.sort();
    let mut out = Vec::new();
    for mask in 1u32..(1 << sorted.len()) {
        if mask.count_ones() as usize <= max_words {
            let words: Vec<&str> =
                (0..sorted.len()).filter(|b| mask & (1 << b) != 0).map(|b| sorted[b].as_str()).collect();
            out.push(words.join(" "));
        }
    }
    out
}

/// Writes the dataset layout under `out`:
/// `scenes/{train,eval}/*.plas`, `frames/<scene>/<frame>.{txt,depth}`,
/// `captions.jsonl`, `lexicon.txt`, `embeddings.plae`, `partition.tsv`,
/// `spec.json` and `pla.cfg`.
pub fn write_dataset(spec: &DatasetSpec, out: &Path) -> Result<Vec<SyntheticScene>> {
    let scenes = generate(spec)?;
    let categories = spec.category_list()?;
    let mut all_captions = Vec::new();
    for s in &scenes {
        let split = if s.eval { "eval" } else { "train" };
        scene::save_scene(&out.join("scenes").join(split).join(format!("{}.plas", s.cloud.scene_id)), &s.cloud, categories.len())?;
        for f in &s.frames {
            frame::save_frame(&out.join("frames").join(&s.cloud.scene_id).join(format!("{}.txt", f.frame_id)), f)?;
        }
        all_captions.extend(s.captions.iter().cloned());
    }
    captions::save_captions(&out.join("captions.jsonl"), &all_captions)?;
    categories::save_partition(&out.join("partition.tsv"), &categories)?;
    categories::save_lexicon(&out.join("lexicon.txt"), &Lexicon::new(categories.names().iter().map(String::as_str)))?;

    let mut table = EmbeddingTable::new(spec.embedding_dim)?;
    let mut texts: Vec<String> = categories.names().to_vec();
    texts.extend(all_captions.iter().map(|c| c.text.clone()));
    texts.extend(entity_captions(categories.names(), spec.captions.max_names));
    for t in texts {
        let v = fallback_embed(&t, spec.embedding_dim, spec.embedding_seed).iter().map(|&x| x as f32).collect();
        table.insert(t, v)?;
    }
    embeddings::save_embeddings(&out.join("embeddings.plae"), &table)?;
    write_bytes(&out.join("spec.json"), (serde_json::to_string_pretty(spec).expect("spec serializes") + "\n").as_bytes())?;

    let mut cfg = RunConfig::default();
    let base = Path::new("");
    for (key, value) in [
        ("scenes", "scenes/train"),
        ("eval_scenes", "scenes/eval"),
        ("frames", "frames"),
        ("captions", "captions.jsonl"),
        ("embeddings", "embeddings.plae"),
        ("lexicon", "lexicon.txt"),
        ("partition", "partition.tsv"),
        ("pairs", "out/pairs"),
        ("checkpoint", "out/model.plam"),
        ("out", "out"),
    ] {
        cfg.set(key, value, base)?;
    }
    cfg.association.voxel_size = spec.voxel_size;
    cfg.association.radius = spec.voxel_size;
    cfg.association.filter.gamma = spec.gamma;
    cfg.association.filter.delta = spec.delta;
    cfg.train.iterations = spec.iterations;
    cfg.train.learning_rate = spec.learning_rate;
    cfg.train.seed = spec.seed;
    cfg.fallback_embeddings = true;
    cfg.fallback_seed = spec.embedding_seed;
    cfg.validate()?;
    write_bytes(&out.join("pla.cfg"), cfg.to_text().as_bytes())?;
    Ok(scenes)
}
