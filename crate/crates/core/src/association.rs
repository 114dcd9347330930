//! Hierarchical point-caption association.
//!
//! A scene yields one scene-level pair (every point, the scene summary), one
//! view-level pair per frame (the points overlapping the frame's
//! back-projection) and entity-level pairs carved out of adjacent views by set
//! difference and intersection of both their point sets and entity words.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::geometry::{back_project, view_overlap, CameraFrame, PointCloud, DEFAULT_VOXEL_SIZE};
use crate::index_set::PointIndexSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Level {
    Scene,
    View,
    Entity,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Scene, Level::View, Level::Entity];

    pub fn as_str(self) -> &'static str {
        match self {
            Level::Scene => "scene",
            Level::View => "view",
            Level::Entity => "entity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "scene" => Some(Level::Scene),
            "view" => Some(Level::View),
            "entity" => Some(Level::Entity),
            _ => None,
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which of the three entity candidates a pair came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EntityKind {
    /// Points and words of the first view absent from the second.
    FirstOnly,
    /// Points and words of the second view absent from the first.
    SecondOnly,
    /// Points and words shared by both views.
    Shared,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum CaptionSource {
    Scene,
    View { frame: String },
    Entity { first: String, second: String, kind: EntityKind },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CaptionRecord {
    pub scene_id: String,
    pub source: CaptionSource,
    pub text: String,
}

impl CaptionRecord {
    pub fn scene(scene_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self { scene_id: scene_id.into(), source: CaptionSource::Scene, text: text.into() }
    }

    pub fn view(scene_id: impl Into<String>, frame: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            scene_id: scene_id.into(),
            source: CaptionSource::View { frame: frame.into() },
            text: text.into(),
        }
    }

    pub fn level(&self) -> Level {
        match self.source {
            CaptionSource::Scene => Level::Scene,
            CaptionSource::View { .. } => Level::View,
            CaptionSource::Entity { .. } => Level::Entity,
        }
    }

    /// The frame a view caption belongs to.
    pub fn frame(&self) -> Option<&str> {
        match &self.source {
            CaptionSource::View { frame } => Some(frame),
            _ => None,
        }
    }
}

/// Sorted, unique, lower-case entity words.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct EntitySet(Vec<String>);

impl EntitySet {
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let set: BTreeSet<String> = words
            .into_iter()
            .map(|w| w.as_ref().trim().to_lowercase())
            .filter(|w| !w.is_empty())
            .collect();
        Self(set.into_iter().collect())
    }

    pub fn words(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn difference(&self, other: &Self) -> Self {
        Self(self.0.iter().filter(|w| other.0.binary_search(w).is_err()).cloned().collect())
    }

    pub fn intersection(&self, other: &Self) -> Self {
        Self(self.0.iter().filter(|w| other.0.binary_search(w).is_ok()).cloned().collect())
    }

    /// Words joined by single spaces in sorted order.
    pub fn caption(&self) -> String {
        self.0.join(" ")
    }
}

/// Entity vocabulary; multi-word phrases are matched before their sub-words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    // longest phrase first, then lexicographic
    phrases: Vec<Vec<String>>,
}

impl Lexicon {
    pub fn new<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let unique: BTreeSet<Vec<String>> = entries
            .into_iter()
            .map(|e| tokenize(e.as_ref()))
            .filter(|words| !words.is_empty())
            .collect();
        let mut phrases: Vec<Vec<String>> = unique.into_iter().collect();
        phrases.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        Self { phrases }
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = String> + '_ {
        self.phrases.iter().map(|p| p.join(" "))
    }
}

fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(ToString::to_string)
        .collect()
}

/// `token` is `word` or its plural with an `s`/`es` suffix.
fn matches_word(token: &str, word: &str) -> bool {
    match token.strip_prefix(word) {
        Some(rest) => rest.is_empty() || rest == "s" || rest == "es",
        None => false,
    }
}

/// Vocabulary entries occurring in `caption` as whole words.
pub fn extract_entities(caption: &str, lexicon: &Lexicon) -> EntitySet {
    let tokens = tokenize(caption);
    let mut found = BTreeSet::new();
    let mut i = 0;
    while i < tokens.len() {
        let hit = lexicon.phrases.iter().find(|phrase| {
            i + phrase.len() <= tokens.len()
                && phrase.iter().zip(&tokens[i..]).all(|(w, t)| matches_word(t, w))
        });
        match hit {
            Some(phrase) => {
                found.insert(phrase.join(" "));
                i += phrase.len();
            }
            None => i += 1,
        }
    }
    EntitySet(found.into_iter().collect())
}

/// Precomputed scene summaries, keyed by scene id.
pub type SceneSummaries = BTreeMap<String, String>;

/// Scene caption: the ingested summary when one exists, otherwise the
/// deduplicated concatenation of the view captions in input order.
pub fn scene_caption(view_captions: &[CaptionRecord], summaries: &SceneSummaries) -> Result<CaptionRecord> {
    let first = view_captions
        .first()
        .ok_or_else(|| Error::SceneWithoutViews(String::from("<unknown>")))?;
    let scene_id = &first.scene_id;
    if let Some(bad) = view_captions.iter().find(|c| &c.scene_id != scene_id || c.level() != Level::View) {
        return Err(Error::InvalidParameter {
            name: "view_captions",
            reason: alloc::format!(
                "expected view captions of scene `{scene_id}`, got {} caption of `{}`",
                bad.level(),
                bad.scene_id
            ),
        });
    }
    if let Some(summary) = summaries.get(scene_id) {
        return Ok(CaptionRecord::scene(scene_id.clone(), summary.clone()));
    }
    let mut seen = BTreeSet::new();
    let mut parts = Vec::new();
    for c in view_captions {
        let t = c.text.trim();
        if !t.is_empty() && seen.insert(t) {
            parts.push(t);
        }
    }
    Ok(CaptionRecord::scene(scene_id.clone(), parts.join(" ")))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PointCaptionPair {
    pub points: PointIndexSet,
    pub caption: CaptionRecord,
}

impl PointCaptionPair {
    pub fn level(&self) -> Level {
        self.caption.level()
    }
}

/// Size filter for entity-level pairs: `gamma < |p| < delta * min(|p_i|, |p_j|)`
/// with a non-empty word set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntityFilter {
    pub gamma: usize,
    pub delta: f64,
}

impl Default for EntityFilter {
    fn default() -> Self {
        Self { gamma: 100, delta: 0.3 }
    }
}

impl EntityFilter {
    pub fn new(gamma: usize, delta: f64) -> Result<Self> {
        let f = Self { gamma, delta };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma < 1 {
            return Err(Error::InvalidParameter { name: "gamma", reason: "must be at least 1".into() });
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::InvalidParameter { name: "delta", reason: "must lie in (0, 1]".into() });
        }
        Ok(())
    }

    pub fn accepts(&self, points: usize, words: usize, first_view: usize, second_view: usize) -> bool {
        let upper = self.delta * first_view.min(second_view) as f64;
        self.gamma < points && (points as f64) < upper && words > 0
    }
}

/// One view's association result: its frame, overlapping points and entity words.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewEntry {
    pub frame_id: String,
    pub points: PointIndexSet,
    pub entities: EntitySet,
}

/// The surviving entity-level candidates of two views, in
/// `first∖second`, `second∖first`, `first∩second` order.
pub fn entity_pairs(first: &ViewEntry, second: &ViewEntry, filter: &EntityFilter) -> Vec<PointCaptionPair> {
    let candidates = [
        (EntityKind::FirstOnly, first.points.difference(&second.points), first.entities.difference(&second.entities)),
        (EntityKind::SecondOnly, second.points.difference(&first.points), second.entities.difference(&first.entities)),
        (EntityKind::Shared, first.points.intersection(&second.points), first.entities.intersection(&second.entities)),
    ];
    debug_assert!(partition_law_holds(&first.points, &second.points, &candidates));

    let (ni, nj) = (first.points.len(), second.points.len());
    candidates
        .into_iter()
        .filter(|(_, pts, words)| filter.accepts(pts.len(), words.len(), ni, nj))
        .map(|(kind, points, words)| PointCaptionPair {
            caption: CaptionRecord {
                scene_id: points.scene_id().into(),
                source: CaptionSource::Entity {
                    first: first.frame_id.clone(),
                    second: second.frame_id.clone(),
                    kind,
                },
                text: words.caption(),
            },
            points,
        })
        .collect()
}

fn partition_law_holds(
    a: &PointIndexSet,
    b: &PointIndexSet,
    parts: &[(EntityKind, PointIndexSet, EntitySet); 3],
) -> bool {
    let (only_a, only_b, both) = (&parts[0].1, &parts[1].1, &parts[2].1);
    let disjoint = only_a.intersection(only_b).is_empty()
        && only_a.intersection(both).is_empty()
        && only_b.intersection(both).is_empty();
    disjoint && only_a.union(only_b).union(both) == a.union(b)
}

/// Which view pairs feed entity-level association.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Adjacency {
    /// Consecutive frames in frame-id order.
    #[default]
    Consecutive,
    /// Every unordered pair of frames.
    AllPairs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssociationConfig {
    pub voxel_size: f64,
    pub radius: f64,
    pub stride: usize,
    pub filter: EntityFilter,
    pub adjacency: Adjacency,
}

impl Default for AssociationConfig {
    fn default() -> Self {
        Self {
            voxel_size: DEFAULT_VOXEL_SIZE,
            radius: DEFAULT_VOXEL_SIZE,
            stride: 1,
            filter: EntityFilter::default(),
            adjacency: Adjacency::Consecutive,
        }
    }
}

impl AssociationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.voxel_size > 0.0) {
            return Err(Error::InvalidParameter { name: "voxel_size", reason: "must be positive".into() });
        }
        if !(self.radius > 0.0) {
            return Err(Error::InvalidParameter { name: "radius", reason: "must be positive".into() });
        }
        if self.stride < 1 {
            return Err(Error::InvalidParameter { name: "stride", reason: "must be at least 1".into() });
        }
        self.filter.validate()
    }
}

/// All point-caption pairs for one scene.
///
/// `captions` holds the scene's view captions and, optionally, a scene-level
/// summary record. Output order: the scene pair, view pairs by frame id, then
/// entity pairs by `(first frame, second frame, kind)`.
pub fn build_pairs(
    scene: &PointCloud,
    frames: &[CameraFrame],
    captions: &[CaptionRecord],
    lexicon: &Lexicon,
    config: &AssociationConfig,
) -> Result<Vec<PointCaptionPair>> {
    config.validate()?;
    let mut frame_by_id: BTreeMap<&str, &CameraFrame> = BTreeMap::new();
    for f in frames {
        if frame_by_id.insert(f.frame_id.as_str(), f).is_some() {
            return Err(Error::InvalidParameter {
                name: "frames",
                reason: alloc::format!("duplicate frame `{}`", f.frame_id),
            });
        }
    }

    let mut summaries = SceneSummaries::new();
    let mut view_caption: BTreeMap<&str, &CaptionRecord> = BTreeMap::new();
    for c in captions.iter().filter(|c| c.scene_id == scene.scene_id) {
        match &c.source {
            CaptionSource::Scene => {
                summaries.insert(c.scene_id.clone(), c.text.clone());
            }
            CaptionSource::View { frame } => {
                if !frame_by_id.contains_key(frame.as_str()) {
                    return Err(Error::MissingFrame(frame.clone()));
                }
                if view_caption.insert(frame.as_str(), c).is_some() {
                    return Err(Error::InvalidParameter {
                        name: "captions",
                        reason: alloc::format!("frame `{frame}` has more than one view caption"),
                    });
                }
            }
            CaptionSource::Entity { .. } => {}
        }
    }
    if let Some(id) = frame_by_id.keys().find(|id| !view_caption.contains_key(*id)) {
        return Err(Error::MissingCaption((*id).into()));
    }
    if view_caption.is_empty() {
        return Err(Error::SceneWithoutViews(scene.scene_id.clone()));
    }

    let ordered_views: Vec<CaptionRecord> = view_caption.values().map(|c| (*c).clone()).collect();
    let mut pairs = Vec::new();
    pairs.push(PointCaptionPair {
        points: PointIndexSet::full(scene.scene_id.clone(), scene.len()),
        caption: scene_caption(&ordered_views, &summaries)?,
    });

    let mut views = Vec::with_capacity(frame_by_id.len());
    for (id, frame) in &frame_by_id {
        let caption = view_caption[id];
        let lifted = back_project(frame, config.stride)?;
        let points = view_overlap(scene, &lifted, config.voxel_size, config.radius)?;
        if !points.is_empty() {
            pairs.push(PointCaptionPair { points: points.clone(), caption: caption.clone() });
        }
        views.push(ViewEntry {
            frame_id: (*id).into(),
            points,
            entities: extract_entities(&caption.text, lexicon),
        });
    }

    match config.adjacency {
        Adjacency::Consecutive => {
            for w in views.windows(2) {
                pairs.extend(entity_pairs(&w[0], &w[1], &config.filter));
            }
        }
        Adjacency::AllPairs => {
            for i in 0..views.len() {
                for j in i + 1..views.len() {
                    pairs.extend(entity_pairs(&views[i], &views[j], &config.filter));
                }
            }
        }
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lex(words: &[&str]) -> Lexicon {
        Lexicon::new(words.iter().copied())
    }

    fn set(words: &[&str]) -> EntitySet {
        EntitySet::from_words(words.iter().copied())
    }

    #[test]
    fn plural_normalization() {
        let got = extract_entities("a living room with a couch and two chairs", &lex(&["couch", "chair", "table"]));
        assert_eq!(got, set(&["couch", "chair"]));
    }

    #[test]
    fn empty_caption() {
        assert!(extract_entities("", &lex(&["chair"])).is_empty());
    }

    #[test]
    fn es_plural_and_whole_words() {
        let l = lex(&["bench", "art"]);
        assert_eq!(extract_entities("two benches near the party", &l), set(&["bench"]));
    }

    #[test]
    fn phrases_before_sub_words() {
        let l = lex(&["curtain", "shower curtain", "coffee table", "table"]);
        assert_eq!(extract_entities("A shower curtain and a coffee table.", &l), set(&["coffee table", "shower curtain"]));
        assert_eq!(
            extract_entities("curtains beside the shower curtain", &l),
            set(&["curtain", "shower curtain"])
        );
    }

    #[test]
    fn kitchen_caption_against_scannet_vocabulary() {
        let l = lex(&[
            "wall", "floor", "cabinet", "bed", "chair", "sofa", "table", "door", "window", "bookshelf",
            "picture", "counter", "desk", "curtain", "refrigerator", "shower curtain", "toilet", "sink",
            "bathtub",
        ]);
        let got = extract_entities(
            "a kitchen with wooden cabinets, a white refrigerator and a sink under the window",
            &l,
        );
        assert_eq!(got, set(&["cabinet", "refrigerator", "sink", "window"]));
    }

    #[test]
    fn scene_caption_fallbacks() {
        let none = SceneSummaries::new();
        let one = [CaptionRecord::view("s0", "f0", "a bedroom with a bed")];
        assert_eq!(scene_caption(&one, &none).unwrap().text, "a bedroom with a bed");

        let twice = [CaptionRecord::view("s0", "f0", "a sofa"), CaptionRecord::view("s0", "f1", "a sofa")];
        assert_eq!(scene_caption(&twice, &none).unwrap().text, "a sofa");

        let mut summaries = SceneSummaries::new();
        summaries.insert("s0".into(), "the scene contains a kitchen and living room".into());
        let got = scene_caption(&one, &summaries).unwrap();
        assert_eq!(got.text, "the scene contains a kitchen and living room");
        assert_eq!(got.level(), Level::Scene);

        assert!(matches!(scene_caption(&[], &none), Err(Error::SceneWithoutViews(_))));
    }

    fn view(frame: &str, range: core::ops::RangeInclusive<u32>, words: &[&str]) -> ViewEntry {
        ViewEntry {
            frame_id: frame.into(),
            points: PointIndexSet::from_sorted("s", range.collect()).unwrap(),
            entities: set(words),
        }
    }

    #[test]
    fn intersection_at_gamma_is_dropped() {
        let a = view("f0", 1..=300, &["sofa", "table"]);
        let b = view("f1", 201..=500, &["table", "chair"]);
        let filter = EntityFilter { gamma: 100, delta: 0.3 };
        // differences have 200 points; 0.3 * 300 = 90 bounds them out too
        assert!(entity_pairs(&a, &b, &filter).is_empty());

        let loose = EntityFilter { gamma: 100, delta: 1.0 };
        let got = entity_pairs(&a, &b, &loose);
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].caption.text, "sofa");
        assert_eq!(got[0].points.len(), 200);
        assert_eq!(got[1].caption.text, "chair");

        let low = EntityFilter { gamma: 99, delta: 1.0 };
        let got = entity_pairs(&a, &b, &low);
        assert_eq!(got.len(), 3);
        assert_eq!(got[2].caption.text, "table");
        assert_eq!(got[2].points.indices(), &(201..=300).collect::<Vec<_>>()[..]);
    }

    #[test]
    fn self_pair_degeneracy() {
        let a = view("f0", 0..=499, &["sofa", "table"]);
        let b = view("f1", 0..=499, &["sofa", "table"]);
        // differences are empty; the intersection is the whole view, never < delta * |view|
        assert!(entity_pairs(&a, &b, &EntityFilter { gamma: 1, delta: 1.0 }).is_empty());
        assert!(a.points.difference(&b.points).is_empty());
        assert_eq!(a.entities.intersection(&b.entities).caption(), "sofa table");
    }

    #[test]
    fn empty_word_sets_are_dropped() {
        let a = view("f0", 0..=999, &["sofa"]);
        let b = view("f1", 800..=1799, &["sofa"]);
        // both differences have 800 points but no words; intersection has 200 points and "sofa"
        let got = entity_pairs(&a, &b, &EntityFilter { gamma: 100, delta: 0.3 });
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].caption.text, "sofa");
        assert!(matches!(got[0].caption.source, CaptionSource::Entity { kind: EntityKind::Shared, .. }));
    }

    #[test]
    fn filter_validation() {
        assert!(EntityFilter::new(0, 0.3).is_err());
        assert!(EntityFilter::new(1, 0.0).is_err());
        assert!(EntityFilter::new(1, 1.5).is_err());
        assert!(EntityFilter::new(1, 1.0).is_ok());
    }

    #[test]
    fn entity_set_algebra() {
        let a = set(&["Sofa", "table", "table", " "]);
        assert_eq!(a.words(), &["sofa".to_string(), "table".to_string()]);
        let b = set(&["table", "chair"]);
        assert_eq!(a.difference(&b), set(&["sofa"]));
        assert_eq!(a.intersection(&b).caption(), "table");
        assert_eq!(set(&["table", "chair", "bed"]).caption(), "bed chair table");
    }
}
