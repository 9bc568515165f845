//! Clip catalog: event categories, semantic groups and the clips behind them.
//!
//! The on-disk form is UTF-8 JSON Lines. The first non-blank line must be a
//! `meta` record carrying the schema version; every following line is a
//! `category`, `group` or `clip` record:
//!
//! ```text
//! {"kind":"meta","schema_version":1,"source":"kinetics-700","version":"2020"}
//! {"kind":"category","category_id":"c01","label":"swimming"}
//! {"kind":"group","group_id":"water","name":"water sports","members":["c01","c02"]}
//! {"kind":"clip","clip_id":"k0001","category_id":"c01","uri":"clips/k0001.mp4","duration_s":10.0,"split":"validation"}
//! ```
//!
//! Group membership is declared on the group. A category may repeat its
//! `group_id`, in which case it must agree with the group that lists it.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::normalize_label;

pub const CATALOG_SCHEMA_VERSION: u32 = 1;

/// Number of labels offered to the model per question, and the minimum
/// number of usable categories a catalog must provide.
pub const CANDIDATE_SET_SIZE: usize = 20;
pub const MIN_USABLE_CATEGORIES: usize = CANDIDATE_SET_SIZE;

macro_rules! id_newtype {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(&self.0)
            }
        }
    };
}

id_newtype!(CategoryId);
id_newtype!(GroupId);
id_newtype!(ClipId);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogMeta {
    pub schema_version: u32,
    pub source: String,
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventCategory {
    pub category_id: CategoryId,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_id: Option<GroupId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemanticGroup {
    pub group_id: GroupId,
    pub name: String,
    pub members: Vec<CategoryId>,
    /// Catch-all groups that must never be sampled for semantic-outlier tasks.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub excluded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipRecord {
    pub clip_id: ClipId,
    pub category_id: CategoryId,
    pub uri: String,
    pub duration_s: f64,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum CatalogLine {
    Meta(CatalogMeta),
    Category(EventCategory),
    Group(SemanticGroup),
    Clip(ClipRecord),
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("cannot read catalog {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: schema violation: {message}")]
    Schema { line: usize, message: String },
    #[error("unsupported catalog schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("{owner_kind} `{owner_id}` references unknown {target_kind} `{target_id}`")]
    DanglingReference {
        owner_kind: &'static str,
        owner_id: String,
        target_kind: &'static str,
        target_id: String,
    },
    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: &'static str, id: String },
    #[error("duplicate label `{label}` (labels must be unique ignoring case and punctuation)")]
    DuplicateLabel { label: String },
    #[error("category `{category_id}` has an invalid label: {reason}")]
    InvalidLabel { category_id: String, reason: String },
    #[error("clip `{clip_id}` is invalid: {reason}")]
    InvalidClip { clip_id: String, reason: String },
    #[error("group `{group_id}` has {members} distinct members; at least 2 are required")]
    GroupTooSmall { group_id: String, members: usize },
    #[error("category `{category_id}` belongs to both group `{first}` and group `{second}`")]
    OverlappingGroups {
        category_id: String,
        first: String,
        second: String,
    },
    #[error("category `{category_id}` declares group `{declared}` but is listed by `{actual}`")]
    GroupMismatch {
        category_id: String,
        declared: String,
        actual: String,
    },
    #[error("insufficient categories: {found} categories have a validation clip, at least {required} are required")]
    InsufficientCategories { found: usize, required: usize },
    #[error("cannot fill a candidate set of {requested} from {available} categories")]
    NotEnoughCandidates { requested: usize, available: usize },
    #[error("candidate request is invalid: {0}")]
    InvalidCandidateRequest(String),
}

/// Per-catalog summary printed by `vector catalog stats`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CatalogStats {
    pub source: String,
    pub version: String,
    pub categories: usize,
    pub groups: usize,
    pub clips: usize,
    pub validation_clips: usize,
    pub train_clips: usize,
    pub usable_categories: usize,
    pub ungrouped_categories: usize,
    pub excluded_groups: usize,
    /// (group id, members with at least one validation clip), manifest order.
    pub usable_group_sizes: Vec<(String, usize)>,
    pub mean_clip_duration_s: f64,
}

/// A validated, immutable clip catalog.
#[derive(Debug, Clone)]
pub struct ClipCatalog {
    meta: CatalogMeta,
    categories: Vec<EventCategory>,
    groups: Vec<SemanticGroup>,
    clips: Vec<ClipRecord>,
    category_index: HashMap<CategoryId, usize>,
    group_index: HashMap<GroupId, usize>,
    category_group: Vec<Option<usize>>,
    validation_clips: Vec<Vec<usize>>,
    train_clips: Vec<Vec<usize>>,
}

pub fn load_catalog(path: impl AsRef<Path>) -> Result<ClipCatalog, CatalogError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CatalogError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ClipCatalog::from_reader(BufReader::new(file)).map_err(|e| match e {
        CatalogError::Io { source, .. } => CatalogError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

impl ClipCatalog {
    pub fn from_reader(reader: impl BufRead) -> Result<Self, CatalogError> {
        let mut meta = None;
        let mut categories = Vec::new();
        let mut groups = Vec::new();
        let mut clips = Vec::new();

        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|source| CatalogError::Io {
                path: PathBuf::new(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let record: CatalogLine =
                serde_json::from_str(&line).map_err(|e| CatalogError::Schema {
                    line: line_no,
                    message: e.to_string(),
                })?;
            match (record, meta.is_some()) {
                (CatalogLine::Meta(m), false) => meta = Some(m),
                (CatalogLine::Meta(_), true) => {
                    return Err(CatalogError::Schema {
                        line: line_no,
                        message: "duplicate meta record".into(),
                    })
                }
                (_, false) => {
                    return Err(CatalogError::Schema {
                        line: line_no,
                        message: "the first record must be the `meta` header".into(),
                    })
                }
                (CatalogLine::Category(c), true) => categories.push(c),
                (CatalogLine::Group(g), true) => groups.push(g),
                (CatalogLine::Clip(c), true) => clips.push(c),
            }
        }

        let meta = meta.ok_or_else(|| CatalogError::Schema {
            line: 0,
            message: "empty catalog: missing `meta` header".into(),
        })?;
        Self::from_parts(meta, categories, groups, clips)
    }

    /// Validates and indexes already-parsed records.
    pub fn from_parts(
        meta: CatalogMeta,
        categories: Vec<EventCategory>,
        groups: Vec<SemanticGroup>,
        clips: Vec<ClipRecord>,
    ) -> Result<Self, CatalogError> {
        if meta.schema_version != CATALOG_SCHEMA_VERSION {
            return Err(CatalogError::SchemaVersion {
                found: meta.schema_version,
                expected: CATALOG_SCHEMA_VERSION,
            });
        }

        let mut category_index = HashMap::with_capacity(categories.len());
        let mut seen_labels = HashSet::with_capacity(categories.len());
        for (i, c) in categories.iter().enumerate() {
            if category_index.insert(c.category_id.clone(), i).is_some() {
                return Err(CatalogError::DuplicateId {
                    kind: "category",
                    id: c.category_id.0.clone(),
                });
            }
            validate_label(c)?;
            if !seen_labels.insert(normalize_label(&c.label)) {
                return Err(CatalogError::DuplicateLabel {
                    label: c.label.clone(),
                });
            }
        }

        let mut group_index = HashMap::with_capacity(groups.len());
        let mut category_group: Vec<Option<usize>> = vec![None; categories.len()];
        for (gi, g) in groups.iter().enumerate() {
            if group_index.insert(g.group_id.clone(), gi).is_some() {
                return Err(CatalogError::DuplicateId {
                    kind: "group",
                    id: g.group_id.0.clone(),
                });
            }
            let distinct: HashSet<&CategoryId> = g.members.iter().collect();
            if distinct.len() < 2 {
                return Err(CatalogError::GroupTooSmall {
                    group_id: g.group_id.0.clone(),
                    members: distinct.len(),
                });
            }
            for member in &g.members {
                let ci = *category_index.get(member).ok_or_else(|| {
                    CatalogError::DanglingReference {
                        owner_kind: "group",
                        owner_id: g.group_id.0.clone(),
                        target_kind: "category",
                        target_id: member.0.clone(),
                    }
                })?;
                match category_group[ci] {
                    Some(prev) if prev != gi => {
                        return Err(CatalogError::OverlappingGroups {
                            category_id: member.0.clone(),
                            first: groups[prev].group_id.0.clone(),
                            second: g.group_id.0.clone(),
                        })
                    }
                    _ => category_group[ci] = Some(gi),
                }
            }
        }

        for (ci, c) in categories.iter().enumerate() {
            if let Some(declared) = &c.group_id {
                if !group_index.contains_key(declared) {
                    return Err(CatalogError::DanglingReference {
                        owner_kind: "category",
                        owner_id: c.category_id.0.clone(),
                        target_kind: "group",
                        target_id: declared.0.clone(),
                    });
                }
                let actual = category_group[ci].map(|gi| &groups[gi].group_id);
                if actual != Some(declared) {
                    return Err(CatalogError::GroupMismatch {
                        category_id: c.category_id.0.clone(),
                        declared: declared.0.clone(),
                        actual: actual.map(|g| g.0.clone()).unwrap_or_else(|| "<none>".into()),
                    });
                }
            }
        }

        let mut seen_clips = HashSet::with_capacity(clips.len());
        let mut validation_clips = vec![Vec::new(); categories.len()];
        let mut train_clips = vec![Vec::new(); categories.len()];
        for (k, clip) in clips.iter().enumerate() {
            if !seen_clips.insert(&clip.clip_id) {
                return Err(CatalogError::DuplicateId {
                    kind: "clip",
                    id: clip.clip_id.0.clone(),
                });
            }
            if !(clip.duration_s.is_finite() && clip.duration_s > 0.0) {
                return Err(CatalogError::InvalidClip {
                    clip_id: clip.clip_id.0.clone(),
                    reason: format!("duration_s must be > 0, got {}", clip.duration_s),
                });
            }
            if clip.uri.trim().is_empty() {
                return Err(CatalogError::InvalidClip {
                    clip_id: clip.clip_id.0.clone(),
                    reason: "empty uri".into(),
                });
            }
            let ci = *category_index.get(&clip.category_id).ok_or_else(|| {
                CatalogError::DanglingReference {
                    owner_kind: "clip",
                    owner_id: clip.clip_id.0.clone(),
                    target_kind: "category",
                    target_id: clip.category_id.0.clone(),
                }
            })?;
            match clip.split {
                Split::Validation => validation_clips[ci].push(k),
                Split::Train => train_clips[ci].push(k),
            }
        }

        let usable = validation_clips.iter().filter(|v| !v.is_empty()).count();
        if usable < MIN_USABLE_CATEGORIES {
            return Err(CatalogError::InsufficientCategories {
                found: usable,
                required: MIN_USABLE_CATEGORIES,
            });
        }

        Ok(Self {
            meta,
            categories,
            groups,
            clips,
            category_index,
            group_index,
            category_group,
            validation_clips,
            train_clips,
        })
    }

    pub fn meta(&self) -> &CatalogMeta {
        &self.meta
    }

    pub fn categories(&self) -> &[EventCategory] {
        &self.categories
    }

    pub fn groups(&self) -> &[SemanticGroup] {
        &self.groups
    }

    pub fn clips(&self) -> &[ClipRecord] {
        &self.clips
    }

    pub fn category_position(&self, id: &CategoryId) -> Option<usize> {
        self.category_index.get(id).copied()
    }

    pub fn category(&self, id: &CategoryId) -> Option<&EventCategory> {
        self.category_position(id).map(|i| &self.categories[i])
    }

    pub fn group(&self, id: &GroupId) -> Option<&SemanticGroup> {
        self.group_index.get(id).map(|&i| &self.groups[i])
    }

    /// Group owning the category at `position`, if any.
    pub fn group_of_position(&self, position: usize) -> Option<&SemanticGroup> {
        self.category_group[position].map(|gi| &self.groups[gi])
    }

    pub fn group_of(&self, id: &CategoryId) -> Option<&SemanticGroup> {
        self.category_position(id)
            .and_then(|p| self.group_of_position(p))
    }

    pub fn clip_by_id(&self, id: &ClipId) -> Option<&ClipRecord> {
        self.clips.iter().find(|c| &c.clip_id == id)
    }

    pub fn clips_of(&self, position: usize, split: Split) -> impl Iterator<Item = &ClipRecord> {
        let list = match split {
            Split::Validation => &self.validation_clips[position],
            Split::Train => &self.train_clips[position],
        };
        list.iter().map(move |&k| &self.clips[k])
    }

    pub fn has_clip(&self, position: usize, split: Split) -> bool {
        match split {
            Split::Validation => !self.validation_clips[position].is_empty(),
            Split::Train => !self.train_clips[position].is_empty(),
        }
    }

    /// Category positions with at least one clip of `split`, manifest order.
    pub fn usable_positions(&self, split: Split) -> Vec<usize> {
        (0..self.categories.len())
            .filter(|&i| self.has_clip(i, split))
            .collect()
    }

    /// Members of `group` that have a clip of `split`, manifest order of the group.
    pub fn usable_members(&self, group: &SemanticGroup, split: Split) -> Vec<usize> {
        let mut seen = HashSet::new();
        group
            .members
            .iter()
            .filter_map(|m| self.category_position(m))
            .filter(|&p| seen.insert(p) && self.has_clip(p, split))
            .collect()
    }

    pub fn stats(&self) -> CatalogStats {
        let validation: usize = self.validation_clips.iter().map(Vec::len).sum();
        let train: usize = self.train_clips.iter().map(Vec::len).sum();
        let total_duration: f64 = self.clips.iter().map(|c| c.duration_s).sum();
        CatalogStats {
            source: self.meta.source.clone(),
            version: self.meta.version.clone(),
            categories: self.categories.len(),
            groups: self.groups.len(),
            clips: self.clips.len(),
            validation_clips: validation,
            train_clips: train,
            usable_categories: self.usable_positions(Split::Validation).len(),
            ungrouped_categories: self.category_group.iter().filter(|g| g.is_none()).count(),
            excluded_groups: self.groups.iter().filter(|g| g.excluded).count(),
            usable_group_sizes: self
                .groups
                .iter()
                .map(|g| (g.group_id.0.clone(), self.usable_members(g, Split::Validation).len()))
                .collect(),
            mean_clip_duration_s: if self.clips.is_empty() {
                0.0
            } else {
                total_duration / self.clips.len() as f64
            },
        }
    }

    /// Serializes back to the manifest format (meta, categories, groups, clips).
    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        let mut emit = |line: CatalogLine| -> std::io::Result<()> {
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")
        };
        emit(CatalogLine::Meta(self.meta.clone()))?;
        for c in &self.categories {
            emit(CatalogLine::Category(c.clone()))?;
        }
        for g in &self.groups {
            emit(CatalogLine::Group(g.clone()))?;
        }
        for c in &self.clips {
            emit(CatalogLine::Clip(c.clone()))?;
        }
        Ok(())
    }

    /// Category positions for a candidate set: all of `must_include` plus
    /// uniformly drawn distractors, in a seeded random order.
    pub fn sample_candidate_positions<R: Rng + ?Sized>(
        &self,
        must_include: &[usize],
        size: usize,
        rng: &mut R,
    ) -> Result<Vec<usize>, CatalogError> {
        let mut included = HashSet::with_capacity(must_include.len());
        for &p in must_include {
            if p >= self.categories.len() {
                return Err(CatalogError::InvalidCandidateRequest(format!(
                    "category position {p} out of range"
                )));
            }
            if !included.insert(p) {
                return Err(CatalogError::InvalidCandidateRequest(format!(
                    "category `{}` listed twice",
                    self.categories[p].category_id
                )));
            }
        }
        if size < must_include.len() {
            return Err(CatalogError::InvalidCandidateRequest(format!(
                "size {size} is smaller than the {} required categories",
                must_include.len()
            )));
        }
        if size > self.categories.len() {
            return Err(CatalogError::NotEnoughCandidates {
                requested: size,
                available: self.categories.len(),
            });
        }
        let pool: Vec<usize> = (0..self.categories.len())
            .filter(|p| !included.contains(p))
            .collect();
        let mut chosen: Vec<usize> = must_include.to_vec();
        chosen.extend(pool.choose_multiple(rng, size - must_include.len()).copied());
        chosen.shuffle(rng);
        Ok(chosen)
    }

    pub fn label_at(&self, position: usize) -> &str {
        &self.categories[position].label
    }
}

/// Draws a shuffled candidate label list of `size` containing every category
/// in `must_include`.
pub fn sample_candidate_set<R: Rng + ?Sized>(
    catalog: &ClipCatalog,
    must_include: &[CategoryId],
    size: usize,
    rng: &mut R,
) -> Result<Vec<String>, CatalogError> {
    let positions = must_include
        .iter()
        .map(|id| {
            catalog
                .category_position(id)
                .ok_or_else(|| CatalogError::InvalidCandidateRequest(format!("unknown category `{id}`")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let chosen = catalog.sample_candidate_positions(&positions, size, rng)?;
    Ok(chosen.into_iter().map(|p| catalog.label_at(p).to_owned()).collect())
}

fn validate_label(c: &EventCategory) -> Result<(), CatalogError> {
    let bad = |reason: &str| CatalogError::InvalidLabel {
        category_id: c.category_id.0.clone(),
        reason: reason.to_owned(),
    };
    let label = c.label.trim();
    if label.is_empty() || normalize_label(label).is_empty() {
        return Err(bad("label has no alphanumeric content"));
    }
    if label != c.label {
        return Err(bad("label has leading or trailing whitespace"));
    }
    // Commas and newlines separate list answers; bare numbers and single
    // capital letters are reserved as candidate aliases.
    if label.contains([',', ';', '\n', '\r']) {
        return Err(bad("label contains a list separator"));
    }
    if label.chars().all(|ch| ch.is_ascii_digit()) {
        return Err(bad("label is a bare number"));
    }
    if label.len() == 1 && label.chars().all(|ch| ch.is_ascii_uppercase()) {
        return Err(bad("label is a single capital letter"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use crate::testkit::{fixture_catalog, fixture_parts};

    fn reload(parts: (CatalogMeta, Vec<EventCategory>, Vec<SemanticGroup>, Vec<ClipRecord>)) -> Result<ClipCatalog, CatalogError> {
        ClipCatalog::from_parts(parts.0, parts.1, parts.2, parts.3)
    }

    #[test]
    fn fixture_counts() {
        let cat = fixture_catalog();
        let s = cat.stats();
        assert_eq!((s.categories, s.groups, s.clips), (20, 2, 40));
    }

    #[test]
    fn jsonl_round_trip() {
        let cat = fixture_catalog();
        let mut buf = Vec::new();
        cat.write_jsonl(&mut buf).unwrap();
        let again = ClipCatalog::from_reader(&buf[..]).unwrap();
        assert_eq!(again.categories(), cat.categories());
        assert_eq!(again.groups(), cat.groups());
        assert_eq!(again.clips(), cat.clips());
    }

    #[test]
    fn dangling_clip_names_the_clip() {
        let mut parts = fixture_parts();
        parts.3[5].category_id = CategoryId::new("nope");
        let bad_clip = parts.3[5].clip_id.0.clone();
        let err = reload(parts).unwrap_err();
        assert!(matches!(err, CatalogError::DanglingReference { .. }));
        assert!(err.to_string().contains(&bad_clip), "{err}");
    }

    #[test]
    fn nineteen_categories_rejected() {
        let mut parts = fixture_parts();
        let dropped = parts.1.pop().unwrap().category_id;
        parts.3.retain(|c| c.category_id != dropped);
        for g in &mut parts.2 {
            g.members.retain(|m| m != &dropped);
        }
        let err = reload(parts).unwrap_err();
        match err {
            CatalogError::InsufficientCategories { found, required } => {
                assert_eq!((found, required), (19, 20));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn category_without_validation_clip_is_not_usable() {
        let mut parts = fixture_parts();
        let target = parts.1[0].category_id.clone();
        for c in &mut parts.3 {
            if c.category_id == target {
                c.split = Split::Train;
            }
        }
        assert!(matches!(
            reload(parts),
            Err(CatalogError::InsufficientCategories { found: 19, .. })
        ));
    }

    #[test]
    fn duplicate_ids_and_labels() {
        let mut parts = fixture_parts();
        parts.3[1].clip_id = parts.3[0].clip_id.clone();
        assert!(matches!(reload(parts), Err(CatalogError::DuplicateId { kind: "clip", .. })));

        let mut parts = fixture_parts();
        parts.1[1].label = parts.1[0].label.to_uppercase();
        assert!(matches!(reload(parts), Err(CatalogError::DuplicateLabel { .. })));

        let mut parts = fixture_parts();
        parts.1[1].category_id = parts.1[0].category_id.clone();
        assert!(matches!(reload(parts), Err(CatalogError::DuplicateId { kind: "category", .. })));
    }

    #[test]
    fn overlapping_groups_rejected() {
        let mut parts = fixture_parts();
        let shared = parts.2[0].members[0].clone();
        parts.2[1].members.push(shared);
        assert!(matches!(reload(parts), Err(CatalogError::OverlappingGroups { .. })));
    }

    #[test]
    fn declared_group_must_agree() {
        let mut parts = fixture_parts();
        let g1 = parts.2[1].group_id.clone();
        let member_of_g0 = parts.2[0].members[0].clone();
        for c in &mut parts.1 {
            if c.category_id == member_of_g0 {
                c.group_id = Some(g1.clone());
            }
        }
        assert!(matches!(reload(parts), Err(CatalogError::GroupMismatch { .. })));
    }

    #[test]
    fn bad_labels_and_durations() {
        for label in ["a, b", "12", "Q", "  padded", "!!"] {
            let mut parts = fixture_parts();
            parts.1[0].label = label.into();
            assert!(matches!(reload(parts), Err(CatalogError::InvalidLabel { .. })), "{label}");
        }
        let mut parts = fixture_parts();
        parts.3[0].duration_s = 0.0;
        assert!(matches!(reload(parts), Err(CatalogError::InvalidClip { .. })));
    }

    #[test]
    fn schema_errors_carry_line_numbers() {
        let cat = fixture_catalog();
        let mut buf = Vec::new();
        cat.write_jsonl(&mut buf).unwrap();
        let mut text = String::from_utf8(buf).unwrap();
        text.push_str("{\"kind\":\"clip\",\"clip_id\":\"x\"}\n");
        let lines = text.lines().count();
        match ClipCatalog::from_reader(text.as_bytes()) {
            Err(CatalogError::Schema { line, .. }) => assert_eq!(line, lines),
            other => panic!("unexpected {other:?}"),
        }
        let headless = text.lines().skip(1).collect::<Vec<_>>().join("\n");
        assert!(matches!(
            ClipCatalog::from_reader(headless.as_bytes()),
            Err(CatalogError::Schema { line: 1, .. })
        ));
        let unknown_field = text.replacen("\"source\"", "\"extra\":1,\"source\"", 1);
        assert!(matches!(
            ClipCatalog::from_reader(unknown_field.as_bytes()),
            Err(CatalogError::Schema { line: 1, .. })
        ));
    }

    #[test]
    fn candidate_set_contains_required_labels() {
        let cat = fixture_catalog();
        let must: Vec<CategoryId> = cat.categories()[..4].iter().map(|c| c.category_id.clone()).collect();
        let mut rng = SeededRng::from_seed(7);
        let labels = sample_candidate_set(&cat, &must, 20, &mut rng).unwrap();
        assert_eq!(labels.len(), 20);
        let set: HashSet<&String> = labels.iter().collect();
        assert_eq!(set.len(), 20);
        for c in &cat.categories()[..4] {
            assert!(set.contains(&c.label));
        }
    }

    #[test]
    fn full_candidate_set_is_a_shuffle() {
        let cat = fixture_catalog();
        let must: Vec<CategoryId> = cat.categories().iter().map(|c| c.category_id.clone()).collect();
        let mut rng = SeededRng::from_seed(3);
        let labels = sample_candidate_set(&cat, &must, 20, &mut rng).unwrap();
        let mut sorted = labels.clone();
        sorted.sort();
        let mut expected: Vec<String> = cat.categories().iter().map(|c| c.label.clone()).collect();
        expected.sort();
        assert_eq!(sorted, expected);
    }

    #[test]
    fn candidate_set_is_deterministic() {
        let cat = fixture_catalog();
        let must = vec![cat.categories()[2].category_id.clone()];
        let a = sample_candidate_set(&cat, &must, 20, &mut SeededRng::from_seed(7)).unwrap();
        let b = sample_candidate_set(&cat, &must, 20, &mut SeededRng::from_seed(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn candidate_set_errors() {
        let cat = fixture_catalog();
        let mut rng = SeededRng::from_seed(1);
        assert!(matches!(
            sample_candidate_set(&cat, &[], 21, &mut rng),
            Err(CatalogError::NotEnoughCandidates { requested: 21, available: 20 })
        ));
        let two: Vec<CategoryId> = cat.categories()[..2].iter().map(|c| c.category_id.clone()).collect();
        assert!(sample_candidate_set(&cat, &two, 1, &mut rng).is_err());
        assert!(sample_candidate_set(&cat, &[CategoryId::new("zzz")], 5, &mut rng).is_err());
    }
}
