//! Small in-memory catalogs for tests, examples and `vector catalog demo`.

use crate::catalog::{
    CatalogMeta, CategoryId, ClipCatalog, ClipId, ClipRecord, EventCategory, GroupId, SemanticGroup,
    Split, CATALOG_SCHEMA_VERSION,
};

const WATER: [&str; 8] = [
    "swimming",
    "cliff diving",
    "surfing water",
    "water skiing",
    "kayaking",
    "snorkeling",
    "sailing",
    "rowing",
];
const FOOD: [&str; 8] = [
    "eating spaghetti",
    "eating ice cream",
    "making pizza",
    "cooking egg",
    "baking cookies",
    "peeling potatoes",
    "chopping vegetables",
    "making tea",
];
const LOOSE: [&str; 4] = ["juggling balls", "playing guitar", "riding a bike", "skipping rope"];
const MISC: [&str; 4] = ["yawning", "sneezing", "clapping", "stretching arm"];

pub type CatalogParts = (CatalogMeta, Vec<EventCategory>, Vec<SemanticGroup>, Vec<ClipRecord>);

fn meta(source: &str) -> CatalogMeta {
    CatalogMeta {
        schema_version: CATALOG_SCHEMA_VERSION,
        source: source.into(),
        version: "1".into(),
        notes: None,
    }
}

fn push_group(
    cats: &mut Vec<EventCategory>,
    groups: &mut Vec<SemanticGroup>,
    group: Option<(&str, &str, bool)>,
    labels: &[&str],
) {
    let start = cats.len();
    for (i, label) in labels.iter().enumerate() {
        cats.push(EventCategory {
            category_id: CategoryId::new(format!("c{:02}", start + i + 1)),
            label: (*label).into(),
            group_id: None,
        });
    }
    if let Some((id, name, excluded)) = group {
        groups.push(SemanticGroup {
            group_id: GroupId::new(id),
            name: name.into(),
            members: cats[start..].iter().map(|c| c.category_id.clone()).collect(),
            excluded,
        });
    }
}

fn clips_for(cats: &[EventCategory], per_split: &[(Split, usize)]) -> Vec<ClipRecord> {
    let mut clips = Vec::new();
    for (ci, c) in cats.iter().enumerate() {
        for &(split, n) in per_split {
            for k in 0..n {
                let tag = match split {
                    Split::Validation => "val",
                    Split::Train => "train",
                };
                let id = format!("{}_{tag}_{k}", c.category_id);
                clips.push(ClipRecord {
                    clip_id: ClipId::new(id.clone()),
                    category_id: c.category_id.clone(),
                    uri: format!("clips/{id}.mp4"),
                    duration_s: 6.0 + ((ci * 3 + k * 5) % 7) as f64,
                    split,
                });
            }
        }
    }
    clips
}

/// 20 categories, 2 groups of 8 (water sports, food), 4 ungrouped, 40 validation clips.
pub fn fixture_parts() -> CatalogParts {
    let mut cats = Vec::new();
    let mut groups = Vec::new();
    push_group(&mut cats, &mut groups, Some(("water", "water sports", false)), &WATER);
    push_group(&mut cats, &mut groups, Some(("food", "cooking and eating", false)), &FOOD);
    push_group(&mut cats, &mut groups, None, &LOOSE);
    let clips = clips_for(&cats, &[(Split::Validation, 2)]);
    (meta("fixture"), cats, groups, clips)
}

pub fn fixture_catalog() -> ClipCatalog {
    let (m, c, g, k) = fixture_parts();
    ClipCatalog::from_parts(m, c, g, k).expect("fixture catalog is valid")
}

/// 24 categories: the fixture plus an excluded catch-all group, with both
/// validation and train clips.
pub fn demo_parts() -> CatalogParts {
    let mut cats = Vec::new();
    let mut groups = Vec::new();
    push_group(&mut cats, &mut groups, Some(("water", "water sports", false)), &WATER);
    push_group(&mut cats, &mut groups, Some(("food", "cooking and eating", false)), &FOOD);
    push_group(&mut cats, &mut groups, None, &LOOSE);
    push_group(&mut cats, &mut groups, Some(("misc", "miscellaneous activities", true)), &MISC);
    let clips = clips_for(&cats, &[(Split::Validation, 2), (Split::Train, 1)]);
    (meta("demo"), cats, groups, clips)
}

pub fn demo_catalog() -> ClipCatalog {
    let (m, c, g, k) = demo_parts();
    ClipCatalog::from_parts(m, c, g, k).expect("demo catalog is valid")
}
