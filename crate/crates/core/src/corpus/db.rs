use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde_json::Value;

use super::{CorpusError, Result};
use crate::text::ValueNormalizer;

/// One venue: lowercase slot name to raw value.
pub type Entity = BTreeMap<String, String>;

/// Slots that identify an entity, tried in order.
pub const PRIMARY_ID_SLOTS: [&str; 3] = ["name", "trainid", "department"];

const IGNORED_VALUES: [&str; 4] = ["dontcare", "none", "not mentioned", ""];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VenueDatabase {
    domains: BTreeMap<String, Vec<Entity>>,
}

fn clock_minutes(s: &str) -> Option<u32> {
    let (h, m) = s.trim().split_once(':')?;
    Some(h.trim().parse::<u32>().ok()? * 60 + m.trim().parse::<u32>().ok()?)
}

impl VenueDatabase {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds entities to a domain. Keys are lowercased; every entity needs a primary id.
    pub fn insert_domain(&mut self, domain: &str, entities: Vec<Entity>) -> std::result::Result<(), String> {
        let mut out = Vec::with_capacity(entities.len());
        for (i, e) in entities.into_iter().enumerate() {
            let e: Entity = e.into_iter().map(|(k, v)| (k.to_lowercase(), v)).collect();
            if !PRIMARY_ID_SLOTS.iter().any(|k| e.contains_key(*k)) {
                return Err(format!("entity #{i} in `{domain}` has no primary identifier"));
            }
            out.push(e);
        }
        self.domains
            .entry(domain.to_lowercase())
            .or_default()
            .extend(out);
        Ok(())
    }

    /// Loads every `*.json` file in `dir`; `hotel_db.json` and `hotel.json` both map to `hotel`.
    pub fn load(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(CorpusError::NotFound(dir.to_path_buf()));
        }
        let mut paths: Vec<_> = fs::read_dir(dir)
            .map_err(|source| CorpusError::Io {
                path: dir.to_path_buf(),
                source,
            })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut db = VenueDatabase::new();
        for path in paths {
            let stem = path.file_stem().unwrap_or_default().to_string_lossy();
            let domain = stem.strip_suffix("_db").unwrap_or(&stem).to_string();
            let text = fs::read_to_string(&path).map_err(|source| CorpusError::Io {
                path: path.clone(),
                source,
            })?;
            let value: Value = serde_json::from_str(&text).map_err(|source| CorpusError::Json {
                path: path.clone(),
                source,
            })?;
            let entities = entities_from_json(&value).map_err(|message| CorpusError::Database {
                path: path.clone(),
                message,
            })?;
            db.insert_domain(&domain, entities)
                .map_err(|message| CorpusError::Database {
                    path: path.clone(),
                    message,
                })?;
        }
        Ok(db)
    }

    pub fn domains(&self) -> impl Iterator<Item = &str> {
        self.domains.keys().map(String::as_str)
    }

    pub fn has_domain(&self, domain: &str) -> bool {
        self.domains.contains_key(domain)
    }

    pub fn entities(&self, domain: &str) -> &[Entity] {
        self.domains.get(domain).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn all_entities(&self) -> impl Iterator<Item = (&str, &Entity)> {
        self.domains
            .iter()
            .flat_map(|(d, es)| es.iter().map(move |e| (d.as_str(), e)))
    }

    /// The entity's identifying value (`name`, `trainid` or `department`).
    pub fn primary_id(entity: &Entity) -> Option<&str> {
        PRIMARY_ID_SLOTS
            .iter()
            .find_map(|k| entity.get(*k))
            .map(String::as_str)
    }

    /// Entities of `domain` satisfying every constraint. Slots an entity does
    /// not carry (booking details and the like) are ignored, as are
    /// `dontcare`-style values. `leaveat` means "at or after", `arriveby`
    /// means "at or before".
    pub fn query<'a>(&'a self, domain: &str, constraints: &[(String, String)], norm: &ValueNormalizer) -> Vec<&'a Entity> {
        self.entities(domain)
            .iter()
            .filter(|e| constraints.iter().all(|(slot, want)| satisfies(e, slot, want, norm)))
            .collect()
    }
}

fn satisfies(entity: &Entity, slot: &str, want: &str, norm: &ValueNormalizer) -> bool {
    let want = norm.normalize(want);
    if IGNORED_VALUES.contains(&want.as_str()) {
        return true;
    }
    let Some(have) = entity.get(slot) else {
        return true;
    };
    match slot {
        "leaveat" | "arriveby" => match (clock_minutes(&norm.normalize(have)), clock_minutes(&want)) {
            (Some(h), Some(w)) if slot == "leaveat" => h >= w,
            (Some(h), Some(w)) => h <= w,
            _ => norm.normalize(have) == want,
        },
        _ => norm.normalize(have) == want,
    }
}

fn entities_from_json(value: &Value) -> std::result::Result<Vec<Entity>, String> {
    let Value::Array(items) = value else {
        return Err("expected a JSON array of entities".into());
    };
    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let Value::Object(map) = item else {
                return Err(format!("entity #{i} is not an object"));
            };
            Ok(map
                .iter()
                .filter_map(|(k, v)| {
                    let s = match v {
                        Value::String(s) => s.clone(),
                        Value::Number(n) => n.to_string(),
                        _ => return None,
                    };
                    Some((k.to_lowercase(), s))
                })
                .collect())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entity(pairs: &[(&str, &str)]) -> Entity {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    fn db() -> VenueDatabase {
        let mut db = VenueDatabase::new();
        db.insert_domain(
            "restaurant",
            vec![
                entity(&[("name", "the golden curry"), ("food", "indian"), ("area", "centre")]),
                entity(&[("name", "pizza hut"), ("food", "italian"), ("area", "south")]),
            ],
        )
        .unwrap();
        db.insert_domain(
            "train",
            vec![
                entity(&[("trainID", "TR1"), ("leaveAt", "09:00"), ("arriveBy", "10:30")]),
                entity(&[("trainID", "TR2"), ("leaveAt", "15:00"), ("arriveBy", "16:30")]),
            ],
        )
        .unwrap();
        db
    }

    fn c(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn query_matches_normalized_values() {
        let db = db();
        let n = ValueNormalizer::default();
        let hits = db.query("restaurant", &c(&[("food", "Indian"), ("area", "center")]), &n);
        assert_eq!(hits.len(), 1);
        assert_eq!(VenueDatabase::primary_id(hits[0]), Some("the golden curry"));
        assert_eq!(db.query("restaurant", &c(&[("name", "Golden Curry")]), &n).len(), 1);
        assert_eq!(db.query("restaurant", &c(&[("food", "dontcare"), ("bookpeople", "2")]), &n).len(), 2);
        assert!(db.query("restaurant", &c(&[("food", "thai")]), &n).is_empty());
    }

    #[test]
    fn train_times_are_bounds() {
        let db = db();
        let n = ValueNormalizer::default();
        let hits = db.query("train", &c(&[("leaveat", "8:00"), ("arriveby", "12:00")]), &n);
        assert_eq!(hits.len(), 1);
        assert_eq!(VenueDatabase::primary_id(hits[0]), Some("TR1"));
    }

    #[test]
    fn entity_without_identifier_is_rejected() {
        let mut db = VenueDatabase::new();
        assert!(db.insert_domain("taxi", vec![entity(&[("color", "white")])]).is_err());
    }

    #[test]
    fn load_from_directory() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("hotel_db.json"),
            r#"[{"name": "acorn guest house", "phone": "01223353888", "stars": 4, "location": [52.2, 0.1]}]"#,
        )
        .unwrap();
        let db = VenueDatabase::load(dir.path()).unwrap();
        let e = &db.entities("hotel")[0];
        assert_eq!(e["stars"], "4");
        assert!(!e.contains_key("location"));
    }
}
