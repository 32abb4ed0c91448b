//! Small gold corpus whose system turns satisfy their own goals, the matching
//! venue database, and a ranking file with fixed per-rater marginals.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use interfere_core::corpus::{DomainGoal, Entity, Flavor, Split};
use interfere_core::metrics::RankingRecord;
use interfere_core::{Corpus, Dialogue, Turn, VenueDatabase};

fn entity(pairs: &[(&str, &str)]) -> Entity {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

fn goal(constraints: &[(&str, &str)], requested: &[&str]) -> DomainGoal {
    DomainGoal {
        constraints: constraints.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        requested: requested.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>(),
    }
}

pub fn restaurants() -> Vec<Entity> {
    vec![
        entity(&[("name", "curry prince"), ("food", "indian"), ("area", "east"), ("pricerange", "moderate")]),
        entity(&[("name", "the golden curry"), ("food", "indian"), ("area", "centre"), ("pricerange", "expensive")]),
        entity(&[("name", "pizza hut city centre"), ("food", "italian"), ("area", "centre"), ("pricerange", "cheap")]),
    ]
}

pub fn trains() -> Vec<Entity> {
    vec![
        entity(&[
            ("trainID", "TR1234"),
            ("departure", "cambridge"),
            ("destination", "london kings cross"),
            ("day", "monday"),
            ("leaveAt", "09:00"),
        ]),
        entity(&[
            ("trainID", "TR5678"),
            ("departure", "cambridge"),
            ("destination", "ely"),
            ("day", "monday"),
            ("leaveAt", "10:00"),
        ]),
    ]
}

pub fn database() -> VenueDatabase {
    let mut db = VenueDatabase::new();
    db.insert_domain("restaurant", restaurants()).unwrap();
    db.insert_domain("train", trains()).unwrap();
    db
}

pub fn dialogues() -> Vec<Dialogue> {
    let r1 = [("restaurant", "food", "indian"), ("restaurant", "area", "east")];
    let d1 = Dialogue::new(
        "GOLD01",
        vec![
            Turn::user("I want an Indian place in the east.").with_belief(r1),
            Turn::system("Curry Prince is a nice place.", "[name] is a nice place .")
                .with_acts([("restaurant", "inform", "name")]),
            Turn::user("What is the phone number?").with_belief(r1),
            Turn::system("Their phone is 01223566388.", "their phone is [phone] .")
                .with_acts([("restaurant", "inform", "phone")]),
        ],
    )
    .unwrap()
    .with_goal("restaurant", goal(&[("food", "indian"), ("area", "east")], &["phone"]));

    let t = [
        ("train", "departure", "cambridge"),
        ("train", "destination", "london kings cross"),
        ("train", "day", "monday"),
    ];
    let d2 = Dialogue::new(
        "GOLD02",
        vec![
            Turn::user("I need a train from Cambridge to London Kings Cross on Monday.").with_belief(t),
            Turn::system("TR1234 leaves at 09:00.", "[trainid] leaves at [leaveat] .")
                .with_acts([("train", "inform", "id"), ("train", "inform", "leaveat")]),
            Turn::user("Please book it for one.").with_belief(t),
            Turn::system("Booked, the reference is ABCD1234.", "booked , the reference is [ref] .")
                .with_acts([("train", "offerbooked", "ref")]),
        ],
    )
    .unwrap()
    .with_goal(
        "train",
        goal(&[("departure", "cambridge"), ("destination", "london kings cross"), ("day", "monday")], &["reference"]),
    );

    let r3 = [("restaurant", "food", "italian"), ("restaurant", "pricerange", "cheap")];
    let d3 = Dialogue::new(
        "GOLD03",
        vec![
            Turn::user("Something cheap and Italian please.").with_belief(r3),
            Turn::system(
                "Pizza Hut City Centre is at Regent Street.",
                "[name] is at [address] .",
            )
            .with_acts([("restaurant", "recommend", "name"), ("restaurant", "inform", "address")]),
        ],
    )
    .unwrap()
    .with_goal("restaurant", goal(&[("food", "italian"), ("pricerange", "cheap")], &["address"]));

    vec![d1, d2, d3]
}

pub fn corpus() -> Corpus {
    Corpus::new(Flavor::Multiwoz, Split::Test, dialogues())
}

/// Writes the corpus and database under `dir`; returns `(corpus_dir, db_dir)`.
pub fn write_files(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let corpus_dir = dir.join("corpus");
    let db_dir = dir.join("db");
    std::fs::create_dir_all(&corpus_dir).unwrap();
    std::fs::create_dir_all(&db_dir).unwrap();
    corpus().save(&corpus_dir).unwrap();
    for (name, entities) in [("restaurant", restaurants()), ("train", trains())] {
        let text = serde_json::to_string_pretty(&entities).unwrap();
        std::fs::write(db_dir.join(format!("{name}_db.json")), text).unwrap();
    }
    (corpus_dir, db_dir)
}

pub const INTER: &str = "simpletod-inter";
pub const BASE: &str = "simpletod";
pub const FUSED: &str = "simpletod-fused";

/// Per-rater counts of ranks 1, 2 and 3 for the interference-trained system
/// over 50 examples.
pub const INTER_COUNTS: [(&str, [usize; 3]); 3] = [("rater-a", [44, 5, 1]), ("rater-b", [46, 4, 0]), ("rater-c", [48, 1, 1])];

/// 3 raters x 50 ranking judgements. Whenever the interference-trained system
/// is not ranked first, the plain baseline takes rank 1.
pub fn skewed_rankings() -> Vec<RankingRecord> {
    let mut out = Vec::new();
    for (rater, counts) in INTER_COUNTS {
        let ranks: Vec<u8> = counts
            .iter()
            .enumerate()
            .flat_map(|(k, &n)| std::iter::repeat_n(k as u8 + 1, n))
            .collect();
        assert_eq!(ranks.len(), 50);
        for (i, &inter) in ranks.iter().enumerate() {
            let (base, fused) = match inter {
                1 => (2, 3),
                2 => (1, 3),
                _ => (1, 2),
            };
            let mut map = BTreeMap::new();
            map.insert(INTER.to_string(), inter);
            map.insert(BASE.to_string(), base);
            map.insert(FUSED.to_string(), fused);
            out.push(RankingRecord {
                example_id: format!("ex{i:02}"),
                rater_id: rater.to_string(),
                ranks: map,
            });
        }
    }
    out
}
