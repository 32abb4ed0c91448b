//! Synthetic augmented corpora and system predictions for annotation tests.

#![allow(dead_code)]

use std::collections::BTreeMap;

use interfere_core::augment::splice;
use interfere_core::corpus::{AugmentationMeta, AugmentationSeeds, Flavor, Split};
use interfere_core::simpletod::{GenerationOutput, Predictions};
use interfere_core::{Corpus, Dialogue, Turn};

pub const SYSTEMS: [&str; 3] = ["simpletod", "simpletod-fused", "simpletod-inter"];

pub fn augmented(id: &str) -> Dialogue {
    let d = Dialogue::new(
        id,
        vec![
            Turn::user("i need a hotel in the north .").with_belief([("hotel", "area", "north")]),
            Turn::system("acorn guest house is available .", "[name] is available .")
                .with_acts([("hotel", "inform", "name")]),
            Turn::user("can you book it for friday ?").with_belief([("hotel", "area", "north"), ("hotel", "day", "friday")]),
            Turn::system("booked , your reference is abcd1234 .", "booked , your reference is [ref] .")
                .with_acts([("hotel", "offerbooked", "ref")]),
        ],
    )
    .unwrap();
    splice(
        &d,
        AugmentationMeta {
            exchange_index: 2,
            situation: "The user is visiting their sister for her graduation.".into(),
            backstory: "My sister graduates on Saturday and I want to be there early.".into(),
            reaction: "Congratulations to your sister!".into(),
            seeds: AugmentationSeeds { run_seed: 1, rng_seed: 2 },
            backend_id: "mock".into(),
            config_hash: String::new(),
        },
    )
}

pub fn corpus(n: usize) -> Corpus {
    let dialogues = (0..n).map(|i| augmented(&format!("AUG{i:04}"))).collect();
    Corpus::new(Flavor::Fusedchat, Split::Test, dialogues)
}

pub const RESPONSES: [&str; 3] = [
    "your reference is [ref] .",
    "booked ! the reference number is [ref] .",
    "congratulations to your sister ! i booked it , reference [ref] .",
];

/// One prediction set per system, each with its own distinct response.
pub fn systems(corpus: &Corpus) -> BTreeMap<String, Predictions> {
    SYSTEMS
        .iter()
        .zip(RESPONSES)
        .map(|(name, response)| {
            let mut p = Predictions::default();
            for d in &corpus.dialogues {
                p.turns.insert(
                    (d.id.clone(), 3),
                    GenerationOutput {
                        response: response.to_string(),
                        ..Default::default()
                    },
                );
            }
            (name.to_string(), p)
        })
        .collect()
}
