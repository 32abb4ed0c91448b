#[path = "support/metric_fixture.rs"]
mod fixture;

use std::collections::{BTreeMap, BTreeSet};

use interfere_core::metrics::{
    bleu, cbe, evaluate_corpus, fleiss_kappa, inform_success, joint_goal_accuracy, rank_aggregate, unique_trigrams,
};
use interfere_core::simpletod::Predictions;
use interfere_core::text::{tokenize, ValueNormalizer};
use interfere_core::BeliefTriplet;

fn toks(lines: &[&str]) -> Vec<Vec<String>> {
    lines.iter().map(|l| tokenize(l)).collect()
}

/// Clipped n-gram matches, counted by brute force.
fn clipped(c: &[String], r: &[String], n: usize) -> (usize, usize) {
    if c.len() < n {
        return (0, 0);
    }
    let grams = |s: &[String]| -> Vec<Vec<String>> { s.windows(n).map(|w| w.to_vec()).collect() };
    let cg = grams(c);
    let rg = grams(r);
    let mut seen = BTreeSet::new();
    let mut matches = 0;
    for g in &cg {
        if seen.insert(g.clone()) {
            let in_c = cg.iter().filter(|x| *x == g).count();
            let in_r = rg.iter().filter(|x| *x == g).count();
            matches += in_c.min(in_r);
        }
    }
    (matches, cg.len())
}

#[test]
fn bleu_two_sentence_hand_case() {
    let cands = toks(&["the cat is on the mat", "there is a cat"]);
    let refs = toks(&["the cat sat on the mat", "there is a cat here"]);
    let mut log_p = 0.0;
    for n in 1..=4 {
        let (m, t) = cands
            .iter()
            .zip(&refs)
            .map(|(c, r)| clipped(c, r, n))
            .fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        log_p += (m as f64 / t as f64).ln() / 4.0;
    }
    let (c, r) = (10.0f64, 11.0f64);
    let expected = (1.0 - r / c).exp() * log_p.exp();
    let written = (-0.1f64).exp() * (0.9f64 * 0.75 * 0.5 * 0.25).powf(0.25);
    assert!((expected - written).abs() < 1e-12);
    assert!((bleu(&cands, &refs).unwrap() - expected).abs() < 1e-9);
}

#[test]
fn bleu_identity_and_disjoint() {
    let c = toks(&["i can book that for you", "the phone is [phone] ."]);
    assert!((bleu(&c, &c).unwrap() - 1.0).abs() < 1e-12);
    let d = toks(&["zebra yak xylophone wolf", "vole umbrella tiger sloth rat"]);
    assert!(bleu(&d, &c).unwrap() < 1e-6);
}

#[test]
fn cbe_and_trigram_cases() {
    assert!((cbe(&["a b a c"]) - (2.0 / 3.0) * 2f64.ln()).abs() < 1e-12);
    assert_eq!(cbe(&["a b a b"]), 0.0);
    assert!((cbe(&["a b a c", "a b a c"]) - cbe(&["a b a c"])).abs() < 1e-12);
    assert_eq!(unique_trigrams(&["i can help you"]), 2);

    let responses = ["i can help you", "can help you with that ?", "i can help you today"];
    let mut set = BTreeSet::new();
    for r in responses {
        let t = tokenize(r);
        for w in t.windows(3) {
            set.insert(w.to_vec());
        }
    }
    assert_eq!(unique_trigrams(&responses), set.len());
}

#[test]
fn kappa_hand_case() {
    let k = fleiss_kappa(&[vec!["A", "A", "A"], vec!["A", "A", "B"]]).unwrap();
    assert!((k + 0.2).abs() < 1e-12);
}

#[test]
fn jga_half_and_time_canonicalization() {
    let norm = ValueNormalizer::default();
    let set = |v: &str| BTreeSet::from([BeliefTriplet::raw("train", "leaveat", v)]);
    let gold = BTreeMap::from([(0, set("08:30")), (1, set("10:00"))]);
    let pred = BTreeMap::from([(0, set("8:30")), (1, set("11:00"))]);
    assert_eq!(joint_goal_accuracy(&gold, &pred, &norm).unwrap(), 0.5);
    let none: BTreeMap<i32, BTreeSet<BeliefTriplet>> = BTreeMap::new();
    assert_eq!(joint_goal_accuracy(&gold, &none, &norm).unwrap(), 0.0);
}

#[test]
fn gold_echo_is_fully_informed_and_successful() {
    let dialogues = fixture::dialogues();
    let preds = Predictions::oracle(&dialogues);
    let norm = ValueNormalizer::default();
    let is = inform_success(&dialogues, &preds, &fixture::database(), &norm).unwrap();
    assert_eq!((is.inform, is.success), (100.0, 100.0));

    let report = evaluate_corpus(&dialogues, &preds, &fixture::database(), &norm).unwrap();
    assert_eq!(report.jga, 1.0);
    assert!((report.bleu_all.unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(report.bleu_aug, None);
    assert_eq!(report.turn_counts["system_turns"], 5);
}

#[test]
fn removing_a_requested_placeholder_only_breaks_success() {
    let dialogues = fixture::dialogues();
    let mut preds = Predictions::oracle(&dialogues);
    preds.turns.get_mut(&("GOLD01".to_string(), 3)).unwrap().response = "their number is on the website .".into();
    let is = inform_success(&dialogues, &preds, &fixture::database(), &ValueNormalizer::default()).unwrap();
    let d1 = is.dialogues.iter().find(|d| d.dialogue_id == "GOLD01").unwrap();
    assert!(d1.informed && !d1.success);
    assert_eq!(d1.missing_slots, vec!["restaurant-phone".to_string()]);
    assert_eq!(is.inform, 100.0);
}

#[test]
fn offering_with_an_unsatisfiable_belief_is_not_informed() {
    let dialogues = fixture::dialogues();
    let mut preds = Predictions::oracle(&dialogues);
    for i in [1, 3] {
        preds.turns.get_mut(&("GOLD01".to_string(), i)).unwrap().belief =
            BTreeSet::from([BeliefTriplet::new("restaurant", "food", "martian")]);
    }
    let is = inform_success(&dialogues, &preds, &fixture::database(), &ValueNormalizer::default()).unwrap();
    assert!(!is.dialogues.iter().find(|d| d.dialogue_id == "GOLD01").unwrap().informed);
}

#[test]
fn metrics_ignore_dialogue_order() {
    let mut dialogues = fixture::dialogues();
    let preds = Predictions::oracle(&dialogues);
    let norm = ValueNormalizer::default();
    let a = evaluate_corpus(&dialogues, &preds, &fixture::database(), &norm).unwrap();
    dialogues.reverse();
    let b = evaluate_corpus(&dialogues, &preds, &fixture::database(), &norm).unwrap();
    assert_eq!(a, b);
}

#[test]
fn unknown_goal_domain_names_the_dialogue() {
    let mut dialogues = fixture::dialogues();
    dialogues[0].goal.insert("spaceport".into(), Default::default());
    let preds = Predictions::oracle(&dialogues);
    let err = inform_success(&dialogues, &preds, &fixture::database(), &ValueNormalizer::default()).unwrap_err();
    assert!(err.to_string().contains("GOLD01"));
}

#[test]
fn rank_fixture_reproduces_target_marginals() {
    let agg = rank_aggregate(&fixture::skewed_rankings()).unwrap();
    let inter = &agg[fixture::INTER];
    assert_eq!(inter.judgements, 150);
    assert_eq!(format!("{:.2}", inter.distribution[0]), "92.00");
    assert_eq!(format!("{:.2}", inter.distribution[1]), "6.67");
    assert_eq!(format!("{:.2}", inter.distribution[2]), "1.33");
    assert_eq!(format!("{:.2}", inter.mean_rank), "1.09");
    assert_eq!(format!("{:.2}", inter.distribution_std[0]), "3.27");
    assert_eq!(format!("{:.2}", inter.distribution_std[1]), "3.40");
    assert_eq!(format!("{:.2}", inter.distribution_std[2]), "0.94");
    assert_eq!(format!("{:.2}", inter.mean_rank_std), "0.03");
}
