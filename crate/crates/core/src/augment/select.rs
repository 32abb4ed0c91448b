use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::corpus::{domain_cutoff, Dialogue, Speaker};

/// Per-dialogue RNG seed derived from the run seed and the dialogue id, so
/// selection does not depend on processing order.
pub fn dialogue_seed(run_seed: u64, dialogue_id: &str) -> u64 {
    let digest = Sha256::digest(format!("{run_seed}:{dialogue_id}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// User turn indices that may be augmented: the turn and its system reply
/// both lie before the domain cutoff.
pub fn eligible_exchanges(d: &Dialogue) -> Vec<usize> {
    let Ok(cutoff) = domain_cutoff(d) else {
        return Vec::new();
    };
    (0..d.turns.len())
        .filter(|&i| {
            i + 1 < cutoff && d.turns[i].speaker == Speaker::User && d.turns[i + 1].speaker == Speaker::System
        })
        .collect()
}

/// Picks one eligible exchange uniformly; `None` means the dialogue is skipped.
pub fn select_exchange(d: &Dialogue, rng: &mut ChaCha8Rng) -> Option<usize> {
    let eligible = eligible_exchanges(d);
    if eligible.is_empty() {
        return None;
    }
    Some(eligible[rng.random_range(0..eligible.len())])
}

pub fn dialogue_rng(run_seed: u64, dialogue_id: &str) -> (u64, ChaCha8Rng) {
    let seed = dialogue_seed(run_seed, dialogue_id);
    (seed, ChaCha8Rng::seed_from_u64(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Turn;

    fn dialogue(domains: &[&str]) -> Dialogue {
        let turns = domains
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let t = if i % 2 == 0 { Turn::user("u") } else { Turn::system("s", "s") };
                t.with_acts([(*d, "inform", "")])
            })
            .collect();
        Dialogue::new("SEL1", turns).unwrap()
    }

    #[test]
    fn single_domain_selection_is_reproducible() {
        let d = dialogue(&["train"; 6]);
        assert_eq!(eligible_exchanges(&d), vec![0, 2, 4]);
        let pick = |seed| select_exchange(&d, &mut dialogue_rng(seed, &d.id).1);
        assert_eq!(pick(7), pick(7));
        assert!(eligible_exchanges(&d).contains(&pick(7).unwrap()));
        let seen: std::collections::BTreeSet<_> = (0..64).map(|s| pick(s).unwrap()).collect();
        assert_eq!(seen.len(), 3);
    }

    #[test]
    fn train_then_hotel_allows_only_first_exchange() {
        let d = dialogue(&["train", "train", "train", "hotel", "hotel", "hotel"]);
        assert_eq!(domain_cutoff(&d).unwrap(), 3);
        assert_eq!(eligible_exchanges(&d), vec![0]);
        for seed in 0..16 {
            assert_eq!(select_exchange(&d, &mut dialogue_rng(seed, &d.id).1), Some(0));
        }
    }

    #[test]
    fn second_domain_first_means_skip() {
        let d = dialogue(&["train", "hotel", "hotel", "hotel"]);
        assert_eq!(select_exchange(&d, &mut dialogue_rng(1, &d.id).1), None);
        let general = dialogue(&["general", "general"]);
        assert_eq!(select_exchange(&general, &mut dialogue_rng(1, &general.id).1), None);
    }

    #[test]
    fn seeds_differ_per_dialogue() {
        assert_ne!(dialogue_seed(1, "A"), dialogue_seed(1, "B"));
        assert_ne!(dialogue_seed(1, "A"), dialogue_seed(2, "A"));
    }
}
