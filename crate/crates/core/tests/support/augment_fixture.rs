//! Five FusedChat dialogues and a mock transcript for them. Dialogues
//! `FX02` (backstory without markers) and `FX04` (reaction after the echo)
//! receive malformed completions; the other three are well formed.

#![allow(dead_code)]

use std::collections::BTreeMap;

use interfere_core::augment::dialogue_rng;
use interfere_core::augment::select_exchange;
use interfere_core::corpus::{Corpus, Dialogue, Flavor, Split, Turn};
use interfere_core::gateway::{MockBackend, prompt_hash};
use interfere_core::prompts::{mark_backstory, render_backstory_completion, render_reaction_completion, PromptKit};

pub const SEED: u64 = 42;

pub struct Spec {
    pub id: &'static str,
    pub chitchat: [&'static str; 2],
    pub domain: &'static str,
    pub exchanges: [(&'static str, &'static str); 3],
    pub situation: &'static str,
    pub backstory: &'static str,
    pub reaction: &'static str,
}

pub const SPECS: [Spec; 5] = [
    Spec {
        id: "FX01",
        chitchat: ["I am meeting my client in Cambridge soon. I'm kind of nervous.", "Is it an important meeting?"],
        domain: "train",
        exchanges: [
            ("I am looking for a train arriving by 16:00 on Friday.", "Where will you be departing from?"),
            ("From King's Lynn, please.", "There is a train arriving at 15:11. Shall I book it?"),
            ("Yes, one ticket please.", "Your ticket is booked."),
        ],
        situation: "I am meeting my first client in Cambridge soon and I'm nervous.",
        backstory: "It's my very first client meeting and I really can't be late.",
        reaction: "Good luck with the meeting, you will do great!",
    },
    Spec {
        id: "FX02",
        chitchat: ["My sister just had a baby!", "Congratulations! Boy or girl?"],
        domain: "hotel",
        exchanges: [
            ("I need a hotel in the north with free parking.", "I have several options. What price range?"),
            ("Something cheap, please.", "The Acorn is a cheap guesthouse. Want me to book?"),
            ("Yes for two nights.", "It is booked for two nights."),
        ],
        situation: "My sister just had a baby and I'm visiting her.",
        backstory: "MALFORMED",
        reaction: "How wonderful!",
    },
    Spec {
        id: "FX03",
        chitchat: ["I finally finished my thesis.", "That's a big achievement!"],
        domain: "restaurant",
        exchanges: [
            ("I want an expensive restaurant in the centre.", "What type of food would you like?"),
            ("Italian food, please.", "Caffe Uno serves Italian food. Shall I reserve a table?"),
            ("Yes, for four people at 19:00.", "Your table is reserved."),
        ],
        situation: "I finally finished my thesis and want to celebrate.",
        backstory: "I just handed in my thesis and I'm taking my friends out to celebrate!",
        reaction: "Finishing a thesis deserves a proper celebration.",
    },
    Spec {
        id: "FX04",
        chitchat: ["My parents are visiting from Scotland.", "How lovely, when do they arrive?"],
        domain: "attraction",
        exchanges: [
            ("Can you suggest a museum to visit?", "There are many museums. Any area in mind?"),
            ("The centre would be best.", "The Fitzwilliam Museum is in the centre and free."),
            ("Great, what time does it open?", "It opens at 10:00."),
        ],
        situation: "My parents are visiting me from Scotland this weekend.",
        backstory: "My parents love art and they are visiting from Scotland this weekend.",
        reaction: "MALFORMED",
    },
    Spec {
        id: "FX05",
        chitchat: ["I'm going to a concert tonight!", "Fun! Who's playing?"],
        domain: "taxi",
        exchanges: [
            ("I need a taxi to the Corn Exchange.", "What time would you like to leave?"),
            ("After 18:30 please.", "Where should the taxi pick you up?"),
            ("From my hotel, the Lensfield.", "A red Skoda is booked for you."),
        ],
        situation: "I'm going to a concert tonight with my best friend.",
        backstory: "I'm going to a concert with my best friend and I'm so excited!",
        reaction: "A concert with your best friend sounds like a perfect evening.",
    },
];

pub fn dialogue(spec: &Spec) -> Dialogue {
    let turns = spec
        .exchanges
        .iter()
        .flat_map(|(u, s)| {
            [
                Turn::user(u).with_acts([(spec.domain, "inform", "")]),
                Turn::system(s, s).with_acts([(spec.domain, "request", "")]),
            ]
        })
        .collect();
    Dialogue::new(spec.id, turns)
        .unwrap()
        .with_prepended(vec![
            Turn::user(spec.chitchat[0]).chitchat(),
            Turn::system(spec.chitchat[1], spec.chitchat[1]).chitchat(),
        ])
        .unwrap()
}

pub fn corpus() -> Corpus {
    Corpus::new(Flavor::Fusedchat, Split::Test, SPECS.iter().map(dialogue).collect())
}

/// Selected exchange index for a fixture dialogue under `seed`.
pub fn exchange(d: &Dialogue, seed: u64) -> usize {
    select_exchange(d, &mut dialogue_rng(seed, &d.id).1).unwrap()
}

pub struct Prompts {
    pub situation: String,
    pub backstory: String,
    pub reaction: String,
}

pub fn prompts(kit: &PromptKit, d: &Dialogue, spec: &Spec, seed: u64) -> Prompts {
    let i = exchange(d, seed);
    let user = &d.turns[i].text;
    let mut context = d.turns[..i].to_vec();
    context.push(Turn::user(&mark_backstory(user, spec.backstory)));
    Prompts {
        situation: kit.build_situation_prompt(&d.prepended_chitchat).unwrap(),
        backstory: kit.build_backstory_prompt(spec.situation, &d.turns[..i], user).unwrap(),
        reaction: kit.build_reaction_prompt(&context, &d.turns[i + 1].text).unwrap(),
    }
}

/// Completion entries keyed by prompt hash, as stored in a transcript file.
pub fn transcript(kit: &PromptKit, seed: u64) -> BTreeMap<String, String> {
    let corpus = corpus();
    let mut out = BTreeMap::new();
    for (spec, d) in SPECS.iter().zip(&corpus.dialogues) {
        let p = prompts(kit, d, spec, seed);
        let i = exchange(d, seed);
        out.insert(prompt_hash(&p.situation), format!(" {} [END]\n\nConversation:", spec.situation));
        let backstory = if spec.backstory == "MALFORMED" {
            " I'd also like to mention that I am very excited. [END]".to_string()
        } else {
            format!(" {}\n\n---", render_backstory_completion(&d.turns[i].text, spec.backstory))
        };
        out.insert(prompt_hash(&p.backstory), backstory);
        let reaction = if spec.reaction == "MALFORMED" {
            format!(" **{}** + <Reaction: Lovely!> [END]", d.turns[i + 1].text)
        } else {
            format!(" {}", render_reaction_completion(&d.turns[i + 1].text, spec.reaction))
        };
        out.insert(prompt_hash(&p.reaction), reaction);
    }
    out
}

pub fn mock(kit: &PromptKit, seed: u64) -> MockBackend {
    MockBackend::new(transcript(kit, seed))
}
