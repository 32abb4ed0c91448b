use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};

use super::filters::{Filters, Verdict, FILTER_NAMES, FILTER_STRUCTURE};
use super::select::{dialogue_rng, select_exchange};
use super::{AugmentConfig, AugmentError};
use crate::corpus::{AugmentationMeta, AugmentationSeeds, Corpus, Dialogue, Flavor, Turn, VenueDatabase};
use crate::gateway::{CompletionRequest, Gateway};
use crate::prompts::{mark_backstory, parse_backstory, parse_reaction, PromptKit, TERMINATOR};
use crate::text::tokenize;

pub const REPORT_SCHEMA: &str = "interfere.run-report/v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSituation {
    pub dialogue_id: String,
    pub text: String,
}

/// Outcome of one dialogue's augmentation attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationRecord {
    pub dialogue_id: String,
    pub exchange_index: usize,
    pub situation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backstory: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reaction: Option<String>,
    pub filter_verdicts: BTreeMap<String, Verdict>,
    pub rng_seed: u64,
    pub backend_id: String,
    pub accepted: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounts {
    pub input_dialogues: usize,
    pub skipped_no_prepended: usize,
    pub skipped_no_exchange: usize,
    pub attempted: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub unprocessed: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenStats {
    pub count: usize,
    pub total_tokens: usize,
    pub mean_tokens: f64,
    pub min_tokens: usize,
    pub max_tokens: usize,
}

impl TokenStats {
    fn from_texts<'a>(texts: impl Iterator<Item = &'a str>) -> Self {
        let lens: Vec<usize> = texts.map(|t| tokenize(t).len()).collect();
        let total: usize = lens.iter().sum();
        Self {
            count: lens.len(),
            total_tokens: total,
            mean_tokens: if lens.is_empty() { 0.0 } else { total as f64 / lens.len() as f64 },
            min_tokens: lens.iter().copied().min().unwrap_or(0),
            max_tokens: lens.iter().copied().max().unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnprocessedDialogue {
    pub dialogue_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub seed: u64,
    pub backend_id: String,
    pub config_hash: String,
    pub template_fingerprint: String,
    pub config: AugmentConfig,
    pub counts: RunCounts,
    /// Rejected dialogues per failing filter (a dialogue may count under several).
    pub rejections: BTreeMap<String, usize>,
    /// Accepted over attempted; unprocessed and skipped dialogues are excluded.
    pub acceptance_rate: f64,
    pub unprocessed: Vec<UnprocessedDialogue>,
    pub token_stats: BTreeMap<String, TokenStats>,
    pub records: Vec<AugmentationRecord>,
}

impl RunReport {
    pub fn meets_floor(&self) -> bool {
        self.acceptance_rate >= self.config.acceptance_floor
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

enum Outcome {
    NoPrepended,
    NoExchange,
    Unprocessed(String),
    Done(Box<(AugmentationRecord, Option<Dialogue>)>),
}

enum Stage {
    Accepted(String),
    Rejected(BTreeMap<String, Verdict>),
}

/// Runs the augmentation over a FusedChat corpus.
pub struct Augmenter<'a> {
    gateway: &'a Gateway,
    kit: &'a PromptKit,
    config: AugmentConfig,
    filters: Filters,
    seed: u64,
    config_hash: String,
}

impl<'a> Augmenter<'a> {
    pub fn new(gateway: &'a Gateway, kit: &'a PromptKit, config: AugmentConfig, seed: u64) -> Result<Self, AugmentError> {
        config.validate()?;
        let filters = Filters::new(config.filter.clone()).map_err(AugmentError::Config)?;
        Ok(Self {
            gateway,
            kit,
            config,
            filters,
            seed,
            config_hash: String::new(),
        })
    }

    /// Hash of the effective configuration, copied into every output record.
    pub fn with_config_hash(mut self, hash: &str) -> Self {
        self.config_hash = hash.to_string();
        self
    }

    pub fn summarize_situation(&self, d: &Dialogue) -> Result<SeedSituation, AugmentError> {
        if d.prepended_chitchat.is_empty() {
            return Err(AugmentError::Precondition(format!(
                "dialogue {} has no prepended chitchat",
                d.id
            )));
        }
        let prompt = self.kit.build_situation_prompt(&d.prepended_chitchat)?;
        let req = CompletionRequest::new(prompt, &self.config.generation).with_stops([TERMINATOR, "\n\n"]);
        let resp = self.gateway.complete(&req)?;
        let text = resp.text.trim().to_string();
        let generation_error = |message: String| AugmentError::Generation {
            dialogue_id: d.id.clone(),
            stage: "situation",
            message,
        };
        if text.is_empty() {
            return Err(generation_error("empty situation summary".into()));
        }
        if text.chars().count() > self.config.situation_max_chars {
            return Err(generation_error(format!(
                "situation summary longer than {} characters",
                self.config.situation_max_chars
            )));
        }
        Ok(SeedSituation {
            dialogue_id: d.id.clone(),
            text,
        })
    }

    fn complete_structured(&self, prompt: &str, sample: u32) -> Result<String, AugmentError> {
        let req = CompletionRequest::new(prompt, &self.config.generation)
            .with_stops([TERMINATOR])
            .with_sample(sample);
        let resp = self.gateway.complete(&req)?;
        let mut text = resp.text;
        if resp.stopped_by.as_deref() == Some(TERMINATOR) {
            text.push_str(TERMINATOR);
        }
        Ok(text)
    }

    /// Generates until a candidate passes its filters or the retry budget is spent.
    fn run_stage(
        &self,
        prompt: &str,
        parse: impl Fn(&str) -> Result<String, crate::prompts::StructureError>,
        verdicts: impl Fn(&str) -> Vec<(&'static str, Verdict)>,
    ) -> Result<Stage, AugmentError> {
        let mut last = BTreeMap::new();
        for sample in 0..=self.config.retries {
            let completion = self.complete_structured(prompt, sample)?;
            let candidate = match parse(&completion) {
                Ok(c) => c,
                Err(e) => {
                    last = BTreeMap::from([(FILTER_STRUCTURE.to_string(), Verdict::fail(e.to_string()))]);
                    continue;
                }
            };
            let mut v: BTreeMap<String, Verdict> = verdicts(&candidate)
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect();
            v.insert(FILTER_STRUCTURE.to_string(), Verdict::Pass);
            if v.values().all(Verdict::passed) {
                return Ok(Stage::Accepted(candidate));
            }
            last = v;
        }
        Ok(Stage::Rejected(last))
    }

    fn process(&self, d: &Dialogue) -> Outcome {
        if d.prepended_chitchat.is_empty() {
            return Outcome::NoPrepended;
        }
        let (rng_seed, mut rng) = dialogue_rng(self.seed, &d.id);
        let Some(i) = select_exchange(d, &mut rng) else {
            return Outcome::NoExchange;
        };
        match self.augment_exchange(d, i, rng_seed) {
            Ok(done) => Outcome::Done(Box::new(done)),
            Err(e) => Outcome::Unprocessed(e.to_string()),
        }
    }

    fn augment_exchange(&self, d: &Dialogue, i: usize, rng_seed: u64) -> Result<(AugmentationRecord, Option<Dialogue>), AugmentError> {
        let situation = self.summarize_situation(d)?;
        let user_utt = &d.turns[i].text;
        let sys_resp = &d.turns[i + 1].text;
        let mut record = AugmentationRecord {
            dialogue_id: d.id.clone(),
            exchange_index: i,
            situation: situation.text.clone(),
            backstory: None,
            reaction: None,
            filter_verdicts: BTreeMap::new(),
            rng_seed,
            backend_id: self.gateway.backend_id(),
            accepted: false,
        };

        let prompt = self
            .kit
            .build_backstory_prompt(&situation.text, &d.turns[..i], user_utt)?;
        let backstory = match self.run_stage(
            &prompt,
            |c| parse_backstory(c, user_utt).map(|p| p.text),
            |b| self.filters.backstory_verdicts(b, user_utt, &d.id),
        )? {
            Stage::Accepted(b) => b,
            Stage::Rejected(v) => {
                record.filter_verdicts = v;
                return Ok((record, None));
            }
        };
        record.backstory = Some(backstory.clone());

        let mut context = d.turns[..i].to_vec();
        context.push(Turn {
            text: mark_backstory(user_utt, &backstory),
            ..d.turns[i].clone()
        });
        let prompt = self.kit.build_reaction_prompt(&context, sys_resp)?;
        let reaction = match self.run_stage(
            &prompt,
            |c| parse_reaction(c, sys_resp).map(|p| p.text),
            |r| self.filters.reaction_verdicts(r, sys_resp, &d.id),
        )? {
            Stage::Accepted(r) => r,
            Stage::Rejected(v) => {
                record.filter_verdicts = v;
                return Ok((record, None));
            }
        };
        record.reaction = Some(reaction.clone());
        record.filter_verdicts = self.filters.apply_filters(&backstory, &reaction, user_utt, sys_resp, &d.id);
        record.accepted = true;

        let meta = AugmentationMeta {
            exchange_index: i,
            situation: situation.text,
            backstory,
            reaction,
            seeds: AugmentationSeeds {
                run_seed: self.seed,
                rng_seed,
            },
            backend_id: record.backend_id.clone(),
            config_hash: self.config_hash.clone(),
        };
        Ok((record, Some(splice(d, meta))))
    }

    /// Augments every dialogue with prepended chitchat. Rejected dialogues are
    /// left out of the output; the report accounts for every input dialogue.
    pub fn run(&self, corpus: &Corpus, db: Option<&VenueDatabase>) -> Result<(Corpus, RunReport), AugmentError> {
        if corpus.flavor != Flavor::Fusedchat {
            return Err(AugmentError::Precondition(
                "augmentation needs a fusedchat corpus with prepended chitchat".into(),
            ));
        }
        let mut dialogues: Vec<&Dialogue> = corpus.dialogues.iter().collect();
        dialogues.sort_by(|a, b| a.id.cmp(&b.id));

        let mut filters = self.filters.clone();
        for d in &dialogues {
            filters.register_dialogue(d, db);
        }
        let worker = Augmenter {
            filters,
            config: self.config.clone(),
            config_hash: self.config_hash.clone(),
            ..*self
        };

        let outcomes = worker.process_all(&dialogues);
        Ok(worker.assemble(corpus, &dialogues, outcomes))
    }

    fn process_all(&self, dialogues: &[&Dialogue]) -> Vec<Outcome> {
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<Outcome>>> = Mutex::new((0..dialogues.len()).map(|_| None).collect());
        let workers = self.gateway.concurrency().min(dialogues.len()).max(1);
        thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(d) = dialogues.get(i) else { break };
                    let outcome = self.process(d);
                    slots.lock().expect("outcome lock")[i] = Some(outcome);
                });
            }
        });
        slots
            .into_inner()
            .expect("outcome lock")
            .into_iter()
            .map(|o| o.expect("every dialogue processed"))
            .collect()
    }

    fn assemble(&self, corpus: &Corpus, dialogues: &[&Dialogue], outcomes: Vec<Outcome>) -> (Corpus, RunReport) {
        let mut counts = RunCounts {
            input_dialogues: dialogues.len(),
            ..RunCounts::default()
        };
        let mut rejections: BTreeMap<String, usize> = FILTER_NAMES.iter().map(|f| (f.to_string(), 0)).collect();
        let mut unprocessed = Vec::new();
        let mut records = Vec::new();
        let mut accepted = Vec::new();
        for (d, outcome) in dialogues.iter().zip(outcomes) {
            match outcome {
                Outcome::NoPrepended => counts.skipped_no_prepended += 1,
                Outcome::NoExchange => counts.skipped_no_exchange += 1,
                Outcome::Unprocessed(error) => {
                    tracing::warn!(dialogue = %d.id, "not processed: {error}");
                    unprocessed.push(UnprocessedDialogue {
                        dialogue_id: d.id.clone(),
                        error,
                    });
                }
                Outcome::Done(done) => {
                    let (record, dialogue) = *done;
                    counts.attempted += 1;
                    match dialogue {
                        Some(aug) => {
                            counts.accepted += 1;
                            accepted.push(aug);
                        }
                        None => {
                            counts.rejected += 1;
                            for (name, v) in &record.filter_verdicts {
                                if !v.passed() {
                                    *rejections.entry(name.clone()).or_default() += 1;
                                }
                            }
                        }
                    }
                    records.push(record);
                }
            }
        }
        counts.unprocessed = unprocessed.len();

        let aug_metas: Vec<&AugmentationMeta> = accepted.iter().filter_map(|d| d.augmentation.as_ref()).collect();
        let token_stats = BTreeMap::from([
            ("situation".to_string(), TokenStats::from_texts(aug_metas.iter().map(|m| m.situation.as_str()))),
            ("backstory".to_string(), TokenStats::from_texts(aug_metas.iter().map(|m| m.backstory.as_str()))),
            ("reaction".to_string(), TokenStats::from_texts(aug_metas.iter().map(|m| m.reaction.as_str()))),
        ]);
        let acceptance_rate = if counts.attempted == 0 {
            0.0
        } else {
            counts.accepted as f64 / counts.attempted as f64
        };
        let report = RunReport {
            schema: REPORT_SCHEMA.into(),
            seed: self.seed,
            backend_id: self.gateway.backend_id(),
            config_hash: self.config_hash.clone(),
            template_fingerprint: self.kit.fingerprint(),
            config: self.config.clone(),
            counts,
            rejections,
            acceptance_rate,
            unprocessed,
            token_stats,
            records,
        };
        let mut out = Corpus::new(Flavor::Fusedchat, corpus.split, accepted);
        out.provenance = corpus.provenance.clone();
        (out, report)
    }
}

/// Builds the augmented dialogue: `"<utterance> <backstory>"` on the user
/// turn and `"<reaction> <response>"` on the system turn that follows.
pub fn splice(d: &Dialogue, meta: AugmentationMeta) -> Dialogue {
    let i = meta.exchange_index;
    let mut out = d.clone();
    out.turns[i].text = format!("{} {}", d.turns[i].text, meta.backstory);
    let sys = &mut out.turns[i + 1];
    sys.text = format!("{} {}", meta.reaction, sys.text);
    sys.delex_text = sys.delex_text.as_ref().map(|t| format!("{} {t}", meta.reaction));
    out.augmentation = Some(meta);
    out
}

/// Removes the generated text from an augmented dialogue, returning the source
/// dialogue, or `None` if the turns do not carry the recorded augmentation.
pub fn strip_augmentation(d: &Dialogue) -> Option<Dialogue> {
    let meta = d.augmentation.as_ref()?;
    let i = meta.exchange_index;
    let mut out = d.clone();
    out.augmentation = None;
    let user = out.turns.get_mut(i)?;
    user.text = user.text.strip_suffix(&format!(" {}", meta.backstory))?.to_string();
    let sys = out.turns.get_mut(i + 1)?;
    let prefix = format!("{} ", meta.reaction);
    sys.text = sys.text.strip_prefix(&prefix)?.to_string();
    if let Some(delex) = &sys.delex_text {
        sys.delex_text = Some(delex.strip_prefix(&prefix)?.to_string());
    }
    Some(out)
}

/// Runs the pipeline with the built-in templates and no venue database.
pub fn run_pipeline(corpus: &Corpus, gateway: &Gateway, config: &AugmentConfig, seed: u64) -> Result<(Corpus, RunReport), AugmentError> {
    let kit = PromptKit::builtin();
    Augmenter::new(gateway, &kit, config.clone(), seed)?.run(corpus, None)
}
