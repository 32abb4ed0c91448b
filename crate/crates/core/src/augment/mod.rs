//! Backstory/reaction augmentation of task-oriented dialogues.
//!
//! For each dialogue with prepended chitchat: summarize the chitchat into a
//! seed situation, pick one exchange before the dialogue switches domain,
//! generate a user backstory and a system reaction, and keep the dialogue
//! only if every filter passes.

mod filters;
mod pipeline;
mod select;
mod similarity;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use filters::{
    aligned_slot_values, FilterConfig, Filters, SlotPattern, Verdict, FILTER_LEAKAGE_BACKSTORY,
    FILTER_LEAKAGE_REACTION, FILTER_NAMES, FILTER_SIMILARITY_BACKSTORY, FILTER_SIMILARITY_REACTION,
    FILTER_STRUCTURE, REQUESTABLE_SLOTS,
};
pub use pipeline::{
    run_pipeline, splice, strip_augmentation, AugmentationRecord, Augmenter, RunCounts, RunReport, SeedSituation,
    TokenStats, UnprocessedDialogue, REPORT_SCHEMA,
};
pub use select::{dialogue_rng, dialogue_seed, eligible_exchanges, select_exchange};
pub use similarity::{edit_distance, levenshtein_similarity};

use crate::gateway::{GatewayError, GenerationSettings};
use crate::prompts::PromptError;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("{0}")]
    Precondition(String),
    #[error("dialogue {dialogue_id}: {stage} generation failed: {message}")]
    Generation {
        dialogue_id: String,
        stage: &'static str,
        message: String,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("invalid augmentation config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub filter: FilterConfig,
    pub generation: GenerationSettings,
    /// Extra completions drawn per stage before a dialogue is dropped.
    pub retries: u32,
    pub situation_max_chars: usize,
    /// Minimum acceptance rate for a run to count as successful.
    pub acceptance_floor: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            filter: FilterConfig::default(),
            generation: GenerationSettings::default(),
            retries: 1,
            situation_max_chars: 600,
            acceptance_floor: 0.0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), AugmentError> {
        if !(0.0..=1.0).contains(&self.acceptance_floor) {
            return Err(AugmentError::Config(format!(
                "acceptance_floor must be in [0, 1], got {}",
                self.acceptance_floor
            )));
        }
        if self.situation_max_chars == 0 {
            return Err(AugmentError::Config("situation_max_chars must be positive".into()));
        }
        Filters::new(self.filter.clone()).map_err(AugmentError::Config)?;
        Ok(())
    }
}
