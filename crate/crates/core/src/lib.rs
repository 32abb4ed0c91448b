//! Chitchat-interference augmentation for task-oriented dialogue corpora.
//!
//! The crate is organised around the life of a dataset:
//!
//! * [`corpus`] loads, validates and delexicalizes MultiWOZ/FusedChat-style dialogues.
//! * [`gateway`] talks to a text-completion backend (HTTP or a deterministic mock).
//! * [`prompts`] renders the few-shot prompts and parses separator-structured completions.
//! * [`augment`] runs the seed-situation / turn-selection / augmentation / filtering pipeline.
//! * [`simpletod`] serializes and parses single-sequence TOD model outputs.
//! * [`metrics`] scores model outputs and human annotations.
//! * [`annotation`] builds annotation tasks and persists rater submissions.

pub mod annotation;
pub mod augment;
pub mod corpus;
pub mod gateway;
pub mod metrics;
pub mod prompts;
pub mod simpletod;
pub mod text;

pub use corpus::{BeliefTriplet, Corpus, Dialogue, DialogueAct, Speaker, Turn, TurnMode, VenueDatabase};
