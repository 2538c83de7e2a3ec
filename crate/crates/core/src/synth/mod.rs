//! Synthetic data pipeline: filter public text, generate chats through the
//! receiver → topic → conversation chain, and turn articles into chats.

mod parse;
mod pipeline;
mod prompts;
mod variables;

pub use parse::{dedup, is_chat, parse_list, parse_score};
pub use pipeline::{
    combine, filter_corpus, filter_example, generate_chats, generate_conversation,
    generate_receivers, generate_topics, subsample, transform_corpus, transform_example,
    StageStats, SynthConfig, SynthStats,
};
pub use prompts::{PromptKind, PromptTemplate};
pub use variables::{
    ages, days, enumerate_variable_grid, grid_size, sample_assignments, VariableAssignment,
    AGE_GROUPS, CHAT_APPS, GENDERS, HOLIDAYS, SEASONS, TIMES, VACATION_DAY, WEEKDAYS,
};

use crate::backend::BackendError;
use crate::corpus::Source;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("no binding for placeholder [{0}]")]
    MissingBinding(String),
    #[error("chain order violated: {0}")]
    ChainOrder(&'static str),
    #[error("unparseable response: {0:?}")]
    Unparseable(String),
    #[error("empty list in response")]
    EmptyList,
    #[error("empty input text")]
    EmptyInput,
    #[error("response is not a multi-turn chat")]
    NotAChat,
    #[error("expected a {expected} example, got {found}")]
    WrongSource { expected: Source, found: Source },
    #[error("every backend call failed; first error: {0}")]
    Backend(#[from] BackendError),
}
