//! Live LLM agents: prompt assembly, training-data rows, the
//! comprehension gate, answer parsing and a provider-agnostic client.

pub mod answer;
pub mod client;
pub mod comprehension;
pub mod driver;
pub mod history;
pub mod prompts;
pub mod transcript;

pub use answer::{parse_expert_decision, ExpectedAnswer, ParsedDecision};
pub use client::{
    CannedClient, ChatClient, ChatMessage, ChatRequest, ChatRole, ClientError, ReplayClient,
};
pub use comprehension::{ComprehensionSet, GateResult, Question};
pub use driver::{
    aiai_training_records, run_llm_expert, run_llm_experts, LlmExpertConfig, LlmExpertOutcome,
    LlmExpertRun, PromptBundle, TrainingData,
};
pub use history::{
    encode_history, encode_row, parse_history, parse_row, HistoryChoice, HistoryRecord,
    HistorySource,
};
pub use prompts::{build_objective_directive, RoleFraming};
pub use transcript::{read_transcript, TranscriptEntry, TranscriptRole, TranscriptWriter};
