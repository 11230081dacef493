//! Command implementations behind the `credence` binary, the session
//! service and the OpenAI-compatible chat adapter.

pub mod commands;
pub mod openai;
pub mod serve;
