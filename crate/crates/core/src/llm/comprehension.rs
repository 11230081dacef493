//! Comprehension questions and the pass/fail gate.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::LlmError;

pub const DEFAULT_COMPREHENSION: &str = include_str!("../../assets/comprehension.toml");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Question {
    pub id: String,
    pub text: String,
    pub answer: String,
}

impl Question {
    /// Numbers compare numerically; everything else case-insensitively.
    pub fn is_correct(&self, given: &str) -> bool {
        let norm = |s: &str| s.trim().trim_end_matches('.').to_ascii_lowercase();
        let (given, expected) = (norm(given), norm(&self.answer));
        match (given.parse::<f64>(), expected.parse::<f64>()) {
            (Ok(a), Ok(b)) => (a - b).abs() < 1e-9,
            _ => given == expected,
        }
    }

    /// Question text with the answer contract.
    pub fn prompt(&self) -> String {
        format!(
            "{}\nEnd your reply with exactly one line of the form\nANSWER: <your answer>",
            self.text
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComprehensionSet {
    /// Full passes through the questions; every answer must be correct in
    /// one pass.
    pub attempts_allowed: usize,
    pub questions: Vec<Question>,
}

impl ComprehensionSet {
    pub fn default_set() -> Self {
        toml::from_str(DEFAULT_COMPREHENSION).expect("bundled comprehension fixture parses")
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path).map_err(|source| LlmError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let set: ComprehensionSet = toml::from_str(&text).map_err(|e| LlmError::Fixture {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if set.questions.is_empty() || set.attempts_allowed == 0 {
            return Err(LlmError::Fixture {
                path: path.to_path_buf(),
                message: "need at least one question and one attempt".into(),
            });
        }
        Ok(set)
    }

    /// Human protocol: two tries.
    pub fn with_attempts(mut self, attempts: usize) -> Self {
        self.attempts_allowed = attempts;
        self
    }
}

/// One answered question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answered {
    pub id: String,
    pub question: String,
    pub reply: String,
    pub answer: Option<String>,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateResult {
    pub passed: bool,
    pub attempts_used: usize,
    /// Answers from the final attempt.
    pub answers: Vec<Answered>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_fixture_has_nine_questions() {
        let set = ComprehensionSet::default_set();
        assert_eq!(set.questions.len(), 9);
        assert_eq!(set.attempts_allowed, 1);
    }

    #[test]
    fn grading() {
        let q = Question {
            id: "x".into(),
            text: "?".into(),
            answer: "1.6".into(),
        };
        assert!(q.is_correct("1.60"));
        assert!(!q.is_correct("1.5"));
        let q = Question {
            id: "y".into(),
            text: "?".into(),
            answer: "no".into(),
        };
        assert!(q.is_correct(" No."));
        assert!(!q.is_correct("yes"));
    }
}
