//! Strict parsing of the machine-readable `ANSWER:` trailer.

use serde::{Deserialize, Serialize};

use crate::error::AnswerError;
use crate::model::{
    ExpertAction, Institution, MarketParams, PricePair, ProblemType, Tier, Treatment,
};

/// Which decision a reply is expected to contain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ExpectedAnswer {
    PriceSetting,
    TreatmentAndCharge { problem: ProblemType },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParsedDecision {
    Prices(PricePair),
    Action(ExpertAction),
}

/// Key-value pairs of the last `ANSWER:` line.
fn trailer(text: &str) -> Result<Vec<(String, String)>, AnswerError> {
    let line = text
        .lines()
        .rev()
        .map(|l| l.trim().trim_matches(|c| c == '*' || c == '`').trim())
        .find_map(|l| {
            let upper = l.to_ascii_uppercase();
            upper
                .starts_with("ANSWER:")
                .then(|| l["ANSWER:".len()..].to_string())
        })
        .ok_or(AnswerError::MissingTrailer)?;
    line.split(',')
        .map(|part| {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| AnswerError::Malformed(line.trim().to_string()))?;
            Ok((
                k.trim().to_ascii_lowercase(),
                v.trim().trim_end_matches('.').to_string(),
            ))
        })
        .collect()
}

fn value<'a>(pairs: &'a [(String, String)], key: &str) -> Result<&'a str, AnswerError> {
    pairs
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| AnswerError::Malformed(format!("missing `{key}=`")))
}

pub fn parse_price_answer(text: &str, params: &MarketParams) -> Result<PricePair, AnswerError> {
    let pairs = trailer(text)?;
    let num = |key| -> Result<i64, AnswerError> {
        let v = value(&pairs, key)?;
        v.parse()
            .map_err(|_| AnswerError::Malformed(format!("{key}={v} is not a whole number")))
    };
    let prices = PricePair {
        low: num("small")?,
        high: num("big")?,
    };
    prices.validate(params).map_err(AnswerError::OutOfGrid)?;
    Ok(prices)
}

pub fn parse_action_answer(
    text: &str,
    institution: Institution,
    problem: ProblemType,
) -> Result<ExpertAction, AnswerError> {
    let pairs = trailer(text)?;
    let treatment: Treatment = value(&pairs, "treatment")?
        .parse()
        .map_err(|e: crate::ParseValueError| AnswerError::Malformed(e.to_string()))?;
    let tier: Tier = value(&pairs, "charge")?
        .parse()
        .map_err(|e: crate::ParseValueError| AnswerError::Malformed(e.to_string()))?;
    let action = ExpertAction::new(treatment, tier);
    institution
        .check(problem, action)
        .map_err(AnswerError::IllegalAction)?;
    Ok(action)
}

/// Extracts and validates the decision a reply was asked for.
pub fn parse_expert_decision(
    text: &str,
    expected: ExpectedAnswer,
    institution: Institution,
    params: &MarketParams,
) -> Result<ParsedDecision, AnswerError> {
    match expected {
        ExpectedAnswer::PriceSetting => {
            parse_price_answer(text, params).map(ParsedDecision::Prices)
        }
        ExpectedAnswer::TreatmentAndCharge { problem } => {
            parse_action_answer(text, institution, problem).map(ParsedDecision::Action)
        }
    }
}

/// The free-form value of an `ANSWER: <value>` line (comprehension replies).
pub fn parse_free_answer(text: &str) -> Result<String, AnswerError> {
    text.lines()
        .rev()
        .map(|l| l.trim().trim_matches(|c| c == '*' || c == '`').trim())
        .find_map(|l| {
            l.to_ascii_uppercase()
                .starts_with("ANSWER:")
                .then(|| l["ANSWER:".len()..].trim().to_string())
        })
        .ok_or(AnswerError::MissingTrailer)
}
