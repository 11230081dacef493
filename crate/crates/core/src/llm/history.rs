//! Market-history rows given to trained agents: one row per consumer,
//! `Player A3, 4, 8, 3, 7, 4, 8, 11, 11` — the approached expert (or
//! `OptOut`) followed by each expert's small and big price in order.

use serde::{Deserialize, Serialize};

use crate::error::HistoryError;
use crate::model::{MarketParams, PricePair};

/// Number of experts per history row.
pub const EXPERTS_PER_ROW: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryChoice {
    /// Position of the approached expert (0 = Player A1).
    Approach(usize),
    OptOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub chosen: HistoryChoice,
    pub prices: [PricePair; EXPERTS_PER_ROW],
}

/// Who produced the recorded decisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistorySource {
    HumanHuman,
    AiAi,
}

impl HistoryRecord {
    pub fn validate(&self, params: &MarketParams, index: usize) -> Result<(), HistoryError> {
        for p in &self.prices {
            p.validate(params)
                .map_err(|source| HistoryError::InvalidRecord { index, source })?;
        }
        if let HistoryChoice::Approach(i) = self.chosen {
            if i >= EXPERTS_PER_ROW {
                return Err(HistoryError::InvalidChoice {
                    index,
                    chosen: i + 1,
                    experts: EXPERTS_PER_ROW,
                });
            }
        }
        Ok(())
    }
}

/// One row, without a trailing newline.
pub fn encode_row(record: &HistoryRecord) -> String {
    let mut fields = vec![match record.chosen {
        HistoryChoice::Approach(i) => format!("Player A{}", i + 1),
        HistoryChoice::OptOut => "OptOut".to_string(),
    }];
    for p in &record.prices {
        fields.push(p.low.to_string());
        fields.push(p.high.to_string());
    }
    fields.join(", ")
}

fn header(source: HistorySource, n: usize) -> String {
    let who = match source {
        HistorySource::HumanHuman => "human Player B's facing human Player A's",
        HistorySource::AiAi => "AI Player B's facing AI Player A's",
    };
    format!(
        "The rows below record decisions of {who} in earlier markets. \
         Each row starts with the Player B's choice: the Player A they approached, or OptOut if they left the market. \
         The next eight values are the prices that Player B saw, grouped by Player A: \
         small and big price of Player A1, then of Player A2, Player A3 and Player A4.\n\
         Example: \"Player A3, 4, 8, 3, 7, 4, 8, 11, 11\" means the Player B approached Player A3, \
         Player A1 offered small=4 and big=8, Player A2 offered small=3 and big=7, and Player A3 offered small=4 and big=8.\n\
         The data set contains {n} such rows."
    )
}

/// Explanatory header followed by one row per record.
pub fn encode_history(
    records: &[HistoryRecord],
    source: HistorySource,
    params: &MarketParams,
) -> Result<String, HistoryError> {
    for (i, r) in records.iter().enumerate() {
        r.validate(params, i)?;
    }
    let mut out = header(source, records.len());
    out.push_str("\n\n");
    for r in records {
        out.push_str(&encode_row(r));
        out.push('\n');
    }
    Ok(out)
}

/// Parses one row; `line` is used in diagnostics.
pub fn parse_row(text: &str, line: usize) -> Result<HistoryRecord, HistoryError> {
    let malformed = |message: String| HistoryError::Malformed { line, message };
    let fields: Vec<&str> = text.trim().split(',').map(str::trim).collect();
    if fields.len() != 1 + 2 * EXPERTS_PER_ROW {
        return Err(malformed(format!(
            "expected {} fields, found {}",
            1 + 2 * EXPERTS_PER_ROW,
            fields.len()
        )));
    }
    let chosen = if fields[0] == "OptOut" {
        HistoryChoice::OptOut
    } else {
        let k = fields[0]
            .strip_prefix("Player A")
            .and_then(|d| d.parse::<usize>().ok())
            .filter(|k| (1..=EXPERTS_PER_ROW).contains(k))
            .ok_or_else(|| malformed(format!("unknown choice {:?}", fields[0])))?;
        HistoryChoice::Approach(k - 1)
    };
    let mut prices = [PricePair { low: 0, high: 0 }; EXPERTS_PER_ROW];
    for (i, p) in prices.iter_mut().enumerate() {
        let num = |s: &str| {
            s.parse::<i64>()
                .map_err(|_| malformed(format!("not a price: {s:?}")))
        };
        *p = PricePair {
            low: num(fields[1 + 2 * i])?,
            high: num(fields[2 + 2 * i])?,
        };
    }
    Ok(HistoryRecord { chosen, prices })
}

/// Parses the rows of an encoded history, skipping the header paragraph.
pub fn parse_history(text: &str) -> Result<Vec<HistoryRecord>, HistoryError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| {
            let l = l.trim();
            (l.starts_with("Player A") || l.starts_with("OptOut")) && !l.contains('"')
        })
        .map(|(i, l)| parse_row(l, i + 1))
        .collect()
}
