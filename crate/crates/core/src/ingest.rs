//! Human decision data: CSV ingestion into replay pools, and a summary
//! of what was read.
//!
//! Expected columns (header row required, order free):
//! `subject_id, role, institution, p_low, p_high, action_small_treatment,
//! action_small_charge, action_big_treatment, action_big_charge,
//! approach_choice, delegated, chosen_objective`.
//! Expert rows leave `approach_choice` empty; consumer rows leave the
//! price and action columns empty. `approach_choice` is `A1`..`A4`
//! (`Player A3` is accepted) or `opt_out`.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::IngestError;
use crate::model::{
    ExpertAction, Institution, MarketParams, Objective, PricePair, ProblemType, Tier, Treatment,
};
use crate::policy::{
    ConsumerRecord, ConsumerReplayPool, ExpertRecord, ExpertReplayPool, ReplayChoice,
};

/// One CSV row as written on disk.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanRow {
    pub subject_id: String,
    pub role: String,
    pub institution: String,
    pub p_low: Option<i64>,
    pub p_high: Option<i64>,
    pub action_small_treatment: Option<String>,
    pub action_small_charge: Option<String>,
    pub action_big_treatment: Option<String>,
    pub action_big_charge: Option<String>,
    pub approach_choice: Option<String>,
    pub delegated: Option<String>,
    pub chosen_objective: Option<String>,
}

impl HumanRow {
    pub fn from_expert(r: &ExpertRecord) -> Self {
        HumanRow {
            subject_id: r.subject_id.clone(),
            role: "expert".into(),
            institution: r.institution.label().into(),
            p_low: Some(r.prices.low),
            p_high: Some(r.prices.high),
            action_small_treatment: Some(r.small.treatment.to_string()),
            action_small_charge: Some(r.small.tier.to_string()),
            action_big_treatment: Some(r.big.treatment.to_string()),
            action_big_charge: Some(r.big.tier.to_string()),
            approach_choice: None,
            delegated: Some(r.delegated.to_string()),
            chosen_objective: r.chosen_objective.map(|o| o.to_string()),
        }
    }

    pub fn from_consumer(r: &ConsumerRecord) -> Self {
        HumanRow {
            subject_id: r.subject_id.clone(),
            role: "consumer".into(),
            institution: r.institution.label().into(),
            approach_choice: Some(match r.choice {
                ReplayChoice::Approach(i) => format!("A{}", i + 1),
                ReplayChoice::OptOut => "opt_out".into(),
            }),
            ..HumanRow::default()
        }
    }
}

/// A row that failed validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RejectedRow {
    /// 1-based line number in the file (the header is line 1).
    pub line: u64,
    pub subject_id: String,
    pub reason: String,
}

/// Validated records plus the rows that were rejected.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct HumanData {
    pub experts: Vec<ExpertRecord>,
    pub consumers: Vec<ConsumerRecord>,
    pub rejected: Vec<RejectedRow>,
}

fn required<'a>(value: &'a Option<String>, column: &str) -> Result<&'a str, String> {
    value
        .as_deref()
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| format!("missing {column}"))
}

fn parse_action(
    treatment: &Option<String>,
    charge: &Option<String>,
    problem: ProblemType,
    institution: Institution,
) -> Result<ExpertAction, String> {
    let name = match problem {
        ProblemType::Small => "small",
        ProblemType::Big => "big",
    };
    let treatment: Treatment = required(treatment, &format!("action_{name}_treatment"))?
        .parse()
        .map_err(|e| format!("action_{name}_treatment: {e}"))?;
    let tier: Tier = required(charge, &format!("action_{name}_charge"))?
        .parse()
        .map_err(|e| format!("action_{name}_charge: {e}"))?;
    let action = ExpertAction::new(treatment, tier);
    institution
        .check(problem, action)
        .map_err(|e| e.to_string())?;
    Ok(action)
}

fn parse_bool(value: &Option<String>) -> Result<bool, String> {
    match value
        .as_deref()
        .map(|s| s.trim().to_ascii_lowercase())
        .as_deref()
    {
        None | Some("") | Some("false") | Some("0") | Some("no") => Ok(false),
        Some("true") | Some("1") | Some("yes") => Ok(true),
        Some(other) => Err(format!("delegated: expected true/false, found {other:?}")),
    }
}

fn parse_choice(value: &str, n_experts: usize) -> Result<ReplayChoice, String> {
    let norm = value.trim().to_ascii_lowercase().replace([' ', '-'], "_");
    if matches!(norm.as_str(), "opt_out" | "optout" | "out" | "leave") {
        return Ok(ReplayChoice::OptOut);
    }
    let digits = norm.trim_start_matches("player_").trim_start_matches('a');
    match digits.parse::<usize>() {
        Ok(k) if (1..=n_experts).contains(&k) => Ok(ReplayChoice::Approach(k - 1)),
        _ => Err(format!(
            "approach_choice: expected A1..A{n_experts} or opt_out, found {value:?}"
        )),
    }
}

fn parse_row(row: &HumanRow, params: &MarketParams) -> Result<Record, String> {
    let institution: Institution = row
        .institution
        .parse()
        .map_err(|e| format!("institution: {e}"))?;
    match row.role.trim().to_ascii_lowercase().as_str() {
        "expert" | "a" | "player_a" => {
            let low = row.p_low.ok_or("missing p_low")?;
            let high = row.p_high.ok_or("missing p_high")?;
            let prices = PricePair::new(low, high, params).map_err(|e| e.to_string())?;
            let small = parse_action(
                &row.action_small_treatment,
                &row.action_small_charge,
                ProblemType::Small,
                institution,
            )?;
            let big = parse_action(
                &row.action_big_treatment,
                &row.action_big_charge,
                ProblemType::Big,
                institution,
            )?;
            let delegated = parse_bool(&row.delegated)?;
            let chosen_objective = match row.chosen_objective.as_deref().map(str::trim) {
                None | Some("") => None,
                Some(o) => Some(
                    o.parse::<Objective>()
                        .map_err(|e| format!("chosen_objective: {e}"))?,
                ),
            };
            if chosen_objective.is_some() && !delegated {
                return Err("chosen_objective set on a row that did not delegate".into());
            }
            Ok(Record::Expert(ExpertRecord {
                subject_id: row.subject_id.clone(),
                institution,
                prices,
                small,
                big,
                delegated,
                chosen_objective,
            }))
        }
        "consumer" | "b" | "player_b" => {
            let choice = parse_choice(
                required(&row.approach_choice, "approach_choice")?,
                params.n_experts,
            )?;
            Ok(Record::Consumer(ConsumerRecord {
                subject_id: row.subject_id.clone(),
                institution,
                choice,
            }))
        }
        other => Err(format!(
            "role: expected expert or consumer, found {other:?}"
        )),
    }
}

enum Record {
    Expert(ExpertRecord),
    Consumer(ConsumerRecord),
}

/// Reads and validates a human-data CSV. Invalid rows are reported, not
/// fatal; a file with no rows, or with no valid rows, is an error.
pub fn ingest_human_csv(path: &Path, params: &MarketParams) -> Result<HumanData, IngestError> {
    let file = std::fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ingest_reader(file, params)
}

pub fn ingest_reader<R: std::io::Read>(
    reader: R,
    params: &MarketParams,
) -> Result<HumanData, IngestError> {
    let mut csv = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut data = HumanData::default();
    let mut rows = 0usize;
    for (i, result) in csv.deserialize::<HumanRow>().enumerate() {
        rows += 1;
        let line = i as u64 + 2;
        let row = match result {
            Ok(row) => row,
            Err(e) => {
                data.rejected.push(RejectedRow {
                    line,
                    subject_id: String::new(),
                    reason: e.to_string(),
                });
                continue;
            }
        };
        match parse_row(&row, params) {
            Ok(Record::Expert(r)) => data.experts.push(r),
            Ok(Record::Consumer(r)) => data.consumers.push(r),
            Err(reason) => data.rejected.push(RejectedRow {
                line,
                subject_id: row.subject_id,
                reason,
            }),
        }
    }
    if rows == 0 {
        return Err(IngestError::NoRecords);
    }
    if data.experts.is_empty() && data.consumers.is_empty() {
        return Err(IngestError::AllRejected {
            rejected: data.rejected.len(),
        });
    }
    Ok(data)
}

/// Writes records in the ingest format (experts first, then consumers).
pub fn write_human_csv<W: std::io::Write>(
    writer: W,
    experts: &[ExpertRecord],
    consumers: &[ConsumerRecord],
) -> Result<(), csv::Error> {
    let mut csv = csv::Writer::from_writer(writer);
    for r in experts {
        csv.serialize(HumanRow::from_expert(r))?;
    }
    for r in consumers {
        csv.serialize(HumanRow::from_consumer(r))?;
    }
    csv.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairShare {
    pub low: i64,
    pub high: i64,
    pub count: usize,
    /// Percent of the institution's expert rows.
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstitutionSummary {
    pub experts: usize,
    pub consumers: usize,
    /// Most frequent first; ties by price pair.
    pub price_pairs: Vec<PairShare>,
    pub approach_rate: f64,
    pub delegation_rate: f64,
    /// Share of expert rows with a fraudulent action for either problem.
    pub fraud_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestSummary {
    pub accepted: usize,
    pub rejected: Vec<RejectedRow>,
    pub institutions: BTreeMap<Institution, InstitutionSummary>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl HumanData {
    pub fn expert_pool(&self, seed: u64, experts_per_market: usize) -> Arc<ExpertReplayPool> {
        Arc::new(ExpertReplayPool::new(
            self.experts.clone(),
            seed,
            experts_per_market,
        ))
    }

    pub fn consumer_pool(&self, seed: u64, consumers_per_market: usize) -> Arc<ConsumerReplayPool> {
        Arc::new(ConsumerReplayPool::new(
            self.consumers.clone(),
            seed,
            consumers_per_market,
        ))
    }

    pub fn summary(&self) -> IngestSummary {
        let mut institutions = BTreeMap::new();
        for inst in Institution::ALL {
            let experts: Vec<&ExpertRecord> = self
                .experts
                .iter()
                .filter(|r| r.institution == inst)
                .collect();
            let consumers: Vec<&ConsumerRecord> = self
                .consumers
                .iter()
                .filter(|r| r.institution == inst)
                .collect();
            if experts.is_empty() && consumers.is_empty() {
                continue;
            }
            let mut counts: BTreeMap<PricePair, usize> = BTreeMap::new();
            for r in &experts {
                *counts.entry(r.prices).or_default() += 1;
            }
            let mut price_pairs: Vec<PairShare> = counts
                .into_iter()
                .map(|(p, count)| PairShare {
                    low: p.low,
                    high: p.high,
                    count,
                    percent: 100.0 * ratio(count, experts.len()),
                })
                .collect();
            price_pairs.sort_by(|a, b| {
                b.count
                    .cmp(&a.count)
                    .then((a.low, a.high).cmp(&(b.low, b.high)))
            });
            let fraudulent = experts
                .iter()
                .filter(|r| {
                    !r.small.is_honest(ProblemType::Small) || !r.big.is_honest(ProblemType::Big)
                })
                .count();
            institutions.insert(
                inst,
                InstitutionSummary {
                    experts: experts.len(),
                    consumers: consumers.len(),
                    price_pairs,
                    approach_rate: ratio(
                        consumers
                            .iter()
                            .filter(|r| r.choice != ReplayChoice::OptOut)
                            .count(),
                        consumers.len(),
                    ),
                    delegation_rate: ratio(
                        experts.iter().filter(|r| r.delegated).count(),
                        experts.len(),
                    ),
                    fraud_rate: ratio(fraudulent, experts.len()),
                },
            );
        }
        IngestSummary {
            accepted: self.experts.len() + self.consumers.len(),
            rejected: self.rejected.clone(),
            institutions,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "subject_id,role,institution,p_low,p_high,action_small_treatment,action_small_charge,action_big_treatment,action_big_charge,approach_choice,delegated,chosen_objective\n";

    fn ingest(body: &str) -> Result<HumanData, IngestError> {
        ingest_reader(
            format!("{HEADER}{body}").as_bytes(),
            &MarketParams::default(),
        )
    }

    #[test]
    fn reads_experts_and_consumers() {
        let data = ingest(
            "e1,expert,liability,4,8,LCT,high,HCT,high,,false,\n\
             e2,expert,no_institution,3,7,LCT,low,LCT,high,,true,efficiency_loving\n\
             c1,consumer,liability,,,,,,,A3,,\n\
             c2,consumer,verifiability,,,,,,,opt_out,,\n",
        )
        .unwrap();
        assert_eq!(data.experts.len(), 2);
        assert_eq!(
            data.experts[1].chosen_objective,
            Some(Objective::EfficiencyLoving)
        );
        assert_eq!(data.consumers[0].choice, ReplayChoice::Approach(2));
        assert_eq!(data.consumers[1].choice, ReplayChoice::OptOut);
        assert!(data.rejected.is_empty());
    }

    #[test]
    fn empty_file_has_no_records() {
        assert!(matches!(ingest(""), Err(IngestError::NoRecords)));
    }

    #[test]
    fn illegal_rows_are_rejected_with_a_reason() {
        let data = ingest(
            "e1,expert,liability,4,8,LCT,high,LCT,high,,false,\n\
             e2,expert,liability,4,12,LCT,low,HCT,high,,false,\n\
             e3,expert,verifiability,4,8,HCT,low,HCT,high,,false,\n\
             e4,expert,liability,4,8,LCT,low,HCT,high,,false,\n",
        )
        .unwrap();
        assert_eq!(data.experts.len(), 1);
        let lines: Vec<u64> = data.rejected.iter().map(|r| r.line).collect();
        assert_eq!(lines, vec![2, 3, 4]);
        assert!(
            data.rejected[0].reason.contains("big"),
            "{}",
            data.rejected[0].reason
        );
        assert!(
            data.rejected[1].reason.contains("12"),
            "{}",
            data.rejected[1].reason
        );
    }

    #[test]
    fn all_rejected_is_an_error() {
        let r = ingest("e1,expert,liability,4,8,LCT,high,LCT,high,,false,\n");
        assert!(matches!(r, Err(IngestError::AllRejected { rejected: 1 })));
    }

    #[test]
    fn write_then_read_round_trips() {
        let data = ingest(
            "e1,expert,verifiability,3,7,LCT,low,HCT,high,,true,self_interested\n\
             c1,consumer,no_institution,,,,,,,A1,,\n",
        )
        .unwrap();
        let mut buf = Vec::new();
        write_human_csv(&mut buf, &data.experts, &data.consumers).unwrap();
        let back = ingest_reader(buf.as_slice(), &MarketParams::default()).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn summary_counts_pairs() {
        let data = ingest(
            "e1,expert,no_institution,4,8,LCT,low,HCT,high,,,\n\
             e2,expert,no_institution,4,8,LCT,high,HCT,high,,,\n\
             e3,expert,no_institution,3,7,LCT,low,HCT,high,,,\n\
             c1,consumer,no_institution,,,,,,,A1,,\n\
             c2,consumer,no_institution,,,,,,,out,,\n",
        )
        .unwrap();
        let s = data.summary();
        let ni = &s.institutions[&Institution::NoInstitution];
        assert_eq!(
            (
                ni.price_pairs[0].low,
                ni.price_pairs[0].high,
                ni.price_pairs[0].count
            ),
            (4, 8, 2)
        );
        assert_eq!(ni.approach_rate, 0.5);
        assert!((ni.fraud_rate - 1.0 / 3.0).abs() < 1e-12);
    }
}
