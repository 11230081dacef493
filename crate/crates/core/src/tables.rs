//! Market-outcome tables for the scripted LLM-vs-LLM cells: every prompted
//! objective under every institution, in closed form.

use serde::Serialize;

use crate::belief::BeliefModel;
use crate::engine::MarketCell;
use crate::error::EngineError;
use crate::metrics::expected_outcome;
use crate::model::{classify_fraud, FraudKind, Institution, MarketParams, Objective, ProblemType};
use crate::money::{Expected, Probability};
use crate::policy::{scripted_llm_profile, ConsumerPolicy, ExpertPolicy, LlmSource};

/// Four scripted LLM experts prompted with `objective` facing four
/// threshold consumers holding `belief`.
pub fn aiai_cell(
    params: &MarketParams,
    institution: Institution,
    objective: Objective,
    belief: BeliefModel,
) -> MarketCell {
    MarketCell {
        label: format!("aiai/{objective}/{}", institution.label()),
        params: params.clone(),
        institution,
        transparent: false,
        experts: vec![
            ExpertPolicy::scripted(scripted_llm_profile(LlmSource::AiAi(objective)));
            params.n_experts
        ],
        consumers: vec![ConsumerPolicy::threshold(belief); params.n_consumers],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeRow {
    pub institution: Institution,
    pub objective: Objective,
    pub approach_share: Probability,
    pub behavior: String,
    /// Group totals.
    pub consumer_surplus: Expected,
    pub expert_surplus: Expected,
    pub efficiency: f64,
}

fn percent(p: Probability) -> String {
    let x = p.to_f64() * 100.0;
    if (x - x.round()).abs() < 1e-9 {
        format!("{}%", x.round())
    } else {
        format!("{x:.1}%")
    }
}

/// Short description of what experts do with each problem.
pub fn behavior_label(
    profile_source: LlmSource,
    institution: Institution,
    approach: Probability,
) -> String {
    if approach.is_zero() {
        return "opt out".into();
    }
    let profile = scripted_llm_profile(profile_source);
    let mut parts = Vec::new();
    for problem in ProblemType::ALL {
        for kind in FraudKind::ALL {
            let mass: num_rational::Ratio<i64> = profile
                .distribution(institution, problem)
                .entries()
                .iter()
                .filter(|(a, _)| classify_fraud(problem, *a).contains(kind))
                .map(|(_, p)| p.value())
                .sum();
            if mass != num_rational::Ratio::from_integer(0) {
                let p = Probability::new(mass).expect("sum of probabilities");
                parts.push(format!("{} {} ({problem})", kind.label(), percent(p)));
            }
        }
    }
    if parts.is_empty() {
        "honest".into()
    } else {
        parts.join("; ")
    }
}

/// Closed-form outcomes for every institution × objective cell.
pub fn aiai_outcome_table(
    params: &MarketParams,
    belief: BeliefModel,
) -> Result<Vec<OutcomeRow>, EngineError> {
    let mut rows = Vec::new();
    for institution in Institution::ALL {
        for objective in Objective::ALL {
            let e = expected_outcome(&aiai_cell(params, institution, objective, belief))?;
            rows.push(OutcomeRow {
                institution,
                objective,
                approach_share: e.approach_rate,
                behavior: behavior_label(LlmSource::AiAi(objective), institution, e.approach_rate),
                consumer_surplus: e.consumer_surplus,
                expert_surplus: e.expert_surplus,
                efficiency: e.efficiency_expected,
            });
        }
    }
    Ok(rows)
}
