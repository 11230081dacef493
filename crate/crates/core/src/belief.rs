//! What consumers anticipate experts will do, and the closed-form
//! expected consumer payoff that follows.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::model::{Institution, MarketParams, Objective, PricePair};
use crate::money::Expected;

/// Consumer model of expert behavior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "objective")]
pub enum BeliefModel {
    /// Risk-neutral self-interested experts; indifferent experts are honest.
    StandardSelfInterest,
    /// Self-interested experts that resolve indifference against the
    /// consumer (no honesty presumption under equal markups).
    Skeptical,
    /// The expert's objective is known to the consumer.
    Disclosed(Objective),
}

impl fmt::Display for BeliefModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BeliefModel::StandardSelfInterest => f.write_str("standard"),
            BeliefModel::Skeptical => f.write_str("skeptical"),
            BeliefModel::Disclosed(o) => write!(f, "disclosed:{o}"),
        }
    }
}

/// Markup ordering under verifiability.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarkupCase {
    /// HCT markup larger: always HCT.
    HighLarger,
    /// LCT markup larger: always LCT.
    LowLarger,
    /// Equal markups.
    Equal,
}

pub fn markup_case(params: &MarketParams, prices: PricePair) -> MarkupCase {
    let high = prices.price(crate::model::Tier::High) - params.cost_high;
    let low = prices.price(crate::model::Tier::Low) - params.cost_low;
    match high.cmp(&low) {
        std::cmp::Ordering::Greater => MarkupCase::HighLarger,
        std::cmp::Ordering::Less => MarkupCase::LowLarger,
        std::cmp::Ordering::Equal => MarkupCase::Equal,
    }
}

/// Expected payoff of approaching an expert posting `prices`, given the
/// consumer's belief about how the expert treats and charges.
pub fn expected_consumer_payoff(
    params: &MarketParams,
    institution: Institution,
    prices: PricePair,
    belief: BeliefModel,
) -> Result<Expected, ModelError> {
    prices.validate(params)?;
    let v = params.value_solved;
    let h = params.prob_big;
    let small = h.complement();
    let p_low = prices.price(crate::model::Tier::Low);
    let p_high = prices.price(crate::model::Tier::High);

    // V - p_high: problem always solved, always charged the high price
    let always_high = Expected::from(v - p_high);
    // V - p_low - h (p_high - p_low): honest treatment and charging
    let honest = Expected::from(v - p_low) - Expected::weighted(prices.spread(), h);
    // (1-h) (V - p_high) - h p_high: LCT always, high price always
    let exploit = Expected::weighted(v - p_high, small) - Expected::weighted(p_high, h);

    let standard = |skeptical: bool| match institution {
        Institution::NoInstitution => exploit,
        Institution::Liability => always_high,
        Institution::Verifiability => match markup_case(params, prices) {
            MarkupCase::HighLarger => always_high,
            MarkupCase::LowLarger => Expected::weighted(v, small) - Expected::from(p_low),
            MarkupCase::Equal if !skeptical => honest,
            // small: overtreat at p_high; big: whichever of undertreatment
            // at p_low or HCT at p_high hurts more
            MarkupCase::Equal => {
                Expected::weighted(v - p_high, small)
                    + Expected::weighted((-p_low).min(v - p_high), h)
            }
        },
    };

    Ok(match belief {
        BeliefModel::StandardSelfInterest => standard(false),
        BeliefModel::Skeptical => standard(true),
        BeliefModel::Disclosed(Objective::SelfInterested | Objective::NoObjective) => {
            standard(false)
        }
        BeliefModel::Disclosed(Objective::EfficiencyLoving) => match institution {
            Institution::Verifiability => honest,
            Institution::NoInstitution | Institution::Liability => always_high,
        },
        BeliefModel::Disclosed(Objective::InequityAverse) => honest,
    })
}

/// True when a consumer with this expectation prefers approaching;
/// indifferent consumers approach.
pub fn participates(params: &MarketParams, expected: Expected) -> bool {
    expected >= Expected::from(params.outside_option)
}

/// Outside option as an expectation.
pub fn outside_option(params: &MarketParams) -> Expected {
    Expected::from(params.outside_option)
}
