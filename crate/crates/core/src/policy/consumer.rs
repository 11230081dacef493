//! Consumer approach decisions.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::belief::{expected_consumer_payoff, participates, BeliefModel};
use crate::error::PolicyError;
use crate::model::{ExpertOffer, Institution, MarketParams};
use crate::money::{Expected, Probability};

use super::replay::{ConsumerReplayPool, ReplayChoice};
use super::DecisionContext;

/// Approach probabilities per institution for trust-driven consumers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrustRates {
    pub no_institution: Probability,
    pub verifiability: Probability,
    pub liability: Probability,
}

impl Default for TrustRates {
    /// Approach shares observed among human consumers facing human experts.
    fn default() -> Self {
        TrustRates {
            no_institution: Probability::ratio(66, 100),
            verifiability: Probability::ratio(66, 100),
            liability: Probability::ratio(80, 100),
        }
    }
}

impl TrustRates {
    pub fn rate(&self, institution: Institution) -> Probability {
        match institution {
            Institution::NoInstitution => self.no_institution,
            Institution::Verifiability => self.verifiability,
            Institution::Liability => self.liability,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConsumerKind {
    /// Approach the best offer under `belief` when it beats the outside option.
    Threshold(BeliefModel),
    /// Approach with a fixed probability per institution; pick the offer
    /// ranked best under `belief`.
    Trust {
        rates: TrustRates,
        belief: BeliefModel,
    },
    /// Like `Threshold`, but disclosed objectives replace the base belief.
    TransparencyAware(BeliefModel),
    /// Recorded choices, replayed positionally.
    Replay(Arc<ConsumerReplayPool>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    LowestIndex,
    UniformRandom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsumerPolicy {
    pub kind: ConsumerKind,
    pub tie_break: TieBreak,
}

impl ConsumerPolicy {
    pub fn threshold(belief: BeliefModel) -> Self {
        ConsumerPolicy {
            kind: ConsumerKind::Threshold(belief),
            tie_break: TieBreak::LowestIndex,
        }
    }

    pub fn transparency_aware(base: BeliefModel) -> Self {
        ConsumerPolicy {
            kind: ConsumerKind::TransparencyAware(base),
            tie_break: TieBreak::LowestIndex,
        }
    }

    pub fn trust(rates: TrustRates) -> Self {
        ConsumerPolicy {
            kind: ConsumerKind::Trust {
                rates,
                belief: BeliefModel::StandardSelfInterest,
            },
            tie_break: TieBreak::LowestIndex,
        }
    }

    pub fn replay(pool: Arc<ConsumerReplayPool>) -> Self {
        ConsumerPolicy {
            kind: ConsumerKind::Replay(pool),
            tie_break: TieBreak::LowestIndex,
        }
    }

    pub fn with_tie_break(mut self, tie_break: TieBreak) -> Self {
        self.tie_break = tie_break;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Choice {
    /// Index into the offer list.
    Approach(usize),
    OptOut,
}

/// Belief applied to one offer.
pub fn offer_belief(kind: &ConsumerKind, offer: &ExpertOffer) -> BeliefModel {
    match kind {
        ConsumerKind::TransparencyAware(base) => offer
            .disclosed_objective
            .map_or(*base, BeliefModel::Disclosed),
        ConsumerKind::Threshold(belief) | ConsumerKind::Trust { belief, .. } => *belief,
        ConsumerKind::Replay(_) => BeliefModel::StandardSelfInterest,
    }
}

/// Best offers under the policy's beliefs: indices of every maximizer and
/// the maximal expected payoff.
fn best_offers(
    kind: &ConsumerKind,
    params: &MarketParams,
    institution: Institution,
    offers: &[ExpertOffer],
) -> Result<(Vec<usize>, Expected), PolicyError> {
    let mut best = Vec::new();
    let mut best_value = None;
    for (i, offer) in offers.iter().enumerate() {
        let value =
            expected_consumer_payoff(params, institution, offer.prices, offer_belief(kind, offer))?;
        match best_value {
            Some(b) if value < b => {}
            Some(b) if value == b => best.push(i),
            _ => {
                best_value = Some(value);
                best = vec![i];
            }
        }
    }
    Ok((best, best_value.unwrap_or_else(Expected::zero)))
}

fn pick<R: Rng + ?Sized>(tie_break: TieBreak, candidates: &[usize], rng: &mut R) -> usize {
    match tie_break {
        TieBreak::LowestIndex => candidates[0],
        TieBreak::UniformRandom if candidates.len() == 1 => candidates[0],
        TieBreak::UniformRandom => candidates[rng.random_range(0..candidates.len())],
    }
}

/// A consumer's approach choice given the posted offers.
///
/// Uses only the offers, the institution and the consumer's own random
/// stream, so evaluation order across consumers cannot matter.
pub fn consumer_choose<R: Rng + ?Sized>(
    policy: &ConsumerPolicy,
    ctx: &DecisionContext<'_>,
    offers: &[ExpertOffer],
    rng: &mut R,
) -> Result<Choice, PolicyError> {
    if offers.is_empty() {
        return Ok(Choice::OptOut);
    }
    match &policy.kind {
        ConsumerKind::Threshold(_) | ConsumerKind::TransparencyAware(_) => {
            let (best, value) = best_offers(&policy.kind, ctx.params, ctx.institution, offers)?;
            if participates(ctx.params, value) {
                Ok(Choice::Approach(pick(policy.tie_break, &best, rng)))
            } else {
                Ok(Choice::OptOut)
            }
        }
        ConsumerKind::Trust { rates, .. } => {
            if !rates.rate(ctx.institution).sample(rng) {
                return Ok(Choice::OptOut);
            }
            let (best, _) = best_offers(&policy.kind, ctx.params, ctx.institution, offers)?;
            Ok(Choice::Approach(pick(policy.tie_break, &best, rng)))
        }
        ConsumerKind::Replay(pool) => Ok(match pool.choice(ctx)? {
            ReplayChoice::OptOut => Choice::OptOut,
            ReplayChoice::Approach(i) if i < offers.len() => Choice::Approach(i),
            // recorded against a larger market: fall back to the recorded
            // position modulo the offers available
            ReplayChoice::Approach(i) => Choice::Approach(i % offers.len()),
        }),
    }
}

/// Exact distribution of a consumer's choice; `None` for replayed
/// consumers, whose choices come from data.
pub fn choice_distribution(
    policy: &ConsumerPolicy,
    params: &MarketParams,
    institution: Institution,
    offers: &[ExpertOffer],
) -> Result<Option<Vec<(Choice, Probability)>>, PolicyError> {
    if offers.is_empty() {
        return Ok(Some(vec![(Choice::OptOut, Probability::one())]));
    }
    let spread = |best: &[usize], mass: Probability| -> Vec<(Choice, Probability)> {
        match policy.tie_break {
            TieBreak::LowestIndex => vec![(Choice::Approach(best[0]), mass)],
            TieBreak::UniformRandom => {
                let each = mass * Probability::ratio(1, best.len() as i64);
                best.iter().map(|&i| (Choice::Approach(i), each)).collect()
            }
        }
    };
    Ok(match &policy.kind {
        ConsumerKind::Threshold(_) | ConsumerKind::TransparencyAware(_) => {
            let (best, value) = best_offers(&policy.kind, params, institution, offers)?;
            if participates(params, value) {
                Some(spread(&best, Probability::one()))
            } else {
                Some(vec![(Choice::OptOut, Probability::one())])
            }
        }
        ConsumerKind::Trust { rates, .. } => {
            let rate = rates.rate(institution);
            let (best, _) = best_offers(&policy.kind, params, institution, offers)?;
            let mut dist = spread(&best, rate);
            if !rate.complement().is_zero() {
                dist.push((Choice::OptOut, rate.complement()));
            }
            Some(dist)
        }
        ConsumerKind::Replay(_) => None,
    })
}
