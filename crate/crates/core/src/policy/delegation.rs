//! Human experts who may hand their decisions to an LLM agent.

use num_rational::Ratio;
use num_traits::{One, ToPrimitive};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::PolicyError;
use crate::model::Objective;
use crate::money::Probability;

use super::scripted::{scripted_llm_profile, LlmSource};
use super::{DecisionContext, ExpertDecision, ExpertPolicy};

/// Which objectives a delegating expert can give the LLM agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveRegime {
    /// The agent always maximizes the delegating expert's payoff.
    #[default]
    FixedSelfInterested,
    /// The expert picks one of the four objective prompts.
    ChosenObjective,
}

impl ObjectiveRegime {
    /// Objectives a delegating expert may choose from.
    pub fn choices(self) -> Vec<Objective> {
        match self {
            ObjectiveRegime::FixedSelfInterested => vec![Objective::SelfInterested],
            ObjectiveRegime::ChosenObjective => Objective::ALL.to_vec(),
        }
    }

    pub fn permits(self, objective: Objective) -> bool {
        self.choices().contains(&objective)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DelegationChoice {
    delegated: bool,
    chosen_objective: Option<Objective>,
}

impl DelegationChoice {
    pub fn keep() -> Self {
        DelegationChoice {
            delegated: false,
            chosen_objective: None,
        }
    }

    pub fn delegate(chosen_objective: Option<Objective>) -> Self {
        DelegationChoice {
            delegated: true,
            chosen_objective,
        }
    }

    pub fn delegated(&self) -> bool {
        self.delegated
    }

    pub fn chosen_objective(&self) -> Option<Objective> {
        self.chosen_objective
    }
}

/// The policy that acts for an expert after the delegation choice.
///
/// Delegating returns `llm`, tagged as delegated; a chosen objective must
/// match the one `llm` was prompted with.
pub fn delegation_wrap(
    inner_human: ExpertPolicy,
    delegation: DelegationChoice,
    llm: ExpertPolicy,
) -> Result<ExpertPolicy, PolicyError> {
    if !delegation.delegated {
        return Ok(ExpertPolicy {
            delegated: false,
            ..inner_human
        });
    }
    if let Some(chosen) = delegation.chosen_objective {
        if llm.objective != Some(chosen) {
            return Err(PolicyError::ObjectiveMismatch {
                chosen: chosen.to_string(),
                found: llm
                    .objective
                    .map_or_else(|| "none".to_string(), |o| o.to_string()),
            });
        }
    }
    Ok(ExpertPolicy {
        delegated: true,
        ..llm
    })
}

/// A population of human experts who delegate with probability `rate`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelegationSpec {
    pub human: ExpertPolicy,
    pub rate: Probability,
    pub regime: ObjectiveRegime,
    /// Objective shares among delegating experts (chosen-objective regime).
    pub objective_shares: ObjectiveShares,
}

/// Exact weights over objectives.
pub type ObjectiveShares = Vec<(Objective, Probability)>;

/// Objective mix among delegators: one in five picks inequity aversion,
/// the rest split evenly between self-interest and efficiency.
pub fn default_objective_shares() -> ObjectiveShares {
    vec![
        (Objective::SelfInterested, Probability::ratio(2, 5)),
        (Objective::InequityAverse, Probability::ratio(1, 5)),
        (Objective::EfficiencyLoving, Probability::ratio(2, 5)),
    ]
}

impl DelegationSpec {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.regime == ObjectiveRegime::ChosenObjective {
            let sum: Ratio<i64> = self.objective_shares.iter().map(|(_, p)| p.value()).sum();
            if self.objective_shares.is_empty() || !sum.is_one() {
                return Err(PolicyError::WeightsDoNotSumToOne {
                    sum: sum.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(())
    }

    fn draw_objective<R: Rng + ?Sized>(&self, rng: &mut R) -> Objective {
        match self.regime {
            ObjectiveRegime::FixedSelfInterested => Objective::SelfInterested,
            ObjectiveRegime::ChosenObjective => {
                let mut remaining = Probability::one();
                for &(objective, share) in &self.objective_shares {
                    // conditional probability of this objective given none before it
                    if remaining.is_zero() {
                        break;
                    }
                    let conditional = Probability::new(share.value() / remaining.value())
                        .unwrap_or(Probability::one());
                    if conditional.sample(rng) {
                        return objective;
                    }
                    remaining = Probability::new(remaining.value() - share.value())
                        .unwrap_or(Probability::zero());
                }
                self.objective_shares
                    .last()
                    .map_or(Objective::SelfInterested, |(o, _)| *o)
            }
        }
    }

    pub fn decide<R: Rng + ?Sized>(
        &self,
        ctx: &DecisionContext<'_>,
        rng: &mut R,
    ) -> Result<ExpertDecision, PolicyError> {
        if !self.rate.sample(rng) {
            let decision = self.human.decide(ctx, rng)?;
            return Ok(ExpertDecision {
                delegated: false,
                ..decision
            });
        }
        let objective = self.draw_objective(rng);
        let llm = ExpertPolicy::scripted(scripted_llm_profile(LlmSource::Delegated(objective)));
        let choice = DelegationChoice::delegate(Some(objective));
        delegation_wrap(self.human.clone(), choice, llm)?.decide(ctx, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Institution, MarketParams, PricePair};
    use crate::policy::PriceChoice;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn human() -> ExpertPolicy {
        ExpertPolicy::rational(
            Objective::SelfInterested,
            PriceChoice::Fixed(PricePair { low: 2, high: 6 }),
        )
        .unwrap()
    }

    fn llm(o: Objective) -> ExpertPolicy {
        ExpertPolicy::scripted(scripted_llm_profile(LlmSource::Delegated(o)))
    }

    fn decide(policy: &ExpertPolicy) -> ExpertDecision {
        let params = MarketParams::default();
        let ctx = DecisionContext {
            params: &params,
            institution: Institution::NoInstitution,
            rep: 0,
            agent: 0,
        };
        policy
            .decide(&ctx, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap()
    }

    #[test]
    fn keeping_control_passes_through() {
        let p = delegation_wrap(
            human(),
            DelegationChoice::keep(),
            llm(Objective::SelfInterested),
        )
        .unwrap();
        let d = decide(&p);
        assert!(!d.delegated);
        assert_eq!(d.strategy.prices, PricePair { low: 2, high: 6 });
    }

    #[test]
    fn delegated_prices_follow_the_chosen_objective() {
        let el = delegation_wrap(
            human(),
            DelegationChoice::delegate(Some(Objective::EfficiencyLoving)),
            llm(Objective::EfficiencyLoving),
        )
        .unwrap();
        let d = decide(&el);
        assert!(d.delegated);
        assert_eq!(d.strategy.prices, PricePair { low: 4, high: 8 });
        assert_eq!(d.objective, Some(Objective::EfficiencyLoving));

        let si = delegation_wrap(
            human(),
            DelegationChoice::delegate(Some(Objective::SelfInterested)),
            llm(Objective::SelfInterested),
        )
        .unwrap();
        assert_eq!(decide(&si).strategy.prices, PricePair { low: 3, high: 5 });
    }

    #[test]
    fn mismatched_llm_is_rejected() {
        let r = delegation_wrap(
            human(),
            DelegationChoice::delegate(Some(Objective::InequityAverse)),
            llm(Objective::SelfInterested),
        );
        assert!(matches!(r, Err(PolicyError::ObjectiveMismatch { .. })));
    }

    #[test]
    fn regime_choices() {
        assert_eq!(ObjectiveRegime::ChosenObjective.choices().len(), 4);
        assert!(!ObjectiveRegime::FixedSelfInterested.permits(Objective::EfficiencyLoving));
    }

    #[test]
    fn objective_shares_are_respected() {
        let spec = DelegationSpec {
            human: human(),
            rate: Probability::one(),
            regime: ObjectiveRegime::ChosenObjective,
            objective_shares: default_objective_shares(),
        };
        spec.validate().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 20_000;
        let ia = (0..n)
            .filter(|_| spec.draw_objective(&mut rng) == Objective::InequityAverse)
            .count();
        assert!((ia as f64 / n as f64 - 0.2).abs() < 0.015);
    }
}
