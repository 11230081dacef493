//! Expert and consumer decision policies.
//!
//! An [`ExpertPolicy`] posts a price pair and a strategy-method action
//! rule (one action per problem type for each consumer slot). Consumers
//! pick among the posted offers through a [`ConsumerPolicy`].

mod consumer;
mod delegation;
mod mixture;
mod rational;
mod replay;
mod scripted;

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use consumer::{
    choice_distribution, consumer_choose, offer_belief, Choice, ConsumerKind, ConsumerPolicy,
    TieBreak, TrustRates,
};
pub use delegation::{
    default_objective_shares, delegation_wrap, DelegationChoice, DelegationSpec, ObjectiveRegime,
    ObjectiveShares,
};
pub use mixture::{
    behavioral_mixture, human_price_frequencies, human_slot_fraud_rate, BehavioralMixture,
    FraudSpec, MixtureCell, PriceDistribution, WeightedPair,
};
pub use rational::{anticipated_action, rational_action};
pub use replay::{
    ConsumerRecord, ConsumerReplayPool, ExpertRecord, ExpertReplayPool, ReplayChoice,
};
pub use scripted::{
    scripted_llm_profile, ActionDistribution, LlmSource, ProfileCell, ScriptedProfile,
};

use crate::error::{ModelError, PolicyError};
use crate::model::{ExpertAction, Institution, MarketParams, Objective, PricePair, ProblemType};
use crate::money::Probability;

/// One action per problem type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionRule {
    pub small: ExpertAction,
    pub big: ExpertAction,
}

impl ActionRule {
    pub fn honest() -> Self {
        ActionRule {
            small: ExpertAction::honest(ProblemType::Small),
            big: ExpertAction::honest(ProblemType::Big),
        }
    }

    pub fn action(&self, problem: ProblemType) -> ExpertAction {
        match problem {
            ProblemType::Small => self.small,
            ProblemType::Big => self.big,
        }
    }

    pub fn validate(&self, institution: Institution) -> Result<(), ModelError> {
        institution.check(ProblemType::Small, self.small)?;
        institution.check(ProblemType::Big, self.big)
    }
}

/// Posted prices plus the complete action plan, one rule per consumer slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertStrategy {
    pub prices: PricePair,
    pub slots: Vec<ActionRule>,
}

impl ExpertStrategy {
    pub fn uniform(prices: PricePair, rule: ActionRule, n_slots: usize) -> Self {
        ExpertStrategy {
            prices,
            slots: vec![rule; n_slots],
        }
    }

    pub fn action(&self, slot: usize, problem: ProblemType) -> ExpertAction {
        self.slots[slot % self.slots.len()].action(problem)
    }

    pub fn validate(
        &self,
        params: &MarketParams,
        institution: Institution,
    ) -> Result<(), ModelError> {
        self.prices.validate(params)?;
        self.slots.iter().try_for_each(|r| r.validate(institution))
    }
}

/// Where a decision is being made.
#[derive(Debug, Clone, Copy)]
pub struct DecisionContext<'a> {
    pub params: &'a MarketParams,
    pub institution: Institution,
    /// Replication index; replay policies use it to walk their pool.
    pub rep: u64,
    /// Position of the deciding agent within its role.
    pub agent: usize,
}

/// What an expert posts for one market.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertDecision {
    pub strategy: ExpertStrategy,
    pub delegated: bool,
    /// The objective driving the decision, when one is known.
    pub objective: Option<Objective>,
    /// Label used for attraction shares ("llm:self_interested", "human", ...).
    pub source: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PriceChoice {
    Fixed(PricePair),
    /// Prices from the equilibrium prediction for the market cell.
    Predicted {
        transparent: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExpertPolicyKind {
    Rational {
        objective: Objective,
        prices: PriceChoice,
    },
    Scripted(ScriptedProfile),
    Mixture(BehavioralMixture),
    Replay(Arc<ExpertReplayPool>),
    Delegating(Box<DelegationSpec>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpertPolicy {
    pub id: String,
    pub kind: ExpertPolicyKind,
    pub delegated: bool,
    pub objective: Option<Objective>,
}

impl ExpertPolicy {
    pub fn rational(objective: Objective, prices: PriceChoice) -> Result<Self, PolicyError> {
        if objective == Objective::NoObjective {
            return Err(PolicyError::NoRationalObjective);
        }
        Ok(ExpertPolicy {
            id: format!("rational:{objective}"),
            kind: ExpertPolicyKind::Rational { objective, prices },
            delegated: false,
            objective: Some(objective),
        })
    }

    pub fn scripted(profile: ScriptedProfile) -> Self {
        ExpertPolicy {
            id: format!("scripted:{}", profile.label),
            objective: profile.objective,
            kind: ExpertPolicyKind::Scripted(profile),
            delegated: false,
        }
    }

    pub fn mixture(mixture: BehavioralMixture) -> Self {
        ExpertPolicy {
            id: format!("mixture:{}", mixture.label),
            kind: ExpertPolicyKind::Mixture(mixture),
            delegated: false,
            objective: None,
        }
    }

    pub fn replay(pool: Arc<ExpertReplayPool>) -> Self {
        ExpertPolicy {
            id: "replay".into(),
            kind: ExpertPolicyKind::Replay(pool),
            delegated: false,
            objective: None,
        }
    }

    pub fn delegating(spec: DelegationSpec) -> Self {
        ExpertPolicy {
            id: format!("delegating:{}", spec.human.id),
            kind: ExpertPolicyKind::Delegating(Box::new(spec)),
            delegated: false,
            objective: None,
        }
    }

    fn source_label(&self) -> String {
        match (self.delegated, self.objective) {
            (true, Some(o)) => format!("llm:{o}"),
            (true, None) => "llm".into(),
            (false, _) => self.id.clone(),
        }
    }

    /// Posts prices and the action plan for one market.
    pub fn decide<R: Rng + ?Sized>(
        &self,
        ctx: &DecisionContext<'_>,
        rng: &mut R,
    ) -> Result<ExpertDecision, PolicyError> {
        let n = ctx.params.n_consumers;
        let strategy = match &self.kind {
            ExpertPolicyKind::Rational { objective, prices } => {
                let prices = match prices {
                    PriceChoice::Fixed(p) => *p,
                    PriceChoice::Predicted { transparent } => crate::equilibrium::predicted_price(
                        ctx.params,
                        ctx.institution,
                        *objective,
                        *transparent,
                    )?,
                };
                let rule = ActionRule {
                    small: rational_action(
                        *objective,
                        ctx.params,
                        ctx.institution,
                        ProblemType::Small,
                        prices,
                    )?,
                    big: rational_action(
                        *objective,
                        ctx.params,
                        ctx.institution,
                        ProblemType::Big,
                        prices,
                    )?,
                };
                ExpertStrategy::uniform(prices, rule, n)
            }
            ExpertPolicyKind::Scripted(profile) => profile.sample(ctx.institution, n, rng),
            ExpertPolicyKind::Mixture(mixture) => {
                mixture.sample(ctx.params, ctx.institution, rng)?
            }
            ExpertPolicyKind::Replay(pool) => {
                let record = pool.record(ctx)?;
                let objective = record.chosen_objective.or(self.objective);
                return Ok(ExpertDecision {
                    strategy: record.strategy(n),
                    delegated: record.delegated,
                    objective,
                    source: if record.delegated {
                        objective.map_or_else(|| "llm".into(), |o| format!("llm:{o}"))
                    } else {
                        "human".into()
                    },
                });
            }
            ExpertPolicyKind::Delegating(spec) => return spec.decide(ctx, rng),
        };
        Ok(ExpertDecision {
            strategy,
            delegated: self.delegated,
            objective: self.objective,
            source: self.source_label(),
        })
    }
}

/// An expert whose prices are deterministic and whose per-slot actions
/// follow the same known distribution, so outcomes have closed forms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactExpert {
    pub prices: PricePair,
    pub small: Vec<(ExpertAction, Probability)>,
    pub big: Vec<(ExpertAction, Probability)>,
    pub delegated: bool,
    pub objective: Option<Objective>,
}

impl ExactExpert {
    pub fn distribution(&self, problem: ProblemType) -> &[(ExpertAction, Probability)] {
        match problem {
            ProblemType::Small => &self.small,
            ProblemType::Big => &self.big,
        }
    }
}

impl ExpertPolicy {
    /// Exact description of this policy in `institution`, if one exists
    /// (random prices, replayed data and delegation draws have none).
    pub fn exact(
        &self,
        params: &MarketParams,
        institution: Institution,
    ) -> Result<Option<ExactExpert>, PolicyError> {
        let (prices, small, big) = match &self.kind {
            ExpertPolicyKind::Rational { objective, prices } => {
                let prices = match prices {
                    PriceChoice::Fixed(p) => *p,
                    PriceChoice::Predicted { transparent } => crate::equilibrium::predicted_price(
                        params,
                        institution,
                        *objective,
                        *transparent,
                    )?,
                };
                let point = |problem| -> Result<_, PolicyError> {
                    Ok(vec![(
                        rational_action(*objective, params, institution, problem, prices)?,
                        Probability::one(),
                    )])
                };
                (prices, point(ProblemType::Small)?, point(ProblemType::Big)?)
            }
            ExpertPolicyKind::Scripted(profile) => (
                profile.prices(institution),
                profile
                    .distribution(institution, ProblemType::Small)
                    .entries()
                    .to_vec(),
                profile
                    .distribution(institution, ProblemType::Big)
                    .entries()
                    .to_vec(),
            ),
            ExpertPolicyKind::Mixture(mixture) => {
                let cell = mixture.cell(institution);
                let mut support = cell.prices.support();
                let (Some((prices, _)), None) = (support.next(), support.next()) else {
                    return Ok(None);
                };
                (
                    prices,
                    cell.fraud.distribution(institution, ProblemType::Small),
                    cell.fraud.distribution(institution, ProblemType::Big),
                )
            }
            ExpertPolicyKind::Replay(_) | ExpertPolicyKind::Delegating(_) => return Ok(None),
        };
        Ok(Some(ExactExpert {
            prices,
            small,
            big,
            delegated: self.delegated,
            objective: self.objective,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rational_policy_uses_predicted_prices() {
        let params = MarketParams::default();
        let policy = ExpertPolicy::rational(
            Objective::SelfInterested,
            PriceChoice::Predicted { transparent: false },
        )
        .unwrap();
        let ctx = DecisionContext {
            params: &params,
            institution: Institution::Verifiability,
            rep: 0,
            agent: 0,
        };
        let d = policy
            .decide(&ctx, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        assert_eq!(d.strategy.prices, PricePair { low: 3, high: 7 });
        assert!(d.strategy.slots.iter().all(|r| *r == ActionRule::honest()));
        assert_eq!(d.strategy.slots.len(), 4);
    }

    #[test]
    fn no_objective_cannot_be_rational() {
        assert!(ExpertPolicy::rational(
            Objective::NoObjective,
            PriceChoice::Predicted { transparent: false }
        )
        .is_err());
    }
}
