//! One-shot market execution and seeded Monte Carlo replications.
//!
//! A market runs in a fixed order: experts post offers and action rules,
//! consumers choose simultaneously from the same offers, problem types are
//! drawn, and each approached expert's rule for that consumer's slot is
//! applied. Each decision draws from its own substream, keyed by
//! (seed, replicate, purpose, agent), so adding or reordering decisions
//! never shifts anyone else's randomness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::EngineError;
use crate::model::{
    classify_fraud, interaction_payoffs, ExpertAction, ExpertOffer, FraudFlags, Institution,
    MarketParams, ProblemType, MAX_AGENTS,
};
use crate::money::Money;
use crate::policy::{
    consumer_choose, ActionRule, Choice, ConsumerPolicy, DecisionContext, ExpertDecision,
    ExpertPolicy,
};

/// What a substream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum StreamPurpose {
    Expert = 1,
    Consumer = 2,
    Problem = 3,
    Session = 4,
}

/// Random streams for one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MarketStreams {
    pub seed: u64,
    pub rep: u64,
}

impl MarketStreams {
    pub fn new(seed: u64, rep: u64) -> Self {
        MarketStreams { seed, rep }
    }

    /// ChaCha stream `rep` of the root seed, positioned at a block reserved
    /// for (purpose, index); each block holds 2^36 words.
    pub fn stream(&self, purpose: StreamPurpose, index: usize) -> ChaCha8Rng {
        assert!(
            index < MAX_AGENTS,
            "agent index {index} exceeds {MAX_AGENTS}"
        );
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.rep);
        rng.set_word_pos(((purpose as u128) * MAX_AGENTS as u128 + index as u128) << 36);
        rng
    }
}

/// One served consumer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub expert: usize,
    pub action: ExpertAction,
    pub fraud: FraudFlags,
}

/// Everything that happened in one market.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarketOutcome {
    pub rep: u64,
    pub institution: Institution,
    pub transparent: bool,
    pub offers: Vec<ExpertOffer>,
    /// Decision-maker label per expert ("human", "llm:self_interested", ...).
    pub sources: Vec<String>,
    /// Strategy-method action rules per expert, one per consumer slot.
    pub strategies: Vec<Vec<ActionRule>>,
    pub choices: Vec<Choice>,
    pub problems: Vec<ProblemType>,
    /// Per consumer; `None` for opt-outs.
    pub interactions: Vec<Option<Interaction>>,
    pub consumer_payoffs: Vec<Money>,
    pub expert_payoffs: Vec<Money>,
    pub optout_count: usize,
}

impl MarketOutcome {
    pub fn consumer_total(&self) -> Money {
        self.consumer_payoffs.iter().copied().sum()
    }

    pub fn expert_total(&self) -> Money {
        self.expert_payoffs.iter().copied().sum()
    }

    pub fn income(&self) -> Money {
        self.consumer_total() + self.expert_total()
    }

    /// Group income if every consumer were served honestly.
    pub fn max_income(&self, params: &MarketParams) -> Money {
        self.problems
            .iter()
            .map(|p| params.value_solved - params.cost_needed(*p))
            .sum()
    }

    /// Sum of payoffs equals created value of the served plus σ per opt-out.
    pub fn conserves(&self, params: &MarketParams) -> bool {
        let created: Money = self
            .interactions
            .iter()
            .zip(&self.problems)
            .filter_map(|(i, p)| i.map(|i| (i, *p)))
            .map(|(i, p)| {
                let value = if i.action.treatment.solves(p) {
                    params.value_solved
                } else {
                    Money::ZERO
                };
                value - params.cost(i.action.treatment)
            })
            .sum();
        self.income() == created + params.outside_option * self.optout_count as i64
    }
}

fn check_counts(
    params: &MarketParams,
    experts: usize,
    consumers: usize,
) -> Result<(), EngineError> {
    if experts != params.n_experts {
        return Err(EngineError::PolicyCount {
            role: "expert",
            expected: params.n_experts,
            found: experts,
        });
    }
    if consumers != params.n_consumers {
        return Err(EngineError::PolicyCount {
            role: "consumer",
            expected: params.n_consumers,
            found: consumers,
        });
    }
    Ok(())
}

/// Validates a posted decision against the grid and the institution.
pub fn validate_decision(
    params: &MarketParams,
    institution: Institution,
    expert: usize,
    decision: &ExpertDecision,
) -> Result<(), EngineError> {
    decision
        .strategy
        .prices
        .validate(params)
        .map_err(|source| EngineError::InvalidOffer { expert, source })?;
    if decision.strategy.slots.is_empty() {
        return Err(EngineError::PolicyCount {
            role: "strategy slot",
            expected: params.n_consumers,
            found: 0,
        });
    }
    for rule in &decision.strategy.slots {
        rule.validate(institution)
            .map_err(|source| EngineError::IllegalExpertAction { expert, source })?;
    }
    Ok(())
}

/// Step 1: every expert posts prices and an action rule.
pub fn post_decisions(
    params: &MarketParams,
    institution: Institution,
    experts: &[ExpertPolicy],
    streams: &MarketStreams,
) -> Result<Vec<ExpertDecision>, EngineError> {
    experts
        .iter()
        .enumerate()
        .map(|(i, policy)| {
            let ctx = DecisionContext {
                params,
                institution,
                rep: streams.rep,
                agent: i,
            };
            let decision = policy.decide(&ctx, &mut streams.stream(StreamPurpose::Expert, i))?;
            validate_decision(params, institution, i, &decision)?;
            Ok(decision)
        })
        .collect()
}

/// What consumers see; objectives are disclosed only for delegated experts
/// in transparent markets.
pub fn offers_from(decisions: &[ExpertDecision], transparent: bool) -> Vec<ExpertOffer> {
    decisions
        .iter()
        .enumerate()
        .map(|(i, d)| ExpertOffer {
            expert_index: i,
            prices: d.strategy.prices,
            delegated: d.delegated,
            disclosed_objective: if transparent && d.delegated {
                d.objective
            } else {
                None
            },
        })
        .collect()
}

/// Step 2: consumers choose simultaneously; each sees only the offers.
pub fn choose_all(
    params: &MarketParams,
    institution: Institution,
    consumers: &[ConsumerPolicy],
    offers: &[ExpertOffer],
    streams: &MarketStreams,
) -> Result<Vec<Choice>, EngineError> {
    consumers
        .iter()
        .enumerate()
        .map(|(j, policy)| {
            let ctx = DecisionContext {
                params,
                institution,
                rep: streams.rep,
                agent: j,
            };
            Ok(consumer_choose(
                policy,
                &ctx,
                offers,
                &mut streams.stream(StreamPurpose::Consumer, j),
            )?)
        })
        .collect()
}

/// Steps 3–5: draw problems, apply the approached experts' rules, pay out.
pub fn resolve_market(
    params: &MarketParams,
    institution: Institution,
    transparent: bool,
    decisions: &[ExpertDecision],
    choices: &[Choice],
    streams: &MarketStreams,
) -> Result<MarketOutcome, EngineError> {
    let problems: Vec<ProblemType> = (0..choices.len())
        .map(|j| {
            let mut rng = streams.stream(StreamPurpose::Problem, j);
            if params.prob_big.sample(&mut rng) {
                ProblemType::Big
            } else {
                ProblemType::Small
            }
        })
        .collect();
    let mut consumer_payoffs = vec![Money::ZERO; choices.len()];
    let mut expert_payoffs = vec![Money::ZERO; decisions.len()];
    let mut interactions = vec![None; choices.len()];
    let mut optout_count = 0;
    for (j, choice) in choices.iter().enumerate() {
        match *choice {
            Choice::OptOut => {
                consumer_payoffs[j] = params.outside_option;
                optout_count += 1;
            }
            Choice::Approach(i) => {
                let decision = decisions.get(i).ok_or(EngineError::PolicyCount {
                    role: "expert",
                    expected: i + 1,
                    found: decisions.len(),
                })?;
                let action = decision.strategy.action(j, problems[j]);
                institution
                    .check(problems[j], action)
                    .map_err(|source| EngineError::IllegalExpertAction { expert: i, source })?;
                let (c, e) =
                    interaction_payoffs(params, problems[j], decision.strategy.prices, action);
                consumer_payoffs[j] = c;
                expert_payoffs[i] += e;
                interactions[j] = Some(Interaction {
                    expert: i,
                    action,
                    fraud: classify_fraud(problems[j], action),
                });
            }
        }
    }
    Ok(MarketOutcome {
        rep: streams.rep,
        institution,
        transparent,
        offers: offers_from(decisions, transparent),
        sources: decisions.iter().map(|d| d.source.clone()).collect(),
        strategies: decisions.iter().map(|d| d.strategy.slots.clone()).collect(),
        choices: choices.to_vec(),
        problems,
        interactions,
        consumer_payoffs,
        expert_payoffs,
        optout_count,
    })
}

/// A fully resolved market cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketCell {
    pub label: String,
    pub params: MarketParams,
    pub institution: Institution,
    pub transparent: bool,
    pub experts: Vec<ExpertPolicy>,
    pub consumers: Vec<ConsumerPolicy>,
}

/// Runs one market end to end.
pub fn run_market(
    params: &MarketParams,
    institution: Institution,
    experts: &[ExpertPolicy],
    consumers: &[ConsumerPolicy],
    transparent: bool,
    streams: &MarketStreams,
) -> Result<MarketOutcome, EngineError> {
    params
        .validate()
        .map_err(|e| EngineError::Policy(e.into()))?;
    check_counts(params, experts.len(), consumers.len())?;
    let decisions = post_decisions(params, institution, experts, streams)?;
    let offers = offers_from(&decisions, transparent);
    let choices = choose_all(params, institution, consumers, &offers, streams)?;
    resolve_market(
        params,
        institution,
        transparent,
        &decisions,
        &choices,
        streams,
    )
}

/// Runs `n` independent replicates in parallel; results are ordered by
/// replicate and identical for any thread count.
pub fn run_cell(cell: &MarketCell, n: u64, seed: u64) -> Result<Vec<MarketOutcome>, EngineError> {
    if n == 0 {
        return Err(EngineError::NoReplications);
    }
    (0..n)
        .into_par_iter()
        .map(|rep| {
            run_market(
                &cell.params,
                cell.institution,
                &cell.experts,
                &cell.consumers,
                cell.transparent,
                &MarketStreams::new(seed, rep),
            )
            .map_err(|e| EngineError::Replication {
                rep,
                source: Box::new(e),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::BeliefModel;
    use crate::model::{Objective, PricePair};
    use crate::policy::{scripted_llm_profile, LlmSource, PriceChoice};

    fn threshold() -> Vec<ConsumerPolicy> {
        vec![ConsumerPolicy::threshold(BeliefModel::StandardSelfInterest); 4]
    }

    #[test]
    fn no_training_liability_market() {
        let params = MarketParams::default();
        let experts = vec![ExpertPolicy::scripted(scripted_llm_profile(LlmSource::NoTraining)); 4];
        let out = run_market(
            &params,
            Institution::Liability,
            &experts,
            &threshold(),
            false,
            &MarketStreams::new(1, 0),
        )
        .unwrap();
        assert_eq!(out.optout_count, 0);
        assert!(out
            .consumer_payoffs
            .iter()
            .all(|&c| c == Money::from_units(2)));
        for (j, p) in out.problems.iter().enumerate() {
            let i = out.interactions[j].unwrap();
            let cost = params.cost_needed(*p);
            assert_eq!(i.action.treatment, p.sufficient_treatment());
            assert_eq!(
                Money::from_units(8) - cost,
                interaction_payoffs(&params, *p, PricePair { low: 4, high: 8 }, i.action).1
            );
        }
        assert!(out.conserves(&params));
    }

    #[test]
    fn rational_no_institution_market() {
        let params = MarketParams::default();
        let expert = ExpertPolicy::rational(
            Objective::SelfInterested,
            PriceChoice::Predicted { transparent: false },
        )
        .unwrap();
        let out = run_market(
            &params,
            Institution::NoInstitution,
            &vec![expert; 4],
            &threshold(),
            false,
            &MarketStreams::new(5, 3),
        )
        .unwrap();
        assert_eq!(out.optout_count, 0);
        for (j, p) in out.problems.iter().enumerate() {
            let expected = match p {
                ProblemType::Big => Money::from_units(-3),
                ProblemType::Small => Money::from_units(7),
            };
            assert_eq!(out.consumer_payoffs[j], expected);
        }
    }

    #[test]
    fn everyone_opts_out_at_four_eight() {
        let params = MarketParams::default();
        let expert = ExpertPolicy::rational(
            Objective::SelfInterested,
            PriceChoice::Fixed(PricePair { low: 4, high: 8 }),
        )
        .unwrap();
        let out = run_market(
            &params,
            Institution::NoInstitution,
            &vec![expert; 4],
            &threshold(),
            false,
            &MarketStreams::new(0, 0),
        )
        .unwrap();
        assert_eq!(out.optout_count, 4);
        assert_eq!(out.income(), Money::from_cents(640));
        assert_eq!(out.expert_total(), Money::ZERO);
    }

    #[test]
    fn wrong_policy_count_is_rejected() {
        let params = MarketParams::default();
        let experts = vec![ExpertPolicy::scripted(scripted_llm_profile(LlmSource::NoTraining)); 3];
        let r = run_market(
            &params,
            Institution::Liability,
            &experts,
            &threshold(),
            false,
            &MarketStreams::new(0, 0),
        );
        assert!(matches!(
            r,
            Err(EngineError::PolicyCount { role: "expert", .. })
        ));
    }

    #[test]
    fn substreams_are_distinct_and_stable() {
        use rand::RngCore;
        let s = MarketStreams::new(9, 2);
        let a = s.stream(StreamPurpose::Expert, 0).next_u64();
        let b = s.stream(StreamPurpose::Expert, 1).next_u64();
        let c = s.stream(StreamPurpose::Consumer, 0).next_u64();
        let d = MarketStreams::new(9, 3)
            .stream(StreamPurpose::Expert, 0)
            .next_u64();
        assert!(a != b && a != c && a != d);
        assert_eq!(a, s.stream(StreamPurpose::Expert, 0).next_u64());
    }

    #[test]
    fn replicates_are_deterministic() {
        let params = MarketParams::default();
        let cell = MarketCell {
            label: "t".into(),
            params,
            institution: Institution::Liability,
            transparent: false,
            experts: vec![
                ExpertPolicy::scripted(scripted_llm_profile(LlmSource::AiAi(
                    Objective::EfficiencyLoving
                )));
                4
            ],
            consumers: threshold(),
        };
        assert_eq!(
            run_cell(&cell, 50, 7).unwrap(),
            run_cell(&cell, 50, 7).unwrap()
        );
        assert_ne!(
            run_cell(&cell, 50, 7).unwrap(),
            run_cell(&cell, 50, 8).unwrap()
        );
        assert!(matches!(
            run_cell(&cell, 0, 7),
            Err(EngineError::NoReplications)
        ));
    }
}
