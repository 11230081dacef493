//! Best responses for experts with a known objective.

use std::cmp::Reverse;

use crate::belief::BeliefModel;
use crate::error::PolicyError;
use crate::model::{
    interaction_payoffs, legal_actions, ExpertAction, Institution, MarketParams, Objective,
    PricePair, ProblemType,
};
use crate::money::Money;

/// The action an expert with `objective` takes after diagnosing `problem`.
///
/// Maximizes the objective's utility over the legal actions. Ties go to
/// the honest action, then to the cheaper charge for the consumer. An
/// efficiency-loving expert is indifferent to the charged tier, and
/// resolves that indifference toward its own payoff before honesty.
pub fn rational_action(
    objective: Objective,
    params: &MarketParams,
    institution: Institution,
    problem: ProblemType,
    prices: PricePair,
) -> Result<ExpertAction, PolicyError> {
    if objective == Objective::NoObjective {
        return Err(PolicyError::NoRationalObjective);
    }
    let best = legal_actions(institution, problem)
        .into_iter()
        .enumerate()
        .max_by_key(|&(index, action)| {
            let (consumer, expert) = interaction_payoffs(params, problem, prices, action);
            let utility = objective
                .utility(consumer, expert)
                .expect("objective has a utility");
            let secondary = if objective == Objective::EfficiencyLoving {
                expert
            } else {
                Money::ZERO
            };
            (
                utility,
                secondary,
                action.is_honest(problem),
                Reverse(prices.price(action.tier)),
                Reverse(index),
            )
        })
        .map(|(_, action)| action)
        .expect("every institution permits at least one action");
    Ok(best)
}

/// The action rule a consumer holding `belief` expects from an expert.
pub fn anticipated_action(
    belief: BeliefModel,
    params: &MarketParams,
    institution: Institution,
    problem: ProblemType,
    prices: PricePair,
) -> ExpertAction {
    match belief {
        BeliefModel::StandardSelfInterest | BeliefModel::Disclosed(Objective::NoObjective) => {
            rational_action(
                Objective::SelfInterested,
                params,
                institution,
                problem,
                prices,
            )
            .expect("has utility")
        }
        BeliefModel::Disclosed(Objective::InequityAverse) => ExpertAction::honest(problem),
        BeliefModel::Disclosed(objective) => {
            rational_action(objective, params, institution, problem, prices).expect("has utility")
        }
        BeliefModel::Skeptical => legal_actions(institution, problem)
            .into_iter()
            .max_by_key(|&action| {
                let (consumer, expert) = interaction_payoffs(params, problem, prices, action);
                (expert, Reverse(consumer))
            })
            .expect("every institution permits at least one action"),
    }
}
