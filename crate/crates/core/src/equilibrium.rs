//! Exhaustive-search equilibrium predictions.
//!
//! Every valid price pair on the grid is evaluated: the expert's subgame
//! action rule comes from [`rational_action`], the consumer's expected
//! payoff from the belief matching the market's transparency, and a
//! selection rule picks the predicted pair(s).

use std::fmt;

use serde::{Serialize, Serializer};

use crate::belief::{expected_consumer_payoff, outside_option, participates, BeliefModel};
use crate::error::PolicyError;
use crate::model::{
    interaction_payoffs, Institution, MarketParams, Objective, PricePair, ProblemType, Tier,
};
use crate::money::{Expected, Money};
use crate::policy::{rational_action, ActionRule};

/// How competing experts settle on prices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    /// Undercut while expected profit stays strictly positive.
    #[default]
    StrictProfit,
    /// Undercut down to zero expected profit.
    ZeroProfit,
}

/// A predicted price component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriceComponent {
    Fixed(i64),
    /// Never charged in equilibrium, so any grid value is consistent.
    Wildcard,
    /// Charged, and several values are equally consistent.
    Set,
}

impl fmt::Display for PriceComponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PriceComponent::Fixed(v) => write!(f, "{v}"),
            PriceComponent::Wildcard => f.write_str("*"),
            PriceComponent::Set => f.write_str("set"),
        }
    }
}

impl Serialize for PriceComponent {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            PriceComponent::Fixed(v) => serializer.serialize_i64(*v),
            other => serializer.serialize_str(&other.to_string()),
        }
    }
}

/// Evaluation of one price pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PairEvaluation {
    pub prices: PricePair,
    pub rule: ActionRule,
    /// What consumers expect under their belief.
    pub believed_consumer: Expected,
    /// Expected payoffs per consumer under the expert's actual rule.
    pub consumer: Expected,
    pub expert: Expected,
    pub participates: bool,
}

impl PairEvaluation {
    fn inequity(&self, params: &MarketParams) -> Expected {
        ProblemType::ALL
            .into_iter()
            .map(|problem| {
                let (c, e) =
                    interaction_payoffs(params, problem, self.prices, self.rule.action(problem));
                Expected::weighted((e - c).abs(), params.problem_probability(problem))
            })
            .sum()
    }
}

/// Expected per-consumer payoffs of one action rule at `prices`.
pub fn rule_expectation(
    params: &MarketParams,
    prices: PricePair,
    rule: ActionRule,
) -> (Expected, Expected) {
    ProblemType::ALL
        .into_iter()
        .fold((Expected::zero(), Expected::zero()), |(ac, ae), problem| {
            let (c, e) = interaction_payoffs(params, problem, prices, rule.action(problem));
            let p = params.problem_probability(problem);
            (ac + Expected::weighted(c, p), ae + Expected::weighted(e, p))
        })
}

/// The belief consumers hold about an expert with `objective`.
pub fn belief_for(objective: Objective, transparent: bool) -> BeliefModel {
    if transparent {
        BeliefModel::Disclosed(objective)
    } else {
        BeliefModel::StandardSelfInterest
    }
}

pub fn evaluate_pair(
    params: &MarketParams,
    institution: Institution,
    objective: Objective,
    belief: BeliefModel,
    prices: PricePair,
) -> Result<PairEvaluation, PolicyError> {
    let rule = ActionRule {
        small: rational_action(objective, params, institution, ProblemType::Small, prices)?,
        big: rational_action(objective, params, institution, ProblemType::Big, prices)?,
    };
    let believed_consumer = expected_consumer_payoff(params, institution, prices, belief)?;
    let (consumer, expert) = rule_expectation(params, prices, rule);
    Ok(PairEvaluation {
        prices,
        rule,
        believed_consumer,
        consumer,
        expert,
        participates: participates(params, believed_consumer),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EquilibriumResult {
    pub institution: Institution,
    pub objective: Objective,
    pub transparent: bool,
    pub belief: BeliefModel,
    /// No price pair attracts consumers at a profit.
    pub breakdown: bool,
    /// Every selected pair, ordered by (low, high).
    pub predicted_prices: Vec<PricePair>,
    pub low: PriceComponent,
    pub high: PriceComponent,
    pub expert_strategy: Option<ActionRule>,
    /// Per consumer.
    pub consumer_expected: Expected,
    /// Per consumer served.
    pub expert_expected: Expected,
    /// Group income with every consumer served (or opting out on breakdown).
    pub total_market_income: Expected,
}

impl EquilibriumResult {
    /// Representative price pair: the cheapest selected one.
    pub fn representative(&self) -> Option<PricePair> {
        self.predicted_prices.first().copied()
    }

    pub fn price_label(&self) -> String {
        if self.breakdown {
            "breakdown".into()
        } else {
            format!("({}, {})", self.low, self.high)
        }
    }
}

fn component(values: impl Iterator<Item = i64>, charged: bool) -> PriceComponent {
    let mut values: Vec<i64> = values.collect();
    values.sort_unstable();
    values.dedup();
    match values.as_slice() {
        [single] => PriceComponent::Fixed(*single),
        _ if !charged => PriceComponent::Wildcard,
        _ => PriceComponent::Set,
    }
}

/// Equilibrium prediction for one market cell.
///
/// Self-interested and efficiency-loving experts compete for consumers:
/// the selected pairs maximize the consumers' believed payoff among
/// participating pairs with positive expected profit. Inequity-averse
/// experts instead pick the participating pairs that minimize expected
/// payoff inequality, then maximize total payoff, then consumer payoff.
pub fn solve_prediction(
    params: &MarketParams,
    institution: Institution,
    objective: Objective,
    transparent: bool,
) -> Result<EquilibriumResult, PolicyError> {
    solve_prediction_with(
        params,
        institution,
        objective,
        transparent,
        SelectionRule::default(),
    )
}

pub fn solve_prediction_with(
    params: &MarketParams,
    institution: Institution,
    objective: Objective,
    transparent: bool,
    rule: SelectionRule,
) -> Result<EquilibriumResult, PolicyError> {
    params.validate()?;
    if objective == Objective::NoObjective {
        return Err(PolicyError::NoRationalObjective);
    }
    let belief = belief_for(objective, transparent);
    let evaluations = params
        .price_grid()
        .into_iter()
        .map(|prices| evaluate_pair(params, institution, objective, belief, prices))
        .collect::<Result<Vec<_>, _>>()?;
    let profitable = |e: &PairEvaluation| match rule {
        SelectionRule::StrictProfit => e.expert > Expected::zero(),
        SelectionRule::ZeroProfit => e.expert >= Expected::zero(),
    };
    let feasible: Vec<&PairEvaluation> = evaluations
        .iter()
        .filter(|e| e.participates && profitable(e))
        .collect();

    // total order on feasible pairs; ties are kept as a set
    type Key = (Expected, Expected, Expected);
    let key = |e: &PairEvaluation| -> Key {
        match objective {
            Objective::InequityAverse => (
                -e.inequity(params),
                e.consumer + e.expert,
                e.believed_consumer,
            ),
            _ => (e.believed_consumer, Expected::zero(), Expected::zero()),
        }
    };
    let best_key = feasible.iter().map(|e| key(e)).max();
    let selected: Vec<&PairEvaluation> = match best_key {
        Some(k) => feasible.iter().copied().filter(|e| key(e) == k).collect(),
        None => Vec::new(),
    };

    let n = params.n_consumers as i64;
    let Some(first) = selected.first() else {
        let sigma = outside_option(params);
        return Ok(EquilibriumResult {
            institution,
            objective,
            transparent,
            belief,
            breakdown: true,
            predicted_prices: Vec::new(),
            low: PriceComponent::Wildcard,
            high: PriceComponent::Wildcard,
            expert_strategy: None,
            consumer_expected: sigma,
            expert_expected: Expected::zero(),
            total_market_income: sigma.scale(n),
        });
    };
    // a tier only pins its price when charging it differs from charging the other
    let charges = |tier: Tier| {
        selected.iter().any(|e| {
            e.prices.low != e.prices.high && (e.rule.small.tier == tier || e.rule.big.tier == tier)
        })
    };
    Ok(EquilibriumResult {
        institution,
        objective,
        transparent,
        belief,
        breakdown: false,
        predicted_prices: selected.iter().map(|e| e.prices).collect(),
        low: component(selected.iter().map(|e| e.prices.low), charges(Tier::Low)),
        high: component(selected.iter().map(|e| e.prices.high), charges(Tier::High)),
        expert_strategy: Some(first.rule),
        consumer_expected: first.consumer,
        expert_expected: first.expert,
        total_market_income: (first.consumer + first.expert).scale(n),
    })
}

/// Representative predicted price pair for a rational expert.
pub fn predicted_price(
    params: &MarketParams,
    institution: Institution,
    objective: Objective,
    transparent: bool,
) -> Result<PricePair, PolicyError> {
    let result = solve_prediction(params, institution, objective, transparent)?;
    result
        .representative()
        .ok_or(PolicyError::MarketBreakdown { institution })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MonopolyResult {
    pub institution: Institution,
    pub objective: Objective,
    /// Cheapest profit-maximizing pair.
    pub prices: PricePair,
    /// Every profit-maximizing pair.
    pub candidates: Vec<PricePair>,
    /// Whether consumers approach at `prices`; false when no pair attracts them.
    pub participating: bool,
    /// Highest `high` price at which some pair still attracts consumers.
    pub participation_boundary: Option<i64>,
    pub expert_expected: Expected,
    pub consumer_expected: Expected,
}

/// Profit-maximizing prices for a single expert facing consumers who hold
/// standard beliefs and approach whenever that is worth their outside option.
pub fn monopoly_price(
    params: &MarketParams,
    institution: Institution,
    objective: Objective,
) -> Result<MonopolyResult, PolicyError> {
    params.validate()?;
    let evaluations = params
        .price_grid()
        .into_iter()
        .map(|prices| {
            evaluate_pair(
                params,
                institution,
                objective,
                BeliefModel::StandardSelfInterest,
                prices,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let participating: Vec<&PairEvaluation> =
        evaluations.iter().filter(|e| e.participates).collect();
    let boundary = participating.iter().map(|e| e.prices.high).max();
    let pool: Vec<&PairEvaluation> = if participating.is_empty() {
        evaluations.iter().collect()
    } else {
        participating.clone()
    };
    let best = pool
        .iter()
        .map(|e| e.expert)
        .max()
        .expect("grid is non-empty");
    let candidates: Vec<&PairEvaluation> = pool.into_iter().filter(|e| e.expert == best).collect();
    let first = candidates[0];
    Ok(MonopolyResult {
        institution,
        objective,
        prices: first.prices,
        candidates: candidates.iter().map(|e| e.prices).collect(),
        participating: !participating.is_empty(),
        participation_boundary: boundary,
        expert_expected: first.expert,
        consumer_expected: first.consumer,
    })
}

/// Stated prediction for one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PredictionTarget {
    pub institution: Institution,
    pub objective: Objective,
    pub transparent: bool,
    /// `None`: the low price is undetermined.
    pub low: Option<i64>,
    pub high: i64,
    pub consumer: Money,
    pub expert: Money,
    pub total: Money,
}

/// The five analytic prediction cells for the default market.
pub fn prediction_targets() -> Vec<PredictionTarget> {
    let m = Money::from_units;
    let t = |institution, objective, transparent, low, high, consumer, expert, total| {
        PredictionTarget {
            institution,
            objective,
            transparent,
            low,
            high,
            consumer: m(consumer),
            expert: m(expert),
            total: m(total),
        }
    };
    use Institution::*;
    use Objective::*;
    vec![
        t(NoInstitution, SelfInterested, false, None, 3, 2, 1, 12),
        t(Verifiability, SelfInterested, false, Some(3), 7, 5, 1, 24),
        t(Liability, SelfInterested, false, None, 5, 5, 1, 24),
        t(NoInstitution, EfficiencyLoving, true, None, 5, 5, 1, 24),
        t(NoInstitution, InequityAverse, true, Some(6), 8, 3, 3, 24),
    ]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PredictionCheck {
    pub target: PredictionTarget,
    pub result: EquilibriumResult,
    pub pass: bool,
    pub mismatches: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PredictionReport {
    pub checks: Vec<PredictionCheck>,
}

impl PredictionReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn passed(&self) -> usize {
        self.checks.iter().filter(|c| c.pass).count()
    }
}

fn check(target: PredictionTarget, result: EquilibriumResult) -> PredictionCheck {
    let mut mismatches = Vec::new();
    if result.breakdown {
        mismatches.push("market breaks down".to_string());
    } else {
        let expected_low = target
            .low
            .map_or(PriceComponent::Wildcard, PriceComponent::Fixed);
        if result.low != expected_low {
            mismatches.push(format!(
                "low price {} (expected {})",
                result.low, expected_low
            ));
        }
        if result.high != PriceComponent::Fixed(target.high) {
            mismatches.push(format!(
                "high price {} (expected {})",
                result.high, target.high
            ));
        }
    }
    let mut money = |name: &str, got: Expected, want: Money| {
        if got != Expected::from(want) {
            mismatches.push(format!("{name} {got} (expected {want})"));
        }
    };
    money("consumer payoff", result.consumer_expected, target.consumer);
    money("expert payoff", result.expert_expected, target.expert);
    money("total income", result.total_market_income, target.total);
    PredictionCheck {
        pass: mismatches.is_empty(),
        target,
        result,
        mismatches,
    }
}

/// Solves every analytic cell and compares it with its stated prediction.
pub fn verify_predictions(params: &MarketParams) -> Result<PredictionReport, PolicyError> {
    let checks = prediction_targets()
        .into_iter()
        .map(|t| {
            Ok(check(
                t,
                solve_prediction(params, t.institution, t.objective, t.transparent)?,
            ))
        })
        .collect::<Result<Vec<_>, PolicyError>>()?;
    Ok(PredictionReport { checks })
}
