//! Outcome accounting: efficiency, surplus split, approach and fraud
//! rates, and attraction by decision source.
//!
//! Reductions use integer sums (cents, and efficiencies scaled to 1e-12),
//! so results do not depend on the order in which markets are combined.

use std::collections::BTreeMap;

use num_rational::Ratio;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::engine::{MarketCell, MarketOutcome};
use crate::error::EngineError;
use crate::model::{
    classify_fraud, interaction_payoffs, ExpertOffer, FraudKind, Institution, MarketParams,
    ProblemType, Treatment,
};
use crate::money::{Expected, Money, Probability};
use crate::policy::{choice_distribution, Choice, ExactExpert};

/// Denominator used for relative efficiency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EfficiencyMode {
    /// Per market: income over the maximum for the realized problems,
    /// then averaged over markets.
    #[default]
    Realized,
    /// Mean income over the expected maximum income.
    Expected,
}

/// How role surpluses are aggregated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurplusMode {
    /// Sum over the group, averaged over markets.
    GroupTotal,
    /// Average per member of the role.
    PerCapita,
}

const EFFICIENCY_SCALE: i128 = 1_000_000_000_000;

/// Realized relative efficiency of one market (exact).
pub fn relative_efficiency(outcome: &MarketOutcome, params: &MarketParams) -> Ratio<i64> {
    Ratio::new(outcome.income().cents(), outcome.max_income(params).cents())
}

/// Expected maximum group income: every consumer served honestly.
pub fn expected_max_income(params: &MarketParams) -> Expected {
    ProblemType::ALL
        .into_iter()
        .map(|p| {
            Expected::weighted(
                params.value_solved - params.cost_needed(p),
                params.problem_probability(p),
            )
        })
        .sum::<Expected>()
        .scale(params.n_consumers as i64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SurplusSplit {
    pub mode: SurplusMode,
    pub consumer: Expected,
    pub expert: Expected,
    pub delta: Expected,
}

/// Mean consumer and expert surplus over markets.
pub fn surplus_split(outcomes: &[MarketOutcome], mode: SurplusMode) -> SurplusSplit {
    let n = outcomes.len().max(1) as i64;
    let mut consumer = 0i64;
    let mut expert = 0i64;
    let mut consumers = 0i64;
    let mut experts = 0i64;
    for o in outcomes {
        consumer += o.consumer_total().cents();
        expert += o.expert_total().cents();
        consumers += o.consumer_payoffs.len() as i64;
        experts += o.expert_payoffs.len() as i64;
    }
    let (cd, ed) = match mode {
        SurplusMode::GroupTotal => (n, n),
        SurplusMode::PerCapita => (consumers.max(1), experts.max(1)),
    };
    let consumer = Expected::from_cents_ratio(Ratio::new(consumer, cd));
    let expert = Expected::from_cents_ratio(Ratio::new(expert, ed));
    SurplusSplit {
        mode,
        consumer,
        expert,
        delta: consumer - expert,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FraudRates {
    /// Per served decision, conditional on the kind being possible:
    /// undertreatment among big problems, overtreatment among small ones,
    /// overcharging among LCT treatments.
    pub conditional: BTreeMap<FraudKind, f64>,
    /// Per served decision, over all served consumers.
    pub per_decision: BTreeMap<FraudKind, f64>,
    /// Share of served consumers defrauded in any way.
    pub any_served: f64,
    /// Share of strategy-method slots with a fraudulent action for either problem.
    pub slot_rate: f64,
    /// Share of posted strategies with at least one fraudulent slot.
    pub expert_any: f64,
}

fn share(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn fraud_rates(outcomes: &[MarketOutcome]) -> FraudRates {
    let mut kind = [0u64; 3];
    let (mut big, mut small, mut lct, mut served, mut any) = (0u64, 0u64, 0u64, 0u64, 0u64);
    let (mut slots, mut bad_slots, mut strategies, mut bad_strategies) = (0u64, 0u64, 0u64, 0u64);
    for o in outcomes {
        for (interaction, problem) in o.interactions.iter().zip(&o.problems) {
            let Some(i) = interaction else { continue };
            served += 1;
            match problem {
                ProblemType::Big => big += 1,
                ProblemType::Small => small += 1,
            }
            if i.action.treatment == Treatment::Lct {
                lct += 1;
            }
            for (k, flag) in FraudKind::ALL.into_iter().enumerate() {
                kind[k] += u64::from(i.fraud.contains(flag));
            }
            any += u64::from(!i.fraud.is_empty());
        }
        for rules in &o.strategies {
            strategies += 1;
            let mut bad = false;
            for r in rules {
                slots += 1;
                let fraudulent = ProblemType::ALL
                    .into_iter()
                    .any(|p| !classify_fraud(p, r.action(p)).is_empty());
                bad_slots += u64::from(fraudulent);
                bad |= fraudulent;
            }
            bad_strategies += u64::from(bad);
        }
    }
    let dens = [big, small, lct];
    FraudRates {
        conditional: FraudKind::ALL
            .into_iter()
            .enumerate()
            .map(|(k, f)| (f, share(kind[k], dens[k])))
            .collect(),
        per_decision: FraudKind::ALL
            .into_iter()
            .enumerate()
            .map(|(k, f)| (f, share(kind[k], served)))
            .collect(),
        any_served: share(any, served),
        slot_rate: share(bad_slots, slots),
        expert_any: share(bad_strategies, strategies),
    }
}

/// Mean share of consumers attracted by one expert, per decision source.
pub fn objective_attraction(outcomes: &[MarketOutcome]) -> BTreeMap<String, f64> {
    let mut posted: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for o in outcomes {
        let n_consumers = o.choices.len() as u64;
        for (i, source) in o.sources.iter().enumerate() {
            let visits = o
                .choices
                .iter()
                .filter(|c| **c == Choice::Approach(i))
                .count() as u64;
            let entry = posted.entry(source.clone()).or_default();
            entry.0 += visits;
            entry.1 += n_consumers;
        }
    }
    posted
        .into_iter()
        .map(|(k, (v, n))| (k, share(v, n)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSet {
    pub n_markets: u64,
    pub efficiency_mode: EfficiencyMode,
    pub relative_efficiency: f64,
    pub efficiency_se: f64,
    pub surplus: SurplusSplit,
    /// Standard errors of the mean group surpluses.
    pub consumer_surplus_se: f64,
    pub expert_surplus_se: f64,
    pub approach_rate: f64,
    pub fraud: FraudRates,
    pub objective_attraction: BTreeMap<String, f64>,
}

fn mean_and_se(sum: i128, sum_sq: i128, n: i128, scale: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = sum as f64 / n as f64;
    if n < 2 {
        return (mean / scale, 0.0);
    }
    // exact integer numerator of the sample variance
    let var = (n * sum_sq - sum * sum) as f64 / (n * (n - 1)) as f64;
    (mean / scale, (var.max(0.0) / n as f64).sqrt() / scale)
}

/// All metrics for a set of markets.
pub fn summarize(
    outcomes: &[MarketOutcome],
    params: &MarketParams,
    efficiency_mode: EfficiencyMode,
    surplus_mode: SurplusMode,
) -> MetricSet {
    let n = outcomes.len() as i128;
    let (mut eff, mut eff_sq) = (0i128, 0i128);
    let (mut income, mut income_sq) = (0i128, 0i128);
    let (mut cs, mut cs_sq, mut es, mut es_sq) = (0i128, 0i128, 0i128, 0i128);
    let (mut approached, mut consumers) = (0u64, 0u64);
    for o in outcomes {
        let max = o.max_income(params).cents() as i128;
        let total = o.income().cents() as i128;
        let e = if max == 0 {
            0
        } else {
            (total * EFFICIENCY_SCALE + max / 2).div_euclid(max)
        };
        eff += e;
        eff_sq += e * e / EFFICIENCY_SCALE;
        income += total;
        income_sq += total * total;
        let c = o.consumer_total().cents() as i128;
        let x = o.expert_total().cents() as i128;
        cs += c;
        cs_sq += c * c;
        es += x;
        es_sq += x * x;
        approached += (o.choices.len() - o.optout_count) as u64;
        consumers += o.choices.len() as u64;
    }
    let (relative_efficiency, efficiency_se) = match efficiency_mode {
        EfficiencyMode::Realized => {
            let (m, se) = mean_and_se(eff, eff_sq, n, 1.0);
            // eff_sq carries one factor of the scale
            (
                m / EFFICIENCY_SCALE as f64,
                se / (EFFICIENCY_SCALE as f64).sqrt(),
            )
        }
        EfficiencyMode::Expected => {
            let max = expected_max_income(params).to_f64() * 100.0;
            let (m, se) = mean_and_se(income, income_sq, n, max);
            (m, se)
        }
    };
    MetricSet {
        n_markets: outcomes.len() as u64,
        efficiency_mode,
        relative_efficiency,
        efficiency_se,
        surplus: surplus_split(outcomes, surplus_mode),
        consumer_surplus_se: mean_and_se(cs, cs_sq, n, 100.0).1,
        expert_surplus_se: mean_and_se(es, es_sq, n, 100.0).1,
        approach_rate: share(approached, consumers),
        fraud: fraud_rates(outcomes),
        objective_attraction: objective_attraction(outcomes),
    }
}

/// Closed-form expectations for a market cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpectedOutcome {
    pub institution: Institution,
    pub offers: Vec<ExpertOffer>,
    /// Group totals.
    pub consumer_surplus: Expected,
    pub expert_surplus: Expected,
    pub delta: Expected,
    pub approach_rate: Probability,
    /// Expected income over expected maximum income.
    pub efficiency_expected: f64,
    /// Expected value of the per-market realized efficiency.
    pub efficiency_realized: f64,
}

/// Per consumer: distribution over (payoff, maximum income) outcomes.
type Outcomes = Vec<((Money, Money), f64)>;

/// Exact expectations when every expert has deterministic prices and known
/// action distributions and every consumer's choice has a known distribution.
pub fn expected_outcome(cell: &MarketCell) -> Result<ExpectedOutcome, EngineError> {
    let params = &cell.params;
    let inst = cell.institution;
    let experts: Vec<ExactExpert> = cell
        .experts
        .iter()
        .map(|p| {
            p.exact(params, inst)?
                .ok_or_else(|| EngineError::NotClosedForm(format!("expert policy {}", p.id)))
        })
        .collect::<Result<_, EngineError>>()?;
    let offers: Vec<ExpertOffer> = experts
        .iter()
        .enumerate()
        .map(|(i, e)| ExpertOffer {
            expert_index: i,
            prices: e.prices,
            delegated: e.delegated,
            disclosed_objective: if cell.transparent && e.delegated {
                e.objective
            } else {
                None
            },
        })
        .collect();

    let mut consumer = Expected::zero();
    let mut expert = Expected::zero();
    let mut approach = Ratio::from_integer(0);
    let mut per_consumer: Vec<Outcomes> = Vec::new();
    for policy in &cell.consumers {
        let dist = choice_distribution(policy, params, inst, &offers)?
            .ok_or_else(|| EngineError::NotClosedForm("replayed consumers".into()))?;
        let mut outcomes: Outcomes = Vec::new();
        for (choice, p_choice) in dist {
            match choice {
                Choice::OptOut => {
                    consumer += Expected::weighted(params.outside_option, p_choice);
                    for problem in ProblemType::ALL {
                        let p = p_choice * params.problem_probability(problem);
                        let max = params.value_solved - params.cost_needed(problem);
                        outcomes.push(((params.outside_option, max), p.to_f64()));
                    }
                }
                Choice::Approach(i) => {
                    approach += p_choice.value();
                    for problem in ProblemType::ALL {
                        for &(action, p_action) in experts[i].distribution(problem) {
                            let p = p_choice * params.problem_probability(problem) * p_action;
                            let (c, e) =
                                interaction_payoffs(params, problem, experts[i].prices, action);
                            consumer += Expected::weighted(c, p);
                            expert += Expected::weighted(e, p);
                            let max = params.value_solved - params.cost_needed(problem);
                            outcomes.push(((c + e, max), p.to_f64()));
                        }
                    }
                }
            }
        }
        per_consumer.push(outcomes);
    }

    // convolve (income, max) over consumers for the realized-ratio expectation
    let mut joint: BTreeMap<(Money, Money), f64> =
        BTreeMap::from([((Money::ZERO, Money::ZERO), 1.0)]);
    for outcomes in &per_consumer {
        let mut next = BTreeMap::new();
        for (&(inc, max), &p) in &joint {
            for &((i2, m2), q) in outcomes {
                *next.entry((inc + i2, max + m2)).or_insert(0.0) += p * q;
            }
        }
        joint = next;
    }
    let efficiency_realized = joint
        .iter()
        .filter(|((_, max), _)| *max != Money::ZERO)
        .map(|((inc, max), p)| p * inc.cents() as f64 / max.cents() as f64)
        .sum();
    let n = cell.consumers.len().max(1) as i64;
    let max = expected_max_income(params);
    let income = consumer + expert;
    Ok(ExpectedOutcome {
        institution: inst,
        offers,
        consumer_surplus: consumer,
        expert_surplus: expert,
        delta: consumer - expert,
        approach_rate: Probability::new(approach / Ratio::from_integer(n))
            .expect("average of probabilities"),
        efficiency_expected: (income.cents() / max.cents()).to_f64().unwrap_or(f64::NAN),
        efficiency_realized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::BeliefModel;
    use crate::engine::{run_cell, MarketStreams};
    use crate::model::{Objective, PricePair};
    use crate::policy::{
        scripted_llm_profile, ConsumerPolicy, ExpertPolicy, LlmSource, PriceChoice,
    };

    fn cell(inst: Institution, expert: ExpertPolicy, belief: BeliefModel) -> MarketCell {
        MarketCell {
            label: "test".into(),
            params: MarketParams::default(),
            institution: inst,
            transparent: false,
            experts: vec![expert; 4],
            consumers: vec![ConsumerPolicy::threshold(belief); 4],
        }
    }

    fn units(e: Expected) -> f64 {
        e.to_f64()
    }

    #[test]
    fn predicted_no_institution_efficiency_is_half() {
        let expert = ExpertPolicy::rational(
            Objective::SelfInterested,
            PriceChoice::Predicted { transparent: false },
        )
        .unwrap();
        let c = cell(
            Institution::NoInstitution,
            expert,
            BeliefModel::StandardSelfInterest,
        );
        let e = expected_outcome(&c).unwrap();
        assert_eq!(e.efficiency_expected, 0.5);
        assert_eq!(units(e.consumer_surplus + e.expert_surplus), 12.0);
    }

    #[test]
    fn all_opt_out_efficiency() {
        let expert = ExpertPolicy::rational(
            Objective::SelfInterested,
            PriceChoice::Fixed(PricePair { low: 4, high: 8 }),
        )
        .unwrap();
        let c = cell(
            Institution::NoInstitution,
            expert,
            BeliefModel::StandardSelfInterest,
        );
        let e = expected_outcome(&c).unwrap();
        assert_eq!(units(e.consumer_surplus), 6.4);
        assert!((e.efficiency_expected - 6.4 / 24.0).abs() < 1e-12);
    }

    #[test]
    fn liability_inequity_averse_table_cell() {
        let expert = ExpertPolicy::scripted(scripted_llm_profile(LlmSource::AiAi(
            Objective::InequityAverse,
        )));
        let c = cell(
            Institution::Liability,
            expert,
            BeliefModel::StandardSelfInterest,
        );
        let e = expected_outcome(&c).unwrap();
        assert_eq!(e.consumer_surplus, Expected::from(Money::from_cents(1568)));
        assert_eq!(e.expert_surplus, Expected::from(Money::from_cents(832)));
        assert_eq!(e.delta, Expected::from(Money::from_cents(736)));
    }

    #[test]
    fn single_honest_small_interaction() {
        let params = MarketParams::default();
        let (c, e) = interaction_payoffs(
            &params,
            ProblemType::Small,
            PricePair { low: 3, high: 7 },
            crate::model::ExpertAction::honest(ProblemType::Small),
        );
        assert_eq!(
            (c, e, c - e),
            (
                Money::from_units(7),
                Money::from_units(1),
                Money::from_units(6)
            )
        );
    }

    #[test]
    fn monte_carlo_matches_closed_form() {
        let expert = ExpertPolicy::scripted(scripted_llm_profile(LlmSource::AiAi(
            Objective::EfficiencyLoving,
        )));
        let c = cell(
            Institution::Liability,
            expert,
            BeliefModel::StandardSelfInterest,
        );
        let exact = expected_outcome(&c).unwrap();
        let outcomes = run_cell(&c, 4000, 17).unwrap();
        let m = summarize(
            &outcomes,
            &c.params,
            EfficiencyMode::Realized,
            SurplusMode::GroupTotal,
        );
        let gap = (units(m.surplus.expert) - units(exact.expert_surplus)).abs();
        assert!(
            gap <= 3.0 * m.expert_surplus_se + 1e-9,
            "gap {gap}, se {}",
            m.expert_surplus_se
        );
        let gap = (m.relative_efficiency - exact.efficiency_realized).abs();
        assert!(
            gap <= 3.0 * m.efficiency_se + 1e-9,
            "gap {gap}, se {}",
            m.efficiency_se
        );
    }

    #[test]
    fn liability_never_undertreats_and_rates_are_bounded() {
        let expert = ExpertPolicy::scripted(scripted_llm_profile(LlmSource::NoTraining));
        let c = cell(
            Institution::Liability,
            expert.clone(),
            BeliefModel::StandardSelfInterest,
        );
        let outcomes = run_cell(&c, 200, 3).unwrap();
        let f = fraud_rates(&outcomes);
        assert_eq!(f.conditional[&FraudKind::Undertreatment], 0.0);

        let c = cell(
            Institution::NoInstitution,
            expert,
            BeliefModel::StandardSelfInterest,
        );
        // everyone opts out at (3, 5); look at the posted strategies instead
        let outcomes = run_cell(&c, 20, 3).unwrap();
        assert_eq!(fraud_rates(&outcomes).expert_any, 1.0);
        let out = crate::engine::run_market(
            &c.params,
            c.institution,
            &c.experts,
            &vec![
                ConsumerPolicy::trust(crate::policy::TrustRates {
                    no_institution: Probability::one(),
                    verifiability: Probability::one(),
                    liability: Probability::one(),
                });
                4
            ],
            false,
            &MarketStreams::new(1, 1),
        )
        .unwrap();
        let f = fraud_rates(std::slice::from_ref(&out));
        assert_eq!(f.conditional[&FraudKind::Overcharging], 1.0);
        if out.problems.contains(&ProblemType::Big) {
            assert_eq!(f.conditional[&FraudKind::Undertreatment], 1.0);
        }
    }

    #[test]
    fn surplus_modes() {
        let expert = ExpertPolicy::scripted(scripted_llm_profile(LlmSource::AiAi(
            Objective::SelfInterested,
        )));
        let c = cell(
            Institution::Liability,
            expert,
            BeliefModel::StandardSelfInterest,
        );
        let outcomes = run_cell(&c, 10, 1).unwrap();
        let g = surplus_split(&outcomes, SurplusMode::GroupTotal);
        let p = surplus_split(&outcomes, SurplusMode::PerCapita);
        assert_eq!(g.consumer, p.consumer.scale(4));
        assert_eq!(g.delta, g.consumer - g.expert);
    }
}
