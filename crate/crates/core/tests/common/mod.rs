//! Independent oracles shared by the integration tests and the acceptance
//! run. Nothing here calls into the solver or the closed-form code it
//! checks; payoffs and legality are restated from the game rules.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use credence_core::engine::{resolve_market, MarketStreams};
use credence_core::ingest::{ingest_human_csv, write_human_csv};
use credence_core::llm::{HistoryChoice, HistoryRecord};
use credence_core::policy::{
    ActionRule, Choice, ConsumerPolicy, ConsumerRecord, ExpertDecision, ExpertPolicy, ExpertRecord,
    ExpertStrategy, ReplayChoice,
};
use credence_core::{
    run_cell, summarize, EfficiencyMode, ExpertAction, Institution, MarketParams, PricePair,
    ProblemType, SurplusMode, Tier, Treatment,
};
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn repo(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
}

/// Every menu on the default grid with low ≤ high.
pub fn grid(params: &MarketParams) -> Vec<PricePair> {
    let mut out = Vec::new();
    for low in params.price_min..=params.price_max {
        for high in low..=params.price_max {
            out.push(PricePair { low, high });
        }
    }
    out
}

/// Whether the rules of `institution` allow treating `big` (or small) with
/// `hct` and charging the `high` price.
pub fn oracle_legal(institution: Institution, big: bool, hct: bool, high: bool) -> bool {
    match institution {
        Institution::NoInstitution => true,
        // the bill must name the treatment given
        Institution::Verifiability => hct == high,
        // the problem must be solved
        Institution::Liability => !big || hct,
    }
}

/// `(consumer, expert)` payoffs in cents of one interaction.
pub fn oracle_payoffs(
    params: &MarketParams,
    prices: PricePair,
    big: bool,
    hct: bool,
    high: bool,
) -> (i64, i64) {
    let price = if high { prices.high } else { prices.low } * 100;
    let cost = if hct {
        params.cost_high
    } else {
        params.cost_low
    }
    .cents();
    let solved = hct || !big;
    let value = if solved {
        params.value_solved.cents()
    } else {
        0
    };
    (value - price, price - cost)
}

/// Consumer expected payoff (cents) from approaching a self-interested
/// expert, found by enumerating every problem realization and every legal
/// action and picking the expert's best response. Ties between best
/// responses go to the consumer (`skeptical == false`) or against them.
pub fn brute_force_consumer_payoff(
    params: &MarketParams,
    institution: Institution,
    prices: PricePair,
    skeptical: bool,
) -> Ratio<i64> {
    let h = params.prob_big.value();
    let mut total = Ratio::from_integer(0);
    for big in [false, true] {
        let mut best: Option<(i64, i64)> = None;
        for hct in [false, true] {
            for high in [false, true] {
                if !oracle_legal(institution, big, hct, high) {
                    continue;
                }
                let (c, e) = oracle_payoffs(params, prices, big, hct, high);
                best = Some(match best {
                    None => (e, c),
                    Some((be, _)) if e > be => (e, c),
                    Some((be, bc)) if e == be => {
                        (be, if skeptical { bc.min(c) } else { bc.max(c) })
                    }
                    Some(b) => b,
                });
            }
        }
        let (_, c) = best.expect("some action is always legal");
        let p = if big { h } else { Ratio::from_integer(1) - h };
        total += p * c;
    }
    total
}

/// Highest high price a single expert can post under liability while a
/// consumer still prefers approaching: V − p̄ ≥ σ.
pub fn oracle_monopoly_high(params: &MarketParams) -> i64 {
    (params.price_min..=params.price_max)
        .filter(|p| params.value_solved.cents() - p * 100 >= params.outside_option.cents())
        .max()
        .expect("some price is acceptable")
}

pub fn random_record<R: Rng>(rng: &mut R, params: &MarketParams) -> HistoryRecord {
    let mut pair = || {
        let low = rng.random_range(params.price_min..=params.price_max);
        let high = rng.random_range(low..=params.price_max);
        PricePair { low, high }
    };
    let prices = [pair(), pair(), pair(), pair()];
    let chosen = match rng.random_range(0..5) {
        4 => HistoryChoice::OptOut,
        i => HistoryChoice::Approach(i),
    };
    HistoryRecord { chosen, prices }
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct FraudSuite {
    pub draws: u64,
    pub legal_draws: u64,
    pub interactions: u64,
    /// The engine and the oracle disagreed on whether a draw is legal.
    pub legality_mismatches: u64,
    pub undertreatment_under_liability: u64,
    pub overcharging_under_verifiability: u64,
    pub conservation_failures: u64,
}

impl FraudSuite {
    pub fn clean(&self) -> bool {
        self.legality_mismatches == 0
            && self.undertreatment_under_liability == 0
            && self.overcharging_under_verifiability == 0
            && self.conservation_failures == 0
    }
}

fn random_action<R: Rng>(rng: &mut R) -> ExpertAction {
    ExpertAction::ALL[rng.random_range(0..ExpertAction::ALL.len())]
}

fn random_legal_action<R: Rng>(rng: &mut R, institution: Institution, big: bool) -> ExpertAction {
    loop {
        let a = random_action(rng);
        if oracle_legal(
            institution,
            big,
            a.treatment == Treatment::Hct,
            a.tier == Tier::High,
        ) {
            return a;
        }
    }
}

fn action_is_legal(institution: Institution, problem: ProblemType, a: ExpertAction) -> bool {
    oracle_legal(
        institution,
        problem == ProblemType::Big,
        a.treatment == Treatment::Hct,
        a.tier == Tier::High,
    )
}

/// `draws` random expert strategies: half drawn from all actions (and
/// checked against the engine's validation), half drawn from legal actions
/// and played out in markets with random consumer choices.
pub fn fraud_suite(institution: Institution, draws: u64, seed: u64) -> FraudSuite {
    let params = MarketParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ institution as u64);
    let mut suite = FraudSuite::default();
    let n = params.n_consumers;
    let mut pending: Vec<ExpertDecision> = Vec::new();
    let mut market = 0u64;
    for draw in 0..draws {
        suite.draws += 1;
        let low = rng.random_range(params.price_min..=params.price_max);
        let prices = PricePair {
            low,
            high: rng.random_range(low..=params.price_max),
        };
        let any = draw % 2 == 0;
        let slots: Vec<ActionRule> = (0..n)
            .map(|_| {
                if any {
                    ActionRule {
                        small: random_action(&mut rng),
                        big: random_action(&mut rng),
                    }
                } else {
                    ActionRule {
                        small: random_legal_action(&mut rng, institution, false),
                        big: random_legal_action(&mut rng, institution, true),
                    }
                }
            })
            .collect();
        let legal = slots.iter().all(|r| {
            action_is_legal(institution, ProblemType::Small, r.small)
                && action_is_legal(institution, ProblemType::Big, r.big)
        });
        let decision = ExpertDecision {
            strategy: ExpertStrategy { prices, slots },
            delegated: false,
            objective: None,
            source: "random".into(),
        };
        let accepted =
            credence_core::engine::validate_decision(&params, institution, 0, &decision).is_ok();
        if accepted != legal {
            suite.legality_mismatches += 1;
        }
        if !legal {
            continue;
        }
        suite.legal_draws += 1;
        pending.push(decision);
        if pending.len() < params.n_experts {
            continue;
        }
        let choices: Vec<Choice> = (0..n)
            .map(|_| match rng.random_range(0..=params.n_experts) {
                0 => Choice::OptOut,
                i => Choice::Approach(i - 1),
            })
            .collect();
        let streams = MarketStreams::new(seed, market);
        market += 1;
        let outcome = resolve_market(&params, institution, false, &pending, &choices, &streams)
            .expect("legal strategies resolve");
        let mut expert_cents = vec![0i64; params.n_experts];
        for (j, &choice) in choices.iter().enumerate() {
            let big = outcome.problems[j] == ProblemType::Big;
            match (choice, outcome.interactions[j]) {
                (Choice::OptOut, None) => {
                    if outcome.consumer_payoffs[j] != params.outside_option {
                        suite.conservation_failures += 1;
                    }
                }
                (Choice::Approach(i), Some(it)) => {
                    suite.interactions += 1;
                    let a = pending[i].strategy.slots[j].action(outcome.problems[j]);
                    let hct = a.treatment == Treatment::Hct;
                    let high = a.tier == Tier::High;
                    let (c, e) =
                        oracle_payoffs(&params, pending[i].strategy.prices, big, hct, high);
                    let value = if hct || !big {
                        params.value_solved.cents()
                    } else {
                        0
                    };
                    let cost = if hct {
                        params.cost_high
                    } else {
                        params.cost_low
                    }
                    .cents();
                    if it.action != a
                        || outcome.consumer_payoffs[j].cents() != c
                        || c + e != value - cost
                    {
                        suite.conservation_failures += 1;
                    }
                    expert_cents[i] += e;
                    if institution == Institution::Liability && it.fraud.undertreatment {
                        suite.undertreatment_under_liability += 1;
                    }
                    if institution == Institution::Verifiability && it.fraud.overcharging {
                        suite.overcharging_under_verifiability += 1;
                    }
                }
                _ => suite.conservation_failures += 1,
            }
        }
        let engine_experts: Vec<i64> = outcome.expert_payoffs.iter().map(|m| m.cents()).collect();
        if engine_experts != expert_cents || !outcome.conserves(&params) {
            suite.conservation_failures += 1;
        }
        pending.clear();
    }
    suite
}

/// Approach shares and per-problem actions of the synthetic human data.
pub struct SyntheticCell {
    pub institution: Institution,
    pub approach: Ratio<i64>,
    pub prices: PricePair,
    pub small: ExpertAction,
    pub big: ExpertAction,
}

pub fn synthetic_cells() -> Vec<SyntheticCell> {
    let a = |t, c| ExpertAction::new(t, c);
    vec![
        SyntheticCell {
            institution: Institution::NoInstitution,
            approach: Ratio::new(66, 100),
            prices: PricePair { low: 3, high: 5 },
            small: a(Treatment::Lct, Tier::High),
            big: a(Treatment::Lct, Tier::High),
        },
        SyntheticCell {
            institution: Institution::Verifiability,
            approach: Ratio::new(66, 100),
            prices: PricePair { low: 4, high: 7 },
            small: a(Treatment::Lct, Tier::Low),
            big: a(Treatment::Lct, Tier::Low),
        },
        SyntheticCell {
            institution: Institution::Liability,
            approach: Ratio::new(80, 100),
            prices: PricePair { low: 4, high: 8 },
            small: a(Treatment::Lct, Tier::High),
            big: a(Treatment::Hct, Tier::High),
        },
    ]
}

/// Writes the synthetic human-data CSV: 8 experts and 50 consumers per
/// institution.
pub fn write_synthetic_csv(path: &Path) {
    let mut experts = Vec::new();
    let mut consumers = Vec::new();
    for cell in synthetic_cells() {
        for i in 0..8 {
            experts.push(ExpertRecord {
                subject_id: format!("{}-e{i}", cell.institution.label()),
                institution: cell.institution,
                prices: cell.prices,
                small: cell.small,
                big: cell.big,
                delegated: false,
                chosen_objective: None,
            });
        }
        let approaching = (cell.approach * 50).to_integer();
        for i in 0..50 {
            consumers.push(ConsumerRecord {
                subject_id: format!("{}-c{i}", cell.institution.label()),
                institution: cell.institution,
                choice: if i < approaching {
                    ReplayChoice::Approach((i % 4) as usize)
                } else {
                    ReplayChoice::OptOut
                },
            });
        }
    }
    write_human_csv(std::fs::File::create(path).unwrap(), &experts, &consumers).unwrap();
}

/// Oracle efficiencies `(expected mode, realized mode)` for one synthetic
/// cell, treating consumers as independent.
pub fn synthetic_oracle(params: &MarketParams, cell: &SyntheticCell) -> (f64, f64) {
    let h = params.prob_big.value();
    let v = params.value_solved.cents();
    let outside = params.outside_option.cents();
    let created = |a: ExpertAction, big: bool| {
        let hct = a.treatment == Treatment::Hct;
        let value = if hct || !big { v } else { 0 };
        value
            - if hct {
                params.cost_high
            } else {
                params.cost_low
            }
            .cents()
    };
    let max = |big: bool| {
        v - if big {
            params.cost_high
        } else {
            params.cost_low
        }
        .cents()
    };
    // one consumer: ((income, max), probability)
    let mut one: Vec<((i64, i64), Ratio<i64>)> = Vec::new();
    for big in [false, true] {
        let pb = if big { h } else { Ratio::from_integer(1) - h };
        let action = if big { cell.big } else { cell.small };
        one.push(((created(action, big), max(big)), pb * cell.approach));
        one.push((
            (outside, max(big)),
            pb * (Ratio::from_integer(1) - cell.approach),
        ));
    }
    let expected_income: Ratio<i64> = one.iter().map(|((i, _), p)| p * i).sum();
    let expected_max: Ratio<i64> = one.iter().map(|((_, m), p)| p * m).sum();
    let expected = (expected_income / expected_max).to_f64_lossy();

    let mut joint: BTreeMap<(i64, i64), f64> = BTreeMap::from([((0, 0), 1.0)]);
    for _ in 0..params.n_consumers {
        let mut next = BTreeMap::new();
        for (&(inc, mx), &p) in &joint {
            for &((i, m), q) in &one {
                *next.entry((inc + i, mx + m)).or_insert(0.0) += p * q.to_f64_lossy();
            }
        }
        joint = next;
    }
    let realized = joint
        .iter()
        .map(|(&(inc, mx), p)| p * inc as f64 / mx as f64)
        .sum();
    (expected, realized)
}

pub trait ToF64Lossy {
    fn to_f64_lossy(&self) -> f64;
}

impl ToF64Lossy for Ratio<i64> {
    fn to_f64_lossy(&self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
}

/// Pipeline efficiencies `(expected mode, realized mode)` per institution
/// after ingesting the synthetic CSV and replaying it.
pub fn synthetic_pipeline(path: &Path, reps: u64, seed: u64) -> Vec<(Institution, f64, f64)> {
    let params = MarketParams::default();
    let human = ingest_human_csv(path, &params).expect("synthetic data ingests");
    assert!(human.rejected.is_empty());
    let experts = ExpertPolicy::replay(human.expert_pool(seed, params.n_experts));
    let consumers = ConsumerPolicy::replay(human.consumer_pool(seed, params.n_consumers));
    Institution::ALL
        .into_iter()
        .map(|institution| {
            let cell = credence_core::MarketCell {
                label: format!("synthetic/{}", institution.label()),
                params: params.clone(),
                institution,
                transparent: false,
                experts: vec![experts.clone(); params.n_experts],
                consumers: vec![consumers.clone(); params.n_consumers],
            };
            let outcomes = run_cell(&cell, reps, seed).unwrap();
            let e = summarize(
                &outcomes,
                &params,
                EfficiencyMode::Expected,
                SurplusMode::GroupTotal,
            );
            let r = summarize(
                &outcomes,
                &params,
                EfficiencyMode::Realized,
                SurplusMode::GroupTotal,
            );
            (institution, e.relative_efficiency, r.relative_efficiency)
        })
        .collect()
}
