//! Scripted LLM experts transcribed from observed model behavior.
//!
//! Prices are deterministic per institution; actions may be stochastic
//! where the observed model mixed (e.g. overcharging small problems 92%
//! of the time).

use std::fmt;
use std::str::FromStr;

use num_traits::One;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::ParseValueError;
use crate::model::{ExpertAction, Institution, Objective, PricePair, ProblemType, Tier, Treatment};
use crate::money::Probability;

use super::{ActionRule, ExpertStrategy};

/// A finite distribution over actions whose weights sum to exactly one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionDistribution(Vec<(ExpertAction, Probability)>);

impl ActionDistribution {
    pub fn point(action: ExpertAction) -> Self {
        ActionDistribution(vec![(action, Probability::one())])
    }

    /// `first` with probability `p`, otherwise `second`.
    pub fn binary(first: ExpertAction, p: Probability, second: ExpertAction) -> Self {
        ActionDistribution(vec![(first, p), (second, p.complement())])
    }

    pub fn new(entries: Vec<(ExpertAction, Probability)>) -> Option<Self> {
        let total = entries.iter().fold(
            num_rational::Ratio::<i64>::from_integer(0),
            |acc, (_, p)| acc + p.value(),
        );
        (total.is_one() && !entries.is_empty()).then_some(ActionDistribution(entries))
    }

    pub fn entries(&self) -> &[(ExpertAction, Probability)] {
        &self.0
    }

    pub fn probability_of(&self, action: ExpertAction) -> Probability {
        Probability::new(
            self.0
                .iter()
                .filter(|(a, _)| *a == action)
                .map(|(_, p)| p.value())
                .sum::<num_rational::Ratio<i64>>(),
        )
        .expect("sub-distribution mass stays in [0, 1]")
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ExpertAction {
        if let [(only, _)] = self.0.as_slice() {
            return *only;
        }
        let denom = self
            .0
            .iter()
            .fold(1i64, |acc, (_, p)| lcm(acc, *p.value().denom()));
        let draw = rng.random_range(0..denom);
        let mut cumulative = 0i64;
        for (action, p) in &self.0 {
            cumulative += p.value().numer() * (denom / p.value().denom());
            if draw < cumulative {
                return *action;
            }
        }
        self.0.last().expect("non-empty").0
    }
}

pub(crate) fn lcm(a: i64, b: i64) -> i64 {
    fn gcd(a: i64, b: i64) -> i64 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    a / gcd(a, b) * b
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileCell {
    pub prices: PricePair,
    pub small: ActionDistribution,
    pub big: ActionDistribution,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedProfile {
    pub label: String,
    /// The prompted objective, when the profile has one.
    pub objective: Option<Objective>,
    pub no_institution: ProfileCell,
    pub verifiability: ProfileCell,
    pub liability: ProfileCell,
}

impl ScriptedProfile {
    pub fn cell(&self, institution: Institution) -> &ProfileCell {
        match institution {
            Institution::NoInstitution => &self.no_institution,
            Institution::Verifiability => &self.verifiability,
            Institution::Liability => &self.liability,
        }
    }

    pub fn prices(&self, institution: Institution) -> PricePair {
        self.cell(institution).prices
    }

    pub fn distribution(
        &self,
        institution: Institution,
        problem: ProblemType,
    ) -> &ActionDistribution {
        let cell = self.cell(institution);
        match problem {
            ProblemType::Small => &cell.small,
            ProblemType::Big => &cell.big,
        }
    }

    /// Independent draws for every slot and problem type.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        institution: Institution,
        n_slots: usize,
        rng: &mut R,
    ) -> ExpertStrategy {
        let cell = self.cell(institution);
        let slots = (0..n_slots)
            .map(|_| ActionRule {
                small: cell.small.sample(rng),
                big: cell.big.sample(rng),
            })
            .collect();
        ExpertStrategy {
            prices: cell.prices,
            slots,
        }
    }
}

/// Which observed LLM behavior to script. Serialized as its label
/// ("aiai:self_interested", "human_trained", ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LlmSource {
    /// LLM experts facing LLM consumers, by prompted objective.
    AiAi(Objective),
    /// Self-interested LLM experts facing human consumers, instructions only.
    NoTraining,
    /// ... additionally given AI-AI market data.
    AiTrained,
    /// ... additionally given human market data.
    HumanTrained,
    /// LLM agent acting for a human expert who delegated, by chosen objective.
    Delegated(Objective),
}

impl fmt::Display for LlmSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LlmSource::AiAi(o) => write!(f, "aiai:{o}"),
            LlmSource::NoTraining => f.write_str("no_training"),
            LlmSource::AiTrained => f.write_str("ai_trained"),
            LlmSource::HumanTrained => f.write_str("human_trained"),
            LlmSource::Delegated(o) => write!(f, "delegated:{o}"),
        }
    }
}

impl FromStr for LlmSource {
    type Err = ParseValueError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || ParseValueError::Label {
            kind: "LLM source",
            value: s.to_string(),
            expected:
                "aiai:<objective>, no_training, ai_trained, human_trained, delegated:<objective>",
        };
        let lower = s.trim().to_ascii_lowercase();
        if let Some((head, objective)) = lower.split_once(':') {
            let objective: Objective = objective.parse().map_err(|_| unknown())?;
            return match head.replace(['-', '_'], "").as_str() {
                "aiai" => Ok(LlmSource::AiAi(objective)),
                "delegated" => Ok(LlmSource::Delegated(objective)),
                _ => Err(unknown()),
            };
        }
        match lower.replace(['-', '_'], "").as_str() {
            "notraining" => Ok(LlmSource::NoTraining),
            "aitrained" => Ok(LlmSource::AiTrained),
            "humantrained" => Ok(LlmSource::HumanTrained),
            _ => Err(unknown()),
        }
    }
}

impl Serialize for LlmSource {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LlmSource {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

const fn a(treatment: Treatment, tier: Tier) -> ExpertAction {
    ExpertAction::new(treatment, tier)
}

const LCT_LOW: ExpertAction = a(Treatment::Lct, Tier::Low);
const LCT_HIGH: ExpertAction = a(Treatment::Lct, Tier::High);
const HCT_HIGH: ExpertAction = a(Treatment::Hct, Tier::High);

fn pp(low: i64, high: i64) -> PricePair {
    PricePair { low, high }
}

fn cell(prices: PricePair, small: ActionDistribution, big: ActionDistribution) -> ProfileCell {
    ProfileCell { prices, small, big }
}

fn point(action: ExpertAction) -> ActionDistribution {
    ActionDistribution::point(action)
}

/// Undertreat and overcharge whatever the problem.
fn exploit(prices: PricePair) -> ProfileCell {
    cell(prices, point(LCT_HIGH), point(LCT_HIGH))
}

fn always_lct_low(prices: PricePair) -> ProfileCell {
    cell(prices, point(LCT_LOW), point(LCT_LOW))
}

fn honest(prices: PricePair) -> ProfileCell {
    cell(prices, point(LCT_LOW), point(HCT_HIGH))
}

/// Solve every problem, always charge the high price.
fn overcharge(prices: PricePair) -> ProfileCell {
    cell(prices, point(LCT_HIGH), point(HCT_HIGH))
}

/// AI-AI posted prices by objective: (no institution, verifiability, liability).
fn aiai_prices(objective: Objective) -> [PricePair; 3] {
    match objective {
        Objective::NoObjective => [pp(4, 5), pp(4, 7), pp(5, 7)],
        Objective::SelfInterested => [pp(5, 8), pp(5, 5), pp(4, 7)],
        Objective::InequityAverse => [pp(6, 8), pp(5, 5), pp(4, 8)],
        Objective::EfficiencyLoving => [pp(4, 8), pp(4, 8), pp(4, 8)],
    }
}

/// Prices of the LLM agent human experts could delegate to.
fn delegated_prices(objective: Objective) -> [PricePair; 3] {
    match objective {
        Objective::SelfInterested => [pp(3, 5), pp(4, 7), pp(4, 8)],
        Objective::EfficiencyLoving | Objective::InequityAverse => [pp(4, 8), pp(4, 8), pp(4, 8)],
        Objective::NoObjective => aiai_prices(Objective::NoObjective),
    }
}

fn aiai_actions(objective: Objective, prices: [PricePair; 3]) -> [ProfileCell; 3] {
    let [ni, v, l] = prices;
    match objective {
        Objective::NoObjective | Objective::SelfInterested => {
            [exploit(ni), always_lct_low(v), overcharge(l)]
        }
        Objective::InequityAverse => [
            honest(ni),
            // undertreats big problems half of the time
            cell(
                v,
                point(LCT_LOW),
                ActionDistribution::binary(LCT_LOW, Probability::ratio(1, 2), HCT_HIGH),
            ),
            // honest price on 98% of all decisions: big problems are always
            // charged honestly, so 4% of small problems are overcharged
            cell(
                l,
                ActionDistribution::binary(LCT_LOW, Probability::ratio(24, 25), LCT_HIGH),
                point(HCT_HIGH),
            ),
        ],
        Objective::EfficiencyLoving => [
            honest(ni),
            honest(v),
            cell(
                l,
                ActionDistribution::binary(LCT_HIGH, Probability::ratio(23, 25), LCT_LOW),
                point(HCT_HIGH),
            ),
        ],
    }
}

/// Transcribed prices and action rules for an observed LLM configuration.
pub fn scripted_llm_profile(source: LlmSource) -> ScriptedProfile {
    let (objective, [no_institution, verifiability, liability]) = match source {
        LlmSource::AiAi(o) => (o, aiai_actions(o, aiai_prices(o))),
        LlmSource::Delegated(o) => (o, aiai_actions(o, delegated_prices(o))),
        LlmSource::NoTraining => (
            Objective::SelfInterested,
            [
                exploit(pp(3, 5)),
                always_lct_low(pp(4, 7)),
                overcharge(pp(4, 8)),
            ],
        ),
        LlmSource::AiTrained => (
            Objective::SelfInterested,
            [
                exploit(pp(4, 7)),
                always_lct_low(pp(4, 4)),
                overcharge(pp(3, 6)),
            ],
        ),
        LlmSource::HumanTrained => (
            Objective::SelfInterested,
            [
                exploit(pp(3, 7)),
                always_lct_low(pp(4, 8)),
                overcharge(pp(4, 8)),
            ],
        ),
    };
    ScriptedProfile {
        label: source.to_string(),
        objective: Some(objective),
        no_institution,
        verifiability,
        liability,
    }
}
