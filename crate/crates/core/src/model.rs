//! Game primitives: parameters, institutions, legal actions, payoffs and
//! the fraud taxonomy.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, ParseValueError};
use crate::money::{Money, Probability};

/// Largest number of agents per role.
pub const MAX_AGENTS: usize = 256;

/// Market parameters. Defaults are the one-shot game used throughout
/// the experiments: V = 10, outside option 1.6, h = 0.5, costs 2 / 6,
/// prices 1..=11, four experts and four consumers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketParams {
    pub value_solved: Money,
    pub outside_option: Money,
    pub prob_big: Probability,
    pub cost_low: Money,
    pub cost_high: Money,
    pub price_min: i64,
    pub price_max: i64,
    pub n_experts: usize,
    pub n_consumers: usize,
}

impl Default for MarketParams {
    fn default() -> Self {
        MarketParams {
            value_solved: Money::from_units(10),
            outside_option: Money::from_cents(160),
            prob_big: Probability::ratio(1, 2),
            cost_low: Money::from_units(2),
            cost_high: Money::from_units(6),
            price_min: 1,
            price_max: 11,
            n_experts: 4,
            n_consumers: 4,
        }
    }
}

impl MarketParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: &str| Err(ModelError::InvalidParams(m.to_string()));
        if !(self.cost_low < self.cost_high && self.cost_high < self.value_solved) {
            return fail("need cost_low < cost_high < value_solved");
        }
        if !(self.outside_option >= Money::ZERO && self.outside_option < self.value_solved) {
            return fail("need 0 <= outside_option < value_solved");
        }
        if self.price_min > self.price_max {
            return fail("need price_min <= price_max");
        }
        if self.n_experts == 0 || self.n_consumers == 0 {
            return fail("need at least one expert and one consumer");
        }
        if self.n_experts > MAX_AGENTS || self.n_consumers > MAX_AGENTS {
            return fail("at most 256 experts and 256 consumers");
        }
        Ok(())
    }

    pub fn cost(&self, treatment: Treatment) -> Money {
        match treatment {
            Treatment::Lct => self.cost_low,
            Treatment::Hct => self.cost_high,
        }
    }

    pub fn problem_probability(&self, problem: ProblemType) -> Probability {
        match problem {
            ProblemType::Big => self.prob_big,
            ProblemType::Small => self.prob_big.complement(),
        }
    }

    /// Every valid price pair on the grid, ordered by (low, high).
    pub fn price_grid(&self) -> Vec<PricePair> {
        (self.price_min..=self.price_max)
            .flat_map(|low| (low..=self.price_max).map(move |high| PricePair { low, high }))
            .collect()
    }

    /// Cost of the cheapest treatment that solves `problem`.
    pub fn cost_needed(&self, problem: ProblemType) -> Money {
        self.cost(problem.sufficient_treatment())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemType {
    Small,
    Big,
}

impl ProblemType {
    pub const ALL: [ProblemType; 2] = [ProblemType::Small, ProblemType::Big];

    pub fn sufficient_treatment(self) -> Treatment {
        match self {
            ProblemType::Small => Treatment::Lct,
            ProblemType::Big => Treatment::Hct,
        }
    }
}

impl fmt::Display for ProblemType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProblemType::Small => "small",
            ProblemType::Big => "big",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Treatment {
    #[serde(rename = "LCT", alias = "lct")]
    Lct,
    #[serde(rename = "HCT", alias = "hct")]
    Hct,
}

impl Treatment {
    pub const ALL: [Treatment; 2] = [Treatment::Lct, Treatment::Hct];

    pub fn solves(self, problem: ProblemType) -> bool {
        matches!(
            (self, problem),
            (Treatment::Hct, _) | (Treatment::Lct, ProblemType::Small)
        )
    }

    /// The price tier that matches this treatment.
    pub fn matching_tier(self) -> Tier {
        match self {
            Treatment::Lct => Tier::Low,
            Treatment::Hct => Tier::High,
        }
    }
}

impl fmt::Display for Treatment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Treatment::Lct => "LCT",
            Treatment::Hct => "HCT",
        })
    }
}

impl FromStr for Treatment {
    type Err = ParseValueError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "LCT" => Ok(Treatment::Lct),
            "HCT" => Ok(Treatment::Hct),
            _ => Err(ParseValueError::Label {
                kind: "treatment",
                value: s.to_string(),
                expected: "LCT, HCT",
            }),
        }
    }
}

/// Which of the posted prices is charged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Low,
    High,
}

impl Tier {
    pub const ALL: [Tier; 2] = [Tier::Low, Tier::High];
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::Low => "low",
            Tier::High => "high",
        })
    }
}

impl FromStr for Tier {
    type Err = ParseValueError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "low" | "small" => Ok(Tier::Low),
            "high" | "big" => Ok(Tier::High),
            _ => Err(ParseValueError::Label {
                kind: "price tier",
                value: s.to_string(),
                expected: "low, high",
            }),
        }
    }
}

/// An expert's posted menu: `low` is the LCT price, `high` the HCT price.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PricePair {
    pub low: i64,
    pub high: i64,
}

impl PricePair {
    pub fn new(low: i64, high: i64, params: &MarketParams) -> Result<Self, ModelError> {
        let pair = PricePair { low, high };
        pair.validate(params)?;
        Ok(pair)
    }

    pub fn validate(&self, params: &MarketParams) -> Result<(), ModelError> {
        if params.price_min <= self.low && self.low <= self.high && self.high <= params.price_max {
            Ok(())
        } else {
            Err(ModelError::InvalidPricePair {
                low: self.low,
                high: self.high,
                min: params.price_min,
                max: params.price_max,
            })
        }
    }

    pub fn price(&self, tier: Tier) -> Money {
        Money::from_units(match tier {
            Tier::Low => self.low,
            Tier::High => self.high,
        })
    }

    pub fn spread(&self) -> Money {
        Money::from_units(self.high - self.low)
    }
}

impl fmt::Display for PricePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.low, self.high)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Institution {
    NoInstitution,
    Verifiability,
    Liability,
}

impl Institution {
    pub const ALL: [Institution; 3] = [
        Institution::NoInstitution,
        Institution::Verifiability,
        Institution::Liability,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Institution::NoInstitution => "no_institution",
            Institution::Verifiability => "verifiability",
            Institution::Liability => "liability",
        }
    }

    /// Whether `action` is allowed for a diagnosed `problem`.
    pub fn permits(self, problem: ProblemType, action: ExpertAction) -> bool {
        match self {
            Institution::NoInstitution => true,
            Institution::Verifiability => action.tier == action.treatment.matching_tier(),
            Institution::Liability => action.treatment.solves(problem),
        }
    }

    pub fn check(self, problem: ProblemType, action: ExpertAction) -> Result<(), ModelError> {
        if self.permits(problem, action) {
            Ok(())
        } else {
            Err(ModelError::IllegalAction {
                institution: self,
                problem,
                action,
            })
        }
    }
}

impl fmt::Display for Institution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Institution::NoInstitution => "No Institution",
            Institution::Verifiability => "Verifiability",
            Institution::Liability => "Liability",
        })
    }
}

impl FromStr for Institution {
    type Err = ParseValueError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect();
        match norm.as_str() {
            "noinstitution" | "none" | "ni" => Ok(Institution::NoInstitution),
            "verifiability" | "v" => Ok(Institution::Verifiability),
            "liability" | "l" => Ok(Institution::Liability),
            _ => Err(ParseValueError::Label {
                kind: "institution",
                value: s.to_string(),
                expected: "no_institution, verifiability, liability",
            }),
        }
    }
}

/// Treatment provided and the tier charged for it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ExpertAction {
    pub treatment: Treatment,
    #[serde(rename = "charge")]
    pub tier: Tier,
}

impl ExpertAction {
    pub const fn new(treatment: Treatment, tier: Tier) -> Self {
        ExpertAction { treatment, tier }
    }

    /// All four treatment × tier combinations.
    pub const ALL: [ExpertAction; 4] = [
        ExpertAction::new(Treatment::Lct, Tier::Low),
        ExpertAction::new(Treatment::Lct, Tier::High),
        ExpertAction::new(Treatment::Hct, Tier::Low),
        ExpertAction::new(Treatment::Hct, Tier::High),
    ];

    /// Minimal sufficient treatment, charged at its own price.
    pub fn honest(problem: ProblemType) -> Self {
        let treatment = problem.sufficient_treatment();
        ExpertAction::new(treatment, treatment.matching_tier())
    }

    pub fn is_honest(self, problem: ProblemType) -> bool {
        self == ExpertAction::honest(problem)
    }
}

impl fmt::Display for ExpertAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.treatment, self.tier)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FraudKind {
    Undertreatment,
    Overtreatment,
    Overcharging,
}

impl FraudKind {
    pub const ALL: [FraudKind; 3] = [
        FraudKind::Undertreatment,
        FraudKind::Overtreatment,
        FraudKind::Overcharging,
    ];

    pub fn label(self) -> &'static str {
        match self {
            FraudKind::Undertreatment => "undertreatment",
            FraudKind::Overtreatment => "overtreatment",
            FraudKind::Overcharging => "overcharging",
        }
    }
}

/// Set of fraud flags carried by one interaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct FraudFlags {
    pub undertreatment: bool,
    pub overtreatment: bool,
    pub overcharging: bool,
}

impl FraudFlags {
    pub fn contains(&self, kind: FraudKind) -> bool {
        match kind {
            FraudKind::Undertreatment => self.undertreatment,
            FraudKind::Overtreatment => self.overtreatment,
            FraudKind::Overcharging => self.overcharging,
        }
    }

    pub fn is_empty(&self) -> bool {
        !(self.undertreatment || self.overtreatment || self.overcharging)
    }

    pub fn kinds(&self) -> Vec<FraudKind> {
        FraudKind::ALL
            .into_iter()
            .filter(|k| self.contains(*k))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    NoObjective,
    SelfInterested,
    InequityAverse,
    EfficiencyLoving,
}

impl Objective {
    pub const ALL: [Objective; 4] = [
        Objective::NoObjective,
        Objective::SelfInterested,
        Objective::InequityAverse,
        Objective::EfficiencyLoving,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Objective::NoObjective => "no_objective",
            Objective::SelfInterested => "self_interested",
            Objective::InequityAverse => "inequity_averse",
            Objective::EfficiencyLoving => "efficiency_loving",
        }
    }

    /// Utility of an interaction outcome; `None` for `NoObjective`.
    pub fn utility(self, consumer: Money, expert: Money) -> Option<Money> {
        match self {
            Objective::NoObjective => None,
            Objective::SelfInterested => Some(expert),
            Objective::InequityAverse => Some(-(expert - consumer).abs()),
            Objective::EfficiencyLoving => Some(expert + consumer),
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Objective {
    type Err = ParseValueError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect();
        match norm.as_str() {
            "noobjective" | "none" => Ok(Objective::NoObjective),
            "selfinterested" | "selfish" | "maximizepayoff" => Ok(Objective::SelfInterested),
            "inequityaverse" => Ok(Objective::InequityAverse),
            "efficiencyloving" => Ok(Objective::EfficiencyLoving),
            _ => Err(ParseValueError::Label {
                kind: "objective",
                value: s.to_string(),
                expected: "no_objective, self_interested, inequity_averse, efficiency_loving",
            }),
        }
    }
}

/// What consumers see of one expert before choosing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExpertOffer {
    pub expert_index: usize,
    pub prices: PricePair,
    pub delegated: bool,
    /// Present only in transparent markets, for delegated experts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disclosed_objective: Option<Objective>,
}

/// Actions the institution permits for a diagnosed problem, in
/// `ExpertAction::ALL` order.
pub fn legal_actions(institution: Institution, problem: ProblemType) -> Vec<ExpertAction> {
    ExpertAction::ALL
        .into_iter()
        .filter(|a| institution.permits(problem, *a))
        .collect()
}

/// Realized `(consumer, expert)` payoffs of one served consumer.
pub fn interaction_payoffs(
    params: &MarketParams,
    problem: ProblemType,
    prices: PricePair,
    action: ExpertAction,
) -> (Money, Money) {
    let charged = prices.price(action.tier);
    let benefit = if action.treatment.solves(problem) {
        params.value_solved
    } else {
        Money::ZERO
    };
    (benefit - charged, charged - params.cost(action.treatment))
}

pub fn classify_fraud(problem: ProblemType, action: ExpertAction) -> FraudFlags {
    FraudFlags {
        undertreatment: problem == ProblemType::Big && action.treatment == Treatment::Lct,
        overtreatment: problem == ProblemType::Small && action.treatment == Treatment::Hct,
        overcharging: action.treatment == Treatment::Lct && action.tier == Tier::High,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ExpertAction as A;
    use Tier::*;
    use Treatment::*;

    fn pp(low: i64, high: i64) -> PricePair {
        PricePair { low, high }
    }

    #[test]
    fn legal_action_sets() {
        assert_eq!(
            legal_actions(Institution::Verifiability, ProblemType::Big),
            vec![A::new(Lct, Low), A::new(Hct, High)]
        );
        assert_eq!(
            legal_actions(Institution::Liability, ProblemType::Big),
            vec![A::new(Hct, Low), A::new(Hct, High)]
        );
        assert_eq!(
            legal_actions(Institution::NoInstitution, ProblemType::Small),
            ExpertAction::ALL.to_vec()
        );
        assert_eq!(
            legal_actions(Institution::Liability, ProblemType::Small),
            ExpertAction::ALL.to_vec()
        );
    }

    #[test]
    fn payoff_examples() {
        let p = MarketParams::default();
        let m = Money::from_units;
        assert_eq!(
            interaction_payoffs(&p, ProblemType::Big, pp(4, 7), A::new(Hct, High)),
            (m(3), m(1))
        );
        assert_eq!(
            interaction_payoffs(&p, ProblemType::Big, pp(3, 5), A::new(Lct, High)),
            (m(-5), m(3))
        );
        assert_eq!(
            interaction_payoffs(&p, ProblemType::Small, pp(4, 8), A::new(Lct, Low)),
            (m(6), m(2))
        );
    }

    #[test]
    fn fraud_examples() {
        let f = classify_fraud(ProblemType::Big, A::new(Lct, High));
        assert_eq!(
            f.kinds(),
            vec![FraudKind::Undertreatment, FraudKind::Overcharging]
        );
        assert!(classify_fraud(ProblemType::Small, A::new(Lct, Low)).is_empty());
        assert_eq!(
            classify_fraud(ProblemType::Small, A::new(Hct, High)).kinds(),
            vec![FraudKind::Overtreatment]
        );
        // undercharging for the HCT only hurts the expert
        assert!(classify_fraud(ProblemType::Big, A::new(Hct, Low)).is_empty());
    }

    #[test]
    fn price_pair_validation() {
        let p = MarketParams::default();
        assert!(PricePair::new(3, 7, &p).is_ok());
        assert!(PricePair::new(7, 3, &p).is_err());
        assert!(PricePair::new(0, 3, &p).is_err());
        assert!(PricePair::new(3, 12, &p).is_err());
        assert_eq!(p.price_grid().len(), 66);
    }

    #[test]
    fn params_validation() {
        assert!(MarketParams::default().validate().is_ok());
        let bad = MarketParams {
            cost_low: Money::from_units(7),
            ..MarketParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = MarketParams {
            n_experts: 0,
            ..MarketParams::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn label_parsing() {
        assert_eq!(
            "Liability".parse::<Institution>().unwrap(),
            Institution::Liability
        );
        assert_eq!(
            "no_institution".parse::<Institution>().unwrap(),
            Institution::NoInstitution
        );
        assert_eq!(
            "efficiency-loving".parse::<Objective>().unwrap(),
            Objective::EfficiencyLoving
        );
        assert!("greedy".parse::<Objective>().is_err());
        assert_eq!("hct".parse::<Treatment>().unwrap(), Hct);
    }

    #[test]
    fn objective_utilities() {
        let m = Money::from_units;
        assert_eq!(Objective::InequityAverse.utility(m(2), m(6)), Some(m(-4)));
        assert_eq!(Objective::EfficiencyLoving.utility(m(2), m(6)), Some(m(8)));
        assert_eq!(Objective::SelfInterested.utility(m(2), m(6)), Some(m(6)));
        assert_eq!(Objective::NoObjective.utility(m(2), m(6)), None);
    }
}
