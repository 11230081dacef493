//! Behavioral expert mixtures calibrated to human play: a price-pair
//! distribution per institution plus independent per-slot fraud.

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::PolicyError;
use crate::model::{
    ExpertAction, FraudKind, Institution, MarketParams, PricePair, ProblemType, Tier, Treatment,
};
use crate::money::{ratio_from_f64, Probability};

use super::scripted::lcm;
use super::{ActionRule, ExpertStrategy};

const WEIGHT_TOLERANCE: f64 = 1e-9;

/// One weighted price pair, as written in scenario files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedPair {
    pub low: i64,
    pub high: i64,
    pub weight: f64,
}

/// A finite distribution over price pairs with exact integer weights.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<WeightedPair>", into = "Vec<WeightedPair>")]
pub struct PriceDistribution {
    entries: Vec<(PricePair, i64)>,
    total: i64,
}

impl PriceDistribution {
    /// Weights must sum to one within 1e-9; they are then converted to
    /// exact fractions and normalized.
    pub fn from_weights(entries: &[(PricePair, f64)]) -> Result<Self, PolicyError> {
        let sum: f64 = entries.iter().map(|(_, w)| w).sum();
        if (sum - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(PolicyError::WeightsDoNotSumToOne { sum });
        }
        Self::renormalized(entries)
    }

    /// Any non-negative weights, scaled to sum to one (e.g. the most
    /// frequent pairs of an observed distribution, in percent).
    pub fn renormalized(entries: &[(PricePair, f64)]) -> Result<Self, PolicyError> {
        if entries.is_empty() {
            return Err(PolicyError::EmptyDistribution);
        }
        let mut exact = Vec::with_capacity(entries.len());
        for &(prices, weight) in entries {
            if weight < 0.0 || !weight.is_finite() {
                return Err(PolicyError::NegativeWeight { prices, weight });
            }
            exact.push((prices, ratio_from_f64(weight)?));
        }
        let denom = exact.iter().fold(1i64, |acc, (_, r)| lcm(acc, *r.denom()));
        let entries: Vec<(PricePair, i64)> = exact
            .into_iter()
            .map(|(p, r)| (p, (r * Ratio::from_integer(denom)).to_integer()))
            .collect();
        let total: i64 = entries.iter().map(|(_, w)| w).sum();
        if total == 0 {
            return Err(PolicyError::EmptyDistribution);
        }
        Ok(PriceDistribution { entries, total })
    }

    pub fn point(prices: PricePair) -> Self {
        PriceDistribution {
            entries: vec![(prices, 1)],
            total: 1,
        }
    }

    pub fn probability(&self, prices: PricePair) -> Probability {
        let w: i64 = self
            .entries
            .iter()
            .filter(|(p, _)| *p == prices)
            .map(|(_, w)| w)
            .sum();
        Probability::ratio(w, self.total)
    }

    pub fn support(&self) -> impl Iterator<Item = (PricePair, Probability)> + '_ {
        self.entries
            .iter()
            .map(|&(p, w)| (p, Probability::ratio(w, self.total)))
    }

    pub fn validate(&self, params: &MarketParams) -> Result<(), PolicyError> {
        self.entries
            .iter()
            .try_for_each(|(p, _)| p.validate(params))
            .map_err(PolicyError::from)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PricePair {
        let mut draw = rng.random_range(0..self.total);
        for &(prices, weight) in &self.entries {
            if draw < weight {
                return prices;
            }
            draw -= weight;
        }
        unreachable!("draw below the total weight")
    }
}

impl TryFrom<Vec<WeightedPair>> for PriceDistribution {
    type Error = PolicyError;

    fn try_from(raw: Vec<WeightedPair>) -> Result<Self, Self::Error> {
        let entries: Vec<_> = raw
            .iter()
            .map(|w| {
                (
                    PricePair {
                        low: w.low,
                        high: w.high,
                    },
                    w.weight,
                )
            })
            .collect();
        PriceDistribution::from_weights(&entries)
    }
}

impl From<PriceDistribution> for Vec<WeightedPair> {
    fn from(d: PriceDistribution) -> Self {
        d.entries
            .iter()
            .map(|&(p, w)| WeightedPair {
                low: p.low,
                high: p.high,
                weight: Ratio::new(w, d.total).to_f64().unwrap_or(f64::NAN),
            })
            .collect()
    }
}

/// Per-slot fraud probabilities, conditional on the problem the kind
/// applies to: undertreatment for big problems, overtreatment and
/// overcharging for small ones. A kind the institution forbids falls
/// back to the honest action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FraudSpec {
    pub undertreatment: Probability,
    pub overtreatment: Probability,
    pub overcharging: Probability,
}

impl Default for FraudSpec {
    fn default() -> Self {
        FraudSpec::honest()
    }
}

impl FraudSpec {
    pub fn honest() -> Self {
        FraudSpec {
            undertreatment: Probability::zero(),
            overtreatment: Probability::zero(),
            overcharging: Probability::zero(),
        }
    }

    /// Fraud with probability `rate` for each slot and problem type, split
    /// evenly between the two small-problem kinds.
    pub fn uniform(rate: Probability) -> Self {
        let half = rate * Probability::ratio(1, 2);
        FraudSpec {
            undertreatment: rate,
            overtreatment: half,
            overcharging: half,
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let small = self.overtreatment.value() + self.overcharging.value();
        if small > Ratio::from_integer(1) {
            return Err(PolicyError::WeightsDoNotSumToOne {
                sum: small.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(())
    }

    /// Fraudulent action for `kind` on `problem`, if the kind applies and
    /// the institution allows it.
    pub fn fraud_action(
        institution: Institution,
        problem: ProblemType,
        kind: FraudKind,
    ) -> Option<ExpertAction> {
        let action = match (problem, kind) {
            (ProblemType::Big, FraudKind::Undertreatment) => match institution {
                Institution::Verifiability => ExpertAction::new(Treatment::Lct, Tier::Low),
                _ => ExpertAction::new(Treatment::Lct, Tier::High),
            },
            (ProblemType::Small, FraudKind::Overtreatment) => {
                ExpertAction::new(Treatment::Hct, Tier::High)
            }
            (ProblemType::Small, FraudKind::Overcharging) => {
                ExpertAction::new(Treatment::Lct, Tier::High)
            }
            _ => return None,
        };
        institution.permits(problem, action).then_some(action)
    }

    /// Exact action distribution for one slot.
    pub fn distribution(
        &self,
        institution: Institution,
        problem: ProblemType,
    ) -> Vec<(ExpertAction, Probability)> {
        let kinds: &[(FraudKind, Probability)] = match problem {
            ProblemType::Small => &[
                (FraudKind::Overtreatment, self.overtreatment),
                (FraudKind::Overcharging, self.overcharging),
            ],
            ProblemType::Big => &[(FraudKind::Undertreatment, self.undertreatment)],
        };
        let mut honest = Ratio::from_integer(1);
        let mut out = Vec::new();
        for &(kind, p) in kinds {
            if let Some(action) = Self::fraud_action(institution, problem, kind) {
                if !p.is_zero() {
                    honest -= p.value();
                    out.push((action, p));
                }
            }
        }
        if !honest.is_zero() {
            out.insert(
                0,
                (
                    ExpertAction::honest(problem),
                    Probability::new(honest).expect("validated spec"),
                ),
            );
        }
        out
    }

    fn sample_action<R: Rng + ?Sized>(
        &self,
        institution: Institution,
        problem: ProblemType,
        rng: &mut R,
    ) -> ExpertAction {
        let dist = self.distribution(institution, problem);
        if let [(only, _)] = dist.as_slice() {
            return *only;
        }
        let denom = dist
            .iter()
            .fold(1i64, |acc, (_, p)| lcm(acc, *p.value().denom()));
        let mut draw = rng.random_range(0..denom);
        for (action, p) in &dist {
            let w = p.value().numer() * (denom / p.value().denom());
            if draw < w {
                return *action;
            }
            draw -= w;
        }
        unreachable!("distribution sums to one")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureCell {
    pub prices: PriceDistribution,
    #[serde(default)]
    pub fraud: FraudSpec,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BehavioralMixture {
    pub label: String,
    pub no_institution: MixtureCell,
    pub verifiability: MixtureCell,
    pub liability: MixtureCell,
}

impl BehavioralMixture {
    pub fn cell(&self, institution: Institution) -> &MixtureCell {
        match institution {
            Institution::NoInstitution => &self.no_institution,
            Institution::Verifiability => &self.verifiability,
            Institution::Liability => &self.liability,
        }
    }

    pub fn validate(&self, params: &MarketParams) -> Result<(), PolicyError> {
        for inst in Institution::ALL {
            let cell = self.cell(inst);
            cell.prices.validate(params)?;
            cell.fraud.validate()?;
        }
        Ok(())
    }

    /// Draws a price pair, then independently one action per slot and problem.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        params: &MarketParams,
        institution: Institution,
        rng: &mut R,
    ) -> Result<ExpertStrategy, PolicyError> {
        let cell = self.cell(institution);
        cell.fraud.validate()?;
        let prices = cell.prices.sample(rng);
        prices.validate(params)?;
        let slots = (0..params.n_consumers)
            .map(|_| ActionRule {
                small: cell
                    .fraud
                    .sample_action(institution, ProblemType::Small, rng),
                big: cell.fraud.sample_action(institution, ProblemType::Big, rng),
            })
            .collect();
        Ok(ExpertStrategy { prices, slots })
    }
}

fn pp(low: i64, high: i64) -> PricePair {
    PricePair { low, high }
}

/// Most frequent human price pairs by institution, in percent of experts.
pub fn human_price_frequencies(institution: Institution) -> Vec<(PricePair, f64)> {
    match institution {
        Institution::NoInstitution => vec![
            (pp(4, 8), 17.30),
            (pp(3, 7), 14.75),
            (pp(2, 6), 14.59),
            (pp(5, 8), 4.67),
            (pp(3, 6), 3.93),
            (pp(5, 10), 3.77),
            (pp(4, 7), 3.20),
            (pp(5, 7), 3.20),
            (pp(6, 8), 2.79),
        ],
        Institution::Verifiability => vec![
            (pp(2, 6), 15.98),
            (pp(4, 8), 15.82),
            (pp(3, 7), 12.87),
            (pp(5, 9), 6.31),
            (pp(5, 10), 4.02),
            (pp(3, 6), 3.85),
            (pp(5, 8), 3.28),
            (pp(4, 7), 3.11),
            (pp(4, 9), 2.70),
        ],
        Institution::Liability => vec![
            (pp(4, 8), 20.00),
            (pp(3, 7), 12.79),
            (pp(2, 6), 12.46),
            (pp(5, 8), 5.16),
            (pp(5, 9), 4.92),
            (pp(6, 8), 3.44),
            (pp(5, 10), 3.36),
            (pp(6, 10), 2.62),
            (pp(4, 10), 2.38),
        ],
    }
}

/// Per-slot fraud probability at which an expert serving four consumers
/// defrauds at least one with probability about 0.30.
pub fn human_slot_fraud_rate() -> Probability {
    Probability::ratio(86, 1000)
}

/// Default human-calibrated mixture: observed top price pairs per
/// institution (renormalized) and independent per-slot fraud.
pub fn behavioral_mixture(fraud: FraudSpec) -> Result<BehavioralMixture, PolicyError> {
    let cell = |inst| -> Result<MixtureCell, PolicyError> {
        Ok(MixtureCell {
            prices: PriceDistribution::renormalized(&human_price_frequencies(inst))?,
            fraud,
        })
    };
    Ok(BehavioralMixture {
        label: "human".into(),
        no_institution: cell(Institution::NoInstitution)?,
        verifiability: cell(Institution::Verifiability)?,
        liability: cell(Institution::Liability)?,
    })
}
