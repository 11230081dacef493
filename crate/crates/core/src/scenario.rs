//! Declarative scenario files (TOML) and seeded replication runs.
//!
//! A scenario names one or more institutions, the expert and consumer
//! populations, and how many replications to run. Every institution
//! becomes one [`MarketCell`]. See `schema/scenario.md` in the repository
//! for the full key reference.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::belief::BeliefModel;
use crate::engine::{run_cell, MarketCell, MarketOutcome};
use crate::error::{EngineError, ScenarioError};
use crate::ingest::{ingest_human_csv, HumanData};
use crate::metrics::{summarize, EfficiencyMode, MetricSet, SurplusMode};
use crate::model::{Institution, MarketParams, Objective, PricePair};
use crate::money::Probability;
use crate::policy::{
    behavioral_mixture, default_objective_shares, human_slot_fraud_rate, scripted_llm_profile,
    ConsumerPolicy, DelegationSpec, ExpertPolicy, FraudSpec, LlmSource, ObjectiveRegime,
    PriceChoice, TieBreak, TrustRates,
};

fn one() -> usize {
    1
}

fn default_reps() -> u64 {
    1000
}

/// One institution or a list of them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Institutions {
    One(Institution),
    Many(Vec<Institution>),
}

impl Default for Institutions {
    fn default() -> Self {
        Institutions::Many(Institution::ALL.to_vec())
    }
}

impl Institutions {
    pub fn list(&self) -> Vec<Institution> {
        match self {
            Institutions::One(i) => vec![*i],
            Institutions::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseBelief {
    #[default]
    Standard,
    Skeptical,
}

impl From<BaseBelief> for BeliefModel {
    fn from(b: BaseBelief) -> Self {
        match b {
            BaseBelief::Standard => BeliefModel::StandardSelfInterest,
            BaseBelief::Skeptical => BeliefModel::Skeptical,
        }
    }
}

/// An expert population entry; `count` experts share the spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExpertSpec {
    /// Transcribed LLM behavior.
    Scripted {
        source: LlmSource,
        #[serde(default = "one")]
        count: usize,
    },
    /// Best response for `objective`; prices fixed, or taken from the
    /// equilibrium prediction for the cell (transparent when the scenario is).
    Rational {
        objective: Objective,
        #[serde(default)]
        prices: Option<PricePair>,
        #[serde(default = "one")]
        count: usize,
    },
    /// Human-like price frequencies with per-problem fraud probabilities.
    Mixture {
        #[serde(default)]
        fraud: Option<FraudSpec>,
        #[serde(default)]
        slot_fraud_rate: Option<Probability>,
        #[serde(default = "one")]
        count: usize,
    },
    /// Rows replayed from a human-data CSV (path relative to the scenario).
    Replay {
        data: PathBuf,
        #[serde(default = "one")]
        count: usize,
    },
    /// A human expert policy that hands over to an LLM agent with
    /// probability `rate`.
    Delegating {
        rate: Probability,
        human: Box<ExpertSpec>,
        #[serde(default)]
        objective_shares: Option<BTreeMap<Objective, Probability>>,
        #[serde(default = "one")]
        count: usize,
    },
}

impl ExpertSpec {
    pub fn count(&self) -> usize {
        match self {
            ExpertSpec::Scripted { count, .. }
            | ExpertSpec::Rational { count, .. }
            | ExpertSpec::Mixture { count, .. }
            | ExpertSpec::Replay { count, .. }
            | ExpertSpec::Delegating { count, .. } => *count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConsumerSpec {
    Threshold {
        #[serde(default)]
        belief: BaseBelief,
        #[serde(default)]
        tie_break: TieBreak,
        #[serde(default = "one")]
        count: usize,
    },
    TransparencyAware {
        #[serde(default)]
        belief: BaseBelief,
        #[serde(default)]
        tie_break: TieBreak,
        #[serde(default = "one")]
        count: usize,
    },
    Trust {
        #[serde(default)]
        rates: TrustRates,
        #[serde(default)]
        tie_break: TieBreak,
        #[serde(default = "one")]
        count: usize,
    },
    Replay {
        data: PathBuf,
        #[serde(default = "one")]
        count: usize,
    },
}

impl ConsumerSpec {
    pub fn count(&self) -> usize {
        match self {
            ConsumerSpec::Threshold { count, .. }
            | ConsumerSpec::TransparencyAware { count, .. }
            | ConsumerSpec::Trust { count, .. }
            | ConsumerSpec::Replay { count, .. } => *count,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub efficiency: EfficiencyMode,
    pub surplus: SurplusMode,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            efficiency: EfficiencyMode::Realized,
            surplus: SurplusMode::GroupTotal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Output directory, relative to the scenario file.
    pub dir: Option<PathBuf>,
    pub formats: Vec<OutputFormat>,
    /// Also write one JSON line per replicate.
    pub digests: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: None,
            formats: vec![OutputFormat::Csv, OutputFormat::Json],
            digests: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(default, alias = "institution")]
    pub institutions: Institutions,
    #[serde(default)]
    pub transparent: bool,
    #[serde(default)]
    pub objective_regime: ObjectiveRegime,
    #[serde(default = "default_reps")]
    pub reps: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub params: MarketParams,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub output: OutputConfig,
    pub experts: Vec<ExpertSpec>,
    pub consumers: Vec<ConsumerSpec>,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn field(path: &Path, field: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Field {
        path: path.to_path_buf(),
        field: field.into(),
        message: message.into(),
    }
}

/// Reads, parses and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<ScenarioSpec, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut spec = parse_scenario(&text, path)?;
    spec.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(spec)
}

/// Parses scenario text; `origin` is used in diagnostics only.
pub fn parse_scenario(text: &str, origin: &Path) -> Result<ScenarioSpec, ScenarioError> {
    let spec: ScenarioSpec = toml::from_str(text).map_err(|e| ScenarioError::Syntax {
        path: origin.to_path_buf(),
        message: e.to_string().trim_end().to_string(),
    })?;
    spec.validate(origin)?;
    Ok(spec)
}

impl ScenarioSpec {
    /// Checks everything that can be checked without reading data files.
    pub fn validate(&self, origin: &Path) -> Result<(), ScenarioError> {
        self.params
            .validate()
            .map_err(|e| field(origin, "params", e.to_string()))?;
        if self.institutions.list().is_empty() {
            return Err(field(
                origin,
                "institutions",
                "at least one institution is required",
            ));
        }
        if self.reps == 0 {
            return Err(field(origin, "reps", "must be at least 1"));
        }
        let experts: usize = self.experts.iter().map(ExpertSpec::count).sum();
        if experts != self.params.n_experts {
            return Err(field(
                origin,
                "experts",
                format!(
                    "counts add up to {experts}, but the market has {} experts",
                    self.params.n_experts
                ),
            ));
        }
        let consumers: usize = self.consumers.iter().map(ConsumerSpec::count).sum();
        if consumers != self.params.n_consumers {
            return Err(field(
                origin,
                "consumers",
                format!(
                    "counts add up to {consumers}, but the market has {} consumers",
                    self.params.n_consumers
                ),
            ));
        }
        for (i, e) in self.experts.iter().enumerate() {
            self.validate_expert(origin, &format!("experts[{i}]"), e, false)?;
        }
        for (i, c) in self.consumers.iter().enumerate() {
            if c.count() == 0 {
                return Err(field(
                    origin,
                    format!("consumers[{i}].count"),
                    "must be at least 1",
                ));
            }
        }
        Ok(())
    }

    fn validate_expert(
        &self,
        origin: &Path,
        at: &str,
        spec: &ExpertSpec,
        nested: bool,
    ) -> Result<(), ScenarioError> {
        if !nested && spec.count() == 0 {
            return Err(field(origin, format!("{at}.count"), "must be at least 1"));
        }
        match spec {
            ExpertSpec::Scripted {
                source: LlmSource::Delegated(o),
                ..
            } if !self.objective_regime.permits(*o) => Err(field(
                origin,
                format!("{at}.source"),
                format!(
                    "objective {o} is not available under {:?}",
                    self.objective_regime
                ),
            )),
            ExpertSpec::Scripted { .. } | ExpertSpec::Replay { .. } => Ok(()),
            ExpertSpec::Rational {
                objective, prices, ..
            } => {
                if *objective == Objective::NoObjective {
                    return Err(field(
                        origin,
                        format!("{at}.objective"),
                        "no_objective has no best response",
                    ));
                }
                if let Some(p) = prices {
                    let grid = format!("{}..={}", self.params.price_min, self.params.price_max);
                    for (name, value) in [("low", p.low), ("high", p.high)] {
                        if !(self.params.price_min..=self.params.price_max).contains(&value) {
                            return Err(field(
                                origin,
                                format!("{at}.prices.{name}"),
                                format!("{value} is outside the price grid {grid}"),
                            ));
                        }
                    }
                    p.validate(&self.params)
                        .map_err(|e| field(origin, format!("{at}.prices"), e.to_string()))?;
                }
                Ok(())
            }
            ExpertSpec::Mixture {
                fraud,
                slot_fraud_rate,
                ..
            } => {
                if fraud.is_some() && slot_fraud_rate.is_some() {
                    return Err(field(
                        origin,
                        at,
                        "give either `fraud` or `slot_fraud_rate`, not both",
                    ));
                }
                if let Some(f) = fraud {
                    f.validate()
                        .map_err(|e| field(origin, format!("{at}.fraud"), e.to_string()))?;
                }
                Ok(())
            }
            ExpertSpec::Delegating {
                human,
                objective_shares,
                ..
            } => {
                if nested
                    || matches!(
                        **human,
                        ExpertSpec::Delegating { .. } | ExpertSpec::Replay { .. }
                    )
                {
                    return Err(field(
                        origin,
                        format!("{at}.human"),
                        "must be a scripted, rational or mixture policy",
                    ));
                }
                self.validate_expert(origin, &format!("{at}.human"), human, true)?;
                if let Some(shares) = objective_shares {
                    for (o, p) in shares {
                        if !p.is_zero() && !self.objective_regime.permits(*o) {
                            return Err(field(
                                origin,
                                format!("{at}.objective_shares.{o}"),
                                format!(
                                    "objective {o} is not available under {:?}",
                                    self.objective_regime
                                ),
                            ));
                        }
                    }
                    let sum: num_rational::Ratio<i64> = shares.values().map(|p| p.value()).sum();
                    if sum != num_rational::Ratio::from_integer(1) {
                        return Err(field(
                            origin,
                            format!("{at}.objective_shares"),
                            format!("shares sum to {sum}, not 1"),
                        ));
                    }
                }
                Ok(())
            }
        }
    }

    fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    fn load_data(
        &self,
        cache: &mut BTreeMap<PathBuf, HumanData>,
        at: &str,
        path: &Path,
    ) -> Result<HumanData, ScenarioError> {
        let full = self.resolve(path);
        if let Some(d) = cache.get(&full) {
            return Ok(d.clone());
        }
        let data = ingest_human_csv(&full, &self.params)
            .map_err(|e| field(&full, format!("{at}.data"), e.to_string()))?;
        cache.insert(full, data.clone());
        Ok(data)
    }

    fn expert_policy(
        &self,
        at: &str,
        spec: &ExpertSpec,
        cache: &mut BTreeMap<PathBuf, HumanData>,
    ) -> Result<ExpertPolicy, ScenarioError> {
        let origin = self.base_dir.join(&self.name);
        Ok(match spec {
            ExpertSpec::Scripted { source, .. } => {
                let mut p = ExpertPolicy::scripted(scripted_llm_profile(*source));
                p.delegated = matches!(source, LlmSource::Delegated(_));
                p
            }
            ExpertSpec::Rational {
                objective, prices, ..
            } => {
                let choice = match prices {
                    Some(p) => PriceChoice::Fixed(*p),
                    None => PriceChoice::Predicted {
                        transparent: self.transparent,
                    },
                };
                ExpertPolicy::rational(*objective, choice)
                    .map_err(|e| field(&origin, at, e.to_string()))?
            }
            ExpertSpec::Mixture {
                fraud,
                slot_fraud_rate,
                ..
            } => {
                let fraud = match (fraud, slot_fraud_rate) {
                    (Some(f), _) => *f,
                    (None, Some(r)) => FraudSpec::uniform(*r),
                    (None, None) => FraudSpec::uniform(human_slot_fraud_rate()),
                };
                let mixture =
                    behavioral_mixture(fraud).map_err(|e| field(&origin, at, e.to_string()))?;
                ExpertPolicy::mixture(mixture)
            }
            ExpertSpec::Replay { data, .. } => {
                let data = self.load_data(cache, at, data)?;
                ExpertPolicy::replay(data.expert_pool(self.seed, self.params.n_experts))
            }
            ExpertSpec::Delegating {
                rate,
                human,
                objective_shares,
                ..
            } => {
                let human = self.expert_policy(&format!("{at}.human"), human, cache)?;
                let objective_shares = match objective_shares {
                    Some(s) => s.iter().map(|(o, p)| (*o, *p)).collect(),
                    None => default_objective_shares(),
                };
                let spec = DelegationSpec {
                    human,
                    rate: *rate,
                    regime: self.objective_regime,
                    objective_shares,
                };
                spec.validate()
                    .map_err(|e| field(&origin, at, e.to_string()))?;
                ExpertPolicy::delegating(spec)
            }
        })
    }

    fn consumer_policy(
        &self,
        at: &str,
        spec: &ConsumerSpec,
        cache: &mut BTreeMap<PathBuf, HumanData>,
    ) -> Result<ConsumerPolicy, ScenarioError> {
        Ok(match spec {
            ConsumerSpec::Threshold {
                belief, tie_break, ..
            } => ConsumerPolicy::threshold((*belief).into()).with_tie_break(*tie_break),
            ConsumerSpec::TransparencyAware {
                belief, tie_break, ..
            } => ConsumerPolicy::transparency_aware((*belief).into()).with_tie_break(*tie_break),
            ConsumerSpec::Trust {
                rates, tie_break, ..
            } => ConsumerPolicy::trust(*rates).with_tie_break(*tie_break),
            ConsumerSpec::Replay { data, .. } => {
                let data = self.load_data(cache, at, data)?;
                ConsumerPolicy::replay(data.consumer_pool(self.seed, self.params.n_consumers))
            }
        })
    }

    /// One market cell per institution, with data files loaded.
    pub fn cells(&self) -> Result<Vec<MarketCell>, ScenarioError> {
        let mut cache = BTreeMap::new();
        let mut experts = Vec::new();
        for (i, spec) in self.experts.iter().enumerate() {
            let policy = self.expert_policy(&format!("experts[{i}]"), spec, &mut cache)?;
            experts.extend(std::iter::repeat_n(policy, spec.count()));
        }
        let mut consumers = Vec::new();
        for (i, spec) in self.consumers.iter().enumerate() {
            let policy = self.consumer_policy(&format!("consumers[{i}]"), spec, &mut cache)?;
            consumers.extend(std::iter::repeat_n(policy, spec.count()));
        }
        Ok(self
            .institutions
            .list()
            .into_iter()
            .map(|institution| MarketCell {
                label: format!("{}/{}", self.name, institution.label()),
                params: self.params.clone(),
                institution,
                transparent: self.transparent,
                experts: experts.clone(),
                consumers: consumers.clone(),
            })
            .collect())
    }

    /// Output directory, resolved against the scenario location.
    pub fn output_dir(&self) -> PathBuf {
        self.resolve(
            self.output
                .dir
                .as_deref()
                .unwrap_or_else(|| Path::new("results")),
        )
    }
}

/// Replications of one market cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationReport {
    pub label: String,
    pub institution: Institution,
    pub transparent: bool,
    pub n_reps: u64,
    pub seed: u64,
    pub metrics: MetricSet,
    #[serde(skip)]
    pub digests: Vec<MarketOutcome>,
}

impl ReplicationReport {
    /// Recomputes the aggregate from the stored digests.
    pub fn recompute(&self, params: &MarketParams) -> MetricSet {
        summarize(
            &self.digests,
            params,
            self.metrics.efficiency_mode,
            self.metrics.surplus.mode,
        )
    }
}

/// Runs `n` replications of one cell.
pub fn run_replications(
    cell: &MarketCell,
    n: u64,
    seed: u64,
    metrics: MetricsConfig,
) -> Result<ReplicationReport, EngineError> {
    let digests = run_cell(cell, n, seed)?;
    let metrics = summarize(&digests, &cell.params, metrics.efficiency, metrics.surplus);
    Ok(ReplicationReport {
        label: cell.label.clone(),
        institution: cell.institution,
        transparent: cell.transparent,
        n_reps: n,
        seed,
        metrics,
        digests,
    })
}

/// Runs every cell of a scenario with its configured reps and seed.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<Vec<ReplicationReport>, ScenarioRunError> {
    spec.cells()?
        .iter()
        .map(|cell| {
            run_replications(cell, spec.reps, spec.seed, spec.metrics)
                .map_err(ScenarioRunError::from)
        })
        .collect()
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioRunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}
