//! One-round interactive markets with a single human participant.
//!
//! A session walks `AwaitingExpertSetup → OffersPosted →
//! AwaitingConsumerChoice → Resolved`, one step at a time. The human plays
//! one consumer or one expert; every other seat is filled by the cell's
//! configured policies. Outcomes are revealed only once resolved, and
//! consumer-facing views never mention objectives unless the market is
//! transparent.

use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{
    choose_all, offers_from, resolve_market, validate_decision, MarketCell, MarketOutcome,
    MarketStreams, StreamPurpose,
};
use crate::error::{EngineError, SessionError};
use crate::llm::client::ChatClient;
use crate::llm::driver::{run_llm_expert, LlmExpertConfig, LlmExpertOutcome};
use crate::llm::prompts::{disclosure_text, objective_sentence, RoleFraming};
use crate::llm::transcript::TranscriptWriter;
use crate::model::{
    legal_actions, ExpertAction, ExpertOffer, Institution, Objective, PricePair, ProblemType,
};
use crate::money::Money;
use crate::policy::{
    scripted_llm_profile, ActionRule, Choice, DecisionContext, DelegationChoice, ExpertDecision,
    ExpertStrategy, LlmSource, ObjectiveRegime,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    AwaitingExpertSetup,
    OffersPosted,
    AwaitingConsumerChoice,
    Resolved,
}

impl Phase {
    pub const ORDER: [Phase; 4] = [
        Phase::AwaitingExpertSetup,
        Phase::OffersPosted,
        Phase::AwaitingConsumerChoice,
        Phase::Resolved,
    ];

    pub fn next(self) -> Option<Phase> {
        Phase::ORDER
            .iter()
            .position(|p| *p == self)
            .and_then(|i| Phase::ORDER.get(i + 1).copied())
    }

    pub fn label(self) -> &'static str {
        match self {
            Phase::AwaitingExpertSetup => "awaiting_expert_setup",
            Phase::OffersPosted => "offers_posted",
            Phase::AwaitingConsumerChoice => "awaiting_consumer_choice",
            Phase::Resolved => "resolved",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HumanRole {
    Consumer,
    Expert,
}

impl HumanRole {
    fn label(self) -> &'static str {
        match self {
            HumanRole::Consumer => "consumer",
            HumanRole::Expert => "expert",
        }
    }
}

/// Acts for a human expert who delegated.
pub trait DelegateAgent: Send + Sync {
    fn decide(
        &self,
        objective: Objective,
        ctx: &DecisionContext<'_>,
        rng: &mut ChaCha8Rng,
    ) -> Result<ExpertDecision, SessionError>;
}

/// Plays the scripted behavior observed for delegated LLM agents.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptedDelegate;

impl DelegateAgent for ScriptedDelegate {
    fn decide(
        &self,
        objective: Objective,
        ctx: &DecisionContext<'_>,
        rng: &mut ChaCha8Rng,
    ) -> Result<ExpertDecision, SessionError> {
        let source = LlmSource::Delegated(objective);
        let strategy =
            scripted_llm_profile(source).sample(ctx.institution, ctx.params.n_consumers, rng);
        Ok(ExpertDecision {
            strategy,
            delegated: true,
            objective: Some(objective),
            source: format!("llm:{objective}"),
        })
    }
}

/// Runs a live LLM agent through the full expert protocol.
pub struct LiveDelegate {
    pub client: Arc<dyn ChatClient>,
    /// Model, template and retry settings; institution, objective and
    /// framing are set per session.
    pub template: LlmExpertConfig,
    pub log: Option<Arc<TranscriptWriter>>,
}

impl DelegateAgent for LiveDelegate {
    fn decide(
        &self,
        objective: Objective,
        ctx: &DecisionContext<'_>,
        _rng: &mut ChaCha8Rng,
    ) -> Result<ExpertDecision, SessionError> {
        let mut cfg = self.template.clone();
        cfg.session = format!("{}-{}", self.template.session, ctx.rep);
        cfg.institution = ctx.institution;
        cfg.objective = objective;
        cfg.framing = RoleFraming::HumanAi;
        cfg.params = ctx.params.clone();
        let run = run_llm_expert(&cfg, self.client.as_ref(), self.log.as_deref())?;
        match run.outcome {
            LlmExpertOutcome::Completed { strategy, .. } => Ok(ExpertDecision {
                strategy,
                delegated: true,
                objective: Some(objective),
                source: format!("llm:{objective}"),
            }),
            LlmExpertOutcome::Disqualified { .. } => Err(SessionError::Setup(
                "the LLM agent failed the comprehension check".into(),
            )),
        }
    }
}

/// Market seats and rules shared by every session of one kind.
#[derive(Clone)]
pub struct SessionConfig {
    pub cell: MarketCell,
    pub objective_regime: ObjectiveRegime,
    /// Seat taken by the human, among experts or consumers.
    pub human_index: usize,
    pub delegate: Arc<dyn DelegateAgent>,
}

impl fmt::Debug for SessionConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SessionConfig")
            .field("cell", &self.cell.label)
            .field("objective_regime", &self.objective_regime)
            .field("human_index", &self.human_index)
            .finish_non_exhaustive()
    }
}

impl SessionConfig {
    pub fn new(cell: MarketCell, objective_regime: ObjectiveRegime) -> Self {
        SessionConfig {
            cell,
            objective_regime,
            human_index: 0,
            delegate: Arc::new(ScriptedDelegate),
        }
    }

    fn check(&self) -> Result<(), SessionError> {
        let p = &self.cell.params;
        if self.cell.experts.len() != p.n_experts || self.cell.consumers.len() != p.n_consumers {
            return Err(SessionError::Setup(format!(
                "cell {} needs {} experts and {} consumers",
                self.cell.label, p.n_experts, p.n_consumers
            )));
        }
        if self.human_index >= p.n_experts.min(p.n_consumers) {
            return Err(SessionError::Setup(format!(
                "human seat {} does not exist",
                self.human_index
            )));
        }
        Ok(())
    }
}

/// What a human expert submits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ExpertSubmission {
    /// Hand every decision to the LLM agent; `objective` is required when
    /// objectives are chosen and optional (self-interested) otherwise.
    Delegate {
        #[serde(default)]
        objective: Option<Objective>,
    },
    /// Own prices and one action per problem type, applied to every
    /// consumer who approaches.
    Own {
        prices: PricePair,
        small: ExpertAction,
        big: ExpertAction,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectiveOption {
    pub objective: Objective,
    /// The prompt the agent would receive; empty for no objective.
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LegalActions {
    pub small: Vec<ExpertAction>,
    pub big: Vec<ExpertAction>,
}

/// Setup information shown only to a human expert.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertSetupView {
    pub objective_regime: ObjectiveRegime,
    pub objective_choices: Vec<ObjectiveOption>,
    pub legal_actions: LegalActions,
    pub price_min: i64,
    pub price_max: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub role: HumanRole,
    pub phase: Phase,
    pub institution: Institution,
    pub transparent: bool,
    /// Zero-based seat of the human.
    pub seat: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expert_setup: Option<ExpertSetupView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OfferView {
    pub expert: usize,
    pub label: String,
    pub price_low: i64,
    pub price_high: i64,
    pub delegated: bool,
    /// Prompted objective of a delegated expert, in transparent markets only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<String>,
}

impl OfferView {
    fn from_offer(offer: &ExpertOffer) -> Self {
        OfferView {
            expert: offer.expert_index,
            label: format!("Player A{}", offer.expert_index + 1),
            price_low: offer.prices.low,
            price_high: offer.prices.high,
            delegated: offer.delegated,
            objective: offer
                .disclosed_objective
                .map(|o| disclosure_text(o).to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Treated {
    pub expert: usize,
    pub problem: ProblemType,
    pub action: ExpertAction,
    pub price_paid: Money,
    pub solved: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServedConsumer {
    pub consumer: usize,
    pub problem: ProblemType,
    pub action: ExpertAction,
    pub charged: Money,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "role")]
pub enum OutcomeView {
    Consumer {
        choice: Choice,
        /// Present when the consumer approached an expert.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        treated: Option<Treated>,
        payoff: Money,
    },
    Expert {
        delegated: bool,
        prices: PricePair,
        visits: usize,
        served: Vec<ServedConsumer>,
        payoff: Money,
    },
}

/// A phase change, pushed to listeners.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseEvent {
    pub session_id: String,
    pub seq: usize,
    pub phase: Phase,
}

/// Persisted record of a resolved session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionDigest {
    pub session_id: String,
    pub cell: String,
    pub role: HumanRole,
    pub seat: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delegation: Option<DelegationChoice>,
    pub outcome: MarketOutcome,
}

#[derive(Debug)]
pub struct Session {
    id: String,
    role: HumanRole,
    config: Arc<SessionConfig>,
    streams: MarketStreams,
    phase: Phase,
    history: Vec<Phase>,
    decisions: Vec<ExpertDecision>,
    delegation: Option<DelegationChoice>,
    outcome: Option<MarketOutcome>,
}

impl Session {
    /// Opens a session. Consumer sessions fill every expert seat at once
    /// and open in `OffersPosted`.
    pub fn new(
        id: impl Into<String>,
        role: HumanRole,
        config: Arc<SessionConfig>,
        seed: u64,
        rep: u64,
    ) -> Result<Self, SessionError> {
        config.check()?;
        let mut session = Session {
            id: id.into(),
            role,
            config,
            streams: MarketStreams::new(seed, rep),
            phase: Phase::AwaitingExpertSetup,
            history: vec![Phase::AwaitingExpertSetup],
            decisions: Vec::new(),
            delegation: None,
            outcome: None,
        };
        if role == HumanRole::Consumer {
            session.decisions = session.fill_experts(None)?;
            session.advance(Phase::OffersPosted);
        }
        Ok(session)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn role(&self) -> HumanRole {
        self.role
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Every phase entered so far, in order.
    pub fn history(&self) -> &[Phase] {
        &self.history
    }

    /// Events for phases entered after the first `seen`.
    pub fn events_since(&self, seen: usize) -> Vec<PhaseEvent> {
        self.history
            .iter()
            .enumerate()
            .skip(seen)
            .map(|(seq, phase)| PhaseEvent {
                session_id: self.id.clone(),
                seq,
                phase: *phase,
            })
            .collect()
    }

    fn advance(&mut self, to: Phase) {
        debug_assert_eq!(self.phase.next(), Some(to), "phase skipped");
        self.phase = to;
        self.history.push(to);
    }

    fn require(&self, action: &'static str, allowed: &[Phase]) -> Result<(), SessionError> {
        if allowed.contains(&self.phase) {
            return Ok(());
        }
        Err(SessionError::OutOfPhase {
            action,
            phase: self.phase.to_string(),
            allowed: allowed
                .iter()
                .map(|p| p.label())
                .collect::<Vec<_>>()
                .join(", "),
        })
    }

    fn require_role(&self, action: &'static str, role: HumanRole) -> Result<(), SessionError> {
        if self.role == role {
            Ok(())
        } else {
            Err(SessionError::WrongRole {
                action,
                role: role.label(),
            })
        }
    }

    fn ctx(&self, agent: usize) -> DecisionContext<'_> {
        let cell = &self.config.cell;
        DecisionContext {
            params: &cell.params,
            institution: cell.institution,
            rep: self.streams.rep,
            agent,
        }
    }

    /// Decisions for every expert seat; the human's seat takes `human`.
    fn fill_experts(
        &self,
        human: Option<ExpertDecision>,
    ) -> Result<Vec<ExpertDecision>, SessionError> {
        let cell = &self.config.cell;
        let mut human = human;
        let mut out = Vec::with_capacity(cell.experts.len());
        for (i, policy) in cell.experts.iter().enumerate() {
            let decision = match human.take_if(|_| i == self.config.human_index) {
                Some(d) => d,
                None => policy.decide(
                    &self.ctx(i),
                    &mut self.streams.stream(StreamPurpose::Expert, i),
                )?,
            };
            validate_decision(&cell.params, cell.institution, i, &decision)?;
            out.push(decision);
        }
        Ok(out)
    }

    pub fn view(&self) -> SessionView {
        let cell = &self.config.cell;
        let expert_setup = (self.role == HumanRole::Expert).then(|| ExpertSetupView {
            objective_regime: self.config.objective_regime,
            objective_choices: self
                .config
                .objective_regime
                .choices()
                .into_iter()
                .map(|objective| ObjectiveOption {
                    objective,
                    prompt: objective_sentence(objective).to_string(),
                })
                .collect(),
            legal_actions: LegalActions {
                small: legal_actions(cell.institution, ProblemType::Small),
                big: legal_actions(cell.institution, ProblemType::Big),
            },
            price_min: cell.params.price_min,
            price_max: cell.params.price_max,
        });
        SessionView {
            session_id: self.id.clone(),
            role: self.role,
            phase: self.phase,
            institution: cell.institution,
            transparent: cell.transparent,
            seat: self.config.human_index,
            expert_setup,
        }
    }

    /// The human expert's delegation choice or own decisions; resolves the
    /// market, since every consumer is simulated.
    pub fn submit_expert(&mut self, submission: ExpertSubmission) -> Result<(), SessionError> {
        self.require_role("expert setup", HumanRole::Expert)?;
        self.require("expert setup", &[Phase::AwaitingExpertSetup])?;
        let cell = &self.config.cell;
        let seat = self.config.human_index;
        let (decision, delegation) = match submission {
            ExpertSubmission::Delegate { objective } => {
                let regime = self.config.objective_regime;
                let objective = match (regime, objective) {
                    (ObjectiveRegime::FixedSelfInterested, None) => Objective::SelfInterested,
                    (ObjectiveRegime::ChosenObjective, None) => {
                        return Err(SessionError::Illegal(
                            "choose one of the objective prompts".into(),
                        ))
                    }
                    (_, Some(o)) if !regime.permits(o) => {
                        return Err(SessionError::Illegal(format!(
                            "objective {o} is not available in this market"
                        )))
                    }
                    (_, Some(o)) => o,
                };
                let decision = self.config.delegate.decide(
                    objective,
                    &self.ctx(seat),
                    &mut self.streams.stream(StreamPurpose::Session, seat),
                )?;
                let chosen = (regime == ObjectiveRegime::ChosenObjective).then_some(objective);
                (decision, DelegationChoice::delegate(chosen))
            }
            ExpertSubmission::Own { prices, small, big } => {
                prices
                    .validate(&cell.params)
                    .map_err(|e| SessionError::Illegal(e.to_string()))?;
                let rule = ActionRule { small, big };
                rule.validate(cell.institution)
                    .map_err(|e| SessionError::Illegal(e.to_string()))?;
                let decision = ExpertDecision {
                    strategy: ExpertStrategy::uniform(prices, rule, cell.params.n_consumers),
                    delegated: false,
                    objective: None,
                    source: "human".into(),
                };
                (decision, DelegationChoice::keep())
            }
        };
        let decisions = self.fill_experts(Some(decision)).map_err(|e| match e {
            SessionError::Engine(EngineError::IllegalExpertAction { expert, source })
                if expert == seat =>
            {
                SessionError::Illegal(source.to_string())
            }
            other => other,
        })?;
        self.decisions = decisions;
        self.delegation = Some(delegation);
        self.advance(Phase::OffersPosted);
        self.advance(Phase::AwaitingConsumerChoice);
        let choices = self.simulated_choices(None)?;
        self.resolve(&choices)
    }

    /// Offers as consumers see them.
    pub fn offers(&self) -> Result<Vec<OfferView>, SessionError> {
        self.require(
            "viewing offers",
            &[
                Phase::OffersPosted,
                Phase::AwaitingConsumerChoice,
                Phase::Resolved,
            ],
        )?;
        Ok(offers_from(&self.decisions, self.config.cell.transparent)
            .iter()
            .map(OfferView::from_offer)
            .collect())
    }

    /// The human consumer's approach choice; resolves the market.
    pub fn choose(&mut self, choice: Choice) -> Result<(), SessionError> {
        self.require_role("approach choice", HumanRole::Consumer)?;
        self.require("approach choice", &[Phase::OffersPosted])?;
        if let Choice::Approach(i) = choice {
            if i >= self.decisions.len() {
                return Err(SessionError::Illegal(format!(
                    "there is no expert {i}; choose 0..{} or opt out",
                    self.decisions.len() - 1
                )));
            }
        }
        self.advance(Phase::AwaitingConsumerChoice);
        let choices = self.simulated_choices(Some(choice))?;
        self.resolve(&choices)
    }

    fn simulated_choices(&self, human: Option<Choice>) -> Result<Vec<Choice>, SessionError> {
        let cell = &self.config.cell;
        let offers = offers_from(&self.decisions, cell.transparent);
        let mut choices = choose_all(
            &cell.params,
            cell.institution,
            &cell.consumers,
            &offers,
            &self.streams,
        )?;
        if let Some(choice) = human {
            choices[self.config.human_index] = choice;
        }
        Ok(choices)
    }

    fn resolve(&mut self, choices: &[Choice]) -> Result<(), SessionError> {
        let cell = &self.config.cell;
        let mut outcome = resolve_market(
            &cell.params,
            cell.institution,
            cell.transparent,
            &self.decisions,
            choices,
            &self.streams,
        )?;
        outcome.sources = self.decisions.iter().map(|d| d.source.clone()).collect();
        self.outcome = Some(outcome);
        self.advance(Phase::Resolved);
        Ok(())
    }

    /// The human's own result; available only once resolved.
    pub fn outcome(&self) -> Result<OutcomeView, SessionError> {
        self.require("viewing the outcome", &[Phase::Resolved])?;
        let outcome = self
            .outcome
            .as_ref()
            .expect("resolved sessions have an outcome");
        let seat = self.config.human_index;
        Ok(match self.role {
            HumanRole::Consumer => OutcomeView::Consumer {
                choice: outcome.choices[seat],
                treated: outcome.interactions[seat].map(|i| {
                    let problem = outcome.problems[seat];
                    Treated {
                        expert: i.expert,
                        problem,
                        action: i.action,
                        price_paid: outcome.offers[i.expert].prices.price(i.action.tier),
                        solved: i.action.treatment.solves(problem),
                    }
                }),
                payoff: outcome.consumer_payoffs[seat],
            },
            HumanRole::Expert => {
                let prices = outcome.offers[seat].prices;
                let served: Vec<ServedConsumer> = outcome
                    .interactions
                    .iter()
                    .enumerate()
                    .filter_map(|(j, i)| i.filter(|i| i.expert == seat).map(|i| (j, i)))
                    .map(|(j, i)| ServedConsumer {
                        consumer: j,
                        problem: outcome.problems[j],
                        action: i.action,
                        charged: prices.price(i.action.tier),
                    })
                    .collect();
                OutcomeView::Expert {
                    delegated: outcome.offers[seat].delegated,
                    prices,
                    visits: served.len(),
                    served,
                    payoff: outcome.expert_payoffs[seat],
                }
            }
        })
    }

    /// Persistable record; `None` until resolved.
    pub fn digest(&self) -> Option<SessionDigest> {
        self.outcome.as_ref().map(|outcome| SessionDigest {
            session_id: self.id.clone(),
            cell: self.config.cell.label.clone(),
            role: self.role,
            seat: self.config.human_index,
            seed: self.streams.seed,
            delegation: self.delegation,
            outcome: outcome.clone(),
        })
    }
}

/// Append-only newline-delimited JSON log of resolved sessions.
#[derive(Debug)]
pub struct DigestLog {
    path: PathBuf,
    file: Mutex<File>,
}

impl DigestLog {
    pub fn open(path: &Path) -> Result<Self, SessionError> {
        let io = |source| SessionError::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io)?;
        Ok(DigestLog {
            path: path.to_path_buf(),
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, digest: &SessionDigest) -> Result<(), SessionError> {
        let mut line =
            serde_json::to_string(digest).map_err(|e| SessionError::Setup(e.to_string()))?;
        line.push('\n');
        let mut file = self.file.lock().expect("digest log");
        file.write_all(line.as_bytes())
            .map_err(|source| SessionError::Io {
                path: self.path.clone(),
                source,
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{ConsumerPolicy, ExpertPolicy};
    use crate::{BeliefModel, MarketParams, Tier, Treatment};
    use proptest::prelude::*;

    fn cell(institution: Institution, transparent: bool) -> MarketCell {
        let params = MarketParams::default();
        MarketCell {
            label: "test".into(),
            institution,
            transparent,
            experts: vec![
                ExpertPolicy::scripted(scripted_llm_profile(LlmSource::Delegated(
                    Objective::SelfInterested
                )));
                4
            ]
            .into_iter()
            .map(|p| ExpertPolicy {
                delegated: true,
                ..p
            })
            .collect(),
            consumers: vec![ConsumerPolicy::threshold(BeliefModel::StandardSelfInterest); 4],
            params,
        }
    }

    fn config(
        institution: Institution,
        transparent: bool,
        regime: ObjectiveRegime,
    ) -> Arc<SessionConfig> {
        Arc::new(SessionConfig::new(cell(institution, transparent), regime))
    }

    const OBJECTIVE_STRINGS: [&str; 8] = [
        "maximize Player A's payoff",
        "fairness",
        "total payoff",
        "own payoff",
        "self_interested",
        "inequity_averse",
        "efficiency_loving",
        "no_objective",
    ];

    #[test]
    fn transparent_offers_disclose_the_fixed_objective() {
        let s = Session::new(
            "c1",
            HumanRole::Consumer,
            config(
                Institution::NoInstitution,
                true,
                ObjectiveRegime::FixedSelfInterested,
            ),
            1,
            0,
        )
        .unwrap();
        assert_eq!(s.phase(), Phase::OffersPosted);
        let offers = s.offers().unwrap();
        assert_eq!(offers.len(), 4);
        for o in &offers {
            assert!(o.delegated);
            assert_eq!(o.objective.as_deref(), Some("maximize Player A's payoff"));
        }
    }

    #[test]
    fn opaque_payloads_never_mention_objectives() {
        let mut s = Session::new(
            "c2",
            HumanRole::Consumer,
            config(
                Institution::NoInstitution,
                false,
                ObjectiveRegime::FixedSelfInterested,
            ),
            1,
            0,
        )
        .unwrap();
        let mut payloads = vec![
            serde_json::to_string(&s.view()).unwrap(),
            serde_json::to_string(&s.offers().unwrap()).unwrap(),
        ];
        s.choose(Choice::Approach(0)).unwrap();
        payloads.push(serde_json::to_string(&s.outcome().unwrap()).unwrap());
        payloads.push(serde_json::to_string(&s.events_since(0)).unwrap());
        for text in payloads {
            for needle in OBJECTIVE_STRINGS {
                assert!(!text.contains(needle), "{needle} leaked in {text}");
            }
        }
    }

    #[test]
    fn opting_out_pays_the_outside_option() {
        let mut s = Session::new(
            "c3",
            HumanRole::Consumer,
            config(
                Institution::Liability,
                false,
                ObjectiveRegime::FixedSelfInterested,
            ),
            9,
            3,
        )
        .unwrap();
        assert!(s.outcome().is_err());
        s.choose(Choice::OptOut).unwrap();
        let out = s.outcome().unwrap();
        assert!(
            matches!(out, OutcomeView::Consumer { payoff, treated: None, .. } if payoff == Money::from_cents(160))
        );
        let json = serde_json::to_value(&out).unwrap();
        assert_eq!(json["payoff"], serde_json::json!(1.6));
        assert_eq!(s.history(), &Phase::ORDER);
    }

    #[test]
    fn chosen_objective_offers_four_prompts() {
        let s = Session::new(
            "e1",
            HumanRole::Expert,
            config(
                Institution::Liability,
                true,
                ObjectiveRegime::ChosenObjective,
            ),
            1,
            0,
        )
        .unwrap();
        let setup = s.view().expert_setup.unwrap();
        assert_eq!(setup.objective_choices.len(), 4);
        let fixed = Session::new(
            "e2",
            HumanRole::Expert,
            config(
                Institution::Liability,
                true,
                ObjectiveRegime::FixedSelfInterested,
            ),
            1,
            0,
        )
        .unwrap();
        assert_eq!(
            fixed.view().expert_setup.unwrap().objective_choices.len(),
            1
        );
    }

    #[test]
    fn illegal_expert_submissions_are_explained() {
        let mut s = Session::new(
            "e3",
            HumanRole::Expert,
            config(
                Institution::Liability,
                false,
                ObjectiveRegime::ChosenObjective,
            ),
            1,
            0,
        )
        .unwrap();
        let lct_low = ExpertAction::new(Treatment::Lct, Tier::Low);
        let hct_high = ExpertAction::new(Treatment::Hct, Tier::High);
        let bad = ExpertSubmission::Own {
            prices: PricePair { low: 4, high: 8 },
            small: lct_low,
            big: lct_low,
        };
        assert!(matches!(
            s.submit_expert(bad),
            Err(SessionError::Illegal(_))
        ));
        let bad_price = ExpertSubmission::Own {
            prices: PricePair { low: 4, high: 12 },
            small: lct_low,
            big: hct_high,
        };
        assert!(matches!(
            s.submit_expert(bad_price),
            Err(SessionError::Illegal(_))
        ));
        assert!(matches!(
            s.submit_expert(ExpertSubmission::Delegate { objective: None }),
            Err(SessionError::Illegal(_))
        ));
        assert_eq!(s.phase(), Phase::AwaitingExpertSetup);
        s.submit_expert(ExpertSubmission::Own {
            prices: PricePair { low: 4, high: 8 },
            small: lct_low,
            big: hct_high,
        })
        .unwrap();
        assert_eq!(s.phase(), Phase::Resolved);
        let OutcomeView::Expert {
            visits,
            served,
            payoff,
            ..
        } = s.outcome().unwrap()
        else {
            panic!("expert outcome")
        };
        assert_eq!(visits, served.len());
        let expected: i64 = served
            .iter()
            .map(|c| {
                c.charged.cents()
                    - if c.action.treatment == Treatment::Hct {
                        600
                    } else {
                        200
                    }
            })
            .sum();
        assert_eq!(payoff, Money::from_cents(expected));
        let d = s.digest().unwrap();
        assert!(d.outcome.conserves(&MarketParams::default()));
        assert_eq!(d.delegation, Some(DelegationChoice::keep()));
    }

    #[test]
    fn fixed_regime_rejects_other_objectives() {
        let mut s = Session::new(
            "e4",
            HumanRole::Expert,
            config(
                Institution::NoInstitution,
                false,
                ObjectiveRegime::FixedSelfInterested,
            ),
            1,
            0,
        )
        .unwrap();
        let r = s.submit_expert(ExpertSubmission::Delegate {
            objective: Some(Objective::EfficiencyLoving),
        });
        assert!(matches!(r, Err(SessionError::Illegal(_))));
        s.submit_expert(ExpertSubmission::Delegate { objective: None })
            .unwrap();
        assert!(s.offers().unwrap()[0].delegated);
    }

    #[test]
    fn same_seed_same_session() {
        let run = || {
            let mut s = Session::new(
                "x",
                HumanRole::Consumer,
                config(
                    Institution::Liability,
                    false,
                    ObjectiveRegime::FixedSelfInterested,
                ),
                5,
                2,
            )
            .unwrap();
            s.choose(Choice::Approach(1)).unwrap();
            serde_json::to_string(&s.digest().unwrap()).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn digest_log_appends_lines() {
        let dir = tempfile::tempdir().unwrap();
        let log = DigestLog::open(&dir.path().join("sessions.ndjson")).unwrap();
        let mut s = Session::new(
            "d",
            HumanRole::Consumer,
            config(
                Institution::Liability,
                false,
                ObjectiveRegime::FixedSelfInterested,
            ),
            1,
            0,
        )
        .unwrap();
        s.choose(Choice::OptOut).unwrap();
        log.append(&s.digest().unwrap()).unwrap();
        log.append(&s.digest().unwrap()).unwrap();
        let text = std::fs::read_to_string(log.path()).unwrap();
        assert_eq!(text.lines().count(), 2);
        let back: SessionDigest = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(back, s.digest().unwrap());
    }

    #[derive(Debug, Clone)]
    enum Request {
        View,
        Offers,
        Outcome,
        Choose(Option<usize>),
        Submit(ExpertSubmission),
    }

    fn request() -> impl Strategy<Value = Request> {
        let action = (0usize..4).prop_map(|i| ExpertAction::ALL[i]);
        prop_oneof![
            Just(Request::View),
            Just(Request::Offers),
            Just(Request::Outcome),
            proptest::option::of(0usize..6).prop_map(Request::Choose),
            proptest::option::of(0usize..4).prop_map(|o| Request::Submit(
                ExpertSubmission::Delegate {
                    objective: o.map(|i| Objective::ALL[i])
                }
            )),
            (1i64..=11, 1i64..=12, action.clone(), action).prop_map(|(low, high, small, big)| {
                Request::Submit(ExpertSubmission::Own {
                    prices: PricePair { low, high },
                    small,
                    big,
                })
            }),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn phases_never_skip_or_repeat(
            expert in any::<bool>(),
            inst in 0usize..3,
            chosen in any::<bool>(),
            transparent in any::<bool>(),
            requests in proptest::collection::vec(request(), 0..12),
        ) {
            let regime = if chosen { ObjectiveRegime::ChosenObjective } else { ObjectiveRegime::FixedSelfInterested };
            let role = if expert { HumanRole::Expert } else { HumanRole::Consumer };
            let mut s = Session::new("p", role, config(Institution::ALL[inst], transparent, regime), 3, 0).unwrap();
            for r in requests {
                let before = s.phase();
                let result = match r {
                    Request::View => Ok(()),
                    Request::Offers => s.offers().map(|_| ()),
                    Request::Outcome => s.outcome().map(|_| ()),
                    Request::Choose(c) => s.choose(c.map_or(Choice::OptOut, Choice::Approach)),
                    Request::Submit(sub) => s.submit_expert(sub),
                };
                if result.is_err() {
                    prop_assert_eq!(s.phase(), before);
                }
                prop_assert_eq!(s.outcome().is_ok(), s.phase() == Phase::Resolved);
                let h = s.history();
                prop_assert_eq!(h, &Phase::ORDER[..h.len()]);
            }
        }
    }
}
