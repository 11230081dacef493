//! Drives one LLM expert through instructions, the comprehension gate,
//! price setting and strategy-method treatment decisions.
//!
//! Context rules: the price-setting request never contains comprehension
//! questions or answers; every treatment request carries all of them.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{AnswerError, HistoryError, LlmError};
use crate::model::{ExpertAction, Institution, MarketParams, Objective, PricePair, ProblemType};
use crate::policy::{
    choice_distribution, scripted_llm_profile, ActionRule, Choice, ConsumerPolicy, ExpertStrategy,
    LlmSource,
};
use crate::{BeliefModel, ExpertOffer};

use super::answer::{parse_action_answer, parse_free_answer, parse_price_answer};
use super::client::{ChatClient, ChatMessage, ChatRequest, ClientError};
use super::comprehension::{Answered, ComprehensionSet, GateResult, Question};
use super::history::{
    encode_history, HistoryChoice, HistoryRecord, HistorySource, EXPERTS_PER_ROW,
};
use super::prompts::{
    build_objective_directive, correction, price_question, render_template, treatment_question,
    RoleFraming, TemplateContext, DEFAULT_EXPERT_TEMPLATE, PRICE_FORMAT, TREATMENT_FORMAT,
};
use super::transcript::{TranscriptEntry, TranscriptRole, TranscriptWriter};

/// Market data given to trained agents as an extra system section.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source", content = "records")]
pub enum TrainingData {
    AiTrained(Vec<HistoryRecord>),
    HumanTrained(Vec<HistoryRecord>),
}

impl TrainingData {
    pub fn encode(&self, params: &MarketParams) -> Result<String, HistoryError> {
        match self {
            TrainingData::AiTrained(r) => encode_history(r, HistorySource::AiAi, params),
            TrainingData::HumanTrained(r) => encode_history(r, HistorySource::HumanHuman, params),
        }
    }
}

/// History rows from scripted self-interested LLM markets: every expert
/// posts the same prices and every consumer makes the same choice.
pub fn aiai_training_records(
    params: &MarketParams,
    institution: Institution,
    n: usize,
) -> Vec<HistoryRecord> {
    let prices =
        scripted_llm_profile(LlmSource::AiAi(Objective::SelfInterested)).prices(institution);
    let offers: Vec<ExpertOffer> = (0..EXPERTS_PER_ROW)
        .map(|i| ExpertOffer {
            expert_index: i,
            prices,
            delegated: false,
            disclosed_objective: None,
        })
        .collect();
    let consumer = ConsumerPolicy::threshold(BeliefModel::StandardSelfInterest);
    let chosen = match choice_distribution(&consumer, params, institution, &offers)
        .ok()
        .flatten()
        .as_deref()
    {
        Some([(Choice::Approach(i), _)]) => HistoryChoice::Approach(*i),
        _ => HistoryChoice::OptOut,
    };
    vec![
        HistoryRecord {
            chosen,
            prices: [prices; EXPERTS_PER_ROW]
        };
        n
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmExpertConfig {
    /// Transcript session id.
    pub session: String,
    pub model: String,
    pub temperature: f64,
    pub institution: Institution,
    pub objective: Objective,
    pub framing: RoleFraming,
    pub training: Option<TrainingData>,
    pub params: MarketParams,
    pub instructions_template: String,
    /// Extra rule-adherence text placed in the instructions.
    pub consistency: String,
    pub comprehension: ComprehensionSet,
    pub max_parse_retries: usize,
    pub max_transport_retries: usize,
    pub backoff: Duration,
}

impl LlmExpertConfig {
    pub fn new(
        session: impl Into<String>,
        model: impl Into<String>,
        institution: Institution,
        objective: Objective,
        framing: RoleFraming,
    ) -> Self {
        LlmExpertConfig {
            session: session.into(),
            model: model.into(),
            temperature: 1.0,
            institution,
            objective,
            framing,
            training: None,
            params: MarketParams::default(),
            instructions_template: DEFAULT_EXPERT_TEMPLATE.to_string(),
            consistency: String::new(),
            comprehension: ComprehensionSet::default_set(),
            max_parse_retries: 3,
            max_transport_retries: 3,
            backoff: Duration::from_millis(500),
        }
    }

    pub fn system_text(&self) -> Result<String, HistoryError> {
        let ctx = TemplateContext {
            institution: self.institution,
            params: self.params.clone(),
            framing: self.framing,
            consistency: self.consistency.clone(),
        };
        let mut text = render_template(&self.instructions_template, &ctx);
        if let Some(training) = &self.training {
            text.push_str("\n\n");
            text.push_str(&training.encode(&self.params)?);
        }
        Ok(text)
    }

    fn preamble(&self) -> Vec<String> {
        vec![
            self.framing.directive().to_string(),
            build_objective_directive(self.objective, self.institution == Institution::Liability),
        ]
    }
}

/// Everything sent for one decision, before any retry messages.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_texts: Vec<String>,
    pub temperature: f64,
    pub model_id: String,
}

impl PromptBundle {
    pub fn request(&self) -> ChatRequest {
        ChatRequest {
            model: self.model_id.clone(),
            system: self.system_text.clone(),
            messages: self.user_texts.iter().map(ChatMessage::user).collect(),
            temperature: self.temperature,
        }
    }
}

fn bundle(cfg: &LlmExpertConfig, system: &str, user_texts: Vec<String>) -> PromptBundle {
    PromptBundle {
        system_text: system.to_string(),
        user_texts,
        temperature: cfg.temperature,
        model_id: cfg.model.clone(),
    }
}

pub fn comprehension_bundle(
    cfg: &LlmExpertConfig,
    system: &str,
    question: &Question,
) -> PromptBundle {
    let mut texts = cfg.preamble();
    texts.push(question.prompt());
    bundle(cfg, system, texts)
}

pub fn price_bundle(cfg: &LlmExpertConfig, system: &str) -> PromptBundle {
    let mut texts = cfg.preamble();
    texts.push(price_question(&cfg.params));
    bundle(cfg, system, texts)
}

/// A comprehension question and the agent's own reply, as one user text.
pub fn qa_text(answered: &Answered) -> String {
    format!(
        "Earlier question: {}\nYour answer: {}",
        answered.question, answered.reply
    )
}

pub fn treatment_bundle(
    cfg: &LlmExpertConfig,
    system: &str,
    answers: &[Answered],
    slot: usize,
    problem: ProblemType,
) -> PromptBundle {
    let mut texts = cfg.preamble();
    texts.extend(answers.iter().map(qa_text));
    texts.push(treatment_question(slot, problem, cfg.institution));
    bundle(cfg, system, texts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum LlmExpertOutcome {
    Completed {
        strategy: ExpertStrategy,
        gate: GateResult,
    },
    /// Failed the comprehension gate; no decisions were requested.
    Disqualified { gate: GateResult },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmExpertRun {
    pub session: String,
    pub outcome: LlmExpertOutcome,
    pub transcript: Vec<TranscriptEntry>,
}

impl LlmExpertRun {
    pub fn strategy(&self) -> Option<&ExpertStrategy> {
        match &self.outcome {
            LlmExpertOutcome::Completed { strategy, .. } => Some(strategy),
            LlmExpertOutcome::Disqualified { .. } => None,
        }
    }
}

struct Conversation<'a> {
    cfg: &'a LlmExpertConfig,
    client: &'a dyn ChatClient,
    log: Vec<TranscriptEntry>,
    turn: usize,
}

impl Conversation<'_> {
    fn record(
        &mut self,
        role: TranscriptRole,
        text: String,
        parsed: Option<serde_json::Value>,
        request: Option<String>,
    ) {
        self.log.push(TranscriptEntry {
            session: self.cfg.session.clone(),
            turn: self.turn,
            role,
            text,
            parsed,
            request,
        });
    }

    fn send(&mut self, request: &ChatRequest) -> Result<String, LlmError> {
        let last = request
            .messages
            .last()
            .map(|m| m.content.clone())
            .unwrap_or_default();
        self.record(
            TranscriptRole::User,
            last,
            None,
            Some(request.fingerprint()),
        );
        let mut attempt = 0;
        let reply = loop {
            match self.client.complete(request) {
                Ok(text) => break text,
                Err(ClientError::Fatal(message)) => return Err(LlmError::Rejected(message)),
                Err(ClientError::Transient(message)) => {
                    attempt += 1;
                    if attempt > self.cfg.max_transport_retries {
                        return Err(LlmError::Transport {
                            attempts: attempt,
                            message,
                        });
                    }
                    self.record(
                        TranscriptRole::Event,
                        format!("transport retry {attempt}: {message}"),
                        None,
                        None,
                    );
                    std::thread::sleep(self.cfg.backoff * 2u32.saturating_pow(attempt as u32 - 1));
                }
            }
        };
        Ok(reply)
    }

    /// Sends `bundle`, re-asking with a correction until `parse` succeeds.
    fn ask<T: Serialize>(
        &mut self,
        name: &str,
        bundle: &PromptBundle,
        format: &str,
        parse: impl Fn(&str) -> Result<T, AnswerError>,
    ) -> Result<(T, String), LlmError> {
        let mut request = bundle.request();
        let mut last = AnswerError::MissingTrailer;
        for _ in 0..=self.cfg.max_parse_retries {
            let reply = self.send(&request)?;
            match parse(&reply) {
                Ok(value) => {
                    self.record(
                        TranscriptRole::Assistant,
                        reply.clone(),
                        serde_json::to_value(&value).ok(),
                        None,
                    );
                    self.turn += 1;
                    return Ok((value, reply));
                }
                Err(e) => {
                    self.record(TranscriptRole::Assistant, reply.clone(), None, None);
                    self.turn += 1;
                    self.record(
                        TranscriptRole::Event,
                        format!("{name}: parse failure: {e}"),
                        None,
                        None,
                    );
                    request.messages.push(ChatMessage::assistant(reply));
                    request
                        .messages
                        .push(ChatMessage::user(correction(&e.to_string(), format)));
                    last = e;
                }
            }
        }
        Err(LlmError::ParseRetriesExhausted {
            turn: name.to_string(),
            attempts: self.cfg.max_parse_retries + 1,
            last,
        })
    }
}

/// Runs the full expert protocol against `client`; the transcript is
/// returned and, when `log` is given, appended to it.
pub fn run_llm_expert(
    cfg: &LlmExpertConfig,
    client: &dyn ChatClient,
    log: Option<&TranscriptWriter>,
) -> Result<LlmExpertRun, LlmError> {
    let mut conv = Conversation {
        cfg,
        client,
        log: Vec::new(),
        turn: 0,
    };
    let result = drive(&mut conv);
    if let Some(writer) = log {
        writer.write(&conv.log)?;
    }
    let outcome = result?;
    Ok(LlmExpertRun {
        session: cfg.session.clone(),
        outcome,
        transcript: conv.log,
    })
}

fn drive(conv: &mut Conversation<'_>) -> Result<LlmExpertOutcome, LlmError> {
    let cfg = conv.cfg;
    let system = cfg.system_text().map_err(|e| LlmError::Fixture {
        path: "training data".into(),
        message: e.to_string(),
    })?;
    conv.record(TranscriptRole::System, system.clone(), None, None);

    // comprehension gate
    let mut gate = GateResult {
        passed: false,
        attempts_used: 0,
        answers: Vec::new(),
    };
    while !gate.passed && gate.attempts_used < cfg.comprehension.attempts_allowed {
        gate.attempts_used += 1;
        gate.answers.clear();
        for q in &cfg.comprehension.questions {
            let b = comprehension_bundle(cfg, &system, q);
            let (answer, reply) = conv.ask(
                &format!("comprehension {}", q.id),
                &b,
                "ANSWER: <your answer>",
                parse_free_answer,
            )?;
            gate.answers.push(Answered {
                id: q.id.clone(),
                question: q.text.clone(),
                correct: q.is_correct(&answer),
                reply,
                answer: Some(answer),
            });
        }
        gate.passed = gate.answers.iter().all(|a| a.correct);
    }
    let gate_json = serde_json::to_value(&gate).ok();
    conv.record(
        TranscriptRole::Event,
        format!(
            "comprehension gate {} after {} attempt(s)",
            if gate.passed { "passed" } else { "failed" },
            gate.attempts_used
        ),
        gate_json,
        None,
    );
    if !gate.passed {
        return Ok(LlmExpertOutcome::Disqualified { gate });
    }

    // price setting: no comprehension context
    let b = price_bundle(cfg, &system);
    let (prices, _): (PricePair, _) = conv.ask("price setting", &b, PRICE_FORMAT, |t| {
        parse_price_answer(t, &cfg.params)
    })?;

    // strategy method: one decision per consumer slot and problem type
    let mut slots = Vec::with_capacity(cfg.params.n_consumers);
    for slot in 0..cfg.params.n_consumers {
        let mut pick = |problem| -> Result<ExpertAction, LlmError> {
            let b = treatment_bundle(cfg, &system, &gate.answers, slot, problem);
            let name = format!("treatment B{} {problem}", slot + 1);
            Ok(conv
                .ask(&name, &b, TREATMENT_FORMAT, |t| {
                    parse_action_answer(t, cfg.institution, problem)
                })?
                .0)
        };
        let small = pick(ProblemType::Small)?;
        let big = pick(ProblemType::Big)?;
        slots.push(ActionRule { small, big });
    }
    Ok(LlmExpertOutcome::Completed {
        strategy: ExpertStrategy { prices, slots },
        gate,
    })
}

/// Runs several agents with at most `parallelism` in flight; results keep
/// the order of `configs`.
pub fn run_llm_experts(
    configs: &[LlmExpertConfig],
    client: &dyn ChatClient,
    log: Option<&TranscriptWriter>,
    parallelism: usize,
) -> Vec<Result<LlmExpertRun, LlmError>> {
    use rayon::prelude::*;
    let run = || {
        configs
            .par_iter()
            .map(|cfg| run_llm_expert(cfg, client, log))
            .collect()
    };
    match rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
    {
        Ok(pool) => pool.install(run),
        Err(_) => configs
            .iter()
            .map(|cfg| run_llm_expert(cfg, client, log))
            .collect(),
    }
}
