//! One function per subcommand; each returns what it printed or wrote so
//! tests can check it without a terminal.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use credence_core::emit::{emit_results, metrics_table, outcome_table, prediction_table, Table};
use credence_core::equilibrium::{monopoly_price, verify_predictions, PredictionReport};
use credence_core::ingest::{ingest_human_csv, IngestSummary};
use credence_core::llm::{
    aiai_training_records, parse_history, read_transcript, run_llm_experts, ChatClient,
    ComprehensionSet, LlmExpertConfig, LlmExpertOutcome, ReplayClient, RoleFraming, TrainingData,
    TranscriptWriter,
};
use credence_core::metrics::summarize;
use credence_core::policy::{ConsumerPolicy, ExpertPolicy, ObjectiveRegime};
use credence_core::scenario::{
    load_scenario, run_replications, MetricsConfig, OutputFormat, ReplicationReport, ScenarioSpec,
};
use credence_core::session::{DigestLog, LiveDelegate, SessionConfig};
use credence_core::tables::aiai_outcome_table;
use credence_core::{BeliefModel, Institution, MarketCell, MarketOutcome, MarketParams, Objective};
use serde::Serialize;

use crate::openai::{EndpointConfig, OpenAiClient, ENV_MODEL};

/// Prediction check for every analytic cell plus the monopoly probe.
#[derive(Debug, Serialize)]
pub struct PredictOutput {
    pub report: PredictionReport,
    pub monopoly_liability_high: i64,
    pub text: String,
}

pub fn predict(params: &MarketParams) -> Result<PredictOutput> {
    let report = verify_predictions(params)?;
    let monopoly = monopoly_price(params, Institution::Liability, Objective::SelfInterested)?;
    let mut text = prediction_table(&report).to_text();
    text.push_str(&format!(
        "\nmonopoly price under liability: p = {} ({} of {} cells match)\n",
        monopoly.prices.high,
        report.passed(),
        report.checks.len()
    ));
    Ok(PredictOutput {
        report,
        monopoly_liability_high: monopoly.prices.high,
        text,
    })
}

pub fn write_predictions(out: &PredictOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written =
        prediction_table(&out.report).write(dir, "prediction", &[OutputFormat::Csv])?;
    let path = dir.join("prediction.json");
    let mut json = serde_json::to_string_pretty(&serde_json::json!({
        "checks": out.report.checks,
        "all_pass": out.report.all_pass(),
        "monopoly_liability_high": out.monopoly_liability_high,
    }))?;
    json.push('\n');
    fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
    written.push(path);
    Ok(written)
}

pub struct SimulateOptions {
    pub reps: Option<u64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// Runs a scenario and writes its result files.
pub fn simulate(
    scenario: &Path,
    opts: &SimulateOptions,
) -> Result<(Vec<ReplicationReport>, Vec<PathBuf>)> {
    let mut spec = load_scenario(scenario)?;
    if let Some(reps) = opts.reps {
        spec.reps = reps;
    }
    if let Some(seed) = opts.seed {
        spec.seed = seed;
    }
    let reports = credence_core::scenario::run_scenario(&spec)?;
    let dir = opts.out.clone().unwrap_or_else(|| spec.output_dir());
    let written = emit_results(&dir, &reports, &spec.output.formats, spec.output.digests)?;
    Ok((reports, written))
}

pub struct ReplayOptions {
    pub reps: u64,
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Replace recorded consumer choices with threshold consumers.
    pub threshold_consumers: bool,
    pub metrics: MetricsConfig,
}

/// Ingests human data and replays it market by market, per institution
/// present in the data.
pub fn replay(
    data: &Path,
    opts: &ReplayOptions,
) -> Result<(IngestSummary, Vec<ReplicationReport>)> {
    let params = MarketParams::default();
    let human = ingest_human_csv(data, &params)?;
    let summary = human.summary();
    let experts = ExpertPolicy::replay(human.expert_pool(opts.seed, params.n_experts));
    let consumers = if opts.threshold_consumers {
        ConsumerPolicy::threshold(BeliefModel::StandardSelfInterest)
    } else {
        ConsumerPolicy::replay(human.consumer_pool(opts.seed, params.n_consumers))
    };
    let mut reports = Vec::new();
    for (&institution, s) in &summary.institutions {
        if s.experts == 0 || (s.consumers == 0 && !opts.threshold_consumers) {
            continue;
        }
        let cell = MarketCell {
            label: format!("replay/{}", institution.label()),
            params: params.clone(),
            institution,
            transparent: false,
            experts: vec![experts.clone(); params.n_experts],
            consumers: vec![consumers.clone(); params.n_consumers],
        };
        reports.push(run_replications(&cell, opts.reps, opts.seed, opts.metrics)?);
    }
    if let Some(dir) = &opts.out {
        emit_results(
            dir,
            &reports,
            &[OutputFormat::Csv, OutputFormat::Json],
            true,
        )?;
        let path = dir.join("ingest_summary.json");
        fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok((summary, reports))
}

pub fn ingest_text(summary: &IngestSummary) -> String {
    let mut out = format!(
        "{} rows accepted, {} rejected\n",
        summary.accepted,
        summary.rejected.len()
    );
    for r in &summary.rejected {
        out.push_str(&format!("  line {}: {}\n", r.line, r.reason));
    }
    for (inst, s) in &summary.institutions {
        out.push_str(&format!(
            "{}: {} experts, {} consumers, approach {:.2}, delegation {:.2}, fraud {:.2}\n",
            inst.label(),
            s.experts,
            s.consumers,
            s.approach_rate,
            s.delegation_rate,
            s.fraud_rate
        ));
        for p in s.price_pairs.iter().take(5) {
            out.push_str(&format!(
                "  ({}, {})  {:>3}  {:.2}%\n",
                p.low, p.high, p.count, p.percent
            ));
        }
    }
    out
}

/// Where live-agent replies come from.
pub enum ReplySource {
    Endpoint(EndpointConfig),
    /// Strict replay of a recorded transcript.
    Transcript(PathBuf),
}

pub struct LlmRunOptions {
    pub institution: Institution,
    pub objective: Objective,
    pub framing: RoleFraming,
    pub training: Option<TrainingSpec>,
    pub agents: usize,
    pub parallel: usize,
    pub model: Option<String>,
    pub temperature: f64,
    pub template: Option<PathBuf>,
    pub comprehension: Option<PathBuf>,
    pub transcript: Option<PathBuf>,
    pub replies: ReplySource,
    pub session_prefix: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrainingSpec {
    /// Rows from scripted self-interested LLM markets.
    Ai(usize),
    /// A history file in the row format.
    Human(PathBuf),
}

impl std::str::FromStr for TrainingSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "ai" => Ok(TrainingSpec::Ai(60)),
            Some(("ai", n)) => n
                .parse()
                .map(TrainingSpec::Ai)
                .map_err(|e| format!("row count {n:?}: {e}")),
            Some(("human", path)) => Ok(TrainingSpec::Human(path.into())),
            _ => Err(format!(
                "expected ai, ai:<rows> or human:<history file>, got {s:?}"
            )),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct LlmRunRecord {
    pub session: String,
    #[serde(flatten)]
    pub outcome: Option<LlmExpertOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn training_data(
    spec: &TrainingSpec,
    params: &MarketParams,
    institution: Institution,
) -> Result<TrainingData> {
    Ok(match spec {
        TrainingSpec::Ai(n) => {
            TrainingData::AiTrained(aiai_training_records(params, institution, *n))
        }
        TrainingSpec::Human(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            TrainingData::HumanTrained(parse_history(&text)?)
        }
    })
}

/// Runs live (or replayed) LLM experts through the full protocol.
pub fn llm_run(opts: &LlmRunOptions) -> Result<Vec<LlmRunRecord>> {
    let params = MarketParams::default();
    let client: Arc<dyn ChatClient> = match &opts.replies {
        ReplySource::Endpoint(endpoint) => Arc::new(OpenAiClient::new(endpoint)?),
        ReplySource::Transcript(path) => Arc::new(ReplayClient::from_transcript(
            &read_transcript(path, None)?,
            true,
        )),
    };
    let model = match (&opts.model, &opts.replies) {
        (Some(m), _) => m.clone(),
        (None, ReplySource::Endpoint(e)) => e
            .model
            .clone()
            .ok_or_else(|| anyhow!("no model: pass --model or set {ENV_MODEL}"))?,
        (None, ReplySource::Transcript(_)) => "replay".into(),
    };
    let mut base = LlmExpertConfig::new("", model, opts.institution, opts.objective, opts.framing);
    base.temperature = opts.temperature;
    base.training = opts
        .training
        .as_ref()
        .map(|t| training_data(t, &params, opts.institution))
        .transpose()?;
    if let Some(path) = &opts.template {
        base.instructions_template =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    }
    if let Some(path) = &opts.comprehension {
        base.comprehension = ComprehensionSet::load(path)?;
    }
    let configs: Vec<LlmExpertConfig> = (0..opts.agents)
        .map(|i| {
            let mut c = base.clone();
            c.session = format!("{}{i:03}", opts.session_prefix);
            c
        })
        .collect();
    let writer = opts
        .transcript
        .as_deref()
        .map(TranscriptWriter::append_to)
        .transpose()?;
    let runs = run_llm_experts(&configs, client.as_ref(), writer.as_ref(), opts.parallel);
    Ok(configs
        .iter()
        .zip(runs)
        .map(|(cfg, r)| match r {
            Ok(run) => LlmRunRecord {
                session: run.session,
                outcome: Some(run.outcome),
                error: None,
            },
            Err(e) => LlmRunRecord {
                session: cfg.session.clone(),
                outcome: None,
                error: Some(e.to_string()),
            },
        })
        .collect())
}

/// Closed-form outcome table for scripted LLM experts and consumers.
pub fn report_table1(belief: BeliefModel) -> Result<Table> {
    Ok(outcome_table(&aiai_outcome_table(
        &MarketParams::default(),
        belief,
    )?))
}

/// Re-aggregates a digest file (simulation or session digests) by cell.
pub fn report_digests(path: &Path, metrics: MetricsConfig) -> Result<Vec<ReplicationReport>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    // cells in order of first appearance
    let mut cells: Vec<(String, Vec<MarketOutcome>)> = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut value: serde_json::Value =
            serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?;
        let cell = value
            .get("cell")
            .and_then(|c| c.as_str())
            .unwrap_or("unlabelled")
            .to_string();
        if let Some(inner) = value.get_mut("outcome") {
            value = inner.take();
        }
        let outcome: MarketOutcome = serde_json::from_value(value)
            .with_context(|| format!("{}:{}", path.display(), i + 1))?;
        match cells.iter_mut().find(|(label, _)| *label == cell) {
            Some((_, outcomes)) => outcomes.push(outcome),
            None => cells.push((cell, vec![outcome])),
        }
    }
    if cells.is_empty() {
        bail!("{} holds no digests", path.display());
    }
    let params = MarketParams::default();
    Ok(cells
        .into_iter()
        .map(|(label, digests)| {
            let first = &digests[0];
            ReplicationReport {
                label,
                institution: first.institution,
                transparent: first.transparent,
                n_reps: digests.len() as u64,
                seed: 0,
                metrics: summarize(&digests, &params, metrics.efficiency, metrics.surplus),
                digests,
            }
        })
        .collect())
}

pub fn metrics_text(reports: &[ReplicationReport]) -> String {
    metrics_table(reports).to_text()
}

pub struct ServeOptions {
    pub seat: usize,
    pub live_llm: Option<EndpointConfig>,
    pub transcript: Option<PathBuf>,
}

/// One session configuration per cell of the scenario.
pub fn session_configs(spec: &ScenarioSpec, opts: &ServeOptions) -> Result<Vec<SessionConfig>> {
    let live: Option<Arc<LiveDelegate>> = match &opts.live_llm {
        None => None,
        Some(endpoint) => {
            let model = endpoint
                .model
                .clone()
                .ok_or_else(|| anyhow!("live delegation needs {ENV_MODEL}"))?;
            let template = LlmExpertConfig::new(
                "session",
                model,
                Institution::NoInstitution,
                Objective::SelfInterested,
                RoleFraming::HumanAi,
            );
            let log = opts
                .transcript
                .as_deref()
                .map(TranscriptWriter::append_to)
                .transpose()?
                .map(Arc::new);
            Some(Arc::new(LiveDelegate {
                client: Arc::new(OpenAiClient::new(endpoint)?),
                template,
                log,
            }))
        }
    };
    spec.cells()?
        .into_iter()
        .map(|cell| {
            let mut config = SessionConfig::new(cell, spec.objective_regime);
            config.human_index = opts.seat;
            if let Some(live) = &live {
                config.delegate = live.clone();
            }
            Ok(config)
        })
        .collect()
}

pub fn open_digest_log(path: &Path) -> Result<DigestLog> {
    Ok(DigestLog::open(path)?)
}

pub fn regime_label(regime: ObjectiveRegime) -> &'static str {
    match regime {
        ObjectiveRegime::FixedSelfInterested => "fixed",
        ObjectiveRegime::ChosenObjective => "chosen",
    }
}
