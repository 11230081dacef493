use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use credence_cli::commands::{self, ReplySource, TrainingSpec};
use credence_cli::openai::EndpointConfig;
use credence_cli::serve::{serve, ServiceState};
use credence_core::llm::RoleFraming;
use credence_core::scenario::{load_scenario, MetricsConfig};
use credence_core::{
    BeliefModel, EfficiencyMode, Institution, MarketParams, Objective, SurplusMode,
};

#[derive(Parser)]
#[command(
    name = "credence",
    version,
    about = "One-shot credence-goods market experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the analytic prediction cells and check them.
    Predict {
        /// Write prediction.csv and prediction.json here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Run a scenario file and write result tables.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        reps: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: the scenario's output.dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ingest a human-data CSV and replay it.
    Replay {
        data: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        reps: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Use threshold consumers instead of the recorded choices.
        #[arg(long)]
        threshold_consumers: bool,
        #[command(flatten)]
        metrics: MetricArgs,
    },
    /// Drive live LLM experts through the full protocol.
    LlmRun(LlmRunArgs),
    /// Host interactive sessions over HTTP and WebSocket.
    Serve {
        scenario: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Append resolved sessions here.
        #[arg(long, default_value = "sessions.ndjson")]
        digests: PathBuf,
        /// Seat taken by the human among experts or consumers.
        #[arg(long, default_value_t = 0)]
        seat: usize,
        /// Delegated experts are played by the configured live endpoint.
        #[arg(long)]
        live_llm: bool,
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Print result tables.
    Report {
        #[command(subcommand)]
        what: ReportCommand,
    },
}

#[derive(Subcommand)]
enum ReportCommand {
    /// Closed-form outcomes of scripted LLM-only markets.
    Table1 {
        #[arg(long, value_enum, default_value_t = Belief::Skeptical)]
        belief: Belief,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Metrics re-aggregated from a digest file.
    Digests {
        path: PathBuf,
        #[command(flatten)]
        metrics: MetricArgs,
    },
}

#[derive(Args)]
struct MetricArgs {
    #[arg(long, value_enum, default_value_t = Efficiency::Realized)]
    efficiency: Efficiency,
    #[arg(long, value_enum, default_value_t = Surplus::GroupTotal)]
    surplus: Surplus,
}

impl MetricArgs {
    fn config(&self) -> MetricsConfig {
        MetricsConfig {
            efficiency: match self.efficiency {
                Efficiency::Realized => EfficiencyMode::Realized,
                Efficiency::Expected => EfficiencyMode::Expected,
            },
            surplus: match self.surplus {
                Surplus::GroupTotal => SurplusMode::GroupTotal,
                Surplus::PerCapita => SurplusMode::PerCapita,
            },
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Efficiency {
    Realized,
    Expected,
}

#[derive(Clone, Copy, ValueEnum)]
enum Surplus {
    GroupTotal,
    PerCapita,
}

#[derive(Clone, Copy, ValueEnum)]
enum Belief {
    Standard,
    Skeptical,
}

#[derive(Clone, Copy, ValueEnum)]
enum Framing {
    Aiai,
    HumanAi,
}

#[derive(Args)]
struct LlmRunArgs {
    #[arg(long)]
    institution: Institution,
    #[arg(long, default_value = "self_interested")]
    objective: Objective,
    #[arg(long, value_enum, default_value_t = Framing::Aiai)]
    framing: Framing,
    /// ai, ai:<rows> or human:<history file>.
    #[arg(long)]
    training: Option<TrainingSpec>,
    #[arg(long, default_value_t = 1)]
    agents: usize,
    /// Agents in flight at once.
    #[arg(long, default_value_t = 4)]
    parallel: usize,
    #[arg(long)]
    model: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    /// Instruction template replacing the bundled one.
    #[arg(long)]
    template: Option<PathBuf>,
    /// Comprehension question file replacing the bundled one.
    #[arg(long)]
    comprehension: Option<PathBuf>,
    /// Append the conversation log here.
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// Replay replies from a recorded transcript instead of calling out.
    #[arg(long)]
    replay: Option<PathBuf>,
    #[arg(long, default_value = "agent-")]
    session_prefix: String,
    /// Write the run records here as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Predict { out, json } => {
            let result = commands::predict(&MarketParams::default())?;
            if json {
                println!("{}", serde_json::to_string_pretty(&result.report)?);
            } else {
                print!("{}", result.text);
            }
            if let Some(dir) = out {
                for path in commands::write_predictions(&result, &dir)? {
                    eprintln!("wrote {}", path.display());
                }
            }
            Ok(if result.report.all_pass() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Simulate {
            scenario,
            reps,
            seed,
            out,
        } => {
            let opts = commands::SimulateOptions { reps, seed, out };
            let (reports, written) = commands::simulate(&scenario, &opts)?;
            print!("{}", commands::metrics_text(&reports));
            for path in written {
                eprintln!("wrote {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Replay {
            data,
            reps,
            seed,
            out,
            threshold_consumers,
            metrics,
        } => {
            let opts = commands::ReplayOptions {
                reps,
                seed,
                out,
                threshold_consumers,
                metrics: metrics.config(),
            };
            let (summary, reports) = commands::replay(&data, &opts)?;
            print!("{}", commands::ingest_text(&summary));
            println!();
            print!("{}", commands::metrics_text(&reports));
            Ok(ExitCode::SUCCESS)
        }
        Command::LlmRun(args) => llm_run(args),
        Command::Serve {
            scenario,
            addr,
            digests,
            seat,
            live_llm,
            transcript,
        } => {
            let spec = load_scenario(&scenario)?;
            let opts = commands::ServeOptions {
                seat,
                live_llm: live_llm.then(EndpointConfig::from_env),
                transcript,
            };
            let cells = commands::session_configs(&spec, &opts)?;
            for c in &cells {
                eprintln!(
                    "cell {} ({} objective, transparent: {})",
                    c.cell.label,
                    commands::regime_label(c.objective_regime),
                    c.cell.transparent
                );
            }
            let log = commands::open_digest_log(&digests)?;
            let state = Arc::new(ServiceState::new(cells, spec.seed, Some(log)));
            let runtime = tokio::runtime::Runtime::new().context("starting the runtime")?;
            runtime.block_on(serve(state, &addr))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { what } => {
            match what {
                ReportCommand::Table1 { belief, out } => {
                    let belief = match belief {
                        Belief::Standard => BeliefModel::StandardSelfInterest,
                        Belief::Skeptical => BeliefModel::Skeptical,
                    };
                    let table = commands::report_table1(belief)?;
                    print!("{}", table.to_text());
                    if let Some(dir) = out {
                        use credence_core::scenario::OutputFormat::{Csv, Json};
                        for path in table.write(&dir, "table1", &[Csv, Json])? {
                            eprintln!("wrote {}", path.display());
                        }
                    }
                }
                ReportCommand::Digests { path, metrics } => {
                    let reports = commands::report_digests(&path, metrics.config())?;
                    print!("{}", commands::metrics_text(&reports));
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn llm_run(args: LlmRunArgs) -> Result<ExitCode> {
    let replies = match args.replay {
        Some(path) => ReplySource::Transcript(path),
        None => ReplySource::Endpoint(EndpointConfig::from_env()),
    };
    let opts = commands::LlmRunOptions {
        institution: args.institution,
        objective: args.objective,
        framing: match args.framing {
            Framing::Aiai => RoleFraming::AiAi,
            Framing::HumanAi => RoleFraming::HumanAi,
        },
        training: args.training,
        agents: args.agents,
        parallel: args.parallel,
        model: args.model,
        temperature: args.temperature,
        template: args.template,
        comprehension: args.comprehension,
        transcript: args.transcript,
        replies,
        session_prefix: args.session_prefix,
    };
    let records = commands::llm_run(&opts)?;
    let text = serde_json::to_string_pretty(&records)? + "\n";
    match args.out {
        Some(path) => {
            std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{text}"),
    }
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        eprintln!("{failed} of {} agents failed", records.len());
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}
