//! One-shot credence-goods markets: experts post price menus and
//! strategy-method action rules, consumers choose whom to approach, and
//! institutions constrain what experts may do.

pub mod belief;
pub mod emit;
pub mod engine;
pub mod equilibrium;
pub mod error;
pub mod ingest;
pub mod llm;
pub mod metrics;
pub mod model;
pub mod money;
pub mod policy;
pub mod scenario;
pub mod session;
pub mod tables;

pub use belief::{expected_consumer_payoff, BeliefModel};
pub use engine::{run_cell, run_market, MarketCell, MarketOutcome, MarketStreams};
pub use error::{EngineError, ModelError, ParseValueError, PolicyError, SessionError};
pub use metrics::{summarize, EfficiencyMode, MetricSet, SurplusMode};
pub use model::{
    classify_fraud, interaction_payoffs, legal_actions, ExpertAction, ExpertOffer, FraudFlags,
    FraudKind, Institution, MarketParams, Objective, PricePair, ProblemType, Tier, Treatment,
};
pub use money::{Expected, Money, Probability};
