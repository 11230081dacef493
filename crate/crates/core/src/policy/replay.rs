//! Replay of recorded human decisions.
//!
//! Rows are drawn without replacement: each institution's rows are walked
//! in a seeded permutation, one fresh permutation per pass through the
//! pool. Replication `r`, agent `a` takes draw number `r * n_agents + a`,
//! so the agents of one market always get distinct rows (pool size
//! permitting) and every row is used equally often over whole passes.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::PolicyError;
use crate::model::{ExpertAction, Institution, Objective, PricePair};

use super::{ActionRule, DecisionContext, ExpertStrategy};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertRecord {
    pub subject_id: String,
    pub institution: Institution,
    pub prices: PricePair,
    pub small: ExpertAction,
    pub big: ExpertAction,
    #[serde(default)]
    pub delegated: bool,
    #[serde(default)]
    pub chosen_objective: Option<Objective>,
}

impl ExpertRecord {
    pub fn strategy(&self, n_slots: usize) -> ExpertStrategy {
        ExpertStrategy::uniform(
            self.prices,
            ActionRule {
                small: self.small,
                big: self.big,
            },
            n_slots,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplayChoice {
    /// Position of the approached expert (0 = Player A1).
    Approach(usize),
    OptOut,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsumerRecord {
    pub subject_id: String,
    pub institution: Institution,
    pub choice: ReplayChoice,
}

/// Seeded without-replacement walk over per-institution rows.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Walk<T> {
    rows: BTreeMap<Institution, Vec<T>>,
    seed: u64,
    agents_per_market: usize,
}

impl<T> Walk<T> {
    fn new(
        records: Vec<T>,
        institution_of: impl Fn(&T) -> Institution,
        seed: u64,
        agents_per_market: usize,
    ) -> Self {
        let mut rows: BTreeMap<Institution, Vec<T>> = BTreeMap::new();
        for r in records {
            rows.entry(institution_of(&r)).or_default().push(r);
        }
        Walk {
            rows,
            seed,
            agents_per_market: agents_per_market.max(1),
        }
    }

    fn pick(&self, ctx: &DecisionContext<'_>) -> Result<&T, PolicyError> {
        let rows = self
            .rows
            .get(&ctx.institution)
            .filter(|r| !r.is_empty())
            .ok_or(PolicyError::EmptyReplayPool(ctx.institution))?;
        let len = rows.len() as u64;
        let draw = ctx.rep * self.agents_per_market as u64 + ctx.agent as u64;
        let (pass, pos) = (draw / len, draw % len);
        Ok(&rows[permutation(self.seed, ctx.institution, pass, rows.len())[pos as usize]])
    }

    fn rows(&self, institution: Institution) -> &[T] {
        self.rows
            .get(&institution)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

/// Permutation of `0..len` for one pass through one institution's rows.
fn permutation(seed: u64, institution: Institution, pass: u64, len: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(institution as u64);
    rng.set_word_pos(u128::from(pass) << 32);
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut rng);
    order
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpertReplayPool(Walk<ExpertRecord>);

impl ExpertReplayPool {
    pub fn new(records: Vec<ExpertRecord>, seed: u64, experts_per_market: usize) -> Self {
        ExpertReplayPool(Walk::new(
            records,
            |r| r.institution,
            seed,
            experts_per_market,
        ))
    }

    pub fn record(&self, ctx: &DecisionContext<'_>) -> Result<&ExpertRecord, PolicyError> {
        self.0.pick(ctx)
    }

    pub fn strategy(&self, ctx: &DecisionContext<'_>) -> Result<ExpertStrategy, PolicyError> {
        Ok(self.record(ctx)?.strategy(ctx.params.n_consumers))
    }

    pub fn records(&self, institution: Institution) -> &[ExpertRecord] {
        self.0.rows(institution)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsumerReplayPool(Walk<ConsumerRecord>);

impl ConsumerReplayPool {
    pub fn new(records: Vec<ConsumerRecord>, seed: u64, consumers_per_market: usize) -> Self {
        ConsumerReplayPool(Walk::new(
            records,
            |r| r.institution,
            seed,
            consumers_per_market,
        ))
    }

    pub fn choice(&self, ctx: &DecisionContext<'_>) -> Result<ReplayChoice, PolicyError> {
        Ok(self.0.pick(ctx)?.choice)
    }

    pub fn records(&self, institution: Institution) -> &[ConsumerRecord] {
        self.0.rows(institution)
    }
}
