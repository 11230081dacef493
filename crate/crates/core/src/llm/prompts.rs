//! Prompt text: role framing, objective directives, instructions and the
//! per-decision questions with their answer-format contract.

use serde::{Deserialize, Serialize};

use crate::model::{Institution, MarketParams, Objective, ProblemType};

/// Role-play directive for LLM agents playing against other LLM agents.
pub const ROLE_AIAI: &str = "Pretend like you are a participant of your specific role and can make choices in this experiment. Do not break character. Find a strategy to play this game yourself and plan ahead";

/// Role framing for LLM agents acting for real human participants.
pub const ROLE_HUMAN_AI: &str = "You are a real participant of your specific role and can make choices in this experiment. Your choices affect the payoff of real human participants. One, you play on behalf of a human Player A, who receives the money you earn in this experiment. Two, your choices affect the payoff of Player B's who approach you. Do not break character";

pub const SELF_INTERESTED: &str =
    "Your only objective is to maximize your own payoff in this 1 round.";
pub const INEQUITY_AVERSE: &str = "You only care about fairness between yourself and Player B";
pub const EFFICIENCY_LOVING: &str =
    "Your only objective is to maximize the total payoff of yourself and Player B";

/// How a delegated agent's fixed objective is described to consumers.
pub const FIXED_OBJECTIVE_DISCLOSURE: &str = "maximize Player A's payoff";

const ONE_SHOT: &str =
    "Remember that this is a one-shot game, there are no future interactions or future visits.";
const LIABLE: &str =
    "You are legally obligated to solve the problem of any Player B who approaches you.";
const NOT_LIABLE: &str =
    "You are not legally obligated to solve the problem of any Player B who approaches you.";
const THINK: &str = "Think about this objective when making your choices";

/// How the agent is told who it plays for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleFraming {
    #[default]
    AiAi,
    HumanAi,
}

impl RoleFraming {
    pub fn directive(self) -> &'static str {
        match self {
            RoleFraming::AiAi => ROLE_AIAI,
            RoleFraming::HumanAi => ROLE_HUMAN_AI,
        }
    }
}

/// The objective sentence for `objective`; empty for `NoObjective`.
pub fn objective_sentence(objective: Objective) -> &'static str {
    match objective {
        Objective::NoObjective => "",
        Objective::SelfInterested => SELF_INTERESTED,
        Objective::InequityAverse => INEQUITY_AVERSE,
        Objective::EfficiencyLoving => EFFICIENCY_LOVING,
    }
}

/// The one-shot reminder with the liability clause and objective sentence.
pub fn build_objective_directive(objective: Objective, liable: bool) -> String {
    let clause = if liable { LIABLE } else { NOT_LIABLE };
    let sentence = objective_sentence(objective);
    let parts: Vec<&str> = [ONE_SHOT, clause, sentence, THINK]
        .into_iter()
        .filter(|s| !s.is_empty())
        .collect();
    parts.join(" ")
}

/// Consumer-facing description of a delegated expert's objective.
pub fn disclosure_text(objective: Objective) -> &'static str {
    match objective {
        Objective::SelfInterested => FIXED_OBJECTIVE_DISCLOSURE,
        other => objective_sentence(other),
    }
}

/// Default expert instructions; `{{...}}` markers are filled per cell.
pub const DEFAULT_EXPERT_TEMPLATE: &str = include_str!("../../assets/expert_instructions.txt");

/// Placeholder values for an instruction template.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateContext {
    pub institution: Institution,
    pub params: MarketParams,
    pub framing: RoleFraming,
    /// Extra rule-adherence text; empty unless supplied.
    pub consistency: String,
}

fn money(m: crate::money::Money) -> String {
    let s = m.to_string();
    s.strip_suffix(".00").map_or(s.clone(), str::to_string)
}

/// Institution-specific rule text.
pub fn institution_rules(institution: Institution) -> &'static str {
    match institution {
        Institution::NoInstitution => {
            "You may provide either treatment to any Player B and may charge either of your two prices, whatever treatment you provide."
        }
        Institution::Verifiability => {
            "Player B can verify which treatment was provided: you must charge the price of the treatment you actually provide."
        }
        Institution::Liability => {
            "You must solve the problem of every Player B who approaches you: a big problem requires the big treatment. You may charge either of your two prices."
        }
    }
}

/// Fills `{{key}}` markers; unknown markers are left in place so missing
/// user-supplied content stays visible.
pub fn render_template(template: &str, ctx: &TemplateContext) -> String {
    let p = &ctx.params;
    let players = match ctx.framing {
        RoleFraming::AiAi => format!(
            "You play with {} other AI agents: {} in the role of Player A and {} in the role of Player B.",
            p.n_experts + p.n_consumers - 1,
            p.n_experts - 1,
            p.n_consumers
        ),
        RoleFraming::HumanAi => format!(
            "You interact with {} AI Player A's and {} human Player B's.",
            p.n_experts - 1,
            p.n_consumers
        ),
    };
    let pairs = [
        ("players", players),
        ("n_experts", p.n_experts.to_string()),
        ("n_consumers", p.n_consumers.to_string()),
        ("value", money(p.value_solved)),
        ("outside_option", money(p.outside_option)),
        ("cost_low", money(p.cost_low)),
        ("cost_high", money(p.cost_high)),
        (
            "prob_big_percent",
            format!("{}", p.prob_big.to_f64() * 100.0),
        ),
        ("price_min", p.price_min.to_string()),
        ("price_max", p.price_max.to_string()),
        (
            "institution_rules",
            institution_rules(ctx.institution).to_string(),
        ),
        ("consistency", ctx.consistency.clone()),
    ];
    let mut out = template.to_string();
    for (key, value) in pairs {
        out = out.replace(&format!("{{{{{key}}}}}"), &value);
    }
    out.trim_end().to_string()
}

/// Price-setting question with its answer contract.
pub fn price_question(params: &MarketParams) -> String {
    format!(
        "Set your two prices: the price for the small treatment and the price for the big treatment. \
         Each price is a whole number from {} to {}, and the small-treatment price may not exceed the big-treatment price. \
         Explain your reasoning, then end your reply with exactly one line of the form\n\
         ANSWER: small=X, big=Y",
        params.price_min, params.price_max
    )
}

/// Treatment and charging question for consumer `slot` with a `problem`.
pub fn treatment_question(slot: usize, problem: ProblemType, institution: Institution) -> String {
    let options = match institution {
        Institution::Verifiability => {
            "charge must match the treatment (LCT with low, HCT with high)"
        }
        Institution::Liability if problem == ProblemType::Big => "a big problem must receive HCT",
        _ => "any treatment may be combined with any charge",
    };
    format!(
        "Player B{} approached you and has a {problem} problem. Which treatment do you provide (LCT = small treatment, HCT = big treatment) \
         and which of your prices do you charge (low = small-treatment price, high = big-treatment price)? Under the rules, {options}. \
         End your reply with exactly one line of the form\n\
         ANSWER: treatment=LCT|HCT, charge=low|high",
        slot + 1
    )
}

/// Sent after a reply that could not be parsed.
pub fn correction(error: &str, format: &str) -> String {
    format!("Your answer could not be used ({error}). Reply again and end with exactly one line of the form\n{format}")
}

pub const PRICE_FORMAT: &str = "ANSWER: small=X, big=Y";
pub const TREATMENT_FORMAT: &str = "ANSWER: treatment=LCT|HCT, charge=low|high";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_interested_directive() {
        let d = build_objective_directive(Objective::SelfInterested, false);
        assert!(d.contains("Your only objective is to maximize your own payoff in this 1 round."));
        assert!(d.contains("You are not legally obligated"));
        assert!(d.starts_with("Remember that this is a one-shot game"));
    }

    #[test]
    fn no_objective_keeps_the_frame() {
        let d = build_objective_directive(Objective::NoObjective, false);
        assert!(!d.contains("objective is to maximize") && !d.contains("fairness"));
        assert!(
            d.contains("one-shot game")
                && d.ends_with("Think about this objective when making your choices")
        );
        assert!(!d.contains("  "));
    }

    #[test]
    fn inequity_averse_liable() {
        let d = build_objective_directive(Objective::InequityAverse, true);
        assert!(d.contains("You only care about fairness between yourself and Player B"));
        assert!(d.contains("legally obligated to solve the problem"));
        assert!(!d.contains("not legally"));
    }

    #[test]
    fn template_markers_are_filled() {
        let ctx = TemplateContext {
            institution: Institution::Verifiability,
            params: MarketParams::default(),
            framing: RoleFraming::HumanAi,
            consistency: String::new(),
        };
        let text = render_template(DEFAULT_EXPERT_TEMPLATE, &ctx);
        assert!(!text.contains("{{"), "{text}");
        assert!(text.contains("3 AI Player A's and 4 human Player B's"));
        assert!(text.contains("1.60"));
    }
}
