//! Shared domain types for online decision mediation and the realized
//! per-round loss.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Real-valued feature vector of one incoming instance.
pub type ContextVector = Vec<f64>;

/// A labelled example: context plus the expert's action.
pub type Example = (ContextVector, ActionId);

/// Class label in `[0, m)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionId(pub usize);

impl ActionId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// What the mediator does with the human's proposed action.
///
/// The integer encoding (0/1/2) is the one written to the round logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MediatorDecision {
    /// Keep the human's action.
    Accept = 0,
    /// Override with the model's action.
    Intervene = 1,
    /// Defer to the expert; the only decision that reveals a label.
    Request = 2,
}

impl MediatorDecision {
    pub const ALL: [MediatorDecision; 3] = [
        MediatorDecision::Accept,
        MediatorDecision::Intervene,
        MediatorDecision::Request,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(MediatorDecision::Accept),
            1 => Some(MediatorDecision::Intervene),
            2 => Some(MediatorDecision::Request),
            _ => None,
        }
    }
}

/// Costs and coefficients shared by every mediator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    /// Cost of intervening with the model's action.
    pub k_int: f64,
    /// Cost of requesting the expert's action.
    pub k_req: f64,
    /// Exploration rate of the epsilon-style policies.
    pub epsilon: f64,
    /// UMPIRE tradeoff coefficient; `None` means the normalizing default for the
    /// active number of classes.
    pub kappa: Option<f64>,
    /// Half-range of the centered risk.
    pub b: f64,
}

impl Default for CostSpec {
    fn default() -> Self {
        Self {
            k_int: 0.1,
            k_req: 0.6,
            epsilon: 0.1,
            kappa: None,
            b: 0.5,
        }
    }
}

impl CostSpec {
    /// Request cost rule used for the main experiments: `m/(m-1)` rounded
    /// down to one decimal.
    pub fn default_k_req(m: usize) -> f64 {
        assert!(m >= 2, "need at least two classes");
        // Work in tenths with a small slack so 1.5 does not come out as 1.4.
        let tenths = (10.0 * m as f64 / (m as f64 - 1.0) + 1e-9).floor();
        tenths / 10.0
    }
}

/// Full trace of one round of play.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: usize,
    pub context: ContextVector,
    pub human_action: ActionId,
    pub model_action: ActionId,
    /// Always stored for evaluation; the learner only sees it on `Request`.
    pub expert_action: ActionId,
    pub decision: MediatorDecision,
    pub system_action: ActionId,
    pub realized_loss: f64,
    pub oracle_decision: MediatorDecision,
    pub oracle_loss: f64,
    pub mi_value: f64,
    pub adjusted_k_req: f64,
}

impl RoundRecord {
    /// The action the decision system as a whole outputs.
    pub fn system_action_for(
        decision: MediatorDecision,
        human_action: ActionId,
        model_action: ActionId,
        expert_action: ActionId,
    ) -> ActionId {
        match decision {
            MediatorDecision::Accept => human_action,
            MediatorDecision::Intervene => model_action,
            MediatorDecision::Request => expert_action,
        }
    }
}

/// Single-sample realization of the system risk of one round.
pub fn realized_round_loss(
    decision: MediatorDecision,
    human_action: ActionId,
    model_action: ActionId,
    expert_action: ActionId,
    costs: &CostSpec,
) -> f64 {
    match decision {
        MediatorDecision::Accept => zero_one(human_action, expert_action),
        MediatorDecision::Intervene => zero_one(model_action, expert_action) + costs.k_int,
        MediatorDecision::Request => costs.k_req,
    }
}

/// Zero-one loss rescaled to `{-b, +b}`.
pub fn centered_loss(y: ActionId, y_hat: ActionId, b: f64) -> f64 {
    debug_assert!(b > 0.0);
    (zero_one(y, y_hat) - 0.5) * 2.0 * b
}

fn zero_one(a: ActionId, b: ActionId) -> f64 {
    if a == b {
        0.0
    } else {
        1.0
    }
}
