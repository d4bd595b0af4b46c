use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::ActionId;

/// Human that follows the expert except for random perturbations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisyHumanParams {
    /// Probability of replacing the expert's action with a different one.
    pub alpha: f64,
}

/// With probability `1 - alpha` the expert's action, otherwise a uniform
/// draw from the `m - 1` other actions. The error rate is exactly `alpha`.
pub fn human_action<R: Rng + ?Sized>(
    expert_action: ActionId,
    params: &NoisyHumanParams,
    m: usize,
    rng: &mut R,
) -> ActionId {
    debug_assert!(m >= 2);
    let u: f64 = rng.random();
    if u >= params.alpha {
        return expert_action;
    }
    let r = rng.random_range(0..m - 1);
    ActionId(if r >= expert_action.0 { r + 1 } else { r })
}
