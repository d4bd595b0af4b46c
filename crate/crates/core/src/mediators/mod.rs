//! Mediator policies: the greedy cost-sensitive rule, UMPIRE, and the
//! benchmark adaptations from bandits and active learning.
//!
//! Every policy scores the same three arms,
//!
//! ```text
//! accept    = 1 - p(human action)
//! intervene = 1 - p(model action) + k_int
//! request   = k_req (or an adjusted request cost)
//! ```
//!
//! and picks the cheapest, breaking exact ties Accept < Intervene < Request.
//! Policies differ in which probability vector `p` they plug in, which
//! request cost they use, and whether they randomize on top.

mod info;
mod lambert;
mod matched;

pub use info::{entropy, g_transform, kappa0, mutual_info};
pub use lambert::lambert_w0;
pub use matched::{fit_matched_epsilon, MatchedEpsilon};

use rand::Rng;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use thiserror::Error;

use crate::domain::{ActionId, CostSpec, MediatorDecision};
use crate::model::PredictiveSampleSet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MediatorError {
    #[error("Lambert W0 is undefined below -1/e (got {0})")]
    LambertDomain(f64),
    #[error("predictive sample set is empty")]
    EmptySamples,
    #[error("sample row {row} does not sum to one (sum {sum})")]
    InvalidSampleRow { row: usize, sum: f64 },
    #[error("matched decaying request needs a fitted schedule")]
    MissingSchedule,
    #[error("oracle mediator needs the oracle model's marginal")]
    MissingOracle,
    #[error("no request curves to fit")]
    EmptyCurves,
    #[error("request curves have different lengths")]
    RaggedCurves,
    #[error("unknown policy {0:?}")]
    UnknownPolicy(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyKind {
    Human,
    Random,
    Supervised,
    CostSensitive,
    Thompson,
    FullThompson,
    EpsilonGreedy,
    EpsilonRequest,
    PessimisticBayesianSampling,
    BayesianActiveRequest,
    MatchedDecayingRequest(Option<Arc<MatchedEpsilon>>),
    Umpire {
        /// Request with probability epsilon before the UMPIRE rule.
        epsilon_floor: bool,
    },
    /// The best-in-class pair: greedy decisions on the oracle model's marginal.
    Oracle,
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Human => "human",
            PolicyKind::Random => "random",
            PolicyKind::Supervised => "supervised",
            PolicyKind::CostSensitive => "cost_sensitive",
            PolicyKind::Thompson => "thompson",
            PolicyKind::FullThompson => "full_thompson",
            PolicyKind::EpsilonGreedy => "epsilon_greedy",
            PolicyKind::EpsilonRequest => "epsilon_request",
            PolicyKind::PessimisticBayesianSampling => "pessimistic_bayesian_sampling",
            PolicyKind::BayesianActiveRequest => "bayesian_active_request",
            PolicyKind::MatchedDecayingRequest(_) => "matched_decaying_request",
            PolicyKind::Umpire { .. } => "umpire",
            PolicyKind::Oracle => "oracle",
        }
    }

    pub fn umpire() -> Self {
        PolicyKind::Umpire { epsilon_floor: false }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = MediatorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "human" => PolicyKind::Human,
            "random" => PolicyKind::Random,
            "supervised" => PolicyKind::Supervised,
            "cost_sensitive" => PolicyKind::CostSensitive,
            "thompson" => PolicyKind::Thompson,
            "full_thompson" => PolicyKind::FullThompson,
            "epsilon_greedy" => PolicyKind::EpsilonGreedy,
            "epsilon_request" => PolicyKind::EpsilonRequest,
            "pessimistic_bayesian_sampling" => PolicyKind::PessimisticBayesianSampling,
            "bayesian_active_request" => PolicyKind::BayesianActiveRequest,
            "matched_decaying_request" => PolicyKind::MatchedDecayingRequest(None),
            "umpire" => PolicyKind::umpire(),
            "oracle" => PolicyKind::Oracle,
            _ => return Err(MediatorError::UnknownPolicy(s.to_owned())),
        })
    }
}

/// Everything a mediator sees in one round.
#[derive(Debug, Clone, Copy)]
pub struct DecisionInputs<'a> {
    /// Predictive marginal; the row-mean of `samples`.
    pub marginal: &'a [f64],
    pub samples: &'a PredictiveSampleSet,
    pub human_action: ActionId,
    pub costs: &'a CostSpec,
    /// 1-based round index.
    pub t: usize,
    pub m: usize,
    /// Marginal of the oracle model, only consulted by [`PolicyKind::Oracle`].
    pub oracle_marginal: Option<&'a [f64]>,
}

/// A mediator's choice plus UMPIRE diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Choice {
    pub decision: MediatorDecision,
    /// The action used if the decision is `Intervene`.
    pub model_action: ActionId,
    /// Estimated mutual information (UMPIRE only, zero otherwise).
    pub mi_value: f64,
    /// Request cost the arm comparison used.
    pub adjusted_k_req: f64,
}

/// Most probable action, lowest index on exact ties.
pub fn argmax(p: &[f64]) -> ActionId {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate().skip(1) {
        if v > p[best] {
            best = i;
        }
    }
    ActionId(best)
}

/// Accept, intervene, and request values from the probabilities the policy
/// assigns to the human's and the model's action.
pub fn arm_values(p_human: f64, p_model: f64, k_int: f64, k_req: f64) -> [f64; 3] {
    [1.0 - p_human, 1.0 - p_model + k_int, k_req]
}

/// Cheapest arm; ties go to the earlier of Accept, Intervene, Request.
pub fn argmin_arm(values: [f64; 3]) -> MediatorDecision {
    let mut best = 0;
    for i in 1..3 {
        if values[i] < values[best] {
            best = i;
        }
    }
    MediatorDecision::ALL[best]
}

/// One-step risk minimization against `probs`, predicting its argmax.
fn greedy_on(probs: &[f64], human: ActionId, k_int: f64, k_req: f64) -> (MediatorDecision, ActionId) {
    let model = argmax(probs);
    let values = arm_values(probs[human.0], probs[model.0], k_int, k_req);
    (argmin_arm(values), model)
}

/// The greedy cost-sensitive mediator with request cost `effective_k_req`.
pub fn greedy_decide(inputs: &DecisionInputs<'_>, effective_k_req: f64) -> (MediatorDecision, ActionId) {
    greedy_on(
        inputs.marginal,
        inputs.human_action,
        inputs.costs.k_int,
        effective_k_req,
    )
}

/// UMPIRE request cost `(1 - kappa g(mi)) k_req`, clamped to `[0, k_req]`.
pub fn adjusted_request_cost(mi: f64, costs: &CostSpec, m: usize) -> f64 {
    let kappa = costs.kappa.unwrap_or_else(|| kappa0(m, costs.b));
    ((1.0 - kappa * g_transform(mi, costs.b)) * costs.k_req).clamp(0.0, costs.k_req)
}

/// UMPIRE: greedy mediation with the request cost discounted by the
/// expected improvement the revealed label could bring.
pub fn umpire_decide<R: Rng + ?Sized>(
    inputs: &DecisionInputs<'_>,
    epsilon_floor: bool,
    rng: &mut R,
) -> Result<Choice, MediatorError> {
    let mi = mutual_info(inputs.samples)?;
    let k_bar = adjusted_request_cost(mi, inputs.costs, inputs.m);
    let (mut decision, model_action) = greedy_decide(inputs, k_bar);
    if epsilon_floor && rng.random::<f64>() < inputs.costs.epsilon {
        decision = MediatorDecision::Request;
    }
    Ok(Choice {
        decision,
        model_action,
        mi_value: mi,
        adjusted_k_req: k_bar,
    })
}

/// Dispatch any policy.
pub fn decide<R: Rng + ?Sized>(
    kind: &PolicyKind,
    inputs: &DecisionInputs<'_>,
    rng: &mut R,
) -> Result<Choice, MediatorError> {
    if let PolicyKind::Umpire { epsilon_floor } = kind {
        return umpire_decide(inputs, *epsilon_floor, rng);
    }
    let (decision, model_action) = benchmark_decide(kind, inputs, rng)?;
    Ok(Choice {
        decision,
        model_action,
        mi_value: 0.0,
        adjusted_k_req: inputs.costs.k_req,
    })
}

/// Every non-UMPIRE policy.
pub fn benchmark_decide<R: Rng + ?Sized>(
    kind: &PolicyKind,
    inputs: &DecisionInputs<'_>,
    rng: &mut R,
) -> Result<(MediatorDecision, ActionId), MediatorError> {
    let costs = inputs.costs;
    let human = inputs.human_action;
    let greedy = || greedy_decide(inputs, costs.k_req);
    let predicted = argmax(inputs.marginal);
    Ok(match kind {
        PolicyKind::Human => (MediatorDecision::Accept, predicted),
        PolicyKind::Random => (MediatorDecision::ALL[rng.random_range(0..3)], predicted),
        PolicyKind::Supervised => {
            let decision = if rng.random::<f64>() < costs.epsilon {
                MediatorDecision::Request
            } else if predicted == human {
                MediatorDecision::Accept
            } else {
                MediatorDecision::Intervene
            };
            (decision, predicted)
        }
        PolicyKind::CostSensitive => greedy(),
        PolicyKind::Thompson | PolicyKind::FullThompson => {
            let row = inputs.samples.row(rng.random_range(0..inputs.samples.num_samples()));
            let (decision, sampled) = greedy_on(row, human, costs.k_int, costs.k_req);
            let model = if matches!(kind, PolicyKind::FullThompson) {
                sampled
            } else {
                predicted
            };
            (decision, model)
        }
        PolicyKind::EpsilonGreedy => {
            let (decision, model) = greedy();
            if rng.random::<f64>() < costs.epsilon {
                (MediatorDecision::ALL[rng.random_range(0..3)], model)
            } else {
                (decision, model)
            }
        }
        PolicyKind::EpsilonRequest => {
            let (decision, model) = greedy();
            if rng.random::<f64>() < costs.epsilon {
                (MediatorDecision::Request, model)
            } else {
                (decision, model)
            }
        }
        PolicyKind::PessimisticBayesianSampling => {
            let row = inputs.samples.row(rng.random_range(0..inputs.samples.num_samples()));
            let pessimistic: Vec<f64> = inputs.marginal.iter().zip(row).map(|(a, b)| a.min(*b)).collect();
            greedy_on(&pessimistic, human, costs.k_int, costs.k_req)
        }
        PolicyKind::BayesianActiveRequest => {
            let mi = mutual_info(inputs.samples)?;
            let p = (mi / (inputs.m as f64).ln()).clamp(0.0, 1.0);
            let (decision, model) = greedy();
            if rng.random::<f64>() < p {
                (MediatorDecision::Request, model)
            } else {
                (decision, model)
            }
        }
        PolicyKind::MatchedDecayingRequest(schedule) => {
            let schedule = schedule.as_ref().ok_or(MediatorError::MissingSchedule)?;
            let (decision, model) = greedy();
            if rng.random::<f64>() < schedule.epsilon_at(inputs.t) {
                (MediatorDecision::Request, model)
            } else {
                (decision, model)
            }
        }
        PolicyKind::Oracle => {
            let oracle = inputs.oracle_marginal.ok_or(MediatorError::MissingOracle)?;
            greedy_on(oracle, human, costs.k_int, costs.k_req)
        }
        PolicyKind::Umpire { epsilon_floor } => {
            let c = umpire_decide(inputs, *epsilon_floor, rng)?;
            (c.decision, c.model_action)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::{SeedSpec, StreamTag};
    use proptest::prelude::*;

    fn costs(k_int: f64, k_req: f64) -> CostSpec {
        CostSpec {
            k_int,
            k_req,
            ..CostSpec::default()
        }
    }

    fn inputs<'a>(
        marginal: &'a [f64],
        samples: &'a PredictiveSampleSet,
        human: usize,
        c: &'a CostSpec,
    ) -> DecisionInputs<'a> {
        DecisionInputs {
            marginal,
            samples,
            human_action: ActionId(human),
            costs: c,
            t: 1,
            m: marginal.len(),
            oracle_marginal: None,
        }
    }

    fn one(p: &[f64]) -> PredictiveSampleSet {
        PredictiveSampleSet::from_rows(vec![p.to_vec()]).unwrap()
    }

    #[test]
    fn greedy_examples() {
        let c = costs(0.1, 0.6);
        // confident at the human's action: accept 0.1 < intervene 0.2 < request 0.6
        let p = [0.9, 0.05, 0.05];
        let s = one(&p);
        assert_eq!(greedy_decide(&inputs(&p, &s, 0, &c), 0.6).0, MediatorDecision::Accept);

        // uniform: 2/3 vs 2/3 + 0.1 vs 0.6
        let p = [1.0 / 3.0; 3];
        let s = one(&p);
        assert_eq!(greedy_decide(&inputs(&p, &s, 1, &c), 0.6).0, MediatorDecision::Request);

        // 0.95 vs 0.15 vs 0.6
        let p = [0.05, 0.95];
        let s = one(&p);
        let (d, y) = greedy_decide(&inputs(&p, &s, 0, &c), 0.6);
        assert_eq!((d, y), (MediatorDecision::Intervene, ActionId(1)));
    }

    #[test]
    fn ties_prefer_cheaper_disruption() {
        assert_eq!(argmin_arm([0.5, 0.5, 0.5]), MediatorDecision::Accept);
        assert_eq!(argmin_arm([0.6, 0.5, 0.5]), MediatorDecision::Intervene);
        assert_eq!(argmax(&[0.4, 0.4, 0.2]), ActionId(0));
    }

    #[test]
    fn umpire_without_information_is_greedy() {
        let c = costs(0.1, 0.6);
        let p = [0.5, 0.3, 0.2];
        let s = PredictiveSampleSet::from_rows(vec![p.to_vec(); 4]).unwrap();
        let inp = inputs(&p, &s, 1, &c);
        let mut rng = SeedSpec::new(0, 0).rng(StreamTag::Policy);
        let choice = umpire_decide(&inp, false, &mut rng).unwrap();
        assert_eq!(choice.mi_value, 0.0);
        assert_eq!(choice.adjusted_k_req, 0.6);
        assert_eq!(choice.decision, greedy_decide(&inp, 0.6).0);
    }

    #[test]
    fn umpire_maximal_information_zeroes_request_cost() {
        let c = costs(0.1, 1.5);
        // three one-hot rows: mean is uniform, every row has zero entropy
        let s = PredictiveSampleSet::from_rows(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]])
            .unwrap();
        let marginal = s.mean();
        let inp = inputs(&marginal, &s, 0, &c);
        let mut rng = SeedSpec::new(0, 0).rng(StreamTag::Policy);
        let choice = umpire_decide(&inp, false, &mut rng).unwrap();
        assert!((choice.mi_value - 3f64.ln()).abs() < 1e-12);
        assert!(choice.adjusted_k_req.abs() < 1e-12);
        assert_eq!(choice.decision, MediatorDecision::Request);
        // CostSensitive would not request at k_req = 1.5
        assert_eq!(greedy_decide(&inp, 1.5).0, MediatorDecision::Accept);
    }

    #[test]
    fn umpire_uniform_rows_vs_split_rows() {
        // Same uniform marginal; only disagreement between samples differs.
        let c = costs(0.1, 0.9);
        let flat = PredictiveSampleSet::from_rows(vec![vec![1.0 / 3.0; 3]; 3]).unwrap();
        let split = PredictiveSampleSet::from_rows(vec![vec![0.8, 0.1, 0.1], vec![0.1, 0.8, 0.1], vec![0.1, 0.1, 0.8]])
            .unwrap();
        let mut rng = SeedSpec::new(0, 0).rng(StreamTag::Policy);
        let m_flat = flat.mean();
        let m_split = split.mean();
        let a = umpire_decide(&inputs(&m_flat, &flat, 0, &c), false, &mut rng).unwrap();
        let b = umpire_decide(&inputs(&m_split, &split, 0, &c), false, &mut rng).unwrap();
        // accept = 2/3, intervene = 2/3 + 0.1; request 0.9 without information
        assert_eq!(a.decision, MediatorDecision::Accept);
        // mi of the split rows = ln 3 - H(0.8,0.1,0.1), enumerated by hand
        let h = -(0.8f64 * 0.8f64.ln() + 2.0 * 0.1 * 0.1f64.ln());
        assert!((b.mi_value - (3f64.ln() - h)).abs() < 1e-12);
        let expected = adjusted_request_cost(3f64.ln() - h, &c, 3);
        assert!(expected < 2.0 / 3.0);
        assert_eq!(b.decision, MediatorDecision::Request);
    }

    #[test]
    fn human_always_accepts() {
        let c = costs(0.1, 0.6);
        let p = [0.01, 0.99];
        let s = one(&p);
        let mut rng = SeedSpec::new(0, 0).rng(StreamTag::Policy);
        let (d, _) = benchmark_decide(&PolicyKind::Human, &inputs(&p, &s, 0, &c), &mut rng).unwrap();
        assert_eq!(d, MediatorDecision::Accept);
    }

    #[test]
    fn epsilon_request_with_zero_epsilon_is_cost_sensitive() {
        let c = CostSpec {
            epsilon: 0.0,
            ..costs(0.1, 0.6)
        };
        let mut r1 = SeedSpec::new(1, 0).rng(StreamTag::Policy);
        let mut r2 = SeedSpec::new(1, 0).rng(StreamTag::Policy);
        let mut gen = SeedSpec::new(2, 0).rng(StreamTag::Environment);
        for _ in 0..500 {
            let a: f64 = gen.random();
            let b: f64 = gen.random::<f64>() * (1.0 - a);
            let p = [a, b, 1.0 - a - b];
            let s = one(&p);
            let inp = inputs(&p, &s, gen.random_range(0..3), &c);
            let x = benchmark_decide(&PolicyKind::EpsilonRequest, &inp, &mut r1).unwrap();
            let y = benchmark_decide(&PolicyKind::CostSensitive, &inp, &mut r2).unwrap();
            assert_eq!(x, y);
        }
    }

    #[test]
    fn bald_with_identical_rows_never_requests_from_information() {
        // k_req high enough that greedy never requests either
        let c = costs(0.1, 1.5);
        let p = [0.2, 0.5, 0.3];
        let s = PredictiveSampleSet::from_rows(vec![p.to_vec(); 8]).unwrap();
        let mut rng = SeedSpec::new(3, 0).rng(StreamTag::Policy);
        for _ in 0..2000 {
            let (d, _) =
                benchmark_decide(&PolicyKind::BayesianActiveRequest, &inputs(&p, &s, 0, &c), &mut rng).unwrap();
            assert_ne!(d, MediatorDecision::Request);
        }
    }

    #[test]
    fn matched_without_schedule_errors() {
        let c = costs(0.1, 0.6);
        let p = [0.5, 0.5];
        let s = one(&p);
        let mut rng = SeedSpec::new(0, 0).rng(StreamTag::Policy);
        let err = benchmark_decide(
            &PolicyKind::MatchedDecayingRequest(None),
            &inputs(&p, &s, 0, &c),
            &mut rng,
        )
        .unwrap_err();
        assert_eq!(err, MediatorError::MissingSchedule);
    }

    #[test]
    fn supervised_and_full_thompson_prediction() {
        let c = CostSpec {
            epsilon: 0.0,
            ..costs(0.1, 0.6)
        };
        let p = [0.3, 0.7];
        let s = PredictiveSampleSet::from_rows(vec![vec![0.9, 0.1]]).unwrap();
        let mut rng = SeedSpec::new(0, 0).rng(StreamTag::Policy);
        let (d, y) = benchmark_decide(&PolicyKind::Supervised, &inputs(&p, &s, 0, &c), &mut rng).unwrap();
        assert_eq!((d, y), (MediatorDecision::Intervene, ActionId(1)));
        let (_, y) = benchmark_decide(&PolicyKind::Thompson, &inputs(&p, &s, 0, &c), &mut rng).unwrap();
        assert_eq!(y, ActionId(1));
        let (d, y) = benchmark_decide(&PolicyKind::FullThompson, &inputs(&p, &s, 0, &c), &mut rng).unwrap();
        assert_eq!((d, y), (MediatorDecision::Accept, ActionId(0)));
    }

    #[test]
    fn policy_names_round_trip() {
        for name in [
            "human",
            "random",
            "supervised",
            "cost_sensitive",
            "thompson",
            "full_thompson",
            "epsilon_greedy",
            "epsilon_request",
            "pessimistic_bayesian_sampling",
            "bayesian_active_request",
            "matched_decaying_request",
            "umpire",
            "oracle",
        ] {
            let kind: PolicyKind = name.parse().unwrap();
            assert_eq!(kind.name(), name);
        }
        assert!("ucb".parse::<PolicyKind>().is_err());
    }

    fn prob_vec(raw: Vec<f64>) -> Vec<f64> {
        let z: f64 = raw.iter().sum();
        raw.iter().map(|v| v / z).collect()
    }

    proptest! {
        #[test]
        fn pessimism_requests_at_least_as_often_as_thompson(
            marg in proptest::collection::vec(0.01f64..1.0, 3),
            row in proptest::collection::vec(0.01f64..1.0, 3),
            human in 0usize..3,
            k_req in 0.0f64..1.2,
        ) {
            let marg = prob_vec(marg);
            let row = prob_vec(row);
            let c = costs(0.1, k_req);
            let pess: Vec<f64> = marg.iter().zip(&row).map(|(a, b)| a.min(*b)).collect();
            let (tp, _) = greedy_on(&row, ActionId(human), c.k_int, c.k_req);
            let (pp, _) = greedy_on(&pess, ActionId(human), c.k_int, c.k_req);
            if tp == MediatorDecision::Request {
                prop_assert_eq!(pp, MediatorDecision::Request);
            }
        }

        #[test]
        fn adjusted_cost_stays_in_range(
            rows in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 4), 1..8),
            k_req in 0.0f64..2.0,
        ) {
            let rows: Vec<Vec<f64>> = rows.into_iter().map(|r| prob_vec(r.into_iter().map(|v| v + 1e-6).collect())).collect();
            let s = PredictiveSampleSet::from_rows(rows).unwrap();
            let mi = mutual_info(&s).unwrap();
            let c = costs(0.1, k_req);
            let k_bar = adjusted_request_cost(mi, &c, 4);
            prop_assert!((0.0..=k_req).contains(&k_bar));
        }

        #[test]
        fn request_region_shrinks_with_cost(
            marg in proptest::collection::vec(0.01f64..1.0, 3),
            human in 0usize..3,
            k_lo in 0.0f64..1.6,
            dk in 0.0f64..0.5,
        ) {
            let marg = prob_vec(marg);
            let s = one(&marg);
            let c = costs(0.1, 0.6);
            let inp = inputs(&marg, &s, human, &c);
            let hi = greedy_decide(&inp, k_lo + dk).0;
            let lo = greedy_decide(&inp, k_lo).0;
            if hi == MediatorDecision::Request {
                prop_assert_eq!(lo, MediatorDecision::Request);
            }
        }
    }
}
