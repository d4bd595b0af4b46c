//! Evaluation quantities: system loss, regret and mistakes, mediator error
//! counters, heldout model metrics, and run aggregation.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{realized_round_loss, ActionId, CostSpec, Example, MediatorDecision, RoundRecord};
use crate::mediators::argmax;
use crate::model::ModelState;

/// Floor applied to probabilities inside the cross entropy.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("heldout set is empty")]
    EmptyHeldout,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Aggregation {
    PerRound,
    Cumulative,
    MovingAverage(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    pub name: String,
    pub values: Vec<f64>,
    pub aggregation: Aggregation,
}

impl MetricSeries {
    pub fn per_round(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            values,
            aggregation: Aggregation::PerRound,
        }
    }
}

/// What the best-in-class pair does in one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleRound {
    pub decision: MediatorDecision,
    pub model_action: ActionId,
    pub loss: f64,
}

/// Greedy mediation on the oracle model's marginal, scored against the expert.
pub fn oracle_round(
    human_action: ActionId,
    expert_action: ActionId,
    oracle_marginal: &[f64],
    costs: &CostSpec,
) -> OracleRound {
    let model_action = argmax(oracle_marginal);
    let values = crate::mediators::arm_values(
        oracle_marginal[human_action.0],
        oracle_marginal[model_action.0],
        costs.k_int,
        costs.k_req,
    );
    let decision = crate::mediators::argmin_arm(values);
    OracleRound {
        decision,
        model_action,
        loss: realized_round_loss(decision, human_action, model_action, expert_action, costs),
    }
}

/// Running sum of per-round system-minus-oracle losses.
pub fn cumulative_regret(
    system_losses: &MetricSeries,
    oracle_losses: &MetricSeries,
) -> Result<MetricSeries, MetricsError> {
    let (a, b) = (&system_losses.values, &oracle_losses.values);
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    let mut acc = 0.0;
    let values = a
        .iter()
        .zip(b)
        .map(|(s, o)| {
            acc += s - o;
            acc
        })
        .collect();
    Ok(MetricSeries {
        name: "regret".into(),
        values,
        aggregation: Aggregation::Cumulative,
    })
}

/// Whether the system's final action differs from the expert's.
pub fn system_mistake(record: &RoundRecord) -> u8 {
    u8::from(record.system_action != record.expert_action)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MediatorCounters {
    /// Accepted a wrong human action.
    pub erroneous_acceptances: usize,
    /// Intervened where the oracle would accept or request.
    pub excessive_interventions: usize,
    /// Did not request although both human and model were wrong.
    pub abstention_shortfalls: usize,
}

impl MediatorCounters {
    pub fn observe(&mut self, r: &RoundRecord) {
        let human_wrong = r.human_action != r.expert_action;
        let model_wrong = r.model_action != r.expert_action;
        match r.decision {
            MediatorDecision::Accept => {
                if human_wrong {
                    self.erroneous_acceptances += 1;
                }
            }
            MediatorDecision::Intervene => {
                if r.oracle_decision != MediatorDecision::Intervene {
                    self.excessive_interventions += 1;
                }
            }
            MediatorDecision::Request => {}
        }
        if r.decision != MediatorDecision::Request && human_wrong && model_wrong {
            self.abstention_shortfalls += 1;
        }
    }
}

pub fn mediator_counters(records: &[RoundRecord]) -> MediatorCounters {
    let mut c = MediatorCounters::default();
    records.iter().for_each(|r| c.observe(r));
    c
}

/// Cumulative counters after each round.
pub fn counter_series(records: &[RoundRecord]) -> Vec<MediatorCounters> {
    let mut c = MediatorCounters::default();
    records
        .iter()
        .map(|r| {
            c.observe(r);
            c
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeldoutMetrics {
    pub mistake_rate: f64,
    pub cross_entropy: f64,
    /// One-vs-rest macro average; NaN when no class is scorable.
    pub auroc: f64,
    pub auprc: f64,
}

/// Evaluate the model's predictive marginal on a heldout set. The state is
/// only read.
pub fn heldout_metrics<R: Rng + ?Sized>(
    state: &ModelState,
    heldout: &[Example],
    s: usize,
    rng: &mut R,
) -> Result<HeldoutMetrics, MetricsError> {
    let probs: Vec<Vec<f64>> = heldout.iter().map(|(x, _)| state.predict_marginal(x, s, rng)).collect();
    let labels: Vec<ActionId> = heldout.iter().map(|e| e.1).collect();
    score_predictions(&probs, &labels)
}

/// Heldout metrics from explicit class-probability rows.
pub fn score_predictions(probs: &[Vec<f64>], labels: &[ActionId]) -> Result<HeldoutMetrics, MetricsError> {
    if probs.is_empty() {
        return Err(MetricsError::EmptyHeldout);
    }
    if probs.len() != labels.len() {
        return Err(MetricsError::LengthMismatch(probs.len(), labels.len()));
    }
    let n = probs.len() as f64;
    let mistakes = probs.iter().zip(labels).filter(|(p, y)| argmax(p) != **y).count() as f64;
    let cross_entropy = probs
        .iter()
        .zip(labels)
        .map(|(p, y)| -p[y.0].max(PROBABILITY_FLOOR).ln())
        .sum::<f64>()
        / n;

    let m = probs[0].len();
    let (mut roc, mut pr, mut scored) = (0.0, 0.0, 0usize);
    for k in 0..m {
        let positives: Vec<bool> = labels.iter().map(|y| y.0 == k).collect();
        let scores: Vec<f64> = probs.iter().map(|p| p[k]).collect();
        match (auroc(&scores, &positives), auprc(&scores, &positives)) {
            (Some(a), Some(b)) => {
                roc += a;
                pr += b;
                scored += 1;
            }
            _ => log::debug!("class {k} skipped in AUC macro average (single-class heldout column)"),
        }
    }
    let (auroc, auprc) = if scored == 0 {
        (f64::NAN, f64::NAN)
    } else {
        (roc / scored as f64, pr / scored as f64)
    };
    Ok(HeldoutMetrics {
        mistake_rate: mistakes / n,
        cross_entropy,
        auroc,
        auprc,
    })
}

/// Operating points `(tp, fp)` at each distinct score threshold, high to low.
fn operating_points(scores: &[f64], positives: &[bool]) -> Vec<(f64, f64)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0.0, 0.0);
    for (i, &ix) in order.iter().enumerate() {
        if positives[ix] {
            tp += 1.0;
        } else {
            fp += 1.0;
        }
        let last_of_tie = order.get(i + 1).is_none_or(|&next| scores[next] != scores[ix]);
        if last_of_tie {
            points.push((tp, fp));
        }
    }
    points
}

/// Trapezoidal area under the ROC curve; `None` without both classes.
pub fn auroc(scores: &[f64], positives: &[bool]) -> Option<f64> {
    let p = positives.iter().filter(|&&b| b).count() as f64;
    let n = positives.len() as f64 - p;
    if p == 0.0 || n == 0.0 {
        return None;
    }
    let mut area = 0.0;
    let (mut prev_tpr, mut prev_fpr) = (0.0, 0.0);
    for (tp, fp) in operating_points(scores, positives) {
        let (tpr, fpr) = (tp / p, fp / n);
        area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        prev_tpr = tpr;
        prev_fpr = fpr;
    }
    Some(area)
}

/// Trapezoidal area under the precision-recall curve, anchored at
/// `(recall 0, precision 1)`; `None` without both classes.
pub fn auprc(scores: &[f64], positives: &[bool]) -> Option<f64> {
    let p = positives.iter().filter(|&&b| b).count() as f64;
    if p == 0.0 || p == positives.len() as f64 {
        return None;
    }
    let mut area = 0.0;
    let (mut prev_recall, mut prev_precision) = (0.0, 1.0);
    for (tp, fp) in operating_points(scores, positives) {
        let recall = tp / p;
        let precision = tp / (tp + fp);
        area += (recall - prev_recall) * (precision + prev_precision) / 2.0;
        prev_recall = recall;
        prev_precision = precision;
    }
    Some(area)
}

/// Mean of the last `min(window, t + 1)` values at every `t`.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "window must be positive");
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for t in 0..values.len() {
        sum += values[t];
        if t >= window {
            sum -= values[t - window];
        }
        out.push(sum / (t + 1).min(window) as f64);
    }
    out
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Pointwise mean and standard deviation across equally long series.
pub fn aggregate_series(series: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let len = series.iter().map(Vec::len).min().unwrap_or(0);
    (0..len)
        .map(|t| {
            let column: Vec<f64> = series.iter().map(|s| s[t]).collect();
            mean_std(&column)
        })
        .unzip()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::{SeedSpec, StreamTag};
    use proptest::prelude::*;

    fn costs() -> CostSpec {
        CostSpec {
            k_int: 0.1,
            k_req: 0.6,
            ..CostSpec::default()
        }
    }

    fn record(decision: MediatorDecision, h: usize, p: usize, y: usize, oracle: MediatorDecision) -> RoundRecord {
        let (h, p, y) = (ActionId(h), ActionId(p), ActionId(y));
        RoundRecord {
            t: 1,
            context: vec![],
            human_action: h,
            model_action: p,
            expert_action: y,
            decision,
            system_action: RoundRecord::system_action_for(decision, h, p, y),
            realized_loss: realized_round_loss(decision, h, p, y, &costs()),
            oracle_decision: oracle,
            oracle_loss: 0.0,
            mi_value: 0.0,
            adjusted_k_req: 0.6,
        }
    }

    #[test]
    fn oracle_round_examples() {
        let c = costs();
        let onehot = [0.0, 1.0, 0.0];
        let o = oracle_round(ActionId(1), ActionId(1), &onehot, &c);
        assert_eq!((o.decision, o.loss), (MediatorDecision::Accept, 0.0));
        let o = oracle_round(ActionId(2), ActionId(1), &onehot, &c);
        assert_eq!(o.decision, MediatorDecision::Intervene);
        assert!((o.loss - 0.1).abs() < 1e-15);
    }

    #[test]
    fn regret_examples() {
        let s = MetricSeries::per_round("s", vec![0.3, 0.2, 0.9]);
        let zero = cumulative_regret(&s, &s).unwrap();
        assert!(zero.values.iter().all(|&v| v == 0.0));

        let o = MetricSeries::per_round("o", vec![0.2, 0.1, 0.8]);
        let r = cumulative_regret(&s, &o).unwrap();
        for (t, v) in r.values.iter().enumerate() {
            assert!((v - 0.1 * (t + 1) as f64).abs() < 1e-12);
        }
        let short = MetricSeries::per_round("x", vec![0.0]);
        assert_eq!(cumulative_regret(&s, &short), Err(MetricsError::LengthMismatch(3, 1)));
    }

    #[test]
    fn regret_matches_prefix_sums() {
        let mut rng = SeedSpec::new(9, 0).rng(StreamTag::Environment);
        let a: Vec<f64> = (0..200).map(|_| rng.random()).collect();
        let b: Vec<f64> = (0..200).map(|_| rng.random()).collect();
        let r = cumulative_regret(
            &MetricSeries::per_round("a", a.clone()),
            &MetricSeries::per_round("b", b.clone()),
        )
        .unwrap();
        for t in 0..200 {
            let direct: f64 = (0..=t).map(|i| a[i] - b[i]).sum();
            assert!((r.values[t] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn system_mistake_examples() {
        use MediatorDecision::*;
        assert_eq!(system_mistake(&record(Request, 0, 0, 1, Accept)), 0);
        assert_eq!(system_mistake(&record(Accept, 1, 0, 1, Accept)), 0);
        assert_eq!(system_mistake(&record(Intervene, 1, 0, 1, Accept)), 1);
    }

    #[test]
    fn counter_examples() {
        use MediatorDecision::*;
        let all_request: Vec<RoundRecord> = (0..5).map(|i| record(Request, i % 2, 1, 0, Intervene)).collect();
        assert_eq!(mediator_counters(&all_request), MediatorCounters::default());

        // round 1: accept a wrong human, model right -> erroneous acceptance only
        // round 2: intervene correctly where the oracle accepts -> excessive intervention only
        // round 3: request... no; intervene with both wrong where oracle intervenes
        //          -> abstention shortfall only
        let trace = vec![
            record(Accept, 1, 0, 0, Intervene),
            record(Intervene, 0, 0, 0, Accept),
            record(Intervene, 1, 2, 0, Intervene),
        ];
        let c = mediator_counters(&trace);
        assert_eq!(
            (
                c.erroneous_acceptances,
                c.excessive_interventions,
                c.abstention_shortfalls
            ),
            (1, 1, 1)
        );
        let series = counter_series(&trace);
        assert_eq!(series.last(), Some(&c));
    }

    #[test]
    fn perfect_mediator_has_no_errors() {
        use MediatorDecision::*;
        let trace = vec![record(Accept, 0, 0, 0, Accept), record(Accept, 2, 2, 2, Accept)];
        assert_eq!(mediator_counters(&trace), MediatorCounters::default());
    }

    #[test]
    fn heldout_perfect_and_uniform() {
        let labels: Vec<ActionId> = [0, 1, 2, 1, 0].iter().map(|&i| ActionId(i)).collect();
        let onehot: Vec<Vec<f64>> = labels
            .iter()
            .map(|y| (0..3).map(|k| if k == y.0 { 1.0 } else { 0.0 }).collect())
            .collect();
        let h = score_predictions(&onehot, &labels).unwrap();
        assert_eq!(h.mistake_rate, 0.0);
        assert!(h.cross_entropy.abs() < 1e-15);
        assert_eq!((h.auroc, h.auprc), (1.0, 1.0));

        let labels: Vec<ActionId> = [0, 1, 0, 1].iter().map(|&i| ActionId(i)).collect();
        let uniform = vec![vec![0.5, 0.5]; 4];
        let h = score_predictions(&uniform, &labels).unwrap();
        assert_eq!(h.mistake_rate, 0.5);
        assert!((h.cross_entropy - 2f64.ln()).abs() < 1e-15);
        assert_eq!(h.auroc, 0.5);
        assert_eq!(score_predictions(&[], &[]), Err(MetricsError::EmptyHeldout));
    }

    /// Probability that a random positive outranks a random negative, ties
    /// counting one half, by enumerating every pair.
    fn pairwise_auroc(scores: &[f64], pos: &[bool]) -> f64 {
        let (mut wins, mut pairs) = (0.0, 0.0);
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if pos[i] && !pos[j] {
                    pairs += 1.0;
                    wins += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn four_point_rank_statistics() {
        let scores = [0.9, 0.4, 0.6, 0.2];
        let pos = [true, true, false, false];
        // pairs: (0.9>0.6), (0.9>0.2), (0.4<0.6), (0.4>0.2) -> 3/4
        assert_eq!(auroc(&scores, &pos), Some(0.75));
        assert_eq!(pairwise_auroc(&scores, &pos), 0.75);
        // PR points by threshold: (r.5, p1), (r.5, p.5), (r1, p2/3), (r1, p.5)
        // trapezoids from (0,1): .5*1 + 0 + .5*(.5+2/3)/2 + 0
        let want = 0.5 + 0.5 * (0.5 + 2.0 / 3.0) / 2.0;
        assert!((auprc(&scores, &pos).unwrap() - want).abs() < 1e-15);
        assert_eq!(auroc(&scores, &[true; 4]), None);
    }

    #[test]
    fn heldout_metrics_leave_model_untouched() {
        let data: Vec<Example> = vec![
            (vec![0.0], ActionId(0)),
            (vec![1.0], ActionId(1)),
            (vec![2.0], ActionId(0)),
        ];
        let model = ModelState::fit(&data, 2, Default::default()).unwrap();
        let before = model.latent_posterior(&[0.5]);
        let mut rng = SeedSpec::new(0, 0).rng(StreamTag::Heldout);
        let h = heldout_metrics(&model, &data, 16, &mut rng).unwrap();
        assert!(h.cross_entropy.is_finite());
        assert_eq!(model.latent_posterior(&[0.5]), before);
        assert_eq!(
            heldout_metrics(&model, &[], 16, &mut rng),
            Err(MetricsError::EmptyHeldout)
        );
    }

    #[test]
    fn moving_average_examples() {
        let ramp: Vec<f64> = (0..10).map(f64::from).collect();
        assert_eq!(moving_average(&ramp, 1), ramp);
        assert_eq!(moving_average(&[3.0; 7], 4), vec![3.0; 7]);
        let ma = moving_average(&ramp, 5);
        assert_eq!(ma[9], (5.0 + 6.0 + 7.0 + 8.0 + 9.0) / 5.0);
        assert_eq!(ma[1], 0.5);
    }

    #[test]
    fn aggregate_three_runs() {
        let runs = vec![vec![1.0, 2.0], vec![2.0, 2.0], vec![6.0, 2.0]];
        let (mean, std) = aggregate_series(&runs);
        assert_eq!(mean, vec![3.0, 2.0]);
        // population sd of {1, 2, 6}: sqrt(((-2)^2 + 1 + 9)/3)
        assert!((std[0] - (14.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(std[1], 0.0);
    }

    proptest! {
        #[test]
        fn auroc_is_rank_invariant(
            raw in proptest::collection::vec((0.0f64..1.0, any::<bool>()), 2..40),
            slope in 0.1f64..10.0,
            shift in -5.0f64..5.0,
        ) {
            let scores: Vec<f64> = raw.iter().map(|r| r.0).collect();
            let pos: Vec<bool> = raw.iter().map(|r| r.1).collect();
            let scaled: Vec<f64> = scores.iter().map(|s| slope * s + shift).collect();
            let a = auroc(&scores, &pos);
            let b = auroc(&scaled, &pos);
            prop_assert_eq!(a.is_some(), b.is_some());
            if let (Some(a), Some(b)) = (a, b) {
                prop_assert!((a - b).abs() < 1e-12);
                prop_assert!((a - pairwise_auroc(&scores, &pos)).abs() < 1e-12);
            }
        }
    }
}
