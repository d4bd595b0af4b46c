use super::config::{EnvKind, ExperimentConfig, LengthscaleRule};
use super::output::{HeldoutRow, RoundRow, SummaryRow};
use super::RunnerError;
use crate::domain::{realized_round_loss, ActionId, CostSpec, Example, MediatorDecision, RoundRecord};
use crate::env::{
    gauss_sine_draw, human_action, EnvError, GaussSineParams, NoisyHumanParams, TabularPool, GAUSS_SINE_CLASSES,
};
use crate::mediators::{decide, DecisionInputs, PolicyKind};
use crate::metrics::{heldout_metrics, mediator_counters, oracle_round};
use crate::model::{median_heuristic, KernelSettings, ModelState};
use crate::seed::{SeedSpec, StreamTag};

/// Everything the policies of one run share: the data stream, the noisy
/// human's actions, the heldout set, and the oracle model's per-round
/// marginals. Built once per `(master_seed, run_index)`.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub run_index: usize,
    pub m: usize,
    /// `D_0`: one labelled example per class.
    pub seeds: Vec<Example>,
    /// Round `t` uses `stream[t - 1]` as (context, expert action).
    pub stream: Vec<Example>,
    pub humans: Vec<ActionId>,
    pub heldout: Vec<Example>,
    pub oracle_marginals: Vec<Vec<f64>>,
    pub kernel: KernelSettings,
    pub costs: CostSpec,
}

/// Complete output of one policy on one run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub policy: String,
    pub run_id: usize,
    pub records: Vec<RoundRecord>,
    pub rounds: Vec<RoundRow>,
    pub heldout: Vec<HeldoutRow>,
    pub summary: SummaryRow,
    /// `|D_n|`, the learner's labelled set at the end of the run.
    pub labelled: usize,
}

pub fn prepare_run(
    config: &ExperimentConfig,
    pool: Option<&TabularPool>,
    run_index: usize,
) -> Result<RunContext, RunnerError> {
    let n = config.horizon();
    let seed = SeedSpec::new(config.master_seed, run_index as u64);
    let mut env_rng = seed.rng(StreamTag::Environment);

    let (m, seeds, stream, heldout): (usize, Vec<Example>, Vec<Example>, Vec<Example>) = match config.environment.kind {
        EnvKind::GaussSine => {
            let params = GaussSineParams {
                noise_q: config.environment.noise_q,
            };
            let m = GAUSS_SINE_CLASSES;
            let mut seeds: Vec<Option<Example>> = vec![None; m];
            let mut draws = 0usize;
            while seeds.iter().any(Option::is_none) {
                let ex = gauss_sine_draw(&params, &mut env_rng);
                let k = ex.1 .0;
                seeds[k].get_or_insert(ex);
                draws += 1;
                if draws > 100_000 {
                    return Err(EnvError::MissingClass(seeds.iter().position(Option::is_none).unwrap_or(0)).into());
                }
            }
            let seeds = seeds.into_iter().flatten().collect();
            let stream = (0..n).map(|_| gauss_sine_draw(&params, &mut env_rng)).collect();
            let heldout = (0..config.heldout_size)
                .map(|_| gauss_sine_draw(&params, &mut env_rng))
                .collect();
            (m, seeds, stream, heldout)
        }
        EnvKind::Tabular => {
            let pool = pool.ok_or_else(|| RunnerError::Config("tabular pool not loaded".into()))?;
            let heldout_n = config.heldout_size.min(pool.len().saturating_sub(n));
            let env = pool.draw_run(n, heldout_n, &mut env_rng)?;
            let mut seeds: Vec<Option<Example>> = vec![None; env.m];
            for ex in &env.examples {
                let k = ex.1 .0;
                if seeds[k].is_none() {
                    seeds[k] = Some(ex.clone());
                }
            }
            if let Some(k) = seeds.iter().position(Option::is_none) {
                return Err(EnvError::MissingClass(k).into());
            }
            (env.m, seeds.into_iter().flatten().collect(), env.examples, env.heldout)
        }
    };

    let mut human_rng = seed.rng(StreamTag::Human);
    let human = NoisyHumanParams { alpha: config.alpha };
    let humans = stream
        .iter()
        .map(|(_, y)| human_action(*y, &human, m, &mut human_rng))
        .collect();

    let kernel = resolve_kernel(config, &seeds, &stream);
    let costs = config.cost_spec(m)?;

    // The best-in-class model sees every label of the run.
    let mut all = seeds.clone();
    all.extend(stream.iter().cloned());
    let oracle = ModelState::fit(&all, m, kernel)?;
    let mut oracle_rng = seed.rng(StreamTag::Oracle);
    let oracle_marginals = stream
        .iter()
        .map(|(x, _)| oracle.predict_marginal(x, config.model.s, &mut oracle_rng))
        .collect();

    Ok(RunContext {
        run_index,
        m,
        seeds,
        stream,
        humans,
        heldout,
        oracle_marginals,
        kernel,
        costs,
    })
}

fn resolve_kernel(config: &ExperimentConfig, seeds: &[Example], stream: &[Example]) -> KernelSettings {
    let spec = &config.model;
    let lengthscale = match (spec.lengthscale, spec.lengthscale_rule) {
        (Some(l), _) => Some(l),
        (None, LengthscaleRule::Refit) => None,
        (None, LengthscaleRule::Contexts) => {
            let contexts: Vec<Vec<f64>> = seeds.iter().chain(stream).map(|(x, _)| x.clone()).collect();
            Some(median_heuristic(&contexts))
        }
    };
    KernelSettings {
        lengthscale,
        signal_variance: spec.signal_variance,
        jitter: spec.jitter,
        alpha_eps: spec.alpha_eps,
    }
}

/// Play one policy through a prepared run.
pub fn run_policy(
    config: &ExperimentConfig,
    ctx: &RunContext,
    policy: &PolicyKind,
) -> Result<RunArtifacts, RunnerError> {
    let seed = SeedSpec::new(config.master_seed, ctx.run_index as u64);
    let mut sample_rng = seed.rng(StreamTag::ModelSampling);
    let mut policy_rng = seed.rng(StreamTag::Policy);
    let mut heldout_rng = seed.rng(StreamTag::Heldout);
    let s = config.model.s;
    let eval_every = config.eval_every();
    let costs = ctx.costs;

    let mut model = ModelState::fit(&ctx.seeds, ctx.m, ctx.kernel)?;
    let mut records = Vec::with_capacity(ctx.stream.len());
    let mut heldout = Vec::new();
    for (i, (x, y)) in ctx.stream.iter().enumerate() {
        let t = i + 1;
        let h = ctx.humans[i];
        let oracle_marginal = &ctx.oracle_marginals[i];
        let samples = model.sample_predictives(x, s, &mut sample_rng);
        let marginal = samples.mean();
        let inputs = DecisionInputs {
            marginal: &marginal,
            samples: &samples,
            human_action: h,
            costs: &costs,
            t,
            m: ctx.m,
            oracle_marginal: Some(oracle_marginal),
        };
        let choice = decide(policy, &inputs, &mut policy_rng)?;
        let oracle = oracle_round(h, *y, oracle_marginal, &costs);
        let d = choice.decision;
        records.push(RoundRecord {
            t,
            context: x.clone(),
            human_action: h,
            model_action: choice.model_action,
            expert_action: *y,
            decision: d,
            system_action: RoundRecord::system_action_for(d, h, choice.model_action, *y),
            realized_loss: realized_round_loss(d, h, choice.model_action, *y, &costs),
            oracle_decision: oracle.decision,
            oracle_loss: oracle.loss,
            mi_value: choice.mi_value,
            adjusted_k_req: choice.adjusted_k_req,
        });
        if d == MediatorDecision::Request {
            model = model.update(&(x.clone(), *y))?;
        }
        if t % eval_every == 0 && !ctx.heldout.is_empty() {
            let h = heldout_metrics(&model, &ctx.heldout, s, &mut heldout_rng)?;
            heldout.push(HeldoutRow {
                run_id: ctx.run_index,
                t,
                mistake_rate: h.mistake_rate,
                cross_entropy: h.cross_entropy,
                auroc: h.auroc,
                auprc: h.auprc,
            });
        }
    }

    let rounds = RoundRow::from_records(ctx.run_index, &records);
    let counters = mediator_counters(&records);
    let requests = records
        .iter()
        .filter(|r| r.decision == MediatorDecision::Request)
        .count();
    let labelled = model.num_examples();
    debug_assert_eq!(labelled - ctx.m, requests);
    Ok(RunArtifacts {
        policy: policy.name().to_owned(),
        run_id: ctx.run_index,
        summary: SummaryRow {
            policy: policy.name().to_owned(),
            run_id: ctx.run_index,
            final_regret: rounds.last().map_or(0.0, |r| r.cum_regret),
            err_acc: counters.erroneous_acceptances,
            exc_int: counters.excessive_interventions,
            abs_shf: counters.abstention_shortfalls,
            requests,
        },
        records,
        rounds,
        heldout,
        labelled,
    })
}

/// Prepare run `run_index` and play `policy` through it.
pub fn run_single(
    config: &ExperimentConfig,
    policy: &PolicyKind,
    run_index: usize,
) -> Result<RunArtifacts, RunnerError> {
    let pool = super::suite::load_pool(config)?;
    let ctx = prepare_run(config, pool.as_ref(), run_index)?;
    run_policy(config, &ctx, policy)
}
