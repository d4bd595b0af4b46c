use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use super::config::{EnvKind, ExperimentConfig, SweepAxis};
use super::output::{
    read_heldout_csv, read_rounds_csv, write_heldout_csv, write_rounds_csv, write_summary_csv, write_table, HeldoutRow,
    RoundRow, SummaryRow,
};
use super::run::{prepare_run, run_policy, RunArtifacts, RunContext};
use super::{fmt_float, RunnerError};
use crate::env::{TabularOptions, TabularPool};
use crate::mediators::{fit_matched_epsilon, MatchedEpsilon, PolicyKind};
use crate::metrics::{aggregate_series, mean_std, moving_average};

/// Moving-average window of the evolution-of-actions series.
pub const ACTION_WINDOW: usize = 10;

/// Across-run statistics of one policy (population standard deviations).
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyAggregate {
    pub policy: String,
    /// Successful runs.
    pub runs: usize,
    pub final_regret_mean: f64,
    pub final_regret_std: f64,
    /// Mean per-round realized loss over the whole horizon.
    pub avg_loss_mean: f64,
    pub avg_loss_std: f64,
    pub requests_mean: f64,
    pub err_acc_mean: f64,
    pub exc_int_mean: f64,
    pub abs_shf_mean: f64,
}

#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub config: ExperimentConfig,
    /// Policy-major, in configuration order, then by run index.
    pub artifacts: Vec<RunArtifacts>,
    /// `(policy, run_id, error)` of every run that aborted.
    pub failures: Vec<(String, usize, String)>,
    pub aggregates: Vec<PolicyAggregate>,
    /// Request schedule fitted for `matched_decaying_request`, if any.
    pub matched_schedule: Option<MatchedEpsilon>,
}

impl SuiteOutcome {
    pub fn runs_of<'a>(&'a self, policy: &'a str) -> impl Iterator<Item = &'a RunArtifacts> + 'a {
        self.artifacts.iter().filter(move |a| a.policy == policy)
    }

    pub fn aggregate(&self, policy: &str) -> Option<&PolicyAggregate> {
        self.aggregates.iter().find(|a| a.policy == policy)
    }
}

pub(crate) fn load_pool(config: &ExperimentConfig) -> Result<Option<TabularPool>, RunnerError> {
    if config.environment.kind != EnvKind::Tabular {
        return Ok(None);
    }
    let env = &config.environment;
    let path = env
        .path
        .as_ref()
        .ok_or_else(|| RunnerError::Config("tabular environment needs `path`".into()))?;
    let label = env
        .label_column
        .as_ref()
        .ok_or_else(|| RunnerError::Config("tabular environment needs `label_column`".into()))?;
    let opts = TabularOptions {
        label_column: label.clone(),
        feature_columns: env.feature_columns.clone(),
        delimiter: env.delimiter,
    };
    Ok(Some(TabularPool::load(path, &opts)?))
}

pub fn aggregate_runs(policy: &str, runs: &[&RunArtifacts]) -> PolicyAggregate {
    let pick = |f: &dyn Fn(&RunArtifacts) -> f64| -> Vec<f64> { runs.iter().map(|a| f(a)).collect() };
    let (final_regret_mean, final_regret_std) = mean_std(&pick(&|a| a.summary.final_regret));
    let (avg_loss_mean, avg_loss_std) = mean_std(&pick(&|a| {
        a.rounds.iter().map(|r| r.realized_loss).sum::<f64>() / a.rounds.len().max(1) as f64
    }));
    PolicyAggregate {
        policy: policy.to_owned(),
        runs: runs.len(),
        final_regret_mean,
        final_regret_std,
        avg_loss_mean,
        avg_loss_std,
        requests_mean: mean_std(&pick(&|a| a.summary.requests as f64)).0,
        err_acc_mean: mean_std(&pick(&|a| a.summary.err_acc as f64)).0,
        exc_int_mean: mean_std(&pick(&|a| a.summary.exc_int as f64)).0,
        abs_shf_mean: mean_std(&pick(&|a| a.summary.abs_shf as f64)).0,
    }
}

/// Execute every policy on every run. Runs and policies are spread over a
/// thread pool; each run's round loop is sequential, and results are
/// collected in a fixed order, so output does not depend on scheduling.
pub fn run_suite(config: &ExperimentConfig) -> Result<SuiteOutcome, RunnerError> {
    config.validate()?;
    let kinds = config.policy_kinds()?;
    let pool = load_pool(config)?;
    let threads = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads.unwrap_or(0))
        .build()
        .map_err(|e| RunnerError::ThreadPool(e.to_string()))?;
    threads.install(|| execute(config, kinds, pool.as_ref()))
}

type Slot = Result<RunArtifacts, String>;

fn execute(
    config: &ExperimentConfig,
    mut kinds: Vec<PolicyKind>,
    pool: Option<&TabularPool>,
) -> Result<SuiteOutcome, RunnerError> {
    let contexts: Vec<Result<RunContext, String>> = (0..config.runs)
        .into_par_iter()
        .map(|r| prepare_run(config, pool, r).map_err(|e| e.to_string()))
        .collect();

    let play = |kind: &PolicyKind| -> Vec<Slot> {
        contexts
            .par_iter()
            .map(|ctx| match ctx {
                Ok(ctx) => run_policy(config, ctx, kind).map_err(|e| e.to_string()),
                Err(e) => Err(e.clone()),
            })
            .collect()
    };

    // Load a configured schedule up front.
    let mut schedule = None;
    if let Some(path) = &config.policy_params.matched_schedule {
        let s = Arc::new(load_schedule(path)?);
        for k in kinds.iter_mut() {
            if let PolicyKind::MatchedDecayingRequest(slot) = k {
                *slot = Some(Arc::clone(&s));
            }
        }
        schedule = Some(s);
    }
    let needs_fit = |k: &PolicyKind| matches!(k, PolicyKind::MatchedDecayingRequest(None));

    let first: Vec<(usize, &PolicyKind)> = kinds.iter().enumerate().filter(|(_, k)| !needs_fit(k)).collect();
    let mut slots: Vec<Option<Vec<Slot>>> = vec![None; kinds.len()];
    let finished: Vec<(usize, Vec<Slot>)> = first.par_iter().map(|&(i, k)| (i, play(k))).collect();
    for (i, res) in finished {
        slots[i] = Some(res);
    }

    if kinds.iter().any(needs_fit) {
        let umpire_ix = kinds.iter().position(|k| matches!(k, PolicyKind::Umpire { .. }));
        let umpire_runs: Vec<Slot> = match umpire_ix.and_then(|i| slots[i].clone()) {
            Some(r) => r,
            None => play(&PolicyKind::Umpire {
                epsilon_floor: config.policy_params.umpire_epsilon_floor,
            }),
        };
        let rows: Vec<RoundRow> = umpire_runs
            .iter()
            .filter_map(|r| r.as_ref().ok())
            .flat_map(|a| a.rounds.iter().cloned())
            .collect();
        let fitted = Arc::new(fit_matched_from_rounds(&rows)?);
        let kind = PolicyKind::MatchedDecayingRequest(Some(Arc::clone(&fitted)));
        for i in 0..kinds.len() {
            if needs_fit(&kinds[i]) {
                slots[i] = Some(play(&kind));
            }
        }
        schedule = Some(fitted);
    }

    let mut artifacts = Vec::new();
    let mut failures = Vec::new();
    let mut aggregates = Vec::new();
    for (kind, runs) in kinds.iter().zip(slots) {
        let mut ok = Vec::new();
        for (run_id, slot) in runs.expect("every policy played").into_iter().enumerate() {
            match slot {
                Ok(a) => ok.push(a),
                Err(e) => {
                    log::error!("policy {} run {run_id} failed: {e}", kind.name());
                    failures.push((kind.name().to_owned(), run_id, e));
                }
            }
        }
        if !ok.is_empty() {
            let refs: Vec<&RunArtifacts> = ok.iter().collect();
            aggregates.push(aggregate_runs(kind.name(), &refs));
        }
        artifacts.extend(ok);
    }
    if artifacts.is_empty() {
        return Err(RunnerError::AllRunsFailed(
            failures
                .first()
                .map(|f| format!("{} ({})", f.0, f.2))
                .unwrap_or_default(),
        ));
    }
    Ok(SuiteOutcome {
        config: config.clone(),
        artifacts,
        failures,
        aggregates,
        matched_schedule: schedule.map(|s| (*s).clone()),
    })
}

/// Write per-policy files, the summary, and the aggregate files.
pub fn write_suite(outcome: &SuiteOutcome, dir: &Path) -> Result<(), RunnerError> {
    let mut groups: Vec<(String, Vec<RoundRow>, Vec<HeldoutRow>)> = Vec::new();
    for a in &outcome.artifacts {
        match groups.last_mut() {
            Some(g) if g.0 == a.policy => {
                g.1.extend(a.rounds.iter().cloned());
                g.2.extend(a.heldout.iter().cloned());
            }
            _ => groups.push((a.policy.clone(), a.rounds.clone(), a.heldout.clone())),
        }
    }
    for (policy, rounds, heldout) in &groups {
        write_rounds_csv(&dir.join(policy).join("rounds.csv"), rounds)?;
        write_heldout_csv(&dir.join(policy).join("heldout.csv"), heldout)?;
    }
    let summary: Vec<SummaryRow> = outcome.artifacts.iter().map(|a| a.summary.clone()).collect();
    write_summary_csv(&dir.join("summary.csv"), &summary)?;
    if !outcome.failures.is_empty() {
        write_table(
            &dir.join("failures.csv"),
            &["policy", "run_id", "error"],
            outcome
                .failures
                .iter()
                .map(|(p, r, e)| [p.clone(), r.to_string(), e.clone()]),
        )?;
    }
    if let Some(s) = &outcome.matched_schedule {
        save_schedule(&dir.join("matched_eps.toml"), s)?;
    }
    // Aggregate what was written (nine significant digits), so that
    // re-aggregating the directory later reproduces these files exactly.
    let mut written = Vec::with_capacity(groups.len());
    for (policy, _, _) in groups {
        let rounds = read_rounds_csv(&dir.join(&policy).join("rounds.csv"))?;
        let heldout = read_heldout_csv(&dir.join(&policy).join("heldout.csv"))?;
        written.push((policy, rounds, heldout));
    }
    write_aggregates(dir, &written, outcome.config.ma_window())
}

fn by_run<T: Clone>(rows: &[T], run_of: impl Fn(&T) -> usize) -> Vec<Vec<T>> {
    let mut map: BTreeMap<usize, Vec<T>> = BTreeMap::new();
    for r in rows {
        map.entry(run_of(r)).or_default().push(r.clone());
    }
    map.into_values().collect()
}

fn prefix_sums(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    values
        .map(|v| {
            acc += v;
            acc
        })
        .collect()
}

/// Series derived from one run's rounds, as `(name, values)`.
fn round_series(rows: &[RoundRow], ma_window: usize) -> Vec<(&'static str, Vec<f64>)> {
    let loss: Vec<f64> = rows.iter().map(|r| r.realized_loss).collect();
    let mistake: Vec<f64> = rows.iter().map(|r| f64::from(r.system_mistake)).collect();
    let cum_loss = prefix_sums(loss.iter().copied());
    let avg_loss = cum_loss.iter().enumerate().map(|(i, c)| c / (i + 1) as f64).collect();
    let flag = |f: &dyn Fn(&RoundRow) -> bool| prefix_sums(rows.iter().map(|r| f64::from(u8::from(f(r)))));
    vec![
        ("cum_regret", rows.iter().map(|r| r.cum_regret).collect()),
        ("cum_loss", cum_loss),
        ("avg_loss", avg_loss),
        ("ma_loss", moving_average(&loss, ma_window)),
        ("cum_mistakes", prefix_sums(mistake.iter().copied())),
        ("ma_mistake", moving_average(&mistake, ma_window)),
        ("cum_requests", flag(&|r| r.z == 2)),
        ("cum_err_acc", flag(&|r| r.z == 0 && r.human_correct == 0)),
        (
            "cum_abs_shf",
            flag(&|r| r.z != 2 && r.human_correct == 0 && r.model_correct == 0),
        ),
    ]
}

fn stat_header(prefix: &[&str], names: &[&str]) -> Vec<String> {
    prefix
        .iter()
        .map(|s| s.to_string())
        .chain(names.iter().flat_map(|n| [format!("{n}_mean"), format!("{n}_std")]))
        .collect()
}

/// `aggregate_rounds.csv`, `aggregate_heldout.csv` and `actions.csv`: per
/// policy and round, the mean and population standard deviation across runs.
pub(crate) fn write_aggregates(
    dir: &Path,
    groups: &[(String, Vec<RoundRow>, Vec<HeldoutRow>)],
    ma_window: usize,
) -> Result<(), RunnerError> {
    let mut round_lines: Vec<Vec<String>> = Vec::new();
    let mut action_lines: Vec<Vec<String>> = Vec::new();
    let mut heldout_lines: Vec<Vec<String>> = Vec::new();
    let mut round_names: Vec<&str> = Vec::new();

    for (policy, rounds, heldout) in groups {
        let runs = by_run(rounds, |r| r.run_id);
        let n_runs = runs.len();
        if n_runs > 0 {
            let per_run: Vec<Vec<(&str, Vec<f64>)>> = runs.iter().map(|r| round_series(r, ma_window)).collect();
            round_names = per_run[0].iter().map(|(n, _)| *n).collect();
            let stats: Vec<(Vec<f64>, Vec<f64>)> = (0..round_names.len())
                .map(|k| aggregate_series(&per_run.iter().map(|s| s[k].1.clone()).collect::<Vec<_>>()))
                .collect();
            let len = stats[0].0.len();
            for i in 0..len {
                let mut line = vec![policy.clone(), runs[0][i].t.to_string(), n_runs.to_string()];
                for (mean, std) in &stats {
                    line.push(fmt_float(mean[i]));
                    line.push(fmt_float(std[i]));
                }
                round_lines.push(line);
            }

            let actions: Vec<(Vec<f64>, Vec<f64>)> = (0..3u8)
                .map(|z| {
                    let series: Vec<Vec<f64>> = runs
                        .iter()
                        .map(|r| {
                            let ind: Vec<f64> = r.iter().map(|row| f64::from(u8::from(row.z == z))).collect();
                            moving_average(&ind, ACTION_WINDOW)
                        })
                        .collect();
                    aggregate_series(&series)
                })
                .collect();
            for i in 0..len {
                let mut line = vec![policy.clone(), runs[0][i].t.to_string(), n_runs.to_string()];
                for (mean, std) in &actions {
                    line.push(fmt_float(mean[i]));
                    line.push(fmt_float(std[i]));
                }
                action_lines.push(line);
            }
        }

        let hruns = by_run(heldout, |r| r.run_id);
        if !hruns.is_empty() {
            let metric = |f: fn(&HeldoutRow) -> f64| {
                aggregate_series(&hruns.iter().map(|r| r.iter().map(f).collect()).collect::<Vec<_>>())
            };
            let stats = [
                metric(|r| r.mistake_rate),
                metric(|r| r.cross_entropy),
                metric(|r| r.auroc),
                metric(|r| r.auprc),
            ];
            for i in 0..stats[0].0.len() {
                let mut line = vec![policy.clone(), hruns[0][i].t.to_string(), hruns.len().to_string()];
                for (mean, std) in &stats {
                    line.push(fmt_float(mean[i]));
                    line.push(fmt_float(std[i]));
                }
                heldout_lines.push(line);
            }
        }
    }

    if round_names.is_empty() {
        round_names = round_series(&[], 1).iter().map(|(n, _)| *n).collect();
    }
    let header = stat_header(&["policy", "t", "runs"], &round_names);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_table(&dir.join("aggregate_rounds.csv"), &header, round_lines)?;

    let header = stat_header(&["policy", "t", "runs"], &["accept", "intervene", "request"]);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_table(&dir.join("actions.csv"), &header, action_lines)?;

    let header = stat_header(
        &["policy", "t", "runs"],
        &["mistake_rate", "cross_entropy", "auroc", "auprc"],
    );
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_table(&dir.join("aggregate_heldout.csv"), &header, heldout_lines)
}

/// Fit a matched request schedule from UMPIRE's per-round rows (any number of runs).
pub fn fit_matched_from_rounds(rows: &[RoundRow]) -> Result<MatchedEpsilon, RunnerError> {
    let curves: Vec<Vec<f64>> = by_run(rows, |r| r.run_id)
        .into_iter()
        .map(|run| prefix_sums(run.iter().map(|r| f64::from(u8::from(r.z == 2)))))
        .collect();
    Ok(fit_matched_epsilon(&curves)?)
}

pub fn save_schedule(path: &Path, schedule: &MatchedEpsilon) -> Result<(), RunnerError> {
    let text = toml::to_string(schedule).map_err(|e| RunnerError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    std::fs::write(path, text).map_err(|source| RunnerError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_schedule(path: &Path) -> Result<MatchedEpsilon, RunnerError> {
    let text = std::fs::read_to_string(path).map_err(|source| RunnerError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| RunnerError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis: String,
    pub value: f64,
    pub policy: String,
    pub avg_loss_mean: f64,
    pub avg_loss_std: f64,
    pub final_regret_mean: f64,
    pub final_regret_std: f64,
}

/// Run the suite once per value of `axis`. With `out`, each suite is written
/// to `out/<axis>_<value>/` and the table to `out/sweep_<axis>.csv`.
pub fn run_sweep(config: &ExperimentConfig, axis: SweepAxis, out: Option<&Path>) -> Result<Vec<SweepRow>, RunnerError> {
    let values = config.sweep.values(axis);
    if values.is_empty() {
        return Err(RunnerError::Config(format!("no values for sweep axis {}", axis.name())));
    }
    let mut rows = Vec::new();
    for &value in values {
        let c = config.with_axis(axis, value)?;
        log::info!("sweep {} = {value}", axis.name());
        let outcome = run_suite(&c)?;
        if let Some(dir) = out {
            write_suite(&outcome, &dir.join(format!("{}_{}", axis.name(), fmt_float(value))))?;
        }
        rows.extend(outcome.aggregates.iter().map(|a| SweepRow {
            axis: axis.name().to_owned(),
            value,
            policy: a.policy.clone(),
            avg_loss_mean: a.avg_loss_mean,
            avg_loss_std: a.avg_loss_std,
            final_regret_mean: a.final_regret_mean,
            final_regret_std: a.final_regret_std,
        }));
    }
    if let Some(dir) = out {
        write_table(
            &dir.join(format!("sweep_{}.csv", axis.name())),
            &[
                "axis",
                "value",
                "policy",
                "avg_loss_mean",
                "avg_loss_std",
                "final_regret_mean",
                "final_regret_std",
            ],
            rows.iter().map(|r| {
                [
                    r.axis.clone(),
                    fmt_float(r.value),
                    r.policy.clone(),
                    fmt_float(r.avg_loss_mean),
                    fmt_float(r.avg_loss_std),
                    fmt_float(r.final_regret_mean),
                    fmt_float(r.final_regret_std),
                ]
            }),
        )?;
    }
    Ok(rows)
}
