//! CSV artifacts. Every file starts with a fixed header row; floats use
//! nine significant digits.
//!
//! | file          | columns |
//! |---------------|---------|
//! | `rounds.csv`  | `run_id,t,z,human_correct,model_correct,system_mistake,realized_loss,oracle_loss,cum_regret,mi_value,adjusted_k_req` |
//! | `heldout.csv` | `run_id,t,mistake_rate,cross_entropy,auroc,auprc` |
//! | `summary.csv` | `policy,run_id,final_regret,err_acc,exc_int,abs_shf,requests` |
//!
//! `z` is the decision code (0 accept, 1 intervene, 2 request). `auroc` and
//! `auprc` are one-vs-rest macro averages over the classes that have both
//! positives and negatives in the heldout set.

use std::fs::File;
use std::path::Path;

use serde::Deserialize;

use super::{fmt_float, RunnerError};
use crate::domain::RoundRecord;

pub const ROUNDS_HEADER: [&str; 11] = [
    "run_id",
    "t",
    "z",
    "human_correct",
    "model_correct",
    "system_mistake",
    "realized_loss",
    "oracle_loss",
    "cum_regret",
    "mi_value",
    "adjusted_k_req",
];

pub const HELDOUT_HEADER: [&str; 6] = ["run_id", "t", "mistake_rate", "cross_entropy", "auroc", "auprc"];

pub const SUMMARY_HEADER: [&str; 7] = [
    "policy",
    "run_id",
    "final_regret",
    "err_acc",
    "exc_int",
    "abs_shf",
    "requests",
];

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct RoundRow {
    pub run_id: usize,
    pub t: usize,
    pub z: u8,
    pub human_correct: u8,
    pub model_correct: u8,
    pub system_mistake: u8,
    pub realized_loss: f64,
    pub oracle_loss: f64,
    pub cum_regret: f64,
    pub mi_value: f64,
    pub adjusted_k_req: f64,
}

impl RoundRow {
    pub fn from_records(run_id: usize, records: &[RoundRecord]) -> Vec<Self> {
        let mut regret = 0.0;
        records
            .iter()
            .map(|r| {
                regret += r.realized_loss - r.oracle_loss;
                RoundRow {
                    run_id,
                    t: r.t,
                    z: r.decision.code(),
                    human_correct: u8::from(r.human_action == r.expert_action),
                    model_correct: u8::from(r.model_action == r.expert_action),
                    system_mistake: u8::from(r.system_action != r.expert_action),
                    realized_loss: r.realized_loss,
                    oracle_loss: r.oracle_loss,
                    cum_regret: regret,
                    mi_value: r.mi_value,
                    adjusted_k_req: r.adjusted_k_req,
                }
            })
            .collect()
    }

    fn fields(&self) -> [String; 11] {
        [
            self.run_id.to_string(),
            self.t.to_string(),
            self.z.to_string(),
            self.human_correct.to_string(),
            self.model_correct.to_string(),
            self.system_mistake.to_string(),
            fmt_float(self.realized_loss),
            fmt_float(self.oracle_loss),
            fmt_float(self.cum_regret),
            fmt_float(self.mi_value),
            fmt_float(self.adjusted_k_req),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct HeldoutRow {
    pub run_id: usize,
    pub t: usize,
    pub mistake_rate: f64,
    pub cross_entropy: f64,
    pub auroc: f64,
    pub auprc: f64,
}

impl HeldoutRow {
    fn fields(&self) -> [String; 6] {
        [
            self.run_id.to_string(),
            self.t.to_string(),
            fmt_float(self.mistake_rate),
            fmt_float(self.cross_entropy),
            fmt_float(self.auroc),
            fmt_float(self.auprc),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct SummaryRow {
    pub policy: String,
    pub run_id: usize,
    pub final_regret: f64,
    pub err_acc: usize,
    pub exc_int: usize,
    pub abs_shf: usize,
    pub requests: usize,
}

impl SummaryRow {
    fn fields(&self) -> [String; 7] {
        [
            self.policy.clone(),
            self.run_id.to_string(),
            fmt_float(self.final_regret),
            self.err_acc.to_string(),
            self.exc_int.to_string(),
            self.abs_shf.to_string(),
            self.requests.to_string(),
        ]
    }
}

pub(crate) fn write_table<I, R>(path: &Path, header: &[&str], rows: I) -> Result<(), RunnerError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let csv_err = |source| RunnerError::Csv {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| RunnerError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    let file = File::create(path).map_err(|source| RunnerError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| RunnerError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_table<T: for<'de> Deserialize<'de>>(path: &Path, header: &[&str]) -> Result<Vec<T>, RunnerError> {
    let csv_err = |source| RunnerError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let found: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
    if found != header {
        return Err(RunnerError::Format {
            path: path.to_path_buf(),
            message: format!("unexpected header {}", found.join(",")),
        });
    }
    r.deserialize().collect::<Result<_, _>>().map_err(csv_err)
}

pub fn write_rounds_csv(path: &Path, rows: &[RoundRow]) -> Result<(), RunnerError> {
    write_table(path, &ROUNDS_HEADER, rows.iter().map(RoundRow::fields))
}

pub fn read_rounds_csv(path: &Path) -> Result<Vec<RoundRow>, RunnerError> {
    read_table(path, &ROUNDS_HEADER)
}

pub fn write_heldout_csv(path: &Path, rows: &[HeldoutRow]) -> Result<(), RunnerError> {
    write_table(path, &HELDOUT_HEADER, rows.iter().map(HeldoutRow::fields))
}

pub fn read_heldout_csv(path: &Path) -> Result<Vec<HeldoutRow>, RunnerError> {
    read_table(path, &HELDOUT_HEADER)
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<(), RunnerError> {
    write_table(path, &SUMMARY_HEADER, rows.iter().map(SummaryRow::fields))
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>, RunnerError> {
    read_table(path, &SUMMARY_HEADER)
}

/// Recompute the aggregate files of a suite directory from its per-policy
/// `rounds.csv` and `heldout.csv` files. Without `ma_window`, a fifth of the
/// longest run is used. Policies follow `summary.csv` when it exists and
/// name order otherwise.
pub fn aggregate_dir(dir: &Path, ma_window: Option<usize>) -> Result<Vec<String>, RunnerError> {
    let mut policies = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|source| RunnerError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for entry in entries {
        let entry = entry.map_err(|source| RunnerError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        if path.join("rounds.csv").is_file() {
            policies.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    policies.sort();
    // Keep the suite's policy order when its summary is present.
    let summary = dir.join("summary.csv");
    if summary.is_file() {
        let order: Vec<String> = read_summary_csv(&summary)?.into_iter().map(|r| r.policy).collect();
        let rank = |p: &String| order.iter().position(|o| o == p).unwrap_or(usize::MAX);
        policies.sort_by_key(|p| rank(p));
    }
    if policies.is_empty() {
        return Err(RunnerError::Format {
            path: dir.to_path_buf(),
            message: "no <policy>/rounds.csv files found".into(),
        });
    }
    let mut groups = Vec::new();
    for p in &policies {
        let rounds = read_rounds_csv(&dir.join(p).join("rounds.csv"))?;
        let heldout_path = dir.join(p).join("heldout.csv");
        let heldout = if heldout_path.is_file() {
            read_heldout_csv(&heldout_path)?
        } else {
            Vec::new()
        };
        groups.push((p.clone(), rounds, heldout));
    }
    let horizon = groups.iter().flat_map(|g| g.1.iter().map(|r| r.t)).max().unwrap_or(1);
    let window = ma_window.unwrap_or((horizon / 5).max(1));
    super::suite::write_aggregates(dir, &groups, window)?;
    Ok(policies)
}
