//! Reward and feedback matrices of online decision mediation viewed as a
//! contextual partial-monitoring game.
//!
//! Rows are arms: accept, then one intervene arm per underlying action, then
//! request. Columns are the expert's action. Only the request arm yields
//! feedback.

use std::fmt::{self, Write as _};

use crate::domain::{ActionId, CostSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feedback {
    /// No feedback.
    Null,
    Label(ActionId),
}

impl fmt::Display for Feedback {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Feedback::Null => f.write_str("⊥"),
            Feedback::Label(y) => write!(f, "y{}", y.0),
        }
    }
}

/// Which arm a matrix row stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    Accept,
    /// Intervene with a model committed to this action.
    Intervene(ActionId),
    Request,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PMGame {
    pub m: usize,
    pub human_action: ActionId,
    /// `(m + 2) x m` rewards.
    pub reward: Vec<Vec<f64>>,
    /// `(m + 2) x m` feedback symbols.
    pub feedback: Vec<Vec<Feedback>>,
}

impl PMGame {
    pub fn arms(&self) -> Vec<Arm> {
        std::iter::once(Arm::Accept)
            .chain((0..self.m).map(|i| Arm::Intervene(ActionId(i))))
            .chain(std::iter::once(Arm::Request))
            .collect()
    }

    /// Rows whose feedback is `⊥` in every column.
    pub fn null_feedback_rows(&self) -> usize {
        self.feedback
            .iter()
            .filter(|row| row.iter().all(|f| *f == Feedback::Null))
            .count()
    }

    /// Aligned text rendering of both matrices.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# human action {}", self.human_action.0);
        let header: Vec<String> = (0..self.m).map(|j| format!("y{j}")).collect();
        let _ = writeln!(
            out,
            "R {:>10}",
            header.iter().map(|h| format!("{h:>10}")).collect::<String>()
        );
        for (arm, row) in self.arms().iter().zip(&self.reward) {
            let cells: String = row.iter().map(|v| format!("{v:>10.4}")).collect();
            let _ = writeln!(out, "{:<10} {cells}", arm_label(arm));
        }
        let _ = writeln!(
            out,
            "F {:>10}",
            header.iter().map(|h| format!("{h:>10}")).collect::<String>()
        );
        for (arm, row) in self.arms().iter().zip(&self.feedback) {
            let cells: String = row.iter().map(|v| format!("{:>10}", v.to_string())).collect();
            let _ = writeln!(out, "{:<10} {cells}", arm_label(arm));
        }
        out
    }

    /// CSV rows `human_action,matrix,arm,outcome,value`.
    pub fn to_csv_rows(&self) -> Vec<[String; 5]> {
        let mut rows = Vec::new();
        for (i, arm) in self.arms().iter().enumerate() {
            for j in 0..self.m {
                rows.push([
                    self.human_action.0.to_string(),
                    "R".into(),
                    arm_label(arm),
                    j.to_string(),
                    crate::runner::fmt_float(self.reward[i][j]),
                ]);
            }
        }
        for (i, arm) in self.arms().iter().enumerate() {
            for j in 0..self.m {
                rows.push([
                    self.human_action.0.to_string(),
                    "F".into(),
                    arm_label(arm),
                    j.to_string(),
                    self.feedback[i][j].to_string(),
                ]);
            }
        }
        rows
    }
}

fn arm_label(arm: &Arm) -> String {
    match arm {
        Arm::Accept => "accept".into(),
        Arm::Intervene(y) => format!("intervene{}", y.0),
        Arm::Request => "request".into(),
    }
}

pub fn build_matrices(m: usize, human_action: ActionId, costs: &CostSpec) -> PMGame {
    assert!(m >= 2, "need at least two actions");
    assert!(human_action.0 < m);
    let miss = |a: usize, b: usize| if a == b { 0.0 } else { 1.0 };
    let mut reward = Vec::with_capacity(m + 2);
    reward.push((0..m).map(|j| -miss(j, human_action.0)).collect());
    for i in 0..m {
        reward.push((0..m).map(|j| -miss(j, i) - costs.k_int).collect());
    }
    reward.push(vec![-costs.k_req; m]);

    let mut feedback = vec![vec![Feedback::Null; m]; m + 1];
    feedback.push((0..m).map(|j| Feedback::Label(ActionId(j))).collect());
    PMGame {
        m,
        human_action,
        reward,
        feedback,
    }
}
