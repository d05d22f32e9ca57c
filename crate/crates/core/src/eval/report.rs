use serde::{Deserialize, Serialize};

use super::{BenchmarkReport, Condition};

pub const REPORT_HEADER: [&str; 7] = ["instance", "task", "budget", "condition", "repeat", "success", "steps"];

pub fn report_csv(report: &BenchmarkReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_HEADER).expect("in-memory write");
    for r in &report.rows {
        w.write_record([
            r.instance.clone(),
            r.task.clone(),
            r.budget.to_string(),
            r.condition.to_string(),
            r.repeat.to_string(),
            (r.success as u8).to_string(),
            r.steps.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

/// Mean and standard error (sample standard deviation over sqrt(n)).
/// The error of a single sample is 0.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Success rate in percent at one budget, over repeats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub budget: u32,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: Condition,
    pub cells: Vec<SummaryCell>,
    /// Mean steps of episodes that succeeded within the largest budget.
    pub avg_success_steps: Option<f64>,
    pub successes: usize,
    pub episodes: usize,
}

pub fn summarize(report: &BenchmarkReport) -> Vec<ConditionSummary> {
    let mut conditions: Vec<Condition> = report.rows.iter().map(|r| r.condition).collect();
    conditions.sort();
    conditions.dedup();
    let mut repeats: Vec<u32> = report.rows.iter().map(|r| r.repeat).collect();
    repeats.sort_unstable();
    repeats.dedup();
    let top = report.budgets.last().copied();

    conditions
        .into_iter()
        .map(|condition| {
            let cells = report
                .budgets
                .iter()
                .map(|&budget| {
                    let rates: Vec<f64> = repeats
                        .iter()
                        .filter_map(|&repeat| {
                            let rows: Vec<_> = report
                                .rows
                                .iter()
                                .filter(|r| r.condition == condition && r.budget == budget && r.repeat == repeat)
                                .collect();
                            (!rows.is_empty())
                                .then(|| 100.0 * rows.iter().filter(|r| r.success).count() as f64 / rows.len() as f64)
                        })
                        .collect();
                    let (mean, stderr) = mean_stderr(&rates);
                    SummaryCell { budget, mean, stderr }
                })
                .collect();
            let at_top: Vec<_> = report
                .rows
                .iter()
                .filter(|r| r.condition == condition && Some(r.budget) == top)
                .collect();
            let wins: Vec<f64> = at_top.iter().filter(|r| r.success).map(|r| r.steps as f64).collect();
            ConditionSummary {
                condition,
                cells,
                avg_success_steps: (!wins.is_empty()).then(|| mean_stderr(&wins).0),
                successes: wins.len(),
                episodes: at_top.len(),
            }
        })
        .collect()
}

/// Two markdown tables: success rate per step budget, and the average steps
/// of successful episodes.
pub fn format_report_md(report: &BenchmarkReport) -> String {
    let summary = summarize(report);
    let mut out = String::from("## Success rate (%) by step budget\n\n| Condition |");
    for b in &report.budgets {
        out.push_str(&format!(" {b} steps |"));
    }
    out.push_str("\n|---|");
    out.push_str(&"---:|".repeat(report.budgets.len()));
    out.push('\n');
    for s in &summary {
        out.push_str(&format!("| {} |", s.condition));
        for c in &s.cells {
            out.push_str(&format!(" {:.1} ± {:.1} |", c.mean, c.stderr));
        }
        out.push('\n');
    }
    out.push_str("\n## Average steps of successful runs\n\n| Condition | Steps | Successful |\n|---|---:|---:|\n");
    for s in &summary {
        let avg = s.avg_success_steps.map(|a| format!("{a:.1}")).unwrap_or_else(|| "-".into());
        out.push_str(&format!("| {} | {avg} | {}/{} |\n", s.condition, s.successes, s.episodes));
    }
    out
}
