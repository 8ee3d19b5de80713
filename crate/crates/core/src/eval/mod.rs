//! Metrics and experiment reporting: success rate, completion rate,
//! execution time, jerk smoothness, and the task/ablation comparison tables
//! rendered as aligned text and CSV.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::sim::TrajectoryLog;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("metric requires at least one trial")]
    EmptyTrials,
    #[error("smoothness requires at least 4 uniformly spaced samples")]
    TooShort,
    #[error("runs do not share a common scenario set: {0}")]
    MismatchedScenarios(String),
}

/// One trial outcome: `s` successful steps out of `n` total.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialRecord {
    pub s: usize,
    pub n: usize,
}

impl TrialRecord {
    pub fn new(s: usize, n: usize) -> Self {
        assert!(s <= n, "successful steps {s} exceed total {n}");
        TrialRecord { s, n }
    }

    pub fn from_log(log: &TrajectoryLog) -> Self {
        TrialRecord::new(log.s, log.n)
    }
}

/// Fraction of trials where every step succeeded: (1/N) Σ 1[sᵢ = n].
pub fn success_rate(trials: &[TrialRecord]) -> Result<f64, EvalError> {
    if trials.is_empty() {
        return Err(EvalError::EmptyTrials);
    }
    let hits = trials.iter().filter(|t| t.s == t.n).count();
    Ok(hits as f64 / trials.len() as f64)
}

/// Mean fraction of completed steps per trial: (1/N) Σ sᵢ/n.
pub fn completion_rate(trials: &[TrialRecord]) -> Result<f64, EvalError> {
    if trials.is_empty() {
        return Err(EvalError::EmptyTrials);
    }
    let sum: f64 = trials
        .iter()
        .map(|t| if t.n == 0 { 1.0 } else { t.s as f64 / t.n as f64 })
        .sum();
    Ok(sum / trials.len() as f64)
}

/// Mean |jerk| of a uniformly sampled planar trajectory: the third finite
/// difference of position divided by dt³, vector magnitude averaged over the
/// trajectory.
pub fn smoothness(positions: &[(f64, f64)], dt: f64) -> Result<f64, EvalError> {
    if positions.len() < 4 || dt <= 0.0 {
        return Err(EvalError::TooShort);
    }
    let dt3 = dt * dt * dt;
    let mut total = 0.0;
    let m = positions.len() - 3;
    for i in 0..m {
        let (x0, y0) = positions[i];
        let (x1, y1) = positions[i + 1];
        let (x2, y2) = positions[i + 2];
        let (x3, y3) = positions[i + 3];
        let jx = (x3 - 3.0 * x2 + 3.0 * x1 - x0) / dt3;
        let jy = (y3 - 3.0 * y2 + 3.0 * y1 - y0) / dt3;
        total += (jx * jx + jy * jy).sqrt();
    }
    Ok(total / m as f64)
}

/// Aggregate metrics over one (scenario, policy) cell.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MetricsReport {
    pub success_rate: f64,
    pub completion_rate: f64,
    pub mean_interventions: f64,
    pub mean_time_s: f64,
    pub mean_smoothness: f64,
}

impl MetricsReport {
    pub fn from_logs(logs: &[&TrajectoryLog], dt: f64) -> Result<Self, EvalError> {
        if logs.is_empty() {
            return Err(EvalError::EmptyTrials);
        }
        let trials: Vec<TrialRecord> = logs.iter().map(|l| TrialRecord::from_log(l)).collect();
        let mean_interventions =
            logs.iter().map(|l| l.interventions as f64).sum::<f64>() / logs.len() as f64;
        let mean_time_s = logs.iter().map(|l| l.sim_time_s).sum::<f64>() / logs.len() as f64;
        let mut smooth_sum = 0.0;
        let mut smooth_n = 0usize;
        for log in logs {
            if let Ok(s) = smoothness(&log.positions(), dt) {
                smooth_sum += s;
                smooth_n += 1;
            }
        }
        Ok(MetricsReport {
            success_rate: success_rate(&trials)?,
            completion_rate: completion_rate(&trials)?,
            mean_interventions,
            mean_time_s,
            mean_smoothness: if smooth_n > 0 {
                smooth_sum / smooth_n as f64
            } else {
                0.0
            },
        })
    }
}

/// One row of the task comparison table. `metrics` is `None` when no run for
/// the (task, method) pair exists; such rows render as "--".
#[derive(Debug, Clone)]
pub struct TaskRow {
    pub task: String,
    pub method: String,
    pub metrics: Option<MetricsReport>,
}

#[derive(Debug, Clone)]
pub struct TaskReport {
    pub rows: Vec<TaskRow>,
}

fn group_logs<'a>(
    runs: &'a [TrajectoryLog],
) -> BTreeMap<(String, String), Vec<&'a TrajectoryLog>> {
    let mut groups: BTreeMap<(String, String), Vec<&TrajectoryLog>> = BTreeMap::new();
    for log in runs {
        groups
            .entry((log.scenario.clone(), log.policy.clone()))
            .or_default()
            .push(log);
    }
    groups
}

/// Per-task comparison of methods: Success, Intervention, Time (sec.),
/// Smoothness. Every (task, method) combination over the runs appears; pairs
/// with no recorded run are kept as "--" rows.
pub fn task_report(runs: &[TrajectoryLog], dt: f64) -> Result<TaskReport, EvalError> {
    if runs.is_empty() {
        return Err(EvalError::EmptyTrials);
    }
    let groups = group_logs(runs);
    let mut tasks: Vec<String> = groups.keys().map(|(t, _)| t.clone()).collect();
    tasks.dedup();
    let mut methods: Vec<String> = groups.keys().map(|(_, m)| m.clone()).collect();
    methods.sort();
    methods.dedup();
    let mut rows = Vec::new();
    for task in &tasks {
        for method in &methods {
            let metrics = match groups.get(&(task.clone(), method.clone())) {
                Some(logs) => Some(MetricsReport::from_logs(logs, dt)?),
                None => None,
            };
            rows.push(TaskRow {
                task: task.clone(),
                method: method.clone(),
                metrics,
            });
        }
    }
    Ok(TaskReport { rows })
}

fn fmt_cell(v: Option<f64>, digits: usize) -> String {
    match v {
        Some(v) => format!("{v:.digits$}"),
        None => "--".to_string(),
    }
}

impl TaskReport {
    pub fn render_text(&self) -> String {
        let header = [
            "Task",
            "Method",
            "Success",
            "Intervention",
            "Time (sec.)",
            "Smoothness",
        ];
        let mut cells: Vec<[String; 6]> = Vec::new();
        for r in &self.rows {
            let m = r.metrics.as_ref();
            cells.push([
                r.task.clone(),
                r.method.clone(),
                fmt_cell(m.map(|m| m.success_rate), 2),
                fmt_cell(m.map(|m| m.mean_interventions), 1),
                fmt_cell(m.map(|m| m.mean_time_s), 1),
                fmt_cell(m.map(|m| m.mean_smoothness), 2),
            ]);
        }
        render_aligned(&header, &cells)
    }

    pub fn render_csv(&self) -> String {
        let mut out = String::from("task,method,success,intervention,time_s,smoothness\n");
        for r in &self.rows {
            let m = r.metrics.as_ref();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.task,
                r.method,
                fmt_cell(m.map(|m| m.success_rate), 4),
                fmt_cell(m.map(|m| m.mean_interventions), 2),
                fmt_cell(m.map(|m| m.mean_time_s), 2),
                fmt_cell(m.map(|m| m.mean_smoothness), 4),
            );
        }
        out
    }
}

/// One row of the ablation table: SR and Avg.Int. (completion rate) for each
/// task, plus controller throughput in forward calls per second when
/// measured.
#[derive(Debug, Clone)]
pub struct AblationRow {
    pub method: String,
    /// task name → (SR, mean interventions), None when the method has no
    /// runs on that task.
    pub per_task: BTreeMap<String, Option<(f64, f64)>>,
    pub throughput_hz: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct AblationReport {
    pub tasks: Vec<String>,
    pub rows: Vec<AblationRow>,
}

/// SR / Avg.Int. comparison of baseline kinds per task. `throughput_hz` maps
/// method name to measured forward calls per second on the host.
pub fn ablation_report(
    runs: &[TrajectoryLog],
    throughput_hz: &BTreeMap<String, f64>,
) -> Result<AblationReport, EvalError> {
    if runs.is_empty() {
        return Err(EvalError::EmptyTrials);
    }
    let groups = group_logs(runs);
    let mut tasks: Vec<String> = groups.keys().map(|(t, _)| t.clone()).collect();
    tasks.dedup();
    let mut methods: Vec<String> = groups.keys().map(|(_, m)| m.clone()).collect();
    methods.sort();
    methods.dedup();
    let mut rows = Vec::new();
    for method in &methods {
        let mut per_task = BTreeMap::new();
        for task in &tasks {
            let cell = match groups.get(&(task.clone(), method.clone())) {
                Some(logs) => {
                    let trials: Vec<TrialRecord> =
                        logs.iter().map(|l| TrialRecord::from_log(l)).collect();
                    let avg_int = logs.iter().map(|l| l.interventions as f64).sum::<f64>()
                        / logs.len() as f64;
                    Some((success_rate(&trials)?, avg_int))
                }
                None => None,
            };
            per_task.insert(task.clone(), cell);
        }
        rows.push(AblationRow {
            method: method.clone(),
            per_task,
            throughput_hz: throughput_hz.get(method).copied(),
        });
    }
    Ok(AblationReport {
        tasks,
        rows,
    })
}

impl AblationReport {
    pub fn render_text(&self) -> String {
        let mut header: Vec<String> = vec!["Method".to_string()];
        for t in &self.tasks {
            header.push(format!("{t} SR"));
            header.push(format!("{t} Avg.Int."));
        }
        header.push("Throughput".to_string());
        let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut cells: Vec<Vec<String>> = Vec::new();
        for r in &self.rows {
            let mut row = vec![r.method.clone()];
            for t in &self.tasks {
                let cell = r.per_task.get(t).copied().flatten();
                row.push(fmt_cell(cell.map(|(sr, _)| sr), 2));
                row.push(fmt_cell(cell.map(|(_, c)| c), 2));
            }
            row.push(fmt_cell(r.throughput_hz, 1));
            cells.push(row);
        }
        render_aligned_dyn(&header_refs, &cells)
    }

    pub fn render_csv(&self) -> String {
        let mut out = String::from("method");
        for t in &self.tasks {
            let _ = write!(out, ",{t}_sr,{t}_avg_int");
        }
        out.push_str(",throughput_hz\n");
        for r in &self.rows {
            let _ = write!(out, "{}", r.method);
            for t in &self.tasks {
                let cell = r.per_task.get(t).copied().flatten();
                let _ = write!(
                    out,
                    ",{},{}",
                    fmt_cell(cell.map(|(sr, _)| sr), 4),
                    fmt_cell(cell.map(|(_, c)| c), 4)
                );
            }
            let _ = writeln!(out, ",{}", fmt_cell(r.throughput_hz, 2));
        }
        out
    }
}

fn render_aligned<const N: usize>(header: &[&str; N], rows: &[[String; N]]) -> String {
    let row_slices: Vec<Vec<String>> = rows.iter().map(|r| r.to_vec()).collect();
    render_aligned_dyn(header.as_slice(), &row_slices)
}

fn render_aligned_dyn(header: &[&str], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate().take(cols) {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut out = String::new();
    let emit = |out: &mut String, cells: &[String]| {
        for (i, cell) in cells.iter().enumerate() {
            if i > 0 {
                out.push_str("  ");
            }
            let _ = write!(out, "{cell:<width$}", width = widths[i]);
        }
        while out.ends_with(' ') {
            out.pop();
        }
        out.push('\n');
    };
    let header_cells: Vec<String> = header.iter().map(|h| h.to_string()).collect();
    emit(&mut out, &header_cells);
    let sep: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    emit(&mut out, &sep);
    for row in rows {
        emit(&mut out, row);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t(s: usize, n: usize) -> TrialRecord {
        TrialRecord::new(s, n)
    }

    #[test]
    fn success_and_completion_match_hand_evaluation() {
        let trials = vec![t(4, 4), t(2, 4)];
        assert_eq!(success_rate(&trials).unwrap(), 0.5);
        assert_eq!(completion_rate(&trials).unwrap(), 0.75);
        let full = vec![t(3, 3), t(5, 5)];
        assert_eq!(success_rate(&full).unwrap(), 1.0);
        assert_eq!(completion_rate(&full).unwrap(), 1.0);
        let none = vec![t(0, 4), t(0, 2)];
        assert_eq!(success_rate(&none).unwrap(), 0.0);
        assert_eq!(completion_rate(&none).unwrap(), 0.0);
    }

    #[test]
    fn empty_trials_are_rejected() {
        assert!(matches!(success_rate(&[]), Err(EvalError::EmptyTrials)));
        assert!(matches!(completion_rate(&[]), Err(EvalError::EmptyTrials)));
    }

    #[test]
    fn completion_rate_dominates_success_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let trials: Vec<TrialRecord> = (0..rng.gen_range(1..10))
                .map(|_| {
                    let n = rng.gen_range(1..8usize);
                    t(rng.gen_range(0..=n), n)
                })
                .collect();
            let sr = success_rate(&trials).unwrap();
            let cr = completion_rate(&trials).unwrap();
            assert!(cr >= sr - 1e-12, "completion {cr} < success {sr}");
        }
    }

    #[test]
    fn constant_velocity_trajectory_has_zero_jerk() {
        let pts: Vec<(f64, f64)> = (0..50).map(|i| (i as f64 * 0.05, 1.0)).collect();
        assert!(smoothness(&pts, 0.1).unwrap() <= 1e-9);
        let accel: Vec<(f64, f64)> = (0..50)
            .map(|i| {
                let s = i as f64 * 0.1;
                (0.5 * s * s, 0.0)
            })
            .collect();
        assert!(smoothness(&accel, 0.1).unwrap() <= 1e-6);
    }

    #[test]
    fn cubic_trajectory_jerk_is_six() {
        let dt = 0.01;
        let pts: Vec<(f64, f64)> = (0..=100)
            .map(|i| {
                let s = i as f64 * dt;
                (s * s * s, 0.0)
            })
            .collect();
        let j = smoothness(&pts, dt).unwrap();
        assert!((j - 6.0).abs() < 1e-3, "jerk {j}");
    }

    #[test]
    fn smoothness_is_invariant_under_translation_and_reversal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let pts: Vec<(f64, f64)> = (0..20)
                .map(|_| (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)))
                .collect();
            let base = smoothness(&pts, 0.1).unwrap();
            let shifted: Vec<(f64, f64)> =
                pts.iter().map(|&(x, y)| (x + 11.0, y - 4.5)).collect();
            let reversed: Vec<(f64, f64)> = pts.iter().rev().copied().collect();
            assert!((smoothness(&shifted, 0.1).unwrap() - base).abs() < 1e-9);
            assert!((smoothness(&reversed, 0.1).unwrap() - base).abs() < 1e-9);
        }
    }

    #[test]
    fn short_trajectories_are_rejected() {
        let pts = vec![(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)];
        assert!(matches!(smoothness(&pts, 0.1), Err(EvalError::TooShort)));
    }

    fn fake_log(scenario: &str, policy: &str, s: usize, n: usize) -> TrajectoryLog {
        TrajectoryLog {
            scenario: scenario.to_string(),
            policy: policy.to_string(),
            seed: 0,
            n,
            s,
            interventions: n - s,
            reached_goal: s == n,
            sim_time_s: 12.0,
            ticks: Vec::new(),
        }
    }

    #[test]
    fn task_report_covers_method_cross_product() {
        let runs = vec![
            fake_log("task_a", "expert", 4, 4),
            fake_log("task_a", "tracker", 2, 4),
            fake_log("task_b", "expert", 4, 4),
        ];
        let report = task_report(&runs, 0.1).unwrap();
        assert_eq!(report.rows.len(), 4);
        let missing = report
            .rows
            .iter()
            .find(|r| r.task == "task_b" && r.method == "tracker")
            .unwrap();
        assert!(missing.metrics.is_none());
        let text = report.render_text();
        assert!(text.contains("--"), "missing cells render as --:\n{text}");
        assert!(text.contains("Success") && text.contains("Smoothness"));
        let csv = report.render_csv();
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn ablation_report_has_sr_and_completion_per_task() {
        let runs = vec![
            fake_log("blind_spot", "decision", 5, 5),
            fake_log("blind_spot", "decision", 4, 5),
            fake_log("blind_spot", "cnn_reactive", 1, 5),
        ];
        let mut thr = BTreeMap::new();
        thr.insert("decision".to_string(), 42.0);
        let report = ablation_report(&runs, &thr).unwrap();
        assert_eq!(report.rows.len(), 2);
        let dec = report.rows.iter().find(|r| r.method == "decision").unwrap();
        let (sr, avg_int) = dec.per_task["blind_spot"].unwrap();
        assert_eq!(sr, 0.5);
        assert!((avg_int - 0.5).abs() < 1e-12);
        assert_eq!(dec.throughput_hz, Some(42.0));
        let text = report.render_text();
        assert!(text.contains("Throughput"));
        let csv = report.render_csv();
        assert!(csv.starts_with("method,blind_spot_sr,blind_spot_avg_int"));
    }
}
