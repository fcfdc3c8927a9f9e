//! Report directory layout and rendering.
//!
//! A `reprogram` run leaves behind:
//!
//! ```text
//! report/
//!   config.json      fully resolved run config (replayable)
//!   trace.jsonl      one JSON record per epoch: epoch, loss, train_acc,
//!                    test_acc, queries (deterministic given the seed)
//!   transform.json   trained input transform (layout, mask, W)
//!   output_map.json  label mapping as explicit pairs, or the linear head
//!   timing.json      wall-clock per epoch (informational, not reproducible)
//!   risk_bound.txt   diagnostic table, written by `diagnose`
//! ```

use crate::config::RunConfig;
use crate::diagnostics::RiskBoundReport;
use crate::error::{Error, Result};
use crate::output_map::OutputMap;
use crate::train::{EpochRecord, TrainTrace};
use crate::transform::InputTransform;
use std::fs;
use std::path::Path;

pub const CONFIG_FILE: &str = "config.json";
pub const TRACE_FILE: &str = "trace.jsonl";
pub const TRANSFORM_FILE: &str = "transform.json";
pub const OUTPUT_MAP_FILE: &str = "output_map.json";
pub const TIMING_FILE: &str = "timing.json";
pub const RISK_TABLE_FILE: &str = "risk_bound.txt";

/// The reproducible trace serialization: one compact JSON object per line.
pub fn render_trace(trace: &TrainTrace) -> String {
    let mut out = String::new();
    for record in &trace.records {
        out.push_str(&serde_json::to_string(record).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_trace_records(text: &str) -> Result<Vec<EpochRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Write the full report for a finished run.
pub fn write_report(
    dir: &Path,
    resolved_config: &RunConfig,
    transform: &InputTransform,
    output_map: &OutputMap,
    trace: &TrainTrace,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(CONFIG_FILE), resolved_config.to_pretty_json())?;
    fs::write(dir.join(TRACE_FILE), render_trace(trace))?;
    fs::write(dir.join(TRANSFORM_FILE), serde_json::to_string_pretty(transform)?)?;
    fs::write(dir.join(OUTPUT_MAP_FILE), serde_json::to_string_pretty(output_map)?)?;
    let timing = serde_json::json!({
        "wall_ms_per_epoch": trace.wall_ms,
        "train_oracle_calls": trace.train_oracle_calls,
        "setup_oracle_calls": trace.setup_oracle_calls,
        "eval_oracle_calls": trace.eval_oracle_calls,
    });
    fs::write(dir.join(TIMING_FILE), serde_json::to_string_pretty(&timing)?)?;
    Ok(())
}

pub fn read_transform(dir: &Path) -> Result<InputTransform> {
    Ok(serde_json::from_str(&fs::read_to_string(dir.join(TRANSFORM_FILE))?)?)
}

pub fn read_output_map(dir: &Path) -> Result<OutputMap> {
    Ok(serde_json::from_str(&fs::read_to_string(dir.join(OUTPUT_MAP_FILE))?)?)
}

pub fn read_trace_records(dir: &Path) -> Result<Vec<EpochRecord>> {
    parse_trace_records(&fs::read_to_string(dir.join(TRACE_FILE))?)
}

/// Render the risk-bound table. Missing source data leaves the dependent
/// columns marked unavailable.
pub fn render_risk_table(report: &RiskBoundReport) -> String {
    let fmt = |v: Option<f64>| match v {
        Some(x) => format!("{x:.6}"),
        None => "unavailable".to_string(),
    };
    let holds = match report.holds {
        Some(true) => "true",
        Some(false) => "false",
        None => "unavailable",
    };
    let headers = ["target_risk", "source_risk", "w1", "2sqrt(K)w1", "bound", "holds"];
    let values = [
        format!("{:.6}", report.target_risk),
        fmt(report.source_risk),
        format!("{:.6}", report.w1),
        format!("{:.6}", report.alignment_term()),
        fmt(report.bound),
        holds.to_string(),
    ];
    let widths: Vec<usize> = headers
        .iter()
        .zip(&values)
        .map(|(h, v)| h.len().max(v.len()))
        .collect();
    let mut line1 = String::new();
    let mut line2 = String::new();
    for (i, ((h, v), w)) in headers.iter().zip(&values).zip(&widths).enumerate() {
        if i > 0 {
            line1.push_str(" | ");
            line2.push_str(" | ");
        }
        line1.push_str(&format!("{h:>w$}", w = w));
        line2.push_str(&format!("{v:>w$}", w = w));
    }
    format!("{line1}\n{line2}\n")
}

pub fn write_risk_table(dir: &Path, report: &RiskBoundReport) -> Result<String> {
    let table = render_risk_table(report);
    fs::create_dir_all(dir)?;
    fs::write(dir.join(RISK_TABLE_FILE), &table)?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::output_map::LabelMapping;
    use crate::train::EpochRecord;
    use crate::transform::{PlacementLayout, PlacementMode};

    #[test]
    fn report_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::default();
        let layout = PlacementLayout::new(2, 6, PlacementMode::Center).unwrap();
        let transform = InputTransform::new(layout, Some((-1.0, 1.0)));
        let map = OutputMap::Mapping(LabelMapping::new(vec![vec![3], vec![1]], 5).unwrap());
        let trace = TrainTrace {
            records: vec![EpochRecord {
                epoch: 0,
                loss: 0.5,
                train_acc: 0.75,
                test_acc: 0.7,
                queries: 42,
            }],
            wall_ms: vec![10],
            ..TrainTrace::default()
        };
        write_report(dir.path(), &cfg, &transform, &map, &trace).unwrap();

        assert_eq!(read_transform(dir.path()).unwrap(), transform);
        assert_eq!(read_output_map(dir.path()).unwrap(), map);
        assert_eq!(read_trace_records(dir.path()).unwrap(), trace.records);
        let echoed: RunConfig = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join(CONFIG_FILE)).unwrap(),
        )
        .unwrap();
        assert_eq!(echoed, cfg);
    }

    #[test]
    fn trace_lines_are_one_record_each() {
        let trace = TrainTrace {
            records: (0..3)
                .map(|e| EpochRecord {
                    epoch: e,
                    loss: e as f64 * 0.1,
                    train_acc: 0.5,
                    test_acc: 0.5,
                    queries: 0,
                })
                .collect(),
            ..TrainTrace::default()
        };
        let text = render_trace(&trace);
        assert_eq!(text.lines().count(), 3);
        assert_eq!(parse_trace_records(&text).unwrap(), trace.records);
    }

    #[test]
    fn risk_table_renders_unavailable_columns() {
        let report = RiskBoundReport {
            target_risk: 0.4,
            source_risk: None,
            w1: 1.25,
            n_rep: 10,
            k: 2,
            bound: None,
            holds: None,
        };
        let table = render_risk_table(&report);
        assert!(table.contains("unavailable"));
        assert!(table.contains("target_risk"));
        let full = RiskBoundReport {
            target_risk: 0.4,
            source_risk: Some(0.2),
            w1: 1.25,
            n_rep: 10,
            k: 4,
            bound: Some(0.2 + 2.0 * 2.0 * 1.25),
            holds: Some(true),
        };
        let table = render_risk_table(&full);
        assert!(table.contains("true"));
        assert!(table.contains("5.2"), "{table}");
    }
}
