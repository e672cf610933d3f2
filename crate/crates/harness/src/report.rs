//! Markdown report rendering.
//!
//! The report is a pure function of the run specification and the scores.
//! Wall-clock timings deliberately stay out of it (they live in the run
//! store), so two runs with the same config and seeds render byte-identical
//! reports. It opens with the exact run specification, then gives one table
//! per environment plus a cross-environment summary.

use std::fmt::Write as _;

use sipe_core::{CoreError, Result};

use crate::score::{CellStatus, ScoreReport, TransferReport};

fn fmt_acc(v: f64) -> String {
    format!("{v:.3}")
}

/// Render the report, optionally folding in transfer results.
pub fn render_report(report: &ScoreReport, transfer: Option<&TransferReport>) -> Result<String> {
    if report.cells.is_empty() {
        return Err(CoreError::EmptyInput("score report has no cells".into()));
    }
    report.verify()?;

    let mut md = String::new();
    let run = &report.run;
    let _ = writeln!(md, "# Calibration report: run `{}`\n", run.run_id);

    md.push_str("## Run specification\n\n```json\n");
    let spec_json = serde_json::to_string_pretty(run)
        .map_err(|e| CoreError::invalid("run spec encode", e.to_string()))?;
    md.push_str(&spec_json);
    md.push_str("\n```\n\n");

    let mut envs: Vec<String> = report.aggregates.iter().map(|a| a.env_id.clone()).collect();
    envs.dedup();
    let mut estimators: Vec<_> = report.aggregates.iter().map(|a| a.estimator).collect();
    estimators.sort_by_key(|k| k.id());
    estimators.dedup();

    md.push_str("## Summary\n\nScalar accuracy, mean over seeds (spread in parentheses).\n\n");
    let _ = writeln!(md, "| estimator | {} |", envs.join(" | "));
    let _ = writeln!(md, "|---{}|", "|---".repeat(envs.len()));
    for est in &estimators {
        let mut row = format!("| {est} ");
        for env in &envs {
            let cell = match report.aggregate_for(env, *est) {
                Some(a) => match &a.scalar {
                    Some(s) => format!("{} ({})", fmt_acc(s.mean), fmt_acc(s.spread)),
                    None => format!("failed ({}/{})", a.n_failed, a.n_seeds),
                },
                None => "-".to_string(),
            };
            let _ = write!(row, "| {cell} ");
        }
        row.push('|');
        let _ = writeln!(md, "{row}");
    }
    md.push('\n');

    for env in &envs {
        let _ = writeln!(md, "## Environment: {env}\n");
        md.push_str(
            "| estimator | mean | min | max | spread | population mean | converged | failed | max steps |\n",
        );
        md.push_str("|---|---|---|---|---|---|---|---|---|\n");
        for est in &estimators {
            let Some(a) = report.aggregate_for(env, *est) else { continue };
            let (mean, min, max, spread) = match &a.scalar {
                Some(s) => (fmt_acc(s.mean), fmt_acc(s.min), fmt_acc(s.max), fmt_acc(s.spread)),
                None => ("-".into(), "-".into(), "-".into(), "-".into()),
            };
            let pop = a
                .scalar_mean_estimate
                .as_ref()
                .map(|s| fmt_acc(s.mean))
                .unwrap_or_else(|| "-".into());
            let _ = writeln!(
                md,
                "| {est} | {mean} | {min} | {max} | {spread} | {pop} | {}/{} | {} | {} |",
                a.n_converged, a.n_seeds, a.n_failed, a.max_steps
            );
        }
        md.push('\n');

        // per-parameter mean accuracy, parameters as rows
        let names: Vec<String> = sipe_core::sim::env_spec(env)?
            .space
            .params()
            .iter()
            .map(|p| p.name.clone())
            .collect();
        let with_vectors: Vec<_> = estimators
            .iter()
            .filter_map(|est| {
                report
                    .aggregate_for(env, *est)
                    .and_then(|a| a.per_param_mean.as_ref().map(|v| (*est, v)))
            })
            .collect();
        if !with_vectors.is_empty() {
            md.push_str("Per-parameter mean accuracy:\n\n");
            let header: Vec<String> =
                with_vectors.iter().map(|(est, _)| est.id().to_string()).collect();
            let _ = writeln!(md, "| parameter | {} |", header.join(" | "));
            let _ = writeln!(md, "|---{}|", "|---".repeat(with_vectors.len()));
            for (d, name) in names.iter().enumerate() {
                let row: Vec<String> =
                    with_vectors.iter().map(|(_, v)| fmt_acc(v[d])).collect();
                let _ = writeln!(md, "| {name} | {} |", row.join(" | "));
            }
            md.push('\n');
        }
    }

    let failures: Vec<_> = report
        .cells
        .iter()
        .filter_map(|c| match &c.status {
            CellStatus::Failed { message } => Some((c, message)),
            CellStatus::Ok => None,
        })
        .collect();
    if !failures.is_empty() {
        md.push_str("## Failed cells\n\n");
        for (c, message) in failures {
            let _ = writeln!(md, "- `{}/{}` seed {}: {message}", c.env_id, c.estimator, c.seed_index);
        }
        md.push('\n');
    }

    if let Some(t) = transfer {
        let _ = writeln!(md, "## Transfer (from run `{}`)\n", t.run_id);
        md.push_str("| environment | estimator | seed | score | source return | target return | floor |\n");
        md.push_str("|---|---|---|---|---|---|---|\n");
        for c in &t.cells {
            match &c.status {
                CellStatus::Ok => {
                    let _ = writeln!(
                        md,
                        "| {} | {} | {} | {:.3} | {:.3} | {:.3} | {:.3} |",
                        c.env_id,
                        c.estimator,
                        c.seed_index,
                        c.score.unwrap_or(f64::NAN),
                        c.source_return.unwrap_or(f64::NAN),
                        c.target_return.unwrap_or(f64::NAN),
                        c.floor.unwrap_or(f64::NAN),
                    );
                }
                CellStatus::Failed { message } => {
                    let _ = writeln!(
                        md,
                        "| {} | {} | {} | failed: {message} | - | - | - |",
                        c.env_id, c.estimator, c.seed_index
                    );
                }
            }
        }
        md.push('\n');
    }

    Ok(md)
}
