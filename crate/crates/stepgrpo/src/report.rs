//! Plain-text tables for stdout and RFC-4180-style CSV export.

use std::path::Path;

use crate::analyzer::{CompositionReport, DensityReport, DynamicsTable, TaskStats};
use crate::error::{HarnessError, Result};
use crate::eval::EvalSummary;

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    })?;
    let io_err = |e: csv::Error| HarnessError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    };
    w.write_record(header).map_err(io_err)?;
    for row in rows {
        w.write_record(row).map_err(io_err)?;
    }
    w.flush().map_err(HarnessError::io(path))?;
    Ok(())
}

pub fn print_eval_summary(summary: &EvalSummary) {
    println!(
        "{:<12} {:>12} {:>10} {:>12} {:>8}",
        "task", "ground_truth", "accuracy", "mean_tokens", "mean_k"
    );
    for t in &summary.tasks {
        println!(
            "{:<12} {:>12} {:>10.3} {:>12.2} {:>8.2}",
            t.task_id, t.ground_truth, t.accuracy, t.mean_tokens, t.mean_k
        );
    }
    println!(
        "overall: accuracy {:.4}  mean_tokens {:.2}  mean_k {:.3}",
        summary.accuracy, summary.mean_tokens, summary.mean_k
    );
}

pub fn print_cr(stats: &[TaskStats], cr: f64) {
    println!(
        "{:<12} {:>14} {:>16} {:>8}",
        "task", "model_tokens", "vanilla_tokens", "ratio"
    );
    for s in stats {
        println!(
            "{:<12} {:>14.2} {:>16.2} {:>8.4}",
            s.task_key,
            s.avg_tokens_model,
            s.avg_tokens_vanilla,
            s.avg_tokens_model / s.avg_tokens_vanilla
        );
    }
    println!(
        "compression rate (mean of per-task ratios): {:.4} ({:.1}%)",
        cr,
        cr * 100.0
    );
}

pub fn csv_cr(path: &Path, stats: &[TaskStats], cr: f64) -> Result<()> {
    let mut rows: Vec<Vec<String>> = stats
        .iter()
        .map(|s| {
            vec![
                s.task_key.clone(),
                s.avg_tokens_model.to_string(),
                s.avg_tokens_vanilla.to_string(),
                (s.avg_tokens_model / s.avg_tokens_vanilla).to_string(),
            ]
        })
        .collect();
    rows.push(vec![
        "overall".into(),
        String::new(),
        String::new(),
        cr.to_string(),
    ]);
    write_csv(
        path,
        &[
            "task_key",
            "avg_tokens_model",
            "avg_tokens_vanilla",
            "ratio",
        ],
        &rows,
    )
}

pub fn print_density(report: &DensityReport) {
    println!(
        "densities: {} traces, {} kept after 1.5*IQR trim",
        report.count, report.trimmed_count
    );
    println!("{:>10} {:>10} {:>10} {:>10}", "mean", "median", "q1", "q3");
    println!(
        "{:>10.5} {:>10.5} {:>10.5} {:>10.5}",
        report.mean, report.median, report.q1, report.q3
    );
}

pub fn csv_density(path: &Path, report: &DensityReport) -> Result<()> {
    write_csv(
        path,
        &["count", "trimmed_count", "mean", "median", "q1", "q3"],
        &[vec![
            report.count.to_string(),
            report.trimmed_count.to_string(),
            report.mean.to_string(),
            report.median.to_string(),
            report.q1.to_string(),
            report.q3.to_string(),
        ]],
    )
}

pub fn print_composition(report: &CompositionReport, threshold: f64) {
    println!("step composition (heuristic proxy, redundancy threshold {threshold}):");
    println!(
        "{:>10} {:>14} {:>10} {:>14}",
        "forward", "verification", "redundant", "avg_steps"
    );
    println!(
        "{:>9.1}% {:>13.1}% {:>9.1}% {:>14.2}",
        report.forward * 100.0,
        report.verification * 100.0,
        report.redundant * 100.0,
        report.avg_step_count
    );
}

pub fn csv_composition(path: &Path, report: &CompositionReport) -> Result<()> {
    write_csv(
        path,
        &["forward", "verification", "redundant", "avg_step_count"],
        &[vec![
            report.forward.to_string(),
            report.verification.to_string(),
            report.redundant.to_string(),
            report.avg_step_count.to_string(),
        ]],
    )
}

pub fn print_dynamics(table: &DynamicsTable) {
    print!("{:>6}", "step");
    for run in &table.runs {
        print!(
            " {:>18} {:>18}",
            format!("acc[{}]", short(&run.name)),
            format!("tok[{}]", short(&run.name))
        );
    }
    println!();
    for &step in &table.steps {
        print!("{step:>6}");
        for run in &table.runs {
            match run.rows.get(&step) {
                Some(&(acc, tok)) => print!(" {acc:>18.4} {tok:>18.2}"),
                None => print!(" {:>18} {:>18}", "-", "-"),
            }
        }
        println!();
    }
    for (run, step) in &table.gaps {
        println!("gap: run {run} is missing step {step}");
    }
}

fn short(name: &str) -> String {
    let base = name.rsplit('/').nth(1).unwrap_or(name);
    let mut s = base.to_string();
    s.truncate(12);
    s
}

pub fn csv_dynamics(path: &Path, table: &DynamicsTable) -> Result<()> {
    let mut header: Vec<String> = vec!["step".into()];
    for run in &table.runs {
        header.push(format!("accuracy[{}]", run.name));
        header.push(format!("mean_tokens[{}]", run.name));
    }
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut rows = Vec::new();
    for &step in &table.steps {
        let mut row = vec![step.to_string()];
        for run in &table.runs {
            match run.rows.get(&step) {
                Some(&(acc, tok)) => {
                    row.push(acc.to_string());
                    row.push(tok.to_string());
                }
                None => {
                    row.push(String::new());
                    row.push(String::new());
                }
            }
        }
        rows.push(row);
    }
    write_csv(path, &header_refs, &rows)
}
