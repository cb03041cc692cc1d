//! CSV and summary output. Floats are printed with six decimals so reruns
//! are byte-identical.

use std::fmt::Write as _;
use std::path::Path;

use crate::metrics::RunReport;
use crate::SimError;

pub const HEIGHTS_CSV: &str = "heights.csv";
pub const KEYBLOCKS_CSV: &str = "keyblocks.csv";
pub const BASE_CSV: &str = "base_accuracy.csv";
pub const BASELINE_CSV: &str = "baseline.csv";
pub const REWARDS_CSV: &str = "rewards.csv";
pub const SUMMARY_TXT: &str = "summary.txt";

/// Every file [`write_report`] produces.
pub const OUTPUT_FILES: [&str; 6] = [
    HEIGHTS_CSV,
    KEYBLOCKS_CSV,
    BASE_CSV,
    BASELINE_CSV,
    REWARDS_CSV,
    SUMMARY_TXT,
];

fn f6(x: f64) -> String {
    format!("{x:.6}")
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), SimError> {
    let csv_err = |e: csv::Error| SimError::Csv(path.display().to_string(), e.to_string());
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| SimError::io(path, e))
}

pub fn summary_text(report: &RunReport) -> String {
    let s = &report.summary;
    let mut out = String::new();
    let mut line = |k: &str, v: String| writeln!(out, "{k}: {v}").expect("writing to a String");
    line("heights", s.heights.to_string());
    line("rounds", s.rounds.to_string());
    line("keyblocks_mined", s.keyblocks_mined.to_string());
    line("stale_keyblocks", s.stale_keyblocks.to_string());
    line("empty_keyblocks", s.empty_keyblocks.to_string());
    line("mean_accuracy", f6(s.mean_accuracy));
    line("mean_best_possible", f6(s.mean_best_possible));
    line("mean_wastage", f6(s.mean_wastage));
    line("mean_base_accuracy", f6(s.mean_base_accuracy));
    line("mean_baseline_accuracy", f6(s.mean_baseline_accuracy));
    line("fee_shares_paid", s.fee_shares_paid.to_string());
    line("fees_of_completed_tasks", s.fees_of_completed_tasks.to_string());
    line("abstentions", s.abstentions.to_string());
    line("messages", s.messages.to_string());
    for (code, n) in &s.rejections {
        line(&format!("rejected.{code}"), n.to_string());
    }
    out
}

pub fn write_report(report: &RunReport, dir: &Path) -> Result<(), SimError> {
    std::fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))?;
    write_csv(
        &dir.join(HEIGHTS_CSV),
        &["height", "accuracy", "best_possible", "wastage", "forks", "rounds"],
        report
            .records
            .iter()
            .map(|r| {
                vec![
                    r.height.to_string(),
                    f6(r.accuracy.as_f64()),
                    f6(r.best_possible.as_f64()),
                    r.wastage().to_string(),
                    r.forks.to_string(),
                    r.rounds.to_string(),
                ]
            })
            .collect(),
    )?;
    write_csv(
        &dir.join(KEYBLOCKS_CSV),
        &["height", "keyblock", "miniblocks_total", "miniblocks_used", "empty"],
        report
            .records
            .iter()
            .map(|r| {
                vec![
                    r.height.to_string(),
                    r.keyblock.to_hex(),
                    r.miniblocks_total.to_string(),
                    r.miniblocks_used.to_string(),
                    r.empty.to_string(),
                ]
            })
            .collect(),
    )?;
    write_csv(
        &dir.join(BASE_CSV),
        &["height", "miner", "accuracy"],
        report
            .base
            .iter()
            .map(|b| vec![b.height.to_string(), b.miner.to_string(), f6(b.accuracy.as_f64())])
            .collect(),
    )?;
    write_csv(
        &dir.join(BASELINE_CSV),
        &["height", "accuracy"],
        report
            .baseline
            .iter()
            .map(|(h, a)| vec![h.to_string(), f6(a.as_f64())])
            .collect(),
    )?;
    write_csv(
        &dir.join(REWARDS_CSV),
        &["miner", "fee_shares", "keyblock_rewards", "total"],
        report
            .rewards
            .iter()
            .map(|r| {
                vec![
                    r.miner.to_string(),
                    r.fee_shares.to_string(),
                    r.keyblock_rewards.to_string(),
                    (r.fee_shares + r.keyblock_rewards).to_string(),
                ]
            })
            .collect(),
    )?;
    let path = dir.join(SUMMARY_TXT);
    std::fs::write(&path, summary_text(report)).map_err(|e| SimError::io(&path, e))
}
