//! Learning-curve tables and the flat per-iteration CSV.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use al_seqtag::engine::RunRecord;
use al_seqtag::metrics::mean_std;
use al_seqtag::neural::McVariant;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// One CSV line: a single iteration of a single run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub run_id: String,
    pub strategy: String,
    pub mc_variant: String,
    pub iteration: usize,
    pub labeled_tokens: usize,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub train_seconds: f64,
    pub query_seconds: f64,
    pub model: String,
    pub total_tokens: usize,
}

impl ReportRow {
    pub fn curve_label(&self) -> String {
        curve_label(&self.model, &self.strategy, &self.mc_variant)
    }
}

/// `acquisition` or `acquisition->successor`.
pub fn model_name(record: &RunRecord) -> String {
    let p = &record.protocol;
    if p.acquisition == p.successor {
        p.acquisition.name().to_string()
    } else {
        format!("{}->{}", p.acquisition.name(), p.successor.name())
    }
}

pub fn curve_label(model: &str, strategy: &str, mc_variant: &str) -> String {
    if mc_variant == McVariant::None.as_str() || strategy == "RANDOM" {
        format!("{model} {strategy}")
    } else {
        format!("{model} {strategy} {mc_variant}")
    }
}

fn run_id(r: &RunRecord) -> String {
    format!("{}/{}", r.config_hash, r.run_seed)
}

/// Flattens records into successor-model rows.
pub fn rows(records: &[RunRecord]) -> Vec<ReportRow> {
    let mut out = Vec::new();
    for r in records {
        let model = model_name(r);
        for e in &r.entries {
            out.push(ReportRow {
                run_id: run_id(r),
                strategy: r.protocol.strategy.as_str().to_string(),
                mc_variant: r.protocol.mc.variant.as_str().to_string(),
                iteration: e.iteration,
                labeled_tokens: e.labeled_tokens,
                f1: e.successor.f1,
                precision: e.successor.precision,
                recall: e.successor.recall,
                train_seconds: e.timing.train_seconds,
                query_seconds: e.timing.query_seconds,
                model: model.clone(),
                total_tokens: r.total_tokens,
            });
        }
    }
    out
}

/// All records must cover the same iterations.
pub fn check_iterations(records: &[RunRecord]) -> Result<(), CliError> {
    let mut counts: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for r in records {
        counts.entry(r.entries.len()).or_default().push(run_id(r));
    }
    if counts.len() <= 1 {
        return Ok(());
    }
    let majority = counts.iter().max_by_key(|(n, ids)| (ids.len(), *n)).map(|(n, _)| *n).expect("non-empty");
    let offending: Vec<String> = counts
        .iter()
        .filter(|(n, _)| **n != majority)
        .flat_map(|(n, ids)| ids.iter().map(move |id| format!("{id} ({n} evaluations)")))
        .collect();
    Err(CliError::Data(format!(
        "runs have mixed iteration counts (most have {majority} evaluations); offending runs: {}",
        offending.join(", ")
    )))
}

struct Group<'a> {
    label: String,
    hash: String,
    records: Vec<&'a RunRecord>,
}

fn groups(records: &[RunRecord]) -> Vec<Group<'_>> {
    let mut by_hash: BTreeMap<&str, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        by_hash.entry(&r.config_hash).or_default().push(r);
    }
    let mut out: Vec<Group> = by_hash
        .into_iter()
        .map(|(hash, records)| {
            let p = &records[0].protocol;
            Group {
                label: curve_label(&model_name(records[0]), p.strategy.as_str(), p.mc.variant.as_str()),
                hash: hash.to_string(),
                records,
            }
        })
        .collect();
    out.sort_by(|a, b| a.label.cmp(&b.label).then(a.hash.cmp(&b.hash)));
    out
}

fn pad(s: &str, width: usize) -> String {
    format!("{s:<width$}")
}

/// Text tables: span F1 (%) per iteration as `mean ± std` over repeats, then
/// mean wall-clock seconds of the two timed phases.
pub fn render(records: &[RunRecord]) -> Result<String, CliError> {
    if records.is_empty() {
        return Err(CliError::Data("no run records found".into()));
    }
    check_iterations(records)?;
    let groups = groups(records);
    let iterations: Vec<usize> = records[0].entries.iter().map(|e| e.iteration).collect();

    let mut header = vec!["Model / strategy".to_string(), "Config".into(), "Runs".into()];
    header.extend(iterations.iter().map(|i| format!("It. {i}")));
    let mut table: Vec<Vec<String>> = vec![header];
    for g in &groups {
        let mut row = vec![g.label.clone(), g.hash[..8.min(g.hash.len())].to_string(), g.records.len().to_string()];
        for k in 0..iterations.len() {
            let f1: Vec<f64> = g.records.iter().map(|r| r.entries[k].successor.f1 * 100.0).collect();
            let (m, s) = mean_std(&f1);
            row.push(format!("{m:.2} ± {s:.2}"));
        }
        table.push(row);
    }
    let mut out = String::from("Span F1 (%) of the successor model, mean ± std over runs\n\n");
    out.push_str(&format_table(&table));

    let mut timing = vec![vec![
        "Model / strategy".to_string(),
        "Config".into(),
        "Acq. model training (s)".into(),
        "Querying instances (s)".into(),
    ]];
    for g in &groups {
        let per_iter = |f: &dyn Fn(&al_seqtag::engine::PhaseTiming) -> f64| {
            let xs: Vec<f64> = g.records.iter().flat_map(|r| r.entries.iter().map(|e| f(&e.timing))).collect();
            mean_std(&xs)
        };
        let (train, train_sd) = per_iter(&|t| t.train_seconds);
        let (query, query_sd) = per_iter(&|t| t.query_seconds);
        timing.push(vec![
            g.label.clone(),
            g.hash[..8.min(g.hash.len())].to_string(),
            format!("{train:.3} ± {train_sd:.3}"),
            format!("{query:.3} ± {query_sd:.3}"),
        ]);
    }
    out.push_str("\nDuration of iteration phases, mean ± std over iterations and runs\n\n");
    out.push_str(&format_table(&timing));
    Ok(out)
}

fn format_table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> =
        (0..cols).map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row.iter().enumerate().map(|(c, s)| pad(s, widths[c])).collect();
        let _ = writeln!(out, "| {} |", cells.join(" | "));
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            let _ = writeln!(out, "|-{}-|", rule.join("-|-"));
        }
    }
    out
}

pub fn write_csv(rows: &[ReportRow], path: &Path) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Write { path: path.to_path_buf(), source: std::io::Error::other(e.to_string()) };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(|source| CliError::Write { path: path.to_path_buf(), source })
}

pub fn read_csv(path: &Path) -> Result<Vec<ReportRow>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<Result<Vec<ReportRow>, _>>()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}
