//! Rendering and checking cost reports.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use vaultline_storage::BackendKind;

use crate::bench::CostReport;
use crate::drill::Verdict;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Text,
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(Format::Text),
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format {other:?} (text, csv, json)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no report rows")]
    Empty,
    #[error("duplicate row for {0}")]
    Duplicate(BackendKind),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// One row of the qualitative evaluation matrix. These labels are static
/// data, not measurements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Qualitative {
    pub approach: &'static str,
    pub vulnerability: &'static str,
    pub crypto_on_access: &'static str,
    pub data_transfer: &'static str,
    pub crypto_at_storage: &'static str,
    pub usage_complexity: &'static str,
    pub attack_sophistication: &'static str,
}

const fn q(
    approach: &'static str,
    vulnerability: &'static str,
    crypto_on_access: &'static str,
    data_transfer: &'static str,
    crypto_at_storage: &'static str,
    usage_complexity: &'static str,
    attack_sophistication: &'static str,
) -> Qualitative {
    Qualitative {
        approach,
        vulnerability,
        crypto_on_access,
        data_transfer,
        crypto_at_storage,
        usage_complexity,
        attack_sophistication,
    }
}

pub fn qualitative(kind: BackendKind) -> Qualitative {
    match kind {
        BackendKind::LocalFilePlain => q(
            "Unencrypted local filesystem.",
            "Data can be leaked/ransomed.",
            "None",
            "No",
            "None",
            "Low",
            "Low",
        ),
        BackendKind::LocalFileEncrypted => q(
            "Encrypted local filesystem.",
            "Data can be ransomed.",
            "Low",
            "No",
            "Low",
            "Medium",
            "Low",
        ),
        BackendKind::RemoteFilePlain => q(
            "Unencrypted remote filesystem.",
            "Data can be leaked /ransomed.",
            "Low",
            "Yes",
            "None",
            "Medium",
            "Medium",
        ),
        BackendKind::RemoteFileEncrypted => q(
            "Encrypted remote filesystem.",
            "Data can be ransomed.",
            "Low",
            "Yes",
            "Low",
            "Medium",
            "Medium",
        ),
        BackendKind::LocalDatabase => q(
            "Local database.",
            "Data can be leaked/ransomed.",
            "Low",
            "No",
            "Medium",
            "Low",
            "Medium",
        ),
        BackendKind::RemoteDatabase => q(
            "Remote database.",
            "Data can be leaked.",
            "Low",
            "Yes",
            "Medium",
            "Medium",
            "High",
        ),
        BackendKind::ProposedVault => q(
            "Specialized, remote data storage (our proposal).",
            "Data cannot be leaked or ransomed.",
            "Medium",
            "Yes",
            "High",
            "High",
            "Very High",
        ),
    }
}

const QUALITATIVE_ORDER: [BackendKind; 7] = [
    BackendKind::LocalFilePlain,
    BackendKind::LocalFileEncrypted,
    BackendKind::RemoteFilePlain,
    BackendKind::RemoteFileEncrypted,
    BackendKind::LocalDatabase,
    BackendKind::RemoteDatabase,
    BackendKind::ProposedVault,
];

pub const QUALITATIVE_NOTE: &str =
    "Qualitative labels are reproduced as published static data; they are not computed by this harness.";

/// Sorts rows into report order and rejects empty or duplicated input.
pub fn normalize(mut rows: Vec<CostReport>) -> Result<Vec<CostReport>, ReportError> {
    if rows.is_empty() {
        return Err(ReportError::Empty);
    }
    let pos = |k: BackendKind| {
        BackendKind::ALL
            .iter()
            .position(|x| *x == k)
            .unwrap_or(usize::MAX)
    };
    rows.sort_by_key(|r| pos(r.kind));
    for pair in rows.windows(2) {
        if pair[0].kind == pair[1].kind {
            return Err(ReportError::Duplicate(pair[0].kind));
        }
    }
    Ok(rows)
}

/// Accepts a JSON array of rows or a single row.
pub fn parse_rows(json: &str) -> Result<Vec<CostReport>, ReportError> {
    let value: serde_json::Value = serde_json::from_str(json)?;
    Ok(if value.is_array() {
        serde_json::from_value(value)?
    } else {
        vec![serde_json::from_value(value)?]
    })
}

fn table(out: &mut String, header: &[&str], rows: &[Vec<String>]) {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |out: &mut String, cells: &mut dyn Iterator<Item = &str>| {
        let parts: Vec<String> = cells
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}", w = *w))
            .collect();
        let _ = writeln!(out, "{}", parts.join(" | ").trim_end());
    };
    line(out, &mut header.iter().copied());
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    let _ = writeln!(out, "{}", rule.join("-+-"));
    for row in rows {
        line(out, &mut row.iter().map(String::as_str));
    }
}

fn text(rows: &[CostReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Measured costs and recoverability");
    let measured: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.kind.label().to_owned(),
                format!("{:.4}", r.avg_encrypt_ms),
                format!("{:.4}", r.avg_decrypt_ms),
                format!("{:.1}", r.avg_network_us),
                r.resilience.clone(),
                r.recoverability.clone().unwrap_or_else(|| "not drilled".into()),
                format!(
                    "{}/{}{}",
                    r.n_create,
                    r.n_fetch,
                    if r.partial { " (partial)" } else { "" }
                ),
            ]
        })
        .collect();
    table(
        &mut out,
        &[
            "Approach",
            "Encrypt ms/create",
            "Decrypt ms/fetch",
            "Network us/op",
            "Resilience",
            "Recoverability",
            "Creates/fetches",
        ],
        &measured,
    );
    if let Some(seed) = rows.first().map(|r| r.seed) {
        let _ = writeln!(out, "seed {seed}");
    }

    let _ = writeln!(out, "\nEvaluation criteria by functionality");
    let static_rows: Vec<Vec<String>> = QUALITATIVE_ORDER
        .iter()
        .map(|k| {
            let q = qualitative(*k);
            [
                q.approach,
                q.vulnerability,
                q.crypto_on_access,
                q.data_transfer,
                q.crypto_at_storage,
                q.usage_complexity,
                q.attack_sophistication,
            ]
            .map(str::to_owned)
            .to_vec()
        })
        .collect();
    table(
        &mut out,
        &[
            "Data storage approach",
            "Vulnerability",
            "(D)Encryption costs on access",
            "Data transfer costs",
            "(D)Encryption costs at storage",
            "Usage complexity score",
            "Attack sophistication involved",
        ],
        &static_rows,
    );
    let _ = writeln!(out, "* {QUALITATIVE_NOTE}");
    out
}

fn csv(rows: &[CostReport]) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn emit_report(rows: Vec<CostReport>, format: Format) -> Result<String, ReportError> {
    let rows = normalize(rows)?;
    match format {
        Format::Text => Ok(text(&rows)),
        Format::Csv => csv(&rows),
        Format::Json => Ok(serde_json::to_string_pretty(&rows)? + "\n"),
    }
}

/// Everything in `rows` that contradicts the expected cost structure or
/// recoverability verdicts.
pub fn check(rows: &[CostReport]) -> Vec<String> {
    let mut problems = Vec::new();
    for r in rows {
        let k = r.kind;
        if r.partial {
            problems.push(format!(
                "{k}: run incomplete: {}",
                r.error.as_deref().unwrap_or("?")
            ));
        }
        if k.is_remote() != (r.avg_network_us > 0.0) {
            problems.push(format!("{k}: network {} us/op", r.avg_network_us));
        }
        if k.is_encrypted() != (r.avg_encrypt_ms > 0.0) {
            problems.push(format!("{k}: encrypt {} ms/create", r.avg_encrypt_ms));
        }
        if r.n_fetch > 0 && k.is_encrypted() != (r.avg_decrypt_ms > 0.0) {
            problems.push(format!("{k}: decrypt {} ms/fetch", r.avg_decrypt_ms));
        }
        if r.metered_ms > r.wall_ms * r.workers.max(1) as f64 {
            problems.push(format!(
                "{k}: metered {} ms exceeds wall {} ms",
                r.metered_ms, r.wall_ms
            ));
        }
        if let Some(got) = &r.recoverability {
            let want = Verdict::expected(k).to_string();
            if *got != want {
                problems.push(format!("{k}: recoverability {got:?}, expected {want:?}"));
            }
        }
    }
    problems
}
