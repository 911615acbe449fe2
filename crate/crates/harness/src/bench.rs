//! The create/fetch cost benchmark.

use std::time::Instant;

use futures::{stream, StreamExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use vaultline_core::generate_synthetic;
use vaultline_storage::{BackendKind, BackendMetrics, RecordStore, StorageError};

use crate::env::Environment;

pub const DEFAULT_CREATES: usize = 100_000;
pub const DEFAULT_FETCHES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchParams {
    pub creates: usize,
    pub fetches: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Default for BenchParams {
    fn default() -> Self {
        BenchParams {
            creates: DEFAULT_CREATES,
            fetches: DEFAULT_FETCHES,
            seed: 1,
            workers: 1,
        }
    }
}

/// Static resilience labels per approach.
pub fn resilience(kind: BackendKind) -> &'static str {
    match kind {
        BackendKind::LocalFilePlain | BackendKind::RemoteFilePlain | BackendKind::LocalDatabase => "Low",
        BackendKind::LocalFileEncrypted | BackendKind::RemoteFileEncrypted => "Moderate",
        BackendKind::RemoteDatabase => "High",
        BackendKind::ProposedVault => "Very High",
    }
}

/// One measured row of the cost report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub kind: BackendKind,
    pub avg_encrypt_ms: f64,
    pub avg_decrypt_ms: f64,
    pub avg_network_us: f64,
    pub resilience: String,
    /// Filled in from a recovery drill, when one was run.
    pub recoverability: Option<String>,
    pub n_create: usize,
    pub n_fetch: usize,
    pub seed: u64,
    pub workers: usize,
    pub wall_ms: f64,
    /// Sum of the three metered channels, for the soundness check against
    /// `wall_ms * workers`.
    pub metered_ms: f64,
    /// The run stopped early because the backend became unavailable.
    pub partial: bool,
    pub error: Option<String>,
}

fn average(total_secs: f64, count: usize, scale: f64) -> f64 {
    if count == 0 {
        0.0
    } else {
        total_secs * scale / count as f64
    }
}

impl CostReport {
    fn from_metrics(
        kind: BackendKind,
        params: &BenchParams,
        m: &BackendMetrics,
        creates: usize,
        fetches: usize,
        wall_ms: f64,
    ) -> Self {
        let enc = m.encrypt_time_total.as_secs_f64();
        let dec = m.decrypt_time_total.as_secs_f64();
        let net = m.network_time_total.as_secs_f64();
        CostReport {
            kind,
            avg_encrypt_ms: average(enc, creates, 1e3),
            avg_decrypt_ms: average(dec, fetches, 1e3),
            avg_network_us: average(net, creates + fetches, 1e6),
            resilience: resilience(kind).to_owned(),
            recoverability: None,
            n_create: creates,
            n_fetch: fetches,
            seed: params.seed,
            workers: params.workers,
            wall_ms,
            metered_ms: (enc + dec + net) * 1e3,
            partial: false,
            error: None,
        }
    }
}

/// Runs `creates` creates, then `fetches` reads of uniformly chosen
/// patients, and reports the averaged cost channels. Partial results are
/// returned, flagged, if the backend becomes unavailable.
pub async fn bench_store(store: &dyn RecordStore, params: &BenchParams) -> Result<CostReport, StorageError> {
    let kind = store.kind();
    let records = generate_synthetic(params.creates, params.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x6665_7463_6865_7321);
    let picks: Vec<usize> = if records.is_empty() {
        Vec::new()
    } else {
        (0..params.fetches)
            .map(|_| rng.random_range(0..records.len()))
            .collect()
    };
    let workers = params.workers.max(1);

    store.reset_metrics();
    let started = Instant::now();
    let mut failure: Option<StorageError> = None;

    let mut creates = 0;
    let mut results = stream::iter(&records)
        .map(|r| store.create(r))
        .buffer_unordered(workers);
    while let Some(res) = results.next().await {
        match res {
            Ok(_) => creates += 1,
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    drop(results);

    let mut fetches = 0;
    if failure.is_none() {
        let mut results = stream::iter(&picks)
            .map(|&i| store.read(&records[i].patient_id))
            .buffer_unordered(workers);
        while let Some(res) = results.next().await {
            match res {
                Ok(_) => fetches += 1,
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            }
        }
    }

    let wall_ms = started.elapsed().as_secs_f64() * 1e3;
    let mut row = CostReport::from_metrics(kind, params, &store.metrics(), creates, fetches, wall_ms);
    match failure {
        None => Ok(row),
        Some(e @ StorageError::BackendUnavailable(_)) => {
            row.partial = true;
            row.error = Some(e.to_string());
            Ok(row)
        }
        Some(e) => Err(e),
    }
}

/// Benchmarks one approach on a fresh application instance.
pub async fn run_benchmark(
    env: &Environment,
    kind: BackendKind,
    params: &BenchParams,
) -> anyhow::Result<CostReport> {
    let app = env
        .start_app(kind, &format!("bench-{kind}-{}", params.seed), None)
        .await?;
    let row = bench_store(app.backend().as_ref(), params).await?;
    log::info!(
        "{kind}: enc {:.4} ms, dec {:.4} ms, net {:.1} us over {}+{} ops in {:.0} ms",
        row.avg_encrypt_ms,
        row.avg_decrypt_ms,
        row.avg_network_us,
        row.n_create,
        row.n_fetch,
        row.wall_ms
    );
    Ok(row)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn averages_are_totals_over_counts() {
        assert_eq!(average(0.5, 4, 1e3), 125.0);
        assert_eq!(average(1.0, 0, 1e3), 0.0);
    }

    #[test]
    fn resilience_labels() {
        let got: Vec<_> = BackendKind::ALL.iter().map(|k| resilience(*k)).collect();
        assert_eq!(
            got,
            ["Low", "Low", "Moderate", "Moderate", "Low", "High", "Very High"]
        );
    }
}
