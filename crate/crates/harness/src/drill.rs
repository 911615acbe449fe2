//! Recovery drills: seed an instance, lose its host to ransomware, then try
//! to bring the same instance back.

use std::fmt;
use std::time::{Duration, Instant};

use futures::{stream, StreamExt, TryStreamExt};
use serde::{Deserialize, Serialize};
use vaultline_core::{generate_synthetic, PatientRecord};
use vaultline_healthapp::{AppClient, HealthApp};
use vaultline_storage::BackendKind;

use crate::attack::{compromise_app_host, RansomStats};
use crate::env::Environment;

/// Concurrent requests used to seed and snapshot a drill instance.
pub const DRILL_WORKERS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DataSafety {
    PotentialLoss,
    PresumedSafe,
    Safe,
}

impl DataSafety {
    pub fn of(kind: BackendKind) -> Self {
        match kind {
            BackendKind::LocalFilePlain | BackendKind::RemoteFilePlain => DataSafety::PotentialLoss,
            BackendKind::ProposedVault => DataSafety::Safe,
            _ => DataSafety::PresumedSafe,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DataSafety::PotentialLoss => "Potential data loss",
            DataSafety::PresumedSafe => "Data was presumed safe",
            DataSafety::Safe => "Data was safe",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    NotRecovered,
    /// Only an operator restoring a snapshot of the data host can help.
    FromSnapshots,
    Recovered,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::NotRecovered => "system could not be recovered",
            Outcome::FromSnapshots => "system could be recovered from database snapshots",
            Outcome::Recovered => "system was recovered with the same identifier",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub safety: DataSafety,
    pub outcome: Outcome,
}

impl Verdict {
    /// The verdict each approach is expected to earn when its application
    /// host is lost.
    pub fn expected(kind: BackendKind) -> Self {
        let outcome = match kind {
            BackendKind::ProposedVault => Outcome::Recovered,
            BackendKind::RemoteDatabase => Outcome::FromSnapshots,
            _ => Outcome::NotRecovered,
        };
        Verdict {
            safety: DataSafety::of(kind),
            outcome,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}; {}.", self.safety.as_str(), self.outcome.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrillReport {
    pub kind: BackendKind,
    pub n_patients: usize,
    pub seed: u64,
    pub instance_id: String,
    pub verdict: String,
    pub expected: String,
    pub ransom: RansomStats,
    /// Patients whose post-attack read equals the pre-attack snapshot.
    pub restored: usize,
    /// Why the replacement instance could not serve the old data, if it
    /// could not.
    pub failure: Option<String>,
    pub seed_ms: f64,
    /// Time from the replacement instance starting to its last verified read.
    pub recovery_ms: f64,
    /// Time the vault recovery itself reported.
    pub vault_recovery_ms: Option<f64>,
}

impl DrillReport {
    pub fn matches_expected(&self) -> bool {
        self.verdict == self.expected
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

async fn seed(api: &AppClient, records: &[PatientRecord]) -> anyhow::Result<()> {
    stream::iter(records)
        .map(|r| api.create(r))
        .buffer_unordered(DRILL_WORKERS)
        .try_for_each(|_| async { Ok(()) })
        .await?;
    Ok(())
}

async fn snapshot(api: &AppClient, ids: &[String]) -> anyhow::Result<Vec<PatientRecord>> {
    Ok(stream::iter(ids)
        .map(|id| api.read(id))
        .buffered(DRILL_WORKERS)
        .try_collect()
        .await?)
}

/// Counts patients that read back exactly as they did before the attack.
async fn count_restored(api: &AppClient, before: &[PatientRecord]) -> (usize, Option<String>) {
    let results: Vec<_> = stream::iter(before)
        .map(|r| async move { (r, api.read(&r.patient_id).await) })
        .buffered(DRILL_WORKERS)
        .collect()
        .await;
    let mut restored = 0;
    let mut first_failure = None;
    for (want, got) in results {
        match got {
            Ok(got) if &got == want => restored += 1,
            Ok(_) => {
                first_failure
                    .get_or_insert_with(|| format!("{}: read back different values", want.patient_id));
            }
            Err(e) => {
                first_failure.get_or_insert_with(|| format!("{}: {e}", want.patient_id));
            }
        }
    }
    (restored, first_failure)
}

/// Seeds `n_patients`, destroys the application host together with
/// everything it could write to, and attempts the recovery that fits `kind`.
pub async fn run_recovery_drill(
    env: &Environment,
    kind: BackendKind,
    n_patients: usize,
    seed_value: u64,
) -> anyhow::Result<DrillReport> {
    let host = format!("drill-{kind}-{seed_value}");
    let app = env.start_app(kind, &host, None).await?;
    let instance_id = app.creds().instance_id;
    let api = AppClient::new(app.base_url(), env.http().clone());

    let records = generate_synthetic(n_patients, seed_value);
    let started = Instant::now();
    seed(&api, &records).await?;
    let seed_ms = ms(started.elapsed());
    let ids = api.list().await?;
    let before = snapshot(&api, &ids).await?;

    let ransom = compromise_app_host(app).await?;

    let started = Instant::now();
    let mut vault_recovery_ms = None;
    let attempt: Result<HealthApp, String> = if kind == BackendKind::ProposedVault {
        // The old host is gone; a new one takes over the identity.
        match env
            .start_app(kind, &format!("{host}-replacement"), Some(&instance_id))
            .await
        {
            Ok(app) => {
                let api = AppClient::new(app.base_url(), env.http().clone());
                match api.recover(&instance_id, env.admin_token()).await {
                    Ok(report) => {
                        vault_recovery_ms = Some(report.elapsed_ms);
                        Ok(app)
                    }
                    Err(e) => Err(format!("recovery failed: {e}")),
                }
            }
            Err(e) => Err(format!("replacement did not start: {e}")),
        }
    } else {
        // Nothing outside the host knows the data, so the best chance is to
        // restart on whatever the attacker left behind.
        env.start_app(kind, &host, Some(&instance_id))
            .await
            .map_err(|e| format!("replacement did not start: {e}"))
    };

    let (restored, failure) = match &attempt {
        Ok(app) => count_restored(&AppClient::new(app.base_url(), env.http().clone()), &before).await,
        Err(e) => (0, Some(e.clone())),
    };
    let recovery_ms = ms(started.elapsed());
    drop(attempt);

    let recovered = failure.is_none() && restored == before.len();
    let outcome = match (recovered, kind) {
        (true, _) => Outcome::Recovered,
        (false, BackendKind::RemoteDatabase) => Outcome::FromSnapshots,
        (false, _) => Outcome::NotRecovered,
    };
    let verdict = Verdict {
        safety: DataSafety::of(kind),
        outcome,
    };
    log::info!("{kind}: {verdict} ({restored}/{} restored)", before.len());

    Ok(DrillReport {
        kind,
        n_patients,
        seed: seed_value,
        instance_id,
        verdict: verdict.to_string(),
        expected: Verdict::expected(kind).to_string(),
        ransom,
        restored,
        failure,
        seed_ms,
        recovery_ms,
        vault_recovery_ms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expected_verdicts_per_approach() {
        let got: Vec<String> = BackendKind::ALL
            .iter()
            .map(|k| Verdict::expected(*k).to_string())
            .collect();
        assert_eq!(
            got,
            [
                "Potential data loss; system could not be recovered.",
                "Potential data loss; system could not be recovered.",
                "Data was presumed safe; system could not be recovered.",
                "Data was presumed safe; system could not be recovered.",
                "Data was presumed safe; system could not be recovered.",
                "Data was presumed safe; system could be recovered from database snapshots.",
                "Data was safe; system was recovered with the same identifier.",
            ]
        );
    }
}
