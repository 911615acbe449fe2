use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use tokio::sync::{Mutex, MutexGuard};

const STRIPES: usize = 64;

/// Serialises multi-step operations on the same patient id. Ids hash onto
/// a fixed set of stripes, so unrelated patients rarely contend.
#[derive(Debug)]
pub(crate) struct PatientLocks {
    stripes: Vec<Mutex<()>>,
}

impl Default for PatientLocks {
    fn default() -> Self {
        PatientLocks {
            stripes: (0..STRIPES).map(|_| Mutex::new(())).collect(),
        }
    }
}

impl PatientLocks {
    pub(crate) async fn lock(&self, patient_id: &str) -> MutexGuard<'_, ()> {
        let mut h = DefaultHasher::new();
        patient_id.hash(&mut h);
        self.stripes[(h.finish() as usize) % STRIPES].lock().await
    }
}
