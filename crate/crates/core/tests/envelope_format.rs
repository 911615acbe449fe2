use vaultline_core::envelope::{open, seal, seal_with_nonce, ENVELOPE_VERSION, HEADER_LEN};
use vaultline_core::{generate_synthetic, serialize_row, DerivedKey, RecordKind};

const GOLDEN: &[u8] = include_bytes!("golden/envelope_v1.bin");

fn fixture_key() -> DerivedKey {
    let mut bytes = [0u8; 32];
    for (i, b) in bytes.iter_mut().enumerate() {
        *b = i as u8;
    }
    DerivedKey::from_bytes(bytes, 1)
}

fn fixture_nonce() -> [u8; 12] {
    let mut nonce = [0u8; 12];
    for (i, b) in nonce.iter_mut().enumerate() {
        *b = 100 + i as u8;
    }
    nonce
}

const ROW: &str = "1984-07-14?123-45-6789?12 Maple St, Salem, MA 01970";

// golden/envelope_v1.bin was produced by an independent AES-GCM
// implementation (Python `cryptography`) from the same key, nonce and
// plaintext layout.
#[test]
fn v1_layout_is_bit_exact() {
    let sealed = seal_with_nonce(
        &fixture_key(),
        fixture_nonce(),
        RecordKind::Pii,
        "PT000000001",
        ROW,
    )
    .unwrap();
    assert_eq!(sealed, GOLDEN);
    assert_eq!(sealed[0], ENVELOPE_VERSION);
    assert_eq!(&sealed[1..HEADER_LEN], &fixture_nonce());
}

#[test]
fn golden_blob_opens() {
    let opened = open(&fixture_key(), GOLDEN).unwrap();
    assert_eq!(opened.kind, RecordKind::Pii);
    assert_eq!(opened.patient_id, "PT000000001");
    assert_eq!(opened.row, ROW);
}

fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    haystack.windows(needle.len()).any(|w| w == needle)
}

#[test]
fn sealed_blobs_never_contain_plaintext() {
    let key = DerivedKey::from_bytes([0x5a; 32], 1);
    let mut hits = 0;
    for record in generate_synthetic(1_000, 11) {
        for kind in RecordKind::ALL {
            let row = serialize_row(&record, kind).unwrap();
            let blob = seal(&key, kind, &record.patient_id, &row).unwrap();
            let needles = record
                .fields(kind)
                .into_iter()
                .chain([record.patient_id.as_str(), row.as_str()]);
            hits += needles.filter(|n| contains(&blob, n.as_bytes())).count();
        }
    }
    assert_eq!(hits, 0);
}
