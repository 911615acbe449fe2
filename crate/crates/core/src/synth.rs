//! Deterministic synthetic patients.
//!
//! Values look plausible but are fake: SSN-shaped strings, 16-digit card
//! numbers, `MM/YYYY` expirations. Nothing here validates real-world
//! semantics such as card checksums.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::PatientRecord;

const STREETS: &[&str] = &[
    "Maple",
    "Oak",
    "Cedar",
    "Elm",
    "Willow",
    "Birch",
    "Chestnut",
    "Spruce",
    "Juniper",
    "Hawthorn",
    "Lakeview",
    "Hillcrest",
    "Riverside",
    "Sunset",
    "Meadow",
    "Orchard",
];
const SUFFIXES: &[&str] = &["St", "Ave", "Rd", "Ln", "Blvd", "Ct", "Way", "Pl"];
const CITIES: &[(&str, &str)] = &[
    ("Springfield", "IL"),
    ("Riverton", "WY"),
    ("Fairview", "OR"),
    ("Greenville", "SC"),
    ("Madison", "WI"),
    ("Franklin", "TN"),
    ("Clinton", "IA"),
    ("Georgetown", "TX"),
    ("Salem", "MA"),
    ("Arlington", "VA"),
];
const AUTH_ALPHABET: &[u8] = b"ABCDEFGHJKLMNPQRSTUVWXYZ23456789";

/// Generates `count` records from `seed`. Patient ids are `PT` followed by a
/// zero-padded sequence number, so they are pairwise distinct.
pub fn generate_synthetic(count: usize, seed: u64) -> Vec<PatientRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|i| synthetic_record(&mut rng, i)).collect()
}

fn synthetic_record(rng: &mut ChaCha8Rng, index: usize) -> PatientRecord {
    let date_of_birth = format!(
        "{:04}-{:02}-{:02}",
        rng.random_range(1930..=2020),
        rng.random_range(1..=12),
        rng.random_range(1..=28)
    );
    let area = loop {
        let a = rng.random_range(1..900);
        if a != 666 {
            break a;
        }
    };
    let social_security_number = format!(
        "{:03}-{:02}-{:04}",
        area,
        rng.random_range(1..100),
        rng.random_range(1..10_000)
    );
    let (city, state) = *CITIES.choose(rng).expect("non-empty");
    let address = format!(
        "{} {} {}, {}, {} {:05}",
        rng.random_range(1..10_000),
        STREETS.choose(rng).expect("non-empty"),
        SUFFIXES.choose(rng).expect("non-empty"),
        city,
        state,
        rng.random_range(1_000..100_000)
    );
    let credit_card_number = format!(
        "4{:03}{:012}",
        rng.random_range(0..1_000),
        rng.random_range(0..1_000_000_000_000u64)
    );
    let expiration_date = format!(
        "{:02}/{}",
        rng.random_range(1..=12),
        rng.random_range(2025..=2034)
    );
    let auth_code: String = (0..6)
        .map(|_| *AUTH_ALPHABET.choose(rng).expect("non-empty") as char)
        .collect();

    PatientRecord {
        patient_id: format!("PT{index:09}"),
        date_of_birth,
        social_security_number,
        address,
        credit_card_number,
        expiration_date,
        auth_code,
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use crate::model::{parse_row, serialize_row, RecordKind};

    #[test]
    fn zero_count_is_empty() {
        assert!(generate_synthetic(0, 7).is_empty());
    }

    #[test]
    fn deterministic_for_a_seed() {
        assert_eq!(generate_synthetic(500, 99), generate_synthetic(500, 99));
        assert_ne!(generate_synthetic(50, 1), generate_synthetic(50, 2));
    }

    #[test]
    fn ten_thousand_distinct_ids() {
        let records = generate_synthetic(10_000, 42);
        let ids: HashSet<_> = records.iter().map(|r| r.patient_id.as_str()).collect();
        assert_eq!(ids.len(), 10_000);
    }

    #[test]
    fn generated_records_are_valid_and_roundtrip() {
        for r in generate_synthetic(1_000, 3) {
            r.validate().unwrap();
            for kind in RecordKind::ALL {
                let row = serialize_row(&r, kind).unwrap();
                assert_eq!(parse_row(&row, kind).unwrap(), r.row(kind));
            }
        }
    }

    #[test]
    fn value_shapes() {
        let r = &generate_synthetic(1, 5)[0];
        assert_eq!(r.date_of_birth.len(), 10);
        assert_eq!(r.social_security_number.len(), 11);
        assert_eq!(r.credit_card_number.len(), 16);
        assert_eq!(r.expiration_date.len(), 7);
        assert_eq!(r.auth_code.len(), 6);
    }
}
