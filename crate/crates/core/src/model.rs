//! Patient records and the question-mark-delimited row format.
//!
//! A patient is stored as two rows: a PII row
//! (`date_of_birth?social_security_number?address`) and a financial row
//! (`credit_card_number?expiration_date?auth_code`). The delimiter is never
//! escaped, so any field containing `?` is rejected.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DELIMITER: char = '?';

/// Longest accepted patient identifier, in bytes.
pub const MAX_PATIENT_ID_LEN: usize = 128;

/// The three fields of one row, in schema order.
pub type Row = [String; 3];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("field `{0}` contains the row delimiter `?`")]
    DelimiterInField(&'static str),
    #[error("malformed row: expected 2 delimiters, found {0}")]
    MalformedRow(usize),
    #[error("invalid patient id {0:?}")]
    InvalidPatientId(String),
    #[error("unknown record kind {0:?}")]
    UnknownKind(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Pii,
    Financial,
}

impl RecordKind {
    pub const ALL: [RecordKind; 2] = [RecordKind::Pii, RecordKind::Financial];

    /// Field names of this kind's row, in serialization order.
    pub const fn field_names(self) -> [&'static str; 3] {
        match self {
            RecordKind::Pii => ["date_of_birth", "social_security_number", "address"],
            RecordKind::Financial => ["credit_card_number", "expiration_date", "auth_code"],
        }
    }

    pub const fn as_str(self) -> &'static str {
        match self {
            RecordKind::Pii => "pii",
            RecordKind::Financial => "financial",
        }
    }

    /// Wire tag used inside sealed envelopes.
    pub const fn tag(self) -> u8 {
        match self {
            RecordKind::Pii => 1,
            RecordKind::Financial => 2,
        }
    }

    pub const fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(RecordKind::Pii),
            2 => Some(RecordKind::Financial),
            _ => None,
        }
    }
}

impl fmt::Display for RecordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RecordKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pii" => Ok(RecordKind::Pii),
            "financial" => Ok(RecordKind::Financial),
            other => Err(ModelError::UnknownKind(other.to_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    pub date_of_birth: String,
    pub social_security_number: String,
    pub address: String,
    pub credit_card_number: String,
    pub expiration_date: String,
    pub auth_code: String,
}

impl PatientRecord {
    /// Rebuilds a record from its two rows.
    pub fn from_rows(patient_id: impl Into<String>, pii: Row, financial: Row) -> Self {
        let [date_of_birth, social_security_number, address] = pii;
        let [credit_card_number, expiration_date, auth_code] = financial;
        PatientRecord {
            patient_id: patient_id.into(),
            date_of_birth,
            social_security_number,
            address,
            credit_card_number,
            expiration_date,
            auth_code,
        }
    }

    pub fn fields(&self, kind: RecordKind) -> [&str; 3] {
        match kind {
            RecordKind::Pii => [&self.date_of_birth, &self.social_security_number, &self.address],
            RecordKind::Financial => [&self.credit_card_number, &self.expiration_date, &self.auth_code],
        }
    }

    pub fn row(&self, kind: RecordKind) -> Row {
        self.fields(kind).map(str::to_owned)
    }

    /// The six sensitive values, PII first.
    pub fn sensitive_values(&self) -> [&str; 6] {
        let [a, b, c] = self.fields(RecordKind::Pii);
        let [d, e, f] = self.fields(RecordKind::Financial);
        [a, b, c, d, e, f]
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        validate_patient_id(&self.patient_id)?;
        for kind in RecordKind::ALL {
            check_fields(self.fields(kind), kind)?;
        }
        Ok(())
    }
}

/// Patient ids double as file names in the filesystem backends, so they are
/// restricted to `[A-Za-z0-9._-]` and may not be `.` or `..`.
pub fn validate_patient_id(id: &str) -> Result<(), ModelError> {
    let ok = !id.is_empty()
        && id.len() <= MAX_PATIENT_ID_LEN
        && id != "."
        && id != ".."
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-'));
    if ok {
        Ok(())
    } else {
        Err(ModelError::InvalidPatientId(id.to_owned()))
    }
}

fn check_fields(fields: [&str; 3], kind: RecordKind) -> Result<(), ModelError> {
    for (value, name) in fields.iter().zip(kind.field_names()) {
        if value.contains(DELIMITER) {
            return Err(ModelError::DelimiterInField(name));
        }
    }
    Ok(())
}

/// Joins the three fields of `kind` with `?`, without a trailing delimiter.
pub fn serialize_row(record: &PatientRecord, kind: RecordKind) -> Result<String, ModelError> {
    let fields = record.fields(kind);
    check_fields(fields, kind)?;
    Ok(fields.join("?"))
}

/// Splits a row into its three fields. `kind` names the schema; both kinds
/// have three fields so it does not change how the row is split.
pub fn parse_row(row: &str, kind: RecordKind) -> Result<Row, ModelError> {
    let _ = kind;
    let delimiters = row.matches(DELIMITER).count();
    if delimiters != 2 {
        return Err(ModelError::MalformedRow(delimiters));
    }
    let mut parts = row.splitn(3, DELIMITER).map(str::to_owned);
    // Exactly two delimiters guarantee three parts.
    Ok([
        parts.next().unwrap_or_default(),
        parts.next().unwrap_or_default(),
        parts.next().unwrap_or_default(),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(pii: [&str; 3], fin: [&str; 3]) -> PatientRecord {
        PatientRecord::from_rows("p1", pii.map(String::from), fin.map(String::from))
    }

    #[test]
    fn serializes_in_schema_order() {
        let r = record(["a", "b", "c"], ["d", "e", "f"]);
        assert_eq!(serialize_row(&r, RecordKind::Pii).unwrap(), "a?b?c");
        assert_eq!(serialize_row(&r, RecordKind::Financial).unwrap(), "d?e?f");
    }

    #[test]
    fn empty_fields_leave_two_delimiters() {
        let r = record(["x", "y", "z"], ["", "", ""]);
        assert_eq!(serialize_row(&r, RecordKind::Financial).unwrap(), "??");
        assert_eq!(
            parse_row("??", RecordKind::Financial).unwrap(),
            [String::new(), String::new(), String::new()]
        );
    }

    #[test]
    fn delimiter_in_field_is_rejected() {
        let r = record(["a", "b?", "c"], ["d", "e", "f"]);
        assert_eq!(
            serialize_row(&r, RecordKind::Pii),
            Err(ModelError::DelimiterInField("social_security_number"))
        );
        // the other kind is still serializable
        assert!(serialize_row(&r, RecordKind::Financial).is_ok());
        assert!(r.validate().is_err());
    }

    #[test]
    fn parse_rejects_wrong_delimiter_count() {
        assert_eq!(
            parse_row("a?b", RecordKind::Pii),
            Err(ModelError::MalformedRow(1))
        );
        assert_eq!(
            parse_row("a?b?c?d", RecordKind::Pii),
            Err(ModelError::MalformedRow(3))
        );
        assert_eq!(parse_row("", RecordKind::Pii), Err(ModelError::MalformedRow(0)));
        assert_eq!(
            parse_row("a?b?c", RecordKind::Pii).unwrap(),
            ["a", "b", "c"].map(String::from)
        );
    }

    #[test]
    fn patient_id_rules() {
        for ok in ["p1", "PT000000001", "a.b_c-d"] {
            validate_patient_id(ok).unwrap();
        }
        for bad in ["", ".", "..", "a/b", "a b", "a?b", "ü"] {
            assert!(validate_patient_id(bad).is_err(), "{bad:?}");
        }
        assert!(validate_patient_id(&"x".repeat(MAX_PATIENT_ID_LEN + 1)).is_err());
    }

    #[test]
    fn kind_tags_and_names_roundtrip() {
        for kind in RecordKind::ALL {
            assert_eq!(RecordKind::from_tag(kind.tag()), Some(kind));
            assert_eq!(kind.as_str().parse::<RecordKind>().unwrap(), kind);
        }
        assert_eq!(RecordKind::from_tag(0), None);
    }

    proptest! {
        #[test]
        fn row_roundtrip(fields in prop::array::uniform6("[^?]{0,24}"), pick in any::<bool>()) {
            let kind = if pick { RecordKind::Pii } else { RecordKind::Financial };
            let [a, b, c, d, e, f] = fields;
            let r = PatientRecord::from_rows("p", [a, b, c], [d, e, f]);
            let row = serialize_row(&r, kind).unwrap();
            prop_assert_eq!(parse_row(&row, kind).unwrap(), r.row(kind));
        }
    }
}
