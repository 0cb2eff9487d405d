//! Per-record validation against the schema catalog.
//!
//! Validation never stops at the first problem: every violation found is
//! reported so that quarantined records carry complete diagnostics.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::catalog::{Catalog, FieldType, SchemaDefinition, MAX_ID_LEN};
use crate::envelope::{ConnectivityInfo, EventEnvelope, EventKind, Payload};
use crate::geo::GeoPoint;
use crate::ids::is_valid_ulid;
use crate::time::{parse_client_ts, EpochMillis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    UnknownKind,
    MissingField,
    TypeMismatch,
    UndeclaredField,
    MalformedTimestamp,
    LocationOutOfRange,
    IdMalformed,
    SchemaVersionUnknown,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::UnknownKind => "UNKNOWN_KIND",
            ErrorCode::MissingField => "MISSING_FIELD",
            ErrorCode::TypeMismatch => "TYPE_MISMATCH",
            ErrorCode::UndeclaredField => "UNDECLARED_FIELD",
            ErrorCode::MalformedTimestamp => "MALFORMED_TIMESTAMP",
            ErrorCode::LocationOutOfRange => "LOCATION_OUT_OF_RANGE",
            ErrorCode::IdMalformed => "ID_MALFORMED",
            ErrorCode::SchemaVersionUnknown => "SCHEMA_VERSION_UNKNOWN",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub code: ErrorCode,
    /// Dotted path of the offending field, e.g. `payload.amount`.
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationStatus {
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationOutcome {
    pub status: ValidationStatus,
    pub errors: Vec<FieldError>,
}

impl ValidationOutcome {
    fn from_errors(errors: Vec<FieldError>) -> Self {
        let status = if errors.is_empty() {
            ValidationStatus::Accepted
        } else {
            ValidationStatus::Rejected
        };
        Self { status, errors }
    }

    pub fn is_accepted(&self) -> bool {
        self.status == ValidationStatus::Accepted
    }

    pub fn has_code(&self, code: ErrorCode) -> bool {
        self.errors.iter().any(|e| e.code == code)
    }
}

#[derive(Default)]
struct Errors(Vec<FieldError>);

impl Errors {
    fn push(&mut self, code: ErrorCode, field: impl Into<String>, message: impl Into<String>) {
        self.0.push(FieldError {
            code,
            field: field.into(),
            message: message.into(),
        });
    }
}

/// Borrowed view of the envelope fields that decoded successfully.
#[derive(Default)]
struct Parts<'a> {
    event_id: Option<&'a str>,
    user_id: Option<&'a str>,
    kind: Option<&'a str>,
    client_ts: Option<&'a str>,
    location: Option<GeoPoint>,
    connectivity: Option<ConnectivityInfo>,
    sdk_version: Option<&'a str>,
    schema_version: Option<u32>,
    payload: Option<&'a Payload>,
}

/// Validates a typed envelope against `catalog`.
pub fn validate_event(envelope: &EventEnvelope, catalog: &Catalog) -> ValidationOutcome {
    let parts = Parts {
        event_id: Some(&envelope.event_id),
        user_id: Some(&envelope.user_id),
        kind: Some(&envelope.kind),
        client_ts: Some(&envelope.client_ts),
        location: envelope.location,
        connectivity: Some(envelope.connectivity),
        sdk_version: Some(&envelope.sdk_version),
        schema_version: Some(envelope.schema_version),
        payload: Some(&envelope.payload),
    };
    let mut errors = Errors::default();
    check_parts(&parts, catalog, &mut errors);
    ValidationOutcome::from_errors(errors.0)
}

const ENVELOPE_FIELDS: [&str; 10] = [
    "event_id",
    "user_id",
    "kind",
    "client_ts",
    "adjusted_ts",
    "location",
    "connectivity",
    "sdk_version",
    "schema_version",
    "payload",
];

/// Validates an untyped JSON record as received on the wire.
///
/// Structural problems (missing envelope fields, wrong JSON types) are
/// reported alongside the semantic checks of [`validate_event`]. The typed
/// envelope is returned only when the record is accepted.
pub fn validate_raw(raw: &Value, catalog: &Catalog) -> (Option<EventEnvelope>, ValidationOutcome) {
    let mut errors = Errors::default();
    let Some(obj) = raw.as_object() else {
        errors.push(ErrorCode::TypeMismatch, "$", "event must be a JSON object");
        return (None, ValidationOutcome::from_errors(errors.0));
    };

    for key in obj.keys() {
        if !ENVELOPE_FIELDS.contains(&key.as_str()) {
            errors.push(
                ErrorCode::UndeclaredField,
                key.as_str(),
                "field is not part of the event envelope",
            );
        }
    }

    let string_field = |name: &'static str, errors: &mut Errors| -> Option<&str> {
        match obj.get(name) {
            None | Some(Value::Null) => {
                errors.push(ErrorCode::MissingField, name, "required envelope field is absent");
                None
            }
            Some(Value::String(s)) => Some(s.as_str()),
            Some(_) => {
                errors.push(ErrorCode::TypeMismatch, name, "expected a string");
                None
            }
        }
    };
    let event_id = string_field("event_id", &mut errors);
    let user_id = string_field("user_id", &mut errors);
    let kind = string_field("kind", &mut errors);
    let client_ts = string_field("client_ts", &mut errors);
    let sdk_version = string_field("sdk_version", &mut errors);

    let schema_version = match obj.get("schema_version") {
        None | Some(Value::Null) => {
            errors.push(ErrorCode::MissingField, "schema_version", "required envelope field is absent");
            None
        }
        Some(Value::Number(n)) => match n.as_u64().and_then(|v| u32::try_from(v).ok()) {
            Some(v) => Some(v),
            None => {
                errors.push(ErrorCode::TypeMismatch, "schema_version", "expected a positive integer");
                None
            }
        },
        Some(_) => {
            errors.push(ErrorCode::TypeMismatch, "schema_version", "expected a positive integer");
            None
        }
    };

    let location = match obj.get("location") {
        None | Some(Value::Null) => None,
        Some(v) => match serde_json::from_value::<GeoPoint>(v.clone()) {
            Ok(p) => Some(p),
            Err(_) => {
                errors.push(ErrorCode::TypeMismatch, "location", "expected {lat: number, lon: number}");
                None
            }
        },
    };

    let connectivity = match obj.get("connectivity") {
        None | Some(Value::Null) => {
            errors.push(ErrorCode::MissingField, "connectivity", "required envelope field is absent");
            None
        }
        Some(v) => match serde_json::from_value::<ConnectivityInfo>(v.clone()) {
            Ok(c) => Some(c),
            Err(e) => {
                errors.push(ErrorCode::TypeMismatch, "connectivity", e.to_string());
                None
            }
        },
    };

    let adjusted_ts = match obj.get("adjusted_ts") {
        None | Some(Value::Null) => None,
        Some(Value::Number(n)) if n.as_i64().is_some() => n.as_i64().map(EpochMillis),
        Some(_) => {
            errors.push(ErrorCode::TypeMismatch, "adjusted_ts", "expected epoch milliseconds");
            None
        }
    };

    let payload: Option<Payload> = match obj.get("payload") {
        None | Some(Value::Null) => {
            errors.push(ErrorCode::MissingField, "payload", "required envelope field is absent");
            None
        }
        Some(Value::Object(map)) => Some(map.iter().map(|(k, v)| (k.clone(), v.clone())).collect()),
        Some(_) => {
            errors.push(ErrorCode::TypeMismatch, "payload", "expected an object");
            None
        }
    };

    let parts = Parts {
        event_id,
        user_id,
        kind,
        client_ts,
        location,
        connectivity,
        sdk_version,
        schema_version,
        payload: payload.as_ref(),
    };
    check_parts(&parts, catalog, &mut errors);

    let outcome = ValidationOutcome::from_errors(errors.0);
    if !outcome.is_accepted() {
        return (None, outcome);
    }
    // every field decoded, otherwise an error would have been recorded
    let envelope = EventEnvelope {
        event_id: parts.event_id.unwrap_or_default().to_owned(),
        user_id: parts.user_id.unwrap_or_default().to_owned(),
        kind: parts.kind.unwrap_or_default().to_owned(),
        client_ts: parts.client_ts.unwrap_or_default().to_owned(),
        adjusted_ts,
        location,
        connectivity: connectivity.unwrap_or_else(ConnectivityInfo::offline),
        sdk_version: parts.sdk_version.unwrap_or_default().to_owned(),
        schema_version: schema_version.unwrap_or_default(),
        payload: payload.unwrap_or_default(),
    };
    (Some(envelope), outcome)
}

fn check_parts(parts: &Parts<'_>, catalog: &Catalog, errors: &mut Errors) {
    if let Some(id) = parts.event_id {
        if !is_valid_ulid(id) {
            errors.push(
                ErrorCode::IdMalformed,
                "event_id",
                "expected a 26-character uppercase Crockford base32 ULID",
            );
        }
    }
    if let Some(user) = parts.user_id {
        if user.is_empty() {
            errors.push(ErrorCode::MissingField, "user_id", "user_id must not be empty");
        } else if user.chars().count() > MAX_ID_LEN {
            errors.push(ErrorCode::TypeMismatch, "user_id", "user_id longer than 128 characters");
        }
    }
    if let Some(ts) = parts.client_ts {
        if let Err(e) = parse_client_ts(ts) {
            errors.push(ErrorCode::MalformedTimestamp, "client_ts", e.reason);
        }
    }
    if let Some(loc) = parts.location {
        if !loc.lat_in_range() {
            errors.push(ErrorCode::LocationOutOfRange, "location.lat", "latitude outside [-90, 90]");
        }
        if !loc.lon_in_range() {
            errors.push(
                ErrorCode::LocationOutOfRange,
                "location.lon",
                "longitude outside [-180, 180]",
            );
        }
    }
    if let Some(conn) = parts.connectivity {
        if !conn.is_consistent() {
            errors.push(
                ErrorCode::TypeMismatch,
                "connectivity",
                "offline events must have network_type offline and no speed; speed must be non-negative",
            );
        }
    }
    if let Some(v) = parts.sdk_version {
        if semver::Version::parse(v).is_err() {
            errors.push(ErrorCode::TypeMismatch, "sdk_version", "expected a semantic version");
        }
    }

    let schema = match parts.kind {
        Some(label) => match label.parse::<EventKind>() {
            Ok(kind) if catalog.has_kind(kind) => match parts.schema_version {
                Some(version) => {
                    let found = catalog.get(kind, version);
                    if found.is_none() {
                        errors.push(
                            ErrorCode::SchemaVersionUnknown,
                            "schema_version",
                            format!("no schema version {version} for kind {kind}"),
                        );
                    }
                    found
                }
                None => None,
            },
            _ => {
                errors.push(
                    ErrorCode::UnknownKind,
                    "kind",
                    format!("kind {label:?} is not in the schema catalog"),
                );
                None
            }
        },
        None => None,
    };

    if let (Some(schema), Some(payload)) = (schema, parts.payload) {
        check_payload(schema, payload, errors);
    }
}

fn check_payload(schema: &SchemaDefinition, payload: &BTreeMap<String, Value>, errors: &mut Errors) {
    for field in &schema.required_fields {
        if matches!(payload.get(&field.name), None | Some(Value::Null)) {
            errors.push(
                ErrorCode::MissingField,
                format!("payload.{}", field.name),
                format!("required {} field is absent", field.field_type.as_str()),
            );
        }
    }
    for (name, value) in payload {
        let path = format!("payload.{name}");
        let Some((spec, required)) = schema.field(name) else {
            errors.push(
                ErrorCode::UndeclaredField,
                path,
                format!("field not declared by schema {} v{}", schema.kind, schema.version),
            );
            continue;
        };
        if value.is_null() {
            if !required {
                errors.push(ErrorCode::TypeMismatch, path, "optional fields are omitted, not null");
            }
            continue;
        }
        check_value(spec.field_type, value, path, errors);
    }
}

fn check_value(ty: FieldType, value: &Value, path: String, errors: &mut Errors) {
    let ok = match ty {
        FieldType::String => value.is_string(),
        FieldType::Integer => value.is_i64() || value.is_u64(),
        FieldType::Number => value.is_number(),
        FieldType::Boolean => value.is_boolean(),
        FieldType::Instant => match value.as_str() {
            Some(s) => {
                if parse_client_ts(s).is_err() {
                    errors.push(
                        ErrorCode::MalformedTimestamp,
                        path,
                        "expected ISO-8601 date-time with an explicit UTC offset",
                    );
                }
                return;
            }
            None => false,
        },
        FieldType::ContentRef => value
            .as_str()
            .is_some_and(|s| !s.is_empty() && s.chars().count() <= MAX_ID_LEN),
    };
    if !ok {
        errors.push(ErrorCode::TypeMismatch, path, format!("expected {}", ty.as_str()));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelope::NetworkType;
    use serde_json::json;

    fn catalog() -> Catalog {
        Catalog::builtin().unwrap()
    }

    fn envelope(kind: &str, payload: Value) -> EventEnvelope {
        EventEnvelope {
            event_id: "01FXZ0RQ2X8Z3S6W9V8D0C1B2A".into(),
            user_id: "u1".into(),
            kind: kind.into(),
            client_ts: "2022-03-01T12:00:00.000+02:00".into(),
            adjusted_ts: None,
            location: Some(GeoPoint { lat: 41.39, lon: 2.17 }),
            connectivity: ConnectivityInfo::online(NetworkType::Wifi, Some(800.0)),
            sdk_version: "1.4.0".into(),
            schema_version: 1,
            payload: serde_json::from_value(payload).unwrap(),
        }
    }

    #[test]
    fn page_view_is_accepted() {
        let out = validate_event(&envelope("page_view", json!({"page_id": "home"})), &catalog());
        assert!(out.is_accepted(), "{out:?}");
        assert!(out.errors.is_empty());
    }

    #[test]
    fn unknown_kind_is_rejected() {
        let out = validate_event(&envelope("vid_play", json!({})), &catalog());
        assert_eq!(out.status, ValidationStatus::Rejected);
        assert_eq!(out.errors.len(), 1);
        assert_eq!(out.errors[0].code, ErrorCode::UnknownKind);
    }

    #[test]
    fn missing_amount_is_reported_at_its_path() {
        let out = validate_event(
            &envelope("purchase", json!({"item_id": "amox", "currency": "KES"})),
            &catalog(),
        );
        assert_eq!(out.status, ValidationStatus::Rejected);
        assert_eq!(out.errors.len(), 1);
        assert_eq!(out.errors[0].code, ErrorCode::MissingField);
        assert_eq!(out.errors[0].field, "payload.amount");
    }

    #[test]
    fn reports_every_violation() {
        let mut e = envelope(
            "purchase",
            json!({"item_id": 7, "amount": "ten", "currency": "KES", "coupon": "x"}),
        );
        e.event_id = "not-a-ulid".into();
        e.client_ts = "2022-03-01T12:00:00".into();
        e.location = Some(GeoPoint { lat: 91.0, lon: 0.0 });
        e.connectivity = ConnectivityInfo {
            online: false,
            speed_kbps: Some(10.0),
            network_type: NetworkType::Wifi,
        };
        let out = validate_event(&e, &catalog());
        let codes: Vec<_> = out.errors.iter().map(|e| (e.code, e.field.as_str())).collect();
        assert_eq!(
            codes,
            vec![
                (ErrorCode::IdMalformed, "event_id"),
                (ErrorCode::MalformedTimestamp, "client_ts"),
                (ErrorCode::LocationOutOfRange, "location.lat"),
                (ErrorCode::TypeMismatch, "connectivity"),
                (ErrorCode::TypeMismatch, "payload.amount"),
                (ErrorCode::UndeclaredField, "payload.coupon"),
                (ErrorCode::TypeMismatch, "payload.item_id"),
            ]
        );
    }

    #[test]
    fn schema_version_gate() {
        let mut e = envelope("page_view", json!({"page_id": "home"}));
        e.schema_version = 9;
        let out = validate_event(&e, &catalog());
        assert_eq!(out.errors.len(), 1);
        assert_eq!(out.errors[0].code, ErrorCode::SchemaVersionUnknown);
    }

    #[test]
    fn payload_type_rules() {
        let c = catalog();
        let ok = envelope("content_complete", json!({"content_id": "c7", "score": 3, "passed": true}));
        assert!(validate_event(&ok, &c).is_accepted());
        let bad = envelope("content_complete", json!({"content_id": "", "passed": "yes"}));
        let out = validate_event(&bad, &c);
        assert_eq!(out.errors.len(), 2);
        let int = envelope("search", json!({"query": "malaria", "results_count": 2.5}));
        assert!(validate_event(&int, &c).has_code(ErrorCode::TypeMismatch));
        let instant = envelope("session_end", json!({"started_at": "2022-03-01T10:00:00"}));
        assert!(validate_event(&instant, &c).has_code(ErrorCode::MalformedTimestamp));
        let nullable = envelope("search", json!({"query": "x", "results_count": null}));
        assert!(validate_event(&nullable, &c).has_code(ErrorCode::TypeMismatch));
    }

    #[test]
    fn raw_decoding_reports_structure_problems() {
        let raw = json!({
            "event_id": "01FXZ0RQ2X8Z3S6W9V8D0C1B2A",
            "kind": "page_view",
            "client_ts": 17,
            "connectivity": {"online": true, "network_type": "wifi"},
            "sdk_version": "1.0.0",
            "schema_version": 1,
            "payload": {"page_id": "home"},
            "extra": 1
        });
        let (env, out) = validate_raw(&raw, &catalog());
        assert!(env.is_none());
        let codes: Vec<_> = out.errors.iter().map(|e| (e.code, e.field.as_str())).collect();
        assert!(codes.contains(&(ErrorCode::UndeclaredField, "extra")));
        assert!(codes.contains(&(ErrorCode::MissingField, "user_id")));
        assert!(codes.contains(&(ErrorCode::TypeMismatch, "client_ts")));
        assert_eq!(codes.len(), 3);

        let (_, out) = validate_raw(&json!([1, 2]), &catalog());
        assert_eq!(out.errors[0].code, ErrorCode::TypeMismatch);
    }

    #[test]
    fn raw_decoding_matches_typed_path() {
        let e = envelope("content_view", json!({"content_id": "c7", "duration_s": 12.5}));
        let raw = serde_json::to_value(&e).unwrap();
        let (decoded, out) = validate_raw(&raw, &catalog());
        assert!(out.is_accepted(), "{out:?}");
        assert_eq!(decoded.unwrap(), e);
    }
}
