//! Millisecond timestamps.

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};

/// Milliseconds since the Unix epoch.
pub type Millis = i64;

pub fn to_millis(t: &DateTime<Utc>) -> Millis {
    t.timestamp_millis()
}

pub fn from_millis(ms: Millis) -> DateTime<Utc> {
    Utc.timestamp_millis_opt(ms).single().expect("timestamp in range")
}

/// Parse an RFC 3339 instant, truncated to milliseconds.
pub fn parse_instant(s: &str) -> Option<DateTime<Utc>> {
    let t = DateTime::parse_from_rfc3339(s.trim()).ok()?;
    Some(from_millis(t.timestamp_millis()))
}

pub fn format_instant(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn format_millis(ms: Millis) -> String {
    format_instant(&from_millis(ms))
}

/// Seconds between two millisecond instants.
pub fn seconds_between(start: Millis, end: Millis) -> f64 {
    (end - start) as f64 / 1000.0
}

pub fn secs_to_millis(s: f64) -> Millis {
    (s * 1000.0).round() as Millis
}

/// Serde adapter writing instants with millisecond precision.
pub mod serde_ms {
    use chrono::{DateTime, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format_instant(t))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let raw = String::deserialize(d)?;
        super::parse_instant(&raw).ok_or_else(|| serde::de::Error::custom(format!("invalid timestamp {raw:?}")))
    }
}
