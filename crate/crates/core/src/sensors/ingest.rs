//! Line-oriented ingestion of readings (CSV or JSON lines).

use std::collections::BTreeMap;

use serde_json::{Map, Value};

use super::schema::{DeviceSchema, SchemaRegistry, ValueType};
use super::{Reading, SampleValue, SensorError, TimeSeries};
use crate::time::{self, Millis};

pub const CSV_HEADER: [&str; 5] = ["device_id", "timestamp", "channel", "value", "unit"];

/// A record before it is bound to a schema.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub line: usize,
    pub device_id: String,
    pub timestamp: String,
    pub channel: String,
    pub value: Value,
    /// `None` when the unit is implied by the schema (wide plug rows).
    pub unit: Option<String>,
}

/// Readings of one device grouped per channel.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestResult {
    pub device_id: String,
    pub series: BTreeMap<String, TimeSeries>,
    /// Latest text and instant values by channel.
    pub attributes: BTreeMap<String, String>,
    pub records: usize,
    pub collapsed: usize,
}

/// Split input into raw records, detecting CSV vs JSON lines from the first
/// non-blank line.
pub fn read_records(input: &str) -> Result<Vec<RawRecord>, SensorError> {
    let first = input.lines().find(|l| !l.trim().is_empty());
    match first {
        None => Ok(Vec::new()),
        Some(l) if l.trim_start().starts_with('{') => read_jsonl(input),
        Some(_) => read_csv(input),
    }
}

fn read_csv(input: &str) -> Result<Vec<RawRecord>, SensorError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input.as_bytes());
    let headers = reader.headers().map_err(|e| SensorError::SchemaMismatch { line: 1, detail: e.to_string() })?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols != CSV_HEADER {
        return Err(SensorError::SchemaMismatch {
            line: 1,
            detail: format!("expected header {}, got {}", CSV_HEADER.join(","), cols.join(",")),
        });
    }
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| SensorError::SchemaMismatch {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            detail: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        out.push(RawRecord {
            line,
            device_id: row[0].to_string(),
            timestamp: row[1].to_string(),
            channel: row[2].to_string(),
            value: Value::String(row[3].to_string()),
            unit: Some(row[4].to_string()),
        });
    }
    Ok(out)
}

fn read_jsonl(input: &str) -> Result<Vec<RawRecord>, SensorError> {
    let mut out = Vec::new();
    for (i, text) in input.lines().enumerate() {
        if text.trim().is_empty() {
            continue;
        }
        out.extend(parse_json_line(text, i + 1)?);
    }
    Ok(out)
}

/// Parse one JSON object: either a narrow reading or a wide smart plug row.
pub fn parse_json_line(text: &str, line: usize) -> Result<Vec<RawRecord>, SensorError> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| SensorError::SchemaMismatch { line, detail: format!("invalid JSON: {e}") })?;
    let Value::Object(obj) = value else {
        return Err(SensorError::SchemaMismatch { line, detail: "expected a JSON object".into() });
    };
    parse_json_object(obj, line)
}

pub(crate) fn parse_json_object(mut obj: Map<String, Value>, line: usize) -> Result<Vec<RawRecord>, SensorError> {
    let text_field = |obj: &Map<String, Value>, key: &str| -> Result<String, SensorError> {
        match obj.get(key) {
            Some(Value::String(s)) => Ok(s.clone()),
            _ => Err(SensorError::SchemaMismatch { line, detail: format!("missing string field {key:?}") }),
        }
    };
    if obj.contains_key("channel") {
        let unit = match obj.get("unit") {
            None | Some(Value::Null) => Some(String::new()),
            Some(Value::String(u)) => Some(u.clone()),
            Some(_) => return Err(SensorError::SchemaMismatch { line, detail: "unit must be a string".into() }),
        };
        return Ok(vec![RawRecord {
            line,
            device_id: text_field(&obj, "device_id")?,
            timestamp: text_field(&obj, "timestamp")?,
            channel: text_field(&obj, "channel")?,
            value: obj.remove("value").unwrap_or(Value::Null),
            unit,
        }]);
    }
    if obj.contains_key("device_name") {
        let device_id = text_field(&obj, "device_name")?;
        let timestamp = text_field(&obj, "timestamp")?;
        let mut out = Vec::new();
        for (key, value) in obj {
            out.push(RawRecord { line, device_id: device_id.clone(), timestamp: timestamp.clone(), channel: key, value, unit: None });
        }
        return Ok(out);
    }
    Err(SensorError::SchemaMismatch { line, detail: "record has neither channel nor device_name".into() })
}

/// Bind a raw record to its schema channel.
pub fn to_reading(raw: &RawRecord, schema: &DeviceSchema) -> Result<Reading, SensorError> {
    let mismatch = |detail: String| SensorError::SchemaMismatch { line: raw.line, detail };
    let timestamp = time::parse_instant(&raw.timestamp)
        .ok_or_else(|| SensorError::TimestampParseError { line: raw.line, raw: raw.timestamp.clone() })?;
    let spec = schema.channel(&raw.channel).ok_or_else(|| mismatch(format!("schema {} has no channel {:?}", schema.id, raw.channel)))?;
    let value =
        coerce(&raw.value, spec.value_type).ok_or_else(|| mismatch(format!("value {} is not a valid {:?}", raw.value, spec.value_type)))?;
    let reading = Reading {
        device_id: raw.device_id.clone(),
        timestamp,
        channel: raw.channel.clone(),
        value,
        unit: raw.unit.clone().unwrap_or_else(|| spec.unit.clone()),
    };
    schema.check(&reading).map_err(mismatch)?;
    Ok(reading)
}

fn coerce(value: &Value, ty: ValueType) -> Option<SampleValue> {
    match (ty, value) {
        (ValueType::Number, Value::Number(n)) => n.as_f64().map(SampleValue::Number),
        (ValueType::Number, Value::String(s)) => s.trim().parse().ok().map(SampleValue::Number),
        (ValueType::Boolean, Value::Bool(b)) => Some(SampleValue::Bool(*b)),
        (ValueType::Boolean, Value::String(s)) => match s.trim().to_ascii_lowercase().as_str() {
            "on" | "true" | "1" => Some(SampleValue::Bool(true)),
            "off" | "false" | "0" => Some(SampleValue::Bool(false)),
            _ => None,
        },
        (ValueType::Boolean, Value::Number(n)) => match n.as_f64() {
            Some(1.0) => Some(SampleValue::Bool(true)),
            Some(0.0) => Some(SampleValue::Bool(false)),
            _ => None,
        },
        (ValueType::Text | ValueType::Instant, Value::String(s)) => Some(SampleValue::Text(s.clone())),
        _ => None,
    }
}

#[derive(Default)]
struct Collector {
    samples: BTreeMap<String, (String, Vec<(Millis, f64)>)>,
    attributes: BTreeMap<String, (Millis, String)>,
    records: usize,
}

impl Collector {
    fn push(&mut self, reading: Reading) {
        self.records += 1;
        let t = reading.millis();
        match reading.value.as_f64() {
            Some(v) => {
                self.samples.entry(reading.channel).or_insert_with(|| (reading.unit, Vec::new())).1.push((t, v));
            }
            None => {
                if let SampleValue::Text(s) = reading.value {
                    let slot = self.attributes.entry(reading.channel).or_insert((t, s.clone()));
                    if t >= slot.0 {
                        *slot = (t, s);
                    }
                }
            }
        }
    }

    fn finish(self, device_id: &str, schema: &DeviceSchema) -> IngestResult {
        let mut result = IngestResult {
            device_id: device_id.to_string(),
            records: self.records,
            attributes: self.attributes.into_iter().map(|(k, (_, v))| (k, v)).collect(),
            ..Default::default()
        };
        for (channel, (unit, samples)) in self.samples {
            let mut series = TimeSeries::from_samples(device_id, &channel, &unit, samples);
            series.accumulation = schema.channel(&channel).and_then(|c| c.accumulation);
            result.collapsed += series.collapsed;
            result.series.insert(channel, series);
        }
        result
    }
}

/// Ingest readings of a single device under `schema`.
pub fn ingest(input: &str, schema: &DeviceSchema) -> Result<IngestResult, SensorError> {
    let mut collector = Collector::default();
    let mut device: Option<String> = None;
    for raw in read_records(input)? {
        match &device {
            None => device = Some(raw.device_id.clone()),
            Some(d) if *d != raw.device_id => {
                return Err(SensorError::SchemaMismatch {
                    line: raw.line,
                    detail: format!("device {:?} differs from {:?}", raw.device_id, d),
                })
            }
            Some(_) => {}
        }
        collector.push(to_reading(&raw, schema)?);
    }
    Ok(collector.finish(device.as_deref().unwrap_or(""), schema))
}

/// Ingest readings of any number of devices, resolving each device's schema
/// through `registry`.
pub fn ingest_devices(input: &str, registry: &SchemaRegistry) -> Result<BTreeMap<String, IngestResult>, SensorError> {
    let mut collectors: BTreeMap<String, Collector> = BTreeMap::new();
    for raw in read_records(input)? {
        let schema = registry
            .resolve(&raw.device_id)
            .map_err(|_| SensorError::SchemaMismatch { line: raw.line, detail: format!("no schema for device {:?}", raw.device_id) })?;
        let reading = to_reading(&raw, schema)?;
        collectors.entry(raw.device_id.clone()).or_default().push(reading);
    }
    collectors
        .into_iter()
        .map(|(id, c)| {
            let schema = registry.resolve(&id)?;
            Ok((id.clone(), c.finish(&id, schema)))
        })
        .collect()
}

/// Serialize readings as JSON lines in the narrow format.
pub fn write_jsonl(readings: &[Reading]) -> String {
    let mut out = String::new();
    for r in readings {
        out.push_str(&serde_json::to_string(r).expect("reading serializes"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn registry() -> SchemaRegistry {
        SchemaRegistry::bundled()
    }

    #[test]
    fn csv_rows_become_a_series() {
        let input = "device_id,timestamp,channel,value,unit\n\
            scale-1,2024-03-01T10:00:00Z,weight,500.0,g\n\
            scale-1,2024-03-01T10:00:01Z,weight,500.5,g\n\
            scale-1,2024-03-01T10:00:02.250Z,weight,499.5,g\n";
        let reg = registry();
        let r = ingest(input, reg.get("scale").unwrap()).unwrap();
        assert_eq!(r.series["weight"].len(), 3);
        assert_eq!(r.series["weight"].points[2].1, 499.5);
        assert_eq!(r.device_id, "scale-1");
    }

    #[test]
    fn wide_plug_row_is_accepted() {
        let input = r#"{"device_name":"plug-room-12","timestamp":"2024-03-01T10:00:00Z","instantaneous_power_w":41.5,"device_temperature_c":31.2,"device_state":"on","created_at":"2024-03-01T10:00:01Z"}"#;
        let reg = registry();
        let r = ingest(input, reg.get("shelly-plug-s").unwrap()).unwrap();
        assert_eq!(r.series["instantaneous_power_w"].points[0].1, 41.5);
        assert_eq!(r.series["device_state"].points[0].1, 1.0);
        assert_eq!(r.attributes["device_name"], "plug-room-12");
        assert_eq!(r.attributes["created_at"], "2024-03-01T10:00:01Z");
    }

    #[test]
    fn wrong_unit_is_rejected_with_line() {
        let input = "device_id,timestamp,channel,value,unit\n\
            scale-1,2024-03-01T10:00:00Z,weight,500.0,g\n\
            scale-1,2024-03-01T10:00:01Z,weight,1.1,lbs\n";
        let reg = registry();
        let err = ingest(input, reg.get("scale").unwrap()).unwrap_err();
        assert!(matches!(err, SensorError::SchemaMismatch { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn bad_timestamp_reports_line() {
        let input = "{\"device_id\":\"scale-1\",\"timestamp\":\"yesterday\",\"channel\":\"weight\",\"value\":1,\"unit\":\"g\"}\n";
        let reg = registry();
        let err = ingest(input, reg.get("scale").unwrap()).unwrap_err();
        assert_eq!(err, SensorError::TimestampParseError { line: 1, raw: "yesterday".into() });
    }

    #[test]
    fn duplicate_timestamps_are_counted() {
        let input = "device_id,timestamp,channel,value,unit\n\
            scale-1,2024-03-01T10:00:00Z,weight,500.0,g\n\
            scale-1,2024-03-01T10:00:00Z,weight,501.0,g\n";
        let reg = registry();
        let r = ingest(input, reg.get("scale").unwrap()).unwrap();
        assert_eq!(r.collapsed, 1);
        assert_eq!(r.series["weight"].points, vec![(1709287200000, 501.0)]);
    }

    #[test]
    fn multi_device_jsonl() {
        let input = "{\"device_id\":\"scale-1\",\"timestamp\":\"2024-03-01T10:00:00Z\",\"channel\":\"weight\",\"value\":500,\"unit\":\"g\"}\n\
            {\"device_id\":\"distance-1\",\"timestamp\":\"2024-03-01T10:00:00Z\",\"channel\":\"distance\",\"value\":2400,\"unit\":\"mm\"}\n";
        let all = ingest_devices(input, &registry()).unwrap();
        assert_eq!(all.len(), 2);
        assert_eq!(all["distance-1"].series["distance"].points[0].1, 2400.0);
    }
}
