//! Device schemas: which channels a device kind reports and in which units.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Reading, SampleValue, SensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DeviceKind {
    SmartPlug,
    Scale,
    Distance,
    Motion,
    Button,
    HvacController,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueType {
    Number,
    Boolean,
    Text,
    /// RFC 3339 timestamp carried as a value.
    Instant,
}

/// How an energy channel accumulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Accumulation {
    /// Each sample is the energy consumed since the previous sample.
    Interval,
    /// Each sample is a running meter total.
    Cumulative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub name: String,
    #[serde(default)]
    pub unit: String,
    pub value_type: ValueType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accumulation: Option<Accumulation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSchema {
    pub id: String,
    pub device_kind: DeviceKind,
    pub channels: Vec<ChannelSpec>,
}

/// Channels every smart plug schema must declare.
pub const SMART_PLUG_FIELDS: [&str; 6] =
    ["device_name", "timestamp", "instantaneous_power_w", "device_temperature_c", "device_state", "created_at"];

impl DeviceSchema {
    pub fn channel(&self, name: &str) -> Option<&ChannelSpec> {
        self.channels.iter().find(|c| c.name == name)
    }

    /// Structural problems with the schema itself.
    pub fn defects(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.device_kind == DeviceKind::SmartPlug {
            for field in SMART_PLUG_FIELDS {
                if self.channel(field).is_none() {
                    out.push(format!("smart plug schema {} lacks channel {field}", self.id));
                }
            }
        }
        for c in &self.channels {
            if c.accumulation.is_some() && c.unit != "Wh" {
                out.push(format!("channel {} accumulates but is not in Wh", c.name));
            }
        }
        out
    }

    /// Check one reading against the declared channel.
    pub fn check(&self, reading: &Reading) -> Result<&ChannelSpec, String> {
        let spec = self.channel(&reading.channel).ok_or_else(|| format!("schema {} has no channel {:?}", self.id, reading.channel))?;
        if spec.unit != reading.unit {
            return Err(format!("channel {} expects unit {:?}, got {:?}", spec.name, spec.unit, reading.unit));
        }
        let ok = match (&spec.value_type, &reading.value) {
            (ValueType::Number, SampleValue::Number(x)) => x.is_finite(),
            (ValueType::Boolean, SampleValue::Bool(_)) => true,
            (ValueType::Text, SampleValue::Text(_)) => true,
            (ValueType::Instant, SampleValue::Text(s)) => crate::time::parse_instant(s).is_some(),
            _ => false,
        };
        if !ok {
            return Err(format!("channel {} expects a {:?} value", spec.name, spec.value_type));
        }
        Ok(spec)
    }
}

/// Schemas by id, plus explicit device bindings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SchemaRegistry {
    pub schemas: Vec<DeviceSchema>,
    /// device id → schema id; unbound devices resolve by id prefix.
    #[serde(default)]
    pub bindings: BTreeMap<String, String>,
}

impl SchemaRegistry {
    pub fn bundled() -> Self {
        serde_json::from_str(crate::bundled::DEVICE_SCHEMAS).expect("bundled device schemas parse")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn get(&self, schema_id: &str) -> Option<&DeviceSchema> {
        self.schemas.iter().find(|s| s.id == schema_id)
    }

    /// Schema for a device: an explicit binding, else the schema whose id is
    /// the device id up to its last `-` (`scale-1` → `scale`), else an exact id match.
    pub fn resolve(&self, device_id: &str) -> Result<&DeviceSchema, SensorError> {
        if let Some(schema_id) = self.bindings.get(device_id) {
            return self.get(schema_id).ok_or_else(|| SensorError::UnknownSchema(schema_id.clone()));
        }
        let prefix = device_id.rsplit_once('-').map(|(p, _)| p).unwrap_or(device_id);
        self.get(prefix).or_else(|| self.get(device_id)).ok_or_else(|| SensorError::UnknownSchema(device_id.to_string()))
    }
}
