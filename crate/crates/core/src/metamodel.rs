//! Sustainability metamodel: goals, values, indicators and their links to
//! process fragments and IoT devices.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bpmn::Fragment;
use crate::indicators::bands::ClassificationBand;
use crate::indicators::{formula, is_builtin};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dimension {
    Individual,
    Social,
    Economic,
    Technical,
    Environmental,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub id: String,
    #[serde(default)]
    pub description: String,
    pub dimension_refs: BTreeSet<Dimension>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Value {
    pub id: String,
    pub name: String,
    pub dimension_refs: BTreeSet<Dimension>,
    #[serde(default)]
    pub regulation_refs: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IndicatorKind {
    Quantitative,
    Qualitative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Indicator {
    pub id: String,
    pub name: String,
    pub kind: IndicatorKind,
    pub value_refs: BTreeSet<String>,
    pub measurement_refs: BTreeSet<String>,
    #[serde(default)]
    pub bands: Vec<ClassificationBand>,
    #[serde(default)]
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub id: String,
    /// Formula source or `builtin:<name>`.
    pub formula: String,
    #[serde(default)]
    pub data_source_refs: BTreeSet<String>,
    #[serde(default)]
    pub observation_period_required: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regulation {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub citation: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActivityKind {
    Business,
    Sustainable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Contribution {
    pub value_ref: String,
    pub sign: Sign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Activity {
    pub id: String,
    pub name: String,
    pub kind: ActivityKind,
    /// Fragment ids.
    #[serde(default)]
    pub implemented_by: BTreeSet<String>,
    /// Indicator ids.
    #[serde(default)]
    pub influences: BTreeSet<String>,
    #[serde(default)]
    pub contributes_to: Vec<Contribution>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ImpactDirection {
    Direct,
    Indirect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Impact {
    pub id: String,
    pub description: String,
    pub caused_by: String,
    pub direction: ImpactDirection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stakeholder {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub role: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeviceRole {
    Sensor,
    Actuator,
    Composite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IoTDeviceDescriptor {
    pub id: String,
    pub name: String,
    pub kind: DeviceRole,
    #[serde(default)]
    pub schema_ref: String,
    /// Measurement ids.
    #[serde(default)]
    pub measures: BTreeSet<String>,
    /// BPMN task ids.
    #[serde(default)]
    pub performs: BTreeSet<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SustainabilityModel {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    /// Free-form record of project setup and human decisions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<serde_json::Value>,
    /// Dimensions in scope; all five exist implicitly.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dimensions: Vec<Dimension>,
    #[serde(default)]
    pub goals: Vec<Goal>,
    #[serde(default)]
    pub values: Vec<Value>,
    #[serde(default)]
    pub indicators: Vec<Indicator>,
    #[serde(default)]
    pub measurements: Vec<Measurement>,
    #[serde(default)]
    pub regulations: Vec<Regulation>,
    #[serde(default)]
    pub activities: Vec<Activity>,
    #[serde(default)]
    pub impacts: Vec<Impact>,
    #[serde(default)]
    pub stakeholders: Vec<Stakeholder>,
    #[serde(default)]
    pub devices: Vec<IoTDeviceDescriptor>,
    #[serde(default)]
    pub fragments: Vec<Fragment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    Goal,
    Value,
    Indicator,
    Measurement,
    Regulation,
    Activity,
    Impact,
    Stakeholder,
    Device,
    Fragment,
}

/// One broken rule, naming the offending entity.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub entity: EntityKind,
    pub id: String,
    pub rule: String,
}

impl Violation {
    fn new(entity: EntityKind, id: &str, rule: impl Into<String>) -> Self {
        Self { entity, id: id.to_string(), rule: rule.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} {}: {}", self.entity, self.id, self.rule)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("malformed model document: {0}")]
    SyntaxError(String),
    #[error("model has {} violation(s)", .0.len())]
    ValidationError(Vec<Violation>),
    #[error("unknown id {0:?}")]
    UnknownId(String),
}

pub fn load_model(document: &str) -> Result<SustainabilityModel, ModelError> {
    let model: SustainabilityModel = serde_json::from_str(document).map_err(|e| ModelError::SyntaxError(e.to_string()))?;
    let violations = validate_model(&model);
    if violations.is_empty() {
        Ok(model)
    } else {
        Err(ModelError::ValidationError(violations))
    }
}

pub fn save_model(model: &SustainabilityModel) -> String {
    serde_json::to_string_pretty(model).expect("model serializes")
}

fn ids<'a, T>(items: &'a [T], id: impl Fn(&T) -> &str + 'a) -> BTreeSet<&'a str> {
    items.iter().map(id).collect()
}

fn check_unique<T>(out: &mut Vec<Violation>, kind: EntityKind, items: &[T], id: impl Fn(&T) -> &str) {
    let mut seen = BTreeSet::new();
    for item in items {
        if !seen.insert(id(item)) {
            out.push(Violation::new(kind, id(item), "duplicate id"));
        }
    }
}

fn check_refs<'a>(
    out: &mut Vec<Violation>,
    kind: EntityKind,
    owner: &str,
    refs: impl IntoIterator<Item = &'a String>,
    known: &BTreeSet<&str>,
    what: &str,
) {
    for r in refs {
        if !known.contains(r.as_str()) {
            out.push(Violation::new(kind, owner, format!("dangling {what} {r:?}")));
        }
    }
}

/// All rule violations, sorted. Rule texts start with a stable phrase
/// (e.g. `dangling measurement_ref`) followed by detail.
pub fn validate_model(model: &SustainabilityModel) -> Vec<Violation> {
    use EntityKind as K;
    let mut out = Vec::new();
    check_unique(&mut out, K::Goal, &model.goals, |x| &x.id);
    check_unique(&mut out, K::Value, &model.values, |x| &x.id);
    check_unique(&mut out, K::Indicator, &model.indicators, |x| &x.id);
    check_unique(&mut out, K::Measurement, &model.measurements, |x| &x.id);
    check_unique(&mut out, K::Regulation, &model.regulations, |x| &x.id);
    check_unique(&mut out, K::Activity, &model.activities, |x| &x.id);
    check_unique(&mut out, K::Impact, &model.impacts, |x| &x.id);
    check_unique(&mut out, K::Stakeholder, &model.stakeholders, |x| &x.id);
    check_unique(&mut out, K::Device, &model.devices, |x| &x.id);
    check_unique(&mut out, K::Fragment, &model.fragments, |x| &x.id);

    let values = ids(&model.values, |x| &x.id);
    let indicators = ids(&model.indicators, |x| &x.id);
    let measurements = ids(&model.measurements, |x| &x.id);
    let regulations = ids(&model.regulations, |x| &x.id);
    let activities = ids(&model.activities, |x| &x.id);
    let fragments = ids(&model.fragments, |x| &x.id);

    for g in &model.goals {
        if g.dimension_refs.is_empty() {
            out.push(Violation::new(K::Goal, &g.id, "goal requires ≥1 dimension"));
        }
    }
    for v in &model.values {
        if v.dimension_refs.is_empty() {
            out.push(Violation::new(K::Value, &v.id, "value requires ≥1 dimension"));
        }
        check_refs(&mut out, K::Value, &v.id, &v.regulation_refs, &regulations, "regulation_ref");
    }
    for i in &model.indicators {
        if i.measurement_refs.is_empty() {
            out.push(Violation::new(K::Indicator, &i.id, "indicator requires ≥1 measurement"));
        }
        if i.value_refs.is_empty() {
            out.push(Violation::new(K::Indicator, &i.id, "indicator requires ≥1 value"));
        }
        check_refs(&mut out, K::Indicator, &i.id, &i.value_refs, &values, "value_ref");
        check_refs(&mut out, K::Indicator, &i.id, &i.measurement_refs, &measurements, "measurement_ref");
        for b in &i.bands {
            if let Some(defect) = b.defect() {
                out.push(Violation::new(K::Indicator, &i.id, format!("invalid band {:?}: {defect}", b.label)));
            }
        }
        for (k, a) in i.bands.iter().enumerate() {
            for b in &i.bands[k + 1..] {
                if a.overlaps(b) {
                    out.push(Violation::new(K::Indicator, &i.id, format!("bands overlap: {:?} and {:?}", a.label, b.label)));
                }
            }
        }
    }
    let referenced: BTreeSet<&str> = model.indicators.iter().flat_map(|i| i.measurement_refs.iter().map(String::as_str)).collect();
    for m in &model.measurements {
        if m.formula.starts_with("builtin:") {
            if !is_builtin(&m.formula) {
                out.push(Violation::new(K::Measurement, &m.id, format!("unknown built-in {:?}", m.formula)));
            }
        } else if let Err(e) = formula::parse_formula(&m.formula) {
            out.push(Violation::new(K::Measurement, &m.id, format!("formula does not parse: {e}")));
        }
        if !referenced.contains(m.id.as_str()) {
            out.push(Violation::new(K::Measurement, &m.id, "measurement not referenced by any indicator"));
        }
    }
    for a in &model.activities {
        if a.kind == ActivityKind::Business && a.implemented_by.is_empty() {
            out.push(Violation::new(K::Activity, &a.id, "business activity requires ≥1 fragment"));
        }
        check_refs(&mut out, K::Activity, &a.id, &a.implemented_by, &fragments, "fragment_ref");
        check_refs(&mut out, K::Activity, &a.id, &a.influences, &indicators, "indicator_ref");
        check_refs(&mut out, K::Activity, &a.id, a.contributes_to.iter().map(|c| &c.value_ref), &values, "value_ref");
    }
    for imp in &model.impacts {
        check_refs(&mut out, K::Impact, &imp.id, [&imp.caused_by], &activities, "activity_ref");
    }
    for d in &model.devices {
        if d.kind == DeviceRole::Sensor && !d.performs.is_empty() {
            out.push(Violation::new(K::Device, &d.id, "sensor cannot perform tasks"));
        }
        if d.kind == DeviceRole::Actuator && !d.measures.is_empty() {
            out.push(Violation::new(K::Device, &d.id, "actuator cannot measure"));
        }
        check_refs(&mut out, K::Device, &d.id, &d.measures, &measurements, "measurement_ref");
    }
    for f in &model.fragments {
        if f.node_ids.is_empty() {
            out.push(Violation::new(K::Fragment, &f.id, "fragment requires ≥1 node"));
        }
        check_refs(&mut out, K::Fragment, &f.id, &f.value_refs, &values, "value_ref");
    }
    out.sort();
    out
}

/// Navigation over the model's associations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "query", content = "id", rename_all = "snake_case")]
pub enum LinkQuery {
    IndicatorsForValue(String),
    FragmentsForValue(String),
    DevicesForMeasurement(String),
    ActivitiesInfluencing(String),
    ValuesForIndicator(String),
    ValuesForFragment(String),
    MeasurementsForDevice(String),
    IndicatorsInfluencedBy(String),
}

impl LinkQuery {
    /// The query answering the opposite direction of the same association,
    /// applied to one of this query's results.
    pub fn reverse(&self, result: &str) -> LinkQuery {
        let r = result.to_string();
        match self {
            Self::IndicatorsForValue(_) => Self::ValuesForIndicator(r),
            Self::FragmentsForValue(_) => Self::ValuesForFragment(r),
            Self::DevicesForMeasurement(_) => Self::MeasurementsForDevice(r),
            Self::ActivitiesInfluencing(_) => Self::IndicatorsInfluencedBy(r),
            Self::ValuesForIndicator(_) => Self::IndicatorsForValue(r),
            Self::ValuesForFragment(_) => Self::FragmentsForValue(r),
            Self::MeasurementsForDevice(_) => Self::DevicesForMeasurement(r),
            Self::IndicatorsInfluencedBy(_) => Self::ActivitiesInfluencing(r),
        }
    }

    pub fn id(&self) -> &str {
        match self {
            Self::IndicatorsForValue(x)
            | Self::FragmentsForValue(x)
            | Self::DevicesForMeasurement(x)
            | Self::ActivitiesInfluencing(x)
            | Self::ValuesForIndicator(x)
            | Self::ValuesForFragment(x)
            | Self::MeasurementsForDevice(x)
            | Self::IndicatorsInfluencedBy(x) => x,
        }
    }
}

fn known<T>(items: &[T], id: impl Fn(&T) -> &str, wanted: &str) -> Result<(), ModelError> {
    if items.iter().any(|x| id(x) == wanted) {
        Ok(())
    } else {
        Err(ModelError::UnknownId(wanted.to_string()))
    }
}

fn owners<T>(items: &[T], id: impl Fn(&T) -> &str, holds: impl Fn(&T) -> bool) -> Vec<String> {
    let set: BTreeSet<String> = items.iter().filter(|x| holds(x)).map(|x| id(x).to_string()).collect();
    set.into_iter().collect()
}

fn targets<T>(
    items: &[T],
    id: impl Fn(&T) -> &str,
    wanted: &str,
    refs: impl Fn(&T) -> &BTreeSet<String>,
) -> Result<Vec<String>, ModelError> {
    let item = items.iter().find(|x| id(x) == wanted).ok_or_else(|| ModelError::UnknownId(wanted.to_string()))?;
    Ok(refs(item).iter().cloned().collect())
}

/// Ids reachable through the named association, sorted.
pub fn query_links(model: &SustainabilityModel, query: &LinkQuery) -> Result<Vec<String>, ModelError> {
    let m = model;
    match query {
        LinkQuery::IndicatorsForValue(v) => {
            known(&m.values, |x| &x.id, v)?;
            Ok(owners(&m.indicators, |x| &x.id, |i| i.value_refs.contains(v)))
        }
        LinkQuery::FragmentsForValue(v) => {
            known(&m.values, |x| &x.id, v)?;
            Ok(owners(&m.fragments, |x| &x.id, |f| f.value_refs.contains(v)))
        }
        LinkQuery::DevicesForMeasurement(ms) => {
            known(&m.measurements, |x| &x.id, ms)?;
            Ok(owners(&m.devices, |x| &x.id, |d| d.measures.contains(ms)))
        }
        LinkQuery::ActivitiesInfluencing(i) => {
            known(&m.indicators, |x| &x.id, i)?;
            Ok(owners(&m.activities, |x| &x.id, |a| a.influences.contains(i)))
        }
        LinkQuery::ValuesForIndicator(i) => targets(&m.indicators, |x| &x.id, i, |x| &x.value_refs),
        LinkQuery::ValuesForFragment(f) => targets(&m.fragments, |x| &x.id, f, |x| &x.value_refs),
        LinkQuery::MeasurementsForDevice(d) => targets(&m.devices, |x| &x.id, d, |x| &x.measures),
        LinkQuery::IndicatorsInfluencedBy(a) => targets(&m.activities, |x| &x.id, a, |x| &x.influences),
    }
}

impl SustainabilityModel {
    pub fn indicator(&self, id: &str) -> Option<&Indicator> {
        self.indicators.iter().find(|i| i.id == id)
    }

    pub fn fragment(&self, id: &str) -> Option<&Fragment> {
        self.fragments.iter().find(|f| f.id == id)
    }

    /// Fragment ids linked to an indicator through shared values.
    pub fn fragments_for_indicator(&self, indicator_id: &str) -> Result<Vec<String>, ModelError> {
        let values = query_links(self, &LinkQuery::ValuesForIndicator(indicator_id.to_string()))?;
        let mut out = BTreeSet::new();
        for v in values {
            if let Ok(fs) = query_links(self, &LinkQuery::FragmentsForValue(v)) {
                out.extend(fs);
            }
        }
        Ok(out.into_iter().collect())
    }

    /// Every id in every collection, by kind.
    pub fn id_index(&self) -> BTreeMap<EntityKind, BTreeSet<String>> {
        let mut idx: BTreeMap<EntityKind, BTreeSet<String>> = BTreeMap::new();
        let mut add = |k, id: &str| {
            idx.entry(k).or_default().insert(id.to_string());
        };
        self.goals.iter().for_each(|x| add(EntityKind::Goal, &x.id));
        self.values.iter().for_each(|x| add(EntityKind::Value, &x.id));
        self.indicators.iter().for_each(|x| add(EntityKind::Indicator, &x.id));
        self.measurements.iter().for_each(|x| add(EntityKind::Measurement, &x.id));
        self.regulations.iter().for_each(|x| add(EntityKind::Regulation, &x.id));
        self.activities.iter().for_each(|x| add(EntityKind::Activity, &x.id));
        self.impacts.iter().for_each(|x| add(EntityKind::Impact, &x.id));
        self.stakeholders.iter().for_each(|x| add(EntityKind::Stakeholder, &x.id));
        self.devices.iter().for_each(|x| add(EntityKind::Device, &x.id));
        self.fragments.iter().for_each(|x| add(EntityKind::Fragment, &x.id));
        idx
    }
}
