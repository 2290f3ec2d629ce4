//! Sustainability reports: indicator values grouped by process fragment.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eventlog::{ConformanceResult, DeviationKind};
use crate::indicators::bands::needs_review;
use crate::indicators::{IndicatorValue, ObservationPeriod};
use crate::metamodel::{Impact, Stakeholder, SustainabilityModel};
use crate::time::format_instant;

pub const REPORT_SCHEMA: &str = "susbp.report/1";

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("unknown reference {0:?}")]
    UnknownReference(String),
    #[error("indicator {0:?} is not linked to any analysed fragment")]
    Unattached(String),
}

/// Summary of a conformance run attached to assessments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformanceExcerpt {
    pub total_cases: usize,
    pub conforming_cases: usize,
    pub conforming_case_fraction: f64,
    pub deviations: BTreeMap<String, usize>,
    pub nonconforming_cases: Vec<String>,
}

impl From<&ConformanceResult> for ConformanceExcerpt {
    fn from(r: &ConformanceResult) -> Self {
        let mut deviations = BTreeMap::new();
        for d in r.cases.iter().flat_map(|c| &c.deviations) {
            *deviations.entry(kind_name(d.kind).to_string()).or_insert(0) += 1;
        }
        Self {
            total_cases: r.total_cases,
            conforming_cases: r.conforming_cases,
            conforming_case_fraction: r.conforming_case_fraction,
            deviations,
            nonconforming_cases: r.cases.iter().filter(|c| !c.is_conforming()).map(|c| c.case_id.clone()).collect(),
        }
    }
}

fn kind_name(kind: DeviationKind) -> &'static str {
    match kind {
        DeviationKind::MissingHygiene => "MissingHygiene",
        DeviationKind::OutOfOrder => "OutOfOrder",
        DeviationKind::UnknownActivity => "UnknownActivity",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragmentAssessment {
    pub fragment_ref: String,
    pub value_refs: Vec<String>,
    pub indicator_values: Vec<IndicatorValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conformance: Option<ConformanceExcerpt>,
    pub review_flag: bool,
    #[serde(default)]
    pub notes: String,
}

/// Where an indicator's inputs came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceEntry {
    pub indicator_ref: String,
    pub measurement_refs: Vec<String>,
    pub formulas: Vec<String>,
    pub data_source_refs: Vec<String>,
    pub devices: Vec<String>,
    pub inputs: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SustainabilityReport {
    pub schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation_period: Option<ObservationPeriod>,
    pub assessments: Vec<FragmentAssessment>,
    pub data_provenance: Vec<ProvenanceEntry>,
    #[serde(default)]
    pub impacts: Vec<Impact>,
    #[serde(default)]
    pub stakeholders: Vec<Stakeholder>,
    #[serde(with = "crate::time::serde_ms")]
    pub generated_at: DateTime<Utc>,
}

/// Inputs beyond the model and values.
#[derive(Debug, Clone, Default)]
pub struct ReportOptions {
    pub observation_period: Option<ObservationPeriod>,
    /// Analyst commentary per fragment id.
    pub notes: BTreeMap<String, String>,
    pub conformance: Option<ConformanceResult>,
    /// Fragments that receive the conformance excerpt; all when `None`.
    pub conformance_fragments: Option<BTreeSet<String>>,
}

fn provenance(model: &SustainabilityModel, value: &IndicatorValue) -> ProvenanceEntry {
    let indicator = model.indicator(&value.indicator_ref);
    let measurement_refs: Vec<String> = indicator.map(|i| i.measurement_refs.iter().cloned().collect()).unwrap_or_default();
    let measurements: Vec<_> = model.measurements.iter().filter(|m| measurement_refs.contains(&m.id)).collect();
    let data_source_refs: BTreeSet<String> = measurements.iter().flat_map(|m| m.data_source_refs.iter().cloned()).collect();
    let devices: BTreeSet<String> =
        model.devices.iter().filter(|d| d.measures.iter().any(|m| measurement_refs.contains(m))).map(|d| d.id.clone()).collect();
    ProvenanceEntry {
        indicator_ref: value.indicator_ref.clone(),
        formulas: measurements.iter().map(|m| m.formula.clone()).collect(),
        measurement_refs,
        data_source_refs: data_source_refs.into_iter().collect(),
        devices: devices.into_iter().collect(),
        inputs: value.provenance.clone(),
    }
}

/// Assemble a report.
///
/// Each value goes to exactly one fragment: the one named by its
/// `fragment_ref` provenance entry when present, otherwise the first
/// analysed fragment (by id) sharing a value with its indicator.
pub fn build_report(
    model: &SustainabilityModel,
    fragments: &[String],
    indicator_values: &[IndicatorValue],
    generated_at: DateTime<Utc>,
    options: &ReportOptions,
) -> Result<SustainabilityReport, ReportError> {
    let analysed: BTreeSet<&str> = fragments.iter().map(String::as_str).collect();
    for f in &analysed {
        model.fragment(f).ok_or_else(|| ReportError::UnknownReference(f.to_string()))?;
    }
    let mut grouped: BTreeMap<&str, Vec<IndicatorValue>> = analysed.iter().map(|f| (*f, Vec::new())).collect();
    for v in indicator_values {
        if model.indicator(&v.indicator_ref).is_none() {
            return Err(ReportError::UnknownReference(v.indicator_ref.clone()));
        }
        let linked = model.fragments_for_indicator(&v.indicator_ref).map_err(|_| ReportError::UnknownReference(v.indicator_ref.clone()))?;
        let explicit = v.provenance.get("fragment_ref").and_then(|x| x.as_str());
        let target = match explicit {
            Some(f) if linked.iter().any(|l| l == f) && analysed.contains(f) => Some(f),
            Some(f) => return Err(ReportError::UnknownReference(f.to_string())),
            None => linked.iter().map(String::as_str).find(|f| analysed.contains(f)),
        };
        let target = target.ok_or_else(|| ReportError::Unattached(v.indicator_ref.clone()))?;
        grouped.get_mut(target).expect("analysed fragment").push(v.clone());
    }

    let excerpt = options.conformance.as_ref().map(ConformanceExcerpt::from);
    let assessments = grouped
        .into_iter()
        .map(|(fid, mut values)| {
            values.sort_by(|a, b| a.indicator_ref.cmp(&b.indicator_ref));
            let fragment = model.fragment(fid).expect("checked above");
            let gets_conformance = options.conformance_fragments.as_ref().is_none_or(|s| s.contains(fid));
            FragmentAssessment {
                fragment_ref: fid.to_string(),
                value_refs: fragment.value_refs.iter().cloned().collect(),
                review_flag: values.iter().any(|v| needs_review(v.band.as_deref())),
                indicator_values: values,
                conformance: excerpt.clone().filter(|_| gets_conformance),
                notes: options.notes.get(fid).cloned().unwrap_or_default(),
            }
        })
        .collect::<Vec<_>>();

    let mut data_provenance: Vec<ProvenanceEntry> =
        assessments.iter().flat_map(|a| a.indicator_values.iter().map(|v| provenance(model, v))).collect();
    data_provenance.sort_by(|a, b| a.indicator_ref.cmp(&b.indicator_ref));

    let observation_period = options.observation_period.or_else(|| {
        let periods: Vec<ObservationPeriod> = indicator_values.iter().filter_map(|v| v.observation_period).collect();
        let start = periods.iter().map(|p| p.start).min()?;
        let end = periods.iter().map(|p| p.end).max()?;
        Some(ObservationPeriod { start, end })
    });

    Ok(SustainabilityReport {
        schema: REPORT_SCHEMA.to_string(),
        model_ref: model.id.clone(),
        observation_period,
        assessments,
        data_provenance,
        impacts: model.impacts.clone(),
        stakeholders: model.stakeholders.clone(),
        generated_at,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Markdown,
}

pub fn render(report: &SustainabilityReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Markdown => render_markdown(report),
    }
}

pub fn parse_report(json: &str) -> Result<SustainabilityReport, serde_json::Error> {
    serde_json::from_str(json)
}

fn period_text(p: Option<&ObservationPeriod>) -> String {
    match p {
        Some(p) => format!("{} to {}", format_instant(&p.start), format_instant(&p.end)),
        None => "-".to_string(),
    }
}

fn cell(s: &str) -> String {
    s.replace('|', "\\|")
}

fn render_markdown(r: &SustainabilityReport) -> String {
    let mut out = String::new();
    let title = r.model_ref.as_deref().unwrap_or("model");
    let _ = writeln!(out, "# Sustainability report: {title}\n");
    let _ = writeln!(out, "- Observation period: {}", period_text(r.observation_period.as_ref()));
    let _ = writeln!(out, "- Generated at: {}", format_instant(&r.generated_at));
    let _ = writeln!(out, "- Fragments assessed: {}\n", r.assessments.len());

    for a in &r.assessments {
        let _ = writeln!(out, "## Fragment {}\n", a.fragment_ref);
        let _ = writeln!(out, "Values: {}\n", if a.value_refs.is_empty() { "-".to_string() } else { a.value_refs.join(", ") });
        if a.review_flag {
            let _ = writeln!(out, "**Review required.**\n");
        }
        if a.indicator_values.is_empty() {
            let _ = writeln!(out, "No indicator values.\n");
        } else {
            let _ = writeln!(out, "| Indicator | Value | Unit | Band | Period |");
            let _ = writeln!(out, "|---|---|---|---|---|");
            for v in &a.indicator_values {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} | {} |",
                    cell(&v.indicator_ref),
                    v.display_value(),
                    cell(&v.unit),
                    cell(v.band_label()),
                    period_text(v.observation_period.as_ref())
                );
            }
            out.push('\n');
        }
        if let Some(c) = &a.conformance {
            let _ = writeln!(
                out,
                "Conformance: {}/{} cases conforming ({:.1}%).\n",
                c.conforming_cases,
                c.total_cases,
                c.conforming_case_fraction * 100.0
            );
        }
        if !a.notes.is_empty() {
            let _ = writeln!(out, "Notes: {}\n", a.notes);
        }
    }

    if !r.impacts.is_empty() {
        let _ = writeln!(out, "## Impacts\n");
        for i in &r.impacts {
            let _ = writeln!(out, "- {} ({:?}, caused by {}): {}", i.id, i.direction, i.caused_by, i.description);
        }
        out.push('\n');
    }
    if !r.stakeholders.is_empty() {
        let _ = writeln!(out, "## Stakeholders\n");
        for s in &r.stakeholders {
            let _ = writeln!(out, "- {}: {}", s.name, s.role);
        }
        out.push('\n');
    }
    let _ = writeln!(out, "## Appendix: data provenance\n");
    if r.data_provenance.is_empty() {
        let _ = writeln!(out, "No indicator values.");
    }
    for p in &r.data_provenance {
        let _ = writeln!(out, "### {}\n", p.indicator_ref);
        let _ = writeln!(out, "- Measurements: {}", p.measurement_refs.join(", "));
        for f in &p.formulas {
            let _ = writeln!(out, "- Formula: `{f}`");
        }
        let _ = writeln!(out, "- Data sources: {}", p.data_source_refs.join(", "));
        let _ = writeln!(out, "- Devices: {}", if p.devices.is_empty() { "-".to_string() } else { p.devices.join(", ") });
        for (k, v) in &p.inputs {
            let _ = writeln!(out, "- {k}: {v}");
        }
        out.push('\n');
    }
    out
}
