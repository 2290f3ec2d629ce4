//! One function per subcommand; each parses its inputs, calls the library
//! and renders the result.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use chrono::Utc;
use serde::Serialize;
use serde_json::Value;
use susbp_core::bpmn::{extract_fragment, hygiene_fragments, parse_bpmn, FragmentIds};
use susbp_core::eventlog::stats::{follows_csv, stats_csv};
use susbp_core::eventlog::{activity_stats, all_activity_stats, conformance_check, directly_follows, parse_xes, NormativeSpec};
use susbp_core::indicators::bands::{cfid_bands, mcfi_bands, ClassifyPolicy};
use susbp_core::indicators::cfid::{compute_cfid, em_material_average, CfidInputs, CfidMode};
use susbp_core::indicators::compliance::{hygiene_compliance, ComplianceThresholds, GroupBy};
use susbp_core::indicators::mcfi::{compute_mcfi, compute_mcfi_from_aggregates, read_surveys_csv, McfiAggregates};
use susbp_core::indicators::IndicatorValue;
use susbp_core::metamodel::{load_model, validate_model, SustainabilityModel};
use susbp_core::monitor::{episodes_csv, SessionConfig};
use susbp_core::report::{build_report, render, ReportFormat, ReportOptions};
use susbp_core::sensors::energy::Stay;
use susbp_core::sensors::{
    detect_hygiene_episodes, energy_summary, ingest_devices, DetectionParams, DeviceKind, HygieneEpisode, IngestResult, SchemaRegistry,
    TimeSeries,
};
use susbp_core::simulate::random::{random_script, study_script, RandomScriptOptions};
use susbp_core::simulate::ScenarioScript;
use susbp_core::time::{format_instant, format_millis, parse_instant};

use crate::io::{emit, format, load_json, load_text, to_json, usage};
use crate::{
    CfidModeArg, ComputeArgs, ConformArgs, DetectArgs, EnergyArgs, Format, FragmentArgs, GroupArg, IndicatorKind, IngestArgs, LogStatsArgs,
    Output, PolicyArg, ReportArgs, ServeArgs, SimulateArgs,
};

const SUCCESS: ExitCode = ExitCode::SUCCESS;

fn findings() -> ExitCode {
    ExitCode::from(1)
}

#[derive(Serialize)]
struct ValidationOutput<'a> {
    model: Option<&'a str>,
    valid: bool,
    violations: Vec<susbp_core::metamodel::Violation>,
}

pub fn model_validate(source: &str, output: &Output) -> Result<ExitCode> {
    let fmt = format(output, Format::Json, &[Format::Json, Format::Md, Format::Text])?;
    let text = load_text(source)?;
    let model: SustainabilityModel = serde_json::from_str(&text).with_context(|| format!("malformed model document {source}"))?;
    let violations = validate_model(&model);
    let result = ValidationOutput { model: model.id.as_deref(), valid: violations.is_empty(), violations };
    let rendered = match fmt {
        Format::Json => to_json(&result),
        _ => {
            let mut s = String::new();
            if result.valid {
                s.push_str("model is valid\n");
            }
            for v in &result.violations {
                let bullet = if fmt == Format::Md { "- " } else { "" };
                writeln!(s, "{bullet}{v}").unwrap();
            }
            s
        }
    };
    emit(output, &rendered)?;
    Ok(if result.valid { SUCCESS } else { findings() })
}

pub fn bpmn_fragments(args: &FragmentArgs) -> Result<ExitCode> {
    format(&args.output, Format::Json, &[Format::Json])?;
    let process = parse_bpmn(&load_text(&args.bpmn)?)?;
    let fragments = if let Some(name) = &args.activity {
        hygiene_fragments(&process, name)
    } else if !args.nodes.is_empty() {
        let nodes = process.resolve_nodes(args.nodes.iter().map(String::as_str))?;
        let values = args.values.iter().cloned().collect();
        let mut ids = FragmentIds::new(std::iter::empty());
        vec![extract_fragment(&process, &nodes, &values, &mut ids)?]
    } else {
        return Err(usage("give --activity NAME or --nodes A,B,..."));
    };
    emit(&args.output, &to_json(&fragments))?;
    Ok(SUCCESS)
}

fn md_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = format!("| {} |\n|{}\n", header.join(" | "), " --- |".repeat(header.len()));
    for r in rows {
        writeln!(s, "| {} |", r.join(" | ")).unwrap();
    }
    s
}

pub fn log_stats(args: &LogStatsArgs) -> Result<ExitCode> {
    let fmt = format(&args.output, Format::Json, &[Format::Json, Format::Csv, Format::Md])?;
    let log = parse_xes(&load_text(&args.log)?)?;
    if args.follows {
        let edges = directly_follows(&log);
        let text = match fmt {
            Format::Json => to_json(&edges),
            Format::Csv => follows_csv(&edges),
            _ => md_table(
                &["from", "to", "count"],
                &edges.iter().map(|e| vec![e.from.clone(), e.to.clone(), e.count.to_string()]).collect::<Vec<_>>(),
            ),
        };
        emit(&args.output, &text)?;
        return Ok(SUCCESS);
    }
    let stats =
        if args.activity.is_empty() { all_activity_stats(&log) } else { args.activity.iter().map(|a| activity_stats(&log, a)).collect() };
    let text = match fmt {
        Format::Json => to_json(&stats),
        Format::Csv => stats_csv(&stats),
        _ => {
            let rows: Vec<Vec<String>> = stats
                .iter()
                .map(|s| {
                    let d = |f: fn(&susbp_core::summary::Summary) -> f64| {
                        s.durations.as_ref().map(|x| format!("{:.3}", f(x))).unwrap_or_default()
                    };
                    vec![s.activity.clone(), s.instance_count.to_string(), d(|x| x.min), d(|x| x.max), d(|x| x.mean), d(|x| x.median)]
                })
                .collect();
            md_table(&["activity", "count", "min s", "max s", "mean s", "median s"], &rows)
        }
    };
    emit(&args.output, &text)?;
    Ok(SUCCESS)
}

pub fn log_conform(args: &ConformArgs) -> Result<ExitCode> {
    let fmt = format(&args.output, Format::Json, &[Format::Json, Format::Md])?;
    let log = parse_xes(&load_text(&args.log)?)?;
    let spec = NormativeSpec::from_json(&load_text(&args.spec)?)?;
    let result = conformance_check(&log, &spec)?;
    let text = match fmt {
        Format::Json => to_json(&result),
        _ => {
            let mut s =
                format!("{} of {} cases conform ({:.3})\n\n", result.conforming_cases, result.total_cases, result.conforming_case_fraction);
            let rows: Vec<Vec<String>> = result
                .cases
                .iter()
                .flat_map(|c| {
                    c.deviations
                        .iter()
                        .map(move |d| vec![c.case_id.clone(), format!("{:?}", d.kind), d.position.to_string(), d.detail.clone()])
                })
                .collect();
            if !rows.is_empty() {
                s.push_str(&md_table(&["case", "deviation", "event", "detail"], &rows));
            }
            s
        }
    };
    emit(&args.output, &text)?;
    Ok(if args.strict && result.conforming_cases < result.total_cases { findings() } else { SUCCESS })
}

fn registry(schemas: &Option<String>) -> Result<SchemaRegistry> {
    match schemas {
        None => Ok(SchemaRegistry::bundled()),
        Some(src) => SchemaRegistry::from_json(&load_text(src)?).with_context(|| format!("parsing {src}")),
    }
}

/// Drop feed event lines so that only readings reach ingestion.
fn readings_only(text: &str) -> String {
    text.lines()
        .filter(|l| !(l.contains("\"event\"") && serde_json::from_str::<Value>(l).is_ok_and(|v| v.get("event").is_some())))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Serialize)]
struct SeriesSummary {
    device_id: String,
    channel: String,
    unit: String,
    points: usize,
    collapsed: usize,
    first: Option<String>,
    last: Option<String>,
}

fn summarize(devices: &BTreeMap<String, IngestResult>) -> Vec<SeriesSummary> {
    devices
        .values()
        .flat_map(|d| {
            d.series.values().map(|s| SeriesSummary {
                device_id: d.device_id.clone(),
                channel: s.channel.clone(),
                unit: s.unit.clone(),
                points: s.len(),
                collapsed: s.collapsed,
                first: s.first_time().map(format_millis),
                last: s.last_time().map(format_millis),
            })
        })
        .collect()
}

pub fn sense_ingest(args: &IngestArgs) -> Result<ExitCode> {
    let fmt = format(&args.output, Format::Json, &[Format::Json, Format::Csv, Format::Md])?;
    let devices = ingest_devices(&readings_only(&load_text(&args.readings)?), &registry(&args.schemas)?)?;
    let rows = summarize(&devices);
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.device_id.clone(),
                r.channel.clone(),
                r.unit.clone(),
                r.points.to_string(),
                r.collapsed.to_string(),
                r.first.clone().unwrap_or_default(),
                r.last.clone().unwrap_or_default(),
            ]
        })
        .collect();
    let header = ["device_id", "channel", "unit", "points", "collapsed", "first", "last"];
    let text = match fmt {
        Format::Json => to_json(&rows),
        Format::Csv => {
            let mut s = header.join(",") + "\n";
            for c in &cells {
                s.push_str(&c.join(","));
                s.push('\n');
            }
            s
        }
        _ => md_table(&header, &cells),
    };
    emit(&args.output, &text)?;
    Ok(SUCCESS)
}

fn load_params(source: &Option<String>) -> Result<DetectionParams> {
    let Some(src) = source else { return Ok(DetectionParams::default()) };
    let value: Value = load_json(src)?;
    let value = value.get("params").cloned().unwrap_or(value);
    let params: DetectionParams = serde_json::from_value(value).with_context(|| format!("parsing detection parameters in {src}"))?;
    params.validate()?;
    Ok(params)
}

fn pick_series<'a>(
    devices: &'a BTreeMap<String, IngestResult>,
    registry: &SchemaRegistry,
    wanted: &Option<String>,
    kind: DeviceKind,
    channel: &str,
) -> Result<&'a TimeSeries> {
    let ids: Vec<&String> = match wanted {
        Some(id) => vec![devices.get_key_value(id).ok_or_else(|| anyhow!("no readings from device {id:?}"))?.0],
        None => devices.keys().filter(|id| registry.resolve(id).is_ok_and(|s| s.device_kind == kind)).collect(),
    };
    match ids.as_slice() {
        [id] => devices[*id].series.get(channel).ok_or_else(|| anyhow!("device {id} has no {channel} channel")),
        [] => bail!("no {kind:?} readings in the input"),
        many => {
            Err(usage(format!("several {kind:?} devices ({}); choose one", many.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", "))))
        }
    }
}

#[derive(Serialize)]
struct DetectOutput {
    params: DetectionParams,
    episodes: Vec<HygieneEpisode>,
}

pub fn sense_detect(args: &DetectArgs) -> Result<ExitCode> {
    let fmt = format(&args.output, Format::Json, &[Format::Json, Format::Csv, Format::Md])?;
    let params = load_params(&args.params)?;
    let reg = registry(&args.schemas)?;
    let devices = ingest_devices(&readings_only(&load_text(&args.readings)?), &reg)?;
    let scale = pick_series(&devices, &reg, &args.scale, DeviceKind::Scale, "weight")?;
    let distance = pick_series(&devices, &reg, &args.distance, DeviceKind::Distance, "distance")?;
    let episodes = detect_hygiene_episodes(scale, distance, &params)?;
    let text = match fmt {
        Format::Json => to_json(&DetectOutput { params, episodes }),
        Format::Csv => episodes_csv(&episodes),
        _ => {
            let rows: Vec<Vec<String>> = episodes
                .iter()
                .map(|e| {
                    let flags: Vec<String> = e.quality.iter().map(|q| format!("{q:?}")).collect();
                    vec![
                        format_instant(&e.start),
                        format!("{:.3}", e.duration_s),
                        format!("{:.3}", e.amount_g),
                        format!("{:.3}", e.amount_ml),
                        flags.join(", "),
                    ]
                })
                .collect();
            md_table(&["start", "duration s", "amount g", "amount ml", "quality"], &rows)
        }
    };
    emit(&args.output, &text)?;
    Ok(SUCCESS)
}

fn single_device(source: &str, reg: &SchemaRegistry) -> Result<IngestResult> {
    let mut devices = ingest_devices(&load_text(source)?, reg)?;
    if devices.len() != 1 {
        bail!("{source} holds readings from {} devices; expected exactly one", devices.len());
    }
    Ok(devices.pop_first().expect("one device").1)
}

pub fn sense_energy(args: &EnergyArgs) -> Result<ExitCode> {
    format(&args.output, Format::Json, &[Format::Json])?;
    let reg = registry(&args.schemas)?;
    let plug = single_device(&args.plug, &reg)?;
    let hvac = single_device(&args.hvac, &reg)?;
    let stays: Vec<Stay> = load_json(&args.stays)?;
    let summary = energy_summary(&plug.series, &hvac.series, &stays)?;
    emit(&args.output, &to_json(&summary))?;
    Ok(SUCCESS)
}

fn need<T: Copy>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| usage(format!("missing {flag}")))
}

fn indicator_line(v: &IndicatorValue) -> String {
    let unit = if v.unit.is_empty() { String::new() } else { format!(" {}", v.unit) };
    format!("{}{} [{}]", v.display_value(), unit, v.band_label())
}

#[derive(Serialize)]
struct EmOutput {
    em_material_kgco2e: f64,
    cards_replaced: u32,
    total_stays: u32,
    kg_per_card: f64,
}

pub fn indicator_compute(args: &ComputeArgs) -> Result<ExitCode> {
    let policy = match args.policy {
        PolicyArg::Strict => ClassifyPolicy::Strict,
        PolicyArg::Nearest => ClassifyPolicy::Nearest,
    };
    let value = match args.kind {
        IndicatorKind::Cfid => {
            let (e_app, e_hvac, ef, em) =
                (need(args.e_app, "--e-app")?, need(args.e_hvac, "--e-hvac")?, need(args.ef, "--ef")?, need(args.em, "--em")?);
            let (inputs, mode) = match args.mode {
                CfidModeArg::Aggregate => (CfidInputs::averaged(e_app, e_hvac, ef, em), CfidMode::AggregateAverage),
                CfidModeArg::PerStay => (
                    CfidInputs {
                        e_appliances_kwh: e_app,
                        e_hvac_kwh: e_hvac,
                        ef_energy_kgco2e_per_kwh: ef,
                        em_material_kgco2e: em,
                        n_guests: args.guests,
                        n_days: args.days,
                    },
                    CfidMode::PerStay,
                ),
            };
            compute_cfid(&inputs, mode, None)?.classified(&cfid_bands(), policy)
        }
        IndicatorKind::Mcfi => {
            let v = match &args.surveys {
                Some(src) => compute_mcfi(&read_surveys_csv(&load_text(src)?)?, None)?,
                None => {
                    let a = McfiAggregates::from_means(need(args.s, "--s")?, need(args.f, "--f")?, need(args.p, "--p")?)?;
                    compute_mcfi_from_aggregates(&a, None)
                }
            };
            v.classified(&mcfi_bands(), policy)
        }
        IndicatorKind::Em => {
            let fmt = format(&args.output, Format::Text, &[Format::Text, Format::Json])?;
            let (cards, stays, kg) =
                (need(args.cards, "--cards")?, need(args.total_stays, "--total-stays")?, need(args.kg_per_card, "--kg-per-card")?);
            let em = em_material_average(cards, stays, kg)?;
            let text = match fmt {
                Format::Json => to_json(&EmOutput { em_material_kgco2e: em, cards_replaced: cards, total_stays: stays, kg_per_card: kg }),
                _ => format!("{:.3} kg CO2e", em),
            };
            emit(&args.output, &text)?;
            return Ok(SUCCESS);
        }
        IndicatorKind::Hygiene => return hygiene(args),
    };
    let fmt = format(&args.output, Format::Text, &[Format::Text, Format::Json])?;
    let text = match fmt {
        Format::Json => to_json(&value),
        _ => indicator_line(&value),
    };
    emit(&args.output, &text)?;
    Ok(SUCCESS)
}

fn hygiene(args: &ComputeArgs) -> Result<ExitCode> {
    let fmt = format(&args.output, Format::Json, &[Format::Json, Format::Md])?;
    let src = args.episodes.as_ref().ok_or_else(|| usage("missing --episodes"))?;
    let value: Value = load_json(src)?;
    let value = value.get("episodes").cloned().unwrap_or(value);
    let episodes: Vec<HygieneEpisode> = serde_json::from_value(value).with_context(|| format!("parsing episodes in {src}"))?;
    let group_by = match args.group_by {
        GroupArg::Case => GroupBy::Case,
        GroupArg::Activity => GroupBy::Activity,
        GroupArg::Scenario => {
            let log_src = args.log.as_ref().ok_or_else(|| usage("--group-by scenario needs --log"))?;
            GroupBy::Scenario(parse_xes(&load_text(log_src)?)?.case_labels("scenario"))
        }
    };
    let groups = hygiene_compliance(&episodes, &ComplianceThresholds::default(), &group_by);
    let text = match fmt {
        Format::Json => to_json(&groups),
        _ => {
            let opt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_default();
            let rows: Vec<Vec<String>> = groups
                .iter()
                .map(|g| {
                    vec![
                        g.key.clone(),
                        g.count.to_string(),
                        g.negative_amount_count.to_string(),
                        opt(g.amount_ml.map(|s| s.mean)),
                        opt(g.duration_s.map(|s| s.mean)),
                        opt(g.amount_compliant_fraction),
                        format!("{:.3}", g.duration_compliant_fraction),
                    ]
                })
                .collect();
            md_table(&["group", "episodes", "negative", "mean ml", "mean s", "amount ok", "duration ok"], &rows)
        }
    };
    emit(&args.output, &text)?;
    Ok(SUCCESS)
}

pub fn report_build(args: &ReportArgs) -> Result<ExitCode> {
    let fmt = format(&args.output, Format::Json, &[Format::Json, Format::Md])?;
    let model = load_model(&load_text(&args.model)?)?;
    let values: Vec<IndicatorValue> = match &args.values {
        Some(src) => load_json(src)?,
        None => Vec::new(),
    };
    let conformance = match &args.log {
        Some(log) => {
            let spec = NormativeSpec::from_json(&load_text(&args.spec)?)?;
            Some(conformance_check(&parse_xes(&load_text(log)?)?, &spec)?)
        }
        None => None,
    };
    let notes: BTreeMap<String, String> = match &args.notes {
        Some(src) => load_json(src)?,
        None => BTreeMap::new(),
    };
    let generated_at = match &args.generated_at {
        Some(raw) => parse_instant(raw).ok_or_else(|| usage(format!("invalid --generated-at {raw:?}")))?,
        None => Utc::now(),
    };
    let options = ReportOptions { notes, conformance, ..Default::default() };
    let report = build_report(&model, &args.fragments, &values, generated_at, &options)?;
    let text = render(&report, if fmt == Format::Md { ReportFormat::Markdown } else { ReportFormat::Json });
    emit(&args.output, &text)?;
    let flagged = report.assessments.iter().any(|a| a.review_flag);
    Ok(if args.strict && flagged { findings() } else { SUCCESS })
}

pub fn simulate(args: &SimulateArgs) -> Result<ExitCode> {
    let script = if let Some(src) = &args.script {
        ScenarioScript::from_json(&load_text(src)?)?
    } else if let Some(seed) = args.random {
        random_script(seed, &RandomScriptOptions::default())
    } else {
        study_script(args.seed, args.study.expect("clap requires one source"))
    };
    let sim = script.generate()?;
    std::fs::write(&args.out, sim.feed_jsonl()).with_context(|| format!("writing {}", args.out.display()))?;
    let truth = to_json(&sim.truth);
    match &args.truth {
        Some(path) => std::fs::write(path, truth + "\n").with_context(|| format!("writing {}", path.display()))?,
        None => println!("{truth}"),
    }
    Ok(SUCCESS)
}

pub fn serve(args: &ServeArgs) -> Result<ExitCode> {
    let feed = args.feed.parse().map_err(usage)?;
    let session = match &args.config {
        Some(src) => SessionConfig::from_json(&load_text(src)?)?,
        None => SessionConfig::default(),
    };
    if let Some(speed) = args.speed {
        if !(speed > 0.0) {
            return Err(usage("--speed must be positive"));
        }
    }
    let config = susbp_server::ServerConfig { bind: args.bind.clone(), feed, session, speed: args.speed, export_dir: args.export.clone() };
    let runtime = tokio::runtime::Runtime::new().context("starting runtime")?;
    runtime.block_on(async {
        let server = susbp_server::Server::bind(config).await?;
        eprintln!("listening on http://{}", server.local_addr()?);
        server.run().await?;
        Ok::<_, anyhow::Error>(())
    })?;
    Ok(SUCCESS)
}
