use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use susbp_core::bpmn::{extract_fragment, hygiene_fragments, parse_bpmn, FragmentIds};
use susbp_core::bundled;
use susbp_core::eventlog::stats::stats_csv;
use susbp_core::eventlog::{all_activity_stats, parse_xes, write_xes, NormativeSpec};
use susbp_core::indicators::cfid::{compute_cfid, CfidInputs, CfidMode};
use susbp_core::indicators::mcfi::{compute_mcfi_from_aggregates, McfiAggregates};
use susbp_core::indicators::IndicatorValue;
use susbp_core::metamodel::{validate_model, SustainabilityModel};
use susbp_core::report::{build_report, render, ReportFormat, ReportOptions};
use susbp_core::sensors::HygieneEpisode;
use susbp_core::simulate::{ScenarioScript, ScriptedEpisode, Truth};
use susbp_core::time::parse_instant;

fn susbp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_susbp")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn ok(args: &[&str]) -> String {
    let o = susbp(args);
    assert_eq!(o.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    stdout(&o)
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("susbp-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn golden(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    std::fs::read_to_string(path).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn cfid_worked_example_line() {
    let out = ok(&[
        "indicator",
        "compute",
        "--kind",
        "cfid",
        "--mode",
        "aggregate",
        "--e-app",
        "2.5",
        "--e-hvac",
        "4.1",
        "--ef",
        "0.4",
        "--em",
        "0.004",
    ]);
    assert_eq!(out, "2.644 kg CO2e/guest-day [acceptable]\n");
}

#[test]
fn indicator_json_matches_library() {
    let out = ok(&[
        "indicator",
        "compute",
        "--kind",
        "cfid",
        "--e-app",
        "2.5",
        "--e-hvac",
        "4.1",
        "--ef",
        "0.4",
        "--em",
        "0.004",
        "--format",
        "json",
    ]);
    let cli: IndicatorValue = serde_json::from_str(&out).unwrap();
    let lib = compute_cfid(&CfidInputs::averaged(2.5, 4.1, 0.4, 0.004), CfidMode::AggregateAverage, None).unwrap();
    assert_eq!(cli, lib);

    let out = ok(&["indicator", "compute", "--kind", "mcfi", "--s", "0.4", "--f", "0.39", "--p", "0.38", "--format", "json"]);
    let cli: IndicatorValue = serde_json::from_str(&out).unwrap();
    assert_eq!(cli, compute_mcfi_from_aggregates(&McfiAggregates::from_means(0.4, 0.39, 0.38).unwrap(), None));
    let line = ok(&["indicator", "compute", "--kind", "mcfi", "--s", "0.4", "--f", "0.39", "--p", "0.38"]);
    assert!(line.starts_with("0.46 ") && line.trim_end().ends_with("[moderate: requires review]"), "{line}");
    assert_eq!(
        ok(&["indicator", "compute", "--kind", "em", "--cards", "15", "--total-stays", "122", "--kg-per-card", "0.030"]),
        "0.004 kg CO2e\n"
    );
}

#[test]
fn gap_value_is_unclassified_unless_nearest() {
    // (S' + 1 - F' + P') / 3 = 0.53, inside the gap between 0.5 and 0.6
    let args = ["indicator", "compute", "--kind", "mcfi", "--s", "0.53", "--f", "0.47", "--p", "0.53"];
    assert!(ok(&args).ends_with("[Unclassified]\n"));
    let mut nearest = args.to_vec();
    nearest.extend(["--policy", "nearest"]);
    assert!(ok(&nearest).ends_with("[moderate: requires review]\n"));
}

#[test]
fn bad_model_exits_one_with_violations() {
    let mut model: Value = serde_json::from_str(bundled::HOTEL_MODEL).unwrap();
    model["indicators"][0]["measurement_refs"] = json!(["no-such-measurement"]);
    let path = scratch("bad-model").join("bad.json");
    std::fs::write(&path, model.to_string()).unwrap();
    let o = susbp(&["model", "validate", s(&path)]);
    assert_eq!(o.status.code(), Some(1));
    let cli: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let parsed: SustainabilityModel = serde_json::from_value(model).unwrap();
    let expected = validate_model(&parsed);
    assert!(!expected.is_empty());
    assert_eq!(cli["violations"], serde_json::to_value(&expected).unwrap());
    assert_eq!(cli["valid"], false);

    std::fs::write(&path, "{ not json").unwrap();
    assert_eq!(susbp(&["model", "validate", s(&path)]).status.code(), Some(1));
    assert_eq!(ok(&["model", "validate", "bundled:phlebotomy", "--format", "text"]), "model is valid\n");
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(susbp(&[]).status.code(), Some(2));
    assert_eq!(susbp(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(susbp(&["indicator", "compute", "--kind", "cfid", "--e-app", "2.5"]).status.code(), Some(2));
    assert_eq!(susbp(&["log", "stats", "bundled:demo-log", "--format", "text"]).status.code(), Some(2));
    assert_eq!(susbp(&["bpmn", "fragments", "bundled:hotel-bpmn"]).status.code(), Some(2));
    assert_eq!(susbp(&["model", "validate", "bundled:nothing"]).status.code(), Some(2));
    let o = susbp(&["serve", "--feed", "tcp:notaport"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("invalid tcp port"));
}

#[test]
fn bpmn_fragments_match_library() {
    let hotel = parse_bpmn(bundled::HOTEL_BPMN).unwrap();
    let out = ok(&[
        "bpmn",
        "fragments",
        "bundled:hotel-bpmn",
        "--nodes",
        "Verify reservation,Request documents,Select available room",
        "--values",
        "guest-satisfaction",
    ]);
    let cli: Value = serde_json::from_str(&out).unwrap();
    let nodes = hotel.resolve_nodes(["Verify reservation", "Request documents", "Select available room"]).unwrap();
    let lib = extract_fragment(&hotel, &nodes, &["guest-satisfaction".to_string()].into(), &mut FragmentIds::new([])).unwrap();
    assert_eq!(cli, serde_json::to_value(vec![lib]).unwrap());

    let out = ok(&["bpmn", "fragments", "bundled:phlebotomy-bpmn", "--activity", "Hand hygiene"]);
    let cli: Vec<Value> = serde_json::from_str(&out).unwrap();
    let lib = hygiene_fragments(&parse_bpmn(bundled::PHLEBOTOMY_BPMN).unwrap(), "Hand hygiene");
    assert_eq!(cli.len(), 4);
    assert_eq!(serde_json::to_value(&cli).unwrap(), serde_json::to_value(lib).unwrap());

    let o = susbp(&["bpmn", "fragments", "bundled:hotel-bpmn", "--nodes", "Verify reservation,Hand over physical key"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("disconnected"));
}

#[test]
fn log_stats_golden() {
    let out = ok(&["log", "stats", "bundled:demo-log", "--format", "csv"]);
    assert_eq!(out, golden("demo-stats.csv"));
    assert_eq!(out, stats_csv(&all_activity_stats(&parse_xes(bundled::PHLEBOTOMY_DEMO_LOG).unwrap())));
    let md = ok(&["log", "stats", "bundled:demo-log", "--activity", "Hand hygiene", "--format", "md"]);
    assert_eq!(md.lines().count(), 3);
    let follows = ok(&["log", "stats", "bundled:demo-log", "--follows", "--format", "csv"]);
    assert!(follows.starts_with("from,to,count\n"));
}

#[test]
fn conformance_strict_exit_codes() {
    assert_eq!(
        ok(&["log", "conform", "bundled:demo-log", "--strict", "--format", "md"]).lines().next(),
        Some("17 of 17 cases conform (1.000)")
    );

    let mut log = parse_xes(bundled::PHLEBOTOMY_DEMO_LOG).unwrap();
    let spec = NormativeSpec::from_json(bundled::PHLEBOTOMY_SPEC).unwrap();
    let trace = &mut log.traces[4];
    let i = trace.events.iter().position(|e| e.activity == spec.hygiene_activity).unwrap();
    trace.events.remove(i);
    let path = scratch("conform").join("broken.xes");
    std::fs::write(&path, write_xes(&log)).unwrap();
    let lax = susbp(&["log", "conform", s(&path)]);
    assert_eq!(lax.status.code(), Some(0));
    let result: Value = serde_json::from_str(&stdout(&lax)).unwrap();
    assert_eq!(result["conforming_cases"], 16);
    assert_eq!(susbp(&["log", "conform", s(&path), "--strict"]).status.code(), Some(1));
}

#[test]
fn simulate_then_detect_recovers_the_script() {
    let dir = scratch("loop");
    let mut episodes =
        vec![ScriptedEpisode::new(20.0, 30.0, 4.0), ScriptedEpisode::new(90.0, 22.0, 2.5), ScriptedEpisode::new(150.0, 40.0, 5.0)];
    episodes[1].drift_g = 4.0;
    let script = ScenarioScript { episodes, ..Default::default() };
    std::fs::write(dir.join("s.json"), serde_json::to_string(&script).unwrap()).unwrap();
    ok(&["simulate", "--script", s(&dir.join("s.json")), "--out", s(&dir.join("readings.jsonl")), "--truth", s(&dir.join("truth.json"))]);
    let truth: Truth = serde_json::from_str(&std::fs::read_to_string(dir.join("truth.json")).unwrap()).unwrap();
    let out = ok(&["sense", "detect", s(&dir.join("readings.jsonl")), "--params", s(&dir.join("truth.json"))]);
    let detected: Value = serde_json::from_str(&out).unwrap();
    let found: Vec<HygieneEpisode> = serde_json::from_value(detected["episodes"].clone()).unwrap();
    assert_eq!(detected["params"], serde_json::to_value(truth.params).unwrap());
    assert_eq!(found.len(), truth.episodes.len());
    for (f, t) in found.iter().zip(&truth.episodes) {
        assert_eq!((f.start, f.end), (t.start, t.end));
        assert!((f.amount_g - t.expected_amount_g).abs() < 1e-9);
        assert_eq!(f.quality.contains(&susbp_core::sensors::QualityFlag::NegativeAmount), t.expect_negative);
    }
    let csv = ok(&["sense", "detect", s(&dir.join("readings.jsonl")), "--format", "csv"]);
    assert_eq!(csv.lines().count(), 4);
}

fn hourly(device: &str, channel: &str, unit: &str, values: impl IntoIterator<Item = (u32, String)>) -> String {
    values.into_iter().map(|(h, v)| format!("{device},2024-03-01T{h:02}:00:00Z,{channel},{v},{unit}\n")).collect()
}

#[test]
fn energy_pipeline_excludes_off_state() {
    let dir = scratch("energy");
    let header = "device_id,timestamp,channel,value,unit\n";
    // ten on-hours of 250 Wh, then three standby hours of 100 Wh while off
    let mut plug = header.to_string();
    plug += &hourly("shelly-plug-s-1", "device_state", "", [(0, "on".to_string()), (10, "off".to_string())]);
    plug += &hourly(
        "shelly-plug-s-1",
        "energy_wh",
        "Wh",
        (0..=13).map(|h| {
            (
                h,
                if h == 0 {
                    "0"
                } else if h <= 10 {
                    "250"
                } else {
                    "100"
                }
                .to_string(),
            )
        }),
    );
    let mut hvac = header.to_string();
    hvac += &hourly("hvac-1", "device_state", "", [(0, "on".to_string()), (10, "off".to_string())]);
    hvac += &hourly(
        "hvac-1",
        "energy_wh",
        "Wh",
        (0..=13).map(|h| {
            (
                h,
                if h == 0 {
                    "0".to_string()
                } else if h <= 10 {
                    "410".to_string()
                } else {
                    "55".to_string()
                },
            )
        }),
    );
    std::fs::write(dir.join("plug.csv"), plug).unwrap();
    std::fs::write(dir.join("hvac.csv"), hvac).unwrap();
    let stays = json!([{ "start": "2024-03-01T00:00:00Z", "end": "2024-03-01T13:00:00Z", "n_guests": 1, "n_days": 1 }]);
    std::fs::write(dir.join("stays.json"), stays.to_string()).unwrap();
    let out = ok(&[
        "sense",
        "energy",
        "--plug",
        s(&dir.join("plug.csv")),
        "--hvac",
        s(&dir.join("hvac.csv")),
        "--stays",
        s(&dir.join("stays.json")),
    ]);
    let summary: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(summary["e_appliances_kwh"], 2.5);
    assert_eq!(summary["e_hvac_kwh"], 4.1);
}

#[test]
fn report_golden_and_strict_flag() {
    let dir = scratch("report");
    let cfid: Value = serde_json::from_str(&ok(&[
        "indicator",
        "compute",
        "--kind",
        "cfid",
        "--e-app",
        "2.5",
        "--e-hvac",
        "4.1",
        "--ef",
        "0.4",
        "--em",
        "0.004",
        "--format",
        "json",
    ]))
    .unwrap();
    let mcfi: Value = serde_json::from_str(&ok(&[
        "indicator",
        "compute",
        "--kind",
        "mcfi",
        "--s",
        "0.4",
        "--f",
        "0.39",
        "--p",
        "0.38",
        "--format",
        "json",
    ]))
    .unwrap();
    let values = json!([cfid, mcfi]);
    std::fs::write(dir.join("values.json"), values.to_string()).unwrap();
    let notes = json!({ "fragment-1": "Check-in friction is driven by document requests." });
    std::fs::write(dir.join("notes.json"), notes.to_string()).unwrap();
    let (values_path, notes_path) = (dir.join("values.json"), dir.join("notes.json"));
    let base = [
        "report",
        "build",
        "--model",
        "bundled:hotel",
        "--fragments",
        "fragment-1,fragment-2",
        "--values",
        s(&values_path),
        "--notes",
        s(&notes_path),
        "--generated-at",
        "2024-06-30T12:00:00Z",
    ];
    let mut md_args = base.to_vec();
    md_args.extend(["--format", "md"]);
    let md = ok(&md_args);
    assert_eq!(md, golden("hotel-report.md"));

    let json_out = ok(&base);
    let model = susbp_core::metamodel::load_model(bundled::HOTEL_MODEL).unwrap();
    let parsed: Vec<IndicatorValue> = serde_json::from_value(values).unwrap();
    let options = ReportOptions { notes: serde_json::from_value(notes).unwrap(), ..Default::default() };
    let lib = build_report(
        &model,
        &["fragment-1".into(), "fragment-2".into()],
        &parsed,
        parse_instant("2024-06-30T12:00:00Z").unwrap(),
        &options,
    )
    .unwrap();
    assert_eq!(json_out.trim_end(), render(&lib, ReportFormat::Json).trim_end());
    assert_eq!(md.trim_end(), render(&lib, ReportFormat::Markdown).trim_end());

    let mut strict = base.to_vec();
    strict.push("--strict");
    assert_eq!(susbp(&strict).status.code(), Some(1));
    let unknown = susbp(&["report", "build", "--model", "bundled:hotel", "--fragments", "fragment-9"]);
    assert_eq!(unknown.status.code(), Some(1));
}

#[test]
fn ingest_rejects_wrong_units() {
    let dir = scratch("ingest");
    std::fs::write(dir.join("bad.csv"), "device_id,timestamp,channel,value,unit\nscale-1,2024-06-10T08:00:00Z,weight,1.0,lbs\n").unwrap();
    let o = susbp(&["sense", "ingest", s(&dir.join("bad.csv"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    std::fs::write(
        dir.join("good.csv"),
        "device_id,timestamp,channel,value,unit\nscale-1,2024-06-10T08:00:00Z,weight,1.0,g\nscale-1,2024-06-10T08:00:00Z,weight,1.0,g\n",
    )
    .unwrap();
    let rows: Value = serde_json::from_str(&ok(&["sense", "ingest", s(&dir.join("good.csv"))])).unwrap();
    assert_eq!((rows[0]["points"].as_u64(), rows[0]["collapsed"].as_u64()), (Some(1), Some(1)));
}
