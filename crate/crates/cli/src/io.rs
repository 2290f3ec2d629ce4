//! Input loading and output plumbing shared by the subcommands.

use std::fmt;
use std::io::Read;

use anyhow::{Context, Result};
use susbp_core::bundled;

use crate::{Format, Output};

/// Misuse of the command line; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

const BUNDLED: [(&str, &str); 7] = [
    ("hotel", bundled::HOTEL_MODEL),
    ("phlebotomy", bundled::PHLEBOTOMY_MODEL),
    ("hotel-bpmn", bundled::HOTEL_BPMN),
    ("phlebotomy-bpmn", bundled::PHLEBOTOMY_BPMN),
    ("phlebotomy-spec", bundled::PHLEBOTOMY_SPEC),
    ("demo-log", bundled::PHLEBOTOMY_DEMO_LOG),
    ("device-schemas", bundled::DEVICE_SCHEMAS),
];

/// Read a path, `-` for stdin, or `bundled:NAME` for a shipped file.
pub fn load_text(source: &str) -> Result<String> {
    if let Some(name) = source.strip_prefix("bundled:") {
        return BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| text.to_string())
            .ok_or_else(|| usage(format!("no bundled file {name:?}; known: {}", BUNDLED.map(|b| b.0).join(", "))));
    }
    if source == "-" {
        let mut text = String::new();
        std::io::stdin().read_to_string(&mut text).context("reading stdin")?;
        return Ok(text);
    }
    std::fs::read_to_string(source).with_context(|| format!("reading {source}"))
}

pub fn load_json<T: serde::de::DeserializeOwned>(source: &str) -> Result<T> {
    let text = load_text(source)?;
    serde_json::from_str(&text).with_context(|| format!("parsing {source}"))
}

/// The requested format, or `default`; anything outside `allowed` is a usage error.
pub fn format(output: &Output, default: Format, allowed: &[Format]) -> Result<Format> {
    let f = output.format.unwrap_or(default);
    if allowed.contains(&f) {
        Ok(f)
    } else {
        let names: Vec<String> = allowed.iter().map(|a| format!("{a:?}").to_lowercase()).collect();
        Err(usage(format!("--format {} is not supported here; use one of {}", format!("{f:?}").to_lowercase(), names.join(", "))))
    }
}

pub fn emit(output: &Output, text: &str) -> Result<()> {
    let mut text = text.to_string();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    match &output.out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable")
}
