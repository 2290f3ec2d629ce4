//! XES reading and writing.
//!
//! Supported attribute types are string, id, int, float, boolean and date.
//! Nested and list attributes are skipped on read.

use quick_xml::events::{BytesDecl, BytesEnd, BytesStart, Event as XmlEvent};
use quick_xml::Writer;
use roxmltree::{Document, Node};
use thiserror::Error;

use super::{AttributeValue, Attributes, Event, EventLog, Lifecycle, Trace, CONCEPT_NAME, LIFECYCLE_TRANSITION, TIME_TIMESTAMP};
use crate::time::{format_instant, parse_instant};

#[derive(Debug, Error, PartialEq)]
pub enum XesError {
    #[error("xml error: {0}")]
    Xml(String),
    #[error("trace {trace}, event {event}: missing time:timestamp")]
    MissingTimestamp { trace: usize, event: usize },
    #[error("trace {trace}, event {event}: missing concept:name")]
    MissingActivityName { trace: usize, event: usize },
    #[error("invalid {kind} attribute {key:?}: {value:?}")]
    InvalidAttribute { kind: String, key: String, value: String },
    #[error("trace {trace}, event {event}: unsupported lifecycle transition {value:?}")]
    UnsupportedLifecycle { trace: usize, event: usize, value: String },
}

const XES_NS: &str = "http://www.xes-standard.org/";

fn parse_attribute(node: Node) -> Result<Option<(String, AttributeValue)>, XesError> {
    let kind = node.tag_name().name();
    let Some(key) = node.attribute("key") else {
        return Ok(None);
    };
    let raw = node.attribute("value").unwrap_or_default();
    let bad = || XesError::InvalidAttribute { kind: kind.to_string(), key: key.to_string(), value: raw.to_string() };
    let value = match kind {
        "string" => AttributeValue::String(raw.to_string()),
        "id" => AttributeValue::Id(raw.to_string()),
        "int" => AttributeValue::Int(raw.trim().parse().map_err(|_| bad())?),
        "float" => AttributeValue::Float(raw.trim().parse().map_err(|_| bad())?),
        "boolean" => AttributeValue::Boolean(raw.trim().parse().map_err(|_| bad())?),
        "date" => AttributeValue::Date(parse_instant(raw).ok_or_else(bad)?),
        _ => return Ok(None),
    };
    Ok(Some((key.to_string(), value)))
}

fn attributes_of(node: Node) -> Result<Attributes, XesError> {
    let mut out = Attributes::new();
    for child in node.children().filter(Node::is_element) {
        if let Some((k, v)) = parse_attribute(child)? {
            out.insert(k, v);
        }
    }
    Ok(out)
}

fn parse_event(node: Node, trace: usize, event: usize) -> Result<Event, XesError> {
    let mut attributes = attributes_of(node)?;
    let activity = match attributes.remove(CONCEPT_NAME) {
        Some(AttributeValue::String(s)) | Some(AttributeValue::Id(s)) => s,
        _ => return Err(XesError::MissingActivityName { trace, event }),
    };
    let timestamp = match attributes.remove(TIME_TIMESTAMP) {
        Some(AttributeValue::Date(t)) => t,
        _ => return Err(XesError::MissingTimestamp { trace, event }),
    };
    let lifecycle = match attributes.remove(LIFECYCLE_TRANSITION) {
        None => Lifecycle::Complete,
        Some(v) => {
            let raw = v.as_str().unwrap_or_default().to_ascii_lowercase();
            Lifecycle::parse(&raw).ok_or(XesError::UnsupportedLifecycle { trace, event, value: raw })?
        }
    };
    Ok(Event { activity, timestamp, lifecycle, attributes })
}

pub fn parse_xes(xml: &str) -> Result<EventLog, XesError> {
    let doc = Document::parse(xml).map_err(|e| XesError::Xml(e.to_string()))?;
    let root = doc.root_element();
    if root.tag_name().name() != "log" {
        return Err(XesError::Xml(format!("expected <log>, found <{}>", root.tag_name().name())));
    }
    let mut log = EventLog::default();
    for child in root.children().filter(Node::is_element) {
        if child.tag_name().name() != "trace" {
            if let Some((k, v)) = parse_attribute(child)? {
                log.attributes.insert(k, v);
            }
            continue;
        }
        let ti = log.traces.len();
        let mut trace = Trace::new("");
        for node in child.children().filter(Node::is_element) {
            if node.tag_name().name() == "event" {
                let ev = parse_event(node, ti, trace.events.len())?;
                trace.events.push(ev);
            } else if let Some((k, v)) = parse_attribute(node)? {
                trace.attributes.insert(k, v);
            }
        }
        trace.case_id = match trace.attributes.remove(CONCEPT_NAME) {
            Some(AttributeValue::String(s)) | Some(AttributeValue::Id(s)) => s,
            Some(other) => {
                trace.attributes.insert(CONCEPT_NAME.to_string(), other);
                format!("trace-{}", ti + 1)
            }
            None => format!("trace-{}", ti + 1),
        };
        trace.sort_events();
        log.traces.push(trace);
    }
    Ok(log)
}

fn attribute_element(key: &str, value: &AttributeValue) -> BytesStart<'static> {
    let (tag, text) = match value {
        AttributeValue::String(s) => ("string", s.clone()),
        AttributeValue::Id(s) => ("id", s.clone()),
        AttributeValue::Int(i) => ("int", i.to_string()),
        AttributeValue::Float(x) => ("float", format!("{x:?}")),
        AttributeValue::Boolean(b) => ("boolean", b.to_string()),
        AttributeValue::Date(t) => ("date", format_instant(t)),
    };
    let mut el = BytesStart::new(tag);
    el.push_attribute(("key", key));
    el.push_attribute(("value", text.as_str()));
    el
}

struct XesWriter {
    inner: Writer<Vec<u8>>,
}

impl XesWriter {
    fn write(&mut self, ev: XmlEvent) {
        self.inner.write_event(ev).expect("writing to a Vec cannot fail");
    }

    fn attr(&mut self, key: &str, value: &AttributeValue) {
        self.write(XmlEvent::Empty(attribute_element(key, value)));
    }

    fn attrs(&mut self, attributes: &Attributes) {
        for (k, v) in attributes {
            self.attr(k, v);
        }
    }

    fn open(&mut self, tag: &'static str) {
        self.write(XmlEvent::Start(BytesStart::new(tag)));
    }

    fn close(&mut self, tag: &'static str) {
        self.write(XmlEvent::End(BytesEnd::new(tag)));
    }
}

const EXTENSIONS: [(&str, &str); 3] = [("Concept", "concept"), ("Time", "time"), ("Lifecycle", "lifecycle")];

pub fn write_xes(log: &EventLog) -> String {
    let mut w = XesWriter { inner: Writer::new_with_indent(Vec::new(), b' ', 2) };
    w.write(XmlEvent::Decl(BytesDecl::new("1.0", Some("UTF-8"), None)));
    let mut root = BytesStart::new("log");
    root.push_attribute(("xes.version", "1.0"));
    root.push_attribute(("xes.features", ""));
    root.push_attribute(("xmlns", XES_NS));
    w.write(XmlEvent::Start(root));
    for (name, prefix) in EXTENSIONS {
        let mut ext = BytesStart::new("extension");
        let uri = format!("{XES_NS}{}.xesext", prefix);
        ext.push_attribute(("name", name));
        ext.push_attribute(("prefix", prefix));
        ext.push_attribute(("uri", uri.as_str()));
        w.write(XmlEvent::Empty(ext));
    }
    w.attrs(&log.attributes);
    for trace in &log.traces {
        w.open("trace");
        w.attr(CONCEPT_NAME, &AttributeValue::String(trace.case_id.clone()));
        w.attrs(&trace.attributes);
        for e in &trace.events {
            w.open("event");
            w.attr(CONCEPT_NAME, &AttributeValue::String(e.activity.clone()));
            w.attr(LIFECYCLE_TRANSITION, &AttributeValue::String(e.lifecycle.as_str().into()));
            w.attr(TIME_TIMESTAMP, &AttributeValue::Date(e.timestamp));
            w.attrs(&e.attributes);
            w.close("event");
        }
        w.close("trace");
    }
    w.close("log");
    let mut out = String::from_utf8(w.inner.into_inner()).expect("writer emits UTF-8");
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::from_millis;

    const TWO_EVENTS: &str = r#"<?xml version="1.0"?>
<log xes.version="1.0" xmlns="http://www.xes-standard.org/">
  <global scope="event"><string key="concept:name" value="x"/></global>
  <trace>
    <string key="concept:name" value="case-1"/>
    <event>
      <string key="concept:name" value="Hand hygiene"/>
      <string key="lifecycle:transition" value="complete"/>
      <date key="time:timestamp" value="2024-06-10T08:00:20.000+00:00"/>
    </event>
    <event>
      <string key="concept:name" value="Hand hygiene"/>
      <string key="lifecycle:transition" value="start"/>
      <date key="time:timestamp" value="2024-06-10T08:00:00.000Z"/>
    </event>
  </trace>
</log>"#;

    #[test]
    fn parses_and_sorts_events() {
        let log = parse_xes(TWO_EVENTS).unwrap();
        assert_eq!(log.traces.len(), 1);
        let t = &log.traces[0];
        assert_eq!(t.case_id, "case-1");
        assert_eq!(t.events.len(), 2);
        assert_eq!(t.events[0].lifecycle, Lifecycle::Start);
        assert_eq!((t.events[1].timestamp - t.events[0].timestamp).num_seconds(), 20);
        assert!(log.attributes.is_empty());
    }

    #[test]
    fn missing_fields_are_errors() {
        let no_time = TWO_EVENTS.replace(r#"<date key="time:timestamp" value="2024-06-10T08:00:00.000Z"/>"#, "");
        assert_eq!(parse_xes(&no_time), Err(XesError::MissingTimestamp { trace: 0, event: 1 }));
        let no_name = TWO_EVENTS.replacen(r#"<string key="concept:name" value="Hand hygiene"/>"#, "", 1);
        assert_eq!(parse_xes(&no_name), Err(XesError::MissingActivityName { trace: 0, event: 0 }));
        assert!(matches!(parse_xes("<log>"), Err(XesError::Xml(_))));
    }

    #[test]
    fn empty_log_round_trips() {
        let text = write_xes(&EventLog::default());
        assert_eq!(parse_xes(&text).unwrap(), EventLog::default());
    }

    #[test]
    fn attributes_and_escaping_survive() {
        let mut t = Trace::new("a&b <1>");
        t.attributes.insert("scenario".into(), "disturbance".into());
        let mut e = Event::new("Draw \"blood\"", from_millis(1_718_006_400_123), Lifecycle::Start);
        e.attributes.insert("amount_g".into(), AttributeValue::Float(0.1 + 0.2));
        e.attributes.insert("n".into(), AttributeValue::Int(-3));
        e.attributes.insert("ok".into(), AttributeValue::Boolean(true));
        e.attributes.insert("org:resource".into(), AttributeValue::Id("r-1".into()));
        e.attributes.insert("seen".into(), AttributeValue::Date(from_millis(5)));
        t.events.push(e);
        let log = EventLog { attributes: [("source".to_string(), "lab".into())].into(), traces: vec![t] };
        assert_eq!(parse_xes(&write_xes(&log)).unwrap(), log);
    }
}
