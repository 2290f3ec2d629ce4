//! Sustainability analytics for IoT-enhanced business processes.
//!
//! The crate bundles a sustainability metamodel, BPMN and XES parsers,
//! sensor ingestion with hand-hygiene episode detection, indicator
//! computation, report assembly and a live monitoring state machine.

pub mod bpmn;
pub mod bundled;
pub mod eventlog;
pub mod indicators;
pub mod metamodel;
pub mod monitor;
pub mod report;
pub mod sensors;
pub mod simulate;
pub mod summary;
pub mod time;
