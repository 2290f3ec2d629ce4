//! Example models, processes and logs shipped with the crate.

pub const HOTEL_BPMN: &str = include_str!("../data/hotel-stay.bpmn");
pub const HOTEL_MODEL: &str = include_str!("../data/hotel.model.json");
pub const PHLEBOTOMY_BPMN: &str = include_str!("../data/phlebotomy.bpmn");
pub const PHLEBOTOMY_MODEL: &str = include_str!("../data/phlebotomy.model.json");
pub const PHLEBOTOMY_SPEC: &str = include_str!("../data/phlebotomy.spec.json");
pub const PHLEBOTOMY_DEMO_LOG: &str = include_str!("../data/phlebotomy-demo.xes");
pub const DEVICE_SCHEMAS: &str = include_str!("../schemas/devices.json");
