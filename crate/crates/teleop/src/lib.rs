//! File formats, wire protocol, session server and scenario harness around
//! [`gl_teleop_core`].

pub mod harness;
pub mod model;
pub mod protocol;
pub mod scenario;
pub mod server;
pub mod session;
pub mod station;

pub use gl_teleop_core as core;
