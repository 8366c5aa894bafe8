//! Pipeline stages, the CSV projection format, embedding presets and the
//! local service behind the `trajspace` binary.

pub mod pipeline;
pub mod presets;
pub mod projection;
pub mod service;
