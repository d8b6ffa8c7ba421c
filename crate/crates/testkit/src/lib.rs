//! Test support for llmsite: local HTTP servers, fixture websites, a mock
//! scoring service and synthetic score corpora.

pub mod scorer;
pub mod server;
pub mod sites;
pub mod synth;

pub use server::{RecordedRequest, Reply, TestServer};
