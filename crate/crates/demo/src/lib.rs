//! Browser demo for test-time embedding normalization. [`Session`] holds a
//! small synthetic dataset and a trained model and answers the page's
//! queries as JSON; on wasm32 it is exported through `wasm-bindgen`.

mod session;
#[cfg(target_arch = "wasm32")]
mod web;

pub use session::{DemoParams, Recommendation, Session, SessionSummary};
