//! WebAssembly bindings for a static browser page. Everything runs in the
//! page; there is no broker.

pub mod desk;

use wasm_bindgen::prelude::*;

#[wasm_bindgen]
pub struct DeskDemo(desk::Desk);

#[wasm_bindgen]
impl DeskDemo {
    #[wasm_bindgen(constructor)]
    pub fn new() -> DeskDemo {
        DeskDemo(desk::Desk::new())
    }

    /// Returns the trace lines the observation produced, newline-separated.
    pub fn observe(&mut self, kind: &str, value: &str) -> Result<String, JsError> {
        self.0
            .observe(kind, value)
            .map(|t| t.join("\n"))
            .map_err(|e| JsError::new(&e))
    }

    pub fn advance(&mut self, ms: f64) -> String {
        self.0.advance(ms.max(0.0) as u64).join("\n")
    }

    /// JSON text of the retained state and timer.
    pub fn snapshot(&self) -> String {
        self.0.snapshot().to_string()
    }
}

impl Default for DeskDemo {
    fn default() -> Self {
        Self::new()
    }
}

#[wasm_bindgen(js_name = topicMatches)]
pub fn topic_matches(filter: &str, topic: &str) -> Result<bool, JsError> {
    desk::match_topic(filter, topic).map_err(|e| JsError::new(&e))
}
