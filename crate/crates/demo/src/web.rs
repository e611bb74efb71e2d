//! `wasm-bindgen` exports. Every query returns a JSON string.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use crate::session::{DemoParams, Session};

fn json<T: Serialize>(value: &T) -> Result<String, JsError> {
    serde_json::to_string(value).map_err(|e| JsError::new(&e.to_string()))
}

fn js(message: String) -> JsError {
    JsError::new(&message)
}

#[wasm_bindgen]
pub struct Demo {
    session: Session,
}

#[wasm_bindgen]
impl Demo {
    /// `params` is a JSON object with any of the `DemoParams` fields.
    #[wasm_bindgen(constructor)]
    pub fn new(params: &str) -> Result<Demo, JsError> {
        let params: DemoParams = serde_json::from_str(params).map_err(|e| JsError::new(&e.to_string()))?;
        Ok(Demo {
            session: Session::train(params).map_err(js)?,
        })
    }

    pub fn summary(&self) -> Result<String, JsError> {
        json(self.session.summary())
    }

    #[wasm_bindgen(js_name = numUsers)]
    pub fn num_users(&self) -> usize {
        self.session.num_users()
    }

    pub fn evaluate(&self, p: f64, k: usize) -> Result<String, JsError> {
        json(&self.session.evaluate(p, k).map_err(js)?)
    }

    pub fn sweep(&self, steps: usize, k: usize) -> Result<String, JsError> {
        json(&self.session.sweep(steps, k).map_err(js)?)
    }

    pub fn recommend(&self, user: usize, p: f64, k: usize) -> Result<String, JsError> {
        json(&self.session.recommend(user, p, k).map_err(js)?)
    }

    pub fn magnitudes(&self) -> Result<String, JsError> {
        json(&self.session.magnitudes())
    }
}
