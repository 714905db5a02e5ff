use wasm_bindgen::prelude::*;

use crate::{explore_gae, Playground};

fn js_err(e: String) -> JsError {
    JsError::new(&e)
}

fn json<T: serde::Serialize>(v: &T) -> Result<String, JsError> {
    serde_json::to_string(v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub struct Demo {
    inner: Playground,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> Result<Demo, JsError> {
        Ok(Demo { inner: Playground::new(seed as u64).map_err(js_err)? })
    }

    pub fn drag(&mut self, x: f64, y: f64, z: f64) -> Result<(), JsError> {
        self.inner.drag([x, y, z]).map_err(js_err)
    }

    pub fn gripper(&mut self, open: f64) -> Result<(), JsError> {
        self.inner.set_gripper(open).map_err(js_err)
    }

    pub fn reset(&mut self, seed: u32) -> Result<(), JsError> {
        self.inner.reset(Some(seed as u64)).map_err(js_err)
    }

    pub fn autopilot(&mut self) -> Result<(), JsError> {
        self.inner.autopilot().map_err(js_err)
    }

    /// State after `ticks` steps, as JSON.
    pub fn advance(&mut self, ticks: u32) -> Result<String, JsError> {
        json(&self.inner.advance(ticks).map_err(js_err)?)
    }
}

/// `dones` holds 0/1 flags.
#[wasm_bindgen]
pub fn gae_table(rewards: &[f64], values: &[f64], dones: &[u8], gamma: f64, lambda: f64) -> Result<String, JsError> {
    let dones: Vec<bool> = dones.iter().map(|&d| d != 0).collect();
    json(&explore_gae(rewards, values, &dones, gamma, lambda).map_err(js_err)?)
}
