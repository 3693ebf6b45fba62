//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export returns SVG markup or a short verdict string; errors surface
//! as JavaScript exceptions carrying the message.

pub mod demo;

use wasm_bindgen::prelude::*;

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = iceSvg)]
pub fn ice_svg(model: &str, plot: &str, n: usize, seed: u32) -> Result<String, JsError> {
    js(demo::ice_svg(model, plot, n, seed.into()))
}

#[wasm_bindgen(js_name = diceSvg)]
pub fn dice_svg(model: &str, n: usize, seed: u32, bass: f64) -> Result<String, JsError> {
    js(demo::dice_svg(model, n, seed.into(), bass))
}

#[wasm_bindgen]
pub struct Lineup(demo::LineupGame);

#[wasm_bindgen]
impl Lineup {
    #[wasm_bindgen(constructor)]
    pub fn new(dataset: &str, k: usize, seed: u32) -> Result<Lineup, JsError> {
        demo::LineupGame::new(dataset, k, seed.into())
            .map(Lineup)
            .map_err(|e| JsError::new(&e))
    }

    pub fn svg(&self) -> String {
        self.0.svg().to_string()
    }

    pub fn k(&self) -> usize {
        self.0.k()
    }

    pub fn guess(&self, panel: usize) -> Result<String, JsError> {
        js(self.0.guess(panel))
    }
}
