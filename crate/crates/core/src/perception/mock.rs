//! Ground-truth perception for simulated screens. The simulator writes the
//! element list into an iTXt chunk of each PNG it renders; this perceiver
//! reads it back, so the result is a pure function of the image bytes.

use std::io::Cursor;

use serde::{Deserialize, Serialize};

use super::{Perceiver, PerceptionError, PerceptionResult, PerceptionSource, ScreenElement};

pub const GROUND_TRUTH_KEY: &str = "sim-elements";

#[derive(Serialize, Deserialize)]
struct GroundTruth {
    elements: Vec<ScreenElement>,
}

/// JSON payload for the ground-truth chunk.
pub fn embed_ground_truth(elements: &[ScreenElement]) -> String {
    serde_json::to_string(&GroundTruth { elements: elements.to_vec() }).expect("elements serialize")
}

#[derive(Debug, Default, Clone, Copy)]
pub struct MockPerceiver;

impl Perceiver for MockPerceiver {
    fn perceive(&self, screenshot: &[u8]) -> Result<PerceptionResult, PerceptionError> {
        let decoder = png::Decoder::new(Cursor::new(screenshot));
        let reader = decoder.read_info().map_err(|e| PerceptionError::BadImage(e.to_string()))?;
        let info = reader.info();
        let size = (info.width, info.height);
        let mut elements = Vec::new();
        for chunk in info.utf8_text.iter().filter(|c| c.keyword == GROUND_TRUTH_KEY) {
            let text = chunk.get_text().map_err(|e| PerceptionError::BadImage(e.to_string()))?;
            let truth: GroundTruth =
                serde_json::from_str(&text).map_err(|e| PerceptionError::BadImage(format!("ground truth: {e}")))?;
            elements.extend(truth.elements);
        }
        Ok(PerceptionResult::new(elements, size, PerceptionSource::Mock, screenshot))
    }
}
