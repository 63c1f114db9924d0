//! Client for a remote perception service (OCR, icon grounding, captions).
//!
//! Request:  `POST <url>` `{"image": "<base64>", "media_type": "image/png"}`
//! Response: `{"screen_size": [w, h], "elements": [{"kind": "text"|"icon",
//!            "content": "...", "bounds": [l, t, r, b], "confidence": 0.93}],
//!            "regions": [...]}` where `regions` is optional and ignored.

use std::time::Duration;

use base64::Engine as _;
use serde::Deserialize;
use serde_json::json;

use super::{Bounds, ElementKind, Perceiver, PerceptionError, PerceptionResult, PerceptionSource, ScreenElement};

#[derive(Deserialize)]
struct WireElement {
    kind: ElementKind,
    content: String,
    bounds: [i64; 4],
    #[serde(default = "one")]
    confidence: f32,
}

fn one() -> f32 {
    1.0
}

#[derive(Deserialize)]
struct WireReply {
    screen_size: (u32, u32),
    elements: Vec<WireElement>,
}

pub struct ServicePerceiver {
    url: String,
    agent: ureq::Agent,
}

fn media_type(bytes: &[u8]) -> Option<&'static str> {
    if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        Some("image/png")
    } else if bytes.starts_with(&[0xff, 0xd8, 0xff]) {
        Some("image/jpeg")
    } else {
        None
    }
}

impl ServicePerceiver {
    pub fn new(url: impl Into<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        ServicePerceiver { url: url.into(), agent }
    }

    /// Clips service geometry to the screen, dropping boxes that vanish.
    fn sanitize(e: WireElement, (w, h): (u32, u32)) -> Option<ScreenElement> {
        let clamp = |v: i64, max: u32| v.clamp(0, max as i64) as u32;
        let [l, t, r, b] = e.bounds;
        let bounds = Bounds::new(clamp(l, w), clamp(t, h), clamp(r, w), clamp(b, h))?;
        let mut el = ScreenElement::new(e.kind, e.content, bounds);
        el.confidence = e.confidence.clamp(0.0, 1.0);
        Some(el)
    }
}

impl Perceiver for ServicePerceiver {
    fn perceive(&self, screenshot: &[u8]) -> Result<PerceptionResult, PerceptionError> {
        let media = media_type(screenshot).ok_or_else(|| PerceptionError::BadImage("not PNG or JPEG".into()))?;
        let body = json!({
            "image": base64::engine::general_purpose::STANDARD.encode(screenshot),
            "media_type": media,
        });
        let mut resp = self
            .agent
            .post(&self.url)
            .send_json(&body)
            .map_err(|e| PerceptionError::ServiceUnavailable(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| PerceptionError::ServiceUnavailable(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(PerceptionError::ServiceUnavailable(format!("HTTP {status}: {}", text.chars().take(200).collect::<String>())));
        }
        let reply: WireReply =
            serde_json::from_str(&text).map_err(|e| PerceptionError::ServiceUnavailable(format!("bad reply: {e}")))?;
        let size = reply.screen_size;
        let elements = reply.elements.into_iter().filter_map(|e| Self::sanitize(e, size)).collect();
        Ok(PerceptionResult::new(elements, size, PerceptionSource::Service, screenshot))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::StubServer;

    const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\nrest";

    #[test]
    fn golden_exchange_with_overlapping_boxes() {
        let reply = include_str!("../../tests/fixtures/perception_reply.json");
        let server = StubServer::start(vec![(200, reply.to_string())]);
        let p = ServicePerceiver::new(format!("{}/perceive", server.url())).perceive(PNG_MAGIC).unwrap();
        let contents: Vec<&str> = p.elements.iter().map(|e| e.content.as_str()).collect();
        // hand-ordered: (top, left) ascending, overlap kept, off-screen box clipped
        assert_eq!(contents, ["Walmart", "Search Walmart", "magnifier icon", "Deals", "Cart"]);
        assert!(p.elements.iter().all(|e| e.bounds.within(p.screen_size) && e.is_valid()));
        assert_eq!(p.source, PerceptionSource::Service);
        let req = &server.requests()[0];
        assert!(req.head.starts_with("POST /perceive"));
        let sent: serde_json::Value = serde_json::from_str(&req.body).unwrap();
        assert_eq!(sent["media_type"], "image/png");
    }

    #[test]
    fn errors() {
        let server = StubServer::start(vec![(500, "{}".into())]);
        let svc = ServicePerceiver::new(server.url());
        assert!(matches!(svc.perceive(b"GIF89a"), Err(PerceptionError::BadImage(_))));
        assert!(matches!(svc.perceive(PNG_MAGIC), Err(PerceptionError::ServiceUnavailable(_))));
    }
}
