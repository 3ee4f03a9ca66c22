//! Clients for the caption, generation and super-resolution services.
//!
//! The wire protocol is an HTTP POST of a JSON object with optional fields
//! `image` and `edges` (base64 PNG) and `prompt` (string). Services answer
//! with `{"image": <base64>}`, or `{"prompt": <string>}` for captions. The
//! bearer token is read from an environment variable at construction.

use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde_json::{json, Value};

use super::canny::EdgeMap;
use super::image::{decode_image, resize_bilinear, Image};
use crate::error::{CoreError, Result};

pub trait CaptionClient: Send + Sync {
    /// Scene description for a PNG image. `class` is passed as a hint.
    fn caption(&self, image_png: &[u8], class: &str) -> Result<String>;
}

pub trait GenerationClient: Send + Sync {
    /// Edge-conditioned image synthesis; returns PNG bytes.
    fn generate(&self, prompt: &str, edges: &EdgeMap, image_png: &[u8], index: usize) -> Result<Vec<u8>>;
}

pub trait SuperresClient: Send + Sync {
    /// Upscaled PNG.
    fn superres(&self, image_png: &[u8]) -> Result<Vec<u8>>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { attempts: 3, base_delay: Duration::from_millis(500) }
    }
}

impl RetryPolicy {
    pub fn immediate() -> Self {
        RetryPolicy { attempts: 3, base_delay: Duration::ZERO }
    }

    /// Runs `f` until it succeeds or attempts run out, doubling the delay
    /// after each failure. Malformed responses are not retried.
    pub fn run<T>(&self, mut f: impl FnMut() -> Result<T>) -> Result<T> {
        let mut delay = self.base_delay;
        let mut last = None;
        for attempt in 0..self.attempts.max(1) {
            if attempt > 0 && !delay.is_zero() {
                std::thread::sleep(delay);
                delay *= 2;
            }
            match f() {
                Ok(v) => return Ok(v),
                Err(e @ CoreError::Response(_)) => return Err(e),
                Err(e) => last = Some(e),
            }
        }
        Err(last.unwrap_or_else(|| CoreError::Endpoint("no attempts made".into())))
    }
}

/// A JSON-over-HTTP service.
#[derive(Debug, Clone)]
pub struct HttpEndpoint {
    pub url: String,
    token: Option<String>,
    pub timeout: Duration,
}

impl HttpEndpoint {
    /// Reads the bearer token from `token_env`; a missing variable is an error.
    pub fn from_env(url: &str, token_env: &str, timeout: Duration) -> Result<Self> {
        let token = std::env::var(token_env)
            .map_err(|_| CoreError::Endpoint(format!("environment variable {token_env} is not set")))?;
        Ok(HttpEndpoint { url: url.to_string(), token: Some(token), timeout })
    }

    pub fn without_auth(url: &str, timeout: Duration) -> Self {
        HttpEndpoint { url: url.to_string(), token: None, timeout }
    }

    pub fn post(&self, body: &Value) -> Result<Value> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut req = agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = req
            .send(body.to_string())
            .map_err(|e| CoreError::Endpoint(format!("{}: {e}", self.url)))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| CoreError::Endpoint(format!("{}: {e}", self.url)))?;
        if !(200..300).contains(&status) {
            return Err(CoreError::Endpoint(format!("{} answered {status}", self.url)));
        }
        serde_json::from_str(&text).map_err(|e| CoreError::Response(format!("{}: {e}", self.url)))
    }
}

fn field<'a>(v: &'a Value, key: &str) -> Result<&'a str> {
    v.get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| CoreError::Response(format!("missing string field {key:?}")))
}

fn image_field(v: &Value) -> Result<Vec<u8>> {
    let bytes = B64
        .decode(field(v, "image")?)
        .map_err(|e| CoreError::Response(format!("image is not base64: {e}")))?;
    decode_image(&bytes, "response").map_err(|e| CoreError::Response(e.to_string()))?;
    Ok(bytes)
}

/// Parses a caption response body.
pub fn parse_caption_response(v: &Value) -> Result<String> {
    let p = field(v, "prompt")?.trim();
    if p.is_empty() {
        return Err(CoreError::Response("empty prompt".into()));
    }
    Ok(p.to_string())
}

/// Parses an image response body, checking the payload decodes.
pub fn parse_image_response(v: &Value) -> Result<Vec<u8>> {
    image_field(v)
}

impl CaptionClient for HttpEndpoint {
    fn caption(&self, image_png: &[u8], class: &str) -> Result<String> {
        parse_caption_response(&self.post(&json!({ "image": B64.encode(image_png), "prompt": class }))?)
    }
}

impl GenerationClient for HttpEndpoint {
    fn generate(&self, prompt: &str, edges: &EdgeMap, image_png: &[u8], _index: usize) -> Result<Vec<u8>> {
        let edges_png = edges.to_image().to_png_bytes()?;
        let body = json!({
            "image": B64.encode(image_png),
            "prompt": prompt,
            "edges": B64.encode(edges_png),
        });
        parse_image_response(&self.post(&body)?)
    }
}

impl SuperresClient for HttpEndpoint {
    fn superres(&self, image_png: &[u8]) -> Result<Vec<u8>> {
        parse_image_response(&self.post(&json!({ "image": B64.encode(image_png) }))?)
    }
}

/// Fills a fixed template with the class and image size.
#[derive(Debug, Clone)]
pub struct MockCaption {
    pub template: String,
}

impl Default for MockCaption {
    fn default() -> Self {
        MockCaption { template: "high-resolution aerial photograph of a {class} scene, {w}x{h}, detailed".into() }
    }
}

impl CaptionClient for MockCaption {
    fn caption(&self, image_png: &[u8], class: &str) -> Result<String> {
        let img = decode_image(image_png, "caption input")?;
        Ok(self
            .template
            .replace("{class}", class)
            .replace("{w}", &img.width.to_string())
            .replace("{h}", &img.height.to_string()))
    }
}

/// Blends the source image with its edge map; `index` shifts the blend so
/// each call yields a different image.
#[derive(Debug, Clone, Default)]
pub struct MockGeneration;

impl GenerationClient for MockGeneration {
    fn generate(&self, prompt: &str, edges: &EdgeMap, image_png: &[u8], index: usize) -> Result<Vec<u8>> {
        if prompt.is_empty() {
            return Err(CoreError::Endpoint("empty prompt".into()));
        }
        let mut img = decode_image(image_png, "generation input")?;
        if img.height != edges.height || img.width != edges.width {
            return Err(CoreError::Endpoint("edge map size differs from image".into()));
        }
        let t = 0.1 * (index + 1) as f64;
        for (i, px) in img.data.chunks_exact_mut(img.channels).enumerate() {
            let e = edges.mask[i] as f64;
            for v in px {
                *v = (1.0 - t) * *v + t * e;
            }
        }
        img.to_png_bytes()
    }
}

/// Upscales by an integer factor with bilinear resampling.
#[derive(Debug, Clone)]
pub struct MockSuperres {
    pub factor: usize,
}

impl Default for MockSuperres {
    fn default() -> Self {
        MockSuperres { factor: 4 }
    }
}

impl SuperresClient for MockSuperres {
    fn superres(&self, image_png: &[u8]) -> Result<Vec<u8>> {
        let img: Image = decode_image(image_png, "superres input")?;
        resize_bilinear(&img, img.height * self.factor, img.width * self.factor).to_png_bytes()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    #[test]
    fn retry_stops_after_three_attempts() {
        let calls = Cell::new(0);
        let r: Result<()> = RetryPolicy::immediate().run(|| {
            calls.set(calls.get() + 1);
            Err(CoreError::Endpoint("down".into()))
        });
        assert!(r.is_err());
        assert_eq!(calls.get(), 3);
    }

    #[test]
    fn retry_returns_first_success() {
        let calls = Cell::new(0);
        let r = RetryPolicy::immediate().run(|| {
            calls.set(calls.get() + 1);
            if calls.get() < 2 {
                Err(CoreError::Endpoint("flaky".into()))
            } else {
                Ok(7)
            }
        });
        assert_eq!(r.unwrap(), 7);
        assert_eq!(calls.get(), 2);
    }

    #[test]
    fn malformed_responses_are_parse_errors() {
        assert!(matches!(parse_caption_response(&json!({})), Err(CoreError::Response(_))));
        assert!(matches!(parse_image_response(&json!({"image": "!!"})), Err(CoreError::Response(_))));
        assert!(matches!(
            parse_image_response(&json!({"image": B64.encode(b"not a png")})),
            Err(CoreError::Response(_))
        ));
        assert_eq!(parse_caption_response(&json!({"prompt": " a river "})).unwrap(), "a river");
    }

    #[test]
    fn missing_token_env_is_an_error() {
        assert!(HttpEndpoint::from_env("http://localhost:1", "DVIT_SURELY_UNSET_TOKEN", Duration::from_secs(1)).is_err());
    }

    #[test]
    fn unreachable_endpoint_is_an_endpoint_error() {
        let ep = HttpEndpoint::without_auth("http://127.0.0.1:9/", Duration::from_millis(300));
        assert!(matches!(ep.superres(b"x"), Err(CoreError::Endpoint(_))));
    }
}
