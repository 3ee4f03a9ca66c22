//! Rubric-based judging of attention heatmaps by an external model.
//!
//! Verdicts are stored one JSON object per line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::gradcam::Heatmap;
use crate::data::endpoint::HttpEndpoint;
use crate::data::image::Image;
use crate::error::{CoreError, Result};

pub const RUBRIC: &str = "\
Scoring rubric. Assign an integer score s ∈ {0,1,2,3}:
- s=0: attention almost entirely on irrelevant areas, with class-relevant regions largely ignored;
- s=1: partial overlap with relevant regions, but a substantial portion of strong attention on irrelevant areas;
- s=2: most strong attention on key class regions and structures, with limited spillover to background;
- s=3: near-perfect alignment with class-discriminative regions and boundaries, with minimal unnecessary focus.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgePrompt {
    pub text: String,
    pub class_name: String,
    pub image: String,
    pub heatmap: String,
}

/// Builds the anonymized judging prompt. Model identity never appears.
pub fn judge_prompt(class_name: &str, image_ref: &str, heatmap_ref: &str) -> JudgePrompt {
    let mut text = String::new();
    text.push_str("You are an impartial judge of remote-sensing attention maps.\n\n");
    let _ = writeln!(
        text,
        "Inputs. The ground-truth scene category, the original RGB image, and the corresponding attention heatmap, where warmer colors indicate higher attention."
    );
    let _ = writeln!(text, "Ground-truth category: {class_name}");
    let _ = writeln!(text, "Original image: {image_ref}");
    let _ = writeln!(text, "Attention heatmap: {heatmap_ref}\n");
    let _ = writeln!(
        text,
        "Evaluation focus. Assess only the spatial alignment between high-activation regions and the semantic regions of the ground-truth class (e.g., water body, shoreline, river course, forest canopy, mountain ridge, bridge span), ignoring model architecture, training details, and any numerical scores.\n"
    );
    let _ = writeln!(text, "{RUBRIC}\n");
    let _ = write!(
        text,
        "Outputs. A single discrete score and a brief natural-language explanation supporting the rating. Reply in the form \"Score: <s>. <explanation>\"."
    );
    JudgePrompt {
        text,
        class_name: class_name.to_string(),
        image: image_ref.to_string(),
        heatmap: heatmap_ref.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub score: u8,
    pub explanation: String,
    pub model: String,
    pub class_name: String,
    pub image_id: String,
}

/// Extracts the score from a judge response.
///
/// The score is the first maximal run of ASCII digits that is not part of
/// a word or a decimal number and whose value lies in 0..=3. Everything
/// after it, minus leading punctuation and whitespace, is the explanation.
pub fn parse_verdict(response: &str) -> Result<(u8, String)> {
    let b = response.as_bytes();
    let mut i = 0;
    while i < b.len() {
        if !b[i].is_ascii_digit() {
            i += 1;
            continue;
        }
        let start = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        let before_ok = start == 0 || !(b[start - 1].is_ascii_alphanumeric() || b[start - 1] == b'_');
        let decimal_before = start >= 2 && b[start - 1] == b'.' && b[start - 2].is_ascii_digit();
        let decimal_after = i + 1 < b.len() && b[i] == b'.' && b[i + 1].is_ascii_digit();
        let after_ok = i == b.len() || !(b[i].is_ascii_alphanumeric() || b[i] == b'_');
        if before_ok && after_ok && !decimal_before && !decimal_after {
            if let Ok(v) = response[start..i].parse::<u8>() {
                if v <= 3 {
                    let rest = response[i..].trim_start_matches(|c: char| c.is_whitespace() || ".,:;)-/".contains(c));
                    return Ok((v, rest.trim_end().to_string()));
                }
            }
        }
    }
    Err(CoreError::Verdict(response.to_string()))
}

/// What a judge sees for one image-model pair.
pub struct JudgeRequest<'a> {
    pub prompt: &'a JudgePrompt,
    pub image: &'a Image,
    pub heatmap: &'a Heatmap,
    /// Ground-truth class region, used only by the offline judge.
    pub mask: Option<&'a [u8]>,
}

pub trait JudgeClient: Send + Sync {
    /// Raw response text.
    fn judge(&self, request: &JudgeRequest) -> Result<String>;
}

/// Scores by the fraction of heat inside the ground-truth mask:
/// below ¼ → 0, below ½ → 1, below ¾ → 2, otherwise 3.
#[derive(Debug, Clone, Default)]
pub struct MockJudge;

pub fn score_from_mass(mass: f64) -> u8 {
    match mass {
        m if m < 0.25 => 0,
        m if m < 0.5 => 1,
        m if m < 0.75 => 2,
        _ => 3,
    }
}

impl JudgeClient for MockJudge {
    fn judge(&self, request: &JudgeRequest) -> Result<String> {
        let mask = request
            .mask
            .ok_or_else(|| CoreError::Config("the offline judge needs a ground-truth mask".into()))?;
        let mass = request.heatmap.mass_in(mask)?;
        Ok(format!(
            "Score: {}. {:.1}% of the attention mass lies on {} regions.",
            score_from_mass(mass),
            100.0 * mass,
            request.prompt.class_name
        ))
    }
}

impl JudgeClient for HttpEndpoint {
    /// Posts `{"prompt", "image", "heatmap"}` and reads `{"text"}`.
    fn judge(&self, request: &JudgeRequest) -> Result<String> {
        let heat = Image {
            height: request.heatmap.height,
            width: request.heatmap.width,
            channels: 1,
            data: request.heatmap.data.clone(),
        };
        let body = json!({
            "prompt": request.prompt.text,
            "image": B64.encode(request.image.to_png_bytes()?),
            "heatmap": B64.encode(heat.to_png_bytes()?),
        });
        let v = self.post(&body)?;
        v.get("text")
            .and_then(|t| t.as_str())
            .map(str::to_string)
            .ok_or_else(|| CoreError::Response("missing string field \"text\"".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub model: String,
    pub mean: f64,
    pub count: usize,
}

/// Mean score per model, sorted by mean descending then name.
pub fn aggregate_scores(verdicts: &[JudgeVerdict]) -> Result<Vec<ModelScore>> {
    if verdicts.is_empty() {
        return Err(CoreError::Metric("no verdicts to aggregate".into()));
    }
    let mut sums: BTreeMap<&str, (u64, usize)> = BTreeMap::new();
    for v in verdicts {
        let e = sums.entry(v.model.as_str()).or_default();
        e.0 += v.score as u64;
        e.1 += 1;
    }
    let mut out: Vec<ModelScore> = sums
        .into_iter()
        .map(|(m, (s, n))| ModelScore { model: m.to_string(), mean: s as f64 / n as f64, count: n })
        .collect();
    out.sort_by(|a, b| b.mean.total_cmp(&a.mean).then_with(|| a.model.cmp(&b.model)));
    Ok(out)
}

pub fn scores_table(scores: &[ModelScore]) -> String {
    let w = scores.iter().map(|s| s.model.len()).max().unwrap_or(5).max(5);
    let mut s = format!("{:<w$}  {:>6}  {:>5}\n", "model", "mean", "count");
    for m in scores {
        let _ = writeln!(s, "{:<w$}  {:>6.3}  {:>5}", m.model, m.mean, m.count);
    }
    s
}

pub fn write_verdicts(w: &mut impl Write, verdicts: &[JudgeVerdict]) -> std::io::Result<()> {
    for v in verdicts {
        serde_json::to_writer(&mut *w, v)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_verdicts(path: &Path) -> Result<Vec<JudgeVerdict>> {
    let f = std::fs::File::open(path).map_err(|e| CoreError::io(path, e))?;
    let mut out = Vec::new();
    for line in std::io::BufReader::new(f).lines() {
        let line = line.map_err(|e| CoreError::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
