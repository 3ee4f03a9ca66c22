//! Flat JSON run configuration: defaults, then a file, then `--set` overrides.

use std::path::Path;
use std::time::Duration;

use dvit_core::data::endpoint::RetryPolicy;
use dvit_core::data::image::NormalizationSpec;
use dvit_core::model::ModelConfig;
use dvit_core::train::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    /// Architecture preset: "paper" or "tiny".
    pub model: String,
    /// Overrides the preset's input size when set.
    pub input_size: Option<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub eval_every: usize,
    pub norm_mean: [f64; 3],
    pub norm_std: [f64; 3],
    pub split_ratios: [f64; 3],
    pub resplit_ratios: [f64; 2],
    pub superres: bool,
    pub diffusion: bool,
    pub diffusion_per_image: usize,
    pub canny_low: f64,
    pub canny_high: f64,
    pub max_in_flight: usize,
    pub retry_attempts: u32,
    pub retry_delay_ms: u64,
    pub endpoint_timeout_secs: u64,
    pub caption_url: Option<String>,
    pub generation_url: Option<String>,
    pub superres_url: Option<String>,
    pub judge_url: Option<String>,
    pub gradcam_layer: String,
    pub kid_subsets: usize,
    pub kid_subset_size: Option<usize>,
    pub kid_degree: i32,
    pub seed: Option<u64>,
}

impl Default for AppConfig {
    fn default() -> Self {
        let norm = NormalizationSpec::default();
        let train = TrainConfig::default();
        AppConfig {
            model: "paper".into(),
            input_size: None,
            epochs: train.epochs,
            batch_size: train.batch_size,
            lr: train.lr,
            weight_decay: train.weight_decay,
            eval_every: train.eval_every,
            norm_mean: norm.mean,
            norm_std: norm.std,
            split_ratios: [0.8, 0.1, 0.1],
            resplit_ratios: [0.8, 0.2],
            superres: true,
            diffusion: true,
            diffusion_per_image: 2,
            canny_low: 100.0,
            canny_high: 150.0,
            max_in_flight: 4,
            retry_attempts: 3,
            retry_delay_ms: 500,
            endpoint_timeout_secs: 120,
            caption_url: None,
            generation_url: None,
            superres_url: None,
            judge_url: None,
            gradcam_layer: dvit_core::explain::DEFAULT_LAYER.into(),
            kid_subsets: 100,
            kid_subset_size: None,
            kid_degree: 3,
            seed: None,
        }
    }
}

/// Token environment variables for each endpoint.
pub const CAPTION_TOKEN_ENV: &str = "DVIT_CAPTION_TOKEN";
pub const GENERATION_TOKEN_ENV: &str = "DVIT_GENERATION_TOKEN";
pub const SUPERRES_TOKEN_ENV: &str = "DVIT_SUPERRES_TOKEN";
pub const JUDGE_TOKEN_ENV: &str = "DVIT_JUDGE_TOKEN";

impl AppConfig {
    /// Merges `file` (if any) and `overrides` over the defaults.
    pub fn resolve(file: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut merged = serde_json::to_value(AppConfig::default()).expect("config serializes");
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let v: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("config file {}: {e}", path.display())))?;
            let Value::Object(obj) = v else {
                return Err(CliError::Usage(format!("config file {} must hold a JSON object", path.display())));
            };
            merge_object(merged.as_object_mut().expect("object"), obj, "")?;
        }
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("override {o:?} must look like key=value")))?;
            set_path(&mut merged, key.trim(), parse_value(raw))?;
        }
        let cfg: AppConfig = serde_json::from_value(merged).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !["paper", "tiny"].contains(&self.model.as_str()) {
            return Err(CliError::Usage(format!("config: model must be \"paper\" or \"tiny\", got {:?}", self.model)));
        }
        Ok(())
    }

    pub fn model_config(&self, num_classes: usize) -> ModelConfig {
        let base = if self.model == "tiny" { ModelConfig::tiny(num_classes) } else { ModelConfig::paper(num_classes) };
        ModelConfig { input_size: self.input_size.unwrap_or(base.input_size), ..base }
    }

    pub fn normalization(&self, size: usize) -> NormalizationSpec {
        NormalizationSpec { mean: self.norm_mean, std: self.norm_std, size }
    }

    pub fn train_config(&self, num_classes: usize, seed: u64, checkpoint_dir: Option<&Path>) -> TrainConfig {
        let model = self.model_config(num_classes);
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            weight_decay: self.weight_decay,
            seed,
            eval_every: self.eval_every,
            checkpoint_dir: checkpoint_dir.map(Path::to_path_buf),
            normalization: self.normalization(model.input_size),
            model,
        }
    }

    pub fn retry(&self) -> RetryPolicy {
        RetryPolicy { attempts: self.retry_attempts, base_delay: Duration::from_millis(self.retry_delay_ms) }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.endpoint_timeout_secs)
    }
}

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn merge_object(base: &mut Map<String, Value>, over: Map<String, Value>, prefix: &str) -> Result<(), CliError> {
    for (k, v) in over {
        let full = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match base.get_mut(&k) {
            None => return Err(CliError::Usage(format!("unknown config key {full:?}"))),
            Some(Value::Object(inner)) if v.is_object() => {
                let Value::Object(v) = v else { unreachable!() };
                merge_object(inner, v, &full)?;
            }
            Some(slot) => *slot = v,
        }
    }
    Ok(())
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    let unknown = || CliError::Usage(format!("unknown config key {key:?}"));
    let mut cur = root;
    for part in key.split('.') {
        cur = match cur {
            Value::Object(m) => m.get_mut(part).ok_or_else(unknown)?,
            Value::Array(a) => part.parse::<usize>().ok().and_then(|i| a.get_mut(i)).ok_or_else(unknown)?,
            _ => return Err(unknown()),
        };
    }
    *cur = value;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_parse_json_then_fall_back_to_strings() {
        let c = AppConfig::resolve(None, &["epochs=3".into(), "model=tiny".into(), "norm_mean.1=0.5".into()]).unwrap();
        assert_eq!((c.epochs, c.model.as_str(), c.norm_mean[1]), (3, "tiny", 0.5));
        let c = AppConfig::resolve(None, &["caption_url=http://localhost:9000/caption".into()]).unwrap();
        assert_eq!(c.caption_url.as_deref(), Some("http://localhost:9000/caption"));
    }

    #[test]
    fn bad_overrides_are_usage_errors() {
        for bad in ["nope=1", "epochs", "epochs=many", "norm_mean.7=1", "model=huge"] {
            assert!(matches!(AppConfig::resolve(None, &[bad.into()]), Err(CliError::Usage(_))), "{bad}");
        }
    }
}
