//! Model checkpoints in the tensor dump format.
//!
//! Tensors are stored as `param.<name>`, `buffer.<name>` and, when an
//! optimizer is saved, `optim.m.<name>` / `optim.v.<name>`. Metadata holds
//! the model config as one-line JSON plus epoch, seed and optimizer step.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use dvit_nn::{named_buffers, named_params, AdamW, Module};
use dvit_tensor::dump::{read_dump, write_dump, DType};
use dvit_tensor::Tensor;

use crate::error::{CoreError, Result};
use crate::model::{Dvit, ModelConfig};

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Dvit,
    pub epoch: usize,
    pub seed: u64,
    /// Optimizer step count and moment tensors (`m.<name>`, `v.<name>`).
    pub optimizer: Option<(u64, Vec<(String, Tensor)>)>,
    /// Metadata entries beyond the standard ones.
    pub extra: Vec<(String, String)>,
}

impl Checkpoint {
    pub fn restore_optimizer(&self, opt: &mut AdamW) -> Result<()> {
        match &self.optimizer {
            Some((step, state)) => Ok(opt.import_state(*step, state)?),
            None => Err(CoreError::Checkpoint("checkpoint carries no optimizer state".into())),
        }
    }

    pub fn extra(&self, key: &str) -> Option<&str> {
        self.extra.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

const RESERVED: [&str; 4] = ["config", "epoch", "seed", "optim_step"];

pub fn save_checkpoint(
    path: &Path,
    model: &Dvit,
    epoch: usize,
    seed: u64,
    optimizer: Option<&AdamW>,
    extra: &[(&str, &str)],
) -> Result<()> {
    let config = serde_json::to_string(&model.cfg)?;
    let (epoch_s, seed_s) = (epoch.to_string(), seed.to_string());
    let step_s = optimizer.map(|o| o.step_count().to_string());
    let mut meta: Vec<(&str, &str)> = vec![("config", &config), ("epoch", &epoch_s), ("seed", &seed_s)];
    if let Some(s) = &step_s {
        meta.push(("optim_step", s));
    }
    for (k, v) in extra {
        if RESERVED.contains(k) {
            return Err(CoreError::Checkpoint(format!("metadata key {k} is reserved")));
        }
        meta.push((k, v));
    }
    let mut owned: Vec<(String, Tensor)> = Vec::new();
    owned.extend(named_params(model).into_iter().map(|(n, t)| (format!("param.{n}"), t)));
    owned.extend(named_buffers(model).into_iter().map(|(n, t)| (format!("buffer.{n}"), t)));
    if let Some(opt) = optimizer {
        owned.extend(opt.export_state(model)?.into_iter().map(|(n, t)| (format!("optim.{n}"), t)));
    }
    let tensors: Vec<(&str, &Tensor)> = owned.iter().map(|(n, t)| (n.as_str(), t)).collect();
    let tmp = path.with_extension("tmp");
    let file = File::create(&tmp).map_err(|e| CoreError::io(&tmp, e))?;
    let mut w = BufWriter::new(file);
    write_dump(&mut w, &meta, &tensors, DType::F64)?;
    w.flush().map_err(|e| CoreError::io(&tmp, e))?;
    drop(w);
    std::fs::rename(&tmp, path).map_err(|e| CoreError::io(path, e))?;
    Ok(())
}

/// Loads a checkpoint, rebuilding the model from its stored config.
///
/// If `expected` is given the stored config must equal it.
pub fn load_checkpoint(path: &Path, expected: Option<&ModelConfig>) -> Result<Checkpoint> {
    let file = File::open(path).map_err(|e| CoreError::io(path, e))?;
    let dump = read_dump(BufReader::new(file))?;
    let config_json = dump
        .meta("config")
        .ok_or_else(|| CoreError::Checkpoint("missing config metadata".into()))?;
    let cfg: ModelConfig = serde_json::from_str(config_json)
        .map_err(|e| CoreError::Checkpoint(format!("bad config metadata: {e}")))?;
    if let Some(exp) = expected {
        if *exp != cfg {
            return Err(CoreError::ConfigMismatch(format!(
                "stored {} vs expected {}",
                config_json,
                serde_json::to_string(exp)?
            )));
        }
    }
    let parse = |key: &str| -> Result<u64> {
        dump.meta(key)
            .ok_or_else(|| CoreError::Checkpoint(format!("missing {key} metadata")))?
            .parse()
            .map_err(|_| CoreError::Checkpoint(format!("bad {key} metadata")))
    };
    let epoch = parse("epoch")? as usize;
    let seed = parse("seed")?;
    let mut model = Dvit::new(&cfg, 0)?;
    let mut params: BTreeMap<&str, &Tensor> = BTreeMap::new();
    let mut buffers: BTreeMap<&str, &Tensor> = BTreeMap::new();
    let mut optim = Vec::new();
    for (name, t) in &dump.tensors {
        if let Some(n) = name.strip_prefix("param.") {
            params.insert(n, t);
        } else if let Some(n) = name.strip_prefix("buffer.") {
            buffers.insert(n, t);
        } else if let Some(n) = name.strip_prefix("optim.") {
            optim.push((n.to_string(), t.clone()));
        } else {
            return Err(CoreError::Checkpoint(format!("unexpected tensor {name}")));
        }
    }
    let mut failure: Option<CoreError> = None;
    let mut used = 0;
    model.visit_mut("", &mut |name, slot| {
        if failure.is_some() {
            return;
        }
        match params.get(name) {
            None => failure = Some(CoreError::MissingParam(name.to_string())),
            Some(t) if t.shape() != slot.shape() => {
                failure = Some(CoreError::Checkpoint(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    t.shape(),
                    slot.shape()
                )))
            }
            Some(t) => {
                used += 1;
                *slot = t.detach().requires_grad(true);
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    if used != params.len() {
        let known: Vec<String> = named_params(&model).into_iter().map(|(n, _)| n).collect();
        let extra = params.keys().find(|k| !known.iter().any(|n| n == *k)).copied().unwrap_or("?");
        return Err(CoreError::Checkpoint(format!("unexpected parameter {extra}")));
    }
    model.visit_buffers_mut("", &mut |name, slot| {
        if failure.is_some() {
            return;
        }
        match buffers.get(name) {
            None => failure = Some(CoreError::MissingParam(name.to_string())),
            Some(t) if t.shape() != slot.shape() => {
                failure = Some(CoreError::Checkpoint(format!("buffer {name} has the wrong shape")))
            }
            Some(t) => *slot = t.detach(),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let optimizer = match dump.meta("optim_step") {
        Some(_) => Some((parse("optim_step")?, optim)),
        None if optim.is_empty() => None,
        None => return Err(CoreError::Checkpoint("optimizer tensors without optim_step".into())),
    };
    let extra = dump
        .meta
        .iter()
        .filter(|(k, _)| !RESERVED.contains(&k.as_str()))
        .cloned()
        .collect();
    Ok(Checkpoint {
        model,
        epoch,
        seed,
        optimizer,
        extra,
    })
}
