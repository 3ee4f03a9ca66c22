//! Tab-separated dataset manifests.
//!
//! One record per line: `path class split provenance source_id`, tab
//! separated. `-` stands for an unassigned split or an absent source.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "valid" | "val" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Provenance {
    Original,
    Superres,
    Diffusion,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Original => "original",
            Provenance::Superres => "superres",
            Provenance::Diffusion => "diffusion",
        }
    }

    pub fn is_generated(self) -> bool {
        self != Provenance::Original
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "original" => Ok(Provenance::Original),
            "superres" => Ok(Provenance::Superres),
            "diffusion" => Ok(Provenance::Diffusion),
            other => Err(format!("unknown provenance {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: String,
    pub class: String,
    /// Index of `class` in the manifest's sorted class list.
    pub class_id: usize,
    pub split: Option<Split>,
    pub provenance: Provenance,
    /// Path of the original entry a generated entry derives from.
    pub source_id: Option<String>,
    /// Caption obtained for this entry, if any. Not serialized in the TSV.
    pub prompt: Option<String>,
}

impl ManifestEntry {
    pub fn original(path: impl Into<String>, class: impl Into<String>) -> Self {
        ManifestEntry {
            path: path.into(),
            class: class.into(),
            class_id: 0,
            split: None,
            provenance: Provenance::Original,
            source_id: None,
            prompt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    /// Sorted distinct class names; `class_id` indexes into this.
    pub classes: Vec<String>,
}

impl Manifest {
    /// Builds a manifest and assigns class ids from the sorted class names.
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let classes: Vec<String> = entries
            .iter()
            .map(|e| e.class.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        Self::with_classes(entries, classes)
    }

    /// Like [`Manifest::new`] with an explicit class vocabulary.
    pub fn with_classes(mut entries: Vec<ManifestEntry>, classes: Vec<String>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (i, e) in entries.iter_mut().enumerate() {
            e.class_id = classes
                .iter()
                .position(|c| *c == e.class)
                .ok_or_else(|| CoreError::Manifest { line: i + 1, detail: format!("unknown class {:?}", e.class) })?;
            if !seen.insert(e.path.clone()) {
                return Err(CoreError::Manifest { line: i + 1, detail: format!("duplicate path {}", e.path) });
            }
            if e.provenance.is_generated() != e.source_id.is_some() {
                return Err(CoreError::Manifest {
                    line: i + 1,
                    detail: format!("{} entry {} must {}have a source", e.provenance, e.path, if e.provenance.is_generated() { "" } else { "not " }),
                });
            }
        }
        Ok(Manifest { entries, classes })
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == Some(split))
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }

    /// Per-class counts for `split`, indexed by class id.
    pub fn class_counts(&self, split: Split) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for e in self.split(split) {
            counts[e.class_id] += 1;
        }
        counts
    }

    pub fn get(&self, path: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.path == path)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                e.path,
                e.class,
                e.split.map_or("-", Split::as_str),
                e.provenance,
                e.source_id.as_deref().unwrap_or("-"),
            ));
        }
        out
    }

    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |detail: String| CoreError::Manifest { line: i + 1, detail };
            let fields: Vec<&str> = line.split('\t').collect();
            let [path, class, split, prov, source] = fields[..] else {
                return Err(bad(format!("expected 5 tab-separated fields, got {}", fields.len())));
            };
            if path.is_empty() || class.is_empty() {
                return Err(bad("empty path or class".into()));
            }
            entries.push(ManifestEntry {
                path: path.to_string(),
                class: class.to_string(),
                class_id: 0,
                split: if split == "-" { None } else { Some(split.parse().map_err(bad)?) },
                provenance: prov.parse().map_err(bad)?,
                source_id: if source == "-" || source.is_empty() { None } else { Some(source.to_string()) },
                prompt: None,
            });
        }
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        Self::parse_tsv(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv()).map_err(|e| CoreError::io(path, e))
    }
}
