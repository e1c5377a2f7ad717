//! Planted-motif synthetic bags, the TFB1 bag file format and datasets
//! described by a manifest.

mod synth;
mod tfb;

pub use synth::{generate_bag, generate_indexed, motif_directions, MotifPlacement, SynthConfig};
pub use tfb::{
    checksum, decode_bag, encode_bag, encoded_len, read_bag, write_bag, HEADER_LEN, MAGIC, VERSION,
};

use std::fmt;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hypergraph::TileBag;

pub const MANIFEST_NAME: &str = "manifest.csv";
pub const BAG_EXTENSION: &str = "tfb";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Split::ALL.into_iter().find(|v| v.name() == s)
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub file: String,
    pub label: usize,
    pub split: Split,
}

/// Parses `file,label,split` lines. Blank lines are skipped.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = |why: &str| Error::Data(format!("manifest line {}: {why}: {line:?}", i + 1));
        let [file, label, split] = fields[..] else {
            return Err(bad("expected file,label,split"));
        };
        if file.is_empty() {
            return Err(bad("empty file name"));
        }
        let label = label.parse().map_err(|_| bad("bad label"))?;
        let split = Split::parse(split).ok_or_else(|| bad("split must be train, val or test"))?;
        out.push(ManifestEntry {
            file: file.to_string(),
            label,
            split,
        });
    }
    Ok(out)
}

pub fn format_manifest(entries: &[ManifestEntry]) -> String {
    entries
        .iter()
        .map(|e| format!("{},{},{}\n", e.file, e.label, e.split))
        .collect()
}

/// Bags grouped by split, in manifest order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub train: Vec<TileBag>,
    pub val: Vec<TileBag>,
    pub test: Vec<TileBag>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[TileBag] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    fn split_mut(&mut self, split: Split) -> &mut Vec<TileBag> {
        match split {
            Split::Train => &mut self.train,
            Split::Val => &mut self.val,
            Split::Test => &mut self.test,
        }
    }

    /// Largest label + 1 over all splits.
    pub fn n_classes(&self) -> usize {
        Split::ALL
            .iter()
            .flat_map(|&s| self.split(s))
            .map(|b| b.label + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn feature_dim(&self) -> Option<usize> {
        Split::ALL
            .iter()
            .flat_map(|&s| self.split(s))
            .map(TileBag::dim)
            .next()
    }

    /// Loads every bag listed in `dir/manifest.csv`. Labels in the manifest
    /// must agree with the files.
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST_NAME);
        let text =
            std::fs::read_to_string(&manifest_path).map_err(|e| Error::file(&manifest_path, e))?;
        let entries = parse_manifest(&text)?;
        let bags: Vec<Result<TileBag>> = entries
            .par_iter()
            .map(|e| {
                let bag = read_bag(&dir.join(&e.file))?;
                if bag.label != e.label {
                    return Err(Error::Data(format!(
                        "{}: manifest label {} but file label {}",
                        e.file, e.label, bag.label
                    )));
                }
                Ok(bag)
            })
            .collect();
        let mut out = Dataset::default();
        for (e, bag) in entries.iter().zip(bags) {
            out.split_mut(e.split).push(bag?);
        }
        Ok(out)
    }

    /// Writes `<id>.tfb` per bag plus the manifest.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        let mut entries = Vec::new();
        for split in Split::ALL {
            for bag in self.split(split) {
                let file = format!("{}.{BAG_EXTENSION}", bag.id);
                write_bag(&dir.join(&file), bag)?;
                entries.push(ManifestEntry {
                    file,
                    label: bag.label,
                    split,
                });
            }
        }
        let path = dir.join(MANIFEST_NAME);
        std::fs::write(&path, format_manifest(&entries)).map_err(|e| Error::file(&path, e))
    }

    /// Consecutive bag indices of the `cfg.seed` stream: first the training
    /// bags, then validation, then test.
    pub fn synthesize(
        cfg: &SynthConfig,
        n_train: usize,
        n_val: usize,
        n_test: usize,
    ) -> Result<Self> {
        cfg.validate()?;
        let total = n_train + n_val + n_test;
        let bags: Vec<TileBag> = (0..total)
            .into_par_iter()
            .map(|i| generate_indexed(cfg, i))
            .collect::<Result<_>>()?;
        let mut it = bags.into_iter();
        Ok(Dataset {
            train: it.by_ref().take(n_train).collect(),
            val: it.by_ref().take(n_val).collect(),
            test: it.collect(),
        })
    }
}
