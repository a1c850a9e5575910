use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::decode::{builtin_decoders, DecoderRegistry};
use crate::error::{Error, Result};

/// Labelled image paths discovered under a `<root>/<class>/<file>` tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetIndex {
    pub entries: Vec<(PathBuf, usize)>,
    pub class_names: Vec<String>,
}

impl DatasetIndex {
    /// Builds an index after checking labels and path uniqueness.
    pub fn new(entries: Vec<(PathBuf, usize)>, class_names: Vec<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (path, label) in &entries {
            if *label >= class_names.len() {
                return Err(Error::Dataset(format!(
                    "{} has class {label} but only {} classes exist",
                    path.display(),
                    class_names.len()
                )));
            }
            if !seen.insert(path) {
                return Err(Error::Dataset(format!("{} listed twice", path.display())));
            }
        }
        Ok(DatasetIndex {
            entries,
            class_names,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_names.len()];
        for (_, c) in &self.entries {
            counts[*c] += 1;
        }
        counts
    }
}

pub fn index_dataset(root: &Path) -> Result<DatasetIndex> {
    index_dataset_with(builtin_decoders(), root)
}

/// Every immediate subdirectory with at least one decodable file becomes a
/// class; classes and files are sorted by name.
pub fn index_dataset_with(decoders: &DecoderRegistry, root: &Path) -> Result<DatasetIndex> {
    let mut dirs: Vec<PathBuf> = Vec::new();
    for entry in fs::read_dir(root)? {
        let entry = entry?;
        if entry.file_type()?.is_dir() {
            dirs.push(entry.path());
        }
    }
    dirs.sort();

    let mut class_names = Vec::new();
    let mut entries = Vec::new();
    for dir in dirs {
        let mut files: Vec<PathBuf> = Vec::new();
        for entry in fs::read_dir(&dir)? {
            let entry = entry?;
            let path = entry.path();
            if entry.file_type()?.is_file() && decoders.supports(&path) {
                files.push(path);
            }
        }
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        if files.is_empty() {
            log::warn!("skipping class directory `{name}`: no supported images");
            continue;
        }
        files.sort();
        let label = class_names.len();
        class_names.push(name);
        entries.extend(files.into_iter().map(|p| (p, label)));
    }
    if class_names.len() < 2 {
        return Err(Error::Dataset(format!(
            "{} holds {} non-empty class directories, need at least 2",
            root.display(),
            class_names.len()
        )));
    }
    DatasetIndex::new(entries, class_names)
}

/// Stratified split: per class, `ceil(val_fraction * n)` entries (capped at
/// `n - 1`) go to validation, chosen by a seeded shuffle. Both halves keep
/// index order.
pub fn split(index: &DatasetIndex, val_fraction: f64, seed: u64) -> Result<(DatasetIndex, DatasetIndex)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::arg(format!("validation fraction {val_fraction} not in (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut to_val = vec![false; index.entries.len()];
    for class in 0..index.num_classes() {
        let mut members: Vec<usize> = (0..index.entries.len())
            .filter(|&i| index.entries[i].1 == class)
            .collect();
        let n = members.len();
        if n < 2 {
            return Err(Error::Dataset(format!(
                "class `{}` has {n} sample(s), need at least 2 to split",
                index.class_names[class]
            )));
        }
        let take = ((val_fraction * n as f64).ceil() as usize).min(n - 1);
        members.shuffle(&mut rng);
        for &i in &members[..take] {
            to_val[i] = true;
        }
    }
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (entry, v) in index.entries.iter().zip(to_val) {
        if v {
            val.push(entry.clone());
        } else {
            train.push(entry.clone());
        }
    }
    Ok((
        DatasetIndex {
            entries: train,
            class_names: index.class_names.clone(),
        },
        DatasetIndex {
            entries: val,
            class_names: index.class_names.clone(),
        },
    ))
}

/// One `path<TAB>class name` line per entry.
pub fn write_manifest(index: &DatasetIndex, out: &mut dyn Write) -> Result<()> {
    for (path, label) in &index.entries {
        writeln!(out, "{}\t{}", path.display(), index.class_names[*label])?;
    }
    Ok(())
}
