use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::phone::Phone;
use crate::error::{Error, Result};
use crate::kv::KvFile;

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const META_FILE: &str = "corpus.meta";
const HEADER: [&str; 6] = ["path", "phones", "reduplicated", "stress_index", "token_index", "seed"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusItem {
    pub phones: Vec<Phone>,
    pub reduplicated: bool,
    /// Syllable ordinal carrying main stress.
    pub stress_index: usize,
    /// Relative to the manifest directory.
    pub audio_path: PathBuf,
    pub token_index: u32,
    pub seed: u64,
}

impl CorpusItem {
    pub fn word(&self) -> String {
        Phone::word(&self.phones)
    }

    pub fn s_initial(&self) -> bool {
        self.phones.first() == Some(&Phone::S)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    /// Directory holding `manifest.csv`; audio paths resolve against it.
    pub root: PathBuf,
    pub preset: String,
    pub items: Vec<CorpusItem>,
    pub sample_rate: u32,
    pub slice_len: usize,
    pub seed: u64,
}

pub(crate) fn ascii_word(phones: &[Phone]) -> String {
    phones
        .iter()
        .map(|p| if *p == Phone::Schwa { "@" } else { p.symbol() })
        .collect()
}

impl CorpusManifest {
    pub fn audio_path(&self, item: &CorpusItem) -> PathBuf {
        self.root.join(&item.audio_path)
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join(MANIFEST_FILE)
    }

    pub fn save(&self) -> Result<()> {
        let path = self.manifest_path();
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(HEADER)?;
        for it in &self.items {
            let phones: Vec<&str> = it.phones.iter().map(|p| p.symbol()).collect();
            w.write_record([
                it.audio_path.to_string_lossy().as_ref(),
                &phones.join(" "),
                if it.reduplicated { "1" } else { "0" },
                &it.stress_index.to_string(),
                &it.token_index.to_string(),
                &it.seed.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        let mut meta = KvFile::default();
        meta.set("preset", &self.preset);
        meta.set("sample_rate", self.sample_rate);
        meta.set("slice_len", self.slice_len);
        meta.set("seed", self.seed);
        let meta_path = self.root.join(META_FILE);
        std::fs::write(&meta_path, meta.render()).map_err(|e| Error::io(&meta_path, e))
    }

    /// Reads every audio file and checks it is mono at the corpus rate with
    /// exactly `slice_len` samples.
    pub fn verify_audio(&self) -> Result<()> {
        for it in &self.items {
            let path = self.audio_path(it);
            let (samples, sr) = crate::wav::read_wav(&path)?;
            if sr != self.sample_rate || samples.len() != self.slice_len {
                return Err(Error::invalid(format!(
                    "{}: {} samples at {sr} Hz, expected {} at {} Hz",
                    path.display(),
                    samples.len(),
                    self.slice_len,
                    self.sample_rate
                )));
            }
        }
        Ok(())
    }

    pub fn load_audio(&self, item: &CorpusItem) -> Result<Vec<f32>> {
        Ok(crate::wav::read_wav(&self.audio_path(item))?.0)
    }
}

fn field<'a>(rec: &'a csv::StringRecord, idx: usize, line: u64, name: &str) -> Result<&'a str> {
    rec.get(idx).ok_or_else(|| Error::Parse {
        location: format!("{MANIFEST_FILE}:{line}"),
        message: format!("missing field '{name}'"),
    })
}

fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, line: u64, name: &str) -> Result<T> {
    let raw = field(rec, idx, line, name)?;
    raw.parse().map_err(|_| Error::Parse {
        location: format!("{MANIFEST_FILE}:{line}"),
        message: format!("bad value '{raw}' for field '{name}'"),
    })
}

/// Loads `manifest.csv` (path to the file or its directory) and its sidecar,
/// and checks that every referenced audio file exists.
pub fn load_manifest(path: &Path) -> Result<CorpusManifest> {
    let (root, csv_path) = if path.is_dir() {
        (path.to_path_buf(), path.join(MANIFEST_FILE))
    } else {
        (
            path.parent().map(Path::to_path_buf).unwrap_or_default(),
            path.to_path_buf(),
        )
    };
    if !csv_path.exists() {
        return Err(Error::MissingFiles(vec![csv_path]));
    }
    let meta = KvFile::read(&root.join(META_FILE))?;
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_path(&csv_path)?;
    let header = reader.headers()?.clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols != HEADER {
        return Err(Error::Parse {
            location: format!("{MANIFEST_FILE}:1"),
            message: format!("expected header '{}', found '{}'", HEADER.join(","), cols.join(",")),
        });
    }
    let mut items = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let phones = field(&rec, 1, line, "phones")?
            .split_whitespace()
            .map(|s| s.parse::<Phone>())
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Parse {
                location: format!("{MANIFEST_FILE}:{line}"),
                message: e.to_string(),
            })?;
        let redup = match field(&rec, 2, line, "reduplicated")? {
            "1" | "true" => true,
            "0" | "false" => false,
            other => {
                return Err(Error::Parse {
                    location: format!("{MANIFEST_FILE}:{line}"),
                    message: format!("bad value '{other}' for field 'reduplicated'"),
                })
            }
        };
        items.push(CorpusItem {
            audio_path: PathBuf::from(field(&rec, 0, line, "path")?),
            phones,
            reduplicated: redup,
            stress_index: parse_field(&rec, 3, line, "stress_index")?,
            token_index: parse_field(&rec, 4, line, "token_index")?,
            seed: parse_field(&rec, 5, line, "seed")?,
        });
    }
    let manifest = CorpusManifest {
        root,
        preset: meta.get_str("preset").unwrap_or("custom").to_string(),
        items,
        sample_rate: meta.require("sample_rate")?,
        slice_len: meta.require("slice_len")?,
        seed: meta.require("seed")?,
    };
    let missing: Vec<PathBuf> = manifest
        .items
        .iter()
        .map(|it| manifest.audio_path(it))
        .filter(|p| !p.exists())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingFiles(missing));
    }
    Ok(manifest)
}
