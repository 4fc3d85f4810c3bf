//! Synthetic training corpus of bare `C1V2C3V4` words and their
//! `C1əC1V2C3V4` reduplicated forms, plus bare `[s]`-initial words.

mod manifest;
mod phone;
mod synth;

use std::path::Path;

pub use manifest::{load_manifest, CorpusItem, CorpusManifest};
pub use phone::{Phone, PhoneClass};
pub use synth::{formants, synth_item, validate_word, Durations, Levels, PhoneSpan, Repetitions, SynthConfig, SynthOutput};

use crate::error::{Error, Result};

/// Per-item seed from the corpus seed and item index (splitmix64).
pub fn item_seed(corpus_seed: u64, index: u64) -> u64 {
    let mut z = corpus_seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The reduplicated form of a CVCV base: the first consonant is copied with a
/// reduced vowel, and stress stays on the base-initial syllable.
pub fn reduplicate(base: &[Phone]) -> Vec<Phone> {
    let mut out = vec![base[0], Phone::Schwa];
    out.extend_from_slice(base);
    out
}

/// One word type of the inventory with its token count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordType {
    pub phones: Vec<Phone>,
    pub reduplicated: bool,
    pub stress_index: usize,
    pub tokens: u32,
}

/// Unique non-`[s]` bases, in enumeration order.
pub fn bases(cfg: &SynthConfig) -> Vec<Vec<Phone>> {
    let mut out = Vec::new();
    for &c1 in &cfg.onsets {
        for &v2 in &cfg.vowels {
            if cfg.exclusions.contains(&(c1, v2)) {
                continue;
            }
            for &c3 in &cfg.medials {
                for &v4 in &cfg.vowels {
                    out.push(vec![c1, v2, c3, v4]);
                }
            }
        }
    }
    out
}

pub fn s_bases(cfg: &SynthConfig) -> Vec<Vec<Phone>> {
    let mut out = Vec::new();
    for &v2 in &cfg.vowels {
        for &c3 in &cfg.medials {
            for &v4 in &cfg.vowels {
                out.push(vec![Phone::S, v2, c3, v4]);
            }
        }
    }
    out
}

/// Word types with token counts, in manifest order.
pub fn inventory(cfg: &SynthConfig) -> Vec<WordType> {
    let reps = &cfg.repetitions;
    let mut out = Vec::new();
    for base in bases(cfg) {
        out.push(WordType {
            reduplicated: true,
            stress_index: 1,
            tokens: reps.redup_reps,
            phones: reduplicate(&base),
        });
        out.push(WordType {
            phones: base,
            reduplicated: false,
            stress_index: 0,
            tokens: reps.base_reps,
        });
    }
    for base in s_bases(cfg) {
        let short = reps.s_short.iter().any(|w| *w == Phone::word(&base));
        out.push(WordType {
            phones: base,
            reduplicated: false,
            stress_index: 0,
            tokens: reps.s_reps - u32::from(short && reps.s_reps > 0),
        });
    }
    out
}

/// Synthesizes every token of the inventory into `out_dir/audio` and writes
/// `out_dir/manifest.csv` plus its `corpus.meta` sidecar.
pub fn build_corpus(cfg: &SynthConfig, out_dir: &Path, seed: u64) -> Result<CorpusManifest> {
    let words = inventory(cfg);
    for w in &words {
        let need = cfg.max_item_len(&w.phones, w.stress_index);
        if need > cfg.slice_len {
            return Err(Error::Config(format!(
                "slice_len {} too short for '{}' (needs up to {need} samples)",
                cfg.slice_len,
                Phone::word(&w.phones)
            )));
        }
    }
    std::fs::create_dir_all(out_dir.join("audio")).map_err(|e| Error::io(out_dir, e))?;
    let mut items = Vec::new();
    for w in &words {
        for token in 0..w.tokens {
            let index = items.len() as u64;
            let item_seed = item_seed(seed, index);
            let out = synth_item(&w.phones, w.stress_index, cfg, item_seed)?;
            let rel = format!("audio/{index:04}_{}_{token}.wav", manifest::ascii_word(&w.phones));
            crate::wav::write_wav(&out_dir.join(&rel), &out.samples, cfg.sample_rate)?;
            items.push(CorpusItem {
                phones: w.phones.clone(),
                reduplicated: w.reduplicated,
                stress_index: w.stress_index,
                audio_path: rel.into(),
                token_index: token,
                seed: item_seed,
            });
        }
    }
    let manifest = CorpusManifest {
        root: out_dir.to_path_buf(),
        preset: cfg.preset.clone(),
        items,
        sample_rate: cfg.sample_rate,
        slice_len: cfg.slice_len,
        seed,
    };
    manifest.save()?;
    Ok(manifest)
}
