//! WebAssembly bindings for the browser demo in `www/`.

use redupgan::annotate::{annotate, AnnotatorConfig};
use redupgan::corpus::{reduplicate, synth_item, Phone, SynthConfig};
use redupgan::stats::{binom_exact, fisher_exact, ContingencyTable};
use serde_json::json;
use wasm_bindgen::prelude::*;

pub const SAMPLE_RATE: u32 = 16_000;

/// Synthesizes a CVCV base (`pali`, `@` for schwa), optionally with a
/// copied CV syllable in front, as a 16 kHz waveform.
#[wasm_bindgen]
pub fn synthesize(word: &str, reduplicated: bool, seed: u32) -> Result<Vec<f32>, String> {
    let base = Phone::parse_word(word).map_err(|e| e.to_string())?;
    if base.is_empty() {
        return Err("empty word".into());
    }
    let (phones, stress) = if reduplicated {
        if base[0] == Phone::S {
            return Err("[s]-initial bases are never reduplicated in training".into());
        }
        (reduplicate(&base), 1)
    } else {
        (base, 0)
    };
    let out = synth_item(&phones, stress, &SynthConfig::paper(), u64::from(seed)).map_err(|e| e.to_string())?;
    Ok(out.samples)
}

/// Annotation of a 16 kHz waveform as JSON.
#[wasm_bindgen]
pub fn annotate_wave(samples: &[f32]) -> String {
    let a = annotate(samples, SAMPLE_RATE, &AnnotatorConfig::default());
    json!({
        "reduplicated": a.reduplicated,
        "s_present": a.s_present,
        "s_initial": a.s_initial,
        "syllables": a.syllable_count,
        "confidence_redup": a.conf_redup,
        "confidence_s": a.conf_s,
    })
    .to_string()
}

/// Fisher exact test on `[[a, b], [c, d]]` as JSON.
#[wasm_bindgen]
pub fn fisher_test(a: u32, b: u32, c: u32, d: u32) -> Result<String, String> {
    let t = ContingencyTable::new(a.into(), b.into(), c.into(), d.into());
    let r = fisher_exact(&t).map_err(|e| e.to_string())?;
    Ok(json!({
        "odds_ratio": finite_or_str(r.odds_ratio_cmle),
        "sample_odds_ratio": finite_or_str(r.sample_or),
        "p_value": r.p_two_sided,
    })
    .to_string())
}

/// Exact binomial test with a 95% Clopper-Pearson interval as JSON.
#[wasm_bindgen]
pub fn binomial_test(successes: u32, trials: u32, p0: f64) -> Result<String, String> {
    let r = binom_exact(successes.into(), trials.into(), p0).map_err(|e| e.to_string())?;
    Ok(json!({
        "estimate": r.estimate,
        "p_value": r.p_two_sided,
        "ci95": [r.ci_lower, r.ci_upper],
    })
    .to_string())
}

fn finite_or_str(v: f64) -> serde_json::Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(v.to_string())
    }
}
