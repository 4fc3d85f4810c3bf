//! Automatic acoustic annotation: syllable nuclei, reduplication (a copied
//! onset before the stressed syllable) and `[s]` detection.

mod features;
mod syllables;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use features::{extract_features, frame_count, AcousticFeatures, N_BANDS};
pub use syllables::{count_syllables, nuclei, Nucleus};

use crate::corpus::CorpusManifest;
use crate::error::{Error, Result};
use crate::kv::KvFile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorConfig {
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub high_band_hz: f64,
    /// High-band energy ratio above which a frame counts as sibilant.
    pub sibilance_ratio: f64,
    /// Nucleus threshold as a fraction of the envelope maximum.
    pub peak_threshold: f64,
    /// Onset spectral correlation needed to call two syllables copies.
    pub similarity: f64,
    pub dip_ratio: f64,
    pub min_nucleus_ms: f64,
    pub sibilant_run_ms: f64,
    /// Frames below this fraction of the loudest frame are silent.
    pub silence_floor: f64,
    pub voiced_high_ratio_max: f64,
    pub voiced_zcr_max: f64,
    /// Longest consonant onset considered before a nucleus.
    pub onset_window_ms: f64,
}

impl Default for AnnotatorConfig {
    fn default() -> Self {
        Self {
            frame_ms: 10.0,
            hop_ms: 5.0,
            high_band_hz: 4000.0,
            sibilance_ratio: 0.6,
            peak_threshold: 0.25,
            similarity: 0.5,
            dip_ratio: 0.6,
            min_nucleus_ms: 12.0,
            sibilant_run_ms: 30.0,
            silence_floor: 0.02,
            voiced_high_ratio_max: 0.3,
            voiced_zcr_max: 0.3,
            onset_window_ms: 80.0,
        }
    }
}

const KEYS: [&str; 13] = [
    "frame_ms",
    "hop_ms",
    "high_band_hz",
    "sibilance_ratio",
    "peak_threshold",
    "similarity",
    "dip_ratio",
    "min_nucleus_ms",
    "sibilant_run_ms",
    "silence_floor",
    "voiced_high_ratio_max",
    "voiced_zcr_max",
    "onset_window_ms",
];

impl AnnotatorConfig {
    fn fields_mut(&mut self) -> [&mut f64; 13] {
        [
            &mut self.frame_ms,
            &mut self.hop_ms,
            &mut self.high_band_hz,
            &mut self.sibilance_ratio,
            &mut self.peak_threshold,
            &mut self.similarity,
            &mut self.dip_ratio,
            &mut self.min_nucleus_ms,
            &mut self.sibilant_run_ms,
            &mut self.silence_floor,
            &mut self.voiced_high_ratio_max,
            &mut self.voiced_zcr_max,
            &mut self.onset_window_ms,
        ]
    }

    /// Overrides defaults with the keys present in `kv`.
    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        kv.reject_unknown(&KEYS)?;
        let mut cfg = Self::default();
        for (key, slot) in KEYS.iter().zip(cfg.fields_mut()) {
            if let Some(v) = kv.get::<f64>(key)? {
                *slot = v;
            }
        }
        Ok(cfg)
    }

    pub fn to_kv(&self) -> KvFile {
        let mut copy = self.clone();
        let mut kv = KvFile::default();
        for (key, slot) in KEYS.iter().zip(copy.fields_mut()) {
            kv.set(key, *slot);
        }
        kv
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_kv(&KvFile::read(path)?)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub reduplicated: bool,
    pub s_present: bool,
    pub s_initial: bool,
    pub syllable_count: usize,
    pub conf_redup: f64,
    pub conf_s: f64,
}

/// Energy-weighted log band spectrum of frames `range`, or `None` if silent.
fn log_spectrum(f: &AcousticFeatures, range: std::ops::Range<usize>) -> Option<[f64; N_BANDS]> {
    let mut acc = [0.0; N_BANDS];
    for fr in range {
        for (a, b) in acc.iter_mut().zip(&f.bands[fr]) {
            *a += b;
        }
    }
    let total: f64 = acc.iter().sum();
    if total <= 1e-12 {
        return None;
    }
    let floor = 1e-4 * total;
    Some(acc.map(|v| (v + floor).log10()))
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Frames forming the consonantal onset of nucleus `i`.
fn onset_range(f: &AcousticFeatures, nuc: &[Nucleus], i: usize, cfg: &AnnotatorConfig) -> std::ops::Range<usize> {
    let env = f.low_band_envelope();
    let mut hi = nuc[i].start;
    // drop the vowel's own rise
    while hi > 0 && env[hi - 1] > 0.3 * env[nuc[i].peak] {
        hi -= 1;
    }
    let lo = if i == 0 {
        0
    } else {
        // start at the valley so the previous vowel's decay is excluded
        let from = (nuc[i - 1].end + 1).min(hi);
        (from..hi)
            .min_by(|&a, &b| env[a].partial_cmp(&env[b]).unwrap())
            .unwrap_or(hi)
    };
    let window = f.frames_for_ms(cfg.onset_window_ms);
    hi.saturating_sub(window).max(lo)..hi
}

/// Spectral correlation between the onsets of nuclei `a` and `b`.
pub fn onset_similarity(f: &AcousticFeatures, nuc: &[Nucleus], a: usize, b: usize, cfg: &AnnotatorConfig) -> f64 {
    match (
        log_spectrum(f, onset_range(f, nuc, a, cfg)),
        log_spectrum(f, onset_range(f, nuc, b, cfg)),
    ) {
        (Some(x), Some(y)) => correlation(&x, &y),
        _ => 0.0,
    }
}

fn stressed_index(nuc: &[Nucleus]) -> usize {
    let mut best = 0;
    for (i, n) in nuc.iter().enumerate() {
        if n.peak_value() > nuc[best].peak_value() {
            best = i;
        }
    }
    best
}

/// Reduplication verdict from precomputed features.
pub fn reduplication_from(f: &AcousticFeatures, nuc: &[Nucleus], cfg: &AnnotatorConfig) -> (bool, f64) {
    if nuc.is_empty() {
        return (false, 0.0);
    }
    if nuc.len() < 3 {
        let conf = if nuc.len() == 2 { 0.8 } else { 0.6 };
        return (false, conf);
    }
    let stressed = stressed_index(nuc);
    if stressed == 0 {
        return (false, 0.6);
    }
    let sim = onset_similarity(f, nuc, stressed - 1, stressed, cfg);
    let margin = if sim >= cfg.similarity {
        (sim - cfg.similarity) / (1.0 - cfg.similarity).max(1e-9)
    } else {
        (cfg.similarity - sim) / (cfg.similarity + 1.0)
    };
    (sim >= cfg.similarity, (0.5 + 0.5 * margin).clamp(0.0, 1.0))
}

/// Longest run of sibilant frames: `(start, len)`.
fn sibilant_runs(f: &AcousticFeatures, cfg: &AnnotatorConfig) -> Vec<(usize, usize)> {
    let max_e = f.energy.iter().cloned().fold(0.0, f64::max);
    let floor = (cfg.silence_floor * max_e).max(1e-4);
    let mut runs = Vec::new();
    let mut i = 0;
    while i < f.len() {
        let sib = |k: usize| f.high_ratio[k] > cfg.sibilance_ratio && !f.voiced[k] && f.energy[k] > floor;
        if !sib(i) {
            i += 1;
            continue;
        }
        let start = i;
        while i < f.len() && sib(i) {
            i += 1;
        }
        runs.push((start, i - start));
    }
    runs
}

/// `[s]` verdicts `(anywhere, word-initial, confidence)`.
pub fn sibilance_from(f: &AcousticFeatures, nuc: &[Nucleus], cfg: &AnnotatorConfig) -> (bool, bool, f64) {
    let need = f.frames_for_ms(cfg.sibilant_run_ms);
    let runs: Vec<_> = sibilant_runs(f, cfg)
        .into_iter()
        .filter(|&(_, len)| len >= need)
        .collect();
    let first_nucleus = nuc.first().map(|n| n.start).unwrap_or(usize::MAX);
    let present = !runs.is_empty();
    let initial = runs.iter().any(|&(start, _)| start < first_nucleus);
    let longest = runs.iter().map(|r| r.1).max().unwrap_or(0);
    let conf = if present {
        (0.5 + 0.5 * (longest as f64 / (2.0 * need as f64)).min(1.0)).min(1.0)
    } else if f.energy.iter().all(|&e| e == 0.0) {
        0.0
    } else {
        0.8
    };
    (present, initial, conf)
}

pub fn annotate_features(f: &AcousticFeatures, cfg: &AnnotatorConfig) -> Annotation {
    let nuc = nuclei(f, cfg);
    let (reduplicated, conf_redup) = reduplication_from(f, &nuc, cfg);
    let (s_present, s_initial, conf_s) = sibilance_from(f, &nuc, cfg);
    Annotation {
        reduplicated,
        s_present,
        s_initial,
        syllable_count: nuc.len(),
        conf_redup,
        conf_s,
    }
}

/// Full annotation of a waveform.
pub fn annotate(w: &[f32], sample_rate: u32, cfg: &AnnotatorConfig) -> Annotation {
    annotate_features(&extract_features(w, sample_rate, cfg), cfg)
}

pub fn detect_reduplication(w: &[f32], sample_rate: u32, cfg: &AnnotatorConfig) -> (bool, f64) {
    let f = extract_features(w, sample_rate, cfg);
    reduplication_from(&f, &nuclei(&f, cfg), cfg)
}

pub fn detect_s(w: &[f32], sample_rate: u32, cfg: &AnnotatorConfig) -> (bool, f64) {
    let f = extract_features(w, sample_rate, cfg);
    let (present, _, conf) = sibilance_from(&f, &nuclei(&f, cfg), cfg);
    (present, conf)
}

pub fn detect_s_initial(w: &[f32], sample_rate: u32, cfg: &AnnotatorConfig) -> (bool, f64) {
    let f = extract_features(w, sample_rate, cfg);
    let (_, initial, conf) = sibilance_from(&f, &nuclei(&f, cfg), cfg);
    (initial, conf)
}

/// Approximate "same word apart from the reduplicant" judgement for a bare
/// output and a reduplicated output: equal syllable counts once the
/// reduplicant is removed, and correlated log spectra over the base region.
/// This is a spectral stand-in for a listener's judgement.
pub fn pair_identity(bare: &[f32], redup: &[f32], sample_rate: u32, cfg: &AnnotatorConfig) -> (bool, f64) {
    let fb = extract_features(bare, sample_rate, cfg);
    let fr = extract_features(redup, sample_rate, cfg);
    let nb = nuclei(&fb, cfg);
    let nr = nuclei(&fr, cfg);
    if nb.is_empty() || nr.len() < 2 || nr.len() != nb.len() + 1 {
        return (false, 0.0);
    }
    let last_b = nb.last().unwrap().end + 1;
    let last_r = nr.last().unwrap().end + 1;
    let base_r = nr[0].end + 1..last_r;
    let first_b = onset_range(&fb, &nb, 0, cfg).start;
    match (log_spectrum(&fb, first_b..last_b), log_spectrum(&fr, base_r)) {
        (Some(a), Some(b)) => {
            let c = correlation(&a, &b);
            (c >= cfg.similarity.max(0.8), c)
        }
        _ => (false, 0.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub items: usize,
    pub redup_correct: usize,
    pub s_initial_correct: usize,
    pub syllables_correct: usize,
    /// Items annotated `[s]`-initial and reduplicated.
    pub s_redup_false_positives: usize,
}

impl AccuracyReport {
    pub fn redup_accuracy(&self) -> f64 {
        self.redup_correct as f64 / self.items.max(1) as f64
    }
    pub fn s_accuracy(&self) -> f64 {
        self.s_initial_correct as f64 / self.items.max(1) as f64
    }
    pub fn syllable_accuracy(&self) -> f64 {
        self.syllables_correct as f64 / self.items.max(1) as f64
    }
    pub fn s_redup_false_positive_rate(&self) -> f64 {
        self.s_redup_false_positives as f64 / self.items.max(1) as f64
    }
}

/// Loads every corpus item and extracts features once.
pub fn corpus_features(m: &CorpusManifest, cfg: &AnnotatorConfig) -> Result<Vec<AcousticFeatures>> {
    m.items
        .iter()
        .map(|it| Ok(extract_features(&m.load_audio(it)?, m.sample_rate, cfg)))
        .collect()
}

pub fn score(m: &CorpusManifest, feats: &[AcousticFeatures], cfg: &AnnotatorConfig) -> AccuracyReport {
    let mut r = AccuracyReport {
        items: m.items.len(),
        redup_correct: 0,
        s_initial_correct: 0,
        syllables_correct: 0,
        s_redup_false_positives: 0,
    };
    for (it, f) in m.items.iter().zip(feats) {
        let a = annotate_features(f, cfg);
        r.redup_correct += usize::from(a.reduplicated == it.reduplicated);
        r.s_initial_correct += usize::from(a.s_initial == it.s_initial());
        r.syllables_correct += usize::from(a.syllable_count == it.phones.len() / 2);
        r.s_redup_false_positives += usize::from(a.s_initial && a.reduplicated);
    }
    r
}

/// Accuracy of the annotator on a labeled corpus.
pub fn evaluate(m: &CorpusManifest, cfg: &AnnotatorConfig) -> Result<AccuracyReport> {
    let feats = corpus_features(m, cfg)?;
    Ok(score(m, &feats, cfg))
}

/// Grid search of the three decision thresholds against corpus labels;
/// maximizes the worse of the two field accuracies.
pub fn calibrate(m: &CorpusManifest, base: &AnnotatorConfig) -> Result<(AnnotatorConfig, AccuracyReport)> {
    if m.items.is_empty() {
        return Err(Error::invalid("calibrate: empty corpus"));
    }
    let feats = corpus_features(m, base)?;
    let mut best: Option<(f64, AnnotatorConfig, AccuracyReport)> = None;
    for sib in [0.5, 0.6, 0.7, 0.8] {
        for peak in [0.15, 0.2, 0.25, 0.3] {
            for sim in [0.8, 0.7, 0.6, 0.5, 0.4, 0.3] {
                let cfg = AnnotatorConfig {
                    sibilance_ratio: sib,
                    peak_threshold: peak,
                    similarity: sim,
                    ..base.clone()
                };
                let r = score(m, &feats, &cfg);
                let s = r.redup_accuracy().min(r.s_accuracy());
                if best.as_ref().map_or(true, |b| s > b.0) {
                    best = Some((s, cfg, r));
                }
            }
        }
    }
    let (_, cfg, r) = best.unwrap();
    Ok((cfg, r))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FileAnnotation {
    pub path: PathBuf,
    pub annotation: Annotation,
}

/// Annotates every `.wav` in `dir` (sorted by name).
pub fn annotate_dir(dir: &Path, cfg: &AnnotatorConfig) -> Result<Vec<FileAnnotation>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|path| {
            let (w, sr) = crate::wav::read_wav(&path)?;
            Ok(FileAnnotation {
                annotation: annotate(&w, sr, cfg),
                path,
            })
        })
        .collect()
}

/// CSV `path,reduplicated,s_initial,syllables,conf_redup,conf_s`.
pub fn write_annotations_csv(path: &Path, rows: &[FileAnnotation]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["path", "reduplicated", "s_initial", "syllables", "conf_redup", "conf_s"])?;
    for r in rows {
        let a = &r.annotation;
        w.write_record([
            r.path.display().to_string(),
            u8::from(a.reduplicated).to_string(),
            u8::from(a.s_initial).to_string(),
            a.syllable_count.to_string(),
            format!("{:.4}", a.conf_redup),
            format!("{:.4}", a.conf_s),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synth_item, Phone, SynthConfig};

    fn synth(word: &str, stress: usize, cfg: &SynthConfig, seed: u64) -> Vec<f32> {
        synth_item(&Phone::parse_word(word).unwrap(), stress, cfg, seed)
            .unwrap()
            .samples
    }

    #[test]
    fn frame_count_formula() {
        let cfg = AnnotatorConfig::default();
        let f = extract_features(&vec![0.1; 4096], 16000, &cfg);
        assert_eq!(f.len(), (4096 - 160) / 80 + 1);
        assert_eq!(frame_count(100, 160, 80), 0);
    }

    #[test]
    fn sine_has_no_high_band_energy() {
        let w: Vec<f32> = (0..4096)
            .map(|i| (2.0 * std::f32::consts::PI * 300.0 * i as f32 / 16000.0).sin() * 0.5)
            .collect();
        let f = extract_features(&w, 16000, &AnnotatorConfig::default());
        assert!(f.high_ratio.iter().all(|&r| r < 0.05));
        assert!(!detect_s(&w, 16000, &AnnotatorConfig::default()).0);
    }

    #[test]
    fn silence() {
        let cfg = AnnotatorConfig::default();
        let w = vec![0.0f32; 4096];
        let f = extract_features(&w, 16000, &cfg);
        assert!(f.energy.iter().all(|&e| e == 0.0));
        assert_eq!(count_syllables(&f, &cfg), 0);
        assert_eq!(detect_reduplication(&w, 16000, &cfg), (false, 0.0));
        assert!(!detect_s(&w, 16000, &cfg).0);
    }

    #[test]
    fn corpus_words() {
        let cfg = AnnotatorConfig::default();
        for sc in [SynthConfig::desk(), SynthConfig::paper()] {
            for seed in 0..3 {
                assert!(detect_reduplication(&synth("pəpali", 1, &sc, seed), 16000, &cfg).0);
                assert!(!detect_reduplication(&synth("pali", 0, &sc, seed), 16000, &cfg).0);
                assert!(detect_s_initial(&synth("sali", 0, &sc, seed), 16000, &cfg).0);
                assert!(!detect_s(&synth("pali", 0, &sc, seed), 16000, &cfg).0);
            }
        }
    }

    #[test]
    fn prefixation_is_not_copying() {
        let cfg = AnnotatorConfig::default();
        for sc in [SynthConfig::desk(), SynthConfig::paper()] {
            for seed in 0..3 {
                let w = synth("tupali", 1, &sc, seed);
                let f = extract_features(&w, 16000, &cfg);
                assert_eq!(count_syllables(&f, &cfg), 3);
                assert!(!detect_reduplication(&w, 16000, &cfg).0);
            }
        }
    }

    #[test]
    fn held_out_s_reduplication_is_recognized() {
        let cfg = AnnotatorConfig::default();
        for sc in [SynthConfig::desk(), SynthConfig::paper()] {
            let w = synth("səsaru", 1, &sc, 5);
            let a = annotate(&w, 16000, &cfg);
            assert!(a.s_present && a.s_initial && a.reduplicated, "{a:?}");
        }
    }

    #[test]
    fn gap_doubles_syllables() {
        let cfg = AnnotatorConfig::default();
        let sc = SynthConfig::paper();
        let out = synth_item(&Phone::parse_word("mali").unwrap(), 0, &sc, 2).unwrap();
        let word = &out.samples[..out.voiced_end()];
        let mut w = word.to_vec();
        w.extend(std::iter::repeat(0.0).take(1600));
        w.extend_from_slice(word);
        let single = count_syllables(&extract_features(word, 16000, &cfg), &cfg);
        let double = count_syllables(&extract_features(&w, 16000, &cfg), &cfg);
        assert_eq!(single, 2);
        assert_eq!(double, 2 * single);
    }

    #[test]
    fn config_kv_round_trip() {
        let cfg = AnnotatorConfig {
            similarity: 0.42,
            ..AnnotatorConfig::default()
        };
        let kv = KvFile::parse(&cfg.to_kv().render(), "x").unwrap();
        assert_eq!(AnnotatorConfig::from_kv(&kv).unwrap(), cfg);
        assert!(AnnotatorConfig::from_kv(&KvFile::parse("bogus=1", "x").unwrap()).is_err());
    }
}
