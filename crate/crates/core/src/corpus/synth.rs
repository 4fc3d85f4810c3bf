//! Source-filter formant synthesis of CV words.
//!
//! Voiced segments excite cascaded two-pole resonators with a glottal impulse
//! train; frication and bursts excite them with seeded white noise. Every
//! segment is scaled to a class-specific RMS level, the stressed syllable
//! gets extra gain and length, and the word is peak-normalized and
//! zero-padded to the slice length.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::phone::{Phone, PhoneClass};
use crate::dsp::{first_difference, one_pole_lowpass, rms, Resonator};
use crate::error::{Error, Result};

/// Segment durations in milliseconds at `time_scale = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Durations {
    pub vowel_ms: f64,
    pub reduced_vowel_ms: f64,
    pub closure_ms: f64,
    /// Stop bursts are not time-scaled.
    pub burst_ms: f64,
    pub aspiration_ms: f64,
    pub nasal_ms: f64,
    pub fricative_ms: f64,
    pub sibilant_ms: f64,
    pub liquid_ms: f64,
    pub lead_ms: f64,
    pub ramp_ms: f64,
}

/// Per-class RMS targets (unstressed, before peak normalization).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Levels {
    pub vowel: f64,
    pub reduced_vowel: f64,
    pub liquid: f64,
    pub nasal: f64,
    pub fricative: f64,
    pub sibilant: f64,
    pub voice_bar: f64,
    pub burst: f64,
    pub aspiration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Repetitions {
    pub base_reps: u32,
    pub redup_reps: u32,
    pub s_reps: u32,
    /// `[s]`-bases recorded one time fewer than `s_reps`.
    pub s_short: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub preset: String,
    pub sample_rate: u32,
    pub slice_len: usize,
    /// Multiplies every duration except bursts.
    pub time_scale: f64,
    pub f0_hz: f64,
    pub durations: Durations,
    pub levels: Levels,
    pub sibilant_center_hz: f64,
    pub sibilant_bandwidth_hz: f64,
    pub stress_gain_db: f64,
    pub stress_duration_factor: f64,
    pub duration_jitter: f64,
    pub pitch_jitter: f64,
    pub peak: f64,
    pub onsets: Vec<Phone>,
    pub vowels: Vec<Phone>,
    pub medials: Vec<Phone>,
    pub repetitions: Repetitions,
    /// Initial CV sequences excluded from the inventory.
    pub exclusions: Vec<(Phone, Phone)>,
}

impl SynthConfig {
    /// Full-length items: 16384 samples at 16 kHz.
    pub fn paper() -> Self {
        use Phone::*;
        Self {
            preset: "paper".into(),
            sample_rate: 16_000,
            slice_len: 16_384,
            time_scale: 1.0,
            f0_hz: 210.0,
            durations: Durations {
                vowel_ms: 110.0,
                reduced_vowel_ms: 65.0,
                closure_ms: 60.0,
                burst_ms: 8.0,
                aspiration_ms: 20.0,
                nasal_ms: 70.0,
                fricative_ms: 70.0,
                sibilant_ms: 130.0,
                liquid_ms: 60.0,
                lead_ms: 60.0,
                ramp_ms: 3.0,
            },
            levels: Levels {
                vowel: 0.5,
                reduced_vowel: 0.45,
                liquid: 0.09,
                nasal: 0.07,
                fricative: 0.06,
                sibilant: 0.3,
                voice_bar: 0.03,
                burst: 0.1,
                aspiration: 0.02,
            },
            sibilant_center_hz: 6000.0,
            sibilant_bandwidth_hz: 2500.0,
            stress_gain_db: 6.0,
            stress_duration_factor: 1.5,
            duration_jitter: 0.05,
            pitch_jitter: 0.02,
            peak: 0.7,
            onsets: vec![P, T, K, B, D, G, V, M, N],
            vowels: vec![A, I, U],
            medials: vec![L, R, J],
            repetitions: Repetitions {
                base_reps: 2,
                redup_reps: 2,
                s_reps: 5,
                s_short: vec!["sala".into(), "suru".into(), "suju".into()],
            },
            exclusions: vec![(T, I), (T, U), (K, I)],
        }
    }

    /// Compressed items: 4096 samples (0.256 s) at 16 kHz.
    pub fn desk() -> Self {
        let mut cfg = Self::paper();
        cfg.preset = "desk".into();
        cfg.slice_len = 4096;
        cfg.time_scale = 0.33;
        cfg.durations.lead_ms = 8.0;
        cfg.durations.ramp_ms = 2.0;
        cfg
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(Self::paper()),
            "desk" => Ok(Self::desk()),
            other => Err(Error::Config(format!(
                "unknown corpus preset '{other}' (expected paper or desk)"
            ))),
        }
    }

    fn samples(&self, ms: f64) -> usize {
        (ms * 1e-3 * self.sample_rate as f64).round() as usize
    }

    /// Longest possible rendered length in samples (all jitter at its maximum).
    pub fn max_item_len(&self, phones: &[Phone], stress_index: usize) -> usize {
        let worst = 1.0 + self.duration_jitter;
        let plan = self.plan(phones, stress_index, &mut |_| worst);
        let lead = self.samples(self.durations.lead_ms);
        lead + plan.iter().map(|s| s.len).sum::<usize>()
    }

    /// Segment plan; `jitter` maps a duration to a multiplicative factor.
    fn plan(&self, phones: &[Phone], stress_index: usize, jitter: &mut dyn FnMut(f64) -> f64) -> Vec<Planned> {
        let d = &self.durations;
        let ts = self.time_scale;
        let mut out = Vec::new();
        for (i, &ph) in phones.iter().enumerate() {
            let syllable = i / 2;
            let stressed = syllable == stress_index;
            let stretch = if stressed { self.stress_duration_factor } else { 1.0 };
            let mut push = |kind: SegKind, ms: f64, scaled: bool| {
                let base = if scaled { ms * ts * stretch } else { ms };
                let len = self.samples(base * jitter(base));
                out.push(Planned {
                    phone: ph,
                    kind,
                    len,
                    stressed,
                    next_vowel: phones.get(i + 1).copied().filter(|p| p.is_vowel()),
                });
            };
            match ph.class() {
                PhoneClass::Vowel => {
                    let ms = if ph == Phone::Schwa { d.reduced_vowel_ms } else { d.vowel_ms };
                    push(SegKind::Main, ms, true);
                }
                PhoneClass::VoicelessStop => {
                    push(SegKind::Closure, d.closure_ms, true);
                    push(SegKind::Burst, d.burst_ms, false);
                    push(SegKind::Aspiration, d.aspiration_ms, true);
                }
                PhoneClass::VoicedStop => {
                    push(SegKind::Closure, d.closure_ms, true);
                    push(SegKind::Burst, d.burst_ms, false);
                }
                PhoneClass::Nasal => push(SegKind::Main, d.nasal_ms, true),
                PhoneClass::Fricative => push(SegKind::Main, d.fricative_ms, true),
                PhoneClass::Sibilant => push(SegKind::Main, d.sibilant_ms, true),
                PhoneClass::LiquidGlide => push(SegKind::Main, d.liquid_ms, true),
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SegKind {
    Main,
    Closure,
    Burst,
    Aspiration,
}

#[derive(Debug, Clone)]
struct Planned {
    phone: Phone,
    kind: SegKind,
    len: usize,
    stressed: bool,
    next_vowel: Option<Phone>,
}

/// Where a phone landed in the rendered buffer (`start..end`, samples).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhoneSpan {
    pub phone: Phone,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub samples: Vec<f32>,
    pub spans: Vec<PhoneSpan>,
}

impl SynthOutput {
    /// End of the last rendered phone.
    pub fn voiced_end(&self) -> usize {
        self.spans.last().map(|s| s.end).unwrap_or(0)
    }
}

/// First three formants of vowels and approximants.
pub fn formants(p: Phone) -> [f64; 3] {
    match p {
        Phone::A => [800.0, 1200.0, 2800.0],
        Phone::I => [300.0, 2300.0, 3000.0],
        Phone::U => [350.0, 800.0, 2500.0],
        Phone::Schwa => [500.0, 1500.0, 2700.0],
        Phone::L => [360.0, 1300.0, 2700.0],
        Phone::R => [420.0, 1250.0, 1650.0],
        Phone::J => [280.0, 2250.0, 3000.0],
        _ => [500.0, 1500.0, 2500.0],
    }
}

/// Checks that `phones` is CVCV or CVCVCV.
pub fn validate_word(phones: &[Phone]) -> Result<()> {
    if phones.is_empty() {
        return Err(Error::invalid("empty phone sequence"));
    }
    if phones.len() != 4 && phones.len() != 6 {
        return Err(Error::invalid(format!(
            "ill-formed word '{}': expected CVCV or CVCVCV",
            Phone::word(phones)
        )));
    }
    for (i, p) in phones.iter().enumerate() {
        if p.is_vowel() != (i % 2 == 1) {
            return Err(Error::invalid(format!(
                "ill-formed word '{}': position {i} must be a {}",
                Phone::word(phones),
                if i % 2 == 1 { "vowel" } else { "consonant" }
            )));
        }
    }
    Ok(())
}

struct Source {
    sample_rate: f64,
    f0: f64,
    phase: f64,
}

impl Source {
    /// Glottal impulse train with slow declination.
    fn voiced(&mut self, n: usize, declination: f64) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (i, o) in out.iter_mut().enumerate() {
            let f0 = self.f0 * (1.0 - declination * i as f64 / n.max(1) as f64);
            self.phase += f0 / self.sample_rate;
            if self.phase >= 1.0 {
                self.phase -= 1.0;
                *o = 1.0;
            }
        }
        // soften the excitation spectrum
        one_pole_lowpass(&mut out, 0.4);
        out
    }
}

fn noise(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn cascade(xs: &mut [f64], formants: &[f64], bandwidths: &[f64], fs: f64) {
    for (f, bw) in formants.iter().zip(bandwidths) {
        Resonator::new(*f, *bw, fs).run(xs);
    }
}

fn scale_to_rms(xs: &mut [f64], target: f64) {
    let r = rms(xs);
    if r > 0.0 {
        xs.iter_mut().for_each(|x| *x *= target / r);
    }
}

fn ramp(xs: &mut [f64], ramp_len: usize) {
    let n = xs.len();
    let r = ramp_len.min(n / 2);
    for i in 0..r {
        let g = 0.5 - 0.5 * (std::f64::consts::PI * (i as f64 + 0.5) / r as f64).cos();
        xs[i] *= g;
        xs[n - 1 - i] *= g;
    }
}

/// Renders one word. Same inputs and seed give identical output.
pub fn synth_item(phones: &[Phone], stress_index: usize, cfg: &SynthConfig, seed: u64) -> Result<SynthOutput> {
    validate_word(phones)?;
    let syllables = phones.len() / 2;
    if stress_index >= syllables {
        return Err(Error::invalid(format!(
            "stress index {stress_index} outside {syllables} syllables"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs = cfg.sample_rate as f64;
    let pitch = 1.0 + cfg.pitch_jitter * rng.gen_range(-1.0..1.0);
    let dj = cfg.duration_jitter;
    let plan = cfg.plan(phones, stress_index, &mut |_| 1.0 + dj * rng.gen_range(-1.0..1.0));

    let lead = cfg.samples(cfg.durations.lead_ms);
    let total = lead + plan.iter().map(|s| s.len).sum::<usize>();
    if total > cfg.slice_len {
        return Err(Error::invalid(format!(
            "duration overflow: '{}' needs {total} samples, slice is {}",
            Phone::word(phones),
            cfg.slice_len
        )));
    }

    let mut source = Source {
        sample_rate: fs,
        f0: cfg.f0_hz * pitch,
        phase: 0.999,
    };
    let stress_gain = 10f64.powf(cfg.stress_gain_db / 20.0);
    let ramp_len = cfg.samples(cfg.durations.ramp_ms).max(1);
    let lv = &cfg.levels;

    let mut buf = vec![0.0f64; cfg.slice_len];
    let mut spans: Vec<PhoneSpan> = Vec::new();
    let mut pos = lead;
    for seg in &plan {
        let n = seg.len;
        let gain = if seg.stressed { stress_gain } else { 1.0 };
        let mut xs: Vec<f64>;
        let level;
        match (seg.phone.class(), seg.kind) {
            (PhoneClass::Vowel, _) => {
                xs = source.voiced(n, 0.05);
                cascade(&mut xs, &formants(seg.phone), &[80.0, 100.0, 150.0], fs);
                level = if seg.phone == Phone::Schwa { lv.reduced_vowel } else { lv.vowel };
            }
            (PhoneClass::LiquidGlide, _) => {
                xs = source.voiced(n, 0.0);
                cascade(&mut xs, &formants(seg.phone), &[90.0, 150.0, 200.0], fs);
                level = lv.liquid;
            }
            (PhoneClass::Nasal, _) => {
                xs = source.voiced(n, 0.0);
                let zero = if seg.phone == Phone::M { 1000.0 } else { 1700.0 };
                cascade(&mut xs, &[250.0, zero], &[100.0, 250.0], fs);
                level = lv.nasal;
            }
            (PhoneClass::Fricative, _) => {
                xs = source.voiced(n, 0.0);
                cascade(&mut xs, &[300.0], &[150.0], fs);
                let mut fr = noise(&mut rng, n);
                cascade(&mut fr, &[2500.0], &[1500.0], fs);
                scale_to_rms(&mut xs, 1.0);
                scale_to_rms(&mut fr, 0.25);
                xs.iter_mut().zip(&fr).for_each(|(x, f)| *x += f);
                level = lv.fricative;
            }
            (PhoneClass::Sibilant, _) => {
                xs = noise(&mut rng, n);
                first_difference(&mut xs);
                cascade(&mut xs, &[cfg.sibilant_center_hz], &[cfg.sibilant_bandwidth_hz], fs);
                level = lv.sibilant;
            }
            (PhoneClass::VoicelessStop | PhoneClass::VoicedStop, SegKind::Closure) => {
                if seg.phone.class() == PhoneClass::VoicedStop {
                    xs = source.voiced(n, 0.0);
                    cascade(&mut xs, &[200.0], &[100.0], fs);
                    level = lv.voice_bar;
                } else {
                    // keep the glottal clock running through silence
                    let _ = source.voiced(n, 0.0);
                    xs = vec![0.0; n];
                    level = 0.0;
                }
            }
            (_, SegKind::Burst) => {
                xs = noise(&mut rng, n);
                let (f, bw) = match seg.phone {
                    Phone::P | Phone::B => (900.0, 1200.0),
                    Phone::T | Phone::D => (3800.0, 1800.0),
                    _ => (1900.0, 600.0),
                };
                cascade(&mut xs, &[f], &[bw], fs);
                let _ = source.voiced(n, 0.0);
                level = if seg.phone.class() == PhoneClass::VoicedStop {
                    lv.burst * 0.6
                } else {
                    lv.burst
                };
            }
            (_, SegKind::Aspiration) => {
                xs = noise(&mut rng, n);
                let v = seg.next_vowel.unwrap_or(Phone::Schwa);
                cascade(&mut xs, &formants(v), &[200.0, 250.0, 300.0], fs);
                let _ = source.voiced(n, 0.0);
                level = lv.aspiration;
            }
            (_, _) => unreachable!("segment kinds only apply to stops"),
        }
        scale_to_rms(&mut xs, level * gain);
        ramp(&mut xs, ramp_len);
        buf[pos..pos + n].copy_from_slice(&xs);
        match spans.last_mut() {
            Some(last) if last.phone == seg.phone && last.end == pos && seg.kind != SegKind::Main => {
                last.end = pos + n
            }
            _ => spans.push(PhoneSpan {
                phone: seg.phone,
                start: pos,
                end: pos + n,
            }),
        }
        pos += n;
    }

    let peak = buf.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let norm = if peak > 0.0 { cfg.peak / peak } else { 0.0 };
    let samples = buf.iter().map(|x| (x * norm) as f32).collect();
    Ok(SynthOutput { samples, spans })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn word(w: &str) -> Vec<Phone> {
        Phone::parse_word(w).unwrap()
    }

    #[test]
    fn rejects_bad_words() {
        let cfg = SynthConfig::desk();
        assert!(synth_item(&[], 0, &cfg, 1).is_err());
        assert!(synth_item(&word("pal"), 0, &cfg, 1).is_err());
        assert!(synth_item(&word("apal"), 0, &cfg, 1).is_err());
        assert!(synth_item(&word("pali"), 2, &cfg, 1).is_err());
    }

    #[test]
    fn duration_overflow_is_reported() {
        let mut cfg = SynthConfig::desk();
        cfg.slice_len = 1024;
        let err = synth_item(&word("pəpali"), 1, &cfg, 1).unwrap_err();
        assert!(err.to_string().contains("overflow"));
    }

    #[test]
    fn output_shape_range_and_padding() {
        for cfg in [SynthConfig::desk(), SynthConfig::paper()] {
            let out = synth_item(&word("gəgaru"), 1, &cfg, 9).unwrap();
            assert_eq!(out.samples.len(), cfg.slice_len);
            assert!(out.samples.iter().all(|x| (-1.0..=1.0).contains(x)));
            assert!(out.samples[out.voiced_end()..].iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn deterministic() {
        let cfg = SynthConfig::desk();
        let a = synth_item(&word("sali"), 0, &cfg, 42).unwrap();
        let b = synth_item(&word("sali"), 0, &cfg, 42).unwrap();
        assert_eq!(a, b);
        let c = synth_item(&word("sali"), 0, &cfg, 43).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn stressed_syllable_is_louder_and_longer() {
        let cfg = SynthConfig::paper();
        let out = synth_item(&word("bəbali"), 1, &cfg, 3).unwrap();
        let vowels: Vec<_> = out.spans.iter().filter(|s| s.phone.is_vowel()).collect();
        let level = |s: &PhoneSpan| {
            let xs: Vec<f64> = out.samples[s.start..s.end].iter().map(|&x| x as f64).collect();
            rms(&xs)
        };
        let stressed = vowels[1];
        for other in [vowels[0], vowels[2]] {
            assert!(level(stressed) > 1.5 * level(other));
            assert!(stressed.end - stressed.start > other.end - other.start);
        }
    }
}
