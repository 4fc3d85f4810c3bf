use serde::{Deserialize, Serialize};

use super::AnnotatorConfig;
use crate::dsp::{hann, power_spectrum};

/// Number of equal-width bands (0 .. Nyquist) kept per frame for spectral
/// envelope comparisons.
pub const N_BANDS: usize = 16;

/// Frame-level acoustic measurements (Hann-windowed spectra).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcousticFeatures {
    pub sample_rate: u32,
    pub frame_len: usize,
    pub hop: usize,
    /// Frame RMS.
    pub energy: Vec<f64>,
    /// Zero crossings per sample.
    pub zcr: Vec<f64>,
    /// Spectral energy above the high-band edge over total energy.
    pub high_ratio: Vec<f64>,
    pub voiced: Vec<bool>,
    /// Band powers per frame.
    pub bands: Vec<[f64; N_BANDS]>,
}

impl AcousticFeatures {
    pub fn len(&self) -> usize {
        self.energy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energy.is_empty()
    }

    /// RMS restricted to the band below the high-band edge.
    pub fn low_band_envelope(&self) -> Vec<f64> {
        self.energy
            .iter()
            .zip(&self.high_ratio)
            .map(|(e, r)| e * (1.0 - r).max(0.0).sqrt())
            .collect()
    }

    pub fn frame_ms(&self) -> f64 {
        1e3 * self.frame_len as f64 / self.sample_rate as f64
    }

    pub fn hop_ms(&self) -> f64 {
        1e3 * self.hop as f64 / self.sample_rate as f64
    }

    /// Frames needed so that a run spans at least `ms`.
    pub fn frames_for_ms(&self, ms: f64) -> usize {
        let extra = (ms - self.frame_ms()).max(0.0);
        (extra / self.hop_ms()).ceil() as usize + 1
    }
}

/// `floor((len - frame) / hop) + 1` frames; empty when the signal is shorter
/// than one frame.
pub fn frame_count(len: usize, frame: usize, hop: usize) -> usize {
    if len < frame {
        0
    } else {
        (len - frame) / hop + 1
    }
}

pub fn extract_features(w: &[f32], sample_rate: u32, cfg: &AnnotatorConfig) -> AcousticFeatures {
    let frame_len = ((cfg.frame_ms * 1e-3 * sample_rate as f64).round() as usize).max(2);
    let hop = ((cfg.hop_ms * 1e-3 * sample_rate as f64).round() as usize).max(1);
    let nfft = frame_len.next_power_of_two();
    let window = hann(frame_len);
    let bin_hz = sample_rate as f64 / nfft as f64;
    let nyquist = sample_rate as f64 / 2.0;
    let n = frame_count(w.len(), frame_len, hop);

    let mut feats = AcousticFeatures {
        sample_rate,
        frame_len,
        hop,
        energy: Vec::with_capacity(n),
        zcr: Vec::with_capacity(n),
        high_ratio: Vec::with_capacity(n),
        voiced: Vec::with_capacity(n),
        bands: Vec::with_capacity(n),
    };
    let mut frame = vec![0.0f64; frame_len];
    for f in 0..n {
        let start = f * hop;
        for (dst, &src) in frame.iter_mut().zip(&w[start..start + frame_len]) {
            *dst = src as f64;
        }
        let energy = (frame.iter().map(|x| x * x).sum::<f64>() / frame_len as f64).sqrt();
        let crossings = frame
            .windows(2)
            .filter(|p| (p[0] >= 0.0) != (p[1] >= 0.0))
            .count();
        let spec = power_spectrum(&frame, &window, nfft);
        let total: f64 = spec.iter().sum();
        let mut high = 0.0;
        let mut bands = [0.0; N_BANDS];
        for (k, p) in spec.iter().enumerate() {
            let hz = k as f64 * bin_hz;
            if hz >= cfg.high_band_hz {
                high += p;
            }
            let b = ((hz / nyquist) * N_BANDS as f64).floor() as usize;
            bands[b.min(N_BANDS - 1)] += p;
        }
        feats.energy.push(energy);
        feats.zcr.push(crossings as f64 / (frame_len - 1) as f64);
        feats
            .high_ratio
            .push(if total > 1e-20 { (high / total).clamp(0.0, 1.0) } else { 0.0 });
        feats.bands.push(bands);
    }
    let max_e = feats.energy.iter().cloned().fold(0.0, f64::max);
    let floor = (cfg.silence_floor * max_e).max(1e-4);
    feats.voiced = (0..n)
        .map(|f| {
            feats.energy[f] > floor
                && feats.high_ratio[f] < cfg.voiced_high_ratio_max
                && feats.zcr[f] < cfg.voiced_zcr_max
        })
        .collect();
    feats
}
