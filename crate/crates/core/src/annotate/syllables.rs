use super::{AcousticFeatures, AnnotatorConfig};

/// A vocalic nucleus, in frames (`start..=end`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Nucleus {
    pub start: usize,
    pub peak: usize,
    pub end: usize,
    pub peak_value_bits: u64,
}

impl Nucleus {
    pub fn peak_value(&self) -> f64 {
        f64::from_bits(self.peak_value_bits)
    }
}

fn smooth(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            xs[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Syllable nuclei from the low-band envelope: runs above
/// `peak_threshold * max`, further split wherever the valley between two
/// peaks falls below `dip_ratio` of the smaller peak.
pub fn nuclei(f: &AcousticFeatures, cfg: &AnnotatorConfig) -> Vec<Nucleus> {
    if f.is_empty() {
        return Vec::new();
    }
    let env = smooth(&f.low_band_envelope());
    let max = env.iter().cloned().fold(0.0, f64::max);
    if max < 1e-4 {
        return Vec::new();
    }
    let thr = cfg.peak_threshold * max;
    let min_len = f.frames_for_ms(cfg.min_nucleus_ms);

    let mut out = Vec::new();
    let mut i = 0;
    while i < env.len() {
        if env[i] < thr {
            i += 1;
            continue;
        }
        let start = i;
        while i < env.len() && env[i] >= thr {
            i += 1;
        }
        split_run(&env, start, i - 1, cfg.dip_ratio, &mut out);
    }
    out.retain(|n| n.end + 1 - n.start >= min_len);
    out
}

fn split_run(env: &[f64], start: usize, end: usize, dip_ratio: f64, out: &mut Vec<Nucleus>) {
    // local maxima within the run
    let mut peaks: Vec<usize> = (start..=end)
        .filter(|&k| {
            let left = if k > start { env[k - 1] } else { f64::NEG_INFINITY };
            let right = if k < end { env[k + 1] } else { f64::NEG_INFINITY };
            env[k] > left && env[k] >= right
        })
        .collect();
    if peaks.is_empty() {
        peaks.push(start);
    }
    // merge neighbours whose valley is shallow
    loop {
        let mut merged = false;
        for w in 0..peaks.len().saturating_sub(1) {
            let (a, b) = (peaks[w], peaks[w + 1]);
            let valley = env[a..=b].iter().cloned().fold(f64::INFINITY, f64::min);
            if valley >= dip_ratio * env[a].min(env[b]) {
                let keep = if env[a] >= env[b] { a } else { b };
                peaks.splice(w..w + 2, [keep]);
                merged = true;
                break;
            }
        }
        if !merged {
            break;
        }
    }
    let mut seg_start = start;
    for w in 0..peaks.len() {
        let seg_end = if w + 1 < peaks.len() {
            let (a, b) = (peaks[w], peaks[w + 1]);
            (a..=b)
                .min_by(|&x, &y| env[x].partial_cmp(&env[y]).unwrap())
                .unwrap()
        } else {
            end
        };
        out.push(Nucleus {
            start: seg_start,
            peak: peaks[w],
            end: seg_end,
            peak_value_bits: env[peaks[w]].to_bits(),
        });
        seg_start = seg_end + 1;
    }
}

pub fn count_syllables(f: &AcousticFeatures, cfg: &AnnotatorConfig) -> usize {
    nuclei(f, cfg).len()
}
