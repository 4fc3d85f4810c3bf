//! Small signal-processing kit: radix-2 FFT, windows and the two-pole
//! resonator used by the formant synthesizer.

use std::f64::consts::PI;

/// In-place iterative radix-2 FFT. Panics if the length is not a power of two.
pub fn fft(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    assert_eq!(n, im.len());
    assert!(n.is_power_of_two(), "fft length {n} is not a power of two");
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let ang = -2.0 * PI / len as f64;
        let (wr, wi) = (ang.cos(), ang.sin());
        for start in (0..n).step_by(len) {
            let (mut cr, mut ci) = (1.0f64, 0.0f64);
            for k in 0..len / 2 {
                let a = start + k;
                let b = a + len / 2;
                let tr = re[b] * cr - im[b] * ci;
                let ti = re[b] * ci + im[b] * cr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
                let next = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = next;
            }
        }
        len <<= 1;
    }
}

/// Symmetric Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// One-sided power spectrum (bins 0..=nfft/2) of a windowed, zero-padded frame.
pub fn power_spectrum(frame: &[f64], window: &[f64], nfft: usize) -> Vec<f64> {
    let mut re = vec![0.0; nfft];
    let mut im = vec![0.0; nfft];
    for (i, (x, w)) in frame.iter().zip(window).enumerate().take(nfft) {
        re[i] = x * w;
    }
    fft(&mut re, &mut im);
    (0..=nfft / 2).map(|k| re[k] * re[k] + im[k] * im[k]).collect()
}

/// Two-pole digital resonator `y[n] = a x[n] + b y[n-1] + c y[n-2]` with unit
/// gain at DC.
#[derive(Debug, Clone)]
pub struct Resonator {
    a: f64,
    b: f64,
    c: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    pub fn new(freq: f64, bandwidth: f64, sample_rate: f64) -> Self {
        let t = 1.0 / sample_rate;
        let c = -(-2.0 * PI * bandwidth * t).exp();
        let b = 2.0 * (-PI * bandwidth * t).exp() * (2.0 * PI * freq * t).cos();
        let a = 1.0 - b - c;
        Self {
            a,
            b,
            c,
            y1: 0.0,
            y2: 0.0,
        }
    }

    #[inline]
    pub fn tick(&mut self, x: f64) -> f64 {
        let y = self.a * x + self.b * self.y1 + self.c * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }

    pub fn run(&mut self, xs: &mut [f64]) {
        for x in xs {
            *x = self.tick(*x);
        }
    }
}

/// One-pole low-pass; `coef` in [0, 1) is the pole position.
pub fn one_pole_lowpass(xs: &mut [f64], coef: f64) {
    let mut y = 0.0;
    for x in xs {
        y = (1.0 - coef) * *x + coef * y;
        *x = y;
    }
}

/// First-difference pre-emphasis style high-pass.
pub fn first_difference(xs: &mut [f64]) {
    let mut prev = 0.0;
    for x in xs {
        let cur = *x;
        *x = cur - prev;
        prev = cur;
    }
}

pub fn rms(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_matches_direct_dft() {
        let n = 16;
        let x: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) % 5) as f64 - 2.0).collect();
        let mut re = x.clone();
        let mut im = vec![0.0; n];
        fft(&mut re, &mut im);
        for k in 0..n {
            let (mut sr, mut si) = (0.0, 0.0);
            for (t, v) in x.iter().enumerate() {
                let ang = -2.0 * PI * (k * t) as f64 / n as f64;
                sr += v * ang.cos();
                si += v * ang.sin();
            }
            assert!((sr - re[k]).abs() < 1e-9 && (si - im[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn resonator_peaks_at_its_frequency() {
        let fs = 16000.0;
        let gain_at = |f: f64| {
            let mut r = Resonator::new(1000.0, 100.0, fs);
            let mut xs: Vec<f64> = (0..4000).map(|i| (2.0 * PI * f * i as f64 / fs).sin()).collect();
            r.run(&mut xs);
            rms(&xs[2000..])
        };
        assert!(gain_at(1000.0) > 5.0 * gain_at(3000.0));
        assert!(gain_at(1000.0) > 3.0 * gain_at(400.0));
    }
}
