//! Latent probing: Lasso logistic regression from latent variables to an
//! annotated property, interpolation sweeps, out-of-range forcing and the
//! wug test.

mod lasso;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use lasso::{
    fit_lasso_logistic, fit_path, fit_single, lambda_grid, lambda_max, objective, rank_variables, LassoOptions,
    ProbeDataset, ProbeModel,
};

use crate::annotate::{annotate, Annotation, AnnotatorConfig};
use crate::gantrain::{uniform_open, Checkpoint, LatentVector, Mode, VarId};
use crate::{Error, Result};

/// Sample rate of generated audio.
pub const SAMPLE_RATE: u32 = 16_000;

/// One generated output with its latent and annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub latent: LatentVector,
    pub wave: Vec<f32>,
    pub annotation: Annotation,
}

/// Generates and annotates one output per latent.
pub fn generate_annotated(ckpt: &Checkpoint, latents: Vec<LatentVector>, annot: &AnnotatorConfig) -> Result<Vec<Generated>> {
    let waves = ckpt.generate(&latents)?;
    Ok(latents
        .into_iter()
        .zip(waves)
        .map(|(latent, wave)| Generated {
            annotation: annotate(&wave, SAMPLE_RATE, annot),
            latent,
            wave,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RateSummary {
    pub n: usize,
    pub reduplicated: usize,
    pub s_present: usize,
    pub s_initial: usize,
    /// `[s]`-initial and reduplicated.
    pub s_reduplicated: usize,
}

impl RateSummary {
    pub fn of(outputs: &[Generated]) -> Self {
        let mut r = RateSummary {
            n: outputs.len(),
            ..Default::default()
        };
        for a in outputs.iter().map(|g| &g.annotation) {
            r.reduplicated += usize::from(a.reduplicated);
            r.s_present += usize::from(a.s_present);
            r.s_initial += usize::from(a.s_initial);
            r.s_reduplicated += usize::from(a.s_initial && a.reduplicated);
        }
        r
    }

    pub fn redup_rate(&self) -> f64 {
        self.reduplicated as f64 / self.n.max(1) as f64
    }
}

/// Writes `NNNN.wav` files plus `outputs.csv` (latent values and verdicts).
pub fn write_outputs(dir: &Path, outputs: &[Generated]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("outputs.csv");
    let mut w = csv::Writer::from_path(&path)?;
    if let Some(first) = outputs.first() {
        let mut header = vec!["index".to_string(), "file".into()];
        header.extend((0..first.latent.code.len()).map(|i| VarId::Code(i + 1).to_string()));
        header.extend((0..first.latent.noise.len()).map(|j| VarId::Z(j).to_string()));
        header.extend(["reduplicated", "s_present", "s_initial", "syllables", "conf_redup", "conf_s"].map(String::from));
        w.write_record(&header)?;
    }
    for (i, g) in outputs.iter().enumerate() {
        let file = format!("{i:04}.wav");
        crate::wav::write_wav(&dir.join(&file), &g.wave, SAMPLE_RATE)?;
        let a = &g.annotation;
        let mut rec = vec![i.to_string(), file];
        rec.extend(g.latent.to_vec().iter().map(|v| v.to_string()));
        rec.extend([
            u8::from(a.reduplicated).to_string(),
            u8::from(a.s_present).to_string(),
            u8::from(a.s_initial).to_string(),
            a.syllable_count.to_string(),
            format!("{:.4}", a.conf_redup),
            format!("{:.4}", a.conf_s),
        ]);
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

/// Piecewise-linear path through code space with everything else frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub waypoints: Vec<Vec<f64>>,
    pub increment: f64,
    pub noise: Vec<f64>,
}

impl SweepSpec {
    /// `[1.5,0] -> [0,0] -> [0,1.5]` in steps of 0.125.
    pub fn standard(noise: Vec<f64>) -> Self {
        SweepSpec {
            waypoints: vec![vec![1.5, 0.0], vec![0.0, 0.0], vec![0.0, 1.5]],
            increment: 0.125,
            noise,
        }
    }

    /// Code vectors along the path. Each segment takes `max |b - a| / increment`
    /// steps; waypoints are reproduced exactly.
    pub fn points(&self) -> Result<Vec<Vec<f64>>> {
        let first = self
            .waypoints
            .first()
            .ok_or_else(|| Error::invalid("sweep needs at least one waypoint"))?;
        if !(self.increment > 0.0 && self.increment.is_finite()) {
            return Err(Error::invalid(format!("sweep increment must be > 0, got {}", self.increment)));
        }
        if self.waypoints.iter().any(|w| w.len() != first.len()) {
            return Err(Error::invalid("sweep waypoints differ in width"));
        }
        let mut out = vec![first.clone()];
        for pair in self.waypoints.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let dist = a.iter().zip(b).map(|(x, y)| (y - x).abs()).fold(0.0, f64::max);
            let steps_f = dist / self.increment;
            let steps = steps_f.round();
            if (steps_f - steps).abs() > 1e-9 {
                return Err(Error::invalid(format!(
                    "increment {} does not divide segment length {dist}",
                    self.increment
                )));
            }
            let steps = steps as usize;
            for k in 1..=steps {
                if k == steps {
                    out.push(b.clone());
                } else {
                    let t = k as f64 / steps as f64;
                    out.push(a.iter().zip(b).map(|(x, y)| x + (y - x) * t).collect());
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub outputs: Vec<Generated>,
    /// First index whose reduplication verdict differs from index 0.
    pub transition: Option<usize>,
}

pub fn transition_index(outputs: &[Generated]) -> Option<usize> {
    let first = outputs.first()?.annotation.reduplicated;
    outputs.iter().position(|g| g.annotation.reduplicated != first)
}

pub fn interpolation_sweep(ckpt: &Checkpoint, spec: &SweepSpec, annot: &AnnotatorConfig) -> Result<Sweep> {
    if spec.noise.len() != ckpt.n_z() {
        return Err(Error::Shape(format!("sweep noise has {} values, model has {}", spec.noise.len(), ckpt.n_z())));
    }
    let points = spec.points()?;
    if points[0].len() != ckpt.n_codes() {
        return Err(Error::Shape(format!(
            "sweep codes have {} values, model has {}",
            points[0].len(),
            ckpt.n_codes()
        )));
    }
    let latents = points
        .into_iter()
        .map(|code| LatentVector {
            code,
            noise: spec.noise.clone(),
        })
        .collect();
    let outputs = generate_annotated(ckpt, latents, annot)?;
    Ok(Sweep {
        transition: transition_index(&outputs),
        outputs,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum BaseLatent {
    /// Training-distribution sample: random one-hot code, uniform noise.
    Random,
    Fixed(LatentVector),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForcingSpec {
    pub overrides: Vec<(VarId, f64)>,
    pub base: BaseLatent,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forced {
    pub outputs: Vec<Generated>,
    pub summary: RateSummary,
}

/// Latents for a forcing run; overrides are applied after sampling.
pub fn forcing_latents(n_codes: usize, n_z: usize, spec: &ForcingSpec, seed: u64) -> Result<Vec<LatentVector>> {
    for (id, v) in &spec.overrides {
        id.position(n_codes, n_z)?;
        if !v.is_finite() {
            return Err(Error::invalid(format!("override {id} = {v} is not finite")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..spec.n_samples)
        .map(|_| {
            let mut l = match &spec.base {
                BaseLatent::Random => LatentVector::sample(&mut rng, n_codes, n_z).0,
                BaseLatent::Fixed(l) => {
                    if l.code.len() != n_codes || l.noise.len() != n_z {
                        return Err(Error::Shape(format!(
                            "fixed latent is {}+{}, model is {n_codes}+{n_z}",
                            l.code.len(),
                            l.noise.len()
                        )));
                    }
                    l.clone()
                }
            };
            for &(id, v) in &spec.overrides {
                l.set(id, v)?;
            }
            Ok(l)
        })
        .collect()
}

pub fn force_and_generate(ckpt: &Checkpoint, spec: &ForcingSpec, seed: u64, annot: &AnnotatorConfig) -> Result<Forced> {
    let latents = forcing_latents(ckpt.n_codes(), ckpt.n_z(), spec, seed)?;
    let outputs = generate_annotated(ckpt, latents, annot)?;
    Ok(Forced {
        summary: RateSummary::of(&outputs),
        outputs,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WugResult {
    pub n: usize,
    /// Outputs annotated `[s]`-initial and reduplicated.
    pub hits: usize,
    pub summary: RateSummary,
    pub outputs: Vec<Generated>,
}

impl WugResult {
    pub fn rate(&self) -> f64 {
        self.hits as f64 / self.n as f64
    }
}

/// Forces the `[s]` variable together with the reduplication variable(s)
/// and counts `[s]`-initial reduplicated outputs.
pub fn wug_test(
    ckpt: &Checkpoint,
    s_variable: VarId,
    s_value: f64,
    redup: &[(VarId, f64)],
    n_samples: usize,
    seed: u64,
    annot: &AnnotatorConfig,
) -> Result<WugResult> {
    if n_samples == 0 {
        return Err(Error::invalid("wug test needs at least one sample"));
    }
    if ckpt.step == 0 {
        return Err(Error::invalid("wug test on an untrained checkpoint (step 0)"));
    }
    let mut overrides = redup.to_vec();
    overrides.push((s_variable, s_value));
    let forced = force_and_generate(
        ckpt,
        &ForcingSpec {
            overrides,
            base: BaseLatent::Random,
            n_samples,
        },
        seed,
        annot,
    )?;
    Ok(WugResult {
        n: n_samples,
        hits: forced.summary.s_reduplicated,
        summary: forced.summary,
        outputs: forced.outputs,
    })
}

/// Annotated property used as the probe outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// Any `[s]` frication.
    S,
    Redup,
    /// Exactly this many syllables.
    Syllables(usize),
}

impl Outcome {
    pub fn of(self, a: &Annotation) -> bool {
        match self {
            Outcome::S => a.s_present,
            Outcome::Redup => a.reduplicated,
            Outcome::Syllables(n) => a.syllable_count == n,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::S => f.write_str("s"),
            Outcome::Redup => f.write_str("redup"),
            Outcome::Syllables(n) => write!(f, "syllables{n}"),
        }
    }
}

impl FromStr for Outcome {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "s" => Ok(Outcome::S),
            "redup" => Ok(Outcome::Redup),
            _ => s
                .strip_prefix("syllables")
                .and_then(|n| n.parse().ok())
                .map(Outcome::Syllables)
                .ok_or_else(|| Error::invalid(format!("unknown outcome '{s}' (s, redup, syllablesN)"))),
        }
    }
}

/// Generates `n` outputs and builds the probe dataset.
///
/// With codes, half the outputs use `[0,1]` and half `[1,0]` over the same
/// noise draws and only the noise variables are predictors. Without codes
/// all latent variables are predictors.
pub fn probe_dataset(
    ckpt: &Checkpoint,
    outcome: Outcome,
    n: usize,
    seed: u64,
    annot: &AnnotatorConfig,
) -> Result<(ProbeDataset, Vec<Generated>)> {
    if n == 0 {
        return Err(Error::invalid("probe needs at least one sample"));
    }
    let (nc, nz) = (ckpt.n_codes(), ckpt.n_z());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let latents: Vec<LatentVector> = match ckpt.config.mode {
        Mode::Ciwgan if nc > 0 => {
            if n % nc != 0 {
                return Err(Error::invalid(format!("probe sample count {n} is not a multiple of {nc} codes")));
            }
            let noise: Vec<Vec<f64>> = (0..n / nc)
                .map(|_| (0..nz).map(|_| uniform_open(&mut rng)).collect())
                .collect();
            // [0,1] first, then [1,0]
            (0..nc)
                .rev()
                .flat_map(|k| {
                    noise.iter().map(move |z| {
                        let mut code = vec![0.0; nc];
                        code[k] = 1.0;
                        LatentVector { code, noise: z.clone() }
                    })
                })
                .collect()
        }
        _ => (0..n).map(|_| LatentVector::sample(&mut rng, nc, nz).0).collect(),
    };
    let outputs = generate_annotated(ckpt, latents, annot)?;
    let (columns, x): (Vec<VarId>, Vec<Vec<f64>>) = if ckpt.config.mode == Mode::Ciwgan && nc > 0 {
        ((0..nz).map(VarId::Z).collect(), outputs.iter().map(|g| g.latent.noise.clone()).collect())
    } else {
        (
            (0..nc + nz).map(|p| VarId::at(p, nc)).collect(),
            outputs.iter().map(|g| g.latent.to_vec()).collect(),
        )
    };
    let y = outputs.iter().map(|g| outcome.of(&g.annotation)).collect();
    Ok((ProbeDataset::new(columns, x, y, outcome.to_string())?, outputs))
}

/// Ranking CSV `rank,variable,abs_estimate,estimate` over every column.
pub fn ranking_csv(model: &ProbeModel) -> String {
    let mut out = String::from("rank,variable,abs_estimate,estimate\n");
    for (i, (id, a)) in rank_all(model).iter().enumerate() {
        let pos = model.ids.iter().position(|x| x == id).unwrap();
        out.push_str(&format!("{},{id},{a},{}\n", i + 1, model.coefficients[pos]));
    }
    out
}

/// All columns sorted by `|coef|` descending, ties by lower id.
pub fn rank_all(model: &ProbeModel) -> Vec<(VarId, f64)> {
    let mut v: Vec<(VarId, f64)> = model.ids.iter().zip(&model.coefficients).map(|(&id, c)| (id, c.abs())).collect();
    v.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    v
}

/// Sorted absolute estimates as a bar chart.
pub fn ranking_svg(model: &ProbeModel) -> String {
    let bars: Vec<(String, f64)> = rank_all(model).into_iter().map(|(id, a)| (id.to_string(), a)).collect();
    crate::svg::bar_chart(
        &format!("Absolute Lasso estimates, outcome '{}' (sorted)", model.outcome),
        "|estimate|",
        &bars,
    )
}

/// Median absolute coefficient over all columns.
pub fn median_abs(model: &ProbeModel) -> f64 {
    let mut v: Vec<f64> = model.coefficients.iter().map(|c| c.abs()).collect();
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_sweep_has_25_points_and_exact_ends() {
        let p = SweepSpec::standard(vec![]).points().unwrap();
        assert_eq!(p.len(), 25);
        assert_eq!(p[0], vec![1.5, 0.0]);
        assert_eq!(p[12], vec![0.0, 0.0]);
        assert_eq!(p[24], vec![0.0, 1.5]);
        assert_eq!(p[1], vec![1.375, 0.0]);
    }

    #[test]
    fn non_dividing_increment_is_an_error() {
        let s = SweepSpec {
            increment: 0.2,
            ..SweepSpec::standard(vec![])
        };
        assert!(s.points().is_err());
    }

    #[test]
    fn zero_length_path_is_one_point() {
        let s = SweepSpec {
            waypoints: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            increment: 0.125,
            noise: vec![],
        };
        assert_eq!(s.points().unwrap(), vec![vec![0.5, 0.5]]);
    }

    #[test]
    fn overrides_are_verbatim_and_deterministic() {
        let spec = ForcingSpec {
            overrides: vec![(VarId::Code(1), 5.0), (VarId::Code(2), 0.0), (VarId::Z(3), -9.25)],
            base: BaseLatent::Random,
            n_samples: 20,
        };
        let a = forcing_latents(2, 8, &spec, 4).unwrap();
        assert_eq!(a, forcing_latents(2, 8, &spec, 4).unwrap());
        for l in &a {
            assert_eq!(l.code, vec![5.0, 0.0]);
            assert_eq!(l.noise[3], -9.25);
        }
        let bad = ForcingSpec {
            overrides: vec![(VarId::Z(8), 1.0)],
            ..spec
        };
        assert!(forcing_latents(2, 8, &bad, 4).is_err());
    }

    #[test]
    fn empty_overrides_match_training_sampling() {
        let spec = ForcingSpec {
            overrides: vec![],
            base: BaseLatent::Random,
            n_samples: 5,
        };
        let a = forcing_latents(2, 4, &spec, 9).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(9);
        let b: Vec<_> = (0..5).map(|_| LatentVector::sample(&mut r, 2, 4).0).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn outcome_parse() {
        assert_eq!("s".parse::<Outcome>().unwrap(), Outcome::S);
        assert_eq!("syllables3".parse::<Outcome>().unwrap(), Outcome::Syllables(3));
        assert!("x".parse::<Outcome>().is_err());
    }
}
