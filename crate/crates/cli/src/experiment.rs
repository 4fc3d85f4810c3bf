use std::path::{Path, PathBuf};

use redupgan::annotate::AnnotatorConfig;
use redupgan::gantrain::TrainConfig;
use redupgan::kv::KvFile;
use redupgan::probe::Outcome;

use crate::error::{CliError, CliResult};

pub const FILE_NAME: &str = "experiment.cfg";

/// Everything a command may read, flattened into one `key = value` file:
/// `seed`, `corpus.preset`, `train.*`, `annotator.*`, `probe.*`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub preset: String,
    pub train: TrainConfig,
    pub annotator: AnnotatorConfig,
    pub probe_n: Option<usize>,
    pub probe_outcome: Outcome,
    pub probe_folds: usize,
    pub out: Option<PathBuf>,
}

fn section(kv: &KvFile, prefix: &str) -> KvFile {
    let mut out = KvFile::default();
    for k in kv.keys() {
        if let Some(rest) = k.strip_prefix(prefix) {
            out.set(rest, kv.get_str(k).unwrap());
        }
    }
    out
}

impl ExperimentConfig {
    pub fn from_kv(kv: &KvFile) -> CliResult<Self> {
        for k in kv.keys() {
            let known = matches!(k, "seed" | "out" | "corpus.preset" | "probe.n" | "probe.outcome" | "probe.folds")
                || k.starts_with("train.")
                || k.starts_with("annotator.");
            if !known {
                return Err(CliError::Usage(format!("unknown config key '{k}'")));
            }
        }
        let seed = kv.get("seed")?.unwrap_or(0);
        let preset: String = kv.get("corpus.preset")?.unwrap_or_else(|| "desk".to_string());
        let mut train_kv = section(kv, "train.");
        let base = TrainConfig::preset(&preset).map_err(|e| CliError::Usage(e.to_string()))?;
        if train_kv.get_str("seed").is_none() {
            train_kv.set("seed", seed);
        }
        let train = base.apply_kv(&train_kv)?;
        let annotator = AnnotatorConfig::from_kv(&section(kv, "annotator."))?;
        Ok(ExperimentConfig {
            seed,
            preset,
            train,
            annotator,
            probe_n: kv.get("probe.n")?,
            probe_outcome: kv.get("probe.outcome")?.unwrap_or(Outcome::S),
            probe_folds: kv.get("probe.folds")?.unwrap_or(10),
            out: kv.get::<String>("out")?.map(PathBuf::from),
        })
    }

    /// Optional config file, then `key=value` overrides, then a seed flag.
    pub fn load(file: Option<&Path>, sets: &[String], seed: Option<u64>) -> CliResult<Self> {
        let mut kv = match file {
            Some(p) if !p.exists() => return Err(CliError::Usage(format!("config file {} not found", p.display()))),
            Some(p) => KvFile::read(p)?,
            None => KvFile::default(),
        };
        for s in sets {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got '{s}'")))?;
            kv.set(k.trim(), v.trim());
        }
        if let Some(s) = seed {
            kv.set("seed", s);
            if sets.iter().all(|s| !s.trim_start().starts_with("train.seed")) {
                kv.set("train.seed", s);
            }
        }
        Self::from_kv(&kv)
    }

    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::default();
        kv.set("seed", self.seed);
        kv.set("corpus.preset", &self.preset);
        for k in self.train.to_kv().keys().map(String::from).collect::<Vec<_>>() {
            kv.set(&format!("train.{k}"), self.train.to_kv().get_str(&k).unwrap());
        }
        let a = self.annotator.to_kv();
        for k in a.keys() {
            kv.set(&format!("annotator.{k}"), a.get_str(k).unwrap());
        }
        if let Some(n) = self.probe_n {
            kv.set("probe.n", n);
        }
        kv.set("probe.outcome", self.probe_outcome);
        kv.set("probe.folds", self.probe_folds);
        if let Some(o) = &self.out {
            kv.set("out", o.display());
        }
        kv
    }

    pub fn render(&self) -> String {
        self.to_kv().render()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_overrides() {
        let cfg = ExperimentConfig::load(None, &["train.steps=7".into(), "annotator.similarity=0.4".into()], Some(3)).unwrap();
        assert_eq!(cfg.train.steps, 7);
        assert_eq!(cfg.train.seed, 3);
        assert_eq!(cfg.annotator.similarity, 0.4);
        let back = ExperimentConfig::from_kv(&KvFile::parse(&cfg.render(), "t").unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        assert!(matches!(
            ExperimentConfig::load(None, &["colour=blue".into()], None),
            Err(CliError::Usage(_))
        ));
        assert!(matches!(
            ExperimentConfig::load(None, &["corpus.preset=huge".into()], None),
            Err(CliError::Usage(_))
        ));
    }
}
