use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use redupgan::annotate::{annotate_dir, calibrate, pair_identity, write_annotations_csv};
use redupgan::corpus::{build_corpus, load_manifest, CorpusManifest, SynthConfig};
use redupgan::gantrain::{resume, train, uniform_open, Checkpoint, VarId};
use redupgan::kv::KvFile;
use redupgan::probe::{
    fit_lasso_logistic, force_and_generate, interpolation_sweep, median_abs, probe_dataset, rank_all, ranking_csv,
    ranking_svg, wug_test, write_outputs, BaseLatent, ForcingSpec, LassoOptions, Outcome, SweepSpec, SAMPLE_RATE,
};
use redupgan::stats::{binom_exact, fisher_exact, ContingencyTable};
use redupgan::Error;

use crate::args::{Cli, Command, Common};
use crate::error::{CliError, CliResult};
use crate::experiment::ExperimentConfig;
use crate::manifest;

pub const OUT_ENV: &str = "REDUPGAN_OUT";

fn out_dir(common: &Common, cfg: &ExperimentConfig, name: &str) -> PathBuf {
    if let Some(o) = &common.out {
        return o.clone();
    }
    let root = cfg
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("redupgan-out"));
    root.join(name)
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e).into())
}

fn write_json(path: &Path, v: &Value) -> CliResult<()> {
    write_file(path, &(serde_json::to_string_pretty(v).map_err(Error::from)? + "\n"))
}

fn read_json(path: &Path) -> CliResult<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text).map_err(Error::from)?)
}

fn parse_overrides(items: &[String]) -> CliResult<Vec<(VarId, f64)>> {
    items
        .iter()
        .map(|s| {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| usage(format!("expected VAR=VALUE, got '{s}'")))?;
            let id: VarId = k.trim().parse().map_err(|e: Error| usage(e.to_string()))?;
            let v: f64 = v.trim().parse().map_err(|_| usage(format!("bad value in '{s}'")))?;
            Ok((id, v))
        })
        .collect()
}

fn load_corpus(dir: &Path) -> CliResult<CorpusManifest> {
    Ok(load_manifest(dir)?)
}

fn fisher_json(t: &ContingencyTable) -> CliResult<Value> {
    let r = fisher_exact(t)?;
    Ok(json!({
        "table": [[t.a, t.b], [t.c, t.d]],
        "odds_ratio": r.odds_ratio_cmle,
        "sample_odds_ratio": r.sample_or,
        "p_value": r.p_two_sided,
    }))
}

pub fn run(cli: Cli) -> CliResult<()> {
    let name = cli.command.name();
    let common = cli.command.common().clone();
    let mut cfg = ExperimentConfig::load(common.config.as_deref(), &common.sets, common.seed)?;
    let out = out_dir(&common, &cfg, name);
    match cli.command {
        Command::SynthCorpus { preset, .. } => {
            if let Some(p) = preset {
                cfg.preset = p;
            }
            let sc = SynthConfig::preset(&cfg.preset).map_err(|e| usage(e.to_string()))?;
            let m = build_corpus(&sc, &out, cfg.seed)?;
            manifest::write(&out, name, &cfg, &[])?;
            let s = m.items.iter().filter(|i| i.s_initial()).count();
            let r = m.items.iter().filter(|i| i.reduplicated).count();
            println!(
                "{} items ({r} reduplicated, {s} [s]-initial) written to {}",
                m.items.len(),
                out.display()
            );
        }
        Command::Train {
            corpus, mode, steps, resume: from, ..
        } => {
            let mut kv = KvFile::default();
            if let Some(m) = mode {
                kv.set("mode", m);
            }
            if let Some(s) = steps {
                kv.set("steps", s);
            }
            cfg.train = cfg.train.clone().apply_kv(&kv)?;
            let m = load_corpus(&corpus)?;
            let manifest_csv = m.manifest_path();
            let outcome = match &from {
                Some(ck) => {
                    manifest::write(&out, name, &cfg, &[&manifest_csv, ck])?;
                    resume(ck, &m, &out, steps)?
                }
                None => {
                    manifest::write(&out, name, &cfg, &[&manifest_csv])?;
                    train(&m, &cfg.train, &out)?
                }
            };
            println!("{} steps, checkpoint {}", outcome.steps, outcome.checkpoint.display());
        }
        Command::Generate { ckpt, n, force, .. } => {
            let ck = Checkpoint::load(&ckpt)?;
            let spec = ForcingSpec {
                overrides: parse_overrides(&force)?,
                base: BaseLatent::Random,
                n_samples: n,
            };
            let forced = force_and_generate(&ck, &spec, cfg.seed, &cfg.annotator)?;
            write_outputs(&out.join("audio"), &forced.outputs)?;
            manifest::write(&out, name, &cfg, &[&ckpt])?;
            let summary = json!({ "overrides": force, "summary": forced.summary });
            write_json(&out.join("generate.json"), &summary)?;
            println!("{}", serde_json::to_string_pretty(&summary).map_err(Error::from)?);
        }
        Command::Annotate { input, .. } => {
            if !input.is_dir() {
                return Err(usage(format!("{} is not a directory", input.display())));
            }
            let rows = annotate_dir(&input, &cfg.annotator)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            write_annotations_csv(&out.join("annotations.csv"), &rows)?;
            manifest::write(&out, name, &cfg, &[])?;
            let redup = rows.iter().filter(|r| r.annotation.reduplicated).count();
            let s = rows.iter().filter(|r| r.annotation.s_initial).count();
            println!("{} files: {redup} reduplicated, {s} [s]-initial", rows.len());
        }
        Command::Table2 {
            ckpt,
            levels,
            n,
            counts_only,
            counts,
            ..
        } => table2(&out, &cfg, ckpt.as_deref(), &levels, n, counts_only, &counts)?,
        Command::Interpolate {
            ckpt,
            n_sets,
            increment,
            extent,
            counts_only,
            identical,
            transitions,
            ..
        } => {
            if counts_only {
                let (k, t) = match (identical, transitions) {
                    (Some(k), Some(t)) => (k, t),
                    _ => return Err(usage("--counts-only needs --identical and --transitions")),
                };
                let v = identical_tests(k, t)?;
                std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
                write_json(&out.join("interpolate.json"), &v)?;
                println!("{}", serde_json::to_string_pretty(&v).map_err(Error::from)?);
            } else {
                interpolate(&out, &cfg, ckpt.as_deref().unwrap(), n_sets, increment, extent)?;
            }
        }
        Command::Probe { ckpt, outcome, n, .. } => {
            let outcome: Outcome = match outcome {
                Some(o) => o.parse().map_err(|e: Error| usage(e.to_string()))?,
                None => cfg.probe_outcome,
            };
            cfg.probe_outcome = outcome;
            probe(&out, &cfg, &ckpt, outcome, n)?;
        }
        Command::Wug {
            ckpt,
            probe,
            s_var,
            s_value,
            force,
            n,
            compare,
            counts_only,
            hits,
            other_hits,
            other_n,
            ..
        } => {
            if counts_only {
                let (h, oh) = match (hits, other_hits) {
                    (Some(h), Some(o)) => (h, o),
                    _ => return Err(usage("--counts-only needs --hits and --other-hits")),
                };
                let on = other_n.unwrap_or(n as u64);
                if h > n as u64 || oh > on {
                    return Err(usage("hit counts exceed sample counts"));
                }
                let v = json!({
                    "this": { "n": n, "hits": h },
                    "other": { "n": on, "hits": oh },
                    "fisher": fisher_json(&ContingencyTable::new(on - oh, oh, n as u64 - h, h))?,
                });
                std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
                write_json(&out.join("wug_compare.json"), &v)?;
                println!("{}", serde_json::to_string_pretty(&v).map_err(Error::from)?);
            } else {
                wug(&out, &cfg, ckpt.as_deref().unwrap(), probe.as_deref(), s_var, s_value, &force, n, compare.as_deref())?;
            }
        }
        Command::CalibrateAnnotator { corpus, .. } => {
            let m = load_corpus(&corpus)?;
            let (best, report) = calibrate(&m, &cfg.annotator)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let kv = best.to_kv();
            let mut text = String::from("# annotator thresholds; pass with --config\n");
            for k in kv.keys() {
                text.push_str(&format!("annotator.{k} = {}\n", kv.get_str(k).unwrap()));
            }
            write_file(&out.join("annotator.cfg"), &text)?;
            cfg.annotator = best;
            manifest::write(&out, name, &cfg, &[&m.manifest_path()])?;
            let v = json!({
                "items": report.items,
                "reduplication_accuracy": report.redup_accuracy(),
                "s_initial_accuracy": report.s_accuracy(),
                "syllable_accuracy": report.syllable_accuracy(),
                "s_reduplicated_false_positives": report.s_redup_false_positives,
            });
            write_json(&out.join("accuracy.json"), &v)?;
            println!("{}", serde_json::to_string_pretty(&v).map_err(Error::from)?);
        }
        Command::Report { run, .. } => report(&out, &run)?,
    }
    Ok(())
}

fn table2(
    out: &Path,
    cfg: &ExperimentConfig,
    ckpt: Option<&Path>,
    levels: &[f64],
    n: usize,
    counts_only: bool,
    counts: &[String],
) -> CliResult<()> {
    if levels.is_empty() {
        return Err(usage("no forcing levels"));
    }
    // (level, [bare_a, redup_a, bare_b, redup_b])
    let mut rows: Vec<(f64, [u64; 4])> = Vec::new();
    if counts_only {
        if counts.len() != levels.len() {
            return Err(usage(format!("{} levels but {} --counts", levels.len(), counts.len())));
        }
        for (&k, c) in levels.iter().zip(counts) {
            let v: Vec<u64> = c
                .split(',')
                .map(|x| x.trim().parse())
                .collect::<Result<_, _>>()
                .map_err(|_| usage(format!("bad counts '{c}'")))?;
            let v: [u64; 4] = v.try_into().map_err(|_| usage(format!("--counts needs 4 numbers, got '{c}'")))?;
            rows.push((k, v));
        }
    } else {
        if n == 0 {
            return Err(usage("n must be positive"));
        }
        let path = ckpt.unwrap();
        let ck = Checkpoint::load(path)?;
        if ck.n_codes() != 2 {
            return Err(usage(format!("table2 needs a two-code model, checkpoint has {}", ck.n_codes())));
        }
        for (i, &k) in levels.iter().enumerate() {
            let mut c = [0u64; 4];
            for (j, code) in [[k, 0.0], [0.0, k]].iter().enumerate() {
                let spec = ForcingSpec {
                    overrides: vec![(VarId::Code(1), code[0]), (VarId::Code(2), code[1])],
                    base: BaseLatent::Random,
                    n_samples: n,
                };
                let seed = cfg.seed.wrapping_add((2 * i + j) as u64);
                let f = force_and_generate(&ck, &spec, seed, &cfg.annotator)?;
                write_outputs(&out.join(format!("code_{}_{}", code[0], code[1])), &f.outputs)?;
                c[2 * j] = (f.summary.n - f.summary.reduplicated) as u64;
                c[2 * j + 1] = f.summary.reduplicated as u64;
            }
            rows.push((k, c));
        }
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut csv = String::from("code,bare,redup,redup_pct\n");
    let mut tests = Vec::new();
    println!("{:<12} {:>6} {:>6} {:>7}", "code", "bare", "redup", "redup%");
    for (k, c) in &rows {
        for (label, bare, redup) in [(format!("[{k}, 0]"), c[0], c[1]), (format!("[0, {k}]"), c[2], c[3])] {
            let pct = 100.0 * redup as f64 / (bare + redup).max(1) as f64;
            println!("{label:<12} {bare:>6} {redup:>6} {pct:>6.1}%");
            csv.push_str(&format!("\"{label}\",{bare},{redup},{pct:.1}\n"));
        }
        let t = ContingencyTable::new(c[0], c[1], c[2], c[3]);
        let f = fisher_json(&t)?;
        println!("level {k}: OR = {:.2}, p = {:.3e}", f["odds_ratio"].as_f64().unwrap_or(f64::INFINITY), f["p_value"].as_f64().unwrap_or(f64::NAN));
        tests.push(json!({ "level": k, "fisher": f }));
    }
    write_file(&out.join("table2.csv"), &csv)?;
    write_json(&out.join("table2.json"), &json!({ "n": n, "counts_only": counts_only, "tests": tests }))?;
    if !counts_only {
        manifest::write(out, "table2", cfg, &[ckpt.unwrap()])?;
    }
    Ok(())
}

fn identical_tests(identical: u64, transitions: u64) -> CliResult<Value> {
    if identical > transitions {
        return Err(usage("identical pairs exceed transitions"));
    }
    let mut tests = Vec::new();
    for (label, p0) in [("1/243", 1.0 / 243.0), ("0.2", 0.2)] {
        let r = binom_exact(identical, transitions, p0)?;
        tests.push(json!({
            "null": label,
            "p0": p0,
            "p_value": r.p_two_sided,
            "estimate": r.estimate,
            "ci95": [r.ci_lower, r.ci_upper],
        }));
    }
    Ok(json!({ "identical": identical, "transitions": transitions, "binomial": tests }))
}

fn interpolate(out: &Path, cfg: &ExperimentConfig, ckpt: &Path, n_sets: usize, increment: f64, extent: f64) -> CliResult<()> {
    if n_sets == 0 {
        return Err(usage("n_sets must be positive"));
    }
    let ck = Checkpoint::load(ckpt)?;
    if ck.n_codes() != 2 {
        return Err(usage("interpolation needs a two-code model"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut csv = String::from("set,transition_index,identical,similarity\n");
    let (mut transitions, mut identical, mut outputs) = (0u64, 0u64, 0usize);
    for set in 0..n_sets {
        let noise: Vec<f64> = (0..ck.n_z()).map(|_| uniform_open(&mut rng)).collect();
        let spec = SweepSpec {
            waypoints: vec![vec![extent, 0.0], vec![0.0, 0.0], vec![0.0, extent]],
            increment,
            noise,
        };
        let sweep = interpolation_sweep(&ck, &spec, &cfg.annotator)?;
        outputs += sweep.outputs.len();
        write_outputs(&out.join(format!("sets/set_{set:03}")), &sweep.outputs)?;
        match sweep.transition {
            Some(t) => {
                transitions += 1;
                let (a, b) = (&sweep.outputs[t - 1], &sweep.outputs[t]);
                let (bare, red) = if a.annotation.reduplicated { (b, a) } else { (a, b) };
                let (same, sim) = pair_identity(&bare.wave, &red.wave, SAMPLE_RATE, &cfg.annotator);
                identical += u64::from(same);
                csv.push_str(&format!("{set},{t},{},{sim:.4}\n", u8::from(same)));
            }
            None => csv.push_str(&format!("{set},,,\n")),
        }
    }
    write_file(&out.join("sets.csv"), &csv)?;
    let mut v = json!({ "sets": n_sets, "outputs": outputs, "transitions": transitions, "identical": identical });
    if transitions > 0 {
        v["analysis"] = identical_tests(identical, transitions)?;
    }
    write_json(&out.join("interpolate.json"), &v)?;
    manifest::write(out, "interpolate", cfg, &[ckpt])?;
    println!("{}", serde_json::to_string_pretty(&v).map_err(Error::from)?);
    Ok(())
}

fn probe(out: &Path, cfg: &ExperimentConfig, ckpt: &Path, outcome: Outcome, n: Option<usize>) -> CliResult<()> {
    let ck = Checkpoint::load(ckpt)?;
    let n = n.or(cfg.probe_n).unwrap_or(if ck.n_codes() > 0 { 1000 } else { 500 });
    let (ds, outputs) = probe_dataset(&ck, outcome, n, cfg.seed, &cfg.annotator)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_file(&out.join("dataset.csv"), &ds.to_csv())?;
    write_outputs(&out.join("audio"), &outputs)?;
    manifest::write(out, "probe", cfg, &[ckpt])?;
    let positives = ds.positives();
    if positives == 0 || positives == ds.rows() {
        return Err(Error::InvalidInput(format!(
            "all {} outputs were annotated {} = {}; the probe needs both classes (dataset kept in {})",
            ds.rows(),
            outcome,
            u8::from(positives > 0),
            out.display()
        ))
        .into());
    }
    let opts = LassoOptions {
        folds: cfg.probe_folds,
        fold_seed: cfg.seed,
        ..LassoOptions::default()
    };
    let model = fit_lasso_logistic(&ds, None, &opts)?;
    write_json(&out.join("model.json"), &serde_json::to_value(&model).map_err(Error::from)?)?;
    write_file(&out.join("ranking.csv"), &ranking_csv(&model))?;
    write_file(&out.join("ranking.svg"), &ranking_svg(&model))?;
    let rank = rank_all(&model);
    let med = median_abs(&model);
    let top: Vec<Value> = rank
        .iter()
        .take(5)
        .map(|(id, a)| json!({ "variable": id.to_string(), "abs_estimate": a }))
        .collect();
    let v = json!({
        "outcome": outcome.to_string(),
        "n": ds.rows(),
        "positives": positives,
        "lambda": model.lambda,
        "median_abs_estimate": med,
        "top": top,
        "nonzero": model.coefficients.iter().filter(|c| **c != 0.0).count(),
    });
    write_json(&out.join("probe.json"), &v)?;
    println!("{}", serde_json::to_string_pretty(&v).map_err(Error::from)?);
    Ok(())
}

/// Top-ranked noise variable and its signed estimate from a ranking CSV.
fn top_from_ranking(path: &Path) -> CliResult<(VarId, f64)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(usage(format!("{} is not a ranking CSV", path.display())));
        }
        let id: VarId = f[1].parse().map_err(|e: Error| usage(e.to_string()))?;
        if matches!(id, VarId::Z(_)) {
            let est: f64 = f[3].parse().map_err(|_| usage(format!("bad estimate in {}", path.display())))?;
            return Ok((id, est));
        }
    }
    Err(usage(format!("no noise variable in {}", path.display())))
}

#[allow(clippy::too_many_arguments)]
fn wug(
    out: &Path,
    cfg: &ExperimentConfig,
    ckpt: &Path,
    probe: Option<&Path>,
    s_var: Option<String>,
    s_value: Option<f64>,
    force: &[String],
    n: usize,
    compare: Option<&Path>,
) -> CliResult<()> {
    if let Some(p) = probe {
        if !p.exists() {
            return Err(usage(format!("probe file {} not found", p.display())));
        }
    }
    if let Some(p) = compare {
        if !p.exists() {
            return Err(usage(format!("comparison file {} not found", p.display())));
        }
    }
    let ranked = probe.map(top_from_ranking).transpose()?;
    let var: VarId = match (&s_var, ranked) {
        (Some(s), _) => s.parse().map_err(|e: Error| usage(e.to_string()))?,
        (None, Some((id, _))) => id,
        (None, None) => return Err(usage("give --probe or --s-var")),
    };
    let value = match (s_value, ranked) {
        (Some(v), _) => v,
        (None, Some((_, est))) if s_var.is_none() => 5.0f64.copysign(est),
        _ => return Err(usage("give --s-value")),
    };
    let overrides = parse_overrides(force)?;
    if overrides.is_empty() {
        return Err(usage("give the reduplication forcing with --force (e.g. c2=7.25)"));
    }
    let ck = Checkpoint::load(ckpt)?;
    let r = wug_test(&ck, var, value, &overrides, n, cfg.seed, &cfg.annotator)?;
    write_outputs(&out.join("audio"), &r.outputs)?;
    let mut inputs = vec![ckpt];
    inputs.extend(probe);
    manifest::write(out, "wug", cfg, &inputs)?;
    let mut v = json!({
        "s_variable": var.to_string(),
        "s_value": value,
        "force": force,
        "n": r.n,
        "hits": r.hits,
        "rate": r.rate(),
        "summary": r.summary,
    });
    if let Some(p) = compare {
        let other = read_json(p)?;
        let (on, oh) = match (other["n"].as_u64(), other["hits"].as_u64()) {
            (Some(a), Some(b)) if b <= a => (a, b),
            _ => return Err(usage(format!("{} is not a wug result", p.display()))),
        };
        v["compare"] = json!({
            "other": p.display().to_string(),
            "fisher": fisher_json(&ContingencyTable::new(on - oh, oh, (r.n - r.hits) as u64, r.hits as u64))?,
        });
    }
    write_json(&out.join("wug.json"), &v)?;
    println!("{}", serde_json::to_string_pretty(&v).map_err(Error::from)?);
    Ok(())
}

fn report(out: &Path, run: &Path) -> CliResult<()> {
    if !run.is_dir() {
        return Err(usage(format!("{} is not a directory", run.display())));
    }
    let mut md = format!("# Report for {}\n\n", run.display());
    let metrics = run.join("metrics.csv");
    if metrics.exists() {
        let text = std::fs::read_to_string(&metrics).map_err(|e| Error::io(&metrics, e))?;
        let lines: Vec<&str> = text.lines().collect();
        md.push_str(&format!("## Training\n\n{} logged steps.\n\n", lines.len().saturating_sub(1)));
        if lines.len() > 1 {
            md.push_str(&format!("| {} |\n", lines[0].replace(',', " | ")));
            md.push_str(&format!("|{}\n", "---|".repeat(lines[0].split(',').count())));
            let step = (lines.len() / 10).max(1);
            for l in lines[1..].iter().step_by(step).chain(lines.last()) {
                md.push_str(&format!("| {} |\n", l.replace(',', " | ")));
            }
            md.push('\n');
        }
    }
    let mut ckpts: Vec<String> = std::fs::read_dir(run)
        .map_err(|e| Error::io(run, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".rdg"))
        .collect();
    ckpts.sort();
    if !ckpts.is_empty() {
        md.push_str(&format!("Checkpoints: {}\n\n", ckpts.join(", ")));
    }
    for f in ["generate.json", "table2.json", "interpolate.json", "probe.json", "wug.json", "wug_compare.json", "accuracy.json"] {
        let p = run.join(f);
        if p.exists() {
            let v = read_json(&p)?;
            md.push_str(&format!(
                "## {f}\n\n```json\n{}\n```\n\n",
                serde_json::to_string_pretty(&v).map_err(Error::from)?
            ));
        }
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_file(&out.join("report.md"), &md)?;
    print!("{md}");
    Ok(())
}
