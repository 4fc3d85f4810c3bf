mod common;

use common::dir_bytes;

use std::collections::BTreeSet;

use redupgan::annotate::{annotate, evaluate, AnnotatorConfig};
use redupgan::corpus::{build_corpus, load_manifest, synth_item, Phone, SynthConfig};
use redupgan::Error;

#[test]
fn paper_corpus_counts_and_annotator_accuracy() {
    let tmp = tempfile::tempdir().unwrap();
    let m = build_corpus(&SynthConfig::paper(), tmp.path(), 7).unwrap();
    assert_eq!(m.items.len(), 996);
    let s_items: Vec<_> = m.items.iter().filter(|i| i.s_initial()).collect();
    assert_eq!(s_items.len(), 132);
    let s_bases: BTreeSet<String> = s_items.iter().map(|i| i.word()).collect();
    assert_eq!(s_bases.len(), 27);
    assert_eq!(s_items.iter().filter(|i| i.reduplicated).count(), 0);

    let back = load_manifest(&m.manifest_path()).unwrap();
    assert_eq!(back, m);
    back.verify_audio().unwrap();

    let r = evaluate(&m, &AnnotatorConfig::default()).unwrap();
    assert!(r.redup_accuracy() >= 0.95, "{r:?}");
    assert!(r.s_accuracy() >= 0.95, "{r:?}");
}

#[test]
fn corpus_build_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    build_corpus(&SynthConfig::desk(), a.path(), 11).unwrap();
    build_corpus(&SynthConfig::desk(), b.path(), 11).unwrap();
    let (da, db) = (dir_bytes(a.path()), dir_bytes(b.path()));
    assert!(da.len() > 996);
    assert!(da == db, "corpus builds differ");
}

#[test]
fn s_initial_bare_form_is_not_reduplication() {
    let cfg = AnnotatorConfig::default();
    for preset in ["paper", "desk"] {
        let sc = SynthConfig::preset(preset).unwrap();
        for seed in 0..5 {
            let w = synth_item(&Phone::parse_word("tupali").unwrap(), 1, &sc, seed).unwrap();
            let a = annotate(&w.samples, sc.sample_rate, &cfg);
            assert!(!a.reduplicated, "{preset} seed {seed}: {a:?}");
            let w = synth_item(&Phone::parse_word("sapali").unwrap(), 1, &sc, seed).unwrap();
            let a = annotate(&w.samples, sc.sample_rate, &cfg);
            assert!(a.s_initial && !a.reduplicated, "{preset} seed {seed}: {a:?}");
        }
    }
}

#[test]
fn missing_manifest_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let e = load_manifest(&tmp.path().join("manifest.csv")).unwrap_err();
    assert!(matches!(e, Error::MissingFiles(_)), "{e}");
}

#[test]
fn unknown_preset_is_an_error() {
    assert!(SynthConfig::preset("huge").is_err());
}
