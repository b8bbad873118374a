// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeSet;

use causelens::chaingen::{
    generate_dataset, read_jsonl, validate_cross_alignment, verify_tiling, write_jsonl, ComponentId, Lexicon,
};
use causelens::condition::{Language, Order};

fn full() -> Vec<causelens::chaingen::AnnotatedSample> {
    generate_dataset(&Lexicon::bundled(), &Language::ALL, &Order::ALL)
}

#[test]
fn bundled_lexicon_yields_1600_tiled_samples() {
    let lex = Lexicon::bundled();
    assert_eq!(lex.len(), 400);
    let samples = full();
    assert_eq!(samples.len(), 1600);
    let failures: Vec<String> = samples.iter().filter_map(|s| verify_tiling(s).err()).collect();
    assert!(failures.is_empty(), "{failures:?}");
}

#[test]
fn bundled_lexicon_aligns_across_languages() {
    let report = validate_cross_alignment(&full());
    assert_eq!(report.keys_checked, 400);
    assert!(report.mismatches.is_empty(), "{:?}", &report.mismatches[..report.mismatches.len().min(5)]);
}

#[test]
fn forward_samples_expose_the_thirteen_components() {
    let expected: BTreeSet<ComponentId> = ComponentId::SYNTACTIC.into_iter().collect();
    for s in full().iter().filter(|s| s.order == Order::Forward) {
        assert_eq!(s.component_ids(), expected, "{}", s.key);
    }
}

#[test]
fn generation_is_deterministic_and_round_trips() {
    let a = full();
    let b = full();
    let mut bytes_a = Vec::new();
    let mut bytes_b = Vec::new();
    write_jsonl(&mut bytes_a, &a).unwrap();
    write_jsonl(&mut bytes_b, &b).unwrap();
    assert_eq!(bytes_a, bytes_b);
    assert_eq!(read_jsonl(&bytes_a[..]).unwrap(), a);
}
