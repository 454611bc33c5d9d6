//! Shared fixtures for the benchmarks.

use qtraits_core::synth::{generate, SynthConfig, SynthGroundTruth};
use qtraits_core::ItemParams;

/// Planted-signal dataset of the given size.
pub fn dataset(n_students: usize, n_items: usize, answers_per_item: usize) -> SynthGroundTruth {
    let cfg = SynthConfig {
        n_students,
        n_items,
        answers_per_item,
        seed: 42,
        ..SynthConfig::planted(2.0)
    };
    generate(&cfg).expect("valid fixture config")
}

/// Every answer of the first student, paired with the generating parameters.
pub fn answers_of_first_student(truth: &SynthGroundTruth) -> Vec<(ItemParams, bool)> {
    let first = truth.thetas.keys().next().expect("students");
    truth
        .log
        .iter()
        .filter(|r| &r.student_id == first)
        .map(|r| (truth.item_params[&r.item_id], r.correct))
        .collect()
}
