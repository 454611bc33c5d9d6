//! Cross-module workflows through the public API.

use std::collections::HashSet;

use qtraits_core::eval::{
    classification_report, experiment_mixed, experiment_test_only, majority_baseline, mse,
    split_experiment, SplitSpec,
};
use qtraits_core::io;
use qtraits_core::irt::calibrate;
use qtraits_core::synth::{generate, recovery_report, SynthConfig};
use qtraits_core::textpipe::{featurize, featurize_with, Encoding};
use qtraits_core::{HyperParams, IrtConfig, ItemId, ItemParams, Question};

fn small(seed: u64) -> SynthConfig {
    SynthConfig {
        n_students: 150,
        n_items: 40,
        answers_per_item: 60,
        seed,
        ..SynthConfig::planted(2.0)
    }
}

#[test]
fn generated_data_survives_serialization() {
    let truth = generate(&small(1)).unwrap();
    let mut buf = Vec::new();
    io::write_interactions(&mut buf, &truth.log).unwrap();
    assert_eq!(io::read_interactions(buf.as_slice()).unwrap(), truth.log);

    let mut buf = Vec::new();
    io::write_questions(&mut buf, &truth.bank).unwrap();
    assert_eq!(io::read_questions(buf.as_slice()).unwrap(), truth.bank);
}

#[test]
fn calibration_recovers_generating_difficulty() {
    let truth = generate(&small(2)).unwrap();
    let cal = calibrate(&truth.log, &IrtConfig::default()).unwrap();
    let rep = recovery_report(&truth, &cal).unwrap();
    assert!(rep.pearson_b > 0.8, "{rep:?}");
    assert!(cal
        .log_likelihood_trace
        .windows(2)
        .all(|w| w[1] >= w[0] - 1e-9));
}

#[test]
fn generating_parameters_beat_the_majority_baseline() {
    let truth = generate(&small(3)).unwrap();
    let ds = split_experiment(&truth.log, &truth.bank, &SplitSpec::default()).unwrap();
    let test: HashSet<ItemId> = ds.test_set();
    let cfg = IrtConfig::default();
    let source = |id: &str| -> Option<ItemParams> { truth.item_params.get(id).copied() };

    let only = experiment_test_only(&ds.ds_val, &test, &source, &cfg, 0.5).unwrap();
    let mixed = experiment_mixed(&ds.ds_val, &test, &source, &source, &cfg, 0.5).unwrap();
    assert_eq!(only.len(), mixed.len());

    let actuals: Vec<bool> = ds.ds_gte.iter().map(|r| r.correct).collect();
    let majority = majority_baseline(&actuals, &mixed).unwrap();
    let acc = |t| classification_report(t).unwrap().accuracy;
    assert!(acc(&mixed) > acc(&majority));
}

#[test]
fn text_regressor_learns_planted_tokens() {
    let truth = generate(&SynthConfig {
        n_items: 200,
        answers_per_item: 10,
        ..small(4)
    })
    .unwrap();
    let qs: Vec<&Question> = truth.bank.iter().collect();
    let y: Vec<f64> = qs
        .iter()
        .map(|q| truth.item_params[&q.item_id].difficulty)
        .collect();
    let (train_q, test_q) = qs.split_at(160);
    let (train_y, test_y) = y.split_at(160);

    let fm = featurize(train_q.iter().copied(), Encoding::QuestionOnly, 100).unwrap();
    let test_x = featurize_with(
        test_q.iter().copied(),
        Encoding::QuestionOnly,
        &fm.vocabulary,
    );
    let fit = |hp: HyperParams| {
        let m = hp.fit(&fm.rows, train_y, 0).unwrap();
        mse(test_y, &m.predict_rows(&test_x.rows).unwrap())
    };
    let forest = fit(HyperParams::Rf {
        n_estimators: 50,
        max_depth: 10,
    });
    let control = fit(HyperParams::mean_control());
    assert!(forest < 0.5 * control, "forest {forest} control {control}");
}
