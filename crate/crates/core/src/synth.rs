//! Synthetic question banks and interaction logs with known ground truth.
//!
//! Item traits are drawn inside the calibration bounds, then shifted by the
//! deltas of the signal tokens planted in each question's text. Answers are
//! Bernoulli draws from the item response function.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{index, IndexedRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::irt::{irf, CalibrationResult, IrtConfig};
use crate::types::{
    Choice, Interaction, InteractionLog, Interval, ItemParamMap, ItemParams, Question,
    QuestionBank, StudentId,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalToken {
    pub token: String,
    pub difficulty_delta: f64,
    pub discrimination_delta: f64,
}

impl SignalToken {
    pub fn new(token: &str, difficulty_delta: f64, discrimination_delta: f64) -> Self {
        Self {
            token: token.to_string(),
            difficulty_delta,
            discrimination_delta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_students: usize,
    pub n_items: usize,
    pub answers_per_item: usize,
    pub theta_bounds: Interval,
    pub b_bounds: Interval,
    pub a_bounds: Interval,
    pub vocab_signal: Vec<SignalToken>,
    /// Signal tokens planted in each question (drawn with replacement).
    pub signal_tokens_per_item: usize,
    /// Scales the base draw of b and a around the centre of their bounds;
    /// 1.0 covers the whole interval.
    pub base_spread: f64,
    /// Filler words per question text.
    pub base_text_length: usize,
    pub choices_per_item: usize,
    /// Overrides every item's discrimination when set.
    pub fixed_discrimination: Option<f64>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let irt = IrtConfig::default();
        Self {
            n_students: 1000,
            n_items: 100,
            answers_per_item: 150,
            theta_bounds: irt.theta_bounds,
            b_bounds: irt.b_bounds,
            a_bounds: irt.a_bounds,
            vocab_signal: Vec::new(),
            signal_tokens_per_item: 0,
            base_spread: 1.0,
            base_text_length: 12,
            choices_per_item: 4,
            fixed_discrimination: None,
            seed: 0,
        }
    }
}

/// Words used for the planted-signal preset. They survive stemming as
/// distinct tokens and never occur in filler text.
pub const SIGNAL_WORDS: [&str; 10] = [
    "kernel", "lambda", "quorum", "tensor", "vector", "socket", "cipher", "buffer", "cursor",
    "schema",
];

impl SynthConfig {
    /// Strong text signal on difficulty: half of [`SIGNAL_WORDS`] add
    /// `delta` to b, the other half subtract it, and a narrow base spread
    /// leaves most of the variance to the planted tokens.
    pub fn planted(delta: f64) -> Self {
        let vocab_signal = SIGNAL_WORDS
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                SignalToken::new(w, sign * delta, 0.0)
            })
            .collect();
        Self {
            vocab_signal,
            signal_tokens_per_item: 3,
            base_spread: 0.2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for iv in [self.theta_bounds, self.b_bounds, self.a_bounds] {
            Interval::new(iv.lo, iv.hi)?;
        }
        if self.n_students == 0 || self.n_items == 0 || self.answers_per_item == 0 {
            return Err(Error::InvalidConfig("counts must be >= 1".into()));
        }
        if self.answers_per_item > self.n_students {
            return Err(Error::InvalidConfig(format!(
                "answers_per_item {} exceeds n_students {}",
                self.answers_per_item, self.n_students
            )));
        }
        if self.choices_per_item < 2 {
            return Err(Error::InvalidConfig("choices_per_item must be >= 2".into()));
        }
        if !(0.0..=1.0).contains(&self.base_spread) {
            return Err(Error::InvalidConfig(
                "base_spread must lie in [0, 1]".into(),
            ));
        }
        if self.signal_tokens_per_item > 0 && self.vocab_signal.is_empty() {
            return Err(Error::InvalidConfig(
                "signal_tokens_per_item > 0 needs a non-empty vocab_signal".into(),
            ));
        }
        let finite = self
            .vocab_signal
            .iter()
            .all(|s| s.difficulty_delta.is_finite() && s.discrimination_delta.is_finite());
        if !finite || self.fixed_discrimination.is_some_and(|a| !a.is_finite()) {
            return Err(Error::InvalidConfig("deltas must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthGroundTruth {
    pub item_params: ItemParamMap,
    pub thetas: BTreeMap<StudentId, f64>,
    pub bank: QuestionBank,
    pub log: InteractionLog,
}

/// The planted parameters as written to `truth.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub items: ItemParamMap,
    pub students: BTreeMap<StudentId, f64>,
}

impl SynthGroundTruth {
    pub fn truth_file(&self) -> TruthFile {
        TruthFile {
            items: self.item_params.clone(),
            students: self.thetas.clone(),
        }
    }
}

const SYLLABLES: [&str; 16] = [
    "ba", "do", "fi", "ku", "la", "mo", "ni", "pu", "ra", "so", "ti", "vu", "za", "ge", "ho", "je",
];

/// Pronounceable pseudo-words `<3 syllables>x`; the closing consonant keeps
/// them stable under stemming.
fn filler_pool() -> Vec<String> {
    let mut pool = Vec::new();
    for a in SYLLABLES {
        for b in SYLLABLES.iter().step_by(3) {
            for c in SYLLABLES.iter().step_by(5) {
                pool.push(format!("{a}{b}{c}x"));
            }
        }
    }
    pool
}

fn padded(prefix: char, i: usize, n: usize) -> String {
    let width = n.saturating_sub(1).to_string().len();
    format!("{prefix}{i:0width$}")
}

fn stream(seed: u64, s: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s);
    rng
}

fn centred(rng: &mut ChaCha8Rng, iv: Interval, spread: f64) -> f64 {
    let mid = (iv.lo + iv.hi) / 2.0;
    let half = iv.width() / 2.0 * spread;
    if half == 0.0 {
        mid
    } else {
        rng.random_range(mid - half..=mid + half)
    }
}

/// Deterministic under `config.seed`. Skills, traits, text and answers use
/// separate random streams.
pub fn generate(config: &SynthConfig) -> Result<SynthGroundTruth> {
    config.validate()?;
    let student_ids: Vec<StudentId> = (0..config.n_students)
        .map(|i| padded('s', i, config.n_students))
        .collect();
    let item_ids: Vec<String> = (0..config.n_items)
        .map(|i| padded('q', i, config.n_items))
        .collect();

    let mut theta_rng = stream(config.seed, 0);
    let thetas: Vec<f64> = (0..config.n_students)
        .map(|_| theta_rng.random_range(config.theta_bounds.lo..=config.theta_bounds.hi))
        .collect();

    let mut trait_rng = stream(config.seed, 1);
    let mut text_rng = stream(config.seed, 2);
    let fillers = filler_pool();
    let mut item_params = ItemParamMap::new();
    let mut questions = Vec::with_capacity(config.n_items);
    let mut params_in_order = Vec::with_capacity(config.n_items);
    for id in &item_ids {
        let mut b = centred(&mut trait_rng, config.b_bounds, config.base_spread);
        let mut a = centred(&mut trait_rng, config.a_bounds, config.base_spread);
        let mut words: Vec<String> = (0..config.base_text_length)
            .map(|_| fillers.choose(&mut text_rng).expect("pool").clone())
            .collect();
        for _ in 0..config.signal_tokens_per_item {
            let sig = config.vocab_signal.choose(&mut text_rng).expect("signal");
            b += sig.difficulty_delta;
            a += sig.discrimination_delta;
            let at = text_rng.random_range(0..=words.len());
            words.insert(at, sig.token.clone());
        }
        if let Some(fixed) = config.fixed_discrimination {
            a = fixed;
        } else {
            a = config.a_bounds.clamp(a);
        }
        let params = ItemParams::new(a, config.b_bounds.clamp(b));
        let correct_at = text_rng.random_range(0..config.choices_per_item);
        let choices = (0..config.choices_per_item)
            .map(|c| Choice {
                text: (0..3)
                    .map(|_| fillers.choose(&mut text_rng).expect("pool").as_str())
                    .collect::<Vec<_>>()
                    .join(" "),
                is_correct: c == correct_at,
            })
            .collect();
        questions.push(Question {
            item_id: id.clone(),
            text: words.join(" "),
            choices,
        });
        item_params.insert(id.clone(), params);
        params_in_order.push(params);
    }

    let mut answer_rng = stream(config.seed, 3);
    let mut records = Vec::with_capacity(config.n_items * config.answers_per_item);
    for (id, params) in item_ids.iter().zip(&params_in_order) {
        let mut students =
            index::sample(&mut answer_rng, config.n_students, config.answers_per_item).into_vec();
        students.sort_unstable();
        for s in students {
            let p = irf(*params, thetas[s]);
            let correct = answer_rng.random::<f64>() < p;
            let timestamp = answer_rng.random_range(0..1_000_000_000_000i64);
            records.push(Interaction::new(&student_ids[s], id, correct, timestamp));
        }
    }

    Ok(SynthGroundTruth {
        item_params,
        thetas: student_ids.into_iter().zip(thetas).collect(),
        bank: QuestionBank::new(questions)?,
        log: InteractionLog::new(records),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub pearson_b: f64,
    pub pearson_a: f64,
    pub rmse_b: f64,
    pub rmse_a: f64,
    pub rmse_theta: f64,
}

/// Pearson correlation; NaN when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

fn rmse(x: &[f64], y: &[f64]) -> f64 {
    (x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
}

/// Compares calibrated parameters with the planted ones. Item ids must match
/// exactly; calibrated students must be a non-empty subset of the planted
/// ones (students who never answered are not calibrated).
pub fn recovery_report(
    truth: &SynthGroundTruth,
    calibrated: &CalibrationResult,
) -> Result<RecoveryReport> {
    let t_items: BTreeSet<_> = truth.item_params.keys().collect();
    let c_items: BTreeSet<_> = calibrated.item_params.keys().collect();
    if t_items != c_items {
        let diff = t_items
            .symmetric_difference(&c_items)
            .next()
            .expect("differ");
        return Err(Error::IdMismatch(format!("item {diff}")));
    }
    if t_items.is_empty() || calibrated.skills.is_empty() {
        return Err(Error::Empty("calibrated parameters"));
    }
    if let Some(s) = calibrated
        .skills
        .keys()
        .find(|s| !truth.thetas.contains_key(*s))
    {
        return Err(Error::IdMismatch(format!("student {s}")));
    }

    let (mut tb, mut cb, mut ta, mut ca) = (vec![], vec![], vec![], vec![]);
    for (id, t) in &truth.item_params {
        let c = calibrated.item_params[id];
        tb.push(t.difficulty);
        cb.push(c.difficulty);
        ta.push(t.discrimination);
        ca.push(c.discrimination);
    }
    let (tt, ct): (Vec<f64>, Vec<f64>) = calibrated
        .skills
        .iter()
        .map(|(id, s)| (truth.thetas[id], s.theta))
        .unzip();
    Ok(RecoveryReport {
        pearson_b: pearson(&tb, &cb),
        pearson_a: pearson(&ta, &ca),
        rmse_b: rmse(&tb, &cb),
        rmse_a: rmse(&ta, &ca),
        rmse_theta: rmse(&tt, &ct),
    })
}
