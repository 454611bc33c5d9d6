//! Two-parameter logistic item response model.
//!
//! Calibration is alternating coordinate ascent over bounded domains: every
//! sub-maximization is a grid search followed by golden-section refinement,
//! and an update replaces the current value only when it strictly raises
//! the objective. The joint log-likelihood therefore never decreases, and
//! parameters on a flat stretch of the clamped likelihood stay put.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{
    Interaction, InteractionLog, Interval, ItemId, ItemParamMap, ItemParams, SkillEstimate,
    StudentId,
};

/// Probabilities are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const EPS: f64 = 1e-9;

const GOLDEN_TOL: f64 = 1e-10;
const GOLDEN_MAX_ITER: usize = 200;
const ITEM_REFINE_CYCLES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrtConfig {
    pub theta_bounds: Interval,
    pub b_bounds: Interval,
    pub a_bounds: Interval,
    pub max_rounds: usize,
    /// Convergence threshold on the largest absolute parameter change in a
    /// round.
    pub tolerance: f64,
    /// Grid points for one-dimensional (skill) maximization.
    pub grid_resolution: usize,
    /// Difficulty-axis points of the coarse item grid; the discrimination
    /// axis gets a tenth of that (at least 3).
    pub item_grid_resolution: usize,
}

impl Default for IrtConfig {
    fn default() -> Self {
        Self {
            theta_bounds: Interval { lo: -5.0, hi: 5.0 },
            b_bounds: Interval { lo: -5.0, hi: 5.0 },
            a_bounds: Interval { lo: -1.0, hi: 2.5 },
            max_rounds: 100,
            tolerance: 1e-4,
            grid_resolution: 1001,
            item_grid_resolution: 101,
        }
    }
}

impl IrtConfig {
    pub fn validate(&self) -> Result<()> {
        for iv in [self.theta_bounds, self.b_bounds, self.a_bounds] {
            Interval::new(iv.lo, iv.hi)?;
        }
        if self.max_rounds < 1 {
            return Err(Error::InvalidConfig("max_rounds must be >= 1".into()));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::InvalidConfig("tolerance must be > 0".into()));
        }
        if self.grid_resolution < 3 || self.item_grid_resolution < 3 {
            return Err(Error::InvalidConfig("grid resolution must be >= 3".into()));
        }
        Ok(())
    }

    fn item_grid_shape(&self) -> (usize, usize) {
        let nb = self.item_grid_resolution;
        (nb, (nb / 10).max(3))
    }
}

/// Probability of a correct answer: `1 / (1 + exp(-a (theta - b)))`.
#[inline]
pub fn irf(params: ItemParams, theta: f64) -> f64 {
    1.0 / (1.0 + (-params.discrimination * (theta - params.difficulty)).exp())
}

#[inline]
fn answer_ll(p: f64, correct: bool) -> f64 {
    let p = p.clamp(EPS, 1.0 - EPS);
    if correct {
        p.ln()
    } else {
        (1.0 - p).ln()
    }
}

/// Joint log-likelihood of `log` under the given parameters.
pub fn log_likelihood(
    log: &InteractionLog,
    item_params: &ItemParamMap,
    skills: &BTreeMap<StudentId, f64>,
) -> Result<f64> {
    log.iter().try_fold(0.0, |acc, r| {
        let params = item_params
            .get(&r.item_id)
            .ok_or_else(|| Error::MissingParams {
                kind: "item",
                id: r.item_id.clone(),
            })?;
        let theta = skills
            .get(&r.student_id)
            .ok_or_else(|| Error::MissingParams {
                kind: "student",
                id: r.student_id.clone(),
            })?;
        Ok(acc + answer_ll(irf(*params, *theta), r.correct))
    })
}

fn skill_ll(answers: &[(ItemParams, bool)], theta: f64) -> f64 {
    answers
        .iter()
        .map(|&(p, c)| answer_ll(irf(p, theta), c))
        .sum()
}

/// Golden-section search for the maximum of `f` on `[lo, hi]`.
fn golden_max<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..GOLDEN_MAX_ITER {
        if hi - lo < GOLDEN_TOL {
            break;
        }
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Grid search over `domain` then golden-section refinement between the
/// neighbours of the best grid point. Ties go to the smaller argument.
fn maximize_1d<F: Fn(f64) -> f64>(f: F, domain: Interval, n_grid: usize) -> (f64, f64) {
    let grid = domain.grid(n_grid);
    let (mut best_i, mut best_f) = (0, f64::NEG_INFINITY);
    for (i, &x) in grid.iter().enumerate() {
        let fx = f(x);
        if fx > best_f {
            best_i = i;
            best_f = fx;
        }
    }
    let lo = grid[best_i.saturating_sub(1)];
    let hi = grid[(best_i + 1).min(n_grid - 1)];
    let (xr, fr) = golden_max(&f, lo, hi);
    let xg = grid[best_i];
    if fr > best_f || (fr == best_f && xr < xg) {
        (xr, fr)
    } else {
        (xg, best_f)
    }
}

/// Bounded maximum-likelihood skill for a set of answered calibrated items.
pub fn estimate_skill(answers: &[(ItemParams, bool)], config: &IrtConfig) -> Result<SkillEstimate> {
    if answers.is_empty() {
        return Err(Error::Empty("answers"));
    }
    let (theta, _) = maximize_1d(
        |t| skill_ll(answers, t),
        config.theta_bounds,
        config.grid_resolution,
    );
    Ok(SkillEstimate {
        theta,
        domain: config.theta_bounds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub item_params: ItemParamMap,
    pub skills: BTreeMap<StudentId, SkillEstimate>,
    pub rounds_used: usize,
    pub converged: bool,
    /// Joint log-likelihood at initialization and after every round.
    pub log_likelihood_trace: Vec<f64>,
    /// Items answered all-correct or all-wrong; their parameters sit at a
    /// bound.
    pub extreme_items: Vec<ItemId>,
    /// Students with all-correct or all-wrong answers.
    pub extreme_students: Vec<StudentId>,
}

impl CalibrationResult {
    pub fn disconnected(&self) -> bool {
        !self.extreme_items.is_empty() || !self.extreme_students.is_empty()
    }

    pub fn theta_map(&self) -> BTreeMap<StudentId, f64> {
        self.skills
            .iter()
            .map(|(k, v)| (k.clone(), v.theta))
            .collect()
    }
}

fn item_ll(answers: &[(f64, bool)], params: ItemParams) -> f64 {
    answers
        .iter()
        .map(|&(theta, c)| answer_ll(irf(params, theta), c))
        .sum()
}

fn maximize_item(answers: &[(f64, bool)], config: &IrtConfig) -> (ItemParams, f64) {
    let (nb, na) = config.item_grid_shape();
    let bs = config.b_bounds.grid(nb);
    let as_ = config.a_bounds.grid(na);
    let (mut ib, mut ia, mut best) = (0, 0, f64::NEG_INFINITY);
    // Scan b outer, a inner: ties resolve to the smallest b, then smallest a.
    for (i, &b) in bs.iter().enumerate() {
        for (j, &a) in as_.iter().enumerate() {
            let v = item_ll(answers, ItemParams::new(a, b));
            if v > best {
                best = v;
                ib = i;
                ia = j;
            }
        }
    }
    let mut cur = ItemParams::new(as_[ia], bs[ib]);
    let b_step = config.b_bounds.width() / (nb - 1) as f64;
    let a_step = config.a_bounds.width() / (na - 1) as f64;
    for _ in 0..ITEM_REFINE_CYCLES {
        let lo = config.b_bounds.clamp(cur.difficulty - b_step);
        let hi = config.b_bounds.clamp(cur.difficulty + b_step);
        let a = cur.discrimination;
        let (b, v) = golden_max(&|b| item_ll(answers, ItemParams::new(a, b)), lo, hi);
        if v > best {
            best = v;
            cur.difficulty = b;
        }
        let lo = config.a_bounds.clamp(cur.discrimination - a_step);
        let hi = config.a_bounds.clamp(cur.discrimination + a_step);
        let b = cur.difficulty;
        let (a, v) = golden_max(&|a| item_ll(answers, ItemParams::new(a, b)), lo, hi);
        if v > best {
            best = v;
            cur.discrimination = a;
        }
    }
    (cur, best)
}

fn is_extreme(answers: impl Iterator<Item = bool>) -> bool {
    let (mut right, mut wrong) = (false, false);
    for c in answers {
        if c {
            right = true;
        } else {
            wrong = true;
        }
    }
    !(right && wrong)
}

/// Joint maximum-likelihood calibration of item and student parameters.
pub fn calibrate(log: &InteractionLog, config: &IrtConfig) -> Result<CalibrationResult> {
    config.validate()?;
    if log.is_empty() {
        return Err(Error::Empty("interaction log"));
    }

    let mut student_ids = log.student_ids();
    let mut item_ids = log.item_ids();
    student_ids.sort();
    item_ids.sort();
    let s_index: HashMap<&str, usize> = student_ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let i_index: HashMap<&str, usize> = item_ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();

    let mut by_student: Vec<Vec<(usize, bool)>> = vec![Vec::new(); student_ids.len()];
    let mut by_item: Vec<Vec<(usize, bool)>> = vec![Vec::new(); item_ids.len()];
    for Interaction {
        student_id,
        item_id,
        correct,
        ..
    } in log.iter()
    {
        let s = s_index[student_id.as_str()];
        let i = i_index[item_id.as_str()];
        by_student[s].push((i, *correct));
        by_item[i].push((s, *correct));
    }

    let mut theta = vec![config.theta_bounds.clamp(0.0); student_ids.len()];
    let mut items = vec![
        ItemParams::new(config.a_bounds.clamp(1.0), config.b_bounds.clamp(0.0));
        item_ids.len()
    ];

    let joint = |theta: &[f64], items: &[ItemParams]| -> f64 {
        by_student
            .iter()
            .enumerate()
            .map(|(s, ans)| {
                ans.iter()
                    .map(|&(i, c)| answer_ll(irf(items[i], theta[s]), c))
                    .sum::<f64>()
            })
            .sum()
    };

    let mut trace = vec![joint(&theta, &items)];
    let mut converged = false;
    let mut rounds_used = 0;

    for round in 0..config.max_rounds {
        rounds_used = round + 1;

        let new_theta: Vec<f64> = by_student
            .par_iter()
            .enumerate()
            .map(|(s, ans)| {
                let answers: Vec<(ItemParams, bool)> =
                    ans.iter().map(|&(i, c)| (items[i], c)).collect();
                let current = skill_ll(&answers, theta[s]);
                let (t, v) = maximize_1d(
                    |t| skill_ll(&answers, t),
                    config.theta_bounds,
                    config.grid_resolution,
                );
                if v > current {
                    t
                } else {
                    theta[s]
                }
            })
            .collect();

        let new_items: Vec<ItemParams> = by_item
            .par_iter()
            .enumerate()
            .map(|(i, ans)| {
                let answers: Vec<(f64, bool)> =
                    ans.iter().map(|&(s, c)| (new_theta[s], c)).collect();
                let current = item_ll(&answers, items[i]);
                let (p, v) = maximize_item(&answers, config);
                if v > current {
                    p
                } else {
                    items[i]
                }
            })
            .collect();

        let max_change = theta
            .iter()
            .zip(&new_theta)
            .map(|(x, y)| (x - y).abs())
            .chain(items.iter().zip(&new_items).flat_map(|(x, y)| {
                [
                    (x.discrimination - y.discrimination).abs(),
                    (x.difficulty - y.difficulty).abs(),
                ]
            }))
            .fold(0.0, f64::max);

        theta = new_theta;
        items = new_items;
        let ll = joint(&theta, &items);
        log::debug!("calibration round {rounds_used}: ll = {ll:.6}, max change = {max_change:.3e}");
        trace.push(ll);

        if max_change < config.tolerance {
            converged = true;
            break;
        }
    }

    if !converged {
        log::warn!("calibration stopped after {rounds_used} rounds without converging");
    }

    let extreme_items = item_ids
        .iter()
        .zip(&by_item)
        .filter(|(_, ans)| is_extreme(ans.iter().map(|a| a.1)))
        .map(|(id, _)| id.clone())
        .collect();
    let extreme_students = student_ids
        .iter()
        .zip(&by_student)
        .filter(|(_, ans)| is_extreme(ans.iter().map(|a| a.1)))
        .map(|(id, _)| id.clone())
        .collect();

    Ok(CalibrationResult {
        item_params: item_ids.into_iter().zip(items).collect(),
        skills: student_ids
            .into_iter()
            .zip(theta)
            .map(|(id, t)| {
                (
                    id,
                    SkillEstimate {
                        theta: t,
                        domain: config.theta_bounds,
                    },
                )
            })
            .collect(),
        rounds_used,
        converged,
        log_likelihood_trace: trace,
        extreme_items,
        extreme_students,
    })
}

/// One answer in a student's time-ordered sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceStep {
    pub item_id: ItemId,
    pub params: ItemParams,
    pub correct: bool,
    pub timestamp: Option<i64>,
}

impl SequenceStep {
    pub fn new(item_id: &str, params: ItemParams, correct: bool) -> Self {
        Self {
            item_id: item_id.to_string(),
            params,
            correct,
            timestamp: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionStep {
    /// Position in the input sequence.
    pub step: usize,
    pub item_id: ItemId,
    pub predicted_probability: f64,
    pub predicted_correct: bool,
    pub actual_correct: bool,
    pub theta_before: f64,
    pub theta_after: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictionTrace {
    pub steps: Vec<PredictionStep>,
}

impl PredictionTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn extend(&mut self, other: PredictionTrace) {
        self.steps.extend(other.steps);
    }

    /// Adjacent recorded steps of one sequence must chain their skill values.
    pub fn theta_chain_consistent(&self) -> bool {
        self.steps
            .windows(2)
            .all(|w| w[1].step != w[0].step + 1 || w[0].theta_after == w[1].theta_before)
    }
}

/// Sequential prediction: predict each answer from the current skill, then
/// re-estimate the skill from the full history including that answer.
pub fn predict_performance(
    sequence: &[SequenceStep],
    config: &IrtConfig,
    threshold: f64,
) -> Result<PredictionTrace> {
    let flags = vec![true; sequence.len()];
    predict_with_skill_side_channel(sequence, &flags, &flags, config, threshold)
}

/// Like [`predict_performance`], but only steps flagged in `evaluate` are
/// recorded, and only steps flagged in `update_skill` are seen at all.
pub fn predict_with_skill_side_channel(
    sequence: &[SequenceStep],
    update_skill: &[bool],
    evaluate: &[bool],
    config: &IrtConfig,
    threshold: f64,
) -> Result<PredictionTrace> {
    if update_skill.len() != sequence.len() || evaluate.len() != sequence.len() {
        return Err(Error::DimensionMismatch {
            expected: sequence.len(),
            got: update_skill.len().min(evaluate.len()),
        });
    }
    if let Some(step) = (0..sequence.len()).find(|&k| evaluate[k] && !update_skill[k]) {
        return Err(Error::FlagInconsistency { step });
    }
    if let Some(step) = sequence
        .windows(2)
        .position(|w| match (w[0].timestamp, w[1].timestamp) {
            (Some(t0), Some(t1)) => t1 < t0,
            _ => false,
        })
    {
        return Err(Error::UnorderedSequence { step: step + 1 });
    }

    let mut theta = config.theta_bounds.clamp(0.0);
    let mut history: Vec<(ItemParams, bool)> = Vec::new();
    let mut trace = PredictionTrace::default();
    for (k, s) in sequence.iter().enumerate() {
        if !update_skill[k] {
            continue;
        }
        let p = irf(s.params, theta);
        history.push((s.params, s.correct));
        let after = estimate_skill(&history, config)?.theta;
        if evaluate[k] {
            trace.steps.push(PredictionStep {
                step: k,
                item_id: s.item_id.clone(),
                predicted_probability: p,
                predicted_correct: p >= threshold,
                actual_correct: s.correct,
                theta_before: theta,
                theta_after: after,
            });
        }
        theta = after;
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(a: f64, b: f64) -> ItemParams {
        ItemParams::new(a, b)
    }

    #[test]
    fn irf_examples() {
        assert_eq!(irf(p(1.0, 0.0), 0.0), 0.5);
        assert_eq!(irf(p(0.0, 3.0), -4.0), 0.5);
        // 1 / (1 + e^-2)
        assert_abs_diff_eq!(
            irf(p(1.0, 0.0), 2.0),
            0.880_797_077_977_882_3,
            epsilon = 1e-12
        );
    }

    #[test]
    fn log_likelihood_examples() {
        let items: ItemParamMap = [("q1".to_string(), p(1.0, 0.0))].into();
        let skills: BTreeMap<_, _> = [("s1".to_string(), 0.0)].into();
        let one = InteractionLog::new(vec![Interaction::new("s1", "q1", true, 0)]);
        assert_abs_diff_eq!(
            log_likelihood(&one, &items, &skills).unwrap(),
            -std::f64::consts::LN_2,
            epsilon = 1e-12
        );
        assert_eq!(
            log_likelihood(&InteractionLog::default(), &items, &skills).unwrap(),
            0.0
        );
        let two = InteractionLog::new(vec![
            Interaction::new("s1", "q1", true, 0),
            Interaction::new("s1", "q1", false, 1),
        ]);
        assert_abs_diff_eq!(
            log_likelihood(&two, &items, &skills).unwrap(),
            -1.386_294_361_119_890_6,
            epsilon = 1e-12
        );
    }

    #[test]
    fn log_likelihood_names_missing_ids() {
        let items: ItemParamMap = [("q1".to_string(), p(1.0, 0.0))].into();
        let skills: BTreeMap<_, _> = [("s1".to_string(), 0.0)].into();
        let log = InteractionLog::new(vec![Interaction::new("s1", "q9", true, 0)]);
        match log_likelihood(&log, &items, &skills) {
            Err(Error::MissingParams { kind: "item", id }) => assert_eq!(id, "q9"),
            other => panic!("unexpected {other:?}"),
        }
        let log = InteractionLog::new(vec![Interaction::new("s7", "q1", true, 0)]);
        assert!(matches!(
            log_likelihood(&log, &items, &skills),
            Err(Error::MissingParams {
                kind: "student",
                ..
            })
        ));
    }

    #[test]
    fn log_likelihood_is_finite_at_saturation() {
        let items: ItemParamMap = [("q1".to_string(), p(2.5, -5.0))].into();
        let skills: BTreeMap<_, _> = [("s1".to_string(), 5.0)].into();
        let log = InteractionLog::new(vec![Interaction::new("s1", "q1", false, 0)]);
        let ll = log_likelihood(&log, &items, &skills).unwrap();
        assert_abs_diff_eq!(ll, EPS.ln(), epsilon = 1e-6);
    }

    #[test]
    fn skill_boundary_and_symmetric_cases() {
        let cfg = IrtConfig::default();
        let one = estimate_skill(&[(p(1.0, 0.0), true)], &cfg).unwrap();
        assert_eq!(one.theta, 5.0);
        let wrong = estimate_skill(&[(p(1.0, 0.0), false)], &cfg).unwrap();
        assert_eq!(wrong.theta, -5.0);
        let mixed = estimate_skill(&[(p(1.0, 0.0), true), (p(1.0, 0.0), false)], &cfg).unwrap();
        assert_abs_diff_eq!(mixed.theta, 0.0, epsilon = 1e-6);
        assert!(matches!(estimate_skill(&[], &cfg), Err(Error::Empty(_))));
    }

    #[test]
    fn skill_recovery_from_simulated_answers() {
        // The generator is the oracle: Bernoulli draws from the true curve.
        let cfg = IrtConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let theta_true = 1.2;
        let answers: Vec<(ItemParams, bool)> = (0..200)
            .map(|_| {
                let params = p(rng.random_range(0.5..2.5), rng.random_range(-3.0..3.0));
                (params, rng.random::<f64>() < irf(params, theta_true))
            })
            .collect();
        let est = estimate_skill(&answers, &cfg).unwrap();
        assert!(
            (est.theta - theta_true).abs() <= 0.25,
            "theta = {}",
            est.theta
        );
    }

    #[test]
    fn all_correct_item_pins_difficulty_at_lower_bound() {
        let cfg = IrtConfig {
            max_rounds: 5,
            ..Default::default()
        };
        let mut records = Vec::new();
        for s in 0..6 {
            records.push(Interaction::new(&format!("s{s}"), "easy", true, s));
            // Give each student a second item with mixed outcomes.
            records.push(Interaction::new(
                &format!("s{s}"),
                "mixed",
                s % 2 == 0,
                10 + s,
            ));
        }
        let res = calibrate(&InteractionLog::new(records), &cfg).unwrap();
        assert_eq!(res.item_params["easy"].difficulty, cfg.b_bounds.lo);
        assert_eq!(res.extreme_items, vec!["easy".to_string()]);
        assert!(res.disconnected());
    }

    #[test]
    fn single_answer_is_a_boundary_solution() {
        let cfg = IrtConfig::default();
        let log = InteractionLog::new(vec![Interaction::new("s", "q", true, 0)]);
        let res = calibrate(&log, &cfg).unwrap();
        assert_eq!(res.skills["s"].theta, cfg.theta_bounds.hi);
        let item = res.item_params["q"];
        assert_eq!(item.difficulty, cfg.b_bounds.lo);
        assert!(cfg.a_bounds.contains(item.discrimination));
        // The clamped likelihood reaches its supremum.
        let ll = log_likelihood(&log, &res.item_params, &res.theta_map()).unwrap();
        assert_abs_diff_eq!(ll, (1.0 - EPS).ln(), epsilon = 1e-15);
        assert!(res.converged);
    }

    #[test]
    fn calibrate_rejects_empty_log() {
        assert!(matches!(
            calibrate(&InteractionLog::default(), &IrtConfig::default()),
            Err(Error::Empty(_))
        ));
    }

    fn small_synthetic_log(seed: u64) -> InteractionLog {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let thetas: Vec<f64> = (0..60).map(|_| rng.random_range(-3.0..3.0)).collect();
        let items: Vec<ItemParams> = (0..12)
            .map(|_| p(rng.random_range(0.3..2.0), rng.random_range(-3.0..3.0)))
            .collect();
        let mut records = Vec::new();
        for (s, &t) in thetas.iter().enumerate() {
            for (i, &it) in items.iter().enumerate() {
                if rng.random::<f64>() < 0.6 {
                    let c = rng.random::<f64>() < irf(it, t);
                    records.push(Interaction::new(&format!("s{s}"), &format!("q{i}"), c, 0));
                }
            }
        }
        InteractionLog::new(records)
    }

    #[test]
    fn calibration_is_monotone_bounded_and_deterministic() {
        let cfg = IrtConfig {
            max_rounds: 15,
            ..Default::default()
        };
        let log = small_synthetic_log(3);
        let res = calibrate(&log, &cfg).unwrap();
        for w in res.log_likelihood_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
        }
        for ip in res.item_params.values() {
            assert!(cfg.a_bounds.contains(ip.discrimination));
            assert!(cfg.b_bounds.contains(ip.difficulty));
        }
        for s in res.skills.values() {
            assert!(cfg.theta_bounds.contains(s.theta));
        }
        assert_eq!(res.item_params.len(), log.item_ids().len());
        assert_eq!(res.skills.len(), log.student_ids().len());
        let last = *res.log_likelihood_trace.last().unwrap();
        let direct = log_likelihood(&log, &res.item_params, &res.theta_map()).unwrap();
        assert_abs_diff_eq!(last, direct, epsilon = 1e-8);

        let again = calibrate(&log.clone(), &cfg).unwrap();
        assert_eq!(res, again);

        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| calibrate(&log, &cfg).unwrap());
        assert_eq!(res, single);
    }

    #[test]
    fn first_prediction_uses_zero_skill() {
        let cfg = IrtConfig::default();
        let seq = vec![
            SequenceStep::new("q1", p(1.0, 0.0), true),
            SequenceStep::new("q2", p(1.0, 0.0), true),
        ];
        let trace = predict_performance(&seq, &cfg, 0.5).unwrap();
        assert_eq!(trace.steps[0].predicted_probability, 0.5);
        assert!(trace.steps[0].predicted_correct);
        assert_eq!(trace.steps[0].theta_before, 0.0);
        assert_eq!(trace.steps[0].theta_after, 5.0);
        assert!(trace.steps[1].predicted_probability > 0.5);
        assert!(trace.theta_chain_consistent());
    }

    #[test]
    fn side_channel_reductions_and_errors() {
        let cfg = IrtConfig::default();
        let seq: Vec<SequenceStep> = (0..6)
            .map(|i| SequenceStep::new(&format!("q{i}"), p(1.0, i as f64 - 3.0), i % 2 == 0))
            .collect();
        let all = vec![true; 6];
        assert_eq!(
            predict_with_skill_side_channel(&seq, &all, &all, &cfg, 0.5).unwrap(),
            predict_performance(&seq, &cfg, 0.5).unwrap()
        );
        let none = vec![false; 6];
        assert!(
            predict_with_skill_side_channel(&seq, &all, &none, &cfg, 0.5)
                .unwrap()
                .is_empty()
        );

        // Skills still advance through non-evaluated steps.
        let eval_last: Vec<bool> = (0..6).map(|i| i == 5).collect();
        let partial = predict_with_skill_side_channel(&seq, &all, &eval_last, &cfg, 0.5).unwrap();
        let full = predict_performance(&seq, &cfg, 0.5).unwrap();
        assert_eq!(partial.steps, vec![full.steps[5].clone()]);

        let mut bad_eval = none.clone();
        bad_eval[2] = true;
        assert!(matches!(
            predict_with_skill_side_channel(&seq, &none, &bad_eval, &cfg, 0.5),
            Err(Error::FlagInconsistency { step: 2 })
        ));
    }

    #[test]
    fn unordered_timestamps_are_rejected() {
        let cfg = IrtConfig::default();
        let mut seq = vec![
            SequenceStep::new("q1", p(1.0, 0.0), true),
            SequenceStep::new("q2", p(1.0, 0.0), true),
        ];
        seq[0].timestamp = Some(10);
        seq[1].timestamp = Some(5);
        assert!(matches!(
            predict_performance(&seq, &cfg, 0.5),
            Err(Error::UnorderedSequence { step: 1 })
        ));
    }

    #[test]
    fn config_validation() {
        assert!(IrtConfig::default().validate().is_ok());
        let bad = IrtConfig {
            grid_resolution: 2,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = IrtConfig {
            tolerance: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = IrtConfig {
            a_bounds: Interval { lo: 1.0, hi: 1.0 },
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn irf_monotonicity_follows_sign_of_a(a in -3.0f64..3.0, b in -5.0f64..5.0,
                                               t in -5.0f64..5.0, d in 0.01f64..2.0) {
            let lo = irf(p(a, b), t);
            let hi = irf(p(a, b), t + d);
            if a > 1e-6 { prop_assert!(hi > lo); }
            else if a < -1e-6 { prop_assert!(hi < lo); }
            prop_assert_eq!(irf(p(0.0, b), t), 0.5);
        }

        #[test]
        fn irf_point_symmetry(a in -3.0f64..3.0, b in -5.0f64..5.0, t in -5.0f64..5.0) {
            let s = irf(p(a, b), t) + irf(p(a, b), 2.0 * b - t);
            prop_assert!((s - 1.0).abs() < 1e-12);
        }

        #[test]
        fn skill_estimate_stays_in_domain(
            answers in prop::collection::vec((-1.0f64..2.5, -5.0f64..5.0, any::<bool>()), 1..12)
        ) {
            let cfg = IrtConfig { grid_resolution: 101, ..Default::default() };
            let answers: Vec<_> = answers.into_iter().map(|(a, b, c)| (p(a, b), c)).collect();
            let est = estimate_skill(&answers, &cfg).unwrap();
            prop_assert!(cfg.theta_bounds.contains(est.theta));
        }

        #[test]
        fn trace_chain_and_probabilities(
            steps in prop::collection::vec((-1.0f64..2.5, -5.0f64..5.0, any::<bool>()), 1..10)
        ) {
            let cfg = IrtConfig { grid_resolution: 101, ..Default::default() };
            let seq: Vec<_> = steps.into_iter().enumerate()
                .map(|(i, (a, b, c))| SequenceStep::new(&format!("q{i}"), p(a, b), c))
                .collect();
            let trace = predict_performance(&seq, &cfg, 0.5).unwrap();
            prop_assert!(trace.theta_chain_consistent());
            for s in &trace.steps {
                prop_assert!(s.predicted_probability > 0.0 && s.predicted_probability < 1.0);
            }
        }
    }
}
