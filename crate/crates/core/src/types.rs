//! Data model shared by every stage: questions, interactions, latent traits
//! and the containers that hold them.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type StudentId = String;
pub type ItemId = String;

/// A closed interval `[lo, hi]` with `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidConfig(format!(
                "degenerate interval [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    /// `n` evenly spaced points including both endpoints.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        debug_assert!(n >= 2);
        let last = (n - 1) as f64;
        (0..n)
            .map(|i| {
                if i == n - 1 {
                    self.hi
                } else {
                    self.lo + self.width() * (i as f64) / last
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub text: String,
    pub is_correct: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub item_id: ItemId,
    pub text: String,
    pub choices: Vec<Choice>,
}

impl Question {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Error::InvalidQuestion {
            item_id: self.item_id.clone(),
            reason: msg.to_string(),
        };
        if self.choices.len() < 2 {
            return Err(bad("fewer than 2 choices"));
        }
        if !self.choices.iter().any(|c| c.is_correct) {
            return Err(bad("no correct choice"));
        }
        if self.choices.iter().any(|c| c.text.trim().is_empty()) {
            return Err(bad("empty choice text"));
        }
        Ok(())
    }

    pub fn correct_choices(&self) -> impl Iterator<Item = &Choice> {
        self.choices.iter().filter(|c| c.is_correct)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interaction {
    pub student_id: StudentId,
    pub item_id: ItemId,
    pub correct: bool,
    /// Milliseconds since epoch.
    pub timestamp: i64,
}

impl Interaction {
    pub fn new(student: &str, item: &str, correct: bool, timestamp: i64) -> Self {
        Self {
            student_id: student.to_string(),
            item_id: item.to_string(),
            correct,
            timestamp,
        }
    }
}

/// Per-item latent traits of the two-parameter logistic model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItemParams {
    #[serde(rename = "a")]
    pub discrimination: f64,
    #[serde(rename = "b")]
    pub difficulty: f64,
}

impl ItemParams {
    pub fn new(discrimination: f64, difficulty: f64) -> Self {
        Self {
            discrimination,
            difficulty,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkillEstimate {
    pub theta: f64,
    pub domain: Interval,
}

/// Questions keyed by item id. Iteration order is insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QuestionBank {
    questions: Vec<Question>,
    index: HashMap<ItemId, usize>,
}

impl QuestionBank {
    pub fn new(questions: Vec<Question>) -> Result<Self> {
        let mut bank = Self::default();
        for q in questions {
            bank.insert(q)?;
        }
        Ok(bank)
    }

    pub fn insert(&mut self, question: Question) -> Result<()> {
        question.validate()?;
        if self.index.contains_key(&question.item_id) {
            return Err(Error::DuplicateItem(question.item_id));
        }
        self.index
            .insert(question.item_id.clone(), self.questions.len());
        self.questions.push(question);
        Ok(())
    }

    pub fn get(&self, item_id: &str) -> Option<&Question> {
        self.index.get(item_id).map(|&i| &self.questions[i])
    }

    pub fn contains(&self, item_id: &str) -> bool {
        self.index.contains_key(item_id)
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Question> {
        self.questions.iter()
    }

    pub fn item_ids(&self) -> impl Iterator<Item = &ItemId> {
        self.questions.iter().map(|q| &q.item_id)
    }

    /// Sub-bank restricted to `ids`, preserving bank order.
    pub fn subset(&self, ids: &HashSet<ItemId>) -> QuestionBank {
        let questions: Vec<Question> = self
            .questions
            .iter()
            .filter(|q| ids.contains(&q.item_id))
            .cloned()
            .collect();
        QuestionBank::new(questions).expect("subset of a valid bank is valid")
    }
}

/// Interaction records in a stable order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InteractionLog {
    pub records: Vec<Interaction>,
}

impl InteractionLog {
    pub fn new(records: Vec<Interaction>) -> Self {
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Interaction> {
        self.records.iter()
    }

    /// Distinct item ids in order of first appearance.
    pub fn item_ids(&self) -> Vec<ItemId> {
        let mut seen = HashSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(r.item_id.as_str()))
            .map(|r| r.item_id.clone())
            .collect()
    }

    /// Distinct student ids in order of first appearance.
    pub fn student_ids(&self) -> Vec<StudentId> {
        let mut seen = HashSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(r.student_id.as_str()))
            .map(|r| r.student_id.clone())
            .collect()
    }

    pub fn filter<F: Fn(&Interaction) -> bool>(&self, keep: F) -> InteractionLog {
        InteractionLog::new(self.records.iter().filter(|r| keep(r)).cloned().collect())
    }

    /// Fails on the first record whose item is missing from `bank`.
    pub fn check_against(&self, bank: &QuestionBank) -> Result<()> {
        match self.records.iter().find(|r| !bank.contains(&r.item_id)) {
            Some(r) => Err(Error::UnknownItem(r.item_id.clone())),
            None => Ok(()),
        }
    }

    /// Per-student answer sequences sorted by timestamp (stable on ties).
    /// Students are returned in order of first appearance.
    pub fn sequences_by_student(&self) -> Vec<(StudentId, Vec<&Interaction>)> {
        let mut order: Vec<StudentId> = Vec::new();
        let mut groups: HashMap<&str, Vec<&Interaction>> = HashMap::new();
        for r in &self.records {
            groups
                .entry(r.student_id.as_str())
                .or_insert_with(|| {
                    order.push(r.student_id.clone());
                    Vec::new()
                })
                .push(r);
        }
        order
            .into_iter()
            .map(|s| {
                let mut seq = groups.remove(s.as_str()).unwrap_or_default();
                seq.sort_by_key(|r| r.timestamp);
                (s, seq)
            })
            .collect()
    }
}

/// Keeps, for each (student, item) pair, the earliest attempt. Ties on
/// timestamp go to the first occurrence; survivors keep their input order.
pub fn filter_first_timers(log: &InteractionLog) -> InteractionLog {
    let mut best: HashMap<(&str, &str), usize> = HashMap::new();
    for (i, r) in log.records.iter().enumerate() {
        best.entry((r.student_id.as_str(), r.item_id.as_str()))
            .and_modify(|j| {
                if r.timestamp < log.records[*j].timestamp {
                    *j = i;
                }
            })
            .or_insert(i);
    }
    let mut keep: Vec<usize> = best.into_values().collect();
    keep.sort_unstable();
    InteractionLog::new(keep.into_iter().map(|i| log.records[i].clone()).collect())
}

/// Keeps interactions on items answered by at least `min_students` distinct
/// students.
pub fn filter_min_support(log: &InteractionLog, min_students: usize) -> InteractionLog {
    let mut students: HashMap<&str, HashSet<&str>> = HashMap::new();
    for r in &log.records {
        students
            .entry(r.item_id.as_str())
            .or_default()
            .insert(r.student_id.as_str());
    }
    let supported: HashSet<&str> = students
        .into_iter()
        .filter(|(_, s)| s.len() >= min_students)
        .map(|(item, _)| item)
        .collect();
    log.filter(|r| supported.contains(r.item_id.as_str()))
}

/// Deterministically ordered map of item traits.
pub type ItemParamMap = BTreeMap<ItemId, ItemParams>;
