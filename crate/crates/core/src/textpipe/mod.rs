//! Question text to TF-IDF features: encoding, preprocessing, vocabulary
//! truncation and weighting.

pub mod porter;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::types::Question;

/// Stop-word list version shipped with the crate.
pub const STOPWORDS_VERSION: &str = "en-v1";

static STOPWORDS_SRC: &str = include_str!("../../data/stopwords_en.txt");

fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        STOPWORDS_SRC
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

pub fn is_stopword(word: &str) -> bool {
    stopwords().contains(word)
}

/// Which texts of a question are concatenated into its document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    QuestionOnly,
    QuestionCorrect,
    QuestionFull,
}

impl Encoding {
    pub const ALL: [Encoding; 3] = [
        Encoding::QuestionOnly,
        Encoding::QuestionCorrect,
        Encoding::QuestionFull,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Encoding::QuestionOnly => "question_only",
            Encoding::QuestionCorrect => "question_correct",
            Encoding::QuestionFull => "question_full",
        }
    }
}

impl fmt::Display for Encoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Encoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Encoding::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown encoding {s:?}")))
    }
}

pub fn encode(question: &Question, encoding: Encoding) -> String {
    let appended: Vec<&str> = match encoding {
        Encoding::QuestionOnly => return question.text.clone(),
        Encoding::QuestionCorrect => question
            .correct_choices()
            .map(|c| c.text.as_str())
            .collect(),
        Encoding::QuestionFull => question.choices.iter().map(|c| c.text.as_str()).collect(),
    };
    format!("{} {}", question.text, appended.join(" "))
}

/// Lowercase, split on non-alphanumerics, drop stop words, stem, drop
/// tokens shorter than two characters.
pub fn preprocess(raw: &str) -> Vec<String> {
    raw.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty() && !is_stopword(t))
        .map(porter::stem)
        .filter(|t| t.chars().count() >= 2)
        .collect()
}

/// Truncated vocabulary in rank order (most frequent first).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    corpus_size: usize,
    doc_frequency: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabEntry {
    t: String,
    df: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    n_d: usize,
    tokens: Vec<VocabEntry>,
}

impl Vocabulary {
    pub fn from_parts(corpus_size: usize, entries: Vec<(String, usize)>) -> Result<Self> {
        let mut index = HashMap::with_capacity(entries.len());
        let mut tokens = Vec::with_capacity(entries.len());
        let mut doc_frequency = Vec::with_capacity(entries.len());
        for (i, (t, df)) in entries.into_iter().enumerate() {
            if df == 0 || df > corpus_size {
                return Err(Error::Parse(format!(
                    "document frequency {df} of {t:?} outside [1, {corpus_size}]"
                )));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Parse(format!("duplicate vocabulary token {t:?}")));
            }
            tokens.push(t);
            doc_frequency.push(df);
        }
        Ok(Self {
            tokens,
            index,
            corpus_size,
            doc_frequency,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn position(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn corpus_size(&self) -> usize {
        self.corpus_size
    }

    pub fn doc_frequency(&self, token: &str) -> Option<usize> {
        self.position(token).map(|i| self.doc_frequency[i])
    }

    pub fn to_json(&self) -> String {
        let file = VocabFile {
            n_d: self.corpus_size,
            tokens: self
                .tokens
                .iter()
                .zip(&self.doc_frequency)
                .map(|(t, &df)| VocabEntry { t: t.clone(), df })
                .collect(),
        };
        serde_json::to_string(&file).expect("vocabulary serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: VocabFile = serde_json::from_str(s)?;
        Self::from_parts(
            file.n_d,
            file.tokens.into_iter().map(|e| (e.t, e.df)).collect(),
        )
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

/// Ranks tokens by total occurrences (ties lexicographic) and keeps the top
/// `n_w`.
pub fn build_vocabulary(corpus: &[Vec<String>], n_w: usize) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    if n_w == 0 {
        return Err(Error::InvalidConfig("n_w must be >= 1".into()));
    }
    let mut occurrences: HashMap<&str, usize> = HashMap::new();
    let mut doc_freq: HashMap<&str, usize> = HashMap::new();
    for doc in corpus {
        let mut seen = HashSet::new();
        for t in doc {
            *occurrences.entry(t).or_default() += 1;
            if seen.insert(t.as_str()) {
                *doc_freq.entry(t).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(&str, usize)> = occurrences.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(n_w);
    Vocabulary::from_parts(
        corpus.len(),
        ranked
            .into_iter()
            .map(|(t, _)| (t.to_string(), doc_freq[t]))
            .collect(),
    )
}

/// Dense non-negative TF-IDF weights aligned with a [`Vocabulary`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// `count(w, d) * (ln((N_d + 1) / (df(w) + 1)) + 1)` for every vocabulary
/// token; out-of-vocabulary tokens are ignored and nothing is normalized.
pub fn tfidf(tokens: &[String], vocab: &Vocabulary) -> FeatureVector {
    let mut counts = vec![0usize; vocab.len()];
    for t in tokens {
        if let Some(i) = vocab.position(t) {
            counts[i] += 1;
        }
    }
    let n_d = vocab.corpus_size as f64;
    FeatureVector(
        counts
            .iter()
            .zip(&vocab.doc_frequency)
            .map(|(&c, &df)| {
                if c == 0 {
                    0.0
                } else {
                    c as f64 * (((n_d + 1.0) / (df as f64 + 1.0)).ln() + 1.0)
                }
            })
            .collect(),
    )
}

/// Feature matrix for a set of questions: rows follow `questions`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub item_ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub vocabulary: Vocabulary,
}

/// Encodes and preprocesses every question, builds the truncated vocabulary
/// over them, then weights each document.
pub fn featurize<'a, I>(questions: I, encoding: Encoding, n_w: usize) -> Result<FeatureMatrix>
where
    I: IntoIterator<Item = &'a Question>,
{
    let (item_ids, docs): (Vec<String>, Vec<Vec<String>>) = questions
        .into_iter()
        .map(|q| (q.item_id.clone(), preprocess(&encode(q, encoding))))
        .unzip();
    let vocabulary = build_vocabulary(&docs, n_w)?;
    let rows = docs.iter().map(|d| tfidf(d, &vocabulary).0).collect();
    Ok(FeatureMatrix {
        item_ids,
        rows,
        vocabulary,
    })
}

/// Weights questions against an existing vocabulary (e.g. unseen test items).
pub fn featurize_with<'a, I>(questions: I, encoding: Encoding, vocab: &Vocabulary) -> FeatureMatrix
where
    I: IntoIterator<Item = &'a Question>,
{
    let (item_ids, rows) = questions
        .into_iter()
        .map(|q| {
            let doc = preprocess(&encode(q, encoding));
            (q.item_id.clone(), tfidf(&doc, vocab).0)
        })
        .unzip();
    FeatureMatrix {
        item_ids,
        rows,
        vocabulary: vocab.clone(),
    }
}
