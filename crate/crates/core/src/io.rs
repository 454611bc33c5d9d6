//! File formats: interactions CSV, question bank JSON Lines, calibration,
//! prediction traces, vocabularies, feature matrices, models and reports.
//!
//! Floats are written in Rust's shortest round-trip form and maps are
//! ordered, so identical inputs always produce identical bytes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::GridResult;
use crate::irt::{CalibrationResult, PredictionStep, PredictionTrace};
use crate::textpipe::{FeatureMatrix, Vocabulary};
use crate::types::{
    Interaction, InteractionLog, ItemId, ItemParamMap, Question, QuestionBank, StudentId,
};

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn parse_bool01(s: &str, what: &str) -> Result<bool> {
    match s.trim() {
        "1" => Ok(true),
        "0" => Ok(false),
        other => Err(Error::Parse(format!(
            "{what} must be 0 or 1, got {other:?}"
        ))),
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("invalid {what}: {s:?}")))
}

fn bit(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

const INTERACTION_HEADER: [&str; 4] = ["student_id", "item_id", "correct", "timestamp"];

pub fn read_interactions<R: Read>(reader: R) -> Result<InteractionLog> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != INTERACTION_HEADER {
        return Err(Error::Parse(format!(
            "interactions header must be {}, got {}",
            INTERACTION_HEADER.join(","),
            header.join(",")
        )));
    }
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let timestamp: i64 = parse_num(&row[3], "timestamp")?;
        if timestamp < 0 {
            return Err(Error::Parse(format!("negative timestamp {timestamp}")));
        }
        records.push(Interaction {
            student_id: row[0].to_string(),
            item_id: row[1].to_string(),
            correct: parse_bool01(&row[2], "correct")?,
            timestamp,
        });
    }
    Ok(InteractionLog::new(records))
}

pub fn write_interactions<W: Write>(writer: W, log: &InteractionLog) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(INTERACTION_HEADER)?;
    for r in log.iter() {
        w.write_record([
            r.student_id.as_str(),
            r.item_id.as_str(),
            bit(r.correct),
            &r.timestamp.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_interactions(path: &Path) -> Result<InteractionLog> {
    read_interactions(File::open(path)?)
}

pub fn save_interactions(path: &Path, log: &InteractionLog) -> Result<()> {
    write_interactions(create(path)?, log)
}

/// One question per non-blank line; every question is validated.
pub fn read_questions<R: Read>(reader: R) -> Result<QuestionBank> {
    let mut bank = QuestionBank::default();
    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let q: Question = serde_json::from_str(&line)
            .map_err(|e| Error::Parse(format!("question line {}: {e}", n + 1)))?;
        q.validate()?;
        bank.insert(q)?;
    }
    Ok(bank)
}

pub fn write_questions<W: Write>(mut writer: W, bank: &QuestionBank) -> Result<()> {
    for q in bank.iter() {
        serde_json::to_writer(&mut writer, q)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn load_questions(path: &Path) -> Result<QuestionBank> {
    read_questions(File::open(path)?)
}

pub fn save_questions(path: &Path, bank: &QuestionBank) -> Result<()> {
    write_questions(create(path)?, bank)
}

/// Calibration output: item traits, student skills and convergence status.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub items: ItemParamMap,
    pub students: BTreeMap<StudentId, f64>,
    pub converged: bool,
    pub rounds: usize,
    #[serde(default)]
    pub log_likelihood_trace: Vec<f64>,
    #[serde(default)]
    pub extreme_items: Vec<ItemId>,
    #[serde(default)]
    pub extreme_students: Vec<StudentId>,
}

impl From<&CalibrationResult> for CalibrationFile {
    fn from(c: &CalibrationResult) -> Self {
        Self {
            items: c.item_params.clone(),
            students: c.theta_map(),
            converged: c.converged,
            rounds: c.rounds_used,
            log_likelihood_trace: c.log_likelihood_trace.clone(),
            extreme_items: c.extreme_items.clone(),
            extreme_students: c.extreme_students.clone(),
        }
    }
}

const TRACE_HEADER: [&str; 7] = [
    "step",
    "item_id",
    "p",
    "predicted",
    "actual",
    "theta_before",
    "theta_after",
];

pub fn write_trace<W: Write>(writer: W, trace: &PredictionTrace) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRACE_HEADER)?;
    for s in &trace.steps {
        w.write_record([
            s.step.to_string().as_str(),
            &s.item_id,
            &s.predicted_probability.to_string(),
            bit(s.predicted_correct),
            bit(s.actual_correct),
            &s.theta_before.to_string(),
            &s.theta_after.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace<R: Read>(reader: R) -> Result<PredictionTrace> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != TRACE_HEADER {
        return Err(Error::Parse(format!(
            "unexpected trace header {}",
            header.join(",")
        )));
    }
    let steps = rdr
        .records()
        .map(|row| {
            let row = row?;
            Ok(PredictionStep {
                step: parse_num(&row[0], "step")?,
                item_id: row[1].to_string(),
                predicted_probability: parse_num(&row[2], "p")?,
                predicted_correct: parse_bool01(&row[3], "predicted")?,
                actual_correct: parse_bool01(&row[4], "actual")?,
                theta_before: parse_num(&row[5], "theta_before")?,
                theta_after: parse_num(&row[6], "theta_after")?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(PredictionTrace { steps })
}

pub fn save_trace(path: &Path, trace: &PredictionTrace) -> Result<()> {
    write_trace(create(path)?, trace)
}

pub fn load_trace(path: &Path) -> Result<PredictionTrace> {
    read_trace(File::open(path)?)
}

pub fn save_vocabulary(path: &Path, vocab: &Vocabulary) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(vocab.to_json().as_bytes())?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn load_vocabulary(path: &Path) -> Result<Vocabulary> {
    Vocabulary::from_json(&std::fs::read_to_string(path)?)
}

pub fn write_features<W: Write>(writer: W, fm: &FeatureMatrix) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["item_id"];
    header.extend(fm.vocabulary.tokens().iter().map(String::as_str));
    w.write_record(&header)?;
    for (id, row) in fm.item_ids.iter().zip(&fm.rows) {
        let mut rec = vec![id.clone()];
        rec.extend(row.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Header tokens, item ids and feature rows.
pub type FeatureTable = (Vec<String>, Vec<ItemId>, Vec<Vec<f64>>);

/// Reads item ids, token columns and rows of a feature matrix CSV.
pub fn read_features<R: Read>(reader: R) -> Result<FeatureTable> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.get(0) != Some("item_id") {
        return Err(Error::Parse(
            "feature matrix must start with an item_id column".into(),
        ));
    }
    let tokens: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let (mut ids, mut rows) = (Vec::new(), Vec::new());
    for row in rdr.records() {
        let row = row?;
        ids.push(row[0].to_string());
        rows.push(
            row.iter()
                .skip(1)
                .map(|v| parse_num(v, "feature"))
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    Ok((tokens, ids, rows))
}

pub fn save_features(path: &Path, fm: &FeatureMatrix) -> Result<()> {
    write_features(create(path)?, fm)
}

pub fn write_grid_report<W: Write>(writer: W, results: &[GridResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "model",
        "encoding",
        "n_w",
        "params_json",
        "mean_cv_mse",
        "fold_mses",
    ])?;
    for r in results {
        let folds: Vec<String> = r.fold_mses.iter().map(f64::to_string).collect();
        w.write_record([
            r.hyperparams.kind(),
            r.encoding.as_str(),
            &r.n_w.to_string(),
            &r.hyperparams.to_json(),
            &r.mean_cv_mse.to_string(),
            &folds.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_grid_report(path: &Path, results: &[GridResult]) -> Result<()> {
    write_grid_report(create(path)?, results)
}

pub fn read_grid_report<R: Read>(reader: R) -> Result<Vec<GridResult>> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.records()
        .map(|row| {
            let row = row?;
            if row.len() != 6 {
                return Err(Error::Parse(format!(
                    "grid report row has {} columns",
                    row.len()
                )));
            }
            let fold_mses = row[5]
                .split(';')
                .filter(|s| !s.is_empty())
                .map(|v| parse_num(v, "fold mse"))
                .collect::<Result<_>>()?;
            Ok(GridResult {
                hyperparams: serde_json::from_str(&row[3])?,
                encoding: row[1].parse()?,
                n_w: parse_num(&row[2], "n_w")?,
                fold_mses,
                mean_cv_mse: parse_num(&row[4], "mean_cv_mse")?,
            })
        })
        .collect()
}

pub fn load_grid_report(path: &Path) -> Result<Vec<GridResult>> {
    read_grid_report(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::irt::{calibrate, IrtConfig};
    use crate::regress::HyperParams;
    use crate::textpipe::{featurize, Encoding};
    use crate::types::Choice;

    #[test]
    fn interactions_round_trip() {
        let log = InteractionLog::new(vec![
            Interaction::new("s1", "q1", true, 5),
            Interaction::new("s,2", "q1", false, 0),
        ]);
        let mut buf = Vec::new();
        write_interactions(&mut buf, &log).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("student_id,item_id,correct,timestamp\ns1,q1,1,5\n"));
        assert_eq!(read_interactions(buf.as_slice()).unwrap(), log);
    }

    #[test]
    fn interactions_reject_bad_rows() {
        let bad = [
            "student,item,correct,timestamp\n",
            "student_id,item_id,correct,timestamp\ns,q,2,1\n",
            "student_id,item_id,correct,timestamp\ns,q,1,-1\n",
            "student_id,item_id,correct,timestamp\ns,q,1,x\n",
            "student_id,item_id,correct,timestamp\ns,q,1\n",
        ];
        for b in bad {
            let err = read_interactions(b.as_bytes()).unwrap_err();
            assert!(err.is_data_error(), "{b}: {err}");
        }
    }

    #[test]
    fn questions_round_trip_and_validate() {
        let q = Question {
            item_id: "q1".into(),
            text: "What is the capital of Germany?".into(),
            choices: vec![
                Choice {
                    text: "Berlin".into(),
                    is_correct: true,
                },
                Choice {
                    text: "Bonn".into(),
                    is_correct: false,
                },
            ],
        };
        let bank = QuestionBank::new(vec![q.clone()]).unwrap();
        let mut buf = Vec::new();
        write_questions(&mut buf, &bank).unwrap();
        assert_eq!(read_questions(buf.as_slice()).unwrap(), bank);

        let line = String::from_utf8(buf).unwrap();
        let dup = format!("{line}\n{line}");
        assert!(matches!(
            read_questions(dup.as_bytes()),
            Err(Error::DuplicateItem(_))
        ));
        let single = r#"{"item_id":"q","text":"t","choices":[{"text":"a","is_correct":true}]}"#;
        assert!(matches!(
            read_questions(single.as_bytes()),
            Err(Error::InvalidQuestion { .. })
        ));
        assert!(matches!(
            read_questions("{".as_bytes()),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn calibration_file_shape() {
        let log = InteractionLog::new(vec![
            Interaction::new("s1", "q1", true, 0),
            Interaction::new("s2", "q1", false, 0),
        ]);
        let cal = calibrate(&log, &IrtConfig::default()).unwrap();
        let file = CalibrationFile::from(&cal);
        let v = serde_json::to_value(&file).unwrap();
        assert!(v["items"]["q1"]["a"].is_number());
        assert!(v["items"]["q1"]["b"].is_number());
        assert!(v["students"]["s1"].is_number());
        assert!(v["converged"].is_boolean());
        assert!(v["rounds"].is_u64());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cal.json");
        write_json(&p, &file).unwrap();
        assert_eq!(read_json::<CalibrationFile>(&p).unwrap(), file);
    }

    #[test]
    fn trace_round_trip() {
        let trace = PredictionTrace {
            steps: vec![PredictionStep {
                step: 0,
                item_id: "q1".into(),
                predicted_probability: 0.5,
                predicted_correct: true,
                actual_correct: false,
                theta_before: 0.0,
                theta_after: -5.0,
            }],
        };
        let mut buf = Vec::new();
        write_trace(&mut buf, &trace).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "step,item_id,p,predicted,actual,theta_before,theta_after\n0,q1,0.5,1,0,0,-5\n"
        );
        assert_eq!(read_trace(buf.as_slice()).unwrap(), trace);
    }

    #[test]
    fn features_round_trip() {
        let q = |id: &str, text: &str| Question {
            item_id: id.into(),
            text: text.into(),
            choices: vec![
                Choice {
                    text: "alpha".into(),
                    is_correct: true,
                },
                Choice {
                    text: "beta".into(),
                    is_correct: false,
                },
            ],
        };
        let qs = [q("a", "cloud storage"), q("b", "cloud network network")];
        let fm = featurize(qs.iter(), Encoding::QuestionOnly, 10).unwrap();
        let mut buf = Vec::new();
        write_features(&mut buf, &fm).unwrap();
        let (tokens, ids, rows) = read_features(buf.as_slice()).unwrap();
        assert_eq!(tokens, fm.vocabulary.tokens());
        assert_eq!(ids, fm.item_ids);
        assert_eq!(rows, fm.rows);
    }

    #[test]
    fn grid_report_columns() {
        let r = GridResult {
            hyperparams: HyperParams::Lr { normalize: true },
            encoding: Encoding::QuestionFull,
            n_w: 100,
            fold_mses: vec![0.5, 0.25],
            mean_cv_mse: 0.375,
        };
        let mut buf = Vec::new();
        write_grid_report(&mut buf, std::slice::from_ref(&r)).unwrap();
        assert_eq!(read_grid_report(buf.as_slice()).unwrap(), vec![r]);
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "model,encoding,n_w,params_json,mean_cv_mse,fold_mses\n\
             lr,question_full,100,\"{\"\"model\"\":\"\"lr\"\",\"\"normalize\"\":true}\",0.375,0.5;0.25\n"
        );
    }
}
