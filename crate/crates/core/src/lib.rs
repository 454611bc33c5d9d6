//! Latent-trait estimation for multiple-choice questions.
//!
//! Items are calibrated with a two-parameter logistic IRT model from
//! interaction logs; regressors trained on TF-IDF features of the question
//! text then estimate difficulty and discrimination for items that have no
//! interactions yet. Both are validated on sequential performance
//! prediction.

pub mod error;
pub mod eval;
pub mod io;
pub mod irt;
pub mod regress;
pub mod synth;
pub mod textpipe;
pub mod types;

pub use error::{Error, Result};
pub use irt::{CalibrationResult, IrtConfig, PredictionStep, PredictionTrace, SequenceStep};
pub use regress::{HyperParams, Model, Target, TrainedRegressor};
pub use textpipe::{Encoding, FeatureVector, Vocabulary};
pub use types::{
    Choice, Interaction, InteractionLog, Interval, ItemId, ItemParamMap, ItemParams, Question,
    QuestionBank, SkillEstimate, StudentId,
};
