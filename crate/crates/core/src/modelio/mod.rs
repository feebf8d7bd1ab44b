//! Model input/output: prompt rendering, backend dispatch, output parsing.

mod backend;
mod parse;
mod prompt;

pub use backend::{
    complete, mock_completion, mock_probabilities, score_encoder, HttpBackendClient, RetryPolicy,
};
pub use parse::{parse_llm_output, ParsedOutput};
pub use prompt::{render_prompt, PromptRendering, PROMPT_HEADER};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{LabelSet, ValueLabel, LABEL_COUNT};

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("backend family {family:?} cannot serve this operation")]
    WrongFamily { family: BackendFamily },
    #[error("transport failure after {attempts} attempts: {reason}")]
    Transport { attempts: u32, reason: String },
    #[error("malformed backend response: {reason}")]
    MalformedResponse { reason: String },
    #[error("retrieved chunk {chunk_id:?} has empty text")]
    EmptyChunkText { chunk_id: String },
    #[error("threshold must lie strictly inside (0, 1), got {value}")]
    InvalidThreshold { value: f64 },
    #[error("probability vector must have {LABEL_COUNT} entries in [0, 1]: {reason}")]
    InvalidProbabilities { reason: String },
}

/// Which kind of backend a spec points at. The family fixes the response
/// shape: scoring backends return 19 probabilities, completion backends
/// return raw text. `Mock` is the builtin deterministic backend and serves
/// both operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendFamily {
    Encoder,
    Llm,
    Mock,
}

impl std::str::FromStr for BackendFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<BackendFamily, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "encoder" => Ok(BackendFamily::Encoder),
            "llm" => Ok(BackendFamily::Llm),
            "mock" => Ok(BackendFamily::Mock),
            other => Err(format!("unknown backend family: {other}")),
        }
    }
}

/// Address of a scoring or completion backend. The endpoint `"builtin"`
/// selects the deterministic mock implementation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BackendSpec {
    pub family: BackendFamily,
    pub endpoint: String,
    pub model: String,
}

pub const BUILTIN_ENDPOINT: &str = "builtin";

impl BackendSpec {
    pub fn mock(model: &str) -> BackendSpec {
        BackendSpec {
            family: BackendFamily::Mock,
            endpoint: BUILTIN_ENDPOINT.to_string(),
            model: model.to_string(),
        }
    }

    pub fn is_builtin(&self) -> bool {
        self.family == BackendFamily::Mock || self.endpoint == BUILTIN_ENDPOINT
    }
}

/// Deterministic decoding parameters for completion backends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
}

impl Default for DecodeParams {
    fn default() -> DecodeParams {
        DecodeParams { temperature: 0.0, top_p: 1.0, max_tokens: 64 }
    }
}

/// Sigmoid probabilities for the 19 values, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbabilityVector([f64; LABEL_COUNT]);

impl ProbabilityVector {
    pub fn new(probs: [f64; LABEL_COUNT]) -> Result<ProbabilityVector, ModelIoError> {
        for (i, p) in probs.iter().enumerate() {
            if !(0.0..=1.0).contains(p) {
                return Err(ModelIoError::InvalidProbabilities {
                    reason: format!("entry {i} is {p}"),
                });
            }
        }
        Ok(ProbabilityVector(probs))
    }

    pub fn from_slice(probs: &[f64]) -> Result<ProbabilityVector, ModelIoError> {
        let array: [f64; LABEL_COUNT] = probs.try_into().map_err(|_| {
            ModelIoError::InvalidProbabilities { reason: format!("length {}", probs.len()) }
        })?;
        ProbabilityVector::new(array)
    }

    pub fn get(&self, label: ValueLabel) -> f64 {
        self.0[label.index()]
    }

    pub fn as_array(&self) -> &[f64; LABEL_COUNT] {
        &self.0
    }
}

impl Serialize for ProbabilityVector {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.0.as_slice().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ProbabilityVector {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<ProbabilityVector, D::Error> {
        let values = Vec::<f64>::deserialize(deserializer)?;
        ProbabilityVector::from_slice(&values).map_err(serde::de::Error::custom)
    }
}

/// Threshold sigmoid probabilities into a label set. The comparison is
/// inclusive: a probability exactly at the threshold predicts the label.
pub fn threshold_predictions(
    probs: &ProbabilityVector,
    threshold: f64,
) -> Result<LabelSet, ModelIoError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(ModelIoError::InvalidThreshold { value: threshold });
    }
    Ok(ValueLabel::ALL
        .into_iter()
        .filter(|label| probs.get(*label) >= threshold)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decode_defaults() {
        let params = DecodeParams::default();
        assert_eq!(params.temperature, 0.0);
        assert_eq!(params.top_p, 1.0);
        assert_eq!(params.max_tokens, 64);
    }

    #[test]
    fn probability_vector_validates_shape_and_range() {
        assert!(ProbabilityVector::from_slice(&[0.5; 18]).is_err());
        assert!(ProbabilityVector::from_slice(&[0.5; 20]).is_err());
        let mut probs = [0.5; 19];
        probs[3] = 1.2;
        assert!(ProbabilityVector::new(probs).is_err());
        probs[3] = 1.0;
        assert!(ProbabilityVector::new(probs).is_ok());
    }

    #[test]
    fn thresholding_is_inclusive_at_the_boundary() {
        let probs = ProbabilityVector::new([0.18; 19]).unwrap();
        let labels = threshold_predictions(&probs, 0.18).unwrap();
        assert_eq!(labels, LabelSet::all());
    }

    #[test]
    fn thresholding_picks_high_probabilities() {
        let mut raw = [0.0; 19];
        raw[ValueLabel::Achievement.index()] = 0.9;
        let probs = ProbabilityVector::new(raw).unwrap();
        let labels = threshold_predictions(&probs, 0.18).unwrap();
        assert_eq!(labels, LabelSet::empty().with(ValueLabel::Achievement));

        let zeros = ProbabilityVector::new([0.0; 19]).unwrap();
        assert!(threshold_predictions(&zeros, 0.18).unwrap().is_empty());
    }

    #[test]
    fn threshold_domain_is_open() {
        let probs = ProbabilityVector::new([0.5; 19]).unwrap();
        assert!(threshold_predictions(&probs, 0.0).is_err());
        assert!(threshold_predictions(&probs, 1.0).is_err());
        assert!(threshold_predictions(&probs, -0.1).is_err());
    }

    proptest! {
        #[test]
        fn thresholding_is_antitone(
            raw in proptest::array::uniform19(0.0f64..=1.0),
            t1 in 0.01f64..0.99,
            t2 in 0.01f64..0.99,
        ) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let probs = ProbabilityVector::new(raw).unwrap();
            let at_hi = threshold_predictions(&probs, hi).unwrap();
            let at_lo = threshold_predictions(&probs, lo).unwrap();
            prop_assert_eq!(at_hi.intersection(at_lo), at_hi);
        }
    }
}
