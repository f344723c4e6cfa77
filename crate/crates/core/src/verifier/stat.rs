use std::fmt::Write as _;
use std::io::BufRead;

use super::Scorer;
use crate::corpus::{Corpus, Session};
use crate::error::{Error, Result};
use crate::features::{extract_features, session_stats, STAT_COMPONENTS};

pub const STAT_WEIGHTS_HEADER: &str = "component,weight";

/// Per-component weights of the statistical baseline's L1 distance.
#[derive(Debug, Clone, PartialEq)]
pub struct StatWeights {
    weights: Vec<f64>,
}

impl StatWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.len() != STAT_COMPONENTS.len() {
            return Err(Error::DimensionMismatch {
                context: "statistical weights",
                expected: STAT_COMPONENTS.len(),
                found: weights.len(),
            });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("weights", "must be finite and non-negative"));
        }
        Ok(Self { weights })
    }

    /// Every component weighted 1.
    pub fn uniform() -> Self {
        Self {
            weights: vec![1.0; STAT_COMPONENTS.len()],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{STAT_WEIGHTS_HEADER}\n");
        for (name, w) in STAT_COMPONENTS.iter().zip(&self.weights) {
            let _ = writeln!(out, "{name},{w}");
        }
        out
    }

    pub fn parse<R: BufRead>(input: R) -> Result<Self> {
        let mut weights: Vec<Option<f64>> = vec![None; STAT_COMPONENTS.len()];
        let mut header_seen = false;
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !header_seen {
                if line != STAT_WEIGHTS_HEADER {
                    return Err(Error::parse(i + 1, format!("expected header `{STAT_WEIGHTS_HEADER}`")));
                }
                header_seen = true;
                continue;
            }
            let (name, value) = line
                .split_once(',')
                .ok_or_else(|| Error::parse(i + 1, "expected component,weight"))?;
            let k = STAT_COMPONENTS
                .iter()
                .position(|c| *c == name.trim())
                .ok_or_else(|| Error::parse(i + 1, format!("unknown component `{name}`")))?;
            weights[k] = Some(
                value
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(i + 1, format!("invalid weight `{value}`")))?,
            );
        }
        let weights = weights
            .into_iter()
            .zip(STAT_COMPONENTS)
            .map(|(w, name)| w.ok_or_else(|| Error::Validation(format!("weights file lacks `{name}`"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(weights)
    }
}

/// Inverse population standard deviation of each component over the
/// development sessions; components with no spread get weight 0.
pub fn fit_stat_weights(development: &Corpus) -> Result<StatWeights> {
    let vectors: Vec<Vec<f64>> = development
        .sessions()
        .map(|s| session_stats(&extract_features(s)).to_vec())
        .collect();
    if vectors.len() < 2 {
        return Err(Error::Validation(
            "need at least two development sessions to fit weights".into(),
        ));
    }
    let n = vectors.len() as f64;
    let weights: Vec<f64> = (0..STAT_COMPONENTS.len())
        .map(|k| {
            let mean = vectors.iter().map(|v| v[k]).sum::<f64>() / n;
            let var = vectors.iter().map(|v| (v[k] - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            if std > 1e-12 {
                1.0 / std
            } else {
                0.0
            }
        })
        .collect();
    if weights.iter().all(|&w| w == 0.0) {
        return Err(Error::Validation(
            "every statistical component is constant over the development set".into(),
        ));
    }
    StatWeights::new(weights)
}

fn weighted_l1(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    a.iter().zip(b).zip(w).map(|((x, y), w)| w * (x - y).abs()).sum()
}

/// `1 / (1 + d)` where `d` is the weighted L1 distance between two
/// statistic vectors.
pub fn stat_distance_score(enroll: &[f64], verify: &[f64], weights: &[f64]) -> Result<f64> {
    for (context, v) in [("verification statistics", verify), ("statistical weights", weights)] {
        if v.len() != enroll.len() {
            return Err(Error::DimensionMismatch {
                context,
                expected: enroll.len(),
                found: v.len(),
            });
        }
    }
    Ok(1.0 / (1.0 + weighted_l1(enroll, verify, weights)))
}

#[derive(Debug, Clone)]
pub struct StatisticalScorer {
    weights: StatWeights,
}

impl StatisticalScorer {
    pub fn new(weights: StatWeights) -> Self {
        Self { weights }
    }
}

impl Scorer for StatisticalScorer {
    type Template = Vec<f64>;

    fn template(&self, session: &Session) -> Result<Vec<f64>> {
        Ok(session_stats(&extract_features(session)).to_vec())
    }

    fn score(&self, enroll: &Vec<f64>, verify: &Vec<f64>) -> f64 {
        1.0 / (1.0 + weighted_l1(enroll, verify, &self.weights.weights))
    }
}
