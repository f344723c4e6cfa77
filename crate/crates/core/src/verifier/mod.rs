//! Baseline verifiers producing similarity scores in `[0, 1]`: a
//! training-free statistical distance and a triplet-loss embedding network,
//! plus the parallel batch scorer.

mod embedding;
mod model_file;
mod stat;
mod train;
mod triplet;

use rayon::prelude::*;

pub use embedding::{embed, embedding_score, EmbeddingModel, Layer};
pub use model_file::{EmbeddingVerifier, MODEL_FORMAT};
pub use stat::{fit_stat_weights, stat_distance_score, StatWeights, StatisticalScorer, STAT_WEIGHTS_HEADER};
pub use train::{train_embedding, TrainConfig, TrainedModel, TrainingSet};
pub use triplet::{triplet_loss, TripletLoss};

use crate::corpus::{Corpus, Session};
use crate::error::{Error, Result};
use crate::protocol::ComparisonList;

/// A verifier split into a per-session template step and a cheap pairwise
/// comparison, so that each session is processed once per run.
pub trait Scorer: Sync {
    type Template: Send + Sync;

    fn template(&self, session: &Session) -> Result<Self::Template>;

    /// Similarity in `[0, 1]`.
    fn score(&self, enroll: &Self::Template, verify: &Self::Template) -> f64;
}

/// Scores every comparison of `list`, returning one score per comparison in
/// list order. All session ids are resolved before any work starts. Output
/// does not depend on `workers`.
pub fn run_comparisons<S: Scorer>(
    list: &ComparisonList,
    corpus: &Corpus,
    scorer: &S,
    workers: usize,
) -> Result<Vec<f64>> {
    if workers == 0 {
        return Err(Error::invalid("workers", "must be at least 1"));
    }
    let index = corpus.session_index();
    let sessions: Vec<&Session> = list
        .session_ids()
        .iter()
        .map(|id| {
            index
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::UnknownSession(id.clone()))
        })
        .collect::<Result<_>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid("workers", e.to_string()))?;
    pool.install(|| {
        let templates: Vec<S::Template> = sessions.par_iter().map(|s| scorer.template(s)).collect::<Result<_>>()?;
        let pairs: Vec<(usize, usize)> = list.session_pairs().collect();
        Ok(pairs
            .par_iter()
            .with_min_len(4096)
            .map(|&(e, v)| scorer.score(&templates[e], &templates[v]))
            .collect())
    })
}
