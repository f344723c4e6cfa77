use rand::seq::{index, SliceRandom};

use super::embedding::EmbeddingModel;
use super::triplet::{euclidean, triplet_loss};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::features::{
    apply_normalizer, extract_features, fix_length, Normalizer, DEFAULT_SEQUENCE_LENGTH, FEATURE_WIDTH,
};
use crate::seed::rng_for;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub margin: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub subjects_per_batch: usize,
    pub sessions_per_subject: usize,
    pub hidden: Vec<usize>,
    pub embedding_dim: usize,
    pub sequence_length: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            margin: 1.5,
            learning_rate: 1e-4,
            epochs: 60,
            subjects_per_batch: 16,
            sessions_per_subject: 4,
            hidden: vec![128],
            embedding_dim: 64,
            sequence_length: DEFAULT_SEQUENCE_LENGTH,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin.is_finite() && self.margin > 0.0) {
            return Err(Error::invalid(
                "margin",
                format!("must be positive, got {}", self.margin),
            ));
        }
        // Zero is allowed: it turns training into a no-op, which is handy for checks.
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::invalid(
                "learning_rate",
                format!("must be non-negative, got {}", self.learning_rate),
            ));
        }
        for (name, v, min) in [
            ("epochs", self.epochs, 1),
            ("subjects_per_batch", self.subjects_per_batch, 2),
            ("sessions_per_subject", self.sessions_per_subject, 2),
            ("embedding_dim", self.embedding_dim, 1),
            ("sequence_length", self.sequence_length, 1),
        ] {
            if v < min {
                return Err(Error::invalid(name, format!("must be at least {min}, got {v}")));
            }
        }
        if self.hidden.contains(&0) {
            return Err(Error::invalid("hidden", "layer widths must be positive"));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.sequence_length * FEATURE_WIDTH
    }

    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_width())
            .chain(self.hidden.iter().copied())
            .chain(std::iter::once(self.embedding_dim))
            .collect()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::invalid(key.to_string(), format!("cannot parse `{v}`")))
        }
        match key {
            "margin" => self.margin = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "subjects_per_batch" => self.subjects_per_batch = parse(key, value)?,
            "sessions_per_subject" => self.sessions_per_subject = parse(key, value)?,
            "hidden" => {
                self.hidden = if value.trim().is_empty() {
                    Vec::new()
                } else {
                    value
                        .split(',')
                        .map(|w| parse(key, w.trim()))
                        .collect::<Result<Vec<usize>>>()?
                }
            }
            "embedding_dim" => self.embedding_dim = parse(key, value)?,
            "sequence_length" => self.sequence_length = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            _ => return Err(Error::invalid(key.to_string(), "unknown training parameter")),
        }
        Ok(())
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let hidden: Vec<String> = self.hidden.iter().map(|h| h.to_string()).collect();
        vec![
            ("margin", self.margin.to_string()),
            ("distance_p", "2".to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("epochs", self.epochs.to_string()),
            ("subjects_per_batch", self.subjects_per_batch.to_string()),
            ("sessions_per_subject", self.sessions_per_subject.to_string()),
            ("hidden", hidden.join(",")),
            ("embedding_dim", self.embedding_dim.to_string()),
            ("sequence_length", self.sequence_length.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }
}

/// Flattened fixed-length feature matrices grouped by subject.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    input_width: usize,
    subjects: Vec<Vec<Vec<f64>>>,
}

impl TrainingSet {
    pub fn new(subjects: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let input_width = subjects
            .iter()
            .flatten()
            .next()
            .map(Vec::len)
            .ok_or_else(|| Error::Validation("training set is empty".into()))?;
        if let Some(bad) = subjects.iter().flatten().find(|s| s.len() != input_width) {
            return Err(Error::DimensionMismatch {
                context: "training sample",
                expected: input_width,
                found: bad.len(),
            });
        }
        let usable = subjects.iter().filter(|s| s.len() >= 2).count();
        if usable < 2 {
            return Err(Error::Validation(format!(
                "training needs at least 2 subjects with 2 or more sessions, found {usable}"
            )));
        }
        Ok(Self {
            input_width,
            subjects: subjects.into_iter().filter(|s| s.len() >= 2).collect(),
        })
    }

    /// Normalised, fixed-length features for every development subject.
    pub fn from_corpus(corpus: &Corpus, normalizer: &Normalizer, sequence_length: usize) -> Result<Self> {
        let subjects = corpus
            .subjects()
            .iter()
            .map(|subject| {
                subject
                    .sessions()
                    .iter()
                    .map(|s| {
                        let seq = apply_normalizer(&extract_features(s), normalizer);
                        Ok(fix_length(&seq, sequence_length)?.as_slice().to_vec())
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(subjects)
    }

    pub fn subjects(&self) -> &[Vec<Vec<f64>>] {
        &self.subjects
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub model: EmbeddingModel,
    /// Mean triplet loss of each epoch.
    pub loss_trace: Vec<f64>,
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPSILON: f64 = 1e-8;

    fn new(shape: &[Vec<f64>]) -> Self {
        let zeros: Vec<Vec<f64>> = shape.iter().map(|g| vec![0.0; g.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    fn update(&mut self, model: &mut EmbeddingModel, grads: &[Vec<f64>], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        for (l, layer) in model.layers_mut().iter_mut().enumerate() {
            let (m, v, g) = (&mut self.m[l], &mut self.v[l], &grads[l]);
            for (k, p) in layer.parameters_mut().enumerate() {
                m[k] = Self::BETA1 * m[k] + (1.0 - Self::BETA1) * g[k];
                v[k] = Self::BETA2 * v[k] + (1.0 - Self::BETA2) * g[k] * g[k];
                *p -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + Self::EPSILON);
            }
        }
    }
}

/// Mean batch-hard triplet loss over one batch and its gradient with respect
/// to each sample's embedding. Every ordered same-subject pair is an
/// anchor-positive pair; its negative is the closest other-subject sample.
pub(crate) fn batch_loss(embeddings: &[Vec<f64>], labels: &[usize], margin: f64) -> (f64, Vec<Vec<f64>>) {
    let n = embeddings.len();
    let dim = embeddings.first().map_or(0, Vec::len);
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = euclidean(&embeddings[i], &embeddings[j]);
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    let mut grads = vec![vec![0.0; dim]; n];
    let mut total = 0.0;
    let mut triplets = 0usize;
    for a in 0..n {
        let hardest = (0..n)
            .filter(|&k| labels[k] != labels[a])
            .min_by(|&x, &y| dist[a * n + x].total_cmp(&dist[a * n + y]));
        let Some(neg) = hardest else { continue };
        for p in (0..n).filter(|&p| p != a && labels[p] == labels[a]) {
            let t = triplet_loss(&embeddings[a], &embeddings[p], &embeddings[neg], margin)
                .expect("batch embeddings share one width");
            total += t.loss;
            triplets += 1;
            if t.loss > 0.0 {
                for (idx, g) in [(a, &t.grad_anchor), (p, &t.grad_positive), (neg, &t.grad_negative)] {
                    grads[idx].iter_mut().zip(g).for_each(|(acc, v)| *acc += v);
                }
            }
        }
    }
    if triplets == 0 {
        return (0.0, grads);
    }
    let scale = 1.0 / triplets as f64;
    grads.iter_mut().flatten().for_each(|g| *g *= scale);
    (total * scale, grads)
}

/// Trains a fresh model with Adam on batch-hard triplets. Single-threaded,
/// so the result is a pure function of the data and `config.seed`.
pub fn train_embedding(data: &TrainingSet, config: &TrainConfig) -> Result<TrainedModel> {
    config.validate()?;
    if data.input_width != config.input_width() {
        return Err(Error::DimensionMismatch {
            context: "training input width",
            expected: config.input_width(),
            found: data.input_width,
        });
    }
    let mut model = EmbeddingModel::init(&config.dims(), config.seed)?;
    let mut grads: Vec<Vec<f64>> = model
        .layers()
        .iter()
        .map(|l| vec![0.0; l.weights().len() + l.bias().len()])
        .collect();
    let mut adam = Adam::new(&grads);
    let mut trace = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut rng = rng_for(config.seed, "epoch", &epoch.to_string());
        let mut order: Vec<usize> = (0..data.subjects.len()).collect();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.subjects_per_batch) {
            if chunk.len() < 2 {
                continue;
            }
            let mut inputs: Vec<&[f64]> = Vec::new();
            let mut labels = Vec::new();
            for &s in chunk {
                let sessions = &data.subjects[s];
                let k = config.sessions_per_subject.min(sessions.len());
                for i in index::sample(&mut rng, sessions.len(), k) {
                    inputs.push(&sessions[i]);
                    labels.push(s);
                }
            }
            let caches: Vec<Vec<Vec<f64>>> = inputs.iter().map(|x| model.forward_cached(x)).collect();
            let embeddings: Vec<Vec<f64>> = caches.iter().map(|c| c.last().expect("layers").clone()).collect();
            let (loss, emb_grads) = batch_loss(&embeddings, &labels, config.margin);
            if !loss.is_finite() {
                trace.push(loss);
                return Err(Error::Divergence { epoch, trace });
            }
            grads.iter_mut().flatten().for_each(|g| *g = 0.0);
            for ((x, cache), g) in inputs.iter().zip(&caches).zip(&emb_grads) {
                if g.iter().any(|&v| v != 0.0) {
                    model.backward(x, cache, g, &mut grads);
                }
            }
            adam.update(&mut model, &grads, config.learning_rate);
            epoch_loss += loss;
            batches += 1;
        }
        let mean = if batches > 0 { epoch_loss / batches as f64 } else { 0.0 };
        trace.push(mean);
        if !mean.is_finite() || !model.is_finite() {
            return Err(Error::Divergence { epoch, trace });
        }
    }
    Ok(TrainedModel {
        model,
        loss_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Two subjects whose samples cluster around different centres.
    fn two_subjects(width: usize, per_subject: usize, seed: u64) -> Vec<Vec<Vec<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..2)
            .map(|s| {
                let centre = if s == 0 { 1.0 } else { -1.0 };
                (0..per_subject)
                    .map(|_| (0..width).map(|_| centre + rng.random_range(-0.5..0.5)).collect())
                    .collect()
            })
            .collect()
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            epochs: 40,
            subjects_per_batch: 2,
            sessions_per_subject: 4,
            hidden: vec![8],
            embedding_dim: 4,
            sequence_length: 2,
            learning_rate: 1e-2,
            seed: 11,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn separates_two_subjects() {
        let cfg = small_config();
        let data = TrainingSet::new(two_subjects(cfg.input_width(), 10, 1)).unwrap();
        let trained = train_embedding(&data, &cfg).unwrap();
        assert_eq!(trained.loss_trace.len(), cfg.epochs);
        let held_out = two_subjects(cfg.input_width(), 6, 99);
        let emb: Vec<Vec<Vec<f64>>> = held_out
            .iter()
            .map(|s| s.iter().map(|x| trained.model.forward(x)).collect())
            .collect();
        let (mut intra, mut ni, mut inter, mut ne) = (0.0, 0, 0.0, 0);
        for a in 0..2 {
            for b in 0..2 {
                for (i, x) in emb[a].iter().enumerate() {
                    for (j, y) in emb[b].iter().enumerate() {
                        if a == b && i == j {
                            continue;
                        }
                        if a == b {
                            intra += euclidean(x, y);
                            ni += 1;
                        } else {
                            inter += euclidean(x, y);
                            ne += 1;
                        }
                    }
                }
            }
        }
        assert!(intra / (ni as f64) < inter / (ne as f64));
    }

    #[test]
    fn zero_learning_rate_keeps_initial_weights() {
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 3,
            ..small_config()
        };
        let data = TrainingSet::new(two_subjects(cfg.input_width(), 6, 2)).unwrap();
        let trained = train_embedding(&data, &cfg).unwrap();
        assert_eq!(trained.model, EmbeddingModel::init(&cfg.dims(), cfg.seed).unwrap());
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = TrainConfig {
            epochs: 5,
            ..small_config()
        };
        let data = TrainingSet::new(two_subjects(cfg.input_width(), 6, 3)).unwrap();
        assert_eq!(
            train_embedding(&data, &cfg).unwrap(),
            train_embedding(&data, &cfg).unwrap()
        );
    }

    #[test]
    fn divergence_is_reported() {
        let cfg = TrainConfig {
            learning_rate: 1e300,
            epochs: 5,
            ..small_config()
        };
        let data = TrainingSet::new(two_subjects(cfg.input_width(), 6, 4)).unwrap();
        match train_embedding(&data, &cfg) {
            Err(Error::Divergence { trace, .. }) => assert!(!trace.is_empty()),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = TrainConfig::default();
        cfg.set("margin", "0").unwrap();
        assert!(cfg.validate().is_err());
        assert!(cfg.set("bogus", "1").is_err());
        let mut cfg = TrainConfig::default();
        cfg.set("hidden", "32,16").unwrap();
        assert_eq!(cfg.dims(), vec![420, 32, 16, 64]);
        assert!(TrainingSet::new(vec![vec![vec![0.0; 3]; 4]]).is_err());
    }

    #[test]
    fn batch_loss_gives_zero_for_separated_clusters() {
        let e = vec![vec![0.0], vec![0.1], vec![10.0], vec![10.1]];
        let (loss, grads) = batch_loss(&e, &[0, 0, 1, 1], 1.5);
        assert_eq!(loss, 0.0);
        assert!(grads.iter().flatten().all(|&g| g == 0.0));
        let (loss, _) = batch_loss(&[vec![0.0], vec![0.0], vec![0.0], vec![0.0]], &[0, 0, 1, 1], 1.5);
        assert_eq!(loss, 1.5);
    }
}
