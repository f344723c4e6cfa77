use std::fmt::Write as _;
use std::io::{BufRead, Write};

use super::embedding::{embedding_score, EmbeddingModel, Layer};
use super::train::TrainConfig;
use super::Scorer;
use crate::corpus::Session;
use crate::error::{Error, Result};
use crate::features::{apply_normalizer, extract_features, fix_length, Normalizer, FEATURE_WIDTH};

pub const MODEL_FORMAT: &str = "kvc-embedding-model 1";

/// Everything needed to score with a trained embedding: the network, the
/// feature normaliser it was trained behind and the sequence length.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVerifier {
    pub model: EmbeddingModel,
    pub normalizer: Normalizer,
    pub sequence_length: usize,
    /// Training configuration echo (`key`, `value`).
    pub config: Vec<(String, String)>,
}

impl EmbeddingVerifier {
    pub fn new(model: EmbeddingModel, normalizer: Normalizer, config: &TrainConfig) -> Result<Self> {
        if model.input_width() != config.sequence_length * FEATURE_WIDTH {
            return Err(Error::DimensionMismatch {
                context: "model input width",
                expected: config.sequence_length * FEATURE_WIDTH,
                found: model.input_width(),
            });
        }
        Ok(Self {
            model,
            normalizer,
            sequence_length: config.sequence_length,
            config: config.entries().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        })
    }

    /// Normalised, fixed-length, flattened feature matrix of a session.
    pub fn input(&self, session: &Session) -> Result<Vec<f64>> {
        let seq = apply_normalizer(&extract_features(session), &self.normalizer);
        Ok(fix_length(&seq, self.sequence_length)?.as_slice().to_vec())
    }

    pub fn embed_session(&self, session: &Session) -> Result<Vec<f64>> {
        super::embed(&self.input(session)?, &self.model)
    }

    /// Text form: a `key=value` header, the normaliser table, then each
    /// layer's weight rows and bias in 17 significant digits.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let dims: Vec<String> = self.model.dims().iter().map(|d| d.to_string()).collect();
        let mut text = String::new();
        let _ = writeln!(text, "# {MODEL_FORMAT}");
        let _ = writeln!(text, "dims={}", dims.join(","));
        let _ = writeln!(text, "sequence_length={}", self.sequence_length);
        let _ = writeln!(text, "hidden_activation=relu");
        let _ = writeln!(text, "init=uniform(-1/sqrt(fan_in),1/sqrt(fan_in)),bias=0");
        for (k, v) in &self.config {
            let _ = writeln!(text, "config.{k}={v}");
        }
        let _ = writeln!(text, "[normalizer]");
        text.push_str(&self.normalizer.to_text());
        let _ = writeln!(text, "[weights]");
        out.write_all(text.as_bytes())?;
        for (i, layer) in self.model.layers().iter().enumerate() {
            writeln!(out, "layer {i} {} {}", layer.outputs(), layer.inputs())?;
            for row in layer.weights().chunks_exact(layer.inputs()) {
                write_row(&mut out, row)?;
            }
            write_row(&mut out, layer.bias())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn parse<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let mut dims: Option<Vec<usize>> = None;
        let mut sequence_length: Option<usize> = None;
        let mut config = Vec::new();

        let mut next_line = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, line)) => Ok((i + 1, line?)),
                None => Err(Error::Validation(format!("model file truncated ({what})"))),
            }
        };

        loop {
            let (lineno, line) = next_line("header")?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line == "[normalizer]" {
                break;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(lineno, "expected key=value"))?;
            match k {
                "dims" => {
                    dims = Some(
                        v.split(',')
                            .map(|d| d.trim().parse())
                            .collect::<std::result::Result<Vec<usize>, _>>()
                            .map_err(|_| Error::parse(lineno, format!("invalid dims `{v}`")))?,
                    )
                }
                "sequence_length" => {
                    sequence_length = Some(
                        v.parse()
                            .map_err(|_| Error::parse(lineno, format!("invalid sequence_length `{v}`")))?,
                    )
                }
                _ => {
                    if let Some(key) = k.strip_prefix("config.") {
                        config.push((key.to_string(), v.to_string()));
                    }
                }
            }
        }

        let mut normalizer_text = String::new();
        loop {
            let (_, line) = next_line("normalizer")?;
            if line.trim() == "[weights]" {
                break;
            }
            normalizer_text.push_str(&line);
            normalizer_text.push('\n');
        }
        let normalizer = Normalizer::parse(normalizer_text.as_bytes())?;

        let dims = dims.ok_or_else(|| Error::Validation("model file lacks dims".into()))?;
        let sequence_length =
            sequence_length.ok_or_else(|| Error::Validation("model file lacks sequence_length".into()))?;
        if dims.len() < 2 {
            return Err(Error::Validation("model needs at least two widths".into()));
        }
        if dims[0] != sequence_length * FEATURE_WIDTH {
            return Err(Error::DimensionMismatch {
                context: "model input width",
                expected: sequence_length * FEATURE_WIDTH,
                found: dims[0],
            });
        }

        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (i, w) in dims.windows(2).enumerate() {
            let (inputs, outputs) = (w[0], w[1]);
            let (lineno, header) = next_line("layer header")?;
            if header.trim() != format!("layer {i} {outputs} {inputs}") {
                return Err(Error::parse(lineno, format!("expected `layer {i} {outputs} {inputs}`")));
            }
            let mut weights = Vec::with_capacity(inputs * outputs);
            for _ in 0..outputs {
                let (lineno, row) = next_line("weights")?;
                weights.extend(parse_row(lineno, &row, inputs)?);
            }
            let (lineno, row) = next_line("bias")?;
            let bias = parse_row(lineno, &row, outputs)?;
            layers.push(Layer::new(inputs, outputs, weights, bias)?);
        }
        Ok(Self {
            model: EmbeddingModel::new(layers)?,
            normalizer,
            sequence_length,
            config,
        })
    }
}

fn write_row<W: Write>(out: &mut W, values: &[f64]) -> Result<()> {
    let mut line = String::with_capacity(values.len() * 24);
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            line.push(' ');
        }
        let _ = write!(line, "{v:.16e}");
    }
    writeln!(out, "{line}")?;
    Ok(())
}

fn parse_row(lineno: usize, line: &str, expected: usize) -> Result<Vec<f64>> {
    let values = line
        .split_whitespace()
        .map(|v| {
            v.parse::<f64>()
                .map_err(|_| Error::parse(lineno, format!("invalid weight `{v}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.len() != expected {
        return Err(Error::parse(
            lineno,
            format!("expected {expected} values, found {}", values.len()),
        ));
    }
    Ok(values)
}

impl Scorer for EmbeddingVerifier {
    type Template = Vec<f64>;

    fn template(&self, session: &Session) -> Result<Vec<f64>> {
        self.embed_session(session)
    }

    fn score(&self, enroll: &Vec<f64>, verify: &Vec<f64>) -> f64 {
        embedding_score(enroll, verify)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic_corpus, CorpusKind, SyntheticProfile};
    use crate::features::{fit_normalizer, DEFAULT_CLIP_QUANTILES};

    #[test]
    fn model_file_round_trip_is_exact() {
        let synth = generate_synthetic_corpus(5, 15, 2, &SyntheticProfile::default(), CorpusKind::Development).unwrap();
        let seqs: Vec<_> = synth.corpus.sessions().map(extract_features).collect();
        let normalizer = fit_normalizer(&seqs, DEFAULT_CLIP_QUANTILES).unwrap();
        let config = TrainConfig {
            hidden: vec![7],
            embedding_dim: 3,
            sequence_length: 4,
            ..TrainConfig::default()
        };
        let model = EmbeddingModel::init(&config.dims(), 3).unwrap();
        let verifier = EmbeddingVerifier::new(model, normalizer, &config).unwrap();
        let mut buf = Vec::new();
        verifier.write(&mut buf).unwrap();
        let parsed = EmbeddingVerifier::parse(buf.as_slice()).unwrap();
        assert_eq!(parsed, verifier);
        let session = synth.corpus.sessions().next().unwrap();
        assert_eq!(parsed.embed_session(session).unwrap().len(), 3);

        let text = String::from_utf8(buf).unwrap();
        let truncated: String = text
            .lines()
            .take(text.lines().count() - 1)
            .collect::<Vec<_>>()
            .join("\n");
        assert!(EmbeddingVerifier::parse(truncated.as_bytes()).is_err());
    }
}
