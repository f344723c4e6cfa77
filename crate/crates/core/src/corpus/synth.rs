//! Seeded synthetic corpora.
//!
//! Each subject draws persistent timing parameters (mean hold time, mean
//! inter-press time, per-event jitter) from log-normal population
//! distributions; sessions are then sampled from those parameters with a
//! small per-session drift and occasional long pauses. Session lengths are
//! log-normal with the configured mean and standard deviation.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, LogNormal, Normal};

use super::{Corpus, CorpusKind, Gender, KeyFile, KeystrokeEvent, Session, SubjectRecord};
use crate::error::{Error, Result};

/// Sessions per evaluation subject: 5 enrollment plus 10 verification.
pub const EVALUATION_SESSIONS: usize = 15;
/// Minimum sessions per development subject.
pub const MIN_DEVELOPMENT_SESSIONS: usize = 15;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticProfile {
    /// Population mean of the per-subject mean hold time.
    pub hold_ms: f64,
    /// Log-scale spread of per-subject mean hold times.
    pub hold_spread: f64,
    pub ipt_ms: f64,
    pub ipt_spread: f64,
    /// Per-subject per-event log-scale jitter is uniform in this range.
    pub jitter_min: f64,
    pub jitter_max: f64,
    /// Log-scale standard deviation of a session-wide tempo shift.
    pub session_drift: f64,
    pub pause_probability: f64,
    /// Mean of the exponential extra delay added on a pause.
    pub pause_ms: f64,
    /// Log-scale change of the inter-press mean per year of age away from 40.
    pub age_effect: f64,
    pub length_mean: f64,
    pub length_std: f64,
    pub female_weight: f64,
    pub male_weight: f64,
    pub other_weight: f64,
    pub age_min: u32,
    pub age_max: u32,
    pub id_prefix: String,
}

impl Default for SyntheticProfile {
    fn default() -> Self {
        Self {
            hold_ms: 100.0,
            hold_spread: 0.30,
            ipt_ms: 220.0,
            ipt_spread: 0.35,
            jitter_min: 0.20,
            jitter_max: 0.45,
            session_drift: 0.05,
            pause_probability: 0.0,
            pause_ms: 700.0,
            age_effect: 0.006,
            length_mean: 48.65,
            length_std: 18.50,
            female_weight: 0.5,
            male_weight: 0.5,
            other_weight: 0.0,
            age_min: 20,
            age_max: 69,
            id_prefix: "s".into(),
        }
    }
}

const PROFILE_KEYS: &[&str] = &[
    "hold_ms",
    "hold_spread",
    "ipt_ms",
    "ipt_spread",
    "jitter_min",
    "jitter_max",
    "session_drift",
    "pause_probability",
    "pause_ms",
    "age_effect",
    "length_mean",
    "length_std",
    "female_weight",
    "male_weight",
    "other_weight",
    "age_min",
    "age_max",
    "id_prefix",
];

impl SyntheticProfile {
    /// Every subject shares the population timing profile.
    pub fn shared() -> Self {
        let base = Self::default();
        Self {
            hold_spread: 0.0,
            ipt_spread: 0.0,
            jitter_min: 0.3,
            jitter_max: 0.3,
            age_effect: 0.0,
            ..base
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hold_ms", self.hold_ms),
            ("ipt_ms", self.ipt_ms),
            ("length_mean", self.length_mean),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("hold_spread", self.hold_spread),
            ("ipt_spread", self.ipt_spread),
            ("jitter_min", self.jitter_min),
            ("session_drift", self.session_drift),
            ("pause_ms", self.pause_ms),
            ("length_std", self.length_std),
            ("female_weight", self.female_weight),
            ("male_weight", self.male_weight),
            ("other_weight", self.other_weight),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, format!("must be non-negative, got {v}")));
            }
        }
        if !(self.jitter_max.is_finite() && self.jitter_max >= self.jitter_min) {
            return Err(Error::invalid("jitter_max", "must be at least jitter_min"));
        }
        if !(0.0..=1.0).contains(&self.pause_probability) {
            return Err(Error::invalid("pause_probability", "must lie in [0, 1]"));
        }
        if !self.age_effect.is_finite() {
            return Err(Error::invalid("age_effect", "must be finite"));
        }
        if self.female_weight + self.male_weight + self.other_weight <= 0.0 {
            return Err(Error::invalid("female_weight", "gender weights sum to zero"));
        }
        if self.age_min == 0 || self.age_min > self.age_max {
            return Err(Error::invalid("age_min", "need 1 <= age_min <= age_max"));
        }
        Ok(())
    }

    /// Parses a flat `key = value` file; unknown keys are rejected.
    pub fn from_key_value(text: &str) -> Result<Self> {
        let mut profile = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(i + 1, "expected key=value"))?;
            profile.set(key.trim(), value.trim()).map_err(|e| match e {
                Error::Parse { message, .. } => Error::parse(i + 1, message),
                other => other,
            })?;
        }
        profile.validate()?;
        Ok(profile)
    }

    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num(key: &str, v: &str) -> Result<f64> {
            v.parse()
                .map_err(|_| Error::parse(0, format!("invalid number for {key}: `{v}`")))
        }
        fn int(key: &str, v: &str) -> Result<u32> {
            v.parse()
                .map_err(|_| Error::parse(0, format!("invalid integer for {key}: `{v}`")))
        }
        match key {
            "hold_ms" => self.hold_ms = num(key, value)?,
            "hold_spread" => self.hold_spread = num(key, value)?,
            "ipt_ms" => self.ipt_ms = num(key, value)?,
            "ipt_spread" => self.ipt_spread = num(key, value)?,
            "jitter_min" => self.jitter_min = num(key, value)?,
            "jitter_max" => self.jitter_max = num(key, value)?,
            "session_drift" => self.session_drift = num(key, value)?,
            "pause_probability" => self.pause_probability = num(key, value)?,
            "pause_ms" => self.pause_ms = num(key, value)?,
            "age_effect" => self.age_effect = num(key, value)?,
            "length_mean" => self.length_mean = num(key, value)?,
            "length_std" => self.length_std = num(key, value)?,
            "female_weight" => self.female_weight = num(key, value)?,
            "male_weight" => self.male_weight = num(key, value)?,
            "other_weight" => self.other_weight = num(key, value)?,
            "age_min" => self.age_min = int(key, value)?,
            "age_max" => self.age_max = int(key, value)?,
            "id_prefix" => self.id_prefix = value.to_string(),
            other => {
                return Err(Error::parse(
                    0,
                    format!("unknown profile key `{other}` (known: {})", PROFILE_KEYS.join(", ")),
                ))
            }
        }
        Ok(())
    }

    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        for (key, value) in self.entries() {
            let _ = writeln!(out, "{key}={value}");
        }
        out
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("hold_ms", self.hold_ms.to_string()),
            ("hold_spread", self.hold_spread.to_string()),
            ("ipt_ms", self.ipt_ms.to_string()),
            ("ipt_spread", self.ipt_spread.to_string()),
            ("jitter_min", self.jitter_min.to_string()),
            ("jitter_max", self.jitter_max.to_string()),
            ("session_drift", self.session_drift.to_string()),
            ("pause_probability", self.pause_probability.to_string()),
            ("pause_ms", self.pause_ms.to_string()),
            ("age_effect", self.age_effect.to_string()),
            ("length_mean", self.length_mean.to_string()),
            ("length_std", self.length_std.to_string()),
            ("female_weight", self.female_weight.to_string()),
            ("male_weight", self.male_weight.to_string()),
            ("other_weight", self.other_weight.to_string()),
            ("age_min", self.age_min.to_string()),
            ("age_max", self.age_max.to_string()),
            ("id_prefix", self.id_prefix.clone()),
        ]
    }
}

/// A generated corpus together with its ground-truth key.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    pub key: KeyFile,
}

struct TypingProfile {
    hold_log_mean: f64,
    ipt_log_mean: f64,
    jitter: f64,
}

/// Log-normal parameters (mu, sigma) with the given arithmetic mean and
/// standard deviation.
fn lognormal_from_moments(mean: f64, std: f64) -> (f64, f64) {
    let sigma2 = (1.0 + (std / mean).powi(2)).ln();
    (mean.ln() - sigma2 / 2.0, sigma2.sqrt())
}

fn lognormal(mu: f64, sigma: f64) -> LogNormal<f64> {
    LogNormal::new(mu, sigma).expect("validated profile yields finite log-normal parameters")
}

pub fn generate_synthetic_corpus(
    n_subjects: usize,
    sessions_per_subject: usize,
    seed: u64,
    profile: &SyntheticProfile,
    kind: CorpusKind,
) -> Result<SyntheticCorpus> {
    profile.validate()?;
    if n_subjects == 0 {
        return Err(Error::invalid("n_subjects", "must be at least 1"));
    }
    match kind {
        CorpusKind::Development if sessions_per_subject < MIN_DEVELOPMENT_SESSIONS => {
            return Err(Error::invalid(
                "sessions_per_subject",
                format!("development subjects need at least {MIN_DEVELOPMENT_SESSIONS} sessions"),
            ))
        }
        CorpusKind::Evaluation if sessions_per_subject != EVALUATION_SESSIONS => {
            return Err(Error::invalid(
                "sessions_per_subject",
                format!("evaluation subjects have exactly {EVALUATION_SESSIONS} sessions"),
            ))
        }
        _ => {}
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut id_rng = ChaCha8Rng::seed_from_u64(seed);
    id_rng.set_stream(1);

    let genders = [Gender::Female, Gender::Male, Gender::Unspecified];
    let gender_dist = WeightedIndex::new([profile.female_weight, profile.male_weight, profile.other_weight])
        .map_err(|e| Error::invalid("gender weights", e.to_string()))?;
    let hold_subject = lognormal(
        profile.hold_ms.ln() - profile.hold_spread.powi(2) / 2.0,
        profile.hold_spread,
    );
    let ipt_subject = lognormal(
        profile.ipt_ms.ln() - profile.ipt_spread.powi(2) / 2.0,
        profile.ipt_spread,
    );
    let (len_mu, len_sigma) = lognormal_from_moments(profile.length_mean, profile.length_std);
    let length_dist = lognormal(len_mu, len_sigma);
    let drift_dist =
        Normal::new(0.0, profile.session_drift).map_err(|e| Error::invalid("session_drift", e.to_string()))?;
    let pause_dist = (profile.pause_ms > 0.0).then(|| Exp::new(1.0 / profile.pause_ms).expect("positive rate"));

    let width = n_subjects.to_string().len().max(6);
    let mut subjects = Vec::with_capacity(n_subjects);
    let mut used_ids = HashSet::new();
    for s in 0..n_subjects {
        let subject_id = format!("{}{:0width$}", profile.id_prefix, s + 1);
        let gender = genders[gender_dist.sample(&mut rng)];
        let age = rng.random_range(profile.age_min..=profile.age_max);
        let jitter = if profile.jitter_max > profile.jitter_min {
            rng.random_range(profile.jitter_min..profile.jitter_max)
        } else {
            profile.jitter_min
        };
        let mean_hold: f64 = hold_subject.sample(&mut rng);
        let mean_ipt: f64 = ipt_subject.sample(&mut rng) * (profile.age_effect * (age as f64 - 40.0)).exp();
        let typing = TypingProfile {
            hold_log_mean: mean_hold.ln() - jitter * jitter / 2.0,
            ipt_log_mean: mean_ipt.ln() - jitter * jitter / 2.0,
            jitter,
        };

        let mut sessions = Vec::with_capacity(sessions_per_subject);
        for k in 0..sessions_per_subject {
            let session_id = match kind {
                CorpusKind::Development => format!("{subject_id}_{:02}", k + 1),
                CorpusKind::Evaluation => loop {
                    let candidate = format!("{:016x}", id_rng.random::<u64>());
                    if used_ids.insert(candidate.clone()) {
                        break candidate;
                    }
                },
            };
            let length = (length_dist.sample(&mut rng).round() as usize).max(1);
            let drift = drift_dist.sample(&mut rng);
            let events = sample_events(&mut rng, &typing, drift, length, profile, pause_dist.as_ref());
            sessions.push(Session::new(session_id, events)?);
        }
        subjects.push(SubjectRecord::new(subject_id, gender, Some(age), sessions)?);
    }

    let dev = Corpus::development(subjects)?;
    let key = dev.key_file();
    let corpus = match kind {
        CorpusKind::Development => dev,
        CorpusKind::Evaluation => Corpus::evaluation(dev.subjects.into_iter().flat_map(|s| s.sessions).collect())?,
    };
    Ok(SyntheticCorpus { corpus, key })
}

fn sample_key(rng: &mut ChaCha8Rng) -> u8 {
    if rng.random_bool(0.18) {
        b' '
    } else {
        b'a' + rng.random_range(0..26u8)
    }
}

fn sample_events(
    rng: &mut ChaCha8Rng,
    typing: &TypingProfile,
    drift: f64,
    length: usize,
    profile: &SyntheticProfile,
    pause: Option<&Exp<f64>>,
) -> Vec<KeystrokeEvent> {
    let hold = lognormal(typing.hold_log_mean + drift, typing.jitter);
    let ipt = lognormal(typing.ipt_log_mean + drift, typing.jitter);
    let mut press: u64 = rng.random_range(0..250);
    let mut events = Vec::with_capacity(length);
    for _ in 0..length {
        let hold_ms = hold.sample(rng).round() as u64;
        events.push(KeystrokeEvent {
            key_code: sample_key(rng),
            press_ms: press,
            release_ms: press + hold_ms,
        });
        let mut gap = ipt.sample(rng);
        if let Some(pause) = pause {
            if rng.random_bool(profile.pause_probability) {
                gap += pause.sample(rng);
            }
        }
        press += gap.round() as u64;
    }
    events
}
