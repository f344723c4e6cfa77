//! Keystroke corpora: the neutral data model, its text file format and a
//! seeded synthetic generator.
//!
//! A development corpus is organised by subject; an evaluation corpus is a
//! flat set of sessions whose owners are only known through a separate key
//! file, so that the scoring path never sees identities.

mod format;
mod synth;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub use format::{parse_corpus, parse_key_file, write_corpus, write_key_file, CORPUS_HEADER, KEY_HEADER};
pub use synth::{
    generate_synthetic_corpus, SyntheticCorpus, SyntheticProfile, EVALUATION_SESSIONS, MIN_DEVELOPMENT_SESSIONS,
};

/// One key press/release pair, in milliseconds since session start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KeystrokeEvent {
    pub key_code: u8,
    pub press_ms: u64,
    pub release_ms: u64,
}

impl KeystrokeEvent {
    pub fn new(key_code: u8, press_ms: u64, release_ms: u64) -> Result<Self> {
        if release_ms < press_ms {
            return Err(Error::Validation(format!(
                "release time {release_ms} ms precedes press time {press_ms} ms"
            )));
        }
        Ok(Self {
            key_code,
            press_ms,
            release_ms,
        })
    }

    pub fn hold_ms(&self) -> u64 {
        self.release_ms - self.press_ms
    }
}

/// One acquisition session. Events are non-empty and sorted by press time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    id: String,
    events: Vec<KeystrokeEvent>,
}

impl Session {
    pub fn new(id: impl Into<String>, events: Vec<KeystrokeEvent>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::Validation("empty session id".into()));
        }
        if events.is_empty() {
            return Err(Error::Validation(format!("session {id} has no events")));
        }
        for (i, pair) in events.windows(2).enumerate() {
            if pair[1].press_ms < pair[0].press_ms {
                return Err(Error::Validation(format!(
                    "session {id}: event {} pressed before event {i}",
                    i + 1
                )));
            }
        }
        if let Some(bad) = events.iter().find(|e| e.release_ms < e.press_ms) {
            return Err(Error::Validation(format!(
                "session {id}: release {} ms precedes press {} ms",
                bad.release_ms, bad.press_ms
            )));
        }
        Ok(Self { id, events })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn events(&self) -> &[KeystrokeEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Self-reported gender. Missing or non-binary answers fall into
/// `Unspecified`; such subjects are only ever used as dissimilar impostors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Gender {
    Female,
    Male,
    Unspecified,
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::Female => "female",
            Gender::Male => "male",
            Gender::Unspecified => "other",
        })
    }
}

impl FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "f" | "female" => Ok(Gender::Female),
            "m" | "male" => Ok(Gender::Male),
            "" | "o" | "other" | "unspecified" => Ok(Gender::Unspecified),
            other => Err(Error::invalid("gender", format!("unrecognised value `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubjectRecord {
    id: String,
    gender: Gender,
    age_years: Option<u32>,
    sessions: Vec<Session>,
}

impl SubjectRecord {
    /// Sessions are stored sorted by id.
    pub fn new(
        id: impl Into<String>,
        gender: Gender,
        age_years: Option<u32>,
        mut sessions: Vec<Session>,
    ) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::Validation("empty subject id".into()));
        }
        if age_years == Some(0) {
            return Err(Error::invalid("age", format!("subject {id}: age must be positive")));
        }
        sessions.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(Self {
            id,
            gender,
            age_years,
            sessions,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn gender(&self) -> Gender {
        self.gender
    }

    pub fn age_years(&self) -> Option<u32> {
        self.age_years
    }

    pub fn sessions(&self) -> &[Session] {
        &self.sessions
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CorpusKind {
    Development,
    Evaluation,
}

impl fmt::Display for CorpusKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorpusKind::Development => "development",
            CorpusKind::Evaluation => "evaluation",
        })
    }
}

impl FromStr for CorpusKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dev" | "development" => Ok(CorpusKind::Development),
            "eval" | "evaluation" => Ok(CorpusKind::Evaluation),
            other => Err(Error::invalid("kind", format!("unrecognised corpus kind `{other}`"))),
        }
    }
}

/// An immutable keystroke corpus.
///
/// Development corpora hold subjects (sorted by id); evaluation corpora hold
/// a flat list of sessions (sorted by id) and no identities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    kind: CorpusKind,
    subjects: Vec<SubjectRecord>,
    flat: Vec<Session>,
}

impl Corpus {
    pub fn development(mut subjects: Vec<SubjectRecord>) -> Result<Self> {
        subjects.sort_by(|a, b| a.id.cmp(&b.id));
        for pair in subjects.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(Error::Duplicate {
                    what: "subject",
                    id: pair[0].id.clone(),
                });
            }
        }
        let mut seen = HashSet::new();
        for session in subjects.iter().flat_map(|s| &s.sessions) {
            if !seen.insert(session.id.as_str()) {
                return Err(Error::Duplicate {
                    what: "session",
                    id: session.id.clone(),
                });
            }
        }
        Ok(Self {
            kind: CorpusKind::Development,
            subjects,
            flat: Vec::new(),
        })
    }

    pub fn evaluation(mut sessions: Vec<Session>) -> Result<Self> {
        sessions.sort_by(|a, b| a.id.cmp(&b.id));
        for pair in sessions.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(Error::Duplicate {
                    what: "session",
                    id: pair[0].id.clone(),
                });
            }
        }
        Ok(Self {
            kind: CorpusKind::Evaluation,
            subjects: Vec::new(),
            flat: sessions,
        })
    }

    pub fn kind(&self) -> CorpusKind {
        self.kind
    }

    /// Subjects of a development corpus; empty for evaluation corpora.
    pub fn subjects(&self) -> &[SubjectRecord] {
        &self.subjects
    }

    /// Every session, in file order.
    pub fn sessions(&self) -> impl Iterator<Item = &Session> + '_ {
        self.subjects
            .iter()
            .flat_map(|s| s.sessions.iter())
            .chain(self.flat.iter())
    }

    pub fn session_count(&self) -> usize {
        self.subjects.iter().map(|s| s.sessions.len()).sum::<usize>() + self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.session_count() == 0
    }

    pub fn session_index(&self) -> HashMap<&str, &Session> {
        self.sessions().map(|s| (s.id(), s)).collect()
    }

    /// Drops development subjects with fewer than `min_sessions` sessions.
    pub fn exclude_sparse_subjects(mut self, min_sessions: usize) -> Self {
        self.subjects.retain(|s| s.sessions.len() >= min_sessions);
        self
    }

    /// Replaces development-subject demographics with those in `key`.
    pub fn with_demographics(mut self, key: &KeyFile) -> Result<Self> {
        if self.kind != CorpusKind::Development {
            return Err(Error::Validation(
                "demographics can only be attached to a development corpus".into(),
            ));
        }
        let by_subject: HashMap<&str, &KeyEntry> = key.entries().iter().map(|e| (e.subject_id.as_str(), e)).collect();
        for subject in &mut self.subjects {
            if let Some(entry) = by_subject.get(subject.id.as_str()) {
                subject.gender = entry.gender;
                subject.age_years = entry.age_years;
            }
        }
        Ok(self)
    }

    /// The key file describing this development corpus.
    pub fn key_file(&self) -> KeyFile {
        let entries = self
            .subjects
            .iter()
            .flat_map(|subject| {
                subject.sessions.iter().map(move |session| KeyEntry {
                    session_id: session.id.clone(),
                    subject_id: subject.id.clone(),
                    gender: subject.gender,
                    age_years: subject.age_years,
                })
            })
            .collect();
        KeyFile::new(entries).expect("corpus session ids are unique")
    }
}

/// Ground truth for a corpus: session owner and demographics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyEntry {
    pub session_id: String,
    pub subject_id: String,
    pub gender: Gender,
    pub age_years: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KeyFile {
    entries: Vec<KeyEntry>,
}

impl KeyFile {
    /// Entries are sorted by session id; a session may appear only once and
    /// a subject's demographics must agree across its sessions.
    pub fn new(mut entries: Vec<KeyEntry>) -> Result<Self> {
        entries.sort_by(|a, b| a.session_id.cmp(&b.session_id));
        for pair in entries.windows(2) {
            if pair[0].session_id == pair[1].session_id {
                return Err(Error::Duplicate {
                    what: "session",
                    id: pair[0].session_id.clone(),
                });
            }
        }
        let mut demographics: HashMap<&str, (Gender, Option<u32>)> = HashMap::new();
        for e in &entries {
            let d = (e.gender, e.age_years);
            if *demographics.entry(e.subject_id.as_str()).or_insert(d) != d {
                return Err(Error::Validation(format!(
                    "subject {} has inconsistent demographics in key file",
                    e.subject_id
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[KeyEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn owner_index(&self) -> HashMap<&str, &str> {
        self.entries
            .iter()
            .map(|e| (e.session_id.as_str(), e.subject_id.as_str()))
            .collect()
    }

    pub fn subject_ids(&self) -> HashSet<&str> {
        self.entries.iter().map(|e| e.subject_id.as_str()).collect()
    }
}

/// Fails if any subject appears in both the development corpus and the
/// evaluation key.
pub fn ensure_disjoint(development: &Corpus, evaluation_key: &KeyFile) -> Result<()> {
    let eval = evaluation_key.subject_ids();
    match development.subjects().iter().find(|s| eval.contains(s.id())) {
        Some(shared) => Err(Error::Validation(format!(
            "subject {} occurs in both development and evaluation sets",
            shared.id()
        ))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusStats {
    pub subjects: usize,
    pub sessions: usize,
    pub events: usize,
    pub mean_session_length: f64,
    /// Population standard deviation of events per session.
    pub std_session_length: f64,
}

pub fn corpus_stats(corpus: &Corpus) -> Result<CorpusStats> {
    let lengths: Vec<f64> = corpus.sessions().map(|s| s.len() as f64).collect();
    if lengths.is_empty() {
        return Err(Error::Validation("corpus has no sessions".into()));
    }
    let n = lengths.len() as f64;
    let mean = lengths.iter().sum::<f64>() / n;
    let var = lengths.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
    Ok(CorpusStats {
        subjects: corpus.subjects().len(),
        sessions: lengths.len(),
        events: corpus.sessions().map(Session::len).sum(),
        mean_session_length: mean,
        std_session_length: var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn session(id: &str, n: usize) -> Session {
        let events = (0..n as u64)
            .map(|i| KeystrokeEvent::new(65, i * 100, i * 100 + 50).unwrap())
            .collect();
        Session::new(id, events).unwrap()
    }

    #[test]
    fn rejects_release_before_press() {
        assert!(matches!(KeystrokeEvent::new(65, 100, 50), Err(Error::Validation(_))));
    }

    #[test]
    fn session_requires_sorted_events() {
        let a = KeystrokeEvent::new(65, 200, 250).unwrap();
        let b = KeystrokeEvent::new(66, 100, 150).unwrap();
        assert!(Session::new("x", vec![a, b]).is_err());
        assert!(Session::new("x", vec![]).is_err());
    }

    #[test]
    fn duplicate_sessions_across_subjects_rejected() {
        let s1 = SubjectRecord::new("a", Gender::Male, Some(30), vec![session("x", 3)]).unwrap();
        let s2 = SubjectRecord::new("b", Gender::Male, Some(30), vec![session("x", 3)]).unwrap();
        assert!(matches!(
            Corpus::development(vec![s1, s2]),
            Err(Error::Duplicate { what: "session", .. })
        ));
    }

    #[test]
    fn stats_two_sessions() {
        let corpus = Corpus::evaluation(vec![session("a", 40), session("b", 60)]).unwrap();
        let stats = corpus_stats(&corpus).unwrap();
        assert_eq!(stats.sessions, 2);
        assert_eq!(stats.mean_session_length, 50.0);
        assert_eq!(stats.std_session_length, 10.0);
    }

    #[test]
    fn stats_single_session() {
        let corpus = Corpus::evaluation(vec![session("a", 48)]).unwrap();
        let stats = corpus_stats(&corpus).unwrap();
        assert_eq!(stats.mean_session_length, 48.0);
        assert_eq!(stats.std_session_length, 0.0);
    }

    #[test]
    fn stats_of_empty_corpus_is_an_error() {
        let corpus = Corpus::evaluation(vec![]).unwrap();
        assert!(corpus_stats(&corpus).is_err());
    }

    #[test]
    fn sparse_subjects_are_excluded() {
        let many: Vec<Session> = (0..15).map(|i| session(&format!("a{i:02}"), 2)).collect();
        let keep = SubjectRecord::new("a", Gender::Female, Some(25), many).unwrap();
        let drop = SubjectRecord::new("b", Gender::Female, Some(25), vec![session("b0", 2)]).unwrap();
        let corpus = Corpus::development(vec![keep, drop])
            .unwrap()
            .exclude_sparse_subjects(15);
        assert_eq!(corpus.subjects().len(), 1);
        assert_eq!(corpus.subjects()[0].id(), "a");
    }

    #[test]
    fn open_set_check() {
        let dev = Corpus::development(vec![SubjectRecord::new(
            "a",
            Gender::Female,
            Some(25),
            vec![session("a0", 2)],
        )
        .unwrap()])
        .unwrap();
        let clash = KeyFile::new(vec![KeyEntry {
            session_id: "zz".into(),
            subject_id: "a".into(),
            gender: Gender::Female,
            age_years: Some(25),
        }])
        .unwrap();
        assert!(ensure_disjoint(&dev, &clash).is_err());
        assert!(ensure_disjoint(&dev, &KeyFile::default()).is_ok());
    }

    #[test]
    fn gender_parsing() {
        assert_eq!("F".parse::<Gender>().unwrap(), Gender::Female);
        assert_eq!("".parse::<Gender>().unwrap(), Gender::Unspecified);
        assert!("robot".parse::<Gender>().is_err());
    }
}
