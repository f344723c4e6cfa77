use std::collections::HashSet;
use std::io::{BufRead, Write};

use super::{Corpus, CorpusKind, Gender, KeyEntry, KeyFile, KeystrokeEvent, Session, SubjectRecord};
use crate::error::{Error, Result};

pub const CORPUS_HEADER: &str = "subject_id,session_id,key_code,press_ms,release_ms";
pub const KEY_HEADER: &str = "session_id,subject_id,gender,age";

/// Yields `(line_number, trimmed_line)` for every data line, after checking
/// the header. Blank lines and `#` comments are skipped.
fn data_lines<R: BufRead>(input: R, header: &'static str) -> impl Iterator<Item = Result<(usize, String)>> {
    let mut header_seen = false;
    input.lines().enumerate().filter_map(move |(i, line)| {
        let lineno = i + 1;
        let line = match line {
            Ok(l) => l,
            Err(e) => return Some(Err(Error::Io(e))),
        };
        let line = line.trim_end_matches(['\r', '\n']).trim();
        if line.is_empty() || line.starts_with('#') {
            return None;
        }
        if !header_seen {
            header_seen = true;
            if line != header {
                return Some(Err(Error::parse(
                    lineno,
                    format!("expected header `{header}`, found `{line}`"),
                )));
            }
            return None;
        }
        Some(Ok((lineno, line.to_string())))
    })
}

fn parse_field<T: std::str::FromStr>(lineno: usize, name: &str, raw: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| Error::parse(lineno, format!("invalid {name} `{raw}`")))
}

#[derive(Default)]
struct Grouper {
    subjects: Vec<(String, Vec<Session>)>,
    flat: Vec<Session>,
    current_subject: Option<String>,
    current_session: Option<(String, Vec<KeystrokeEvent>)>,
    seen_subjects: HashSet<String>,
    seen_sessions: HashSet<String>,
}

impl Grouper {
    fn flush_session(&mut self) -> Result<()> {
        if let Some((id, events)) = self.current_session.take() {
            let session = Session::new(id, events)?;
            match self.subjects.last_mut() {
                Some((_, sessions)) if self.current_subject.is_some() => sessions.push(session),
                _ => self.flat.push(session),
            }
        }
        Ok(())
    }

    fn push(&mut self, lineno: usize, subject: &str, session: &str, event: KeystrokeEvent) -> Result<()> {
        let same_subject =
            self.current_subject.as_deref() == Some(subject) || (subject.is_empty() && self.current_subject.is_none());
        if let Some((id, events)) = &mut self.current_session {
            if same_subject && id == session {
                let last = events.last().expect("sessions start with one event");
                if event.press_ms < last.press_ms {
                    return Err(Error::Validation(format!(
                        "line {lineno}: press time {} ms precedes previous press {} ms in session {session}",
                        event.press_ms, last.press_ms
                    )));
                }
                events.push(event);
                return Ok(());
            }
        }
        self.flush_session()?;
        if !same_subject {
            if !self.seen_subjects.insert(subject.to_string()) {
                return Err(Error::Duplicate {
                    what: "subject",
                    id: format!("{subject} (rows not contiguous, line {lineno})"),
                });
            }
            self.current_subject = Some(subject.to_string());
            self.subjects.push((subject.to_string(), Vec::new()));
        }
        if !self.seen_sessions.insert(session.to_string()) {
            return Err(Error::Duplicate {
                what: "session",
                id: format!("{session} (line {lineno})"),
            });
        }
        self.current_session = Some((session.to_string(), vec![event]));
        Ok(())
    }
}

/// Parses a corpus file. Development subjects come back with unspecified
/// demographics; attach a key file with [`Corpus::with_demographics`].
pub fn parse_corpus<R: BufRead>(input: R, kind: CorpusKind) -> Result<Corpus> {
    let mut grouper = Grouper::default();
    for line in data_lines(input, CORPUS_HEADER) {
        let (lineno, line) = line?;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::parse(
                lineno,
                format!("expected 5 fields, found {}", fields.len()),
            ));
        }
        let subject = fields[0].trim();
        let session = fields[1].trim();
        match kind {
            CorpusKind::Development if subject.is_empty() => {
                return Err(Error::parse(lineno, "missing subject_id in development corpus"))
            }
            CorpusKind::Evaluation if !subject.is_empty() => {
                return Err(Error::parse(
                    lineno,
                    "evaluation corpus rows must leave subject_id blank",
                ))
            }
            _ => {}
        }
        if session.is_empty() {
            return Err(Error::parse(lineno, "missing session_id"));
        }
        let key_code: u16 = parse_field(lineno, "key_code", fields[2])?;
        let key_code =
            u8::try_from(key_code).map_err(|_| Error::parse(lineno, format!("key_code {key_code} outside 0-255")))?;
        let press: u64 = parse_field(lineno, "press_ms", fields[3])?;
        let release: u64 = parse_field(lineno, "release_ms", fields[4])?;
        let event = KeystrokeEvent::new(key_code, press, release)
            .map_err(|e| Error::Validation(format!("line {lineno}: {e}")))?;
        grouper.push(lineno, subject, session, event)?;
    }
    grouper.flush_session()?;
    match kind {
        CorpusKind::Development => {
            let subjects = grouper
                .subjects
                .into_iter()
                .map(|(id, sessions)| SubjectRecord::new(id, Gender::Unspecified, None, sessions))
                .collect::<Result<Vec<_>>>()?;
            Corpus::development(subjects)
        }
        CorpusKind::Evaluation => Corpus::evaluation(grouper.flat),
    }
}

pub fn write_corpus<W: Write>(corpus: &Corpus, mut out: W) -> Result<()> {
    writeln!(out, "{CORPUS_HEADER}")?;
    let rows = corpus
        .subjects()
        .iter()
        .flat_map(|s| s.sessions().iter().map(move |sess| (s.id(), sess)))
        .chain(corpus.flat.iter().map(|sess| ("", sess)));
    for (subject, session) in rows {
        for e in session.events() {
            writeln!(
                out,
                "{subject},{},{},{},{}",
                session.id(),
                e.key_code,
                e.press_ms,
                e.release_ms
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn parse_key_file<R: BufRead>(input: R) -> Result<KeyFile> {
    let mut entries = Vec::new();
    for line in data_lines(input, KEY_HEADER) {
        let (lineno, line) = line?;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                lineno,
                format!("expected 4 fields, found {}", fields.len()),
            ));
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(Error::parse(lineno, "session_id and subject_id are required"));
        }
        let gender: Gender = fields[2]
            .parse()
            .map_err(|e: Error| Error::parse(lineno, e.to_string()))?;
        let age_years = match fields[3] {
            "" => None,
            raw => {
                let age: u32 = parse_field(lineno, "age", raw)?;
                if age == 0 {
                    return Err(Error::parse(lineno, "age must be positive"));
                }
                Some(age)
            }
        };
        entries.push(KeyEntry {
            session_id: fields[0].to_string(),
            subject_id: fields[1].to_string(),
            gender,
            age_years,
        });
    }
    KeyFile::new(entries)
}

pub fn write_key_file<W: Write>(key: &KeyFile, mut out: W) -> Result<()> {
    writeln!(out, "{KEY_HEADER}")?;
    for e in key.entries() {
        let age = e.age_years.map(|a| a.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{age}", e.session_id, e.subject_id, e.gender)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dev(text: &str) -> Result<Corpus> {
        parse_corpus(text.as_bytes(), CorpusKind::Development)
    }

    #[test]
    fn single_row() {
        let corpus = dev(&format!("{CORPUS_HEADER}\ns1,sess1,65,100,180\n")).unwrap();
        assert_eq!(corpus.subjects().len(), 1);
        let session = &corpus.subjects()[0].sessions()[0];
        assert_eq!(session.id(), "sess1");
        assert_eq!(session.len(), 1);
        assert_eq!(session.events()[0].key_code, 65);
        assert_eq!(session.events()[0].hold_ms(), 80);
    }

    #[test]
    fn release_before_press_is_a_validation_error() {
        let err = dev(&format!("{CORPUS_HEADER}\ns1,sess1,65,100,50\n")).unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("line 2")), "{err}");
    }

    #[test]
    fn malformed_row_names_line() {
        let err = dev(&format!("{CORPUS_HEADER}\ns1,sess1,65,100,180\ns1,sess1,xx,1\n")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = dev(&format!("{CORPUS_HEADER}\ns1,sess1,300,100,180\n")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn missing_header_rejected() {
        assert!(matches!(
            dev("s1,sess1,65,100,180\n"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn non_contiguous_session_is_a_duplicate() {
        let text = format!("{CORPUS_HEADER}\ns1,a,65,0,10\ns1,b,65,0,10\ns1,a,65,20,30\n");
        assert!(matches!(dev(&text), Err(Error::Duplicate { what: "session", .. })));
        let text = format!("{CORPUS_HEADER}\ns1,a,65,0,10\ns2,a,65,0,10\n");
        assert!(matches!(dev(&text), Err(Error::Duplicate { what: "session", .. })));
        let text = format!("{CORPUS_HEADER}\ns1,a,65,0,10\ns2,b,65,0,10\ns1,c,65,0,10\n");
        assert!(matches!(dev(&text), Err(Error::Duplicate { what: "subject", .. })));
    }

    #[test]
    fn unsorted_presses_rejected() {
        let text = format!("{CORPUS_HEADER}\ns1,a,65,100,110\ns1,a,66,50,60\n");
        assert!(matches!(dev(&text), Err(Error::Validation(_))));
    }

    #[test]
    fn evaluation_rows_must_hide_identity() {
        let text = format!("{CORPUS_HEADER}\ns1,a,65,100,110\n");
        assert!(parse_corpus(text.as_bytes(), CorpusKind::Evaluation).is_err());
        let text = format!("{CORPUS_HEADER}\n,a,65,100,110\n,b,66,0,10\n,b,67,20,30\n");
        let corpus = parse_corpus(text.as_bytes(), CorpusKind::Evaluation).unwrap();
        assert_eq!(corpus.session_count(), 2);
        assert!(corpus.subjects().is_empty());
    }

    #[test]
    fn key_file_round_trip() {
        let text = format!("{KEY_HEADER}\nb,s2,male,\na,s1,female,34\n");
        let key = parse_key_file(text.as_bytes()).unwrap();
        assert_eq!(key.entries()[0].session_id, "a");
        assert_eq!(key.entries()[1].age_years, None);
        let mut buf = Vec::new();
        write_key_file(&key, &mut buf).unwrap();
        assert_eq!(parse_key_file(buf.as_slice()).unwrap(), key);
    }

    #[test]
    fn key_file_rejects_conflicting_demographics() {
        let text = format!("{KEY_HEADER}\na,s1,female,34\nb,s1,male,34\n");
        assert!(parse_key_file(text.as_bytes()).is_err());
    }
}
