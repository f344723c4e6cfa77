use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::protocol::{ComparisonList, Label, ENROLLMENT_SESSIONS, IMPOSTORS_PER_CATEGORY, VERIFICATION_SESSIONS};

/// Aggregated (group-mean) scores of one target subject.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SubjectScores {
    pub subject_id: String,
    pub genuine: Vec<f64>,
    pub similar: Vec<f64>,
    pub dissimilar: Vec<f64>,
}

impl SubjectScores {
    pub fn impostors(&self) -> Vec<f64> {
        [self.similar.as_slice(), self.dissimilar.as_slice()].concat()
    }

    fn slot(&mut self, label: Label) -> &mut Vec<f64> {
        match label {
            Label::Genuine => &mut self.genuine,
            Label::ImpostorSimilar => &mut self.similar,
            Label::ImpostorDissimilar => &mut self.dissimilar,
        }
    }
}

/// One aggregated score per (target, probe) group, split by label.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreSet {
    pub subjects: Vec<SubjectScores>,
}

impl ScoreSet {
    fn collect(&self, pick: impl Fn(&SubjectScores) -> &[f64]) -> Vec<f64> {
        self.subjects.iter().flat_map(|s| pick(s).iter().copied()).collect()
    }

    pub fn genuine(&self) -> Vec<f64> {
        self.collect(|s| &s.genuine)
    }

    pub fn similar(&self) -> Vec<f64> {
        self.collect(|s| &s.similar)
    }

    pub fn dissimilar(&self) -> Vec<f64> {
        self.collect(|s| &s.dissimilar)
    }

    pub fn impostors(&self) -> Vec<f64> {
        let mut all = self.similar();
        all.extend(self.dissimilar());
        all
    }

    /// Checks the per-subject protocol structure (10 genuine, 10 similar,
    /// 10 dissimilar).
    pub fn check_structure(&self) -> Result<()> {
        if self.subjects.is_empty() {
            return Err(Error::Validation("score set has no subjects".into()));
        }
        for s in &self.subjects {
            for (what, n, expected) in [
                ("genuine", s.genuine.len(), VERIFICATION_SESSIONS),
                ("similar impostor", s.similar.len(), IMPOSTORS_PER_CATEGORY),
                ("dissimilar impostor", s.dissimilar.len(), IMPOSTORS_PER_CATEGORY),
            ] {
                if n != expected {
                    return Err(Error::CountMismatch {
                        what: format!("{what} scores for subject {}", s.subject_id),
                        expected,
                        found: n,
                    });
                }
            }
        }
        Ok(())
    }
}

struct Group {
    id: u32,
    label: Label,
    target: usize,
    sum: f64,
    count: usize,
}

/// Averages the enrollment comparisons of every score group. Scores must be
/// in `[0, 1]` and line up one-to-one with the list.
pub fn aggregate(scores: &[f64], list: &ComparisonList) -> Result<ScoreSet> {
    if scores.len() != list.len() {
        return Err(Error::CountMismatch {
            what: "scores".into(),
            expected: list.len(),
            found: scores.len(),
        });
    }
    if let Some((i, s)) = scores.iter().enumerate().find(|(_, s)| !(0.0..=1.0).contains(*s)) {
        return Err(Error::Validation(format!("score {i} is {s}, outside [0, 1]")));
    }

    let mut subjects: Vec<SubjectScores> = Vec::new();
    let mut subject_index: HashMap<&str, usize> = HashMap::new();
    let mut groups: Vec<Group> = Vec::new();
    let mut group_index: HashMap<u32, usize> = HashMap::new();
    for (c, &score) in list.iter().zip(scores) {
        let target = *subject_index.entry(c.target_subject).or_insert_with(|| {
            subjects.push(SubjectScores {
                subject_id: c.target_subject.to_string(),
                ..Default::default()
            });
            subjects.len() - 1
        });
        let g = *group_index.entry(c.score_group).or_insert_with(|| {
            groups.push(Group {
                id: c.score_group,
                label: c.label,
                target,
                sum: 0.0,
                count: 0,
            });
            groups.len() - 1
        });
        let group = &mut groups[g];
        if group.label != c.label || group.target != target {
            return Err(Error::Validation(format!(
                "score group {} mixes labels or targets",
                c.score_group
            )));
        }
        group.sum += score;
        group.count += 1;
    }

    for g in &groups {
        if g.count != ENROLLMENT_SESSIONS {
            return Err(Error::CountMismatch {
                what: format!("comparisons in score group {}", g.id),
                expected: ENROLLMENT_SESSIONS,
                found: g.count,
            });
        }
        subjects[g.target].slot(g.label).push(g.sum / g.count as f64);
    }
    Ok(ScoreSet { subjects })
}
