//! Comparison-list generation.
//!
//! Every target subject contributes 5 enrollment and 10 verification
//! sessions. Its 150 one-to-one comparisons form 30 score groups of 5 (one
//! probe against each enrollment session): 10 genuine groups, 10 groups
//! whose probe comes from a different subject of the same gender and age
//! bin, and 10 whose probe comes from a subject differing in both.
//!
//! Subjects whose gender is unspecified or whose age is unknown have no
//! demographic group. They are never targets or similar impostors but may
//! serve as dissimilar impostors.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::corpus::{Corpus, Gender, KeyFile};
use crate::error::{Error, Result};
use crate::seed::rng_for;

pub const ENROLLMENT_SESSIONS: usize = 5;
pub const VERIFICATION_SESSIONS: usize = 10;
pub const IMPOSTORS_PER_CATEGORY: usize = 10;
pub const COMPARISONS_PER_SUBJECT: usize = ENROLLMENT_SESSIONS * (VERIFICATION_SESSIONS + 2 * IMPOSTORS_PER_CATEGORY);
pub const GROUPS_PER_SUBJECT: usize = VERIFICATION_SESSIONS + 2 * IMPOSTORS_PER_CATEGORY;

/// Age bins given by strictly increasing edges; an age falls in the bin
/// numbered by how many edges do not exceed it, so ages below the first edge
/// share bin 0 and ages at or past the last edge share the top bin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemographicBinning {
    edges: Vec<u32>,
}

impl Default for DemographicBinning {
    /// Decades: under 10, 10-19, 20-29, ..., 60-69, 70+.
    fn default() -> Self {
        Self {
            edges: (1..=7).map(|d| d * 10).collect(),
        }
    }
}

impl DemographicBinning {
    pub fn new(edges: Vec<u32>) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::invalid("age_bins", "need at least one edge"));
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("age_bins", "edges must be strictly increasing"));
        }
        Ok(Self { edges })
    }

    pub fn edges(&self) -> &[u32] {
        &self.edges
    }

    pub fn bin(&self, age: u32) -> usize {
        self.edges.partition_point(|&e| e <= age)
    }

    pub fn bin_label(&self, bin: usize) -> String {
        match bin {
            0 => format!("<{}", self.edges[0]),
            b if b == self.edges.len() => format!("{}+", self.edges[b - 1]),
            b => format!("{}-{}", self.edges[b - 1], self.edges[b] - 1),
        }
    }

    fn group(&self, gender: Gender, age: Option<u32>) -> Option<(Gender, usize)> {
        match (gender, age) {
            (Gender::Unspecified, _) | (_, None) => None,
            (g, Some(a)) => Some((g, self.bin(a))),
        }
    }
}

impl fmt::Display for DemographicBinning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let edges: Vec<String> = self.edges.iter().map(u32::to_string).collect();
        f.write_str(&edges.join(","))
    }
}

impl FromStr for DemographicBinning {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let edges = s
            .split(',')
            .map(|e| {
                e.trim()
                    .parse::<u32>()
                    .map_err(|_| Error::invalid("age_bins", format!("invalid edge `{e}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(edges)
    }
}

/// A subject as the protocol sees it: identity, demographics, session ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RosterEntry {
    pub subject_id: String,
    pub gender: Gender,
    pub age_years: Option<u32>,
    /// Sorted.
    pub sessions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Roster {
    entries: Vec<RosterEntry>,
}

impl Roster {
    pub fn new(mut entries: Vec<RosterEntry>) -> Result<Self> {
        for e in &mut entries {
            e.sessions.sort();
        }
        entries.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
        if let Some(w) = entries.windows(2).find(|w| w[0].subject_id == w[1].subject_id) {
            return Err(Error::Duplicate {
                what: "subject",
                id: w[0].subject_id.clone(),
            });
        }
        Ok(Self { entries })
    }

    pub fn from_key(key: &KeyFile) -> Self {
        let mut by_subject: BTreeMap<&str, RosterEntry> = BTreeMap::new();
        for e in key.entries() {
            by_subject
                .entry(e.subject_id.as_str())
                .or_insert_with(|| RosterEntry {
                    subject_id: e.subject_id.clone(),
                    gender: e.gender,
                    age_years: e.age_years,
                    sessions: Vec::new(),
                })
                .sessions
                .push(e.session_id.clone());
        }
        Self::new(by_subject.into_values().collect()).expect("key file subjects are unique")
    }

    pub fn from_corpus(corpus: &Corpus) -> Self {
        let entries = corpus
            .subjects()
            .iter()
            .map(|s| RosterEntry {
                subject_id: s.id().to_string(),
                gender: s.gender(),
                age_years: s.age_years(),
                sessions: s.sessions().iter().map(|x| x.id().to_string()).collect(),
            })
            .collect();
        Self::new(entries).expect("corpus subjects are unique")
    }

    pub fn entries(&self) -> &[RosterEntry] {
        &self.entries
    }

    pub fn get(&self, subject_id: &str) -> Option<&RosterEntry> {
        self.entries
            .binary_search_by(|e| e.subject_id.as_str().cmp(subject_id))
            .ok()
            .map(|i| &self.entries[i])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoleAssignment {
    pub subject_id: String,
    pub enrollment: Vec<String>,
    pub verification: Vec<String>,
}

/// Shuffles the subject's sessions with a generator seeded by
/// `(seed, subject_id)`; the first 5 enroll, the next 10 verify and any
/// remainder is left unused.
pub fn assign_roles(subject: &RosterEntry, seed: u64) -> Result<RoleAssignment> {
    let needed = ENROLLMENT_SESSIONS + VERIFICATION_SESSIONS;
    if subject.sessions.len() < needed {
        return Err(Error::Validation(format!(
            "subject {} has {} sessions, need at least {needed}",
            subject.subject_id,
            subject.sessions.len()
        )));
    }
    let mut sessions = subject.sessions.clone();
    sessions.sort();
    sessions.shuffle(&mut rng_for(seed, "roles", &subject.subject_id));
    sessions.truncate(needed);
    let verification = sessions.split_off(ENROLLMENT_SESSIONS);
    Ok(RoleAssignment {
        subject_id: subject.subject_id.clone(),
        enrollment: sessions,
        verification,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Genuine,
    ImpostorSimilar,
    ImpostorDissimilar,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Genuine => "genuine",
            Label::ImpostorSimilar => "impostor_similar",
            Label::ImpostorDissimilar => "impostor_dissimilar",
        }
    }

    pub fn is_genuine(&self) -> bool {
        matches!(self, Label::Genuine)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "genuine" => Ok(Label::Genuine),
            "impostor_similar" => Ok(Label::ImpostorSimilar),
            "impostor_dissimilar" => Ok(Label::ImpostorDissimilar),
            other => Err(Error::invalid("label", format!("unknown label `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImpostorPick {
    pub subject_id: String,
    pub session_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImpostorSelection {
    pub similar: Vec<ImpostorPick>,
    pub dissimilar: Vec<ImpostorPick>,
}

/// Precomputed role assignments and demographic pools over a roster.
struct ProtocolContext<'a> {
    roster: &'a Roster,
    seed: u64,
    assignments: Vec<RoleAssignment>,
    groups: Vec<Option<(Gender, usize)>>,
    members: HashMap<(Gender, usize), Vec<usize>>,
    dissimilar: HashMap<(Gender, usize), Vec<usize>>,
}

impl<'a> ProtocolContext<'a> {
    fn new(roster: &'a Roster, binning: &'a DemographicBinning, seed: u64) -> Result<Self> {
        let assignments = roster
            .entries
            .iter()
            .map(|e| assign_roles(e, seed))
            .collect::<Result<Vec<_>>>()?;
        let groups: Vec<_> = roster
            .entries
            .iter()
            .map(|e| binning.group(e.gender, e.age_years))
            .collect();
        let mut members: HashMap<(Gender, usize), Vec<usize>> = HashMap::new();
        for (i, g) in groups.iter().enumerate() {
            if let Some(g) = g {
                members.entry(*g).or_default().push(i);
            }
        }
        let mut dissimilar = HashMap::new();
        for &(gender, bin) in members.keys() {
            let pool: Vec<usize> = roster
                .entries
                .iter()
                .enumerate()
                .filter(|(_, e)| e.gender != gender && e.age_years.map(|a| binning.bin(a)) != Some(bin))
                .map(|(i, _)| i)
                .collect();
            dissimilar.insert((gender, bin), pool);
        }
        Ok(Self {
            roster,
            seed,
            assignments,
            groups,
            members,
            dissimilar,
        })
    }

    fn select(&self, target: usize) -> Result<ImpostorSelection> {
        let entry = &self.roster.entries[target];
        let group = self.groups[target].ok_or_else(|| {
            Error::Validation(format!(
                "subject {} has no demographic group (gender {}, age {:?}) and cannot be a target",
                entry.subject_id, entry.gender, entry.age_years
            ))
        })?;
        let mut rng = rng_for(self.seed, "impostors", &entry.subject_id);

        let same = &self.members[&group];
        let own = same.binary_search(&target).expect("target belongs to its group");
        if same.len() - 1 < IMPOSTORS_PER_CATEGORY {
            return Err(Error::InsufficientPool {
                category: "similar",
                subject: entry.subject_id.clone(),
                available: same.len() - 1,
                required: IMPOSTORS_PER_CATEGORY,
            });
        }
        let similar = index::sample(&mut rng, same.len() - 1, IMPOSTORS_PER_CATEGORY)
            .into_iter()
            .map(|k| same[if k >= own { k + 1 } else { k }])
            .collect::<Vec<_>>();

        let other = &self.dissimilar[&group];
        if other.len() < IMPOSTORS_PER_CATEGORY {
            return Err(Error::InsufficientPool {
                category: "dissimilar",
                subject: entry.subject_id.clone(),
                available: other.len(),
                required: IMPOSTORS_PER_CATEGORY,
            });
        }
        let dissimilar = index::sample(&mut rng, other.len(), IMPOSTORS_PER_CATEGORY)
            .into_iter()
            .map(|k| other[k])
            .collect::<Vec<_>>();

        let mut pick = |subject: usize| {
            let roles = &self.assignments[subject];
            ImpostorPick {
                subject_id: roles.subject_id.clone(),
                session_id: roles.verification[rng.random_range(0..roles.verification.len())].clone(),
            }
        };
        let similar = similar.into_iter().map(&mut pick).collect();
        let dissimilar = dissimilar.into_iter().map(&mut pick).collect();
        Ok(ImpostorSelection { similar, dissimilar })
    }
}

/// Draws 10 similar and 10 dissimilar impostor probes for `target`, one
/// verification session from each of 20 distinct impostor subjects.
pub fn select_impostors(
    target: &RosterEntry,
    roster: &Roster,
    binning: &DemographicBinning,
    seed: u64,
) -> Result<ImpostorSelection> {
    let idx = roster
        .entries
        .binary_search_by(|e| e.subject_id.cmp(&target.subject_id))
        .map_err(|_| Error::Validation(format!("subject {} is not in the roster", target.subject_id)))?;
    ProtocolContext::new(roster, binning, seed)?.select(idx)
}

/// One comparison, as indices into the list's string tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Entry {
    enrollment: u32,
    verification: u32,
    label: Label,
    target: u32,
    score_group: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Comparison<'a> {
    pub enrollment_session: &'a str,
    pub verification_session: &'a str,
    pub label: Label,
    pub target_subject: &'a str,
    pub score_group: u32,
}

#[derive(Debug, Default)]
struct Interner {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Interner {
    fn intern(&mut self, name: &str) -> u32 {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len() as u32;
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), i);
        i
    }
}

/// An ordered list of one-to-one comparisons plus provenance metadata.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ComparisonList {
    sessions: Vec<String>,
    subjects: Vec<String>,
    entries: Vec<Entry>,
    metadata: Vec<(String, String)>,
}

#[derive(Default)]
struct ListBuilder {
    sessions: Interner,
    subjects: Interner,
    entries: Vec<Entry>,
}

impl ListBuilder {
    fn push(&mut self, enrollment: &str, verification: &str, label: Label, target: &str, group: u32) {
        let entry = Entry {
            enrollment: self.sessions.intern(enrollment),
            verification: self.sessions.intern(verification),
            label,
            target: self.subjects.intern(target),
            score_group: group,
        };
        self.entries.push(entry);
    }

    fn finish(self, metadata: Vec<(String, String)>) -> ComparisonList {
        ComparisonList {
            sessions: self.sessions.names,
            subjects: self.subjects.names,
            entries: self.entries,
            metadata,
        }
    }
}

pub const COMPARISON_HEADER: &str = "enroll_session,verify_session,label,target_subject,score_group";

impl ComparisonList {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn view(&self, e: &Entry) -> Comparison<'_> {
        Comparison {
            enrollment_session: &self.sessions[e.enrollment as usize],
            verification_session: &self.sessions[e.verification as usize],
            label: e.label,
            target_subject: &self.subjects[e.target as usize],
            score_group: e.score_group,
        }
    }

    pub fn get(&self, i: usize) -> Option<Comparison<'_>> {
        self.entries.get(i).map(|e| self.view(e))
    }

    pub fn iter(&self) -> impl Iterator<Item = Comparison<'_>> + '_ {
        self.entries.iter().map(|e| self.view(e))
    }

    /// Distinct session ids referenced by the list, in first-use order.
    pub fn session_ids(&self) -> &[String] {
        &self.sessions
    }

    /// `(enrollment, verification)` positions into [`ComparisonList::session_ids`].
    pub fn session_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.entries
            .iter()
            .map(|e| (e.enrollment as usize, e.verification as usize))
    }

    pub fn target_subjects(&self) -> &[String] {
        &self.subjects
    }

    /// Provenance recorded in the file header (seed, age bins, ...).
    pub fn metadata(&self) -> &[(String, String)] {
        &self.metadata
    }

    /// `[genuine, similar, dissimilar]` comparison counts per target subject.
    pub fn counts_by_subject(&self) -> BTreeMap<&str, [usize; 3]> {
        let mut counts: BTreeMap<&str, [usize; 3]> = BTreeMap::new();
        for e in &self.entries {
            let slot = counts.entry(&self.subjects[e.target as usize]).or_default();
            slot[e.label as usize] += 1;
        }
        counts
    }

    pub fn score_group_count(&self) -> usize {
        let mut groups: Vec<u32> = self.entries.iter().map(|e| e.score_group).collect();
        groups.sort_unstable();
        groups.dedup();
        groups.len()
    }

    /// Checks the list against ground truth: every session is known, the
    /// enrollment session always belongs to the target, and the label is
    /// genuine exactly when the probe does too.
    pub fn validate_against_key(&self, key: &KeyFile) -> Result<()> {
        let owners = key.owner_index();
        for (i, c) in self.iter().enumerate() {
            let owner = |s: &str| {
                owners
                    .get(s)
                    .copied()
                    .ok_or_else(|| Error::UnknownSession(s.to_string()))
            };
            let enroll_owner = owner(c.enrollment_session)?;
            let probe_owner = owner(c.verification_session)?;
            if c.enrollment_session == c.verification_session {
                return Err(Error::Validation(format!(
                    "comparison {i} pairs session {} with itself",
                    c.enrollment_session
                )));
            }
            if enroll_owner != c.target_subject {
                return Err(Error::Validation(format!(
                    "comparison {i}: enrollment session {} does not belong to target {}",
                    c.enrollment_session, c.target_subject
                )));
            }
            if c.label.is_genuine() != (probe_owner == c.target_subject) {
                return Err(Error::Validation(format!(
                    "comparison {i}: label {} contradicts ground truth (probe owner {probe_owner}, target {})",
                    c.label, c.target_subject
                )));
            }
        }
        Ok(())
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        for (k, v) in &self.metadata {
            writeln!(out, "# {k}={v}")?;
        }
        writeln!(out, "{COMPARISON_HEADER}")?;
        for c in self.iter() {
            writeln!(
                out,
                "{},{},{},{},{}",
                c.enrollment_session, c.verification_session, c.label, c.target_subject, c.score_group
            )?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn parse<R: BufRead>(input: R) -> Result<Self> {
        let mut builder = ListBuilder::default();
        let mut metadata = Vec::new();
        let mut header_seen = false;
        for (i, line) in input.lines().enumerate() {
            let lineno = i + 1;
            let line = line?;
            let line = line.trim();
            if let Some(comment) = line.strip_prefix('#') {
                if let Some((k, v)) = comment.trim().split_once('=') {
                    metadata.push((k.trim().to_string(), v.trim().to_string()));
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            if !header_seen {
                if line != COMPARISON_HEADER {
                    return Err(Error::parse(lineno, format!("expected header `{COMPARISON_HEADER}`")));
                }
                header_seen = true;
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 5 {
                return Err(Error::parse(lineno, format!("expected 5 fields, found {}", f.len())));
            }
            if f[0].is_empty() || f[1].is_empty() || f[3].is_empty() {
                return Err(Error::parse(lineno, "empty session or subject id"));
            }
            let label: Label = f[2].parse().map_err(|e: Error| Error::parse(lineno, e.to_string()))?;
            let group: u32 = f[4]
                .parse()
                .map_err(|_| Error::parse(lineno, format!("invalid score_group `{}`", f[4])))?;
            builder.push(f[0], f[1], label, f[3], group);
        }
        if !header_seen {
            return Err(Error::parse(1, "missing comparison list header"));
        }
        Ok(builder.finish(metadata))
    }
}

/// Builds the full list for every roster subject that has a demographic
/// group, in roster (subject id) order.
pub fn generate_comparison_list(roster: &Roster, binning: &DemographicBinning, seed: u64) -> Result<ComparisonList> {
    let ctx = ProtocolContext::new(roster, binning, seed)?;
    let mut builder = ListBuilder::default();
    let mut group = 0u32;
    for (t, entry) in roster.entries.iter().enumerate() {
        if ctx.groups[t].is_none() {
            continue;
        }
        let roles = &ctx.assignments[t];
        let selection = ctx.select(t)?;
        let target = entry.subject_id.as_str();
        let probes = roles
            .verification
            .iter()
            .map(|v| (v.as_str(), Label::Genuine))
            .chain(
                selection
                    .similar
                    .iter()
                    .map(|p| (p.session_id.as_str(), Label::ImpostorSimilar)),
            )
            .chain(
                selection
                    .dissimilar
                    .iter()
                    .map(|p| (p.session_id.as_str(), Label::ImpostorDissimilar)),
            );
        for (probe, label) in probes {
            for enrollment in &roles.enrollment {
                builder.push(enrollment, probe, label, target, group);
            }
            group += 1;
        }
    }
    let metadata = vec![
        ("seed".to_string(), seed.to_string()),
        ("age_bins".to_string(), binning.to_string()),
        ("subjects".to_string(), builder.subjects.names.len().to_string()),
    ];
    Ok(builder.finish(metadata))
}

/// Writes one score per line, in list order. `{}` formatting round-trips
/// every `f64` exactly.
pub fn write_scores<W: Write>(scores: &[f64], mut out: W) -> Result<()> {
    for s in scores {
        writeln!(out, "{s}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn parse_scores<R: BufRead>(input: R) -> Result<Vec<f64>> {
    let mut scores = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let score: f64 = line
            .parse()
            .map_err(|_| Error::parse(i + 1, format!("invalid score `{line}`")))?;
        scores.push(score);
    }
    Ok(scores)
}
