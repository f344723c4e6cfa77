use std::fmt::Write as _;
use std::io::Write;

use super::rates::{det_curve, eer_fraction, fnmr_at_fmr_fraction, rank_auc, CurveData};
use super::{mean_subject_eer_by, probit, ScoreSet, SubjectScores};
use crate::error::{Error, Result};

/// The five ranking metrics, all in percent.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricsSummary {
    pub global_eer: f64,
    pub fnmr_at_fmr1: f64,
    pub fnmr_at_fmr1_extrapolated: bool,
    pub fnmr_at_fmr10: f64,
    pub fnmr_at_fmr10_extrapolated: bool,
    pub auc: f64,
    pub mean_per_subject_eer: f64,
}

impl MetricsSummary {
    fn compute<F>(set: &ScoreSet, genuine: &[f64], impostor: &[f64], per_subject: F) -> Result<(Self, CurveData)>
    where
        F: Fn(&SubjectScores) -> Vec<f64> + Sync,
    {
        let curve = det_curve(genuine, impostor)?;
        let (fnmr1, x1) = fnmr_at_fmr_fraction(&curve, 0.01);
        let (fnmr10, x10) = fnmr_at_fmr_fraction(&curve, 0.10);
        let summary = Self {
            global_eer: 100.0 * eer_fraction(&curve),
            fnmr_at_fmr1: 100.0 * fnmr1,
            fnmr_at_fmr1_extrapolated: x1,
            fnmr_at_fmr10: 100.0 * fnmr10,
            fnmr_at_fmr10_extrapolated: x10,
            auc: 100.0 * rank_auc(genuine, impostor)?,
            mean_per_subject_eer: mean_subject_eer_by(set, per_subject)?,
        };
        Ok((summary, curve))
    }

    fn entries(&self) -> [(&'static str, String); 7] {
        [
            ("global_eer", self.global_eer.to_string()),
            ("fnmr_at_fmr1", self.fnmr_at_fmr1.to_string()),
            ("fnmr_at_fmr1_extrapolated", self.fnmr_at_fmr1_extrapolated.to_string()),
            ("fnmr_at_fmr10", self.fnmr_at_fmr10.to_string()),
            (
                "fnmr_at_fmr10_extrapolated",
                self.fnmr_at_fmr10_extrapolated.to_string(),
            ),
            ("auc", self.auc.to_string()),
            ("mean_per_subject_eer", self.mean_per_subject_eer.to_string()),
        ]
    }

    fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let num = || -> Result<f64> {
            value
                .parse()
                .map_err(|_| Error::invalid(key, format!("not a number: `{value}`")))
        };
        let flag = || -> Result<bool> {
            value
                .parse()
                .map_err(|_| Error::invalid(key, format!("not a boolean: `{value}`")))
        };
        match key {
            "global_eer" => self.global_eer = num()?,
            "fnmr_at_fmr1" => self.fnmr_at_fmr1 = num()?,
            "fnmr_at_fmr1_extrapolated" => self.fnmr_at_fmr1_extrapolated = flag()?,
            "fnmr_at_fmr10" => self.fnmr_at_fmr10 = num()?,
            "fnmr_at_fmr10_extrapolated" => self.fnmr_at_fmr10_extrapolated = flag()?,
            "auc" => self.auc = num()?,
            "mean_per_subject_eer" => self.mean_per_subject_eer = num()?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Metrics for all impostors pooled and for each impostor category alone,
/// plus the pooled error-rate curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub pooled: MetricsSummary,
    pub similar: MetricsSummary,
    pub dissimilar: MetricsSummary,
    pub subjects: usize,
    pub genuine_count: usize,
    pub similar_count: usize,
    pub dissimilar_count: usize,
    pub curve: CurveData,
}

pub fn evaluate_score_set(set: &ScoreSet) -> Result<Evaluation> {
    set.check_structure()?;
    let genuine = set.genuine();
    let similar = set.similar();
    let dissimilar = set.dissimilar();
    let impostors = set.impostors();
    let (pooled, curve) = MetricsSummary::compute(set, &genuine, &impostors, SubjectScores::impostors)?;
    let (similar_only, _) = MetricsSummary::compute(set, &genuine, &similar, |s| s.similar.clone())?;
    let (dissimilar_only, _) = MetricsSummary::compute(set, &genuine, &dissimilar, |s| s.dissimilar.clone())?;
    Ok(Evaluation {
        pooled,
        similar: similar_only,
        dissimilar: dissimilar_only,
        subjects: set.subjects.len(),
        genuine_count: genuine.len(),
        similar_count: similar.len(),
        dissimilar_count: dissimilar.len(),
        curve,
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub system: String,
    pub subjects: usize,
    pub genuine_count: usize,
    pub similar_count: usize,
    pub dissimilar_count: usize,
    pub pooled: MetricsSummary,
    pub similar: MetricsSummary,
    pub dissimilar: MetricsSummary,
    /// Configuration echo, in insertion order.
    pub config: Vec<(String, String)>,
}

pub fn build_report(system: &str, evaluation: &Evaluation, config: Vec<(String, String)>) -> MetricsReport {
    MetricsReport {
        system: system.to_string(),
        subjects: evaluation.subjects,
        genuine_count: evaluation.genuine_count,
        similar_count: evaluation.similar_count,
        dissimilar_count: evaluation.dissimilar_count,
        pooled: evaluation.pooled,
        similar: evaluation.similar,
        dissimilar: evaluation.dissimilar,
        config,
    }
}

const COLUMNS: [&str; 5] = [
    "Global EER (%)",
    "FNMR @1% FMR (%)",
    "FNMR @10% FMR (%)",
    "AUC (%)",
    "Mean Per-Subject EER (%)",
];

fn cell(value: f64, extrapolated: bool) -> String {
    if extrapolated {
        format!("{value:.2}*")
    } else {
        format!("{value:.2}")
    }
}

/// Fixed-width table, one row per system. With `ranked`, rows are sorted by
/// global EER (ties by name) and a position column is prepended.
pub fn render_table(rows: &[(String, MetricsSummary)], ranked: bool) -> String {
    let mut rows: Vec<&(String, MetricsSummary)> = rows.iter().collect();
    if ranked {
        rows.sort_by(|a, b| a.1.global_eer.total_cmp(&b.1.global_eer).then_with(|| a.0.cmp(&b.0)));
    }
    let name_width = rows.iter().map(|r| r.0.len()).chain([6]).max().unwrap_or(6);
    let mut out = String::new();
    let mut header = Vec::new();
    if ranked {
        header.push("Position".to_string());
    }
    header.push(format!("{:<name_width$}", "System"));
    header.extend(COLUMNS.iter().map(|c| c.to_string()));
    let _ = writeln!(out, "{}", header.join(" | "));
    let rule: Vec<String> = header.iter().map(|h| "-".repeat(h.len())).collect();
    let _ = writeln!(out, "{}", rule.join("-+-"));
    let mut any_extrapolated = false;
    for (pos, (name, m)) in rows.iter().map(|r| (&r.0, &r.1)).enumerate() {
        any_extrapolated |= m.fnmr_at_fmr1_extrapolated || m.fnmr_at_fmr10_extrapolated;
        let values = [
            cell(m.global_eer, false),
            cell(m.fnmr_at_fmr1, m.fnmr_at_fmr1_extrapolated),
            cell(m.fnmr_at_fmr10, m.fnmr_at_fmr10_extrapolated),
            cell(m.auc, false),
            cell(m.mean_per_subject_eer, false),
        ];
        let mut fields = Vec::new();
        if ranked {
            fields.push(format!("{:>8}", pos + 1));
        }
        fields.push(format!("{name:<name_width$}"));
        for (v, c) in values.iter().zip(COLUMNS) {
            fields.push(format!("{v:>width$}", width = c.len()));
        }
        let _ = writeln!(out, "{}", fields.join(" | "));
    }
    if any_extrapolated {
        let _ = writeln!(
            out,
            "* FMR target below the lowest attainable FMR; value taken at the strictest threshold"
        );
    }
    out
}

impl MetricsReport {
    /// Human-readable report: configuration echo, counts and the metric
    /// table with per-category rows.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "system: {}", self.system);
        for (k, v) in &self.config {
            let _ = writeln!(out, "config.{k}: {v}");
        }
        let _ = writeln!(
            out,
            "subjects: {}  genuine: {}  similar impostor: {}  dissimilar impostor: {}\n",
            self.subjects, self.genuine_count, self.similar_count, self.dissimilar_count
        );
        let rows = [
            (format!("{} (all impostors)", self.system), self.pooled),
            (format!("{} (similar only)", self.system), self.similar),
            (format!("{} (dissimilar only)", self.system), self.dissimilar),
        ];
        out.push_str(&render_table(&rows, false));
        out
    }

    /// Machine-readable `key=value` summary; [`parse_summary`] reads it back.
    pub fn to_summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "system={}", self.system);
        let _ = writeln!(out, "subjects={}", self.subjects);
        let _ = writeln!(out, "genuine_scores={}", self.genuine_count);
        let _ = writeln!(out, "similar_scores={}", self.similar_count);
        let _ = writeln!(out, "dissimilar_scores={}", self.dissimilar_count);
        for (prefix, m) in [
            ("", &self.pooled),
            ("similar.", &self.similar),
            ("dissimilar.", &self.dissimilar),
        ] {
            for (k, v) in m.entries() {
                let _ = writeln!(out, "{prefix}{k}={v}");
            }
        }
        for (k, v) in &self.config {
            let _ = writeln!(out, "config.{k}={v}");
        }
        out
    }
}

pub fn parse_summary(text: &str) -> Result<MetricsReport> {
    let mut report = MetricsReport::default();
    let mut seen_system = false;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(i + 1, "expected key=value"))?;
        let count = || -> Result<usize> {
            value
                .parse()
                .map_err(|_| Error::parse(i + 1, format!("invalid count `{value}`")))
        };
        match key {
            "system" => {
                report.system = value.to_string();
                seen_system = true;
            }
            "subjects" => report.subjects = count()?,
            "genuine_scores" => report.genuine_count = count()?,
            "similar_scores" => report.similar_count = count()?,
            "dissimilar_scores" => report.dissimilar_count = count()?,
            _ => {
                if let Some(k) = key.strip_prefix("config.") {
                    report.config.push((k.to_string(), value.to_string()));
                    continue;
                }
                let (target, k) = if let Some(k) = key.strip_prefix("similar.") {
                    (&mut report.similar, k)
                } else if let Some(k) = key.strip_prefix("dissimilar.") {
                    (&mut report.dissimilar, k)
                } else {
                    (&mut report.pooled, key)
                };
                if !target.set(k, value)? {
                    return Err(Error::parse(i + 1, format!("unknown key `{key}`")));
                }
            }
        }
    }
    if !seen_system {
        return Err(Error::Validation("summary has no `system` entry".into()));
    }
    Ok(report)
}

fn fmt_threshold(t: f64) -> String {
    if t == f64::INFINITY {
        "inf".into()
    } else if t == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        t.to_string()
    }
}

/// Writes the curve as CSV (`threshold,fmr,fnmr`), optionally with
/// normal-deviate columns for DET plotting.
pub fn write_curve<W: Write>(curve: &CurveData, with_probit: bool, mut out: W) -> Result<()> {
    if with_probit {
        writeln!(out, "threshold,fmr,fnmr,fmr_probit,fnmr_probit")?;
    } else {
        writeln!(out, "threshold,fmr,fnmr")?;
    }
    for p in curve.points() {
        let t = fmt_threshold(p.threshold);
        if with_probit {
            writeln!(out, "{t},{},{},{},{}", p.fmr, p.fnmr, probit(p.fmr), probit(p.fnmr))?;
        } else {
            writeln!(out, "{t},{},{}", p.fmr, p.fnmr)?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set() -> ScoreSet {
        let subjects = (0..6)
            .map(|k| SubjectScores {
                subject_id: format!("s{k}"),
                genuine: (0..10).map(|i| 0.5 + 0.04 * i as f64 + 0.001 * k as f64).collect(),
                similar: (0..10).map(|i| 0.3 + 0.04 * i as f64).collect(),
                dissimilar: (0..10).map(|i| 0.1 + 0.03 * i as f64).collect(),
            })
            .collect();
        ScoreSet { subjects }
    }

    #[test]
    fn summary_round_trip() {
        let eval = evaluate_score_set(&set()).unwrap();
        let report = build_report(
            "stat",
            &eval,
            vec![("seed".into(), "7".into()), ("method".into(), "statistical".into())],
        );
        let parsed = parse_summary(&report.to_summary()).unwrap();
        assert_eq!(parsed, report);
        assert!(parse_summary("global_eer=1\n").is_err());
        assert!(parse_summary("system=a\nbogus=1\n").is_err());
    }

    #[test]
    fn dissimilar_is_easier_than_similar() {
        let eval = evaluate_score_set(&set()).unwrap();
        assert!(eval.dissimilar.global_eer < eval.similar.global_eer);
        assert!(eval.pooled.fnmr_at_fmr1 >= eval.pooled.fnmr_at_fmr10);
        assert_eq!(eval.genuine_count, 60);
    }

    #[test]
    fn table_layout() {
        let eval = evaluate_score_set(&set()).unwrap();
        let mut worse = eval.pooled;
        worse.global_eer += 5.0;
        let text = render_table(&[("b".into(), worse), ("a".into(), eval.pooled)], true);
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("Position | System"));
        assert!(lines[2].contains(" a "), "{text}");
        let cells: Vec<&str> = lines[2].split('|').map(str::trim).collect();
        assert_eq!(cells.len(), 7);
        for c in &cells[2..] {
            let (_, frac) = c.trim_end_matches('*').split_once('.').unwrap();
            assert_eq!(frac.len(), 2);
        }
    }

    #[test]
    fn curve_csv() {
        let curve = det_curve(&[0.9, 0.5], &[0.1, 0.5]).unwrap();
        let mut buf = Vec::new();
        write_curve(&curve, true, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("threshold,fmr,fnmr,fmr_probit,fnmr_probit\n-inf,1,0,"));
        assert!(text.trim_end().lines().last().unwrap().starts_with("inf,0,1,"));
    }
}
