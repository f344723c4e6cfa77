//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test -p kvc-cli --test acceptance`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use kvc_core::corpus::{generate_synthetic_corpus, parse_corpus, CorpusKind, SyntheticProfile, EVALUATION_SESSIONS};
use kvc_core::metrics::{
    aggregate, compute_auc, compute_eer, evaluate_score_set, fnmr_at_fmr, parse_summary, rank_auc, CurveData,
    MetricsReport,
};
use kvc_core::protocol::{generate_comparison_list, parse_scores, ComparisonList, DemographicBinning, Roster};
use kvc_core::verifier::triplet_loss;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const SEED: u64 = 2026;
const GRID: usize = 1000;

const EER_TOL: f64 = 1e-6;
const AUC_TOL: f64 = 1e-12;
const FNMR_TOL: f64 = 1e-9;
const INVARIANCE_TOL: f64 = 1e-9;
const GRADIENT_STEP: f64 = 1e-5;
const GRADIENT_REL_TOL: f64 = 1e-4;
const DET_TOL: f64 = 1e-9;
const SEPARABLE_EER_MAX: f64 = 15.0;
const EMBEDDING_SLACK: f64 = 2.0;
const SHARED_EER: f64 = 50.0;
const SHARED_TOL: f64 = 3.0;
const LIST_TIME_LIMIT: Duration = Duration::from_secs(30);
const PIPELINE_TIME_LIMIT: Duration = Duration::from_secs(300);
const COLUMNS: [&str; 5] = [
    "Global EER (%)",
    "FNMR @1% FMR (%)",
    "FNMR @10% FMR (%)",
    "AUC (%)",
    "Mean Per-Subject EER (%)",
];

struct Suite {
    failures: usize,
}

impl Suite {
    fn check(&mut self, name: &str, result: Result<String, String>) {
        match result {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                self.failures += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// Protocol

/// Roster of a synthetic evaluation corpus. Two-event sessions keep
/// generation cheap; the protocol only sees ids.
fn evaluation_roster(subjects: usize, seed: u64) -> Result<Roster, String> {
    let profile = SyntheticProfile {
        length_mean: 2.0,
        length_std: 0.0,
        ..SyntheticProfile::default()
    };
    let synth = generate_synthetic_corpus(subjects, EVALUATION_SESSIONS, seed, &profile, CorpusKind::Evaluation)
        .map_err(|e| e.to_string())?;
    Ok(Roster::from_key(&synth.key))
}

fn evaluation_list(subjects: usize, seed: u64) -> Result<ComparisonList, String> {
    let roster = evaluation_roster(subjects, seed)?;
    generate_comparison_list(&roster, &DemographicBinning::default(), seed).map_err(|e| e.to_string())
}

fn protocol_counts() -> Result<String, String> {
    let mut details = Vec::new();
    for (subjects, expected) in [(15_000usize, 2_250_000usize), (5_000, 750_000)] {
        let roster = evaluation_roster(subjects, SEED)?;
        let start = Instant::now();
        let list =
            generate_comparison_list(&roster, &DemographicBinning::default(), SEED).map_err(|e| e.to_string())?;
        let elapsed = start.elapsed();
        ensure(list.len() == expected, || {
            format!(
                "{subjects} subjects gave {} comparisons, expected {expected}",
                list.len()
            )
        })?;
        if subjects == 15_000 {
            ensure(elapsed < LIST_TIME_LIMIT, || {
                format!("list generation took {elapsed:.2?}")
            })?;
        }
        details.push(format!("{subjects} -> {} in {elapsed:.2?}", list.len()));
    }
    Ok(details.join(", "))
}

fn per_subject_structure(pipeline_lists: &[PathBuf]) -> Result<String, String> {
    let mut lists = vec![evaluation_list(5_000, SEED + 1)?];
    for path in pipeline_lists {
        let text = fs::read(path).map_err(|e| e.to_string())?;
        lists.push(ComparisonList::parse(text.as_slice()).map_err(|e| e.to_string())?);
    }
    let mut subjects = 0;
    for list in &lists {
        let scores = vec![0.5; list.len()];
        let set = aggregate(&scores, list).map_err(|e| e.to_string())?;
        set.check_structure().map_err(|e| e.to_string())?;
        for s in &set.subjects {
            ensure(
                s.genuine.len() == 10 && s.similar.len() == 10 && s.dissimilar.len() == 10,
                || {
                    format!(
                        "subject {} has {}/{}/{}",
                        s.subject_id,
                        s.genuine.len(),
                        s.similar.len(),
                        s.dissimilar.len()
                    )
                },
            )?;
        }
        subjects += set.subjects.len();
    }
    Ok(format!("{subjects} subjects over {} lists, all 10/10/10", lists.len()))
}

// ---------------------------------------------------------------------------
// Metric oracles. Scores live on the grid k / GRID, so counting at every grid
// threshold visits every operating point of the empirical curve.

struct ScoreCase {
    genuine: Vec<usize>,
    impostor: Vec<usize>,
}

impl ScoreCase {
    fn values(ticks: &[usize]) -> Vec<f64> {
        ticks.iter().map(|&k| k as f64 / GRID as f64).collect()
    }

    fn genuine(&self) -> Vec<f64> {
        Self::values(&self.genuine)
    }

    fn impostor(&self) -> Vec<f64> {
        Self::values(&self.impostor)
    }
}

fn random_case(rng: &mut ChaCha8Rng) -> ScoreCase {
    let draw = |rng: &mut ChaCha8Rng, mean: f64, std: f64| -> Vec<usize> {
        let n = rng.random_range(10..=2000);
        let normal = Normal::new(mean, std).unwrap();
        (0..n)
            .map(|_| (normal.sample(rng).clamp(0.0, 1.0) * GRID as f64).round() as usize)
            .collect()
    };
    let std = rng.random_range(0.02..0.3);
    let imp_mean = rng.random_range(0.2..0.6);
    let gap = rng.random_range(-0.1..0.5);
    let impostor = draw(rng, imp_mean, std);
    let genuine = draw(rng, imp_mean + gap, std);
    ScoreCase { genuine, impostor }
}

/// (fmr, fnmr) at every grid threshold t = k / GRID (accept iff score >= t),
/// bracketed by the accept-all and reject-all points.
fn sweep(case: &ScoreCase) -> Vec<(f64, f64)> {
    let hist = |ticks: &[usize]| {
        let mut h = vec![0usize; GRID + 1];
        for &k in ticks {
            h[k] += 1;
        }
        h
    };
    let (hg, hi) = (hist(&case.genuine), hist(&case.impostor));
    let (ng, ni) = (case.genuine.len() as f64, case.impostor.len() as f64);
    let mut points = vec![(1.0, 0.0)];
    let (mut rejected_g, mut rejected_i) = (0usize, 0usize);
    for k in 0..=GRID {
        points.push(((ni - rejected_i as f64) / ni, rejected_g as f64 / ng));
        rejected_g += hg[k];
        rejected_i += hi[k];
    }
    points.push((0.0, 1.0));
    points
}

fn oracle_eer(points: &[(f64, f64)]) -> f64 {
    for w in points.windows(2) {
        let (d0, d1) = (w[0].0 - w[0].1, w[1].0 - w[1].1);
        if d1 == 0.0 {
            return 100.0 * w[1].0;
        }
        if d0 > 0.0 && d1 < 0.0 {
            let s = d0 / (d0 - d1);
            let p = (w[0].0 + s * (w[1].0 - w[0].0), w[0].1 + s * (w[1].1 - w[0].1));
            return 100.0 * (p.0 + p.1) / 2.0;
        }
    }
    unreachable!("curve runs from fmr > fnmr to fmr < fnmr")
}

fn oracle_auc(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[0].0 - w[1].0) * ((1.0 - w[0].1) + (1.0 - w[1].1)) / 2.0)
        .sum()
}

/// Returns (fnmr %, extrapolated).
fn oracle_fnmr(case: &ScoreCase, points: &[(f64, f64)], target: f64) -> (f64, bool) {
    let strictest = *case.genuine.iter().chain(&case.impostor).max().unwrap();
    let at_strictest = points[strictest + 1];
    if at_strictest.0 > target {
        return (100.0 * at_strictest.1, true);
    }
    for w in points.windows(2) {
        if w[1].0 <= target {
            let (a, b) = (w[0], w[1]);
            if a.0 == b.0 {
                return (100.0 * b.1, false);
            }
            let s = (a.0 - target) / (a.0 - b.0);
            return (100.0 * (a.1 + s * (b.1 - a.1)), false);
        }
    }
    unreachable!()
}

struct OracleStats {
    eer: f64,
    auc: f64,
    fnmr: f64,
    invariance: f64,
    ordering_ok: bool,
}

fn metric_oracles() -> Result<OracleStats, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut stats = OracleStats {
        eer: 0.0,
        auc: 0.0,
        fnmr: 0.0,
        invariance: 0.0,
        ordering_ok: true,
    };
    for case_index in 0..500 {
        let case = random_case(&mut rng);
        let (g, i) = (case.genuine(), case.impostor());
        let points = sweep(&case);
        let err = |e: kvc_core::Error| format!("case {case_index}: {e}");

        let eer = compute_eer(&g, &i).map_err(err)?;
        stats.eer = stats.eer.max((eer - oracle_eer(&points)).abs());
        stats.auc = stats
            .auc
            .max((rank_auc(&g, &i).map_err(err)? - oracle_auc(&points)).abs());
        let mut fnmr = [0.0; 2];
        for (slot, percent) in [1.0, 10.0].into_iter().enumerate() {
            let got = fnmr_at_fmr(&g, &i, percent).map_err(err)?;
            let (want, extrapolated) = oracle_fnmr(&case, &points, percent / 100.0);
            if got.extrapolated != extrapolated {
                return Err(format!("case {case_index}: extrapolation flag differs at {percent}%"));
            }
            stats.fnmr = stats.fnmr.max((got.fnmr - want).abs());
            fnmr[slot] = got.fnmr;
        }
        stats.ordering_ok &= fnmr[0] >= fnmr[1] && fnmr[1] >= 0.0;

        let cube = |v: &[f64]| v.iter().map(|x| x * x * x).collect::<Vec<_>>();
        let (g3, i3) = (cube(&g), cube(&i));
        let auc = compute_auc(&g, &i).map_err(err)?;
        stats.invariance = stats
            .invariance
            .max((compute_eer(&g3, &i3).map_err(err)? - eer).abs())
            .max((compute_auc(&g3, &i3).map_err(err)? - auc).abs());
    }
    Ok(stats)
}

// ---------------------------------------------------------------------------
// Gradients

fn gradient_check() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let margin = 1.0;
    let mut worst: f64 = 0.0;
    let (mut checked, mut active) = (0, 0);
    while checked < 100 {
        let mut v: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..8).map(|_| normal.sample(&mut rng)).collect())
            .collect();
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        // Stay clear of the hinge, where the loss is not differentiable.
        if (dist(&v[0], &v[1]) - dist(&v[0], &v[2]) + margin).abs() < 1e-3 {
            continue;
        }
        let out = triplet_loss(&v[0], &v[1], &v[2], margin).map_err(|e| e.to_string())?;
        if out.loss > 0.0 {
            active += 1;
        }
        let analytic = [out.grad_anchor, out.grad_positive, out.grad_negative];
        for which in 0..3 {
            for j in 0..8 {
                let x = v[which][j];
                v[which][j] = x + GRADIENT_STEP;
                let plus = triplet_loss(&v[0], &v[1], &v[2], margin).unwrap().loss;
                v[which][j] = x - GRADIENT_STEP;
                let minus = triplet_loss(&v[0], &v[1], &v[2], margin).unwrap().loss;
                v[which][j] = x;
                let numeric = (plus - minus) / (2.0 * GRADIENT_STEP);
                let a = analytic[which][j];
                let scale = a.abs().max(numeric.abs());
                if scale > 1e-8 {
                    worst = worst.max((a - numeric).abs() / scale);
                }
            }
        }
        checked += 1;
    }
    ensure(worst < GRADIENT_REL_TOL, || format!("max relative error {worst:.3e}"))?;
    ensure(active >= 20, || {
        format!("only {active} of 100 triplets had a non-zero loss")
    })?;
    Ok(format!(
        "100 triplets ({active} active), max relative error {worst:.3e}"
    ))
}

// ---------------------------------------------------------------------------
// End-to-end runs

fn kvc(dir: &Path, args: &[&str]) -> Result<Duration, String> {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_kvc"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("kvc {args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()));
    }
    Ok(start.elapsed())
}

fn pipeline(root: &Path, name: &str, extra: &[&str]) -> Result<(PathBuf, Duration), String> {
    let seed = SEED.to_string();
    let mut args = vec!["pipeline", "--out-dir", name, "--seed", &seed];
    args.extend_from_slice(extra);
    let elapsed = kvc(root, &args)?;
    Ok((root.join(name), elapsed))
}

fn summary(dir: &Path, method: &str) -> Result<MetricsReport, String> {
    let text = fs::read_to_string(dir.join(format!("summary_{method}.txt"))).map_err(|e| e.to_string())?;
    parse_summary(&text).map_err(|e| e.to_string())
}

/// Where the DET polyline crosses fmr = fnmr, found by segment/line
/// intersection over the whole curve.
fn det_crossing(curve: &CurveData) -> Option<f64> {
    let pts: Vec<(f64, f64)> = curve
        .points()
        .iter()
        .filter(|p| p.threshold.is_finite())
        .map(|p| (p.fmr, p.fnmr))
        .collect();
    let pts: Vec<(f64, f64)> = std::iter::once((1.0, 0.0))
        .chain(pts)
        .chain(std::iter::once((0.0, 1.0)))
        .collect();
    for w in pts.windows(2) {
        let (p, q) = (w[0], w[1]);
        // Solve p + s (q - p) = (t, t).
        let denom = (q.0 - p.0) - (q.1 - p.1);
        if denom == 0.0 {
            if p.0 == p.1 {
                return Some(100.0 * p.0);
            }
            continue;
        }
        let s = (p.1 - p.0) / denom;
        if (0.0..=1.0).contains(&s) {
            return Some(100.0 * (p.0 + s * (q.0 - p.0) + p.1 + s * (q.1 - p.1)) / 2.0);
        }
    }
    None
}

fn ordering(dirs: &[&Path], random_ok: bool) -> Result<String, String> {
    ensure(random_ok, || "FNMR@1% < FNMR@10% on a random score set".into())?;
    let mut worst: f64 = 0.0;
    let mut runs = 0;
    for dir in dirs {
        let list_text = fs::read(dir.join("comparisons.csv")).map_err(|e| e.to_string())?;
        let list = ComparisonList::parse(list_text.as_slice()).map_err(|e| e.to_string())?;
        for method in ["statistical", "embedding"] {
            let text = fs::read(dir.join(format!("scores_{method}.txt"))).map_err(|e| e.to_string())?;
            let scores = parse_scores(text.as_slice()).map_err(|e| e.to_string())?;
            let set = aggregate(&scores, &list).map_err(|e| e.to_string())?;
            let ev = evaluate_score_set(&set).map_err(|e| e.to_string())?;
            for m in [&ev.pooled, &ev.similar, &ev.dissimilar] {
                ensure(m.fnmr_at_fmr1 >= m.fnmr_at_fmr10 && m.fnmr_at_fmr10 >= 0.0, || {
                    format!(
                        "{}: FNMR@1% {} < FNMR@10% {}",
                        dir.display(),
                        m.fnmr_at_fmr1,
                        m.fnmr_at_fmr10
                    )
                })?;
            }
            let crossing = det_crossing(&ev.curve).ok_or("DET curve never meets the diagonal")?;
            worst = worst.max((crossing - ev.pooled.global_eer).abs());
            ensure(
                (summary(dir, method)?.pooled.global_eer - ev.pooled.global_eer).abs() < 1e-9,
                || "summary EER differs from the recomputed value".into(),
            )?;
            runs += 1;
        }
    }
    ensure(worst < DET_TOL, || format!("DET crossing off by {worst:.3e}"))?;
    Ok(format!(
        "500 random sets + {runs} pipeline runs; max |crossing - EER| = {worst:.1e}"
    ))
}

fn separability(main: &Path, shared: &Path, elapsed: Duration) -> Result<String, String> {
    let corpus = fs::read(main.join("eval_corpus.csv")).map_err(|e| e.to_string())?;
    let corpus = parse_corpus(corpus.as_slice(), CorpusKind::Evaluation).map_err(|e| e.to_string())?;
    ensure(corpus.session_count() == 1000 * EVALUATION_SESSIONS, || {
        "unexpected corpus size".into()
    })?;
    let stat = summary(main, "statistical")?.pooled.global_eer;
    let emb = summary(main, "embedding")?.pooled.global_eer;
    ensure(stat <= SEPARABLE_EER_MAX, || {
        format!("statistical EER {stat:.2}% > {SEPARABLE_EER_MAX}%")
    })?;
    ensure(emb <= stat + EMBEDDING_SLACK, || {
        format!("embedding EER {emb:.2}% > statistical {stat:.2}% + {EMBEDDING_SLACK}")
    })?;
    let shared_stat = summary(shared, "statistical")?.pooled.global_eer;
    let shared_emb = summary(shared, "embedding")?.pooled.global_eer;
    for (name, eer) in [("statistical", shared_stat), ("embedding", shared_emb)] {
        ensure((eer - SHARED_EER).abs() <= SHARED_TOL, || {
            format!("shared-profile {name} EER {eer:.2}% outside {SHARED_EER} +/- {SHARED_TOL}")
        })?;
    }
    ensure(elapsed < PIPELINE_TIME_LIMIT, || format!("pipeline took {elapsed:.1?}"))?;
    Ok(format!(
        "distinct: statistical {stat:.2}%, embedding {emb:.2}%; shared: statistical {shared_stat:.2}%, \
         embedding {shared_emb:.2}%; pipeline {elapsed:.1?}"
    ))
}

fn determinism(a: &Path, b: &Path) -> Result<String, String> {
    let mut files = vec![
        "comparisons.csv".to_string(),
        "ranking.txt".to_string(),
        "model.txt".to_string(),
    ];
    for method in ["statistical", "embedding"] {
        for stem in ["scores", "report", "summary", "curve"] {
            let ext = if stem == "curve" { "csv" } else { "txt" };
            files.push(format!("{stem}_{method}.{ext}"));
        }
    }
    for f in &files {
        let (x, y) = (fs::read(a.join(f)), fs::read(b.join(f)));
        match (x, y) {
            (Ok(x), Ok(y)) if x == y => {}
            (Ok(_), Ok(_)) => return Err(format!("{f} differs between 1 and 8 workers")),
            (x, y) => return Err(format!("{f}: {:?} / {:?}", x.err(), y.err())),
        }
    }
    Ok(format!("{} files byte-identical for workers 1 vs 8", files.len()))
}

fn report_format(dir: &Path) -> Result<String, String> {
    let mut checked = 0;
    for name in ["report_statistical.txt", "report_embedding.txt", "ranking.txt"] {
        let text = fs::read_to_string(dir.join(name)).map_err(|e| e.to_string())?;
        let header = text
            .lines()
            .find(|l| l.contains("Global EER"))
            .ok_or_else(|| format!("{name}: no table header"))?;
        let cells: Vec<&str> = header.split('|').map(str::trim).collect();
        let start = cells
            .iter()
            .position(|c| *c == COLUMNS[0])
            .ok_or("missing EER column")?;
        ensure(cells[start..] == COLUMNS, || {
            format!("{name}: columns {:?}", &cells[start..])
        })?;
        let rows: Vec<&str> = text
            .lines()
            .skip_while(|l| !l.contains("Global EER"))
            .skip(2)
            .take_while(|l| l.contains('|'))
            .collect();
        ensure(!rows.is_empty(), || format!("{name}: no rows"))?;
        for row in rows {
            let cells: Vec<&str> = row.split('|').map(str::trim).collect();
            for value in &cells[start..] {
                let value = value.trim_end_matches('*');
                let two_decimals = value.split_once('.').is_some_and(|(int, frac)| {
                    !int.is_empty()
                        && int.chars().all(|c| c.is_ascii_digit())
                        && frac.len() == 2
                        && frac.chars().all(|c| c.is_ascii_digit())
                });
                ensure(two_decimals, || format!("{name}: `{value}` is not 2-decimal"))?;
            }
            checked += 1;
        }
    }
    Ok(format!("5 columns, {checked} rows at 2 decimals"))
}

fn main() {
    let mut suite = Suite { failures: 0 };
    let tmp = tempfile::tempdir().expect("temp dir");
    let root = tmp.path();

    suite.check("protocol count identity", protocol_counts());

    let main_run = pipeline(root, "main", &["--workers", "1"]);
    let rerun = pipeline(root, "rerun", &["--workers", "8"]);
    let shared_run = pipeline(root, "shared", &["--workers", "8", "--shared"]);
    let runs_ok = main_run.is_ok() && rerun.is_ok() && shared_run.is_ok();
    let lists: Vec<PathBuf> = [&main_run, &shared_run]
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .map(|(d, _)| d.join("comparisons.csv"))
        .collect();
    suite.check("per-subject score structure", per_subject_structure(&lists));

    let oracles = metric_oracles();
    suite.check(
        "metrics oracle equivalence",
        oracles.as_ref().map_err(Clone::clone).and_then(|s| {
            ensure(s.eer < EER_TOL && s.auc < AUC_TOL && s.fnmr < FNMR_TOL, || {
                format!("max errors: EER {:.2e}, AUC {:.2e}, FNMR {:.2e}", s.eer, s.auc, s.fnmr)
            })?;
            Ok(format!(
                "500 sets; max errors EER {:.1e}, AUC {:.1e}, FNMR {:.1e}",
                s.eer, s.auc, s.fnmr
            ))
        }),
    );
    suite.check(
        "monotone-transform invariance",
        oracles.as_ref().map_err(Clone::clone).and_then(|s| {
            ensure(s.invariance < INVARIANCE_TOL, || {
                format!("x^3 moved a metric by {:.2e}", s.invariance)
            })?;
            Ok(format!("500 sets; max change {:.1e}", s.invariance))
        }),
    );
    suite.check("gradient correctness", gradient_check());

    if !runs_ok {
        for r in [&main_run, &rerun, &shared_run] {
            if let Err(e) = r {
                println!("pipeline error: {e}");
            }
        }
    }
    type Check<'a> = &'a dyn Fn(&Path, &Path, &Path, Duration) -> Result<String, String>;
    let pipelines = |f: Check| match (&main_run, &rerun, &shared_run) {
        (Ok((m, t)), Ok((r, _)), Ok((s, _))) => f(m, r, s, *t),
        _ => Err("pipeline run failed".into()),
    };
    suite.check("separability", pipelines(&|m, _, s, t| separability(m, s, t)));
    let random_ok = oracles.as_ref().map(|s| s.ordering_ok).unwrap_or(false);
    suite.check(
        "ordering regularity",
        pipelines(&|m, _, s, _| ordering(&[m, s], random_ok)),
    );
    suite.check("determinism", pipelines(&|m, r, _, _| determinism(m, r)));
    suite.check("report format", pipelines(&|m, _, _, _| report_format(m)));

    if suite.failures > 0 {
        println!("{} criteria failed", suite.failures);
        std::process::exit(1);
    }
    println!("all criteria passed");
}
