//! Verification metrics over aggregated scores: error-rate curves, EER,
//! FNMR at fixed FMR, AUC, per-subject EER and the ranking report.

mod aggregate;
mod rates;
mod report;

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

pub use aggregate::{aggregate, ScoreSet, SubjectScores};
pub use rates::{
    compute_auc, compute_eer, det_curve, error_rates_at_threshold, fnmr_at_fmr, rank_auc, CurveData, FnmrAtFmr,
    OperatingPoint,
};
pub use report::{
    build_report, evaluate_score_set, parse_summary, render_table, write_curve, Evaluation, MetricsReport,
    MetricsSummary,
};

use crate::error::Result;

/// Rates are clamped to `[PROBIT_FLOOR, 1 - PROBIT_FLOOR]` before the
/// normal-deviate transform so the curve endpoints stay finite.
pub const PROBIT_FLOOR: f64 = 1e-6;

/// Standard normal deviate of a rate, for DET plots.
pub fn probit(rate: f64) -> f64 {
    let p = rate.clamp(PROBIT_FLOOR, 1.0 - PROBIT_FLOOR);
    Normal::standard().inverse_cdf(p)
}

/// Unweighted mean, over subjects, of each subject's own EER (percent)
/// computed from its 10 genuine and 20 impostor scores.
pub fn mean_per_subject_eer(set: &ScoreSet) -> Result<f64> {
    set.check_structure()?;
    mean_subject_eer_by(set, SubjectScores::impostors)
}

fn mean_subject_eer_by<F>(set: &ScoreSet, impostors: F) -> Result<f64>
where
    F: Fn(&SubjectScores) -> Vec<f64> + Sync,
{
    let eers = set
        .subjects
        .par_iter()
        .map(|s| compute_eer(&s.genuine, &impostors(s)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(eers.iter().sum::<f64>() / eers.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probit_is_symmetric_and_finite() {
        assert_eq!(probit(0.5), 0.0);
        assert!((probit(0.975) - 1.959964).abs() < 1e-5);
        assert!((probit(0.1) + probit(0.9)).abs() < 1e-12);
        assert!(probit(0.0).is_finite() && probit(1.0).is_finite());
    }

    #[test]
    fn per_subject_eer_is_unweighted() {
        let perfect = SubjectScores {
            subject_id: "a".into(),
            genuine: vec![0.9; 10],
            similar: vec![0.1; 10],
            dissimilar: vec![0.1; 10],
        };
        let coin = SubjectScores {
            subject_id: "b".into(),
            genuine: vec![0.5; 10],
            similar: vec![0.5; 10],
            dissimilar: vec![0.5; 10],
        };
        let set = ScoreSet {
            subjects: vec![perfect, coin.clone()],
        };
        assert_eq!(mean_per_subject_eer(&set).unwrap(), 25.0);
        let mut bad = set.clone();
        bad.subjects[1].similar.pop();
        assert!(mean_per_subject_eer(&bad).is_err());
    }
}
