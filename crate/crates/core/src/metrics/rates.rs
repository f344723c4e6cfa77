//! Error-rate curves over score thresholds.
//!
//! A comparison is a match when its score is at least the threshold, so
//! `fmr(t) = |{impostor >= t}| / |impostor|` and
//! `fnmr(t) = |{genuine < t}| / |genuine|`. Rates are fractions here and
//! percentages in the public metric functions.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub fmr: f64,
    pub fnmr: f64,
}

impl OperatingPoint {
    pub fn tmr(&self) -> f64 {
        1.0 - self.fnmr
    }
}

/// Operating points at every distinct score, in increasing threshold order,
/// bracketed by the sentinels `-inf` (fmr 1, fnmr 0) and `+inf` (fmr 0, fnmr 1).
#[derive(Debug, Clone, PartialEq)]
pub struct CurveData {
    points: Vec<OperatingPoint>,
}

impl CurveData {
    pub fn points(&self) -> &[OperatingPoint] {
        &self.points
    }

    /// Real (non-sentinel) operating points.
    fn interior(&self) -> &[OperatingPoint] {
        &self.points[1..self.points.len() - 1]
    }
}

pub(crate) fn check_scores(genuine: &[f64], impostor: &[f64]) -> Result<()> {
    if genuine.is_empty() || impostor.is_empty() {
        return Err(Error::Validation(format!(
            "need non-empty genuine and impostor score lists (got {} and {})",
            genuine.len(),
            impostor.len()
        )));
    }
    if let Some(bad) = genuine.iter().chain(impostor).find(|s| !s.is_finite()) {
        return Err(Error::Validation(format!("non-finite score {bad}")));
    }
    Ok(())
}

fn sorted(scores: &[f64]) -> Vec<f64> {
    let mut v = scores.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    v
}

pub fn error_rates_at_threshold(genuine: &[f64], impostor: &[f64], threshold: f64) -> Result<OperatingPoint> {
    check_scores(genuine, impostor)?;
    let false_matches = impostor.iter().filter(|&&s| s >= threshold).count();
    let false_non_matches = genuine.iter().filter(|&&s| s < threshold).count();
    Ok(OperatingPoint {
        threshold,
        fmr: false_matches as f64 / impostor.len() as f64,
        fnmr: false_non_matches as f64 / genuine.len() as f64,
    })
}

pub fn det_curve(genuine: &[f64], impostor: &[f64]) -> Result<CurveData> {
    check_scores(genuine, impostor)?;
    let g = sorted(genuine);
    let i = sorted(impostor);
    let (ng, ni) = (g.len() as f64, i.len() as f64);

    let mut points = Vec::with_capacity(g.len() + i.len() + 2);
    points.push(OperatingPoint {
        threshold: f64::NEG_INFINITY,
        fmr: 1.0,
        fnmr: 0.0,
    });
    // gi / ii: number of genuine / impostor scores strictly below the threshold.
    let (mut gi, mut ii) = (0usize, 0usize);
    while gi < g.len() || ii < i.len() {
        let t = match (g.get(gi), i.get(ii)) {
            (Some(&a), Some(&b)) => a.min(b),
            (Some(&a), None) => a,
            (None, Some(&b)) => b,
            (None, None) => unreachable!(),
        };
        points.push(OperatingPoint {
            threshold: t,
            fmr: (i.len() - ii) as f64 / ni,
            fnmr: gi as f64 / ng,
        });
        while gi < g.len() && g[gi] == t {
            gi += 1;
        }
        while ii < i.len() && i[ii] == t {
            ii += 1;
        }
    }
    points.push(OperatingPoint {
        threshold: f64::INFINITY,
        fmr: 0.0,
        fnmr: 1.0,
    });
    Ok(CurveData { points })
}

/// Crossing of the polyline through consecutive operating points with the
/// `fmr == fnmr` diagonal, as a fraction.
pub(crate) fn eer_fraction(curve: &CurveData) -> f64 {
    let pts = curve.points();
    let mut prev = pts[0];
    for &p in &pts[1..] {
        let d = p.fmr - p.fnmr;
        if d == 0.0 {
            return p.fmr;
        }
        if d < 0.0 {
            let d_prev = prev.fmr - prev.fnmr;
            let alpha = d_prev / (d_prev - d);
            return prev.fmr + alpha * (p.fmr - prev.fmr);
        }
        prev = p;
    }
    unreachable!("the +inf sentinel always has fmr < fnmr")
}

/// Equal error rate in percent, linearly interpolated between the
/// operating points that bracket the crossing.
pub fn compute_eer(genuine: &[f64], impostor: &[f64]) -> Result<f64> {
    Ok(100.0 * eer_fraction(&det_curve(genuine, impostor)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FnmrAtFmr {
    /// Percent.
    pub fnmr: f64,
    /// Set when even the most stringent threshold exceeds the requested FMR.
    pub extrapolated: bool,
}

pub(crate) fn fnmr_at_fmr_fraction(curve: &CurveData, target: f64) -> (f64, bool) {
    let interior = curve.interior();
    let strictest = interior.last().expect("non-empty score lists");
    if strictest.fmr > target {
        return (strictest.fnmr, true);
    }
    let pts = curve.points();
    let k = pts
        .iter()
        .position(|p| p.fmr <= target)
        .expect("strictest real point satisfies the target");
    let p = pts[k];
    if p.fmr == target || k == 0 {
        return (p.fnmr, false);
    }
    let prev = pts[k - 1];
    let alpha = (prev.fmr - target) / (prev.fmr - p.fmr);
    (prev.fnmr + alpha * (p.fnmr - prev.fnmr), false)
}

/// FNMR (percent) read off the curve where it first reaches `fmr_percent`.
pub fn fnmr_at_fmr(genuine: &[f64], impostor: &[f64], fmr_percent: f64) -> Result<FnmrAtFmr> {
    if !(fmr_percent > 0.0 && fmr_percent < 100.0) {
        return Err(Error::invalid(
            "fmr",
            format!("must lie in (0, 100), got {fmr_percent}"),
        ));
    }
    let curve = det_curve(genuine, impostor)?;
    let (fnmr, extrapolated) = fnmr_at_fmr_fraction(&curve, fmr_percent / 100.0);
    Ok(FnmrAtFmr {
        fnmr: 100.0 * fnmr,
        extrapolated,
    })
}

/// Mann-Whitney estimate of P(genuine > impostor), ties counted half, as a
/// fraction.
pub fn rank_auc(genuine: &[f64], impostor: &[f64]) -> Result<f64> {
    check_scores(genuine, impostor)?;
    let g = sorted(genuine);
    let i = sorted(impostor);
    let (mut below, mut not_above) = (0usize, 0usize);
    let (mut wins, mut ties) = (0u64, 0u64);
    for &s in &g {
        while below < i.len() && i[below] < s {
            below += 1;
        }
        not_above = not_above.max(below);
        while not_above < i.len() && i[not_above] <= s {
            not_above += 1;
        }
        wins += below as u64;
        ties += (not_above - below) as u64;
    }
    let pairs = g.len() as f64 * i.len() as f64;
    Ok((2 * wins + ties) as f64 / (2.0 * pairs))
}

/// Area under the ROC curve in percent.
pub fn compute_auc(genuine: &[f64], impostor: &[f64]) -> Result<f64> {
    Ok(100.0 * rank_auc(genuine, impostor)?)
}
