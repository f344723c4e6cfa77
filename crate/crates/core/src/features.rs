//! Timing features.
//!
//! Per-event rows (all in seconds) for event `i` and its successor `i+1`:
//!
//! | column | definition |
//! |--------|------------|
//! | `ht`   | release(i) - press(i) |
//! | `ipt`  | press(i+1) - press(i) |
//! | `ikt`  | press(i+1) - release(i), negative under rollover |
//! | `irt`  | release(i+1) - release(i) |
//! | `prr`  | release(i+1) - press(i) |
//! | `key`  | key_code / 255 |
//!
//! The last row has no successor; its pairwise columns are zero padding and
//! are excluded from every statistic. Note that `ipt = ikt + ht` exactly.

use std::fmt::Write as _;
use std::io::BufRead;

use crate::corpus::Session;
use crate::error::{Error, Result};

pub const FEATURE_NAMES: [&str; FEATURE_WIDTH] = ["ht", "ipt", "ikt", "irt", "prr", "key"];
pub const FEATURE_WIDTH: usize = 6;
/// The leading columns that carry timings (everything except `key`).
pub const TIMING_FEATURES: usize = 5;
pub const DEFAULT_CLIP_QUANTILES: (f64, f64) = (0.001, 0.999);
pub const DEFAULT_SEQUENCE_LENGTH: usize = 70;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EventFeatures {
    pub ht: f64,
    pub ipt: f64,
    pub ikt: f64,
    pub irt: f64,
    pub prr: f64,
    pub key_norm: f64,
}

impl EventFeatures {
    pub fn to_array(&self) -> [f64; FEATURE_WIDTH] {
        [self.ht, self.ipt, self.ikt, self.irt, self.prr, self.key_norm]
    }

    fn from_array(a: [f64; FEATURE_WIDTH]) -> Self {
        Self {
            ht: a[0],
            ipt: a[1],
            ikt: a[2],
            irt: a[3],
            prr: a[4],
            key_norm: a[5],
        }
    }
}

/// Feature rows for one session; never empty.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    rows: Vec<EventFeatures>,
}

impl FeatureSequence {
    pub fn rows(&self) -> &[EventFeatures] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Whether column `feature` of row `row` carries a value (as opposed to
    /// end-of-session padding).
    pub fn is_defined(&self, row: usize, feature: usize) -> bool {
        feature == 0 || feature == TIMING_FEATURES || row + 1 < self.rows.len()
    }
}

fn seconds(later: u64, earlier: u64) -> f64 {
    (later as f64 - earlier as f64) / 1000.0
}

/// Sessions cannot be empty, so neither is the returned sequence.
pub fn extract_features(session: &Session) -> FeatureSequence {
    let events = session.events();
    let rows = events
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let mut row = EventFeatures {
                ht: seconds(e.release_ms, e.press_ms),
                key_norm: e.key_code as f64 / 255.0,
                ..EventFeatures::default()
            };
            if let Some(next) = events.get(i + 1) {
                row.ipt = seconds(next.press_ms, e.press_ms);
                row.ikt = seconds(next.press_ms, e.release_ms);
                row.irt = seconds(next.release_ms, e.release_ms);
                row.prr = seconds(next.release_ms, e.press_ms);
            }
            row
        })
        .collect();
    FeatureSequence { rows }
}

/// Session-level aggregates used by the statistical baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatVector {
    pub ht_mean: f64,
    pub ht_std: f64,
    pub ipt_mean: f64,
    pub ipt_std: f64,
    pub ikt_mean: f64,
    pub ikt_std: f64,
    pub irt_mean: f64,
    pub irt_std: f64,
    pub rollover_count: u32,
    /// Total seconds during which consecutive keys were held together.
    pub rollover_total: f64,
    /// Total hold time over total rollover time; 0 when there was no rollover.
    pub hold_to_rollover_ratio: f64,
    pub has_rollover: bool,
    pub events_per_second: f64,
}

pub const STAT_COMPONENTS: [&str; 12] = [
    "ht_mean",
    "ht_std",
    "ipt_mean",
    "ipt_std",
    "ikt_mean",
    "ikt_std",
    "irt_mean",
    "irt_std",
    "rollover_count",
    "rollover_total",
    "hold_to_rollover_ratio",
    "events_per_second",
];

impl StatVector {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.ht_mean,
            self.ht_std,
            self.ipt_mean,
            self.ipt_std,
            self.ikt_mean,
            self.ikt_std,
            self.irt_mean,
            self.irt_std,
            self.rollover_count as f64,
            self.rollover_total,
            self.hold_to_rollover_ratio,
            self.events_per_second,
        ]
    }
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

pub fn session_stats(seq: &FeatureSequence) -> StatVector {
    let rows = &seq.rows;
    let pairs = &rows[..rows.len().saturating_sub(1)];
    let (ht_mean, ht_std) = mean_std(rows.iter().map(|r| r.ht));
    let (ipt_mean, ipt_std) = mean_std(pairs.iter().map(|r| r.ipt));
    let (ikt_mean, ikt_std) = mean_std(pairs.iter().map(|r| r.ikt));
    let (irt_mean, irt_std) = mean_std(pairs.iter().map(|r| r.irt));

    let overlaps = pairs.iter().map(|r| (-r.ikt).max(0.0));
    let rollover_count = overlaps.clone().filter(|&o| o > 0.0).count() as u32;
    let rollover_total: f64 = overlaps.sum();
    let hold_total: f64 = rows.iter().map(|r| r.ht).sum();
    let has_rollover = rollover_total > 0.0;
    let hold_to_rollover_ratio = if has_rollover { hold_total / rollover_total } else { 0.0 };

    let span = pairs.iter().map(|r| r.ipt).sum::<f64>() + rows.last().map_or(0.0, |r| r.ht);
    let events_per_second = if span > 0.0 { rows.len() as f64 / span } else { 0.0 };

    StatVector {
        ht_mean,
        ht_std,
        ipt_mean,
        ipt_std,
        ikt_mean,
        ikt_std,
        irt_mean,
        irt_std,
        rollover_count,
        rollover_total,
        hold_to_rollover_ratio,
        has_rollover,
        events_per_second,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureScale {
    pub mean: f64,
    pub std: f64,
    pub clip_low: f64,
    pub clip_high: f64,
}

/// Per-feature clipping bounds and z-score parameters for the timing columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    scales: [FeatureScale; TIMING_FEATURES],
    clip_quantiles: (f64, f64),
}

/// Linear-interpolation quantile (the "type 7" estimator) of unsorted data.
fn quantile(values: &mut [f64], q: f64) -> f64 {
    let pos = q * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    let (_, &mut lo_value, upper) = values.select_nth_unstable_by(lo, f64::total_cmp);
    if frac == 0.0 || upper.is_empty() {
        return lo_value;
    }
    let hi_value = upper.iter().copied().fold(f64::INFINITY, f64::min);
    lo_value + frac * (hi_value - lo_value)
}

pub fn fit_normalizer(sequences: &[FeatureSequence], clip_quantiles: (f64, f64)) -> Result<Normalizer> {
    let (q_low, q_high) = clip_quantiles;
    if !(0.0..=1.0).contains(&q_low) || !(0.0..=1.0).contains(&q_high) || q_low >= q_high {
        return Err(Error::invalid(
            "clip_quantiles",
            format!("need 0 <= low < high <= 1, got ({q_low}, {q_high})"),
        ));
    }
    let mut scales = [FeatureScale {
        mean: 0.0,
        std: 0.0,
        clip_low: 0.0,
        clip_high: 0.0,
    }; TIMING_FEATURES];
    for (f, scale) in scales.iter_mut().enumerate() {
        let mut values: Vec<f64> = sequences
            .iter()
            .flat_map(|seq| {
                seq.rows
                    .iter()
                    .enumerate()
                    .filter(move |(i, _)| seq.is_defined(*i, f))
                    .map(move |(_, r)| r.to_array()[f])
            })
            .collect();
        let (mean, std) = mean_std(values.iter().copied());
        let distinct = values.iter().any(|&v| v != values[0]);
        if !distinct || !(std > 0.0 && std.is_finite()) {
            return Err(Error::Validation(format!(
                "feature `{}` is constant over the development set; cannot standardise it",
                FEATURE_NAMES[f]
            )));
        }
        let clip_low = quantile(&mut values, q_low);
        let clip_high = quantile(&mut values, q_high);
        *scale = FeatureScale {
            mean,
            std,
            clip_low,
            clip_high,
        };
    }
    Ok(Normalizer { scales, clip_quantiles })
}

pub const NORMALIZER_HEADER: &str = "feature,mean,std,clip_low,clip_high";

impl Normalizer {
    pub fn scales(&self) -> &[FeatureScale; TIMING_FEATURES] {
        &self.scales
    }

    pub fn clip_quantiles(&self) -> (f64, f64) {
        self.clip_quantiles
    }

    pub fn normalize_value(&self, feature: usize, x: f64) -> f64 {
        let s = &self.scales[feature];
        (x.clamp(s.clip_low, s.clip_high) - s.mean) / s.std
    }

    /// Inverse of the affine part of [`Normalizer::normalize_value`].
    pub fn denormalize_value(&self, feature: usize, z: f64) -> f64 {
        let s = &self.scales[feature];
        z * s.std + s.mean
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "# clip_quantiles={},{}\n{NORMALIZER_HEADER}\n",
            self.clip_quantiles.0, self.clip_quantiles.1
        );
        for (name, s) in FEATURE_NAMES.iter().zip(&self.scales) {
            let _ = writeln!(out, "{name},{},{},{},{}", s.mean, s.std, s.clip_low, s.clip_high);
        }
        out
    }

    pub fn parse<R: BufRead>(input: R) -> Result<Self> {
        let mut scales: [Option<FeatureScale>; TIMING_FEATURES] = [None; TIMING_FEATURES];
        let mut clip_quantiles = DEFAULT_CLIP_QUANTILES;
        let mut header_seen = false;
        for (i, line) in input.lines().enumerate() {
            let lineno = i + 1;
            let line = line?;
            let line = line.trim();
            if let Some(rest) = line.strip_prefix("# clip_quantiles=") {
                let (lo, hi) = rest
                    .split_once(',')
                    .ok_or_else(|| Error::parse(lineno, "malformed clip_quantiles"))?;
                let parse = |v: &str| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::parse(lineno, "malformed clip_quantiles"))
                };
                clip_quantiles = (parse(lo)?, parse(hi)?);
                continue;
            }
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !header_seen {
                if line != NORMALIZER_HEADER {
                    return Err(Error::parse(lineno, format!("expected header `{NORMALIZER_HEADER}`")));
                }
                header_seen = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(Error::parse(lineno, "expected 5 fields"));
            }
            let f = FEATURE_NAMES[..TIMING_FEATURES]
                .iter()
                .position(|n| *n == fields[0])
                .ok_or_else(|| Error::parse(lineno, format!("unknown feature `{}`", fields[0])))?;
            let num = |v: &str| {
                v.parse::<f64>()
                    .map_err(|_| Error::parse(lineno, format!("invalid number `{v}`")))
            };
            let scale = FeatureScale {
                mean: num(fields[1])?,
                std: num(fields[2])?,
                clip_low: num(fields[3])?,
                clip_high: num(fields[4])?,
            };
            if scale.std.is_nan() || scale.std <= 0.0 {
                return Err(Error::parse(lineno, "std must be positive"));
            }
            scales[f] = Some(scale);
        }
        let mut out = [FeatureScale {
            mean: 0.0,
            std: 1.0,
            clip_low: 0.0,
            clip_high: 0.0,
        }; TIMING_FEATURES];
        for (f, slot) in scales.iter().enumerate() {
            out[f] =
                slot.ok_or_else(|| Error::Validation(format!("normalizer file lacks feature `{}`", FEATURE_NAMES[f])))?;
        }
        Ok(Self {
            scales: out,
            clip_quantiles,
        })
    }
}

/// Clips then z-scores the timing columns; padding entries become 0 (the
/// post-standardisation mean). The key column is left as is.
pub fn apply_normalizer(seq: &FeatureSequence, normalizer: &Normalizer) -> FeatureSequence {
    let rows = seq
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut a = row.to_array();
            for (f, v) in a.iter_mut().take(TIMING_FEATURES).enumerate() {
                *v = if seq.is_defined(i, f) {
                    normalizer.normalize_value(f, *v)
                } else {
                    0.0
                };
            }
            EventFeatures::from_array(a)
        })
        .collect();
    FeatureSequence { rows }
}

/// A row-major `rows x FEATURE_WIDTH` matrix with the count of real rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedMatrix {
    rows: usize,
    valid_rows: usize,
    data: Vec<f64>,
}

impl FixedMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn valid_rows(&self) -> usize {
        self.valid_rows
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * FEATURE_WIDTH..(i + 1) * FEATURE_WIDTH]
    }
}

/// Truncates to the first `length` rows or zero-pads at the end.
pub fn fix_length(seq: &FeatureSequence, length: usize) -> Result<FixedMatrix> {
    if length == 0 {
        return Err(Error::invalid("sequence_length", "must be at least 1"));
    }
    let valid_rows = seq.rows.len().min(length);
    let mut data = Vec::with_capacity(length * FEATURE_WIDTH);
    for row in &seq.rows[..valid_rows] {
        data.extend_from_slice(&row.to_array());
    }
    data.resize(length * FEATURE_WIDTH, 0.0);
    Ok(FixedMatrix {
        rows: length,
        valid_rows,
        data,
    })
}
