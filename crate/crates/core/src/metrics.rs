//! Calibration and learning-curve metrics.

use crate::error::{Error, Result};
use crate::gridworld::Action;

/// Default number of equal-width confidence bins for ECE.
pub const DEFAULT_BINS: usize = 10;
pub const DEFAULT_WINDOW: usize = 250;
pub const DISCRIMINATION_THRESHOLD: f64 = 0.5;

/// One piece of advice scored against the oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationRecord {
    pub confidence: f64,
    pub outcome: bool,
    pub uncertainty: f64,
    pub predicted: Action,
    pub oracle: Action,
}

impl CalibrationRecord {
    /// Record whose uncertainty is `1 - confidence`; the outcome is whether
    /// the prediction matches the oracle.
    pub fn new(confidence: f64, predicted: Action, oracle: Action) -> Self {
        Self {
            confidence,
            outcome: predicted == oracle,
            uncertainty: 1.0 - confidence,
            predicted,
            oracle,
        }
    }
}

/// Which advice summary plays the role of confidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConfidenceFlavor {
    /// `1 - normalized entropy` of the (averaged) advice.
    MeanEntropy,
    /// Largest probability of the (averaged) advice.
    MaxProbability,
}

impl ConfidenceFlavor {
    pub const ALL: [ConfidenceFlavor; 2] = [ConfidenceFlavor::MeanEntropy, ConfidenceFlavor::MaxProbability];

    pub fn label(self) -> &'static str {
        match self {
            ConfidenceFlavor::MeanEntropy => "mean_entropy",
            ConfidenceFlavor::MaxProbability => "max_probability",
        }
    }
}

fn non_empty(records: &[CalibrationRecord]) -> Result<()> {
    if records.is_empty() {
        Err(Error::Empty("calibration records"))
    } else {
        Ok(())
    }
}

/// Bin of `confidence` among `bins` right-closed intervals; 0 goes to the
/// first bin.
fn bin_index(confidence: f64, bins: usize) -> usize {
    let scaled = (confidence.clamp(0.0, 1.0) * bins as f64).ceil() as usize;
    scaled.saturating_sub(1).min(bins - 1)
}

/// Expected calibration error over equal-width confidence bins.
pub fn ece(records: &[CalibrationRecord], bins: usize) -> Result<f64> {
    non_empty(records)?;
    if bins == 0 {
        return Err(Error::Config("ECE needs at least one bin".into()));
    }
    let mut count = vec![0usize; bins];
    let mut conf = vec![0.0; bins];
    let mut hits = vec![0.0; bins];
    for r in records {
        let b = bin_index(r.confidence, bins);
        count[b] += 1;
        conf[b] += r.confidence;
        if r.outcome {
            hits[b] += 1.0;
        }
    }
    let n = records.len() as f64;
    let total = (0..bins)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let c = count[b] as f64;
            c / n * (hits[b] / c - conf[b] / c).abs()
        })
        .sum::<f64>();
    Ok(total)
}

/// Mean squared gap between confidence and the 0/1 outcome.
pub fn brier(records: &[CalibrationRecord]) -> Result<f64> {
    non_empty(records)?;
    let sum: f64 = records
        .iter()
        .map(|r| {
            let o = if r.outcome { 1.0 } else { 0.0 };
            (r.confidence - o).powi(2)
        })
        .sum();
    Ok(sum / records.len() as f64)
}

/// Fraction of incorrect records whose uncertainty exceeds `threshold`.
/// `None` when every record is correct.
pub fn discrimination(records: &[CalibrationRecord], threshold: f64) -> Option<f64> {
    let wrong: Vec<&CalibrationRecord> = records.iter().filter(|r| !r.outcome).collect();
    if wrong.is_empty() {
        return None;
    }
    let flagged = wrong.iter().filter(|r| r.uncertainty > threshold).count();
    Some(flagged as f64 / wrong.len() as f64)
}

/// Trailing mean over up to `window` points; the window grows from one
/// point at the start so the output has the input's length.
pub fn moving_average(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::Config("moving-average window must be positive".into()));
    }
    let mut out = Vec::with_capacity(series.len());
    for t in 0..series.len() {
        let lo = (t + 1).saturating_sub(window);
        let slice = &series[lo..=t];
        out.push(slice.iter().sum::<f64>() / slice.len() as f64);
    }
    Ok(out)
}

/// Area under a smoothed curve at unit episode spacing (sum of values).
pub fn auc(smoothed: &[f64]) -> f64 {
    smoothed.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(f: f64, correct: bool) -> CalibrationRecord {
        let oracle = Action::Forward;
        let predicted = if correct { oracle } else { Action::TurnLeft };
        CalibrationRecord::new(f, predicted, oracle)
    }

    #[test]
    fn perfect_records_have_zero_error() {
        let r = vec![rec(1.0, true); 5];
        assert_eq!(ece(&r, 10).unwrap(), 0.0);
        assert_eq!(brier(&r).unwrap(), 0.0);
        assert_eq!(discrimination(&r, 0.5), None);
    }

    #[test]
    fn bins_are_right_closed() {
        assert_eq!(bin_index(0.0, 10), 0);
        assert_eq!(bin_index(0.1, 10), 0);
        assert_eq!(bin_index(0.1000001, 10), 1);
        assert_eq!(bin_index(0.9, 10), 8);
        assert_eq!(bin_index(1.0, 10), 9);
    }

    #[test]
    fn errors_on_empty_input() {
        assert!(ece(&[], 10).is_err());
        assert!(brier(&[]).is_err());
        assert!(ece(&[rec(0.5, true)], 0).is_err());
        assert!(moving_average(&[1.0], 0).is_err());
    }

    #[test]
    fn brier_extremes() {
        assert_eq!(brier(&[rec(1.0, false)]).unwrap(), 1.0);
    }

    #[test]
    fn moving_average_examples() {
        assert_eq!(moving_average(&[2.0; 7], 3).unwrap(), vec![2.0; 7]);
        let mut s = vec![0.0; 9];
        s.push(1.0);
        assert_eq!(*moving_average(&s, 2).unwrap().last().unwrap(), 0.5);
        assert_eq!(moving_average(&[1.0, 3.0], 5).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.0; 10]), 0.0);
        assert_eq!(auc(&[1.0, 1.0, 1.0]), 3.0);
        assert_eq!(auc(&[]), 0.0);
    }
}
