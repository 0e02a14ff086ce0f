//! Top-1 accuracy, expected calibration error and reliability-diagram bins.
//!
//! Confidence is the largest predicted probability. Bin `m` (1-based) of `M`
//! covers `((m - 1) / M, m / M]`; a confidence of exactly zero goes to bin 1.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::ProbVector;

pub const DEFAULT_BINS: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// Mean confidence of the bin; `None` when empty.
    pub avg_confidence: Option<f64>,
    /// Fraction of correct predictions in the bin; `None` when empty.
    pub avg_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub num_bins: usize,
    pub n: usize,
    pub accuracy: f64,
    pub ece: f64,
    pub bins: Vec<BinStats>,
}

fn check_inputs(predictions: &[ProbVector], labels: &[usize]) -> Result<()> {
    if predictions.is_empty() {
        return Err(Error::invalid("predictions", "no predictions"));
    }
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch { expected: predictions.len(), actual: labels.len() });
    }
    Ok(())
}

pub fn top1_accuracy(predictions: &[ProbVector], labels: &[usize]) -> Result<f64> {
    check_inputs(predictions, labels)?;
    let correct = predictions.iter().zip(labels).filter(|(p, &l)| p.argmax() == l).count();
    Ok(correct as f64 / predictions.len() as f64)
}

/// Upper edge of bin `m` (0-based) out of `num_bins`.
fn edge(m: usize, num_bins: usize) -> f64 {
    m as f64 / num_bins as f64
}

/// 0-based bin holding `confidence`.
pub fn bin_index(confidence: f64, num_bins: usize) -> usize {
    if confidence <= 0.0 {
        return 0;
    }
    let mut k = ((confidence * num_bins as f64).ceil() as usize).clamp(1, num_bins);
    // align with the edges exactly as `edge` computes them
    while k > 1 && confidence <= edge(k - 1, num_bins) {
        k -= 1;
    }
    while k < num_bins && confidence > edge(k, num_bins) {
        k += 1;
    }
    k - 1
}

pub fn reliability_bins(predictions: &[ProbVector], labels: &[usize], num_bins: usize) -> Result<Vec<BinStats>> {
    if num_bins < 1 {
        return Err(Error::invalid("num_bins", "need at least one bin"));
    }
    check_inputs(predictions, labels)?;
    let mut counts = vec![0usize; num_bins];
    let mut conf_sum = vec![0.0; num_bins];
    let mut correct = vec![0usize; num_bins];
    for (p, &label) in predictions.iter().zip(labels) {
        let confidence = p.max();
        let b = bin_index(confidence, num_bins);
        counts[b] += 1;
        conf_sum[b] += confidence;
        correct[b] += (p.argmax() == label) as usize;
    }
    Ok((0..num_bins)
        .map(|m| {
            let count = counts[m];
            let (avg_confidence, avg_accuracy) = if count == 0 {
                (None, None)
            } else {
                (Some(conf_sum[m] / count as f64), Some(correct[m] as f64 / count as f64))
            };
            BinStats { lower: edge(m, num_bins), upper: edge(m + 1, num_bins), count, avg_confidence, avg_accuracy }
        })
        .collect())
}

/// Count-weighted mean of `|acc - conf|` over non-empty bins.
pub fn ece_from_bins(bins: &[BinStats]) -> f64 {
    let n: usize = bins.iter().map(|b| b.count).sum();
    if n == 0 {
        return 0.0;
    }
    bins.iter()
        .filter_map(|b| match (b.avg_accuracy, b.avg_confidence) {
            (Some(acc), Some(conf)) if b.count > 0 => Some(b.count as f64 / n as f64 * (acc - conf).abs()),
            _ => None,
        })
        .sum()
}

pub fn ece(predictions: &[ProbVector], labels: &[usize], num_bins: usize) -> Result<f64> {
    Ok(ece_from_bins(&reliability_bins(predictions, labels, num_bins)?))
}

impl CalibrationReport {
    pub fn compute(predictions: &[ProbVector], labels: &[usize], num_bins: usize) -> Result<Self> {
        let bins = reliability_bins(predictions, labels, num_bins)?;
        Ok(CalibrationReport {
            num_bins,
            n: predictions.len(),
            accuracy: top1_accuracy(predictions, labels)?,
            ece: ece_from_bins(&bins),
            bins,
        })
    }

    /// Reliability rows as CSV: a header, then one row per bin.
    pub fn reliability_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        for bin in &self.bins {
            writer.serialize(Row::from(*bin)).expect("in-memory csv write");
        }
        String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    lower: String,
    upper: String,
    count: usize,
    avg_confidence: String,
    avg_accuracy: String,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

impl From<BinStats> for Row {
    fn from(b: BinStats) -> Self {
        Row {
            lower: format!("{:?}", b.lower),
            upper: format!("{:?}", b.upper),
            count: b.count,
            avg_confidence: fmt_opt(b.avg_confidence),
            avg_accuracy: fmt_opt(b.avg_accuracy),
        }
    }
}

/// Writes the reliability rows of `report` to `path`.
pub fn reliability_export(report: &CalibrationReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, report.reliability_csv()).map_err(|e| Error::io(path, e))
}

/// Reads back a file written by [`reliability_export`].
pub fn load_reliability(path: impl AsRef<Path>) -> Result<Vec<BinStats>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_reliability(&text, path)
}

pub(crate) fn parse_reliability(text: &str, path: &Path) -> Result<Vec<BinStats>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut bins = Vec::new();
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::parse(path, line, e))?;
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::parse(path, line, e));
        let opt = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
        bins.push(BinStats {
            lower: num(&row.lower)?,
            upper: num(&row.upper)?,
            count: row.count,
            avg_confidence: opt(&row.avg_confidence)?,
            avg_accuracy: opt(&row.avg_accuracy)?,
        });
    }
    Ok(bins)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ProbVector {
        ProbVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn accuracy_examples() {
        let preds = vec![pv(&[0.9, 0.1]), pv(&[0.2, 0.8])];
        assert_eq!(top1_accuracy(&preds, &[0, 1]).unwrap(), 1.0);
        assert_eq!(top1_accuracy(&preds, &[0, 0]).unwrap(), 0.5);
        let uniform = vec![ProbVector::uniform(3); 4];
        assert_eq!(top1_accuracy(&uniform, &[1, 2, 1, 2]).unwrap(), 0.0);
        assert!(top1_accuracy(&[], &[]).is_err());
        assert!(top1_accuracy(&preds, &[0]).is_err());
    }

    #[test]
    fn bin_edges() {
        assert_eq!(bin_index(0.55, 10), 5);
        assert_eq!(bin_index(0.95, 10), 9);
        assert_eq!(bin_index(0.0, 10), 0);
        assert_eq!(bin_index(1.0, 10), 9);
        assert_eq!(bin_index(0.3, 10), 2);
        assert_eq!(bin_index(0.1, 10), 0);
        assert_eq!(bin_index(0.7, 10), 6);
        assert_eq!(bin_index(1.0 / 3.0, 3), 0);
        assert_eq!(bin_index(0.5, 1), 0);
    }

    #[test]
    fn single_bin_collapses() {
        let preds = vec![pv(&[0.6, 0.4]), pv(&[0.1, 0.9]), pv(&[0.5, 0.5])];
        let bins = reliability_bins(&preds, &[0, 0, 0], 1).unwrap();
        assert_eq!(bins.len(), 1);
        assert_eq!(bins[0].count, 3);
        assert!((bins[0].avg_confidence.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(reliability_bins(&preds, &[0, 0, 0], 0).is_err());
    }

    #[test]
    fn two_confidences_in_ten_bins() {
        let preds = vec![pv(&[0.55, 0.45]), pv(&[0.05, 0.95])];
        let bins = reliability_bins(&preds, &[0, 1], 10).unwrap();
        let occupied: Vec<usize> = bins.iter().enumerate().filter(|(_, b)| b.count > 0).map(|(i, _)| i + 1).collect();
        assert_eq!(occupied, vec![6, 10]);
        assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), 2);
    }

    #[test]
    fn ece_examples() {
        let perfect = vec![pv(&[1.0, 0.0, 0.0]), pv(&[0.0, 0.0, 1.0])];
        assert_eq!(ece(&perfect, &[0, 2], 15).unwrap(), 0.0);

        let half = vec![pv(&[0.8, 0.2]), pv(&[0.8, 0.2])];
        assert!((ece(&half, &[0, 1], 15).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn export_round_trip() {
        let preds = vec![pv(&[0.8, 0.2]), pv(&[0.3, 0.7]), pv(&[0.51, 0.49])];
        let report = CalibrationReport::compute(&preds, &[0, 0, 1], DEFAULT_BINS).unwrap();
        let csv = report.reliability_csv();
        assert_eq!(csv.lines().count(), 16);
        assert!(csv.lines().next().unwrap().starts_with("lower,upper,count"));
        assert!(csv.lines().nth(1).unwrap().ends_with(",0,,"));
        let back = parse_reliability(&csv, Path::new("r.csv")).unwrap();
        assert_eq!(back, report.bins);
        assert!((ece_from_bins(&back) - report.ece).abs() < 1e-12);
    }
}
