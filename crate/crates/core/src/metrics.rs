//! Multi-label evaluation: per-class AP, mAP, and overall/per-class
//! precision, recall and F1 under top-k and threshold label assignment.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// How a ranked list is turned into an average precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ApConvention {
    /// Mean precision at the rank of each positive.
    #[default]
    AllPoints,
    /// Mean of the interpolated precision at recall 0, 0.1, ..., 1.
    ElevenPoint,
}

/// Ranking of `scores`: descending, ties by ascending index.
fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// AP of one class. `None` when there are no positives.
pub fn average_precision(scores: &[f64], relevant: &[bool], convention: ApConvention) -> Option<f64> {
    assert_eq!(scores.len(), relevant.len(), "scores and relevance differ in length");
    let positives = relevant.iter().filter(|&&r| r).count();
    if positives == 0 {
        return None;
    }
    let order = ranking(scores);
    match convention {
        ApConvention::AllPoints => {
            let mut hits = 0usize;
            let mut sum = 0.0;
            for (rank, &i) in order.iter().enumerate() {
                if relevant[i] {
                    hits += 1;
                    sum += hits as f64 / (rank + 1) as f64;
                }
            }
            Some(sum / positives as f64)
        }
        ApConvention::ElevenPoint => {
            let mut curve = Vec::with_capacity(order.len());
            let mut hits = 0usize;
            for (rank, &i) in order.iter().enumerate() {
                if relevant[i] {
                    hits += 1;
                }
                curve.push((hits as f64 / positives as f64, hits as f64 / (rank + 1) as f64));
            }
            let total: f64 = (0..=10)
                .map(|t| {
                    let level = t as f64 / 10.0;
                    curve
                        .iter()
                        .filter(|(r, _)| *r >= level - 1e-12)
                        .map(|&(_, p)| p)
                        .fold(0.0, f64::max)
                })
                .sum();
            Some(total / 11.0)
        }
    }
}

fn check_probs(probs: &Matrix) -> Result<()> {
    if probs.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { op: "assign" });
    }
    Ok(())
}

/// Marks the `k` highest-scoring classes of every column.
pub fn assign_topk(probs: &Matrix, k: usize) -> Result<Matrix> {
    check_probs(probs)?;
    let (c, n) = probs.shape();
    if k > c {
        return Err(Error::InvalidArgument(format!("top-{k} assignment with only {c} classes")));
    }
    let mut out = Matrix::zeros(c, n);
    for s in 0..n {
        for &j in ranking(&probs.col(s)).iter().take(k) {
            out.set(j, s, 1.0)?;
        }
    }
    Ok(out)
}

/// Marks every entry strictly above `t`.
pub fn assign_threshold(probs: &Matrix, t: f64) -> Result<Matrix> {
    check_probs(probs)?;
    probs.map("assign_threshold", |p| if p > t { 1.0 } else { 0.0 })
}

/// Confusion counts of one class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClassCounts {
    /// Correctly predicted positives.
    pub correct: usize,
    pub predicted: usize,
    pub ground_truth: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrfSuite {
    pub op: f64,
    pub or: f64,
    pub of1: f64,
    pub cp: f64,
    pub cr: f64,
    pub cf1: f64,
    pub counts: Vec<ClassCounts>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// A class with nothing predicted has precision 0, one with no ground
/// truth has recall 0.
pub fn prf_suite(assigned: &Matrix, truth: &Matrix) -> Result<PrfSuite> {
    if assigned.shape() != truth.shape() {
        return Err(Error::DimensionMismatch {
            op: "prf_suite",
            left: assigned.shape(),
            right: truth.shape(),
        });
    }
    let (c, n) = truth.shape();
    let counts: Vec<ClassCounts> = (0..c)
        .map(|j| {
            let mut k = ClassCounts::default();
            for s in 0..n {
                let p = assigned.get(j, s) > 0.5;
                let g = truth.get(j, s) > 0.5;
                k.predicted += p as usize;
                k.ground_truth += g as usize;
                k.correct += (p && g) as usize;
            }
            k
        })
        .collect();
    let sum = |f: fn(&ClassCounts) -> usize| counts.iter().map(f).sum::<usize>();
    let op = ratio(sum(|k| k.correct), sum(|k| k.predicted));
    let or = ratio(sum(|k| k.correct), sum(|k| k.ground_truth));
    let cp = counts.iter().map(|k| ratio(k.correct, k.predicted)).sum::<f64>() / c.max(1) as f64;
    let cr = counts.iter().map(|k| ratio(k.correct, k.ground_truth)).sum::<f64>() / c.max(1) as f64;
    Ok(PrfSuite {
        op,
        or,
        of1: harmonic(op, or),
        cp,
        cr,
        cf1: harmonic(cp, cr),
        counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub ap: ApConvention,
    /// `None` means `min(3, c)`.
    pub top_k: Option<usize>,
    pub threshold: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            ap: ApConvention::AllPoints,
            top_k: None,
            threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    /// `None` for classes without positives; those are left out of `map`.
    pub per_class_ap: Vec<Option<f64>>,
    pub map: f64,
    pub ap_convention: ApConvention,
    pub top_k: usize,
    pub topk: PrfSuite,
    pub threshold: f64,
    pub thresholded: PrfSuite,
}

pub fn evaluate_probs(probs: &Matrix, labels: &Matrix) -> Result<MetricReport> {
    evaluate_probs_with(probs, labels, &EvalOptions::default())
}

pub fn evaluate_probs_with(probs: &Matrix, labels: &Matrix, opts: &EvalOptions) -> Result<MetricReport> {
    if probs.shape() != labels.shape() {
        return Err(Error::DimensionMismatch {
            op: "evaluate",
            left: probs.shape(),
            right: labels.shape(),
        });
    }
    check_probs(probs)?;
    let c = probs.rows();
    let per_class_ap: Vec<Option<f64>> = (0..c)
        .map(|j| {
            let relevant: Vec<bool> = labels.row(j).iter().map(|&y| y > 0.5).collect();
            let ap = average_precision(probs.row(j), &relevant, opts.ap);
            if ap.is_none() {
                log::warn!("class {j} has no positives; AP undefined and excluded from mAP");
            }
            ap
        })
        .collect();
    let defined: Vec<f64> = per_class_ap.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::InvalidArgument("no class has a positive sample".into()));
    }
    let map = defined.iter().sum::<f64>() / defined.len() as f64;
    let top_k = opts.top_k.unwrap_or(3.min(c));
    Ok(MetricReport {
        per_class_ap,
        map,
        ap_convention: opts.ap,
        top_k,
        topk: prf_suite(&assign_topk(probs, top_k)?, labels)?,
        threshold: opts.threshold,
        thresholded: prf_suite(&assign_threshold(probs, opts.threshold)?, labels)?,
    })
}

fn fmt_ap(ap: Option<f64>) -> String {
    ap.map_or_else(|| "undefined".to_string(), |v| v.to_string())
}

impl MetricReport {
    fn policies(&self) -> [(String, &PrfSuite); 2] {
        [
            (format!("top{}", self.top_k), &self.topk),
            (format!("threshold{}", self.threshold), &self.thresholded),
        ]
    }

    /// Long-form CSV: `section,name,value`.
    pub fn to_csv(&self, class_names: &[String]) -> String {
        let mut s = String::from("section,name,value\n");
        for (j, ap) in self.per_class_ap.iter().enumerate() {
            let name = class_names.get(j).cloned().unwrap_or_else(|| format!("class{j}"));
            writeln!(s, "ap,{name},{}", fmt_ap(*ap)).expect("string write");
        }
        writeln!(s, "summary,mAP,{}", self.map).expect("string write");
        for (policy, p) in self.policies() {
            for (k, v) in [("OP", p.op), ("OR", p.or), ("OF1", p.of1), ("CP", p.cp), ("CR", p.cr), ("CF1", p.cf1)] {
                writeln!(s, "{policy},{k},{v}").expect("string write");
            }
            for (j, k) in p.counts.iter().enumerate() {
                let name = class_names.get(j).cloned().unwrap_or_else(|| format!("class{j}"));
                writeln!(
                    s,
                    "{policy},{name}:N_t/N_p/N_g,{}/{}/{}",
                    k.correct, k.predicted, k.ground_truth
                )
                .expect("string write");
            }
        }
        s
    }

    /// Aligned plain-text summary.
    pub fn to_table(&self, class_names: &[String]) -> String {
        let width = class_names.iter().map(String::len).max().unwrap_or(0).max(8);
        let mut s = String::new();
        writeln!(s, "{:<width$}  {:>10}", "class", "AP").expect("string write");
        for (j, ap) in self.per_class_ap.iter().enumerate() {
            let name = class_names.get(j).cloned().unwrap_or_else(|| format!("class{j}"));
            let ap = ap.map_or_else(|| "undefined".to_string(), |v| format!("{v:.6}"));
            writeln!(s, "{name:<width$}  {ap:>10}").expect("string write");
        }
        writeln!(s, "{:<width$}  {:>10.6}", "mAP", self.map).expect("string write");
        writeln!(s).expect("string write");
        writeln!(
            s,
            "{:<14} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
            "policy", "OP", "OR", "OF1", "CP", "CR", "CF1"
        )
        .expect("string write");
        for (policy, p) in self.policies() {
            writeln!(
                s,
                "{policy:<14} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
                p.op, p.or, p.of1, p.cp, p.cr, p.cf1
            )
            .expect("string write");
        }
        s
    }
}
