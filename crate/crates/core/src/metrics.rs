//! HardF1 / SoftF1 with samples averaging, and Welch's t-test.

use log::warn;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::bits::BitVector;
use crate::error::{Error, Result};
use crate::graph::{ConvGraph, Level, NodeKey};

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

/// Set F1 between the bits of `y` and `y_hat`. Two empty vectors score 1,
/// exactly one empty vector scores 0.
pub fn f1(y: &BitVector, y_hat: &BitVector) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::WidthMismatch {
            expected: y.len(),
            actual: y_hat.len(),
        });
    }
    let gold = y.count_ones();
    let pred = y_hat.count_ones();
    if gold == 0 && pred == 0 {
        return Ok(1.0);
    }
    if gold == 0 || pred == 0 {
        return Ok(0.0);
    }
    let tp = y.overlap(y_hat);
    // 2PR/(P+R) simplified to avoid rounding in the intermediate ratios
    Ok(2.0 * tp as f64 / (gold + pred) as f64)
}

/// Best F1 of `y_hat` against any of the valid references.
pub fn soft_f1(y_hat: &BitVector, refs: &[BitVector]) -> Result<f64> {
    if refs.is_empty() {
        return Err(Error::EmptyReferenceSet);
    }
    refs.iter()
        .map(|y| f1(y, y_hat))
        .try_fold(0.0f64, |best, s| Ok(best.max(s?)))
}

/// One scored prediction. The agent node is the user-level state at the head
/// of the history.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub history: Vec<BitVector>,
    pub y_gold: BitVector,
    pub y_hat: BitVector,
}

impl PredictionRecord {
    pub fn node(&self) -> Option<NodeKey> {
        self.history
            .first()
            .map(|s| NodeKey::new(Level::User, s.clone()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub hard_f1: f64,
    pub soft_f1: f64,
    pub n_records: usize,
    /// Records whose context is absent from the evaluation graph; they are
    /// scored against their gold target only.
    pub unresolved: usize,
}

/// Order-independent mean: values are sorted, then summed with Neumaier
/// compensation.
pub fn stable_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in sorted {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    (sum + comp) / values.len() as f64
}

/// Valid references for a record: the graph's actions at its node plus the
/// gold target. Returns `None` for the graph part when the node is unknown.
pub fn references(record: &PredictionRecord, graph: &ConvGraph) -> (Vec<BitVector>, bool) {
    let mut refs = vec![record.y_gold.clone()];
    let resolved = match record.node().map(|k| graph.valid_actions_for(&k)) {
        Some(Ok(actions)) => {
            refs.extend(actions.into_iter().map(|(a, _)| a));
            true
        }
        _ => false,
    };
    (refs, resolved)
}

pub fn evaluate(preds: &[PredictionRecord], eval_graph: &ConvGraph) -> Result<ScoreReport> {
    if preds.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut hard = Vec::with_capacity(preds.len());
    let mut soft = Vec::with_capacity(preds.len());
    let mut unresolved = 0;
    for p in preds {
        hard.push(f1(&p.y_gold, &p.y_hat)?);
        let (refs, resolved) = references(p, eval_graph);
        if !resolved {
            unresolved += 1;
        }
        soft.push(soft_f1(&p.y_hat, &refs)?);
    }
    Ok(ScoreReport {
        hard_f1: stable_mean(&hard),
        soft_f1: stable_mean(&soft),
        n_records: preds.len(),
        unresolved,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub significant: bool,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Two-tailed Welch t-test with Welch–Satterthwaite degrees of freedom,
/// significant at `alpha`.
pub fn welch_ttest_at(a: &[f64], b: &[f64], alpha: f64) -> Result<WelchResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InsufficientSamples(a.len(), b.len()));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let sa = va / a.len() as f64;
    let sb = vb / b.len() as f64;
    let se2 = sa + sb;
    if se2 == 0.0 {
        let (t, p) = if ma == mb {
            (0.0, 1.0)
        } else {
            warn!("both samples have zero variance; the t statistic is degenerate");
            ((ma - mb).signum() * f64::INFINITY, 0.0)
        };
        return Ok(WelchResult {
            t,
            df: f64::NAN,
            p,
            significant: p < alpha,
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2
        / (sa * sa / (a.len() - 1) as f64 + sb * sb / (b.len() - 1) as f64);
    // P(|T| > |t|) = I_{df/(df+t^2)}(df/2, 1/2)
    let p = beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0);
    Ok(WelchResult {
        t,
        df,
        p,
        significant: p < alpha,
    })
}

pub fn welch_ttest(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    welch_ttest_at(a, b, SIGNIFICANCE_LEVEL)
}
