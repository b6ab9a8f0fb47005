//! A one-hidden-layer multi-label policy over concatenated history states,
//! trained with binary cross-entropy (single reference) or its minimum over
//! all graph-valid references.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bits::BitVector;
use crate::error::{Error, Result};
use crate::graph::ConvGraph;
use crate::instances::{InstanceSet, TrainingInstance};
use crate::metrics::{f1, stable_mean, PredictionRecord};

/// Probabilities are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[serde(alias = "BCE")]
    Bce,
    #[serde(alias = "SBCE")]
    Sbce,
}

impl std::str::FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bce" => Ok(LossKind::Bce),
            "sbce" => Ok(LossKind::Sbce),
            other => Err(Error::InvalidConfig(format!("unknown loss {other:?}"))),
        }
    }
}

/// `sigmoid(w2 · relu(w1 · x + b1) + b2)` with row-major weight matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyModel {
    pub n: usize,
    pub state_width: usize,
    pub act_width: usize,
    pub hidden: usize,
    pub seed: u64,
    /// `hidden x input`
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `output x hidden`
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Same shapes as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

struct Activations {
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    probs: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl PolicyModel {
    /// Weights and biases drawn uniformly from `±1/sqrt(fan_in)`.
    pub fn new(n: usize, state_width: usize, act_width: usize, hidden: usize, seed: u64) -> Self {
        let mut m = Self::zeros(n, state_width, act_width, hidden);
        m.seed = seed;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = 1.0 / (m.input_size() as f64).sqrt();
        for w in m.w1.iter_mut().chain(m.b1.iter_mut()) {
            *w = rng.random_range(-b..b);
        }
        let b = 1.0 / (hidden as f64).sqrt();
        for w in m.w2.iter_mut().chain(m.b2.iter_mut()) {
            *w = rng.random_range(-b..b);
        }
        m
    }

    pub fn zeros(n: usize, state_width: usize, act_width: usize, hidden: usize) -> Self {
        let input = n * state_width;
        PolicyModel {
            n,
            state_width,
            act_width,
            hidden,
            seed: 0,
            w1: vec![0.0; hidden * input],
            b1: vec![0.0; hidden],
            w2: vec![0.0; act_width * hidden],
            b2: vec![0.0; act_width],
        }
    }

    pub fn input_size(&self) -> usize {
        self.n * self.state_width
    }

    pub fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(f64::is_finite)
    }

    fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
            .copied()
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
    }

    fn param_mut(&mut self, mut k: usize) -> &mut f64 {
        for v in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            if k < v.len() {
                return &mut v[k];
            }
            k -= v.len();
        }
        panic!("parameter index out of range")
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_size() {
            return Err(Error::ShapeMismatch(format!(
                "model expects {} inputs, got {}",
                self.input_size(),
                x.len()
            )));
        }
        Ok(())
    }

    fn activations(&self, x: &[f64]) -> Activations {
        let input = self.input_size();
        let hidden_pre: Vec<f64> = (0..self.hidden)
            .map(|h| {
                let row = &self.w1[h * input..(h + 1) * input];
                row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b1[h]
            })
            .collect();
        let hidden: Vec<f64> = hidden_pre.iter().map(|&z| z.max(0.0)).collect();
        let probs = (0..self.act_width)
            .map(|o| {
                let row = &self.w2[o * self.hidden..(o + 1) * self.hidden];
                let z = row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>() + self.b2[o];
                sigmoid(z)
            })
            .collect();
        Activations {
            hidden_pre,
            hidden,
            probs,
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.activations(x).probs)
    }

    pub fn forward_history(&self, history: &[BitVector]) -> Result<Vec<f64>> {
        if history.len() != self.n || history.iter().any(|s| s.len() != self.state_width) {
            return Err(Error::ShapeMismatch(format!(
                "model expects {} states of width {}",
                self.n, self.state_width
            )));
        }
        let mut x = Vec::with_capacity(self.input_size());
        for s in history {
            s.extend_f64(&mut x);
        }
        self.forward(&x)
    }

    /// Bit `i` is set iff the probability of label `i` is strictly above
    /// `threshold`.
    pub fn predict(&self, history: &[BitVector], threshold: f64) -> Result<BitVector> {
        let p = self.forward_history(history)?;
        Ok(BitVector::from_bools(p.iter().map(|&q| q > threshold)))
    }

    fn backward(&self, x: &[f64], acts: &Activations, dlogits: &[f64], grads: &mut Gradients) {
        let input = self.input_size();
        let mut dhidden = vec![0.0; self.hidden];
        for (o, &d) in dlogits.iter().enumerate() {
            grads.b2[o] += d;
            let row = o * self.hidden..(o + 1) * self.hidden;
            let gw = &mut grads.w2[row.clone()];
            for (((g, dh), &a), &w) in gw.iter_mut().zip(&mut dhidden).zip(&acts.hidden).zip(&self.w2[row]) {
                *g += d * a;
                *dh += d * w;
            }
        }
        for (h, (&d, &pre)) in dhidden.iter().zip(&acts.hidden_pre).enumerate() {
            if pre <= 0.0 {
                continue;
            }
            grads.b1[h] += d;
            let row = &mut grads.w1[h * input..(h + 1) * input];
            for (g, &v) in row.iter_mut().zip(x) {
                *g += d * v;
            }
        }
    }

    /// Loss of one example and its gradient accumulated into `grads`.
    ///
    /// For SBCE only the minimising reference contributes to the gradient.
    pub fn accumulate_gradient(
        &self,
        x: &[f64],
        refs: &[BitVector],
        loss: LossKind,
        grads: &mut Gradients,
    ) -> Result<f64> {
        self.check_input(x)?;
        let acts = self.activations(x);
        let (value, chosen) = reference_loss(&acts.probs, refs, loss)?;
        let y = &refs[chosen];
        let dlogits: Vec<f64> = acts
            .probs
            .iter()
            .enumerate()
            .map(|(i, &p)| p - if y.get(i) { 1.0 } else { 0.0 })
            .collect();
        self.backward(x, &acts, &dlogits, grads);
        Ok(value)
    }

    pub fn loss(&self, x: &[f64], refs: &[BitVector], loss: LossKind) -> Result<f64> {
        let p = self.forward(x)?;
        Ok(reference_loss(&p, refs, loss)?.0)
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            w1: vec![0.0; self.w1.len()],
            b1: vec![0.0; self.b1.len()],
            w2: vec![0.0; self.w2.len()],
            b2: vec![0.0; self.b2.len()],
        }
    }

    /// `params -= scale * grads`
    pub fn apply(&mut self, grads: &Gradients, scale: f64) {
        let g = grads
            .w1
            .iter()
            .chain(&grads.b1)
            .chain(&grads.w2)
            .chain(&grads.b2);
        for (p, d) in self.params_mut().zip(g) {
            *p -= scale * d;
        }
    }

    const MAGIC: &'static [u8; 4] = b"CGPM";
    const VERSION: u32 = 1;

    /// Little-endian binary encoding: magic, version, the header
    /// `{n, |ds|, |da|, hidden, seed}` as u64, then `w1, b1, w2, b2` as f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(48 + 8 * self.n_params());
        out.extend_from_slice(Self::MAGIC);
        out.extend_from_slice(&Self::VERSION.to_le_bytes());
        for v in [
            self.n as u64,
            self.state_width as u64,
            self.act_width as u64,
            self.hidden as u64,
            self.seed,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for p in self.params() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("model file: {m}"));
        if bytes.len() < 48 || &bytes[..4] != Self::MAGIC {
            return Err(bad("missing header"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != Self::VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let word = |i: usize| u64::from_le_bytes(bytes[8 + 8 * i..16 + 8 * i].try_into().expect("8 bytes"));
        let to_usize = |v: u64| usize::try_from(v).map_err(|_| bad("dimension overflow"));
        let (n, ds, da, hidden) = (
            to_usize(word(0))?,
            to_usize(word(1))?,
            to_usize(word(2))?,
            to_usize(word(3))?,
        );
        let mut m = Self::zeros(n, ds, da, hidden);
        m.seed = word(4);
        let body = &bytes[48..];
        if body.len() != 8 * m.n_params() {
            return Err(bad("parameter block has the wrong length"));
        }
        for (p, chunk) in m.params_mut().zip(body.chunks_exact(8)) {
            *p = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// `-Σ y log p + (1 - y) log(1 - p)` with clamped probabilities.
pub fn bce_loss(y: &BitVector, p: &[f64]) -> Result<f64> {
    if y.len() != p.len() {
        return Err(Error::WidthMismatch {
            expected: y.len(),
            actual: p.len(),
        });
    }
    Ok(p.iter()
        .enumerate()
        .map(|(i, &q)| {
            let q = q.clamp(PROB_EPS, 1.0 - PROB_EPS);
            if y.get(i) {
                -q.ln()
            } else {
                -(1.0 - q).ln()
            }
        })
        .sum())
}

/// Minimum BCE over the references and the index of the reference that
/// attains it. Exact ties go to the canonically smallest reference.
pub fn sbce_loss(p: &[f64], refs: &[BitVector]) -> Result<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for (i, y) in refs.iter().enumerate() {
        let l = bce_loss(y, p)?;
        best = match best {
            Some((bl, bi)) if bl < l || (bl == l && refs[bi] <= *y) => Some((bl, bi)),
            _ => Some((l, i)),
        };
    }
    best.ok_or(Error::EmptyReferenceSet)
}

fn reference_loss(p: &[f64], refs: &[BitVector], loss: LossKind) -> Result<(f64, usize)> {
    match loss {
        LossKind::Bce => {
            let y = refs.first().ok_or(Error::EmptyReferenceSet)?;
            Ok((bce_loss(y, p)?, 0))
        }
        LossKind::Sbce => sbce_loss(p, refs),
    }
}

pub const GRAD_CHECK_FLOOR: f64 = 1e-7;

/// Largest relative error between the analytic gradient and central finite
/// differences, over every parameter. Relative errors use
/// `|a - n| / max(|a|, |n|, GRAD_CHECK_FLOOR)`.
///
/// With [`LossKind::Bce`] the first reference is the target.
pub fn grad_check(
    model: &PolicyModel,
    x: &[f64],
    refs: &[BitVector],
    loss: LossKind,
    epsilon: f64,
) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::InvalidConfig(format!(
            "epsilon {epsilon} outside [1e-7, 1e-3]"
        )));
    }
    let mut analytic = model.zero_gradients();
    model.accumulate_gradient(x, refs, loss, &mut analytic)?;
    let analytic: Vec<f64> = analytic
        .w1
        .iter()
        .chain(&analytic.b1)
        .chain(&analytic.w2)
        .chain(&analytic.b2)
        .copied()
        .collect();
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (k, &a) in analytic.iter().enumerate() {
        let original = *probe.param_mut(k);
        *probe.param_mut(k) = original + epsilon;
        let plus = probe.loss(x, refs, loss)?;
        *probe.param_mut(k) = original - epsilon;
        let minus = probe.loss(x, refs, loss)?;
        *probe.param_mut(k) = original;
        let numeric = (plus - minus) / (2.0 * epsilon);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub hidden: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub seed: u64,
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossKind::Bce,
            hidden: 256,
            batch_size: 32,
            patience: 5,
            learning_rate: 0.05,
            max_epochs: 100,
            seed: 13,
            threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.patience == 0 {
            return err("patience must be at least 1");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return err("threshold must lie strictly between 0 and 1");
        }
        if self.batch_size == 0 || self.hidden == 0 || self.max_epochs == 0 {
            return err("batch size, hidden size and epoch limit must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return err("learning rate must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean loss over the training set after the epoch's updates.
    pub train_loss: f64,
    pub dev_hard_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_dev_hard_f1: f64,
    pub stopped_early: bool,
}

/// Training references per instance: the gold target, followed for SBCE by
/// every other action the graph records at the instance's agent node.
pub fn training_references(
    inst: &TrainingInstance,
    graph: &ConvGraph,
    loss: LossKind,
) -> Vec<BitVector> {
    let mut refs = vec![inst.target.clone()];
    if loss == LossKind::Sbce {
        if let Ok(actions) = graph.valid_actions_for(&inst.decision_node()) {
            for (a, _) in actions {
                if !refs.contains(&a) {
                    refs.push(a);
                }
            }
        }
    }
    refs
}

fn mean_dev_hard_f1(model: &PolicyModel, dev: &[(Vec<f64>, BitVector)], threshold: f64) -> Result<f64> {
    let scores = dev
        .iter()
        .map(|(x, gold)| {
            let p = model.forward(x)?;
            let y_hat = BitVector::from_bools(p.iter().map(|&q| q > threshold));
            f1(gold, &y_hat)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(stable_mean(&scores))
}

/// Mini-batch SGD with seeded per-epoch shuffling and early stopping on the
/// development HardF1. Returns the best epoch's parameters.
pub fn train(
    base: &InstanceSet,
    dev: &InstanceSet,
    graph: &ConvGraph,
    cfg: &TrainConfig,
) -> Result<(PolicyModel, TrainLog)> {
    cfg.validate()?;
    base.ensure_compatible(dev)?;
    if graph.vocab_hash() != base.vocab_hash {
        return Err(Error::ConfigMismatch(
            "graph and instances use different vocabularies".into(),
        ));
    }
    let first = base.instances.first().ok_or(Error::EmptyInput)?;
    if dev.is_empty() {
        return Err(Error::InvalidConfig("development set is empty".into()));
    }
    let state_width = first.history[0].len();
    let act_width = first.target.len();
    if state_width != graph.state_width() || act_width != graph.act_width() {
        return Err(Error::ConfigMismatch("instance widths differ from the graph".into()));
    }

    let data: Vec<(Vec<f64>, Vec<BitVector>)> = base
        .instances
        .iter()
        .map(|i| (i.input(), training_references(i, graph, cfg.loss)))
        .collect();
    let dev_data: Vec<(Vec<f64>, BitVector)> = dev
        .instances
        .iter()
        .map(|i| (i.input(), i.target.clone()))
        .collect();

    let mut model = PolicyModel::new(base.n, state_width, act_width, cfg.hidden, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..data.len()).collect();

    let mut best = model.clone();
    let mut log = TrainLog {
        epochs: Vec::new(),
        best_epoch: 0,
        best_dev_hard_f1: f64::NEG_INFINITY,
        stopped_early: false,
    };
    let mut since_best = 0;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = model.zero_gradients();
            for &i in batch {
                let (x, refs) = &data[i];
                model.accumulate_gradient(x, refs, cfg.loss, &mut grads)?;
            }
            let previous = model.clone();
            model.apply(&grads, cfg.learning_rate / batch.len() as f64);
            if !model.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    last_finite: Box::new(previous),
                });
            }
        }
        let losses = data
            .iter()
            .map(|(x, refs)| model.loss(x, refs, cfg.loss))
            .collect::<Result<Vec<f64>>>()?;
        let record = EpochRecord {
            epoch,
            train_loss: stable_mean(&losses),
            dev_hard_f1: mean_dev_hard_f1(&model, &dev_data, cfg.threshold)?,
        };
        log::debug!(
            "epoch {epoch}: loss {:.5} dev hard f1 {:.4}",
            record.train_loss,
            record.dev_hard_f1
        );
        if record.dev_hard_f1 > log.best_dev_hard_f1 {
            log.best_dev_hard_f1 = record.dev_hard_f1;
            log.best_epoch = epoch;
            best = model.clone();
            since_best = 0;
        } else {
            since_best += 1;
        }
        log.epochs.push(record);
        if since_best >= cfg.patience {
            log.stopped_early = true;
            break;
        }
    }
    Ok((best, log))
}

/// Thresholded predictions for every instance of `set`.
pub fn predict_set(
    model: &PolicyModel,
    set: &InstanceSet,
    threshold: f64,
) -> Result<Vec<PredictionRecord>> {
    set.instances
        .iter()
        .map(|i| {
            Ok(PredictionRecord {
                history: i.history.clone(),
                y_gold: i.target.clone(),
                y_hat: model.predict(&i.history, threshold)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(s: &str) -> BitVector {
        s.parse().unwrap()
    }

    fn unit_model() -> PolicyModel {
        let mut m = PolicyModel::zeros(1, 1, 1, 1);
        m.w1[0] = 1.0;
        m.w2[0] = 1.0;
        m
    }

    #[test]
    fn forward_examples() {
        let m = PolicyModel::zeros(2, 3, 4, 5);
        assert!(m.forward(&[1.0; 6]).unwrap().iter().all(|&p| p == 0.5));
        let m = unit_model();
        let p = m.forward(&[1.0]).unwrap()[0];
        assert!((p - 0.731_058_578_630_004_9).abs() < 1e-12);
        assert_eq!(m.forward(&[0.0]).unwrap()[0], 0.5);
        assert!(matches!(m.forward(&[0.0, 1.0]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn predict_thresholds() {
        let m = PolicyModel::zeros(1, 2, 3, 4);
        let h = [bits("11")];
        assert!(m.predict(&h, 0.5).unwrap().is_zero());
        assert_eq!(m.predict(&h, 0.49).unwrap().count_ones(), 3);
        assert!(unit_model().predict(&[bits("1")], 0.5).unwrap().get(0));
    }

    #[test]
    fn bce_examples() {
        let l = bce_loss(&bits("101"), &[0.5, 0.5, 0.5]).unwrap();
        assert!((l - 3.0 * std::f64::consts::LN_2).abs() < 1e-12);
        let l = bce_loss(&bits("1"), &[0.1]).unwrap();
        assert!((l - std::f64::consts::LN_10).abs() < 1e-12);
        let l = bce_loss(&bits("101"), &[1.0, 0.0, 1.0]).unwrap();
        assert!((0.0..=3e-11).contains(&l));
        assert!(bce_loss(&bits("10"), &[0.5]).is_err());
        for p in [0.0, 1.0, 0.5] {
            assert!(bce_loss(&bits("1"), &[p]).unwrap().is_finite());
            assert!(bce_loss(&bits("0"), &[p]).unwrap().is_finite());
        }
    }

    #[test]
    fn sbce_examples() {
        let p = [0.9, 0.1, 0.1];
        let refs = [bits("110"), bits("100")];
        let (l, i) = sbce_loss(&p, &refs).unwrap();
        assert_eq!(i, 1);
        assert!((l - 0.316_081_546_973_478).abs() < 1e-9);
        assert!((bce_loss(&refs[0], &p).unwrap() - 2.513_306_124_309_698).abs() < 1e-9);

        let (l1, _) = sbce_loss(&p, &refs[..1]).unwrap();
        assert_eq!(l1, bce_loss(&refs[0], &p).unwrap());
        assert!(matches!(sbce_loss(&p, &[]), Err(Error::EmptyReferenceSet)));
    }

    #[test]
    fn sbce_ties_pick_canonical_reference() {
        let p = [0.5, 0.5];
        let refs = [bits("10"), bits("01")];
        let (_, i) = sbce_loss(&p, &refs).unwrap();
        assert_eq!(refs[i], bits("01"));
        let swapped = [bits("01"), bits("10")];
        let (_, j) = sbce_loss(&p, &swapped).unwrap();
        assert_eq!(swapped[j], bits("01"));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let m = PolicyModel::new(2, 3, 4, 5, 11);
        let x = [1.0, 0.0, 1.0, 0.0, 1.0, 1.0];
        let refs = [bits("1010"), bits("0110")];
        assert!(grad_check(&m, &x, &refs, LossKind::Bce, 1e-6).unwrap() < 1e-5);
        assert!(grad_check(&m, &x, &refs, LossKind::Sbce, 1e-6).unwrap() < 1e-5);
        assert!(grad_check(&m, &x, &refs, LossKind::Bce, 1.0).is_err());
    }

    #[test]
    fn singleton_sbce_gradient_equals_bce() {
        let m = PolicyModel::new(1, 4, 3, 6, 5);
        let x = [1.0, 1.0, 0.0, 1.0];
        let refs = [bits("101")];
        let mut a = m.zero_gradients();
        let mut b = m.zero_gradients();
        let la = m.accumulate_gradient(&x, &refs, LossKind::Bce, &mut a).unwrap();
        let lb = m.accumulate_gradient(&x, &refs, LossKind::Sbce, &mut b).unwrap();
        assert_eq!(la, lb);
        assert_eq!(a, b);
    }

    #[test]
    fn model_bytes_roundtrip() {
        let m = PolicyModel::new(3, 4, 5, 7, 99);
        let back = PolicyModel::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back, m);
        let x = vec![1.0; 12];
        assert_eq!(
            back.forward(&x).unwrap(),
            m.forward(&x).unwrap()
        );
        assert!(PolicyModel::from_bytes(&m.to_bytes()[..60]).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        c.validate().unwrap();
        c.threshold = 1.0;
        assert!(c.validate().is_err());
        c = TrainConfig { patience: 0, ..TrainConfig::default() };
        assert!(c.validate().is_err());
    }
}
