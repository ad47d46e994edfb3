//! Classification losses: cross entropy, binary cross entropy, focal loss,
//! and complement cross entropy (CCE).
//!
//! CCE adds to cross entropy a balanced complement-entropy term computed
//! over the normalized wrong-class probabilities p_j = s_j / (1 - s_g):
//!
//!   C = CE + (beta / (P - 1)) * mean_i H_i,
//!   H_i = -sum_{j != g} p_j log p_j.
//!
//! H_i is largest when the wrong-class mass is uniform, so with the default
//! beta = -1 minimizing C pushes wrong-class probabilities toward
//! uniformity, which is what helps minority classes. beta = 0 reduces CCE
//! to plain cross entropy bit-for-bit.
//!
//! All losses consume probabilities (softmax rows, or per-class sigmoid
//! scores for BCE) and return the gradient w.r.t. those probabilities;
//! [`apply_to_logits`] composes them with the head activation for training.

use crate::error::{Error, Result};
use crate::ops::{sigmoid_scalar, softmax_rows, softmax_rows_backward};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// Epsilon guarding every logarithm and the 1 - s_g denominator.
pub const LOSS_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Ce,
    Bce,
    Focal,
    Cce,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LossConfig {
    pub kind: LossKind,
    /// Number of classes P.
    pub classes: usize,
    /// CCE balance coefficient.
    pub beta: f64,
    /// Focal focusing exponent.
    pub gamma: f64,
    /// Optional per-class focal weights.
    pub alpha: Option<Vec<f64>>,
    pub eps: f64,
}

impl LossConfig {
    pub fn new(kind: LossKind, classes: usize) -> Self {
        LossConfig {
            kind,
            classes,
            beta: -1.0,
            gamma: 2.0,
            alpha: None,
            eps: LOSS_EPS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config(format!(
                "loss needs at least 2 classes, got {}",
                self.classes
            )));
        }
        if self.eps <= 0.0 {
            return Err(Error::Config("loss eps must be positive".into()));
        }
        if self.gamma < 0.0 {
            return Err(Error::Config("focal gamma must be nonnegative".into()));
        }
        if let Some(a) = &self.alpha {
            if a.len() != self.classes {
                return Err(Error::Config(format!(
                    "focal alpha has {} entries for {} classes",
                    a.len(),
                    self.classes
                )));
            }
        }
        Ok(())
    }
}

/// Softmax rows plus integer labels; the common prediction carrier.
pub struct BatchPrediction<'a> {
    pub probs: &'a Tensor,
    pub labels: &'a [usize],
}

impl<'a> BatchPrediction<'a> {
    pub fn new(probs: &'a Tensor, labels: &'a [usize]) -> Result<Self> {
        let [n, p] = probs.dims2("batch prediction")?;
        if labels.len() != n {
            return Err(Error::Input(format!(
                "{n} prediction rows but {} labels",
                labels.len()
            )));
        }
        for (i, &g) in labels.iter().enumerate() {
            if g >= p {
                return Err(Error::Input(format!(
                    "label {g} out of range for {p} classes (sample {i})"
                )));
            }
        }
        for i in 0..n {
            let row = &probs.data()[i * p..(i + 1) * p];
            if row.iter().any(|&v| v < 0.0) {
                return Err(Error::Input(format!("negative probability in row {i}")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Input(format!(
                    "row {i} sums to {sum}, not a probability vector"
                )));
            }
        }
        Ok(BatchPrediction { probs, labels })
    }
}

pub struct LossValue {
    pub value: f64,
    /// Gradient w.r.t. the probabilities (or scores for BCE).
    pub grad: Tensor,
}

/// -(1/N) sum_i log(s_i[g_i] + eps).
pub fn cross_entropy(pred: &BatchPrediction) -> LossValue {
    let [n, p] = [pred.probs.dims()[0], pred.probs.dims()[1]];
    let inv_n = 1.0 / n as f64;
    let mut value = 0.0;
    let mut grad = Tensor::zeros(&[n, p]);
    for (i, &g) in pred.labels.iter().enumerate() {
        let sg = pred.probs.data()[i * p + g];
        value -= (sg + LOSS_EPS).ln();
        grad.data_mut()[i * p + g] = -inv_n / (sg + LOSS_EPS);
    }
    LossValue {
        value: value * inv_n,
        grad,
    }
}

/// Mean over the batch of the wrong-class entropy H_i; 0 log 0 reads as 0
/// and samples with s_g >= 1 - eps contribute nothing.
pub fn complement_entropy(pred: &BatchPrediction) -> f64 {
    complement_entropy_with_grad(pred).value
}

/// Complement entropy plus its gradient w.r.t. the probabilities.
pub fn complement_entropy_with_grad(pred: &BatchPrediction) -> LossValue {
    complement_entropy_eps(pred, LOSS_EPS)
}

fn complement_entropy_eps(pred: &BatchPrediction, eps: f64) -> LossValue {
    let [n, p] = [pred.probs.dims()[0], pred.probs.dims()[1]];
    let inv_n = 1.0 / n as f64;
    let mut value = 0.0;
    let mut grad = Tensor::zeros(&[n, p]);
    for (i, &g) in pred.labels.iter().enumerate() {
        let row = &pred.probs.data()[i * p..(i + 1) * p];
        let sg = row[g];
        if sg >= 1.0 - eps {
            continue;
        }
        let q = 1.0 - sg + eps;
        let mut h = 0.0;
        let mut mass = 0.0;
        for (j, &sj) in row.iter().enumerate() {
            if j == g || sj <= 0.0 {
                continue;
            }
            let pj = sj / q;
            h -= pj * pj.ln();
            mass += pj;
        }
        value += h;
        let gr = &mut grad.data_mut()[i * p..(i + 1) * p];
        for (j, &sj) in row.iter().enumerate() {
            if j == g {
                // dH/ds_g = (H - sum_j p_j) / q
                gr[j] = inv_n * (h - mass) / q;
            } else if sj > 0.0 {
                let pj = sj / q;
                gr[j] = -inv_n * (pj.ln() + 1.0) / q;
            } else {
                // 0 log 0 = 0; hold the guarded coordinate at zero slope.
                gr[j] = 0.0;
            }
        }
    }
    LossValue {
        value: value * inv_n,
        grad,
    }
}

/// CE + (beta / (P - 1)) * complement entropy; gradient flows through both.
pub fn cce_total(pred: &BatchPrediction, cfg: &LossConfig) -> Result<LossValue> {
    cfg.validate()?;
    let scale = cfg.beta / (cfg.classes as f64 - 1.0);
    let ce = cross_entropy(pred);
    if cfg.beta == 0.0 {
        return Ok(ce);
    }
    let comp = complement_entropy_eps(pred, cfg.eps);
    let mut grad = ce.grad;
    for (g, c) in grad.data_mut().iter_mut().zip(comp.grad.data()) {
        *g += scale * c;
    }
    Ok(LossValue {
        value: ce.value + scale * comp.value,
        grad,
    })
}

/// -(1/N) sum_i alpha_g (1 - s_g)^gamma log(s_g + eps).
pub fn focal_loss(pred: &BatchPrediction, cfg: &LossConfig) -> Result<LossValue> {
    cfg.validate()?;
    let [n, p] = [pred.probs.dims()[0], pred.probs.dims()[1]];
    let inv_n = 1.0 / n as f64;
    let mut value = 0.0;
    let mut grad = Tensor::zeros(&[n, p]);
    for (i, &g) in pred.labels.iter().enumerate() {
        let alpha = cfg.alpha.as_ref().map_or(1.0, |a| a[g]);
        let sg = pred.probs.data()[i * p + g];
        let miss = 1.0 - sg;
        let logp = (sg + cfg.eps).ln();
        value -= alpha * miss.powf(cfg.gamma) * logp;
        let mut d = -alpha * miss.powf(cfg.gamma) / (sg + cfg.eps);
        if cfg.gamma > 0.0 && miss > 0.0 {
            d += alpha * cfg.gamma * miss.powf(cfg.gamma - 1.0) * logp;
        }
        grad.data_mut()[i * p + g] = inv_n * d;
    }
    Ok(LossValue {
        value: value * inv_n,
        grad,
    })
}

/// Mean over N*P of -[t log s + (1 - t) log(1 - s)] on per-class sigmoid
/// scores against one-hot targets.
pub fn bce(scores: &Tensor, targets: &Tensor) -> Result<LossValue> {
    let [n, p] = scores.dims2("bce")?;
    if targets.dims() != scores.dims() {
        return Err(Error::Input(format!(
            "bce: target shape {:?} vs scores {:?}",
            targets.dims(),
            scores.dims()
        )));
    }
    if targets.data().iter().any(|&t| t != 0.0 && t != 1.0) {
        return Err(Error::Input("bce targets must be one-hot 0/1".into()));
    }
    let inv = 1.0 / (n * p) as f64;
    let mut value = 0.0;
    let mut grad = Tensor::zeros(scores.dims());
    for (idx, (&s, &t)) in scores.data().iter().zip(targets.data()).enumerate() {
        value -= t * (s + LOSS_EPS).ln() + (1.0 - t) * (1.0 - s + LOSS_EPS).ln();
        grad.data_mut()[idx] = inv * (-t / (s + LOSS_EPS) + (1.0 - t) / (1.0 - s + LOSS_EPS));
    }
    Ok(LossValue {
        value: value * inv,
        grad,
    })
}

/// One-hot encode labels.
pub fn one_hot(labels: &[usize], classes: usize) -> Result<Tensor> {
    let mut t = Tensor::zeros(&[labels.len(), classes]);
    for (i, &g) in labels.iter().enumerate() {
        if g >= classes {
            return Err(Error::Input(format!("label {g} out of range")));
        }
        t.data_mut()[i * classes + g] = 1.0;
    }
    Ok(t)
}

/// Model head output after the loss-appropriate activation, used both for
/// training and for scoring: softmax rows for CE/focal/CCE, per-class
/// sigmoid for BCE.
pub fn head_scores(logits: &Tensor, kind: LossKind) -> Result<Tensor> {
    match kind {
        LossKind::Bce => Ok(logits.map(sigmoid_scalar)),
        _ => softmax_rows(logits),
    }
}

/// Compose head activation, loss, and the activation's backward rule:
/// returns (loss value, gradient w.r.t. logits, scores).
pub fn apply_to_logits(
    logits: &Tensor,
    labels: &[usize],
    cfg: &LossConfig,
) -> Result<(f64, Tensor, Tensor)> {
    cfg.validate()?;
    let scores = head_scores(logits, cfg.kind)?;
    match cfg.kind {
        LossKind::Bce => {
            let targets = one_hot(labels, cfg.classes)?;
            let lv = bce(&scores, &targets)?;
            let mut dz = lv.grad;
            for (d, &s) in dz.data_mut().iter_mut().zip(scores.data()) {
                *d *= s * (1.0 - s);
            }
            Ok((lv.value, dz, scores))
        }
        kind => {
            let pred = BatchPrediction::new(&scores, labels)?;
            let lv = match kind {
                LossKind::Ce => cross_entropy(&pred),
                LossKind::Focal => focal_loss(&pred, cfg)?,
                LossKind::Cce => cce_total(&pred, cfg)?,
                LossKind::Bce => unreachable!(),
            };
            let dz = softmax_rows_backward(&scores, &lv.grad)?;
            Ok((lv.value, dz, scores))
        }
    }
}
