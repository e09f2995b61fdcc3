//! Losses, analytic gradients and the two-stage trainer.
//!
//! Stage 1 fits the CM classifier rows `(w0, w1)` (and optionally the
//! speaker-assist layer) with an additive-angular-margin softmax loss.
//! Stage 2 freezes them and fits the SASV head with weighted binary
//! cross-entropy on trial labels (target = 1, nontarget and spoof = 0).

mod assist;
mod trainer;

pub use assist::{assist_transform, AssistLayer};
pub use trainer::{
    cm_training_set, train_cm_classifier, train_joint, train_sasv_head, train_two_stage,
    CmExample, CmTrainOutput, HeadTrainOutput, SasvTrainData, TrainConfig, TrainOutcome,
};

use serde::{Deserialize, Serialize};

use crate::embedding::{dot, norm, ZERO_NORM};
use crate::error::{Error, Result};
use crate::scoring::{sigmoid, CmClassifier};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// 0 gives plain gradient descent.
    pub momentum: f64,
    /// `(w_neg, w_pos)`; `w_pos` weights target trials.
    pub bce_weights: (f64, f64),
    pub aam_margin: f64,
    pub aam_scale: f64,
    pub orth_lambda: f64,
    pub prob_epsilon: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            lr: 0.1,
            epochs: 50,
            batch_size: 64,
            seed: 42,
            momentum: 0.0,
            bce_weights: (0.1, 0.9),
            aam_margin: 0.2,
            aam_scale: 30.0,
            orth_lambda: 0.0,
            prob_epsilon: 1e-7,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let (wn, wp) = self.bce_weights;
        let checks: [(bool, &'static str); 8] = [
            (self.lr.is_finite() && self.lr >= 0.0, "lr"),
            (self.batch_size >= 1, "batch_size"),
            ((0.0..1.0).contains(&self.momentum), "momentum"),
            (wn > 0.0 && wn < 1.0 && wp > 0.0 && wp < 1.0, "bce_weights"),
            (self.aam_margin.is_finite() && self.aam_margin >= 0.0, "aam_margin"),
            (self.aam_scale.is_finite() && self.aam_scale > 0.0, "aam_scale"),
            (self.orth_lambda.is_finite() && self.orth_lambda >= 0.0, "orth_lambda"),
            (self.prob_epsilon > 0.0 && self.prob_epsilon < 0.5, "prob_epsilon"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, field)) => Err(Error::ConfigInvalid(field)),
            None => Ok(()),
        }
    }
}

/// Per-run training summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss of each epoch.
    pub losses: Vec<f64>,
    pub epochs: usize,
    pub seed: u64,
    pub wall_time_secs: f64,
    pub final_params: Vec<f64>,
}

/// `−(w_pos·y·ln p + w_neg·(1−y)·ln(1−p))` with `p` clamped to `[ε, 1−ε]`.
pub fn weighted_bce(p: f64, y: bool, weights: (f64, f64), eps: f64) -> f64 {
    let p = p.clamp(eps, 1.0 - eps);
    let (w_neg, w_pos) = weights;
    if y {
        -w_pos * p.ln()
    } else {
        -w_neg * (1.0 - p).ln()
    }
}

/// Weighted BCE of `σ(logit)` and its derivative with respect to the logit.
/// Inside the clamp region the derivative is zero.
pub fn weighted_bce_logit(logit: f64, y: bool, weights: (f64, f64), eps: f64) -> (f64, f64) {
    let p = sigmoid(logit);
    let loss = weighted_bce(p, y, weights, eps);
    let clamped = p < eps || p > 1.0 - eps;
    let d = match (clamped, y) {
        (true, _) => 0.0,
        (false, true) => -weights.1 * (1.0 - p),
        (false, false) => weights.0 * p,
    };
    (loss, d)
}

fn cos_and_grads(e: &[f64], w: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let (ne, nw) = (norm(e), norm(w));
    if ne < ZERO_NORM || nw < ZERO_NORM {
        return Err(Error::ZeroVector);
    }
    if !(ne * nw).is_finite() {
        // overflowed norms: propagate NaN so training reports divergence
        let nan = vec![f64::NAN; e.len()];
        return Ok((f64::NAN, nan.clone(), nan));
    }
    let c = dot(e, w) / (ne * nw);
    let de = e
        .iter()
        .zip(w)
        .map(|(ei, wi)| wi / (ne * nw) - c * ei / (ne * ne))
        .collect();
    let dw = e
        .iter()
        .zip(w)
        .map(|(ei, wi)| ei / (ne * nw) - c * wi / (nw * nw))
        .collect();
    Ok((c, de, dw))
}

/// AAM-softmax loss with gradients for one example.
#[derive(Debug, Clone, PartialEq)]
pub struct AamGrad {
    pub loss: f64,
    pub e: Vec<f64>,
    pub w0: Vec<f64>,
    pub w1: Vec<f64>,
}

/// Two-class additive angular margin softmax; `class` 1 is bona fide.
pub fn aam_softmax_grad(e: &[f64], clf: &CmClassifier, class: usize, m: f64, s: f64) -> Result<AamGrad> {
    if class > 1 {
        return Err(Error::DomainError(format!("class {class} not in {{0, 1}}")));
    }
    crate::embedding::check_dim(clf.dim(), e.len())?;
    let (c0, de0, dw0) = cos_and_grads(e, &clf.w0)?;
    let (c1, de1, dw1) = cos_and_grads(e, &clf.w1)?;
    let (ct, co) = if class == 1 { (c1, c0) } else { (c0, c1) };
    let sin_t = (1.0 - ct * ct).max(0.0).sqrt();
    let z_t = s * (ct * m.cos() - sin_t * m.sin());
    let z_o = s * co;
    // loss = softplus(z_o − z_t), kept accurate when the softmax saturates
    let d = z_o - z_t;
    let loss = if d > 0.0 { d + (-d).exp().ln_1p() } else { d.exp().ln_1p() };
    let p_o = sigmoid(d);
    let dz_t_dc = if sin_t > ZERO_NORM {
        s * (m.cos() + ct / sin_t * m.sin())
    } else {
        s * m.cos()
    };
    let g_t = -p_o * dz_t_dc;
    let g_o = p_o * s;
    let (g0, g1) = if class == 1 { (g_o, g_t) } else { (g_t, g_o) };
    Ok(AamGrad {
        loss,
        e: de0.iter().zip(&de1).map(|(a, b)| g0 * a + g1 * b).collect(),
        w0: dw0.iter().map(|x| g0 * x).collect(),
        w1: dw1.iter().map(|x| g1 * x).collect(),
    })
}

pub fn aam_softmax_loss(e: &[f64], clf: &CmClassifier, class: usize, m: f64, s: f64) -> Result<f64> {
    Ok(aam_softmax_grad(e, clf, class, m, s)?.loss)
}

/// Squared cosine between the two CM weight rows, with gradients.
pub fn orthogonality_grad(clf: &CmClassifier) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let (c, d0, d1) = cos_and_grads(&clf.w0, &clf.w1)?;
    Ok((
        c * c,
        d0.iter().map(|x| 2.0 * c * x).collect(),
        d1.iter().map(|x| 2.0 * c * x).collect(),
    ))
}

pub fn orthogonality_penalty(clf: &CmClassifier) -> Result<f64> {
    Ok(orthogonality_grad(clf)?.0)
}

/// Central differences `(f(x + h eᵢ) − f(x − h eᵢ)) / 2h`.
pub fn finite_diff_gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let dn = f(&probe);
            probe[i] = x[i];
            (up - dn) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, 0 when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}
