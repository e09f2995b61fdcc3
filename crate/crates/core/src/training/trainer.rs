use std::time::Instant;

use indexmap::IndexMap;

use super::{aam_softmax_grad, orthogonality_grad, weighted_bce_logit, AssistLayer, HyperParams, TrainReport};
use crate::embedding::dot;
use crate::error::{Error, Result};
use crate::protocol::{TrialLabel, TrialRecord};
use crate::rng::SeededRng;
use crate::scoring::{
    CmClassifier, HeadConfig, NormPolicy, SasvHead, SasvModel, ScoreSumHead, Stores, Strategy,
    TrialInput,
};

/// ChaCha stream ids, one per training stage.
const CM_STREAM: u64 = 1;
const HEAD_STREAM: u64 = 2;

/// One labeled CM training example.
#[derive(Debug, Clone, PartialEq)]
pub struct CmExample {
    pub id: String,
    pub e_cm: Vec<f64>,
    /// Speaker embedding fed to the assist layer.
    pub e_spk: Vec<f64>,
    pub bonafide: bool,
}

/// Distinct test utterances of a labeled trial list; an utterance is spoofed
/// when any trial labels it so.
pub fn cm_training_set(trials: &[TrialRecord], stores: &Stores<'_>, policy: &NormPolicy) -> Result<Vec<CmExample>> {
    let mut spoofed: IndexMap<&str, bool> = IndexMap::new();
    for t in trials {
        let spoof = t.require_label()? == TrialLabel::Spoof;
        *spoofed.entry(t.test_utt.as_str()).or_insert(false) |= spoof;
    }
    spoofed
        .into_iter()
        .map(|(utt, spoof)| {
            let asv = stores.asv.require(utt)?;
            let e_spk = if policy.normalize_asv {
                crate::embedding::l2_normalize(asv)?
            } else {
                asv.to_vec()
            };
            Ok(CmExample {
                id: utt.to_string(),
                e_cm: stores.cm.require(utt)?.to_vec(),
                e_spk,
                bonafide: !spoof,
            })
        })
        .collect()
}

/// Mini-batch gradient descent with optional momentum. `batch` returns the
/// mean loss and mean gradient over the given example indices.
fn descend<F>(n: usize, hp: &HyperParams, stream: u64, params: &mut [f64], mut batch: F) -> Result<Vec<f64>>
where
    F: FnMut(&[f64], &[usize]) -> Result<(f64, Vec<f64>)>,
{
    let mut rng = SeededRng::new(hp.seed, stream);
    let mut order: Vec<usize> = (0..n).collect();
    let mut velocity = vec![0.0; params.len()];
    let mut losses = Vec::with_capacity(hp.epochs);
    for epoch in 0..hp.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(hp.batch_size) {
            let (loss, grad) = batch(params, chunk)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch });
            }
            total += loss * chunk.len() as f64;
            for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = hp.momentum * *v + g;
                *p -= hp.lr * *v;
            }
        }
        let mean = total / n as f64;
        if !mean.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        losses.push(mean);
    }
    Ok(losses)
}

#[derive(Debug, Clone)]
pub struct CmTrainOutput {
    pub clf: CmClassifier,
    pub assist: Option<AssistLayer>,
    pub report: TrainReport,
}

/// Stage 1: minimizes mean AAM-softmax loss plus `orth_lambda` times the
/// orthogonality penalty over `(w0, w1)` and, with `assist`, the assist
/// layer (initialized to the identity).
pub fn train_cm_classifier(examples: &[CmExample], hp: &HyperParams, assist: bool) -> Result<CmTrainOutput> {
    hp.validate()?;
    if !examples.iter().any(|e| e.bonafide) {
        return Err(Error::EmptyClass("bonafide"));
    }
    if !examples.iter().any(|e| !e.bonafide) {
        return Err(Error::EmptyClass("spoof"));
    }
    let dim = examples[0].e_cm.len();
    for e in examples {
        crate::embedding::check_dim(dim, e.e_cm.len())?;
        crate::embedding::check_dim(dim, e.e_spk.len())?;
    }
    let start = Instant::now();
    let mut init = SeededRng::new(hp.seed, CM_STREAM);
    let a = 1.0 / (dim as f64).sqrt();
    let w0: Vec<f64> = (0..dim).map(|_| init.symmetric(a)).collect();
    let w1: Vec<f64> = (0..dim).map(|_| init.symmetric(a)).collect();
    let mut layer = assist.then(|| AssistLayer::identity(dim));

    let mut params = w0;
    params.extend(w1);
    if let Some(l) = &layer {
        params.extend(l.params());
    }

    let losses = descend(examples.len(), hp, CM_STREAM + 100, &mut params, |p, idx| {
        let clf = CmClassifier {
            w0: p[..dim].to_vec(),
            w1: p[dim..2 * dim].to_vec(),
        };
        let lay = match &layer {
            Some(l) => {
                let mut l = l.clone();
                l.set_params(&p[2 * dim..])?;
                Some(l)
            }
            None => None,
        };
        let mut grad = vec![0.0; p.len()];
        let mut loss = 0.0;
        for &i in idx {
            let ex = &examples[i];
            let e = match &lay {
                Some(l) => l.apply(&ex.e_cm, &ex.e_spk)?,
                None => ex.e_cm.clone(),
            };
            let g = aam_softmax_grad(&e, &clf, ex.bonafide as usize, hp.aam_margin, hp.aam_scale)?;
            loss += g.loss;
            for (k, v) in g.w0.iter().chain(&g.w1).enumerate() {
                grad[k] += v;
            }
            if let Some(l) = &lay {
                for (k, v) in l.backward(&ex.e_cm, &ex.e_spk, &g.e).iter().enumerate() {
                    grad[2 * dim + k] += v;
                }
            }
        }
        let n = idx.len() as f64;
        loss /= n;
        grad.iter_mut().for_each(|g| *g /= n);
        if hp.orth_lambda > 0.0 {
            let (pen, g0, g1) = orthogonality_grad(&clf)?;
            loss += hp.orth_lambda * pen;
            for (k, v) in g0.iter().chain(&g1).enumerate() {
                grad[k] += hp.orth_lambda * v;
            }
        }
        Ok((loss, grad))
    })?;

    let clf = CmClassifier::new(params[..dim].to_vec(), params[dim..2 * dim].to_vec())?;
    if let Some(l) = layer.as_mut() {
        l.set_params(&params[2 * dim..])?;
    }
    Ok(CmTrainOutput {
        clf,
        assist: layer,
        report: TrainReport {
            epochs: losses.len(),
            losses,
            seed: hp.seed,
            wall_time_secs: start.elapsed().as_secs_f64(),
            final_params: params,
        },
    })
}

/// Prepared stage-2 inputs: one `TrialInput` and binary label per trial.
#[derive(Debug, Clone)]
pub struct SasvTrainData {
    pub inputs: Vec<TrialInput>,
    pub labels: Vec<bool>,
}

impl SasvTrainData {
    pub fn from_trials(
        trials: &[TrialRecord],
        stores: &Stores<'_>,
        policy: &NormPolicy,
        assist: Option<&AssistLayer>,
    ) -> Result<Self> {
        let mut inputs = Vec::with_capacity(trials.len());
        let mut labels = Vec::with_capacity(trials.len());
        for t in trials {
            labels.push(t.require_label()?.is_positive());
            inputs.push(stores.input(t, policy, assist)?);
        }
        Ok(Self { inputs, labels })
    }

    fn check_classes(&self) -> Result<()> {
        if !self.labels.iter().any(|&y| y) {
            return Err(Error::EmptyClass("target"));
        }
        if !self.labels.iter().any(|&y| !y) {
            return Err(Error::EmptyClass("nontarget/spoof"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct HeadTrainOutput {
    pub head: SasvHead,
    pub clf: CmClassifier,
    pub report: TrainReport,
}

fn init_head(
    data: &SasvTrainData,
    clf: &CmClassifier,
    strategy: Strategy,
    init: Option<SasvHead>,
    cfg: &HeadConfig,
    hp: &HyperParams,
) -> Result<SasvHead> {
    hp.validate()?;
    data.check_classes()?;
    let head = match init {
        Some(h) if h.strategy() != strategy => {
            return Err(Error::UnsupportedStrategy(format!(
                "requested {strategy} but initial parameters are for {}",
                h.strategy()
            )))
        }
        Some(h) => h,
        None => SasvHead::init(strategy, clf.dim(), cfg, &mut SeededRng::new(hp.seed, HEAD_STREAM))?,
    };
    head.check(clf.dim())?;
    Ok(match head {
        SasvHead::ScoreSum(_) if cfg.score_sum_minmax => {
            let w = clf.scoring_vector();
            let mut r = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
            for x in &data.inputs {
                let (sv, cm) = (dot(&x.e_test, &x.e_en), dot(&x.e_cm, &w));
                r = [r[0].min(sv), r[1].max(sv), r[2].min(cm), r[3].max(cm)];
            }
            SasvHead::ScoreSum(ScoreSumHead { minmax: Some(r) })
        }
        h => h,
    })
}

fn run_head(
    data: &SasvTrainData,
    clf: &CmClassifier,
    mut head: SasvHead,
    hp: &HyperParams,
    joint: bool,
) -> Result<HeadTrainOutput> {
    let start = Instant::now();
    if !head.is_trainable() {
        return Ok(HeadTrainOutput {
            head,
            clf: clf.clone(),
            report: TrainReport {
                losses: Vec::new(),
                epochs: 0,
                seed: hp.seed,
                wall_time_secs: start.elapsed().as_secs_f64(),
                final_params: Vec::new(),
            },
        });
    }
    let dim = clf.dim();
    let n_head = head.n_params();
    let mut params = head.params();
    if joint {
        params.extend(&clf.w0);
        params.extend(&clf.w1);
    }
    let mut work_clf = clf.clone();
    let losses = descend(data.inputs.len(), hp, HEAD_STREAM + 100, &mut params, |p, idx| {
        head.set_params(&p[..n_head])?;
        if joint {
            work_clf.w0.copy_from_slice(&p[n_head..n_head + dim]);
            work_clf.w1.copy_from_slice(&p[n_head + dim..]);
        }
        let mut grad = vec![0.0; p.len()];
        let mut loss = 0.0;
        for &i in idx {
            let g = head.grad(&data.inputs[i], &work_clf)?;
            let (l, dz) = weighted_bce_logit(g.logit, data.labels[i], hp.bce_weights, hp.prob_epsilon);
            loss += l;
            for (acc, v) in grad.iter_mut().zip(&g.params) {
                *acc += dz * v;
            }
            if joint {
                for (acc, v) in grad[n_head..].iter_mut().zip(g.w0.iter().chain(&g.w1)) {
                    *acc += dz * v;
                }
            }
        }
        let n = idx.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        Ok((loss / n, grad))
    })?;
    head.set_params(&params[..n_head])?;
    let clf = if joint {
        CmClassifier::new(params[n_head..n_head + dim].to_vec(), params[n_head + dim..].to_vec())?
    } else {
        clf.clone()
    };
    Ok(HeadTrainOutput {
        head,
        clf,
        report: TrainReport {
            epochs: losses.len(),
            losses,
            seed: hp.seed,
            wall_time_secs: start.elapsed().as_secs_f64(),
            final_params: params,
        },
    })
}

/// Stage 2: fits the head on mean weighted BCE of `σ(logit)` with the CM
/// classifier frozen. Parameter-free strategies return immediately.
pub fn train_sasv_head(
    data: &SasvTrainData,
    clf: &CmClassifier,
    strategy: Strategy,
    init: Option<SasvHead>,
    cfg: &HeadConfig,
    hp: &HyperParams,
) -> Result<HeadTrainOutput> {
    let head = init_head(data, clf, strategy, init, cfg, hp)?;
    run_head(data, clf, head, hp, false)
}

/// Like [`train_sasv_head`], but also updates `(w0, w1)` through the head's
/// BCE gradient. The assist layer stays fixed.
pub fn train_joint(
    data: &SasvTrainData,
    clf: &CmClassifier,
    strategy: Strategy,
    cfg: &HeadConfig,
    hp: &HyperParams,
) -> Result<HeadTrainOutput> {
    let head = init_head(data, clf, strategy, None, cfg, hp)?;
    run_head(data, clf, head, hp, true)
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub strategy: Strategy,
    pub head: HeadConfig,
    pub policy: NormPolicy,
    pub cm_hp: HyperParams,
    pub head_hp: HyperParams,
    pub assist: bool,
    pub joint: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::MatrixLinear,
            head: HeadConfig::default(),
            policy: NormPolicy::default(),
            cm_hp: HyperParams::default(),
            head_hp: HyperParams {
                lr: 0.5,
                epochs: 200,
                momentum: 0.9,
                ..HyperParams::default()
            },
            assist: false,
            joint: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: SasvModel,
    pub cm_report: TrainReport,
    pub head_report: TrainReport,
}

/// Stage 1 on the distinct test utterances of `trials`, then stage 2 on the
/// trials themselves.
pub fn train_two_stage(trials: &[TrialRecord], stores: &Stores<'_>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    stores.dim()?;
    let cm_set = cm_training_set(trials, stores, &cfg.policy)?;
    let cm = train_cm_classifier(&cm_set, &cfg.cm_hp, cfg.assist)?;
    let data = SasvTrainData::from_trials(trials, stores, &cfg.policy, cm.assist.as_ref())?;
    let head = if cfg.joint {
        train_joint(&data, &cm.clf, cfg.strategy, &cfg.head, &cfg.head_hp)?
    } else {
        train_sasv_head(&data, &cm.clf, cfg.strategy, None, &cfg.head, &cfg.head_hp)?
    };
    let model = SasvModel::new(head.clf, cm.assist, head.head, cfg.policy)?;
    Ok(TrainOutcome {
        model,
        cm_report: cm.report,
        head_report: head.report,
    })
}
