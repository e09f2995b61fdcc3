use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use sasv::metrics::evaluate;
use sasv::protocol::build_enrollment;
use sasv::rng::SeededRng;
use sasv::scoring::{cm_score, CmClassifier, HeadConfig, MatrixLinear, SasvHead, Stores, Strategy};
use sasv::synth::{generate_corpus, SynthConfig};
use sasv::training::{
    cm_training_set, train_cm_classifier, train_sasv_head, train_two_stage, CmExample, HyperParams,
    SasvTrainData, TrainConfig,
};
use sasv::{EmbeddingStore, Error};

fn toy_cm_set() -> Vec<CmExample> {
    let mut rng = SeededRng::new(3, 0);
    (0..40)
        .map(|i| {
            let bonafide = i % 2 == 0;
            let c = if bonafide { 1.0 } else { -1.0 };
            let e_cm = vec![c + 0.2 * rng.gaussian(), c + 0.2 * rng.gaussian()];
            CmExample {
                id: format!("u{i}"),
                e_cm,
                e_spk: vec![1.0, 0.0],
                bonafide,
            }
        })
        .collect()
}

fn toy_hp() -> HyperParams {
    HyperParams {
        aam_margin: 0.0,
        epochs: 30,
        batch_size: 8,
        ..HyperParams::default()
    }
}

#[test]
fn cm_training_separates_toy_classes() {
    let set = toy_cm_set();
    let out = train_cm_classifier(&set, &toy_hp(), false).unwrap();
    let cos = |a: &[f64], b: &[f64]| sasv::embedding::dot(a, b) / (sasv::embedding::norm(a) * sasv::embedding::norm(b));
    for ex in &set {
        let predicted = cos(&ex.e_cm, &out.clf.w1) > cos(&ex.e_cm, &out.clf.w0);
        assert_eq!(predicted, ex.bonafide, "{}", ex.id);
        let s = cm_score(&ex.e_cm, &out.clf).unwrap();
        assert_eq!(s > 0.0, ex.bonafide, "{} scored {s}", ex.id);
    }
    assert_eq!(out.report.losses.len(), 30);
}

#[test]
fn zero_epochs_return_initialization() {
    let set = toy_cm_set();
    let hp0 = HyperParams { epochs: 0, ..toy_hp() };
    let still = HyperParams { lr: 0.0, epochs: 3, ..toy_hp() };
    let a = train_cm_classifier(&set, &hp0, false).unwrap();
    let b = train_cm_classifier(&set, &still, false).unwrap();
    assert!(a.report.losses.is_empty());
    assert_eq!(a.clf, b.clf);
}

#[test]
fn cm_training_is_bit_reproducible() {
    let set = toy_cm_set();
    let hp = HyperParams { momentum: 0.9, ..toy_hp() };
    let a = train_cm_classifier(&set, &hp, true).unwrap();
    let b = train_cm_classifier(&set, &hp, true).unwrap();
    assert_eq!(a.clf, b.clf);
    assert_eq!(a.assist, b.assist);
    assert_eq!(a.report.losses, b.report.losses);
}

#[test]
fn cm_training_needs_both_classes() {
    let set: Vec<CmExample> = toy_cm_set().into_iter().filter(|e| e.bonafide).collect();
    assert!(matches!(train_cm_classifier(&set, &toy_hp(), false), Err(Error::EmptyClass(_))));
}

#[test]
fn divergence_is_reported_with_epoch() {
    let hp = HyperParams { lr: 1e308, ..toy_hp() };
    let r = train_cm_classifier(&toy_cm_set(), &hp, false);
    assert!(matches!(r, Err(Error::NonFiniteLoss { epoch: 0 })), "{r:?}");
}

struct Fixture {
    corpus: sasv::synth::Corpus,
    enroll: EmbeddingStore,
}

impl Fixture {
    fn new(cfg: SynthConfig) -> Self {
        let corpus = generate_corpus(&cfg).unwrap();
        let enroll = build_enrollment(&corpus.enroll, &corpus.asv).unwrap();
        Self { corpus, enroll }
    }

    fn stores(&self) -> Stores<'_> {
        Stores {
            asv: &self.corpus.asv,
            enroll: &self.enroll,
            cm: &self.corpus.cm,
        }
    }
}

fn small() -> SynthConfig {
    SynthConfig {
        n_speakers: 6,
        utts_per_speaker: 10,
        dim: 8,
        ..SynthConfig::default()
    }
}

fn data_and_clf(f: &Fixture) -> (SasvTrainData, CmClassifier) {
    let policy = Default::default();
    let set = cm_training_set(&f.corpus.trials, &f.stores(), &policy).unwrap();
    let clf = train_cm_classifier(&set, &HyperParams::default(), false).unwrap().clf;
    (SasvTrainData::from_trials(&f.corpus.trials, &f.stores(), &policy, None).unwrap(), clf)
}

#[test]
fn zero_lr_keeps_zero_head_and_constant_loss() {
    let f = Fixture::new(small());
    let (data, clf) = data_and_clf(&f);
    let init = SasvHead::MatrixLinear(MatrixLinear::new([0.0; 4], 0.0, false));
    let hp = HyperParams { lr: 0.0, epochs: 4, ..HyperParams::default() };
    let out = train_sasv_head(&data, &clf, Strategy::MatrixLinear, Some(init.clone()), &HeadConfig::default(), &hp).unwrap();
    assert_eq!(out.head, init);
    let l = &out.report.losses;
    assert!(l.iter().all(|v| (v - l[0]).abs() < 1e-12), "{l:?}");
}

#[test]
fn full_batch_matrix_linear_loss_is_non_increasing() {
    let f = Fixture::new(small());
    let (data, clf) = data_and_clf(&f);
    let hp = HyperParams {
        lr: 0.05,
        epochs: 60,
        batch_size: data.labels.len(),
        ..HyperParams::default()
    };
    let out = train_sasv_head(&data, &clf, Strategy::MatrixLinear, None, &HeadConfig::default(), &hp).unwrap();
    for w in out.report.losses.windows(2) {
        assert!(w[1] <= w[0] + 1e-15, "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn mismatched_initial_head_is_rejected() {
    let f = Fixture::new(small());
    let (data, clf) = data_and_clf(&f);
    let init = SasvHead::MatrixLinear(MatrixLinear::new([0.0; 4], 0.0, false));
    let r = train_sasv_head(&data, &clf, Strategy::Attention, Some(init), &HeadConfig::default(), &HyperParams::default());
    assert!(matches!(r, Err(Error::UnsupportedStrategy(_))));
}

fn fingerprint(clf: &CmClassifier, stores: &Stores<'_>) -> u64 {
    let mut h = DefaultHasher::new();
    for v in clf.w0.iter().chain(&clf.w1) {
        v.to_bits().hash(&mut h);
    }
    for store in [stores.asv, stores.enroll, stores.cm] {
        for (id, v) in store.iter() {
            id.hash(&mut h);
            v.iter().for_each(|x| x.to_bits().hash(&mut h));
        }
    }
    h.finish()
}

#[test]
fn stage_two_leaves_cm_branch_and_stores_untouched() {
    let f = Fixture::new(small());
    let (data, clf) = data_and_clf(&f);
    let before = fingerprint(&clf, &f.stores());
    for st in [Strategy::MatrixLinear, Strategy::Conv, Strategy::Attention] {
        let hp = HyperParams { epochs: 2, ..HyperParams::default() };
        let out = train_sasv_head(&data, &clf, st, None, &HeadConfig { hidden: vec![8], ..HeadConfig::default() }, &hp).unwrap();
        assert_eq!(out.clf, clf);
    }
    assert_eq!(fingerprint(&clf, &f.stores()), before);
}

#[test]
fn parameter_free_heads_skip_training() {
    let f = Fixture::new(small());
    let (data, clf) = data_and_clf(&f);
    for st in [Strategy::ProbProduct, Strategy::ScoreSum] {
        let out = train_sasv_head(&data, &clf, st, None, &HeadConfig::default(), &HyperParams::default()).unwrap();
        assert_eq!(out.report.epochs, 0);
        assert!(out.report.losses.is_empty());
    }
}

#[test]
fn matrix_linear_separates_separable_corpus() {
    let f = Fixture::new(SynthConfig {
        within_std: 0.0,
        cm_gap: 20.0,
        ..small()
    });
    let out = train_two_stage(&f.corpus.trials, &f.stores(), &TrainConfig::default()).unwrap();
    let scores = out.model.score_trials(&f.corpus.trials, &f.stores()).unwrap();
    let r = evaluate(&f.corpus.trials, &scores, None, false).unwrap();
    assert_eq!(r.sasv.eer, 0.0);
}

#[test]
fn joint_and_assist_modes_train() {
    let f = Fixture::new(small());
    let cfg = TrainConfig {
        assist: true,
        joint: true,
        head_hp: HyperParams { epochs: 5, ..HyperParams::default() },
        ..TrainConfig::default()
    };
    let out = train_two_stage(&f.corpus.trials, &f.stores(), &cfg).unwrap();
    assert!(out.model.assist.is_some());
    assert!(out.head_report.losses.iter().all(|l| l.is_finite()));
    let json = out.model.to_json().unwrap();
    assert_eq!(sasv::SasvModel::from_json(&json).unwrap(), out.model);
}
