//! Deterministic synthetic SASV corpus.
//!
//! Speaker means are uniform on the unit sphere. Every utterance's ASV
//! embedding is `normalize(mean + N(0, within_std² I))`; spoofed utterances
//! reuse the claimed speaker's mean, so they look like the target in ASV
//! space. CM embeddings carry the bona fide / spoof signal on the first
//! coordinate only: `N(±cm_gap/2 · cm_std, cm_std²)` there and
//! `N(0, cm_std²)` elsewhere.
//!
//! Trials pair every enrolled speaker with every bona fide test utterance
//! (target or nontarget) and with the spoofed utterances that claim that
//! speaker. When `max_trials` is exceeded a seeded subset is kept, in
//! enumeration order.

use indexmap::{IndexMap, IndexSet};

use crate::embedding::{l2_normalize, EmbeddingStore};
use crate::error::{Error, Result};
use crate::protocol::{EnrollmentMap, TrialLabel, TrialRecord};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_speakers: usize,
    pub utts_per_speaker: usize,
    /// Bona fide enrollment utterances per speaker, separate from test ones.
    pub enroll_utts: usize,
    pub spoof_fraction: f64,
    pub dim: usize,
    pub within_std: f64,
    pub cm_gap: f64,
    pub cm_std: f64,
    pub seed: u64,
    /// 0 disables the cap.
    pub max_trials: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_speakers: 20,
            utts_per_speaker: 30,
            enroll_utts: 5,
            spoof_fraction: 0.5,
            dim: 16,
            within_std: 0.3,
            cm_gap: 3.0,
            cm_std: 1.0,
            seed: 42,
            max_trials: 100_000,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = |x: f64| x.is_finite();
        if self.n_speakers < 2 {
            return Err(Error::ConfigInvalid("n_speakers"));
        }
        if self.utts_per_speaker < 1 {
            return Err(Error::ConfigInvalid("utts_per_speaker"));
        }
        if self.enroll_utts < 1 {
            return Err(Error::ConfigInvalid("enroll_utts"));
        }
        if !(finite(self.spoof_fraction) && (0.0..=1.0).contains(&self.spoof_fraction)) {
            return Err(Error::ConfigInvalid("spoof_fraction"));
        }
        if self.dim < 1 {
            return Err(Error::ConfigInvalid("dim"));
        }
        if !(finite(self.within_std) && self.within_std >= 0.0) {
            return Err(Error::ConfigInvalid("within_std"));
        }
        if !(finite(self.cm_gap) && self.cm_gap >= 0.0) {
            return Err(Error::ConfigInvalid("cm_gap"));
        }
        if !(finite(self.cm_std) && self.cm_std > 0.0) {
            return Err(Error::ConfigInvalid("cm_std"));
        }
        Ok(())
    }

    /// Spoofed test utterances per speaker.
    pub fn spoofs_per_speaker(&self) -> usize {
        (self.spoof_fraction * self.utts_per_speaker as f64).round() as usize
    }
}

/// A generated corpus together with the ground truth used to build it.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub asv: EmbeddingStore,
    pub cm: EmbeddingStore,
    pub trials: Vec<TrialRecord>,
    pub enroll: EnrollmentMap,
    pub spoofed: IndexSet<String>,
    /// Utterance id → index of its (claimed) speaker.
    pub utt_speaker: IndexMap<String, usize>,
    pub speaker_means: Vec<Vec<f64>>,
}

pub fn speaker_id(k: usize) -> String {
    format!("spk{k:03}")
}

pub fn generate_corpus(cfg: &SynthConfig) -> Result<Corpus> {
    cfg.validate()?;
    let mut rng = SeededRng::new(cfg.seed, 0);
    let dim = cfg.dim;

    let mut speaker_means = Vec::with_capacity(cfg.n_speakers);
    while speaker_means.len() < cfg.n_speakers {
        let v: Vec<f64> = (0..dim).map(|_| rng.gaussian()).collect();
        // redraw the (measure-zero) degenerate draw rather than fail
        if let Ok(u) = l2_normalize(&v) {
            speaker_means.push(u);
        }
    }

    let mut asv = EmbeddingStore::new(dim)?;
    let mut cm = EmbeddingStore::new(dim)?;
    let mut enroll = EnrollmentMap::default();
    let mut spoofed = IndexSet::new();
    let mut utt_speaker = IndexMap::new();
    let mut test_utts: Vec<(String, usize, bool)> = Vec::new();
    let n_spoof = cfg.spoofs_per_speaker();

    let utterance = |rng: &mut SeededRng, k: usize, spoof: bool| -> Result<(Vec<f64>, Vec<f64>)> {
        let mean = &speaker_means[k];
        let noisy: Vec<f64> = mean
            .iter()
            .map(|m| m + cfg.within_std * rng.gaussian())
            .collect();
        let a = l2_normalize(&noisy)?;
        let sign = if spoof { -1.0 } else { 1.0 };
        let mut c: Vec<f64> = (0..dim).map(|_| cfg.cm_std * rng.gaussian()).collect();
        c[0] += sign * 0.5 * cfg.cm_gap * cfg.cm_std;
        Ok((a, c))
    };

    for k in 0..cfg.n_speakers {
        let spk = speaker_id(k);
        let mut enr = Vec::with_capacity(cfg.enroll_utts);
        for j in 0..cfg.enroll_utts {
            let id = format!("{spk}_enr{j:02}");
            let (a, c) = utterance(&mut rng, k, false)?;
            asv.insert(id.clone(), a)?;
            cm.insert(id.clone(), c)?;
            utt_speaker.insert(id.clone(), k);
            enr.push(id);
        }
        enroll.models.insert(spk.clone(), enr);
        for j in 0..cfg.utts_per_speaker {
            let spoof = j >= cfg.utts_per_speaker - n_spoof;
            let id = format!("{spk}_t{j:03}");
            let (a, c) = utterance(&mut rng, k, spoof)?;
            asv.insert(id.clone(), a)?;
            cm.insert(id.clone(), c)?;
            utt_speaker.insert(id.clone(), k);
            if spoof {
                spoofed.insert(id.clone());
            }
            test_utts.push((id, k, spoof));
        }
    }

    let mut trials = Vec::new();
    for k in 0..cfg.n_speakers {
        let model = speaker_id(k);
        for (utt, spk, spoof) in &test_utts {
            let label = match (*spoof, *spk == k) {
                (false, true) => TrialLabel::Target,
                (false, false) => TrialLabel::Nontarget,
                (true, true) => TrialLabel::Spoof,
                (true, false) => continue,
            };
            trials.push(TrialRecord::new(model.clone(), utt.clone(), Some(label)));
        }
    }

    if cfg.max_trials > 0 && trials.len() > cfg.max_trials {
        let mut idx: Vec<usize> = (0..trials.len()).collect();
        rng.shuffle(&mut idx);
        idx.truncate(cfg.max_trials);
        idx.sort_unstable();
        trials = idx.into_iter().map(|i| trials[i].clone()).collect();
    }

    Ok(Corpus {
        asv,
        cm,
        trials,
        enroll,
        spoofed,
        utt_speaker,
        speaker_means,
    })
}
