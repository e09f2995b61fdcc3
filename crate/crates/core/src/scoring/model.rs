//! The serialized SASV model and trial scoring.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CmClassifier, SasvHead, ScoreRecord, Strategy, TrialInput};
use crate::embedding::{check_dim, dot, l2_normalize, EmbeddingStore};
use crate::error::{Error, Result};
use crate::protocol::TrialRecord;
use crate::training::AssistLayer;

pub const MODEL_VERSION: u32 = 1;
pub const FLATTEN_ORDER: &str = "row-major";

/// Which embeddings are L2-normalized before scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormPolicy {
    pub normalize_asv: bool,
    pub normalize_cm: bool,
}

impl Default for NormPolicy {
    fn default() -> Self {
        Self {
            normalize_asv: true,
            normalize_cm: false,
        }
    }
}

impl NormPolicy {
    fn asv(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.normalize_asv {
            l2_normalize(v)
        } else {
            Ok(v.to_vec())
        }
    }

    fn cm(&self, v: Vec<f64>) -> Result<Vec<f64>> {
        if self.normalize_cm {
            l2_normalize(&v)
        } else {
            Ok(v)
        }
    }

    /// Applies the policy, running the CM embedding through the assist layer
    /// (with the policy-normalized test embedding as speaker input) first.
    pub fn prepare(
        &self,
        e_test: &[f64],
        e_en: &[f64],
        e_cm: &[f64],
        assist: Option<&AssistLayer>,
    ) -> Result<TrialInput> {
        let e_test = self.asv(e_test)?;
        let e_en = self.asv(e_en)?;
        let e_cm = match assist {
            Some(a) => a.apply(e_cm, &e_test)?,
            None => e_cm.to_vec(),
        };
        Ok(TrialInput {
            e_test,
            e_en,
            e_cm: self.cm(e_cm)?,
        })
    }
}

/// The three embedding sources a trial draws from.
#[derive(Debug, Clone, Copy)]
pub struct Stores<'a> {
    /// Test-utterance ASV embeddings.
    pub asv: &'a EmbeddingStore,
    /// Enrollment model embeddings, keyed by model id.
    pub enroll: &'a EmbeddingStore,
    /// Test-utterance CM embeddings.
    pub cm: &'a EmbeddingStore,
}

impl<'a> Stores<'a> {
    pub fn dim(&self) -> Result<usize> {
        let d = self.asv.dim();
        check_dim(d, self.enroll.dim())?;
        check_dim(d, self.cm.dim())?;
        Ok(d)
    }

    pub fn input(
        &self,
        trial: &TrialRecord,
        policy: &NormPolicy,
        assist: Option<&AssistLayer>,
    ) -> Result<TrialInput> {
        policy.prepare(
            self.asv.require(&trial.test_utt)?,
            self.enroll.require(&trial.enroll_model)?,
            self.cm.require(&trial.test_utt)?,
            assist,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SasvModel {
    pub version: u32,
    pub strategy: Strategy,
    pub dim: usize,
    pub normalization: NormPolicy,
    pub flatten_order: String,
    pub clf: CmClassifier,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assist: Option<AssistLayer>,
    pub head: SasvHead,
}

impl SasvModel {
    pub fn new(
        clf: CmClassifier,
        assist: Option<AssistLayer>,
        head: SasvHead,
        normalization: NormPolicy,
    ) -> Result<Self> {
        let dim = clf.dim();
        head.check(dim)?;
        if let Some(a) = &assist {
            check_dim(dim, a.dim)?;
        }
        Ok(Self {
            version: MODEL_VERSION,
            strategy: head.strategy(),
            dim,
            normalization,
            flatten_order: FLATTEN_ORDER.to_string(),
            clf,
            assist,
            head,
        })
    }

    pub fn input(&self, trial: &TrialRecord, stores: &Stores<'_>) -> Result<TrialInput> {
        stores.input(trial, &self.normalization, self.assist.as_ref())
    }

    pub fn score_trial(&self, trial: &TrialRecord, stores: &Stores<'_>) -> Result<f64> {
        self.head.score(&self.input(trial, stores)?, &self.clf)
    }

    /// Scores every trial; records come back in trial order.
    pub fn score_trials(&self, trials: &[TrialRecord], stores: &Stores<'_>) -> Result<Vec<ScoreRecord>> {
        check_dim(self.dim, stores.dim()?)?;
        trials
            .par_iter()
            .map(|t| {
                let s = self.score_trial(t, stores)?;
                Ok(ScoreRecord::new(&t.enroll_model, &t.test_utt, s))
            })
            .collect()
    }

    /// Per-trial branch scores `(S_SV, S_CM)` under this model's policy.
    pub fn branch_scores(
        &self,
        trials: &[TrialRecord],
        stores: &Stores<'_>,
    ) -> Result<(Vec<ScoreRecord>, Vec<ScoreRecord>)> {
        let w = self.clf.scoring_vector();
        let pairs: Vec<(ScoreRecord, ScoreRecord)> = trials
            .par_iter()
            .map(|t| {
                let x = self.input(t, stores)?;
                Ok((
                    ScoreRecord::new(&t.enroll_model, &t.test_utt, dot(&x.e_test, &x.e_en)),
                    ScoreRecord::new(&t.enroll_model, &t.test_utt, dot(&x.e_cm, &w)),
                ))
            })
            .collect::<Result<_>>()?;
        Ok(pairs.into_iter().unzip())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: SasvModel = serde_json::from_str(text)?;
        if m.version != MODEL_VERSION {
            return Err(Error::UnsupportedVersion(m.version));
        }
        if m.flatten_order != FLATTEN_ORDER {
            return Err(Error::DomainError(format!("unknown flatten order '{}'", m.flatten_order)));
        }
        check_dim(m.dim, m.clf.dim())?;
        m.head.check(m.dim)?;
        if m.head.strategy() != m.strategy {
            return Err(Error::UnsupportedStrategy(format!(
                "model declares {} but carries a {} head",
                m.strategy,
                m.head.strategy()
            )));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()? + "\n").map_err(|e| Error::from(e).in_file(path))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
        Self::from_json(&text).map_err(|e| e.in_file(path))
    }
}
