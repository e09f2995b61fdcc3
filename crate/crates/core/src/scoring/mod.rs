//! Integrated scoring: the 2×2 score matrix built from ASV and CM
//! embeddings, its sigmoid probability matrix, the sum-and-product matrix
//! `J = P + Pᵀ + P·P`, the trainable scoring heads, and score-level fusion.

mod files;
mod heads;
mod model;

pub use files::{format_scores, parse_scores, read_scores, write_scores, ScoreRecord};
pub use heads::{
    attention_gate, concat_score, conv_score, diag_zero_score, matrix_linear_score,
    AttentionHead, ConcatHead, ConvHead, Dense, HeadConfig, HeadGrad, MatrixLinear, SasvHead,
    ScoreSumHead, Strategy, TrialInput,
};
pub use model::{NormPolicy, SasvModel, Stores, MODEL_VERSION};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::embedding::{check_dim, dot, l2_normalize};
use crate::error::{Error, Result};

/// The two rows of the CM's final linear layer. Class 1 is bona fide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmClassifier {
    pub w0: Vec<f64>,
    pub w1: Vec<f64>,
}

impl CmClassifier {
    pub fn new(w0: Vec<f64>, w1: Vec<f64>) -> Result<Self> {
        check_dim(w0.len(), w1.len())?;
        if w0.iter().chain(&w1).any(|x| !x.is_finite()) {
            return Err(Error::DomainError("non-finite CM weight".into()));
        }
        Ok(Self { w0, w1 })
    }

    pub fn dim(&self) -> usize {
        self.w0.len()
    }

    /// `W = w1 − w0`, so that `e·W = S₁ − S₀`.
    pub fn scoring_vector(&self) -> Vec<f64> {
        self.w1.iter().zip(&self.w0).map(|(a, b)| a - b).collect()
    }
}

pub fn cosine_score(e_test: &[f64], e_en: &[f64]) -> Result<f64> {
    check_dim(e_test.len(), e_en.len())?;
    Ok(dot(&l2_normalize(e_test)?, &l2_normalize(e_en)?))
}

pub fn cm_score(e_cm: &[f64], clf: &CmClassifier) -> Result<f64> {
    check_dim(clf.dim(), e_cm.len())?;
    Ok(dot(e_cm, &clf.scoring_vector()))
}

/// `[[η₁, S_SV], [S_CM, η₂]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreMatrix {
    pub eta1: f64,
    pub s_sv: f64,
    pub s_cm: f64,
    pub eta2: f64,
}

impl ScoreMatrix {
    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            eta1: a[0],
            s_sv: a[1],
            s_cm: a[2],
            eta2: a[3],
        }
    }

    /// Row-major `[η₁, S_SV, S_CM, η₂]`.
    pub fn to_array(self) -> [f64; 4] {
        [self.eta1, self.s_sv, self.s_cm, self.eta2]
    }

    pub fn with_zero_diagonal(self) -> Self {
        Self {
            eta1: 0.0,
            eta2: 0.0,
            ..self
        }
    }
}

/// `[E_test; E_CM] · [W; E_en]ᵀ`. Vectors are used exactly as given; the
/// caller applies the normalization policy.
pub fn score_matrix(
    e_test: &[f64],
    e_cm: &[f64],
    clf: &CmClassifier,
    e_en: &[f64],
) -> Result<ScoreMatrix> {
    let d = clf.dim();
    for len in [e_test.len(), e_cm.len(), e_en.len()] {
        check_dim(d, len)?;
    }
    let w = clf.scoring_vector();
    Ok(ScoreMatrix {
        eta1: dot(e_test, &w),
        s_sv: dot(e_test, e_en),
        s_cm: dot(e_cm, &w),
        eta2: dot(e_cm, e_en),
    })
}

/// Logistic function kept strictly inside (0, 1) for every finite input.
pub fn sigmoid(x: f64) -> f64 {
    let p = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// `[[θ₁, P_SV], [P_CM, θ₂]]`, all entries in (0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbMatrix {
    pub theta1: f64,
    pub p_sv: f64,
    pub p_cm: f64,
    pub theta2: f64,
}

impl ProbMatrix {
    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            theta1: a[0],
            p_sv: a[1],
            p_cm: a[2],
            theta2: a[3],
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.theta1, self.p_sv, self.p_cm, self.theta2]
    }
}

pub fn prob_matrix(s: &ScoreMatrix) -> ProbMatrix {
    ProbMatrix::from_array(s.to_array().map(sigmoid))
}

/// How `J` is formed from `P`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JMode {
    /// `P + Pᵀ + P·P` with the ordinary 2×2 matrix product.
    #[default]
    Formula,
    /// The entrywise expansion `[[δ₁ + P_SV·P_CM, ε₁P_SV + ε₂P_CM],
    /// [ε₁P_CM + ε₂P_SV, δ₂ + P_SV·P_CM]]` with `δᵢ = θᵢ² + 2θᵢ`,
    /// `εᵢ = 1 + θᵢ`. Its off-diagonal differs from the matrix product and
    /// is kept for comparison runs.
    Entrywise,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JMatrix {
    pub j11: f64,
    pub j12: f64,
    pub j21: f64,
    pub j22: f64,
}

impl JMatrix {
    /// Row-major flatten, the order fed to the linear layer.
    pub fn to_array(self) -> [f64; 4] {
        [self.j11, self.j12, self.j21, self.j22]
    }
}

pub fn j_matrix(p: &ProbMatrix) -> JMatrix {
    let m = [[p.theta1, p.p_sv], [p.p_cm, p.theta2]];
    let mut j = [[0.0; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            let prod: f64 = (0..2).map(|k| m[r][k] * m[k][c]).sum();
            j[r][c] = m[r][c] + m[c][r] + prod;
        }
    }
    JMatrix {
        j11: j[0][0],
        j12: j[0][1],
        j21: j[1][0],
        j22: j[1][1],
    }
}

pub fn j_matrix_with(p: &ProbMatrix, mode: JMode) -> JMatrix {
    match mode {
        JMode::Formula => j_matrix(p),
        JMode::Entrywise => {
            let (t1, psv, pcm, t2) = (p.theta1, p.p_sv, p.p_cm, p.theta2);
            let (e1, e2) = (1.0 + t1, 1.0 + t2);
            JMatrix {
                j11: t1 * t1 + 2.0 * t1 + psv * pcm,
                j12: e1 * psv + e2 * pcm,
                j21: e1 * pcm + e2 * psv,
                j22: t2 * t2 + 2.0 * t2 + psv * pcm,
            }
        }
    }
}

/// `out[k][l] = ∂J_k / ∂P_l` in row-major order for both.
pub(crate) fn j_jacobian(p: &ProbMatrix, mode: JMode) -> [[f64; 4]; 4] {
    let (a, b, c, d) = (p.theta1, p.p_sv, p.p_cm, p.theta2);
    let diag = |x: f64| 2.0 + 2.0 * x;
    match mode {
        JMode::Formula => [
            [diag(a), c, b, 0.0],
            [b, 1.0 + a + d, 1.0, b],
            [c, 1.0, 1.0 + a + d, c],
            [0.0, c, b, diag(d)],
        ],
        JMode::Entrywise => [
            [diag(a), c, b, 0.0],
            [b, 1.0 + a, 1.0 + d, c],
            [c, 1.0 + d, 1.0 + a, b],
            [0.0, c, b, diag(d)],
        ],
    }
}

/// Independence-assumption fusion: `P_SV · P_CM`.
pub fn prob_product_score(p_sv: f64, p_cm: f64) -> Result<f64> {
    for p in [p_sv, p_cm] {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::DomainError(format!("probability {p} outside (0, 1)")));
        }
    }
    Ok(p_sv * p_cm)
}

pub fn score_sum(s_sv: f64, s_cm: f64) -> f64 {
    s_sv + s_cm
}

/// Weighted sum of several systems' scores, trial by trial, in the order of
/// the first set.
pub fn fuse_scores(score_sets: &[Vec<ScoreRecord>], weights: &[f64]) -> Result<Vec<ScoreRecord>> {
    if score_sets.is_empty() || score_sets.len() != weights.len() {
        return Err(Error::LengthMismatch(format!(
            "{} score sets, {} weights",
            score_sets.len(),
            weights.len()
        )));
    }
    let first = &score_sets[0];
    let mut lookups = Vec::with_capacity(score_sets.len() - 1);
    for set in &score_sets[1..] {
        let mut map = HashMap::with_capacity(set.len());
        for r in set {
            if map.insert(r.key(), r.score).is_some() {
                return Err(Error::DuplicateScore {
                    enroll: r.enroll_model.clone(),
                    test: r.test_utt.clone(),
                });
            }
        }
        if set.len() != first.len() {
            let extra = set
                .iter()
                .find(|r| !first.iter().any(|f| f.key() == r.key()))
                .unwrap_or(&set[0]);
            return Err(Error::KeyMismatch {
                enroll: extra.enroll_model.clone(),
                test: extra.test_utt.clone(),
            });
        }
        lookups.push(map);
    }
    first
        .iter()
        .map(|rec| {
            let mut score = weights[0] * rec.score;
            for (map, w) in lookups.iter().zip(&weights[1..]) {
                let s = map.get(&rec.key()).ok_or_else(|| Error::KeyMismatch {
                    enroll: rec.enroll_model.clone(),
                    test: rec.test_utt.clone(),
                })?;
                score += w * s;
            }
            Ok(ScoreRecord::new(&rec.enroll_model, &rec.test_utt, score))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clf(w0: &[f64], w1: &[f64]) -> CmClassifier {
        CmClassifier::new(w0.to_vec(), w1.to_vec()).unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine_score(&[1.0, 0.0], &[1.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_score(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine_score(&[1.0, 1.0], &[1.0, 0.0]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-8);
        assert!(matches!(cosine_score(&[1.0], &[1.0, 0.0]), Err(Error::DimMismatch { .. })));
        assert!(matches!(cosine_score(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroVector)));
    }

    #[test]
    fn cm_score_examples() {
        assert_eq!(cm_score(&[1.0, 0.0], &clf(&[0.0, 0.0], &[2.0, 0.0])).unwrap(), 2.0);
        assert_eq!(cm_score(&[3.0, -7.0], &clf(&[0.5, 0.5], &[0.5, 0.5])).unwrap(), 0.0);
        assert_eq!(cm_score(&[1.0, 2.0], &clf(&[1.0, 0.0], &[0.0, 1.0])).unwrap(), 1.0);
        assert!(cm_score(&[1.0], &clf(&[1.0, 0.0], &[0.0, 1.0])).is_err());
    }

    #[test]
    fn score_matrix_examples() {
        let c = clf(&[0.0, 0.0], &[1.0, 1.0]);
        let s = score_matrix(&[1.0, 0.0], &[0.0, 1.0], &c, &[1.0, 0.0]).unwrap();
        assert_eq!(s.to_array(), [1.0, 1.0, 1.0, 0.0]);
        let s = score_matrix(&[0.3, 0.4], &[0.0, 0.0], &c, &[1.0, 0.0]).unwrap();
        assert_eq!((s.s_cm, s.eta2), (0.0, 0.0));
    }

    #[test]
    fn prob_matrix_examples() {
        let p = prob_matrix(&ScoreMatrix::from_array([0.0; 4]));
        assert_eq!(p.to_array(), [0.5; 4]);
        let p = prob_matrix(&ScoreMatrix::from_array([710.0, -710.0, 1e6, -1e6]));
        for x in p.to_array() {
            assert!(x.is_finite() && x > 0.0 && x < 1.0);
        }
        let l3 = 3f64.ln();
        let p = prob_matrix(&ScoreMatrix::from_array([l3, 0.0, 0.0, -l3]));
        let want = [0.75, 0.5, 0.5, 0.25];
        for (a, b) in p.to_array().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn j_matrix_examples() {
        let j = j_matrix(&ProbMatrix::from_array([0.5; 4]));
        assert_eq!(j.to_array(), [1.5; 4]);
        let j = j_matrix(&ProbMatrix::from_array([0.0, 1.0, 1.0, 0.0]));
        assert_eq!(j.to_array(), [1.0, 2.0, 2.0, 1.0]);
    }

    #[test]
    fn expansion_mode_differs_off_diagonal() {
        let p = ProbMatrix::from_array([0.2, 0.3, 0.9, 0.7]);
        let f = j_matrix_with(&p, JMode::Formula);
        let e = j_matrix_with(&p, JMode::Entrywise);
        assert!((f.j12 - 1.47).abs() < 1e-12);
        assert!((e.j12 - 1.89).abs() < 1e-12);
        assert_eq!(f.j11, e.j11);
        assert_eq!(f.j22, e.j22);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let p = ProbMatrix::from_array([0.2, 0.3, 0.9, 0.7]);
        for mode in [JMode::Formula, JMode::Entrywise] {
            let jac = j_jacobian(&p, mode);
            for l in 0..4 {
                let h = 1e-6;
                let mut up = p.to_array();
                let mut dn = p.to_array();
                up[l] += h;
                dn[l] -= h;
                let ju = j_matrix_with(&ProbMatrix::from_array(up), mode).to_array();
                let jd = j_matrix_with(&ProbMatrix::from_array(dn), mode).to_array();
                for k in 0..4 {
                    assert!(((ju[k] - jd[k]) / (2.0 * h) - jac[k][l]).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn prob_product_and_sum() {
        assert_eq!(prob_product_score(0.5, 0.5).unwrap(), 0.25);
        assert!((prob_product_score(0.37, 1.0 - 1e-12).unwrap() - 0.37).abs() < 1e-11);
        assert!(prob_product_score(0.0, 0.5).is_err());
        assert!(prob_product_score(0.5, 1.0).is_err());
        assert!((score_sum(0.3, 0.5) - 0.8).abs() < 1e-15);
        assert_eq!(score_sum(1.25, 0.0), 1.25);
    }

    #[test]
    fn prob_product_monotone_on_grid() {
        let grid: Vec<f64> = (1..40).map(|i| i as f64 / 40.0).collect();
        for &a in &grid {
            for w in grid.windows(2) {
                assert!(prob_product_score(a, w[0]).unwrap() < prob_product_score(a, w[1]).unwrap());
                assert!(prob_product_score(w[0], a).unwrap() < prob_product_score(w[1], a).unwrap());
            }
        }
    }

    fn recs(scores: &[(&str, &str, f64)]) -> Vec<ScoreRecord> {
        scores.iter().map(|(e, t, s)| ScoreRecord::new(*e, *t, *s)).collect()
    }

    #[test]
    fn fusion_examples() {
        let sets: Vec<_> = (1..=5).map(|i| recs(&[("m", "u", i as f64)])).collect();
        let fused = fuse_scores(&sets, &[0.2; 5]).unwrap();
        assert!((fused[0].score - 3.0).abs() < 1e-12);

        let one = recs(&[("m", "u", 0.4), ("m", "v", -1.5)]);
        assert_eq!(fuse_scores(std::slice::from_ref(&one), &[1.0]).unwrap(), one);

        let fused = fuse_scores(&[one.clone(), one.clone()], &[0.5, 0.5]).unwrap();
        assert_eq!(fused, one);
    }

    #[test]
    fn fusion_errors() {
        let a = recs(&[("m", "u", 1.0), ("m", "v", 2.0)]);
        let b = recs(&[("m", "u", 1.0), ("m", "w", 2.0)]);
        assert!(matches!(fuse_scores(&[a.clone(), b], &[0.5, 0.5]), Err(Error::KeyMismatch { .. })));
        let c = recs(&[("m", "u", 1.0)]);
        assert!(matches!(fuse_scores(&[a.clone(), c], &[0.5, 0.5]), Err(Error::KeyMismatch { .. })));
        assert!(matches!(fuse_scores(&[a], &[0.5, 0.5]), Err(Error::LengthMismatch(_))));
    }
}
