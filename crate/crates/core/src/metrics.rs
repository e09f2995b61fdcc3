//! Equal error rates for the SV, SPF and SASV trial partitions, the
//! minimum normalized tandem detection cost (min t-DCF), DET points and
//! evaluation reports.
//!
//! Conventions: a trial is accepted when its score is `>=` the threshold.
//! `FRR(t)` is the fraction of positives below `t` and `FAR(t)` the
//! fraction of negatives at or above it. Operating points are taken at
//! `-inf`, at every distinct score and at `+inf`. The EER is read at the
//! first operating point where `FAR - FRR <= 0`; when that difference is
//! not exactly zero the EER and threshold are linearly interpolated from
//! the preceding point.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{TrialLabel, TrialRecord};
use crate::scoring::ScoreRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eer {
    pub eer: f64,
    pub threshold: f64,
}

/// One DET/ROC operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetPoint {
    #[serde(with = "extended_f64")]
    pub threshold: f64,
    pub frr: f64,
    pub far: f64,
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn thresholds(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut t = Vec::with_capacity(a.len() + b.len() + 2);
    t.push(f64::NEG_INFINITY);
    t.extend(a.iter().chain(b));
    t[1..].sort_by(f64::total_cmp);
    t.dedup();
    t.push(f64::INFINITY);
    t
}

fn below(sorted: &[f64], t: f64) -> usize {
    sorted.partition_point(|&s| s < t)
}

/// Operating points over `-inf`, every distinct score and `+inf`.
pub fn det_points(pos: &[f64], neg: &[f64]) -> Result<Vec<DetPoint>> {
    check_sides(pos, neg, "positive", "negative")?;
    let (p, n) = (sorted(pos), sorted(neg));
    let (np, nn) = (p.len() as f64, n.len() as f64);
    Ok(thresholds(&p, &n)
        .into_iter()
        .map(|t| DetPoint {
            threshold: t,
            frr: below(&p, t) as f64 / np,
            far: (n.len() - below(&n, t)) as f64 / nn,
        })
        .collect())
}

fn check_sides(pos: &[f64], neg: &[f64], pos_name: &'static str, neg_name: &'static str) -> Result<()> {
    if pos.is_empty() {
        return Err(Error::EmptySide(pos_name));
    }
    if neg.is_empty() {
        return Err(Error::EmptySide(neg_name));
    }
    if let Some(s) = pos.iter().chain(neg).find(|s| !s.is_finite()) {
        return Err(Error::DomainError(format!("non-finite score {s}")));
    }
    Ok(())
}

fn eer_from_points(points: &[DetPoint]) -> Eer {
    let i = points
        .iter()
        .position(|p| p.far - p.frr <= 0.0)
        .expect("the +inf operating point always has FAR - FRR = -1");
    let cur = points[i];
    let d1 = cur.far - cur.frr;
    if d1 == 0.0 || i == 0 {
        return Eer {
            eer: cur.frr,
            threshold: cur.threshold,
        };
    }
    let prev = points[i - 1];
    let d0 = prev.far - prev.frr;
    let alpha = d0 / (d0 - d1);
    let threshold = match (prev.threshold.is_finite(), cur.threshold.is_finite()) {
        (true, true) => prev.threshold + alpha * (cur.threshold - prev.threshold),
        (true, false) => prev.threshold,
        _ => cur.threshold,
    };
    Eer {
        eer: prev.frr + alpha * (cur.frr - prev.frr),
        threshold,
    }
}

pub fn compute_eer(pos: &[f64], neg: &[f64]) -> Result<Eer> {
    Ok(eer_from_points(&det_points(pos, neg)?))
}

/// Writes `±inf` as the strings `"inf"` / `"-inf"`, which JSON numbers
/// cannot hold.
mod extended_f64 {
    use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        match *v {
            f64::INFINITY => s.serialize_str("inf"),
            f64::NEG_INFINITY => s.serialize_str("-inf"),
            x => s.serialize_f64(x),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
            Repr::Text(t) => Err(de::Error::custom(format!("not a threshold: {t}"))),
        }
    }
}

/// Positive and negative score lists for one partition.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Split {
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
}

/// SV = target vs nontarget, SPF = target vs spoof, SASV = target vs both.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Partition {
    pub sv: Split,
    pub spf: Split,
    pub sasv: Split,
}

fn index_scores(scores: &[ScoreRecord]) -> Result<HashMap<(&str, &str), f64>> {
    let mut map = HashMap::with_capacity(scores.len());
    for s in scores {
        if map.insert(s.key(), s.score).is_some() {
            return Err(Error::DuplicateScore {
                enroll: s.enroll_model.clone(),
                test: s.test_utt.clone(),
            });
        }
    }
    Ok(map)
}

/// Looks up one score per trial, in trial order.
fn align(trials: &[TrialRecord], scores: &[ScoreRecord]) -> Result<Vec<(TrialLabel, f64)>> {
    let map = index_scores(scores)?;
    let mut seen = HashSet::with_capacity(trials.len());
    let mut out = Vec::with_capacity(trials.len());
    for t in trials {
        let label = t.require_label()?;
        let s = map.get(&t.key()).ok_or_else(|| Error::MissingScore {
            enroll: t.enroll_model.clone(),
            test: t.test_utt.clone(),
        })?;
        seen.insert(t.key());
        out.push((label, *s));
    }
    if let Some(s) = scores.iter().find(|s| !seen.contains(&s.key())) {
        return Err(Error::OrphanScore {
            enroll: s.enroll_model.clone(),
            test: s.test_utt.clone(),
        });
    }
    Ok(out)
}

pub fn partition_scores(trials: &[TrialRecord], scores: &[ScoreRecord]) -> Result<Partition> {
    let mut p = Partition::default();
    for (label, s) in align(trials, scores)? {
        match label {
            TrialLabel::Target => {
                p.sv.pos.push(s);
                p.spf.pos.push(s);
                p.sasv.pos.push(s);
            }
            TrialLabel::Nontarget => {
                p.sv.neg.push(s);
                p.sasv.neg.push(s);
            }
            TrialLabel::Spoof => {
                p.spf.neg.push(s);
                p.sasv.neg.push(s);
            }
        }
    }
    Ok(p)
}

/// Priors and costs of the tandem detection cost function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub pi_tar: f64,
    pub pi_non: f64,
    pub pi_spoof: f64,
    pub c_miss_asv: f64,
    pub c_fa_asv: f64,
    pub c_miss_cm: f64,
    pub c_fa_cm: f64,
}

impl CostModel {
    pub const PRESETS: [&'static str; 1] = ["la2019"];

    /// The ASVspoof 2019 LA configuration.
    pub fn asvspoof2019_la() -> Self {
        Self {
            pi_tar: 0.9405,
            pi_non: 0.0095,
            pi_spoof: 0.05,
            c_miss_asv: 1.0,
            c_fa_asv: 10.0,
            c_miss_cm: 1.0,
            c_fa_cm: 10.0,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "la2019" => Ok(Self::asvspoof2019_la()),
            other => Err(Error::DomainError(format!("unknown cost preset '{other}'"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let priors = [self.pi_tar, self.pi_non, self.pi_spoof];
        if priors.iter().any(|p| p.is_nan() || *p < 0.0) || (priors.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::ConfigInvalid("cost priors"));
        }
        let costs = [self.c_miss_asv, self.c_fa_asv, self.c_miss_cm, self.c_fa_cm];
        if costs.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(Error::ConfigInvalid("cost values"));
        }
        Ok(())
    }
}

/// ASV scores split by trial type.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AsvScores {
    pub target: Vec<f64>,
    pub nontarget: Vec<f64>,
    pub spoof: Vec<f64>,
}

/// CM scores split by class; higher means more bona fide.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CmScores {
    pub bonafide: Vec<f64>,
    pub spoof: Vec<f64>,
}

fn frac_below(sorted: &[f64], t: f64) -> f64 {
    below(sorted, t) as f64 / sorted.len() as f64
}

/// Tandem cost constants `(C1, C2)` at the given ASV threshold.
pub fn tdcf_constants(asv: &AsvScores, asv_threshold: f64, cost: &CostModel) -> Result<(f64, f64)> {
    check_sides(&asv.target, &asv.nontarget, "ASV target", "ASV nontarget")?;
    if asv.spoof.is_empty() {
        return Err(Error::EmptySide("ASV spoof"));
    }
    let p_miss = frac_below(&sorted(&asv.target), asv_threshold);
    let p_fa = 1.0 - frac_below(&sorted(&asv.nontarget), asv_threshold);
    let p_miss_spoof = frac_below(&sorted(&asv.spoof), asv_threshold);
    let c1 = cost.pi_tar * (cost.c_miss_cm - cost.c_miss_asv * p_miss) - cost.pi_non * cost.c_fa_asv * p_fa;
    let c2 = cost.c_fa_cm * cost.pi_spoof * (1.0 - p_miss_spoof);
    Ok((c1, c2))
}

/// Normalized min t-DCF with the ASV threshold fixed at `asv_threshold`.
pub fn min_tdcf_at(cm: &CmScores, asv: &AsvScores, asv_threshold: f64, cost: &CostModel) -> Result<f64> {
    cost.validate()?;
    let (c1, c2) = tdcf_constants(asv, asv_threshold, cost)?;
    if c1.min(c2) <= 0.0 {
        return Err(Error::DegenerateCost { c1, c2 });
    }
    let norm = c1.min(c2);
    let best = det_points(&cm.bonafide, &cm.spoof)?
        .into_iter()
        .map(|p| (c1 * p.frr + c2 * p.far) / norm)
        .fold(f64::INFINITY, f64::min);
    Ok(best)
}

/// Normalized min t-DCF with the ASV threshold at the SV EER point.
pub fn min_tdcf(cm: &CmScores, asv: &AsvScores, cost: &CostModel) -> Result<f64> {
    let t = compute_eer(&asv.target, &asv.nontarget)?.threshold;
    min_tdcf_at(cm, asv, t, cost)
}

/// Splits per-trial branch scores for [`min_tdcf`]. A CM score belongs to
/// the test utterance, so each utterance contributes once (its first trial).
pub fn tdcf_scores(
    trials: &[TrialRecord],
    asv_scores: &[ScoreRecord],
    cm_scores: &[ScoreRecord],
) -> Result<(AsvScores, CmScores)> {
    let mut asv = AsvScores::default();
    for (label, s) in align(trials, asv_scores)? {
        match label {
            TrialLabel::Target => asv.target.push(s),
            TrialLabel::Nontarget => asv.nontarget.push(s),
            TrialLabel::Spoof => asv.spoof.push(s),
        }
    }
    let mut cm = CmScores::default();
    let mut seen = HashSet::new();
    for ((label, s), t) in align(trials, cm_scores)?.into_iter().zip(trials) {
        if seen.insert(t.test_utt.as_str()) {
            match label {
                TrialLabel::Spoof => cm.spoof.push(s),
                _ => cm.bonafide.push(s),
            }
        }
    }
    Ok((asv, cm))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialCounts {
    pub n_target: usize,
    pub n_nontarget: usize,
    pub n_spoof: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetCurves {
    pub sv: Vec<DetPoint>,
    pub spf: Vec<DetPoint>,
    pub sasv: Vec<DetPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub sv: Eer,
    pub spf: Eer,
    pub sasv: Eer,
    pub counts: TrialCounts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_tdcf: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub det: Option<DetCurves>,
}

/// Branch scores and costs needed for the min t-DCF column.
#[derive(Debug, Clone, Copy)]
pub struct TdcfInput<'a> {
    pub asv_scores: &'a [ScoreRecord],
    pub cm_scores: &'a [ScoreRecord],
    pub cost: CostModel,
}

fn split_eer(split: &Split, pos: &'static str, neg: &'static str) -> Result<(Eer, Vec<DetPoint>)> {
    check_sides(&split.pos, &split.neg, pos, neg)?;
    let points = det_points(&split.pos, &split.neg)?;
    Ok((eer_from_points(&points), points))
}

pub fn evaluate(
    trials: &[TrialRecord],
    scores: &[ScoreRecord],
    tdcf: Option<TdcfInput<'_>>,
    with_det: bool,
) -> Result<EvalReport> {
    let p = partition_scores(trials, scores)?;
    let counts = TrialCounts {
        n_target: p.sv.pos.len(),
        n_nontarget: p.sv.neg.len(),
        n_spoof: p.spf.neg.len(),
    };
    debug_assert_eq!(p.sasv.pos.len() + p.sasv.neg.len(), trials.len());
    let (sv, sv_det) = split_eer(&p.sv, "SV target", "SV nontarget")?;
    let (spf, spf_det) = split_eer(&p.spf, "SPF target", "SPF spoof")?;
    let (sasv, sasv_det) = split_eer(&p.sasv, "SASV target", "SASV negative")?;
    let min_tdcf = match tdcf {
        Some(input) => {
            let (asv, cm) = tdcf_scores(trials, input.asv_scores, input.cm_scores)?;
            Some(min_tdcf(&cm, &asv, &input.cost)?)
        }
        None => None,
    };
    Ok(EvalReport {
        sv,
        spf,
        sasv,
        counts,
        min_tdcf,
        det: with_det.then_some(DetCurves {
            sv: sv_det,
            spf: spf_det,
            sasv: sasv_det,
        }),
    })
}

impl EvalReport {
    /// Text table with one row per metric, EERs in percent.
    pub fn to_table(&self, system: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<16} {:>10} {:>10} {:>10}", "system", "SV-EER", "SPF-EER", "SASV-EER");
        let _ = writeln!(
            out,
            "{:<16} {:>9.2}% {:>9.2}% {:>9.2}%",
            system,
            100.0 * self.sv.eer,
            100.0 * self.spf.eer,
            100.0 * self.sasv.eer
        );
        let _ = writeln!(
            out,
            "thresholds: sv={:.6} spf={:.6} sasv={:.6}",
            self.sv.threshold, self.spf.threshold, self.sasv.threshold
        );
        let c = self.counts;
        let _ = writeln!(out, "trials: target={} nontarget={} spoof={}", c.n_target, c.n_nontarget, c.n_spoof);
        if let Some(t) = self.min_tdcf {
            let _ = writeln!(out, "min t-DCF: {t:.6}");
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// DET points as `split\tthreshold\tfrr\tfar` lines, if collected.
    pub fn det_tsv(&self) -> Option<String> {
        let det = self.det.as_ref()?;
        let mut out = String::from("split\tthreshold\tfrr\tfar\n");
        for (name, pts) in [("sv", &det.sv), ("spf", &det.spf), ("sasv", &det.sasv)] {
            for p in pts {
                let _ = writeln!(out, "{name}\t{}\t{}\t{}", p.threshold, p.frr, p.far);
            }
        }
        Some(out)
    }
}
