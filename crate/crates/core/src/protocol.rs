//! Trial lists, enrollment maps and enrollment-model construction.
//!
//! Trial lines are `<enroll_model> <test_utt> [label]`; enrollment lines are
//! `<model_id> <utt_1> <utt_2> ...`.

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::embedding::{l2_normalize, EmbeddingStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialLabel {
    Target,
    Nontarget,
    Spoof,
}

impl TrialLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            TrialLabel::Target => "target",
            TrialLabel::Nontarget => "nontarget",
            TrialLabel::Spoof => "spoof",
        }
    }

    /// Binary SASV target: only bona fide target-speaker trials are positive.
    pub fn is_positive(self) -> bool {
        self == TrialLabel::Target
    }
}

impl fmt::Display for TrialLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrialLabel {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s {
            "target" => Ok(TrialLabel::Target),
            "nontarget" => Ok(TrialLabel::Nontarget),
            "spoof" => Ok(TrialLabel::Spoof),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TrialRecord {
    pub enroll_model: String,
    pub test_utt: String,
    pub label: Option<TrialLabel>,
    /// 1-based source line, 0 for records built in memory.
    pub line: usize,
}

impl TrialRecord {
    pub fn new(enroll: impl Into<String>, test: impl Into<String>, label: Option<TrialLabel>) -> Self {
        Self {
            enroll_model: enroll.into(),
            test_utt: test.into(),
            label,
            line: 0,
        }
    }

    pub fn key(&self) -> (&str, &str) {
        (&self.enroll_model, &self.test_utt)
    }

    pub fn require_label(&self) -> Result<TrialLabel> {
        self.label.ok_or_else(|| Error::MissingLabel {
            enroll: self.enroll_model.clone(),
            test: self.test_utt.clone(),
        })
    }
}

pub fn parse_trials(text: &str) -> Result<Vec<TrialRecord>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        let (enroll, test, label) = match fields.as_slice() {
            [] => continue,
            [e, t] => (*e, *t, None),
            [e, t, l] => (
                *e,
                *t,
                Some(l.parse().map_err(|_| Error::UnknownLabel(line_no))?),
            ),
            _ => return Err(Error::MalformedLine(line_no)),
        };
        out.push(TrialRecord {
            enroll_model: enroll.to_string(),
            test_utt: test.to_string(),
            label,
            line: line_no,
        });
    }
    Ok(out)
}

pub fn serialize_trials(trials: &[TrialRecord]) -> String {
    let mut s = String::new();
    for t in trials {
        s.push_str(&t.enroll_model);
        s.push(' ');
        s.push_str(&t.test_utt);
        if let Some(l) = t.label {
            s.push(' ');
            s.push_str(l.as_str());
        }
        s.push('\n');
    }
    s
}

/// Enrollment model id → its enrollment utterance ids, in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EnrollmentMap {
    pub models: IndexMap<String, Vec<String>>,
}

impl EnrollmentMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut models = IndexMap::new();
        for (idx, line) in text.lines().enumerate() {
            let mut fields = line.split_whitespace();
            let Some(model) = fields.next() else { continue };
            let utts: Vec<String> = fields.map(str::to_string).collect();
            if utts.is_empty() {
                return Err(Error::MalformedLine(idx + 1));
            }
            if models.insert(model.to_string(), utts).is_some() {
                return Err(Error::DuplicateId(model.to_string()));
            }
        }
        Ok(Self { models })
    }

    pub fn serialize(&self) -> String {
        let mut s = String::new();
        for (m, utts) in &self.models {
            s.push_str(m);
            for u in utts {
                s.push(' ');
                s.push_str(u);
            }
            s.push('\n');
        }
        s
    }
}

/// Mean of each model's utterance vectors, then L2-normalized.
pub fn build_enrollment(map: &EnrollmentMap, store: &EmbeddingStore) -> Result<EmbeddingStore> {
    let mut out = EmbeddingStore::new(store.dim())?;
    for (model, utts) in &map.models {
        if utts.is_empty() {
            return Err(Error::ShapeMismatch(format!("model '{model}' has no utterances")));
        }
        let mut mean = vec![0.0; store.dim()];
        for utt in utts {
            let v = store.get(utt).ok_or_else(|| Error::MissingUtterance {
                model: model.clone(),
                utt: utt.clone(),
            })?;
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x;
            }
        }
        let n = utts.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        out.insert(model.clone(), l2_normalize(&mean)?)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_single_trial() {
        let t = parse_trials("spk01 utt_007 target").unwrap();
        assert_eq!(t, vec![TrialRecord { line: 1, ..TrialRecord::new("spk01", "utt_007", Some(TrialLabel::Target)) }]);
        assert!(parse_trials("").unwrap().is_empty());
        assert!(matches!(parse_trials("spk01 utt_007 genuine"), Err(Error::UnknownLabel(1))));
        assert!(matches!(parse_trials("a b target\nonlyone\n"), Err(Error::MalformedLine(2))));
        assert!(matches!(parse_trials("a b c d"), Err(Error::MalformedLine(1))));
    }

    #[test]
    fn unlabeled_and_blank_lines() {
        let t = parse_trials("\na b\n\nc d spoof\n").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].label, None);
        assert_eq!(t[1].line, 4);
        assert!(t[0].require_label().is_err());
    }

    fn store(entries: &[(&str, &[f64])]) -> EmbeddingStore {
        EmbeddingStore::from_entries(entries.iter().map(|(k, v)| (*k, v.to_vec()))).unwrap()
    }

    fn map(entries: &[(&str, &[&str])]) -> EnrollmentMap {
        let text: String = entries
            .iter()
            .map(|(m, u)| format!("{m} {}\n", u.join(" ")))
            .collect();
        EnrollmentMap::parse(&text).unwrap()
    }

    #[test]
    fn enrollment_mean_then_normalize() {
        let s = store(&[("u1", &[0.0, 2.0])]);
        let e = build_enrollment(&map(&[("m", &["u1"])]), &s).unwrap();
        assert_eq!(e.get("m").unwrap(), &[0.0, 1.0]);

        let s = store(&[("u1", &[1.0, 0.0]), ("u2", &[0.0, 1.0])]);
        let e = build_enrollment(&map(&[("m", &["u1", "u2"])]), &s).unwrap();
        let v = e.get("m").unwrap();
        assert!((v[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-8 && (v[1] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-8);

        let s = store(&[("u1", &[1.0, 0.0]), ("u2", &[-1.0, 0.0])]);
        assert!(matches!(
            build_enrollment(&map(&[("m", &["u1", "u2"])]), &s),
            Err(Error::ZeroVector)
        ));
        assert!(matches!(
            build_enrollment(&map(&[("m", &["u1", "u9"])]), &s),
            Err(Error::MissingUtterance { .. })
        ));
    }

    #[test]
    fn enrollment_map_requires_utterances() {
        assert!(matches!(EnrollmentMap::parse("m1 a\nm2\n"), Err(Error::MalformedLine(2))));
    }

    fn arb_trials() -> impl Strategy<Value = Vec<TrialRecord>> {
        let label = prop_oneof![
            Just(None),
            Just(Some(TrialLabel::Target)),
            Just(Some(TrialLabel::Nontarget)),
            Just(Some(TrialLabel::Spoof)),
        ];
        proptest::collection::vec(("[A-Za-z0-9_.-]{1,10}", "[A-Za-z0-9_.-]{1,10}", label), 0..30)
            .prop_map(|v| {
                v.into_iter()
                    .enumerate()
                    .map(|(i, (e, t, l))| TrialRecord { line: i + 1, ..TrialRecord::new(e, t, l) })
                    .collect()
            })
    }

    proptest! {
        #[test]
        fn parse_inverts_serialize(trials in arb_trials()) {
            prop_assert_eq!(parse_trials(&serialize_trials(&trials)).unwrap(), trials);
        }

        #[test]
        fn single_utterance_enrollment_is_normalize(v in proptest::collection::vec(-10.0f64..10.0, 1..6)) {
            prop_assume!(crate::embedding::norm(&v) > 1e-6);
            let s = EmbeddingStore::from_entries([("u", v.clone())]).unwrap();
            let e = build_enrollment(&map(&[("m", &["u"])]), &s).unwrap();
            let expect = l2_normalize(&v).unwrap();
            prop_assert_eq!(e.get("m").unwrap(), expect.as_slice());
        }
    }
}
