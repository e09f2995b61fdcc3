use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub enroll_model: String,
    pub test_utt: String,
    pub score: f64,
}

impl ScoreRecord {
    pub fn new(enroll: impl Into<String>, test: impl Into<String>, score: f64) -> Self {
        Self {
            enroll_model: enroll.into(),
            test_utt: test.into(),
            score,
        }
    }

    pub fn key(&self) -> (&str, &str) {
        (&self.enroll_model, &self.test_utt)
    }
}

/// Parses `<enroll>\t<test>\t<score>` lines. Blank lines are skipped.
pub fn parse_scores(text: &str) -> Result<Vec<ScoreRecord>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            [] => continue,
            [e, t, s] => {
                let score = s.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| {
                    Error::BadValue {
                        line: idx + 1,
                        msg: format!("bad score '{s}'"),
                    }
                })?;
                out.push(ScoreRecord::new(*e, *t, score));
            }
            _ => return Err(Error::MalformedLine(idx + 1)),
        }
    }
    Ok(out)
}

pub fn format_scores(scores: &[ScoreRecord]) -> String {
    let mut s = String::with_capacity(scores.len() * 32);
    for r in scores {
        s.push_str(&format!("{}\t{}\t{:.8}\n", r.enroll_model, r.test_utt, r.score));
    }
    s
}

pub fn read_scores(path: impl AsRef<Path>) -> Result<Vec<ScoreRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
    parse_scores(&text).map_err(|e| e.in_file(path))
}

pub fn write_scores(path: impl AsRef<Path>, scores: &[ScoreRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::from(e).in_file(path))?;
    f.write_all(format_scores(scores).as_bytes())
        .map_err(|e| Error::from(e).in_file(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_eight_decimals() {
        let s = format_scores(&[ScoreRecord::new("m", "u", 1.0 / 3.0), ScoreRecord::new("m", "v", -2.0)]);
        assert_eq!(s, "m\tu\t0.33333333\nm\tv\t-2.00000000\n");
        let back = parse_scores(&s).unwrap();
        assert_eq!(back[1].score, -2.0);
    }

    #[test]
    fn malformed_score_lines() {
        assert!(matches!(parse_scores("m u\n"), Err(Error::MalformedLine(1))));
        assert!(matches!(parse_scores("\nm u x\n"), Err(Error::BadValue { line: 2, .. })));
        assert!(matches!(parse_scores("m u nan\n"), Err(Error::BadValue { .. })));
    }
}
