//! Command-line front end: `synth`, `train`, `score`, `evaluate`, `fuse`.
//!
//! Every option is a key of one flat [`RunConfig`]. Values come from the
//! built-in defaults, then an optional `--config` file of `key = value`
//! lines (`#` starts a comment), then `--key value` flags. Each run writes
//! the fully resolved configuration to `<out>/resolved.cfg`, which can be
//! passed back through `--config` to repeat the run.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data or
//! validation error, 3 diverged training.

use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;

use crate::embedding::EmbeddingStore;
use crate::error::{Error, Result};
use crate::metrics::{evaluate, CostModel, TdcfInput};
use crate::protocol::{build_enrollment, parse_trials, serialize_trials, EnrollmentMap, TrialRecord};
use crate::scoring::{fuse_scores, read_scores, write_scores, HeadConfig, JMode, NormPolicy, SasvModel, Stores};
use crate::synth::{generate_corpus, SynthConfig};
use crate::training::{train_two_stage, HyperParams, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Text,
    Usize,
    U64,
    F64,
    /// Empty means "not set".
    OptF64,
    Bool,
    F64List,
    UsizeList,
}

struct Key {
    name: &'static str,
    default: &'static str,
    kind: Kind,
}

const fn key(name: &'static str, default: &'static str, kind: Kind) -> Key {
    Key { name, default, kind }
}

const KEYS: &[Key] = &[
    key("out", "out", Kind::Text),
    key("seed", "42", Kind::U64),
    // inputs
    key("asv", "", Kind::Text),
    key("cm", "", Kind::Text),
    key("enroll", "", Kind::Text),
    key("trials", "", Kind::Text),
    key("model", "", Kind::Text),
    key("scores", "", Kind::Text),
    key("asv_scores", "", Kind::Text),
    key("cm_scores", "", Kind::Text),
    key("inputs", "", Kind::Text),
    // synth
    key("n_speakers", "20", Kind::Usize),
    key("utts_per_speaker", "30", Kind::Usize),
    key("enroll_utts", "5", Kind::Usize),
    key("spoof_fraction", "0.5", Kind::F64),
    key("dim", "16", Kind::Usize),
    key("within_std", "0.3", Kind::F64),
    key("cm_gap", "3", Kind::F64),
    key("cm_std", "1", Kind::F64),
    key("max_trials", "100000", Kind::Usize),
    key("store_format", "bin", Kind::Text),
    // training
    key("strategy", "tdt1", Kind::Text),
    key("lr", "0.5", Kind::F64),
    key("epochs", "200", Kind::Usize),
    key("batch_size", "64", Kind::Usize),
    key("momentum", "0.9", Kind::F64),
    key("cm_lr", "0.1", Kind::F64),
    key("cm_epochs", "50", Kind::Usize),
    key("cm_batch_size", "64", Kind::Usize),
    key("cm_momentum", "0", Kind::F64),
    key("bce_w_neg", "0.1", Kind::F64),
    key("bce_w_pos", "0.9", Kind::F64),
    key("aam_margin", "0.2", Kind::F64),
    key("aam_scale", "30", Kind::F64),
    key("orth_lambda", "0", Kind::F64),
    key("prob_epsilon", "1e-7", Kind::F64),
    key("assist", "false", Kind::Bool),
    key("joint", "false", Kind::Bool),
    key("j_mode", "formula", Kind::Text),
    key("hidden", "256,128,64", Kind::UsizeList),
    key("channels", "8", Kind::Usize),
    key("score_sum_minmax", "false", Kind::Bool),
    key("normalize_asv", "true", Kind::Bool),
    key("normalize_cm", "false", Kind::Bool),
    // evaluation
    key("system", "system", Kind::Text),
    key("tdcf", "none", Kind::Text),
    key("det", "false", Kind::Bool),
    key("pi_tar", "", Kind::OptF64),
    key("pi_non", "", Kind::OptF64),
    key("pi_spoof", "", Kind::OptF64),
    key("c_miss_asv", "", Kind::OptF64),
    key("c_fa_asv", "", Kind::OptF64),
    key("c_miss_cm", "", Kind::OptF64),
    key("c_fa_cm", "", Kind::OptF64),
    // fusion
    key("weights", "", Kind::F64List),
];

fn lookup(name: &str) -> Result<&'static Key> {
    KEYS.iter().find(|k| k.name == name).ok_or_else(|| Error::UnknownKey(name.to_string()))
}

fn list_items(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn type_checks(kind: Kind, v: &str) -> bool {
    match kind {
        Kind::Text => true,
        Kind::Usize => v.parse::<usize>().is_ok(),
        Kind::U64 => v.parse::<u64>().is_ok(),
        Kind::F64 => v.parse::<f64>().is_ok_and(f64::is_finite),
        Kind::OptF64 => v.is_empty() || v.parse::<f64>().is_ok_and(f64::is_finite),
        Kind::Bool => v.parse::<bool>().is_ok(),
        Kind::F64List => list_items(v).all(|s| s.parse::<f64>().is_ok_and(f64::is_finite)),
        Kind::UsizeList => list_items(v).all(|s| s.parse::<usize>().is_ok()),
    }
}

/// Flat, strictly keyed run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: IndexMap<&'static str, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|k| (k.name, k.default.to_string())).collect(),
        }
    }
}

impl RunConfig {
    /// Keys are accepted with `-` or `_` separators.
    pub fn set(&mut self, name: &str, value: &str) -> Result<()> {
        let name = name.replace('-', "_");
        let k = lookup(&name)?;
        let value = value.trim();
        if !type_checks(k.kind, value) {
            return Err(Error::TypeError {
                key: k.name.to_string(),
                value: value.to_string(),
            });
        }
        self.values.insert(k.name, value.to_string());
        Ok(())
    }

    pub fn get(&self, name: &str) -> &str {
        self.values.get(name).map(String::as_str).unwrap_or_else(|| panic!("undeclared key {name}"))
    }

    fn typed<T: std::str::FromStr>(&self, name: &str) -> Result<T> {
        let v = self.get(name);
        v.parse().map_err(|_| Error::TypeError {
            key: name.to_string(),
            value: v.to_string(),
        })
    }

    pub fn f64(&self, name: &str) -> Result<f64> {
        self.typed(name)
    }

    pub fn usize(&self, name: &str) -> Result<usize> {
        self.typed(name)
    }

    pub fn u64(&self, name: &str) -> Result<u64> {
        self.typed(name)
    }

    pub fn bool(&self, name: &str) -> Result<bool> {
        self.typed(name)
    }

    pub fn opt_f64(&self, name: &str) -> Result<Option<f64>> {
        if self.get(name).is_empty() {
            Ok(None)
        } else {
            self.typed(name).map(Some)
        }
    }

    pub fn list<T: std::str::FromStr>(&self, name: &str) -> Result<Vec<T>> {
        list_items(self.get(name))
            .map(|s| {
                s.parse().map_err(|_| Error::TypeError {
                    key: name.to_string(),
                    value: s.to_string(),
                })
            })
            .collect()
    }

    fn path(&self, name: &'static str) -> Result<PathBuf> {
        match self.get(name) {
            "" => Err(Error::ConfigInvalid(name)),
            p => Ok(PathBuf::from(p)),
        }
    }

    /// `key = value` lines in declaration order.
    pub fn to_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn synth_config(&self) -> Result<SynthConfig> {
        Ok(SynthConfig {
            n_speakers: self.usize("n_speakers")?,
            utts_per_speaker: self.usize("utts_per_speaker")?,
            enroll_utts: self.usize("enroll_utts")?,
            spoof_fraction: self.f64("spoof_fraction")?,
            dim: self.usize("dim")?,
            within_std: self.f64("within_std")?,
            cm_gap: self.f64("cm_gap")?,
            cm_std: self.f64("cm_std")?,
            seed: self.u64("seed")?,
            max_trials: self.usize("max_trials")?,
        })
    }

    fn hyper(&self, prefix: &str) -> Result<HyperParams> {
        Ok(HyperParams {
            lr: self.f64(&format!("{prefix}lr"))?,
            epochs: self.usize(&format!("{prefix}epochs"))?,
            batch_size: self.usize(&format!("{prefix}batch_size"))?,
            momentum: self.f64(&format!("{prefix}momentum"))?,
            seed: self.u64("seed")?,
            bce_weights: (self.f64("bce_w_neg")?, self.f64("bce_w_pos")?),
            aam_margin: self.f64("aam_margin")?,
            aam_scale: self.f64("aam_scale")?,
            orth_lambda: self.f64("orth_lambda")?,
            prob_epsilon: self.f64("prob_epsilon")?,
        })
    }

    pub fn policy(&self) -> Result<NormPolicy> {
        Ok(NormPolicy {
            normalize_asv: self.bool("normalize_asv")?,
            normalize_cm: self.bool("normalize_cm")?,
        })
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let j_mode = match self.get("j_mode") {
            "formula" => JMode::Formula,
            "entrywise" | "expansion" => JMode::Entrywise,
            v => {
                return Err(Error::TypeError {
                    key: "j_mode".into(),
                    value: v.into(),
                })
            }
        };
        Ok(TrainConfig {
            strategy: self.get("strategy").parse()?,
            head: HeadConfig {
                hidden: self.list("hidden")?,
                channels: self.usize("channels")?,
                j_mode,
                score_sum_minmax: self.bool("score_sum_minmax")?,
            },
            policy: self.policy()?,
            cm_hp: self.hyper("cm_")?,
            head_hp: self.hyper("")?,
            assist: self.bool("assist")?,
            joint: self.bool("joint")?,
        })
    }

    /// `None` when `tdcf = none`; preset constants can be overridden key by key.
    pub fn cost_model(&self) -> Result<Option<CostModel>> {
        let preset = self.get("tdcf");
        if preset == "none" {
            return Ok(None);
        }
        let mut c = CostModel::preset(preset).map_err(|_| Error::TypeError {
            key: "tdcf".into(),
            value: preset.into(),
        })?;
        for (name, slot) in [
            ("pi_tar", &mut c.pi_tar),
            ("pi_non", &mut c.pi_non),
            ("pi_spoof", &mut c.pi_spoof),
            ("c_miss_asv", &mut c.c_miss_asv),
            ("c_fa_asv", &mut c.c_fa_asv),
            ("c_miss_cm", &mut c.c_miss_cm),
            ("c_fa_cm", &mut c.c_fa_cm),
        ] {
            if let Some(v) = self.opt_f64(name)? {
                *slot = v;
            }
        }
        c.validate()?;
        Ok(Some(c))
    }
}

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(Error::MalformedLine(i + 1))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::MalformedLine(i + 1));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Defaults, then the file's entries, then flags.
pub fn resolve_config(file: Option<&str>, flags: &[(String, String)]) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(text) = file {
        for (k, v) in parse_config_text(text)? {
            cfg.set(&k, &v)?;
        }
    }
    for (k, v) in flags {
        cfg.set(k, v)?;
    }
    Ok(cfg)
}

const USAGE: &str = "usage: sasv <synth|train|score|evaluate|fuse> [--config FILE] [--key value ...] [inputs ...]

  synth     write asv.emb, cm.emb, trials.txt, enroll.txt
  train     --strategy {tdt1|tdtd|tdtm|scoresum|concat|conv|attn} [--orth-lambda x] [--assist] [--joint]
            reads --asv --cm --enroll --trials; writes model.json, train_cm.json, train_head.json
  score     --model m.json, reads --asv --cm --enroll --trials; writes scores.tsv, asv_scores.tsv, cm_scores.tsv
  evaluate  --trials --scores [--tdcf la2019 --asv-scores --cm-scores] [--det]; writes report.json, report.txt
  fuse      --weights w1,w2,... FILE...; writes fused.tsv

All outputs go to --out (default: out), together with resolved.cfg.";

#[derive(Debug)]
struct Invocation {
    command: String,
    config: Option<PathBuf>,
    flags: Vec<(String, String)>,
    positional: Vec<String>,
}

fn parse_args(args: &[String]) -> std::result::Result<Invocation, String> {
    let command = args.first().ok_or("missing subcommand")?.clone();
    let mut inv = Invocation {
        command,
        config: None,
        flags: Vec::new(),
        positional: Vec::new(),
    };
    let mut i = 1;
    while i < args.len() {
        let a = &args[i];
        i += 1;
        let Some(flag) = a.strip_prefix("--") else {
            inv.positional.push(a.clone());
            continue;
        };
        let (name, inline) = match flag.split_once('=') {
            Some((n, v)) => (n.replace('-', "_"), Some(v.to_string())),
            None => (flag.replace('-', "_"), None),
        };
        let is_bool = KEYS.iter().any(|k| k.name == name && k.kind == Kind::Bool);
        let value = match inline {
            Some(v) => v,
            None if is_bool => "true".to_string(),
            None => {
                let v = args.get(i).ok_or_else(|| format!("--{flag} needs a value"))?;
                i += 1;
                v.clone()
            }
        };
        if name == "config" {
            inv.config = Some(PathBuf::from(value));
        } else {
            inv.flags.push((name, value));
        }
    }
    Ok(inv)
}

fn is_usage_error(e: &Error) -> bool {
    matches!(e.root(), Error::UnknownKey(_) | Error::TypeError { .. } | Error::ConfigInvalid(_))
}

fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::NonFiniteLoss { .. } => 3,
        _ if is_usage_error(e) => 1,
        _ => 2,
    }
}

/// Runs one command line (`args[0]` is the program name) and returns the
/// process exit code. Errors are reported on stderr.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let args: Vec<String> = args.into_iter().map(Into::into).collect();
    let rest = args.get(1..).unwrap_or(&[]);
    if rest.is_empty() || matches!(rest[0].as_str(), "-h" | "--help" | "help") {
        eprintln!("{USAGE}");
        return if rest.is_empty() { 1 } else { 0 };
    }
    let inv = match parse_args(rest) {
        Ok(inv) => inv,
        Err(msg) => {
            eprintln!("error: {msg}\n\n{USAGE}");
            return 1;
        }
    };
    match dispatch(inv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::from(e).in_file(path))
}

fn dispatch(inv: Invocation) -> Result<()> {
    let file_text = match &inv.config {
        Some(p) => Some(read_text(p)?),
        None => None,
    };
    let mut flags = inv.flags;
    if !inv.positional.is_empty() {
        if inv.command != "fuse" {
            return Err(Error::UnknownKey(inv.positional[0].clone()));
        }
        flags.push(("inputs".into(), inv.positional.join(",")));
    }
    let cfg = resolve_config(file_text.as_deref(), &flags).map_err(|e| match &inv.config {
        Some(p) if matches!(e, Error::MalformedLine(_)) => e.in_file(p),
        _ => e,
    })?;
    let out = PathBuf::from(cfg.get("out"));
    fs::create_dir_all(&out).map_err(|e| Error::from(e).in_file(&out))?;
    write_text(&out.join("resolved.cfg"), &cfg.to_text())?;
    match inv.command.as_str() {
        "synth" => cmd_synth(&cfg, &out),
        "train" => cmd_train(&cfg, &out),
        "score" => cmd_score(&cfg, &out),
        "evaluate" => cmd_evaluate(&cfg, &out),
        "fuse" => cmd_fuse(&cfg, &out),
        other => Err(Error::UnknownKey(other.to_string())),
    }
}

fn load_trials(cfg: &RunConfig) -> Result<Vec<TrialRecord>> {
    let path = cfg.path("trials")?;
    parse_trials(&read_text(&path)?).map_err(|e| e.in_file(&path))
}

struct LoadedStores {
    asv: EmbeddingStore,
    enroll: EmbeddingStore,
    cm: EmbeddingStore,
}

impl LoadedStores {
    fn load(cfg: &RunConfig) -> Result<Self> {
        let asv = EmbeddingStore::load(cfg.path("asv")?)?;
        let cm = EmbeddingStore::load(cfg.path("cm")?)?;
        let enroll_path = cfg.path("enroll")?;
        let map = EnrollmentMap::parse(&read_text(&enroll_path)?).map_err(|e| e.in_file(&enroll_path))?;
        let enroll = build_enrollment(&map, &asv).map_err(|e| e.in_file(&enroll_path))?;
        Ok(Self { asv, enroll, cm })
    }

    fn stores(&self) -> Stores<'_> {
        Stores {
            asv: &self.asv,
            enroll: &self.enroll,
            cm: &self.cm,
        }
    }
}

fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<()> {
    let corpus = generate_corpus(&cfg.synth_config()?)?;
    let ext = match cfg.get("store_format") {
        "bin" => "emb",
        "tsv" => "tsv",
        v => {
            return Err(Error::TypeError {
                key: "store_format".into(),
                value: v.into(),
            })
        }
    };
    corpus.asv.save(out.join(format!("asv.{ext}")))?;
    corpus.cm.save(out.join(format!("cm.{ext}")))?;
    write_text(&out.join("trials.txt"), &serialize_trials(&corpus.trials))?;
    write_text(&out.join("enroll.txt"), &corpus.enroll.serialize())?;
    Ok(())
}

fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<()> {
    let tc = cfg.train_config()?;
    let trials = load_trials(cfg)?;
    let loaded = LoadedStores::load(cfg)?;
    let outcome = train_two_stage(&trials, &loaded.stores(), &tc)?;
    outcome.model.save(out.join("model.json"))?;
    write_text(&out.join("train_cm.json"), &(serde_json::to_string_pretty(&outcome.cm_report)? + "\n"))?;
    write_text(&out.join("train_head.json"), &(serde_json::to_string_pretty(&outcome.head_report)? + "\n"))?;
    Ok(())
}

fn cmd_score(cfg: &RunConfig, out: &Path) -> Result<()> {
    let model = SasvModel::load(cfg.path("model")?)?;
    let trials = load_trials(cfg)?;
    let loaded = LoadedStores::load(cfg)?;
    let stores = loaded.stores();
    let scores = model.score_trials(&trials, &stores)?;
    let (asv, cm) = model.branch_scores(&trials, &stores)?;
    write_scores(out.join("scores.tsv"), &scores)?;
    write_scores(out.join("asv_scores.tsv"), &asv)?;
    write_scores(out.join("cm_scores.tsv"), &cm)?;
    Ok(())
}

fn cmd_evaluate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let trials = load_trials(cfg)?;
    let scores_path = cfg.path("scores")?;
    let scores = read_scores(&scores_path)?;
    let cost = cfg.cost_model()?;
    let branch = match cost {
        Some(_) => Some((read_scores(cfg.path("asv_scores")?)?, read_scores(cfg.path("cm_scores")?)?)),
        None => None,
    };
    let tdcf = match (&branch, cost) {
        (Some((asv, cm)), Some(cost)) => Some(TdcfInput {
            asv_scores: asv,
            cm_scores: cm,
            cost,
        }),
        _ => None,
    };
    let report = evaluate(&trials, &scores, tdcf, cfg.bool("det")?).map_err(|e| e.in_file(&scores_path))?;
    write_text(&out.join("report.json"), &(report.to_json()? + "\n"))?;
    let table = report.to_table(cfg.get("system"));
    write_text(&out.join("report.txt"), &table)?;
    if let Some(det) = report.det_tsv() {
        write_text(&out.join("det.tsv"), &det)?;
    }
    print!("{table}");
    Ok(())
}

fn cmd_fuse(cfg: &RunConfig, out: &Path) -> Result<()> {
    let weights: Vec<f64> = cfg.list("weights")?;
    let inputs: Vec<String> = cfg.list("inputs")?;
    if inputs.is_empty() {
        return Err(Error::ConfigInvalid("inputs"));
    }
    let sets = inputs.iter().map(read_scores).collect::<Result<Vec<_>>>()?;
    write_scores(out.join("fused.tsv"), &fuse_scores(&sets, &weights)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(resolve_config(Some(""), &[]).unwrap(), RunConfig::default());
    }

    #[test]
    fn flags_override_file() {
        let cfg = resolve_config(Some("lr = 0.1\n"), &flags(&[("lr", "0.01")])).unwrap();
        assert_eq!(cfg.f64("lr").unwrap(), 0.01);
        let cfg = resolve_config(Some("lr = 0.1  # comment\n"), &[]).unwrap();
        assert_eq!(cfg.f64("lr").unwrap(), 0.1);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(resolve_config(Some("lrr=0.1"), &[]), Err(Error::UnknownKey(k)) if k == "lrr"));
    }

    #[test]
    fn type_error_names_key() {
        let r = resolve_config(None, &flags(&[("epochs", "ten")]));
        assert!(matches!(r, Err(Error::TypeError { key, .. }) if key == "epochs"));
    }

    #[test]
    fn dashes_map_to_underscores() {
        let cfg = resolve_config(None, &flags(&[("orth-lambda", "0.5")])).unwrap();
        assert_eq!(cfg.f64("orth_lambda").unwrap(), 0.5);
    }

    #[test]
    fn echo_round_trips() {
        let cfg = resolve_config(None, &flags(&[("seed", "7"), ("weights", "0.5,0.5")])).unwrap();
        let again = resolve_config(Some(&cfg.to_text()), &[]).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn bool_flags_take_no_value() {
        let args: Vec<String> = ["train", "--assist", "--strategy", "attn"].iter().map(|s| s.to_string()).collect();
        let inv = parse_args(&args).unwrap();
        assert_eq!(inv.flags, flags(&[("assist", "true"), ("strategy", "attn")]));
    }

    #[test]
    fn cost_overrides() {
        let cfg = resolve_config(None, &flags(&[("tdcf", "la2019"), ("c_fa_cm", "5")])).unwrap();
        assert_eq!(cfg.cost_model().unwrap().unwrap().c_fa_cm, 5.0);
        assert!(RunConfig::default().cost_model().unwrap().is_none());
    }
}
