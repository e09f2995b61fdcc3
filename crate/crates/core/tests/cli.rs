use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sasv::metrics::evaluate;
use sasv::protocol::parse_trials;
use sasv::scoring::{fuse_scores, read_scores};

fn sasv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sasv")).args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let out = sasv(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &str = "n_speakers = 5\nutts_per_speaker = 8\ndim = 6  # small\n";

#[test]
fn synth_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.cfg");
    fs::write(&cfg, SMALL).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["synth", "--config", s(&cfg), "--out", s(&a), "--seed", "7"]);
    ok(&["synth", "--config", s(&cfg), "--out", s(&b), "--seed", "7"]);
    let without_out = |d: &Path| {
        let mut t = tree(d);
        let cfg = String::from_utf8(t.remove("resolved.cfg").unwrap()).unwrap();
        let kept: Vec<_> = cfg.lines().filter(|l| !l.starts_with("out ")).collect();
        t.insert("resolved.cfg".into(), kept.join("\n").into_bytes());
        t
    };
    let (ta, tb) = (without_out(&a), without_out(&b));
    assert_eq!(ta.keys().collect::<Vec<_>>(), ["asv.emb", "cm.emb", "enroll.txt", "resolved.cfg", "trials.txt"]);
    assert_eq!(ta, tb);
}

struct Run {
    _tmp: tempfile::TempDir,
    data: std::path::PathBuf,
}

impl Run {
    fn synth() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = tmp.path().join("c.cfg");
        fs::write(&cfg, SMALL).unwrap();
        let data = tmp.path().join("data");
        ok(&["synth", "--config", s(&cfg), "--out", s(&data)]);
        Run { _tmp: tmp, data }
    }

    fn p(&self, name: &str) -> String {
        self.data.join(name).to_string_lossy().into_owned()
    }

    fn inputs(&self) -> Vec<String> {
        ["--asv", &self.p("asv.emb"), "--cm", &self.p("cm.emb"), "--enroll", &self.p("enroll.txt"), "--trials", &self.p("trials.txt")]
            .map(str::to_string)
            .to_vec()
    }

    fn run(&self, head: &[&str]) -> Output {
        let mut args: Vec<String> = head.iter().map(|a| a.to_string()).collect();
        args.extend(self.inputs());
        sasv(&args.iter().map(String::as_str).collect::<Vec<_>>())
    }
}

#[test]
fn train_score_evaluate_pipeline() {
    let r = Run::synth();
    let out = r.p("tdt1");
    let t = r.run(&["train", "--out", &out, "--strategy", "tdt1", "--epochs", "10"]);
    assert!(t.status.success(), "{}", String::from_utf8_lossy(&t.stderr));
    let model = format!("{out}/model.json");
    assert!(r.run(&["score", "--out", &out, "--model", &model]).status.success());
    let scores = format!("{out}/scores.tsv");
    ok(&[
        "evaluate", "--out", &out, "--trials", &r.p("trials.txt"), "--scores", &scores, "--tdcf", "la2019",
        "--asv-scores", &format!("{out}/asv_scores.tsv"), "--cm-scores", &format!("{out}/cm_scores.tsv"), "--det",
    ]);
    let names = tree(Path::new(&out)).into_keys().collect::<Vec<_>>();
    for f in ["model.json", "train_cm.json", "train_head.json", "scores.tsv", "asv_scores.tsv", "cm_scores.tsv", "report.json", "report.txt", "det.tsv", "resolved.cfg"] {
        assert!(names.iter().any(|n| n == f), "missing {f}");
    }
    let report: sasv::metrics::EvalReport = serde_json::from_str(&fs::read_to_string(format!("{out}/report.json")).unwrap()).unwrap();
    let trials = parse_trials(&fs::read_to_string(r.p("trials.txt")).unwrap()).unwrap();
    let direct = evaluate(&trials, &read_scores(&scores).unwrap(), None, false).unwrap();
    assert_eq!(report.sasv, direct.sasv);
    assert!(report.min_tdcf.is_some());
}

#[test]
fn training_runs_repeat_bit_for_bit_from_echoed_config() {
    let r = Run::synth();
    let (a, b) = (r.p("a"), r.p("b"));
    assert!(r.run(&["train", "--out", &a, "--strategy", "attn", "--epochs", "5", "--assist"]).status.success());
    // the echoed config alone reproduces the run
    let echoed = format!("{a}/resolved.cfg");
    ok(&["train", "--config", &echoed, "--out", &b]);
    assert_eq!(fs::read(format!("{a}/model.json")).unwrap(), fs::read(format!("{b}/model.json")).unwrap());
    let model = fs::read_to_string(format!("{a}/model.json")).unwrap();
    assert!(model.contains("\"assist\""));
}

#[test]
fn missing_score_exits_2_and_names_the_pair() {
    let r = Run::synth();
    let trials = parse_trials(&fs::read_to_string(r.p("trials.txt")).unwrap()).unwrap();
    let partial: String = trials.iter().skip(1).map(|t| format!("{}\t{}\t0.5\n", t.enroll_model, t.test_utt)).collect();
    let scores = r.p("partial.tsv");
    fs::write(&scores, partial).unwrap();
    let out = sasv(&["evaluate", "--out", &r.p("ev"), "--trials", &r.p("trials.txt"), "--scores", &scores]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains(&trials[0].enroll_model) && msg.contains(&trials[0].test_utt), "{msg}");
}

#[test]
fn malformed_trial_line_reports_file_and_line() {
    let r = Run::synth();
    let bad = r.p("bad_trials.txt");
    fs::write(&bad, "spk000 spk000_t000 target\nspk000 spk000_t001 maybe\n").unwrap();
    let out = sasv(&["evaluate", "--out", &r.p("ev"), "--trials", &bad, "--scores", &r.p("trials.txt")]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("bad_trials.txt") && msg.contains("line 2"), "{msg}");
}

#[test]
fn usage_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let out = s(tmp.path());
    assert_eq!(sasv(&[]).status.code(), Some(1));
    assert_eq!(sasv(&["bogus", "--out", out]).status.code(), Some(1));
    assert_eq!(sasv(&["synth", "--out", out, "--lrr", "0.1"]).status.code(), Some(1));
    assert_eq!(sasv(&["synth", "--out", out, "--dim", "many"]).status.code(), Some(1));
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "lrr = 0.1\n").unwrap();
    let r = sasv(&["synth", "--config", s(&cfg), "--out", out]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("lrr"));
}

#[test]
fn fuse_then_evaluate_matches_library_composition() {
    let r = Run::synth();
    let mut files = Vec::new();
    for (i, st) in ["tdt1", "tdtd", "tdtm"].iter().enumerate() {
        let out = r.p(&format!("sys{i}"));
        assert!(r.run(&["train", "--out", &out, "--strategy", st, "--epochs", "5"]).status.success());
        assert!(r.run(&["score", "--out", &out, "--model", &format!("{out}/model.json")]).status.success());
        files.push(format!("{out}/scores.tsv"));
    }
    let fused_dir = r.p("fused");
    let mut args = vec!["fuse", "--out", &fused_dir, "--weights", "0.5,0.3,0.2"];
    args.extend(files.iter().map(String::as_str));
    ok(&args);
    let fused = format!("{fused_dir}/fused.tsv");
    ok(&["evaluate", "--out", &fused_dir, "--trials", &r.p("trials.txt"), "--scores", &fused]);

    let sets: Vec<_> = files.iter().map(|f| read_scores(f).unwrap()).collect();
    let manual = fuse_scores(&sets, &[0.5, 0.3, 0.2]).unwrap();
    assert_eq!(fs::read_to_string(&fused).unwrap(), sasv::scoring::format_scores(&manual));
    let trials = parse_trials(&fs::read_to_string(r.p("trials.txt")).unwrap()).unwrap();
    let report: sasv::metrics::EvalReport =
        serde_json::from_str(&fs::read_to_string(format!("{fused_dir}/report.json")).unwrap()).unwrap();
    let direct = evaluate(&trials, &read_scores(&fused).unwrap(), None, false).unwrap();
    assert_eq!(report, direct);
}

#[test]
fn commands_do_not_modify_inputs() {
    let r = Run::synth();
    let before = tree(&r.data);
    let out = r.p("run");
    assert!(r.run(&["train", "--out", &out, "--epochs", "2"]).status.success());
    assert!(r.run(&["score", "--out", &out, "--model", &format!("{out}/model.json")]).status.success());
    let after: BTreeMap<_, _> = tree(&r.data).into_iter().filter(|(k, _)| before.contains_key(k)).collect();
    assert_eq!(before, after);
}
