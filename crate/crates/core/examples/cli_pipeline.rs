//! Drives the command-line entry point in-process: synth, train, score,
//! evaluate, with a config file plus flag overrides.

use std::fs;

fn run(args: &[&str]) {
    let code = sasv::cli::run(std::iter::once("sasv").chain(args.iter().copied()));
    assert_eq!(code, 0, "sasv {args:?}");
}

fn main() -> std::io::Result<()> {
    let root = std::env::temp_dir().join("sasv_cli_example");
    let _ = fs::remove_dir_all(&root);
    fs::create_dir_all(&root)?;
    let p = |name: &str| root.join(name).to_string_lossy().into_owned();

    fs::write(p("run.cfg"), "n_speakers = 8\nutts_per_speaker = 10\nstrategy = tdtd\nepochs = 50\n")?;
    let (data, model) = (p("data"), p("model"));
    run(&["synth", "--config", &p("run.cfg"), "--out", &data]);

    let inputs = [
        "--asv", &format!("{data}/asv.emb"),
        "--cm", &format!("{data}/cm.emb"),
        "--enroll", &format!("{data}/enroll.txt"),
        "--trials", &format!("{data}/trials.txt"),
    ];
    let (cfg, model_json) = (p("run.cfg"), format!("{model}/model.json"));
    run(&[&["train", "--config", &cfg, "--out", &model][..], &inputs].concat());
    run(&[&["score", "--out", &model, "--model", &model_json][..], &inputs].concat());
    run(&[
        "evaluate", "--out", &model, "--system", "tdtd",
        "--trials", &format!("{data}/trials.txt"),
        "--scores", &format!("{model}/scores.tsv"),
        "--asv-scores", &format!("{model}/asv_scores.tsv"),
        "--cm-scores", &format!("{model}/cm_scores.tsv"),
        "--tdcf", "la2019",
    ]);
    Ok(())
}
