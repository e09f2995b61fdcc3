//! Trains the CM classifier and a matrix-linear head on a synthetic corpus,
//! then scores and evaluates it with the min t-DCF.

use sasv::metrics::{evaluate, CostModel, TdcfInput};
use sasv::protocol::build_enrollment;
use sasv::scoring::Stores;
use sasv::synth::{generate_corpus, SynthConfig};
use sasv::training::{train_two_stage, TrainConfig};

fn main() -> sasv::Result<()> {
    let corpus = generate_corpus(&SynthConfig::default())?;
    let enroll = build_enrollment(&corpus.enroll, &corpus.asv)?;
    let stores = Stores { asv: &corpus.asv, enroll: &enroll, cm: &corpus.cm };

    let out = train_two_stage(&corpus.trials, &stores, &TrainConfig::default())?;
    let first = out.head_report.losses.first().copied().unwrap_or(f64::NAN);
    let last = out.head_report.losses.last().copied().unwrap_or(f64::NAN);
    println!("head loss {first:.4} -> {last:.4} over {} epochs", out.head_report.epochs);

    let scores = out.model.score_trials(&corpus.trials, &stores)?;
    let (asv_scores, cm_scores) = out.model.branch_scores(&corpus.trials, &stores)?;
    let cost = CostModel::asvspoof2019_la();
    let tdcf = TdcfInput { asv_scores: &asv_scores, cm_scores: &cm_scores, cost };
    let report = evaluate(&corpus.trials, &scores, Some(tdcf), false)?;
    print!("{}", report.to_table("tdt1"));
    Ok(())
}
