//! Weighted score-level fusion of three independently seeded systems,
//! evaluated on a held-out corpus.

use sasv::metrics::evaluate;
use sasv::protocol::build_enrollment;
use sasv::scoring::{fuse_scores, Stores};
use sasv::synth::{generate_corpus, SynthConfig};
use sasv::training::{train_two_stage, TrainConfig};
use sasv::Strategy;

fn main() -> sasv::Result<()> {
    let corpus = generate_corpus(&SynthConfig::default())?;
    let enroll = build_enrollment(&corpus.enroll, &corpus.asv)?;
    let stores = Stores { asv: &corpus.asv, enroll: &enroll, cm: &corpus.cm };
    let held_out = generate_corpus(&SynthConfig { seed: 43, ..SynthConfig::default() })?;
    let held_enroll = build_enrollment(&held_out.enroll, &held_out.asv)?;
    let eval_stores = Stores { asv: &held_out.asv, enroll: &held_enroll, cm: &held_out.cm };

    let mut sets = Vec::new();
    for (i, strategy) in [Strategy::MatrixLinear, Strategy::DiagZero, Strategy::Attention].into_iter().enumerate() {
        let mut cfg = TrainConfig { strategy, ..TrainConfig::default() };
        cfg.cm_hp.seed = 100 + i as u64;
        cfg.head_hp.seed = 100 + i as u64;
        let model = train_two_stage(&corpus.trials, &stores, &cfg)?.model;
        let scores = model.score_trials(&held_out.trials, &eval_stores)?;
        print!("{}", evaluate(&held_out.trials, &scores, None, false)?.to_table(strategy.name()).lines().skip(1).collect::<Vec<_>>().join("\n"));
        println!();
        sets.push(scores);
    }
    let fused = fuse_scores(&sets, &[0.4, 0.3, 0.3])?;
    print!("{}", evaluate(&held_out.trials, &fused, None, false)?.to_table("fused"));
    Ok(())
}
