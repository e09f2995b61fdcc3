//! Trains every head on the same corpus and CM classifier seed and prints
//! one row per strategy, scored on a corpus drawn with another seed.

use sasv::metrics::evaluate;
use sasv::protocol::build_enrollment;
use sasv::scoring::Stores;
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

    let mut table = String::new();
    for strategy in Strategy::ALL {
        let cfg = TrainConfig { strategy, ..TrainConfig::default() };
        let model = train_two_stage(&corpus.trials, &stores, &cfg)?.model;
        let report = evaluate(&held_out.trials, &model.score_trials(&held_out.trials, &eval_stores)?, None, false)?;
        let rows = report.to_table(strategy.name());
        if table.is_empty() {
            table.push_str(rows.lines().next().unwrap_or_default());
            table.push('\n');
        }
        for row in rows.lines().skip(1) {
            table.push_str(row);
            table.push('\n');
        }
    }
    print!("{table}");
    Ok(())
}
