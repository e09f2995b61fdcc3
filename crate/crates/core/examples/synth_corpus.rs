//! Generates a seeded synthetic corpus and writes it in the on-disk formats
//! the command line reads.

use std::fs;

use sasv::protocol::serialize_trials;
use sasv::synth::{generate_corpus, SynthConfig};
use sasv::TrialLabel;

fn main() -> sasv::Result<()> {
    let cfg = SynthConfig { n_speakers: 10, utts_per_speaker: 12, ..SynthConfig::default() };
    let corpus = generate_corpus(&cfg)?;

    let count = |l: TrialLabel| corpus.trials.iter().filter(|t| t.label == Some(l)).count();
    println!(
        "{} utterances, {} trials: {} target, {} nontarget, {} spoof",
        corpus.asv.len(),
        corpus.trials.len(),
        count(TrialLabel::Target),
        count(TrialLabel::Nontarget),
        count(TrialLabel::Spoof),
    );

    let out = std::env::temp_dir().join("sasv_synth_example");
    fs::create_dir_all(&out)?;
    corpus.asv.save(out.join("asv.emb"))?;
    corpus.cm.save(out.join("cm.tsv"))?;
    fs::write(out.join("trials.txt"), serialize_trials(&corpus.trials))?;
    fs::write(out.join("enroll.txt"), corpus.enroll.serialize())?;
    println!("wrote {}", out.display());
    Ok(())
}
