//! Round-trips an embedding store through the binary and text formats and
//! averages enrollment utterances into speaker models.

use sasv::protocol::EnrollmentMap;
use sasv::{build_enrollment, EmbeddingStore};

fn main() -> sasv::Result<()> {
    let store = EmbeddingStore::from_entries([
        ("alice_1", vec![1.0, 0.0, 0.0]),
        ("alice_2", vec![0.75, 0.5, 0.25]),
        ("bob_1", vec![0.0, 0.0, 2.0]),
    ])?;

    // the binary format stores f32, exact for these values
    let mut bin = Vec::new();
    store.write_binary(&mut bin)?;
    let mut tsv = Vec::new();
    store.write_tsv(&mut tsv)?;
    assert_eq!(EmbeddingStore::read_binary(bin.as_slice())?, store);
    assert_eq!(EmbeddingStore::read_tsv(tsv.as_slice())?, store);
    println!("binary: {} bytes, text: {} bytes", bin.len(), tsv.len());
    print!("{}", String::from_utf8_lossy(&tsv));

    let map = EnrollmentMap::parse("alice alice_1 alice_2\nbob bob_1\n")?;
    let models = build_enrollment(&map, &store)?;
    for (id, v) in models.iter() {
        println!("{id}: {v:?}");
    }
    Ok(())
}
