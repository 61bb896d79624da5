//! Generate a balanced 3,500-post dataset, write it as JSONL, reload it and
//! take a stratified 10% test split.

use mmsenti::dataset::{stats, write_dataset};
use mmsenti::fixtures::{synthetic_dataset, SyntheticSpec};
use mmsenti::{load_dataset, split, StubLexicon, ValenceMap};

fn main() -> mmsenti::Result<()> {
    let spec = SyntheticSpec {
        dimension: 8,
        ..Default::default()
    };
    let data = synthetic_dataset(&spec, &StubLexicon::default(), &ValenceMap::default());

    let dir = tempfile::tempdir().map_err(|e| mmsenti::Error::io(".", e))?;
    let path = dir.path().join("synthetic.jsonl");
    write_dataset(&path, &data.samples)?;
    let loaded = load_dataset(&path)?;
    print!("{}", stats(&loaded).to_table());

    let (train, test) = split(&loaded, 0.1, 42)?;
    println!("\ntrain {} / test {}", train.len(), test.len());
    for l in mmsenti::SentimentLabel::ALL {
        println!("  {:<10} test {}", l.name(), test.label_counts()[l.index()]);
    }
    Ok(())
}
