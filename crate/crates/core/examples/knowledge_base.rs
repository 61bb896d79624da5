//! Build a knowledge base from labelled posts plus a text-only corpus, save it
//! in the binary format, load it back and query it.

use mmsenti::fixtures::{keyword_fixture, synthetic_corpus};
use mmsenti::kb::{build_kb, similarity, summarize_retrieved};
use mmsenti::{FeatureVector, KbStore, Pipeline, PipelineConfig, StubBackend, ValenceMap};

fn main() -> mmsenti::Result<()> {
    let pipeline = Pipeline::new(PipelineConfig {
        dimension: 48,
        ..Default::default()
    })?;
    let cfg = &pipeline.config;
    let backend = StubBackend::with_defaults(cfg.dimension);

    let train = keyword_fixture(6, cfg.dimension, 3);
    let corpus = synthetic_corpus("reviews", 4, 9, &ValenceMap::default());
    let store = build_kb(&train, &[corpus], &backend, cfg, &pipeline.stopwords)?;

    let dir = tempfile::tempdir().map_err(|e| mmsenti::Error::io(".", e))?;
    let path = dir.path().join("kb.smkb");
    store.persist(&path)?;
    let bytes = std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0);
    let loaded = KbStore::load(&path)?;
    println!("{} entries, fused dimension {}, {bytes} bytes, round trip equal: {}", loaded.len(), loaded.dimension(), loaded == store);

    let query = loaded.entries()[0].embedding.clone();
    let hits = loaded.top_k(&query, cfg.top_k)?;
    for h in &hits {
        println!("  {:<22} {:<10} {:.4} {:?}", h.entry.id, h.entry.label.name(), h.similarity, h.entry.metadata.get("source"));
    }
    println!("{}", summarize_retrieved(&hits, &backend)?);

    let a = FeatureVector::new(vec![1.0, 0.0])?;
    let b = FeatureVector::new(vec![1.0, 1.0])?;
    println!("cos([1,0],[1,1]) = {:.5}", similarity(&a, &b)?);
    Ok(())
}
