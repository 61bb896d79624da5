//! Run one post against an OpenAI-compatible endpoint.
//!
//! ```text
//! MMSENTI_ENDPOINT=https://api.openai.com/v1 OPENAI_API_KEY=... \
//!     cargo run --example remote_backend
//! ```
//!
//! Optional: `MMSENTI_MODEL`, `MMSENTI_EMBEDDING_MODEL`.

use mmsenti::fixtures::keyword_fixture;
use mmsenti::kb::build_kb;
use mmsenti::{BackendKind, Pipeline, PipelineConfig, RemoteBackend};

fn main() -> mmsenti::Result<()> {
    let Ok(endpoint) = std::env::var("MMSENTI_ENDPOINT") else {
        eprintln!("set MMSENTI_ENDPOINT (and the API key variable) to run this example");
        return Ok(());
    };
    let mut config = PipelineConfig {
        backend: BackendKind::Remote,
        dimension: 256,
        ..Default::default()
    };
    config.remote.endpoint = endpoint;
    if let Ok(m) = std::env::var("MMSENTI_MODEL") {
        config.remote.model = m;
    }
    if let Ok(m) = std::env::var("MMSENTI_EMBEDDING_MODEL") {
        config.remote.embedding_model = m;
    }
    let pipeline = Pipeline::new(config)?;
    let backend = RemoteBackend::new(pipeline.config.remote.clone(), pipeline.config.dimension, 2)?;

    let data = keyword_fixture(1, pipeline.config.dimension, 5);
    let store = build_kb(&data, &[], &backend, &pipeline.config, &pipeline.stopwords)?;
    match pipeline.run(&data.samples[0], &store, &backend) {
        Ok(out) => print!("{}", out.pretty()),
        Err(e) => eprintln!("run failed: {e}"),
    }
    Ok(())
}
