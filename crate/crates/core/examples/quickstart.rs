//! Build a small knowledge base from synthetic posts and run one post through
//! all five stages with the offline stub backend.

use mmsenti::fixtures::keyword_fixture;
use mmsenti::kb::build_kb;
use mmsenti::{backend_from_config, Pipeline, PipelineConfig};

fn main() -> mmsenti::Result<()> {
    let config = PipelineConfig {
        dimension: 64,
        ..Default::default()
    };
    let pipeline = Pipeline::new(config)?;
    let backend = backend_from_config(&pipeline.config)?;

    let data = keyword_fixture(10, 64, 7);
    let (train, test) = mmsenti::split(&data, 0.2, 1)?;
    let store = build_kb(&train, &[], backend.as_ref(), &pipeline.config, &pipeline.stopwords)?;
    println!("knowledge base: {} entries\n", store.len());

    let post = &test.samples[0];
    println!("text: {}\n", post.text);
    let out = pipeline.run(post, &store, backend.as_ref())?;
    print!("{}", out.pretty());
    println!("\ngold {:?}, predicted {}", post.gold_label, out.label);
    println!("{}", out.prediction_json());
    Ok(())
}
