//! Plug a custom model into the pipeline by implementing `ModelBackend`.
//! This one wraps the stub but always answers "Surprise" in the final stage.

use mmsenti::backend::{EmbedInput, ModelRequest, ModelResponse, Task};
use mmsenti::fixtures::keyword_fixture;
use mmsenti::kb::build_kb;
use mmsenti::{FeatureVector, ModelBackend, Pipeline, PipelineConfig, SentimentLabel, StubBackend};

struct AlwaysSurprised(StubBackend);

impl ModelBackend for AlwaysSurprised {
    fn complete(&self, req: &ModelRequest) -> mmsenti::Result<ModelResponse> {
        if req.task == Task::Classify {
            return Ok(ModelResponse {
                label: Some(SentimentLabel::Surprise),
                report: Some("everything is surprising".into()),
                ..Default::default()
            });
        }
        self.0.complete(req)
    }

    fn embed(&self, input: EmbedInput<'_>) -> mmsenti::Result<FeatureVector> {
        self.0.embed(input)
    }

    fn supports_images(&self) -> bool {
        false
    }

    fn dimension(&self) -> usize {
        self.0.dimension()
    }
}

fn main() -> mmsenti::Result<()> {
    let pipeline = Pipeline::new(PipelineConfig {
        dimension: 32,
        ..Default::default()
    })?;
    let backend = AlwaysSurprised(StubBackend::with_defaults(32));
    let data = keyword_fixture(3, 32, 1);
    let store = build_kb(&data, &[], &backend, &pipeline.config, &pipeline.stopwords)?;
    for post in data.samples.iter().take(4) {
        let out = pipeline.run(post, &store, &backend)?;
        println!("{:<14} gold {:<10} predicted {}", post.id, post.gold_label.unwrap().name(), out.label);
    }
    Ok(())
}
