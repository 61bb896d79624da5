//! Stage 1 on its own: preprocessing, segmentation, per-segment scores and
//! token-proportional weights.

use mmsenti::config::SegmentWeighting;
use mmsenti::text::{compute_weights, preprocess, run_text_analyst, segment, StopWords};
use mmsenti::{PipelineConfig, StubBackend};

fn main() -> mmsenti::Result<()> {
    let raw = "The concert was AMAZING and the crowd was lovely! Then it rained. \
               Honestly the ride home was terrible and boring.";
    let stopwords = StopWords::default();

    let pre = preprocess(raw, &stopwords)?;
    println!("preprocessed: {pre}");
    let segments = segment(&pre)?;
    for (s, w) in segments.iter().zip(compute_weights(&segments, SegmentWeighting::TokenProportional)) {
        println!("  [{}] {:?} tokens={} weight={w:.3}", s.index, s.text, s.token_count);
    }

    let config = PipelineConfig {
        dimension: 32,
        ..Default::default()
    };
    let backend = StubBackend::with_defaults(config.dimension);
    let analysis = run_text_analyst(raw, &backend, &config, &stopwords)?;
    println!("\n{}", analysis.summary());

    let uniform = PipelineConfig {
        segment_weighting: SegmentWeighting::Uniform,
        ..config
    };
    let flat = run_text_analyst(raw, &backend, &uniform, &stopwords)?;
    println!("uniform weights: overall {}", flat.overall);
    Ok(())
}
