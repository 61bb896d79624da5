//! Stage 3: consistent modalities pass through; a strong text/visual
//! disagreement triggers conflict hypotheses.

use mmsenti::fusion::run_fusion_inspector;
use mmsenti::image::run_image_analyst;
use mmsenti::text::{run_text_analyst, StopWords};
use mmsenti::{FeatureVector, ImageRef, PipelineConfig, Post, StubBackend, Visual};

// The stub scores a frame by its first component and fuses on feature means,
// so a constant vector gives the same value to both.
fn frame(value: f32, dim: usize) -> ImageRef {
    ImageRef::Precomputed(FeatureVector::new(vec![value; dim]).unwrap())
}

fn main() -> mmsenti::Result<()> {
    let config = PipelineConfig {
        dimension: 32,
        ..Default::default()
    };
    let backend = StubBackend::with_defaults(config.dimension);
    let stopwords = StopWords::default();

    for (text, visual_score) in [
        ("A quiet walk to the market.", 0.05),
        ("What a wonderful, happy day at the beach.", -0.9),
    ] {
        let post = Post::new("demo", text, Visual::ImageSet(vec![frame(visual_score, 32)]), None)?;
        let t = run_text_analyst(&post.text, &backend, &config, &stopwords)?;
        let v = run_image_analyst(&post.visual, &backend, &config)?;
        let f = run_fusion_inspector(&post, &t, &v, &backend, &config)?;
        println!(
            "text {} visual {} -> multimodal {} (delta_text {:.3}, delta_image {:.3}, theta {})",
            t.overall, v.overall, f.multimodal_score, f.delta_text, f.delta_image, config.theta
        );
        match f.hypotheses.as_slice() {
            [] => println!("  no conflict"),
            hs => hs.iter().for_each(|h| println!("  hypothesis: {h}")),
        }
    }
    Ok(())
}
