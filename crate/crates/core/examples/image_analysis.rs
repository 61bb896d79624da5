//! Stage 2: an image set of encoded bytes and a video given as precomputed
//! keyframe vectors.

use base64::Engine;
use mmsenti::image::run_image_analyst;
use mmsenti::{FeatureVector, ImageRef, PipelineConfig, StubBackend, Visual};

// 1x1 transparent PNG.
const PIXEL_PNG: &str = "iVBORw0KGgoAAAANSUhEUgAAAAEAAAABCAYAAAAfFcSJAAAADUlEQVR42mNkYPhfDwAChwGA60e6kgAAAABJRU5ErkJggg==";

fn keyframe(first: f32, dim: usize) -> ImageRef {
    let mut v = vec![0.05; dim];
    v[0] = first;
    ImageRef::Precomputed(FeatureVector::new(v).unwrap())
}

fn main() -> mmsenti::Result<()> {
    let config = PipelineConfig {
        dimension: 16,
        ..Default::default()
    };
    let backend = StubBackend::with_defaults(config.dimension);

    let png = base64::engine::general_purpose::STANDARD.decode(PIXEL_PNG).unwrap();
    let images = Visual::ImageSet(vec![ImageRef::Bytes(png)]);
    let a = run_image_analyst(&images, &backend, &config)?;
    println!("image set: score {} ({} embed call)\n{}\n", a.overall, backend.image_embed_calls(), a.report);

    let video = Visual::VideoFrames(vec![keyframe(0.8, 16), keyframe(0.2, 16), keyframe(-0.4, 16)]);
    let v = run_image_analyst(&video, &backend, &config)?;
    println!("video: score {} over {} keyframes, weights {:?}\n{}", v.overall, v.frame_scores.len(), v.frame_weights, v.report);
    Ok(())
}
