//! Stage 2: per-image / per-keyframe features and sentiment, aggregated over
//! frames.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{
    prompts, EmbedInput, ModelBackend, ModelRequest, RequestHints, ResponseSchema, Task,
};
use crate::config::{FrameWeighting, PipelineConfig};
use crate::error::{Error, Result};
use crate::text::weighted_score;
use crate::types::{FeatureVector, ImageRef, Score, Visual};

/// MIME type from PNG / JPEG magic bytes.
pub fn sniff_mime(bytes: &[u8]) -> Option<&'static str> {
    if bytes.starts_with(&[0x89, b'P', b'N', b'G', 0x0D, 0x0A, 0x1A, 0x0A]) {
        Some("image/png")
    } else if bytes.starts_with(&[0xFF, 0xD8, 0xFF]) {
        Some("image/jpeg")
    } else {
        None
    }
}

fn has_image_extension(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        .unwrap_or(false)
}

fn check_ref(r: &ImageRef) -> Result<()> {
    match r {
        ImageRef::Path(p) => {
            if !has_image_extension(p) {
                return Err(Error::MissingFrame(format!(
                    "{}: not a .png/.jpg/.jpeg file",
                    p.display()
                )));
            }
            if !p.is_file() {
                return Err(Error::MissingFrame(format!("{}: no such file", p.display())));
            }
            Ok(())
        }
        ImageRef::Bytes(b) => sniff_mime(b).map(|_| ()).ok_or_else(|| {
            Error::MissingFrame(format!("{} bytes are neither PNG nor JPEG", b.len()))
        }),
        ImageRef::Precomputed(_) => Ok(()),
    }
}

/// Validates pre-extracted keyframes and returns them in input order.
pub fn decompose_video(frames: &[ImageRef]) -> Result<Vec<ImageRef>> {
    if frames.is_empty() {
        return Err(Error::MissingFrame("video has no keyframes".into()));
    }
    frames.iter().try_for_each(check_ref)?;
    Ok(frames.to_vec())
}

enum FramePixels {
    Encoded(Vec<u8>, &'static str),
    Features(FeatureVector),
}

fn load(frame: &ImageRef) -> Result<FramePixels> {
    check_ref(frame)?;
    match frame {
        ImageRef::Path(p) => {
            let bytes = std::fs::read(p)
                .map_err(|e| Error::MissingFrame(format!("{}: {e}", p.display())))?;
            let mime = sniff_mime(&bytes).ok_or_else(|| {
                Error::MissingFrame(format!("{}: content is neither PNG nor JPEG", p.display()))
            })?;
            Ok(FramePixels::Encoded(bytes, mime))
        }
        ImageRef::Bytes(b) => Ok(FramePixels::Encoded(b.clone(), sniff_mime(b).unwrap())),
        ImageRef::Precomputed(v) => Ok(FramePixels::Features(v.clone())),
    }
}

/// Encoded bytes and MIME type of a frame, or `None` for precomputed vectors.
pub(crate) fn encoded_image(frame: &ImageRef) -> Result<Option<(Vec<u8>, &'static str)>> {
    Ok(match load(frame)? {
        FramePixels::Encoded(bytes, mime) => Some((bytes, mime)),
        FramePixels::Features(_) => None,
    })
}

/// Visual features of one frame: a backend embedding, or the precomputed vector.
pub fn frame_features(frame: &ImageRef, backend: &dyn ModelBackend, dim: usize) -> Result<FeatureVector> {
    let v = match load(frame)? {
        FramePixels::Encoded(bytes, _) => backend.embed(EmbedInput::Image(&bytes))?,
        FramePixels::Features(v) => v,
    };
    v.expect_dim(dim)?;
    Ok(v)
}

/// One embed call (skipped for precomputed vectors) and one score-and-report call.
pub fn analyze_frame(
    frame: &ImageRef,
    backend: &dyn ModelBackend,
    dim: usize,
) -> Result<(Score, String, FeatureVector)> {
    let pixels = load(frame)?;
    let features = match &pixels {
        FramePixels::Encoded(bytes, _) => backend.embed(EmbedInput::Image(bytes))?,
        FramePixels::Features(v) => v.clone(),
    };
    features.expect_dim(dim)?;

    let mut req = ModelRequest::new(Task::FrameScore, ResponseSchema::ScoreAndReport, prompts::IMAGE_ANALYST);
    req = match pixels {
        FramePixels::Encoded(bytes, mime) if backend.supports_images() => {
            req.text("Analyze the sentiment of this image.").image(bytes, mime)
        }
        _ => req.text(format!(
            "Analyze the sentiment of an image known only by its {}-dimensional visual feature vector.",
            features.len()
        )),
    };
    req = req.hints(RequestHints {
        features: Some(features.clone()),
        ..Default::default()
    });
    let resp = backend.complete(&req)?;
    Ok((resp.expect_score()?, resp.expect_report()?, features))
}

pub fn frame_weights(m: usize, mode: FrameWeighting) -> Vec<f64> {
    match mode {
        FrameWeighting::Uniform => vec![1.0 / m as f64; m],
    }
}

/// Weighted frame score plus the frame reports, one `frame k:` line each.
pub fn aggregate_video(scores: &[Score], reports: &[String], weights: &[f64]) -> Result<(Score, String)> {
    if reports.len() != scores.len() {
        return Err(Error::WeightMismatch(format!(
            "{} reports for {} scores",
            reports.len(),
            scores.len()
        )));
    }
    let score = weighted_score(scores, weights)?;
    let report = reports
        .iter()
        .enumerate()
        .map(|(k, r)| format!("frame {k}: {r}"))
        .collect::<Vec<_>>()
        .join("\n");
    Ok((score, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualAnalysis {
    pub overall: Score,
    pub report: String,
    pub is_video: bool,
    pub frame_scores: Vec<Score>,
    pub frame_features: Vec<FeatureVector>,
    pub frame_weights: Vec<f64>,
}

pub fn run_image_analyst(
    visual: &Visual,
    backend: &dyn ModelBackend,
    config: &PipelineConfig,
) -> Result<VisualAnalysis> {
    let frames = match visual {
        Visual::VideoFrames(f) => decompose_video(f)?,
        Visual::ImageSet(imgs) => {
            if imgs.is_empty() {
                return Err(Error::MissingFrame("post has no images".into()));
            }
            imgs.iter().try_for_each(check_ref)?;
            imgs.clone()
        }
    };
    let results: Vec<(Score, String, FeatureVector)> = frames
        .par_iter()
        .map(|f| analyze_frame(f, backend, config.dimension))
        .collect::<Result<_>>()?;
    let mut frame_scores = Vec::with_capacity(results.len());
    let mut reports = Vec::with_capacity(results.len());
    let mut frame_features = Vec::with_capacity(results.len());
    for (s, r, f) in results {
        frame_scores.push(s);
        reports.push(r);
        frame_features.push(f);
    }
    let frame_weights = frame_weights(frame_scores.len(), config.frame_weighting);
    let (overall, report) = aggregate_video(&frame_scores, &reports, &frame_weights)?;
    Ok(VisualAnalysis {
        overall,
        report,
        is_video: visual.is_video(),
        frame_scores,
        frame_features,
        frame_weights,
    })
}

/// Frame features only, without scoring. Used when building a knowledge base.
pub fn embed_visual(visual: &Visual, backend: &dyn ModelBackend, dim: usize) -> Result<Vec<FeatureVector>> {
    visual
        .refs()
        .par_iter()
        .map(|f| frame_features(f, backend, dim))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::StubBackend;

    fn s(v: f64) -> Score {
        Score::new(v).unwrap()
    }

    fn vec_ref(first: f32, dim: usize) -> ImageRef {
        let mut v = vec![0.0; dim];
        v[0] = first;
        ImageRef::Precomputed(FeatureVector::new(v).unwrap())
    }

    const PNG_MAGIC: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0D, 0x0A, 0x1A, 0x0A];

    #[test]
    fn decompose_preserves_order_and_validates() {
        let dir = tempfile::tempdir().unwrap();
        let paths: Vec<ImageRef> = (0..3)
            .map(|i| {
                let p = dir.path().join(format!("k{i}.png"));
                std::fs::write(&p, PNG_MAGIC).unwrap();
                ImageRef::Path(p)
            })
            .collect();
        assert_eq!(decompose_video(&paths).unwrap(), paths);
        assert_eq!(decompose_video(&paths[..1]).unwrap().len(), 1);

        let mut bad = paths.clone();
        bad.push(ImageRef::Path(dir.path().join("missing.png")));
        assert!(matches!(decompose_video(&bad), Err(Error::MissingFrame(_))));
        assert!(decompose_video(&[]).is_err());
        assert!(decompose_video(&[ImageRef::Bytes(b"GIF89a".to_vec())]).is_err());
    }

    #[test]
    fn analyze_precomputed_frame_with_stub() {
        let b = StubBackend::with_defaults(4);
        let (score, report, f) = analyze_frame(&vec_ref(-0.35, 4), &b, 4).unwrap();
        assert_eq!(score.value(), -0.35f32 as f64);
        assert!(report.starts_with("stub: v[0]="));
        assert_eq!(f.as_slice()[0], -0.35);
        assert_eq!(analyze_frame(&vec_ref(-0.35, 4), &b, 4).unwrap(), (score, report, f));
        assert_eq!(b.image_embed_calls(), 0);
    }

    #[test]
    fn analyze_encoded_frame_embeds_bytes() {
        let b = StubBackend::with_defaults(16);
        let mut bytes = PNG_MAGIC.to_vec();
        bytes.extend_from_slice(b"pixels");
        let (_, _, f) = analyze_frame(&ImageRef::Bytes(bytes), &b, 16).unwrap();
        assert_eq!(f.len(), 16);
        assert_eq!(b.image_embed_calls(), 1);
        assert_eq!(b.calls(Task::FrameScore), 1);
    }

    #[test]
    fn unreadable_path_is_missing_frame() {
        let b = StubBackend::with_defaults(4);
        let r = ImageRef::Path("/definitely/not/here.jpg".into());
        assert!(matches!(analyze_frame(&r, &b, 4), Err(Error::MissingFrame(_))));
    }

    #[test]
    fn wrong_dimension_precomputed_vector() {
        let b = StubBackend::with_defaults(4);
        assert!(matches!(
            analyze_frame(&vec_ref(0.1, 3), &b, 4),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn aggregation_examples() {
        let (sc, r) = aggregate_video(&[s(0.5)], &["calm".into()], &[1.0]).unwrap();
        assert_eq!(sc.value(), 0.5);
        assert_eq!(r, "frame 0: calm");

        let w = frame_weights(2, FrameWeighting::Uniform);
        let (sc, _) = aggregate_video(&[s(0.6), s(-0.6)], &["a".into(), "b".into()], &w).unwrap();
        assert_eq!(sc.value(), 0.0);

        let w = frame_weights(3, FrameWeighting::Uniform);
        let reports: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        let (sc, r) = aggregate_video(&[s(0.9), s(0.3), s(0.0)], &reports, &w).unwrap();
        assert!((sc.value() - 0.4).abs() < 1e-12);
        assert_eq!(r, "frame 0: a\nframe 1: b\nframe 2: c");

        assert!(aggregate_video(&[s(0.1)], &[], &[1.0]).is_err());
    }

    #[test]
    fn run_over_keyframes() {
        let b = StubBackend::with_defaults(4);
        let cfg = PipelineConfig {
            dimension: 4,
            ..Default::default()
        };
        let single = Visual::ImageSet(vec![vec_ref(0.75, 4)]);
        let va = run_image_analyst(&single, &b, &cfg).unwrap();
        assert_eq!(va.frame_scores.len(), 1);
        assert_eq!(va.overall.value(), 0.75);

        let four = Visual::VideoFrames(vec![
            vec_ref(0.2, 4),
            vec_ref(0.2, 4),
            vec_ref(-0.2, 4),
            vec_ref(-0.2, 4),
        ]);
        let va = run_image_analyst(&four, &b, &cfg).unwrap();
        assert_eq!(va.overall.value(), 0.0);
        assert_eq!(va.report.lines().count(), 4);

        let two = Visual::VideoFrames(vec![vec_ref(1.0, 4), vec_ref(0.0, 4)]);
        assert_eq!(run_image_analyst(&two, &b, &cfg).unwrap().overall.value(), 0.5);
    }
}
