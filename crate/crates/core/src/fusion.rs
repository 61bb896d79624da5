//! Stage 3: fuse modality features, score the fused representation, measure
//! cross-modal disagreement and, when it exceeds the threshold, ask for
//! hypotheses explaining the conflict.

use serde::{Deserialize, Serialize};

use crate::backend::{prompts, ModelBackend, ModelRequest, RequestHints, ResponseSchema, Task};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::image::VisualAnalysis;
use crate::text::TextAnalysis;
use crate::types::{FeatureVector, Post, Score};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionOutput {
    pub multimodal_score: Score,
    pub fusion_report: String,
    pub delta_text: f64,
    pub delta_image: f64,
    /// Empty unless a delta exceeded the conflict threshold.
    pub hypotheses: Vec<String>,
    pub combined_features: FeatureVector,
}

/// Component-wise mean of `vectors`, each of which must have length `dim`.
pub fn mean_pool(vectors: &[FeatureVector], dim: usize) -> Result<Vec<f32>> {
    if vectors.is_empty() {
        return Err(Error::InvalidVector("nothing to pool".into()));
    }
    let mut acc = vec![0f64; dim];
    for v in vectors {
        v.expect_dim(dim)?;
        for (a, &x) in acc.iter_mut().zip(v.as_slice()) {
            *a += x as f64;
        }
    }
    let n = vectors.len() as f64;
    Ok(acc.into_iter().map(|a| (a / n) as f32).collect())
}

/// Concatenates the pooled text half and pooled visual half; a missing
/// modality contributes zeros.
pub fn concat_pooled(
    text: Option<&[FeatureVector]>,
    visual: Option<&[FeatureVector]>,
    dim: usize,
) -> Result<FeatureVector> {
    let half = |vs: Option<&[FeatureVector]>| match vs {
        Some(vs) => mean_pool(vs, dim),
        None => Ok(vec![0.0; dim]),
    };
    let mut out = half(text)?;
    out.extend(half(visual)?);
    FeatureVector::new(out)
}

/// Mean-pool each modality and concatenate, text half first.
pub fn combine_features(text: &TextAnalysis, visual: &VisualAnalysis, dim: usize) -> Result<FeatureVector> {
    concat_pooled(Some(&text.segment_features), Some(&visual.frame_features), dim)
}

/// One score-and-report call over the fused features and both modality summaries.
pub fn fuse(
    combined: &FeatureVector,
    text_summary: &str,
    visual_report: &str,
    backend: &dyn ModelBackend,
    dim: usize,
) -> Result<(Score, String)> {
    combined.expect_dim(2 * dim)?;
    let req = ModelRequest::new(Task::Fusion, ResponseSchema::ScoreAndReport, prompts::FUSION_INSPECTOR)
        .text(format!("Text analysis:\n{text_summary}"))
        .text(format!("Visual analysis:\n{visual_report}"))
        .hints(RequestHints {
            features: Some(combined.clone()),
            ..Default::default()
        });
    let resp = backend.complete(&req)?;
    Ok((resp.expect_score()?, resp.expect_report()?))
}

/// `(|s_mm - s_text|, |s_mm - s_visual|)`.
pub fn compute_deltas(s_mm: Score, s_text: Score, s_visual: Score) -> (f64, f64) {
    (
        (s_mm.value() - s_text.value()).abs(),
        (s_mm.value() - s_visual.value()).abs(),
    )
}

/// True when either delta strictly exceeds `theta`.
pub fn is_conflict(deltas: (f64, f64), theta: f64) -> bool {
    deltas.0.max(deltas.1) > theta
}

/// Everything the auxiliary analysis sees when refinement triggers.
#[derive(Debug, Clone, Copy)]
pub struct RefineContext<'a> {
    pub post: &'a Post,
    pub text: &'a TextAnalysis,
    pub visual: &'a VisualAnalysis,
    pub multimodal_score: Score,
}

/// Returns hypotheses when a delta exceeds `theta`; otherwise returns an empty
/// list without calling the backend.
pub fn maybe_refine(
    deltas: (f64, f64),
    theta: f64,
    ctx: &RefineContext<'_>,
    backend: &dyn ModelBackend,
) -> Result<Vec<String>> {
    if theta.is_nan() || theta <= 0.0 {
        return Err(Error::Config(format!("theta must be > 0, got {theta}")));
    }
    if !is_conflict(deltas, theta) {
        return Ok(Vec::new());
    }
    let req = ModelRequest::new(Task::Hypotheses, ResponseSchema::Hypotheses, prompts::AUX_ANALYST)
        .text(format!("Post text: {}", ctx.post.text))
        .text(ctx.text.summary())
        .text(format!(
            "visual score {} ({}):\n{}",
            ctx.visual.overall,
            if ctx.visual.is_video { "video" } else { "image" },
            ctx.visual.report
        ))
        .text(format!(
            "multimodal score {}; delta_text={:.4}, delta_image={:.4}, threshold={theta}",
            ctx.multimodal_score, deltas.0, deltas.1
        ))
        .hints(RequestHints {
            post_text: Some(ctx.post.text.clone()),
            ..Default::default()
        });
    let resp = backend.complete(&req)?;
    resp.hypotheses
        .filter(|h| !h.is_empty())
        .ok_or_else(|| Error::Protocol("auxiliary analysis returned no hypotheses".into()))
}

pub fn run_fusion_inspector(
    post: &Post,
    text: &TextAnalysis,
    visual: &VisualAnalysis,
    backend: &dyn ModelBackend,
    config: &PipelineConfig,
) -> Result<FusionOutput> {
    let combined = combine_features(text, visual, config.dimension)?;
    let (s_mm, report) = fuse(&combined, &text.summary(), &visual.report, backend, config.dimension)?;
    let deltas = compute_deltas(s_mm, text.overall, visual.overall);
    let ctx = RefineContext {
        post,
        text,
        visual,
        multimodal_score: s_mm,
    };
    let hypotheses = maybe_refine(deltas, config.theta, &ctx, backend)?;
    Ok(FusionOutput {
        multimodal_score: s_mm,
        fusion_report: report,
        delta_text: deltas.0,
        delta_image: deltas.1,
        hypotheses,
        combined_features: combined,
    })
}
