//! Stage 5 and end-to-end orchestration: mean retrieved valence, convex
//! score combination, final classification, and the pipeline runners.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::backend::{prompts, ModelBackend, ModelRequest, RequestHints, ResponseSchema, Task};
use crate::config::{check_mixing_weights, PipelineConfig};
use crate::error::{Error, Result, Stage};
use crate::fusion::{compute_deltas, concat_pooled, run_fusion_inspector, FusionOutput};
use crate::image::{encoded_image, run_image_analyst, VisualAnalysis};
use crate::kb::{run_kb_assistant, KbStore, Retrieved, RetrievalOutput};
use crate::text::{run_text_analyst, StopWords, TextAnalysis};
use crate::types::{label_valence, Post, Score, SentimentLabel, ValenceMap};

/// Unweighted mean valence of the retrieved entries' labels.
pub fn mean_similar(similar: &[Retrieved], valence: &ValenceMap) -> Result<Score> {
    if similar.is_empty() {
        return Err(Error::EmptyRetrieval);
    }
    let sum: f64 = similar
        .iter()
        .map(|r| label_valence(r.entry.label, valence).value())
        .sum();
    let mean = sum / similar.len() as f64;
    // The mean of values in [-1, 1] can only leave the range by rounding.
    Score::new(mean.clamp(-1.0, 1.0))
}

/// `alpha · s_mm + beta · s_sim`.
pub fn combine_scores(s_mm: Score, s_sim: Score, alpha: f64, beta: f64) -> Result<Score> {
    check_mixing_weights(alpha, beta)?;
    let v = alpha * s_mm.value() + beta * s_sim.value();
    let (lo, hi) = if s_mm <= s_sim { (s_mm, s_sim) } else { (s_sim, s_mm) };
    Score::new(v.clamp(lo.value(), hi.value()))
}

/// One label-and-report call. `post_text` is `None` when the text modality is
/// ablated; images go along only for visual-capable backends.
pub fn classify(
    combined: Score,
    fusion_report: &str,
    rag_report: Option<&str>,
    hypotheses: &[String],
    post: &Post,
    include_text: bool,
    backend: &dyn ModelBackend,
) -> Result<(SentimentLabel, String)> {
    let mut req = ModelRequest::new(Task::Classify, ResponseSchema::LabelAndReport, prompts::CLASSIFIER)
        .text(format!("Combined sentiment score: {combined}"))
        .text(format!("Fusion report:\n{fusion_report}"));
    if let Some(r) = rag_report {
        req = req.text(format!("Similar annotated examples:\n{r}"));
    }
    if !hypotheses.is_empty() {
        req = req.text(format!("Conflict hypotheses:\n- {}", hypotheses.join("\n- ")));
    }
    if include_text {
        req = req.text(format!("Post text: {}", post.text));
    }
    if backend.supports_images() {
        for frame in post.visual.refs() {
            if let Some((bytes, mime)) = encoded_image(frame)? {
                req = req.image(bytes, mime);
            }
        }
    }
    req = req.hints(RequestHints {
        combined_score: Some(combined),
        post_text: include_text.then(|| post.text.clone()),
        ..Default::default()
    });
    let resp = backend.complete(&req)?;
    Ok((resp.expect_label()?, resp.expect_report()?))
}

/// Pipeline variant; `Full` runs every stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    Full,
    NoKb,
    NoFusionInspector,
    TextOnly,
    ImageOnly,
    NoAggregator,
}

impl AblationMode {
    pub const ALL: [AblationMode; 6] = [
        AblationMode::Full,
        AblationMode::NoKb,
        AblationMode::NoFusionInspector,
        AblationMode::TextOnly,
        AblationMode::ImageOnly,
        AblationMode::NoAggregator,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationMode::Full => "full",
            AblationMode::NoKb => "no_kb",
            AblationMode::NoFusionInspector => "no_fusion_inspector",
            AblationMode::TextOnly => "text_only",
            AblationMode::ImageOnly => "image_only",
            AblationMode::NoAggregator => "no_aggregator",
        }
    }

    /// Row label in the ablation table.
    pub fn row_label(self) -> &'static str {
        match self {
            AblationMode::Full => "Full pipeline",
            AblationMode::NoKb => "w/o KB Assistant (no retrieval)",
            AblationMode::NoFusionInspector => "w/o Fusion Inspector (no refinement)",
            AblationMode::TextOnly => "w/o Image Analyst (text only)",
            AblationMode::ImageOnly => "w/o Text Analyst (image/video only)",
            AblationMode::NoAggregator => "w/o Classifier Aggregator (direct fusion only)",
        }
    }

    fn uses_text(self) -> bool {
        self != AblationMode::ImageOnly
    }

    fn uses_visual(self) -> bool {
        self != AblationMode::TextOnly
    }

    fn uses_kb(self) -> bool {
        self != AblationMode::NoKb
    }
}

impl fmt::Display for AblationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        AblationMode::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown ablation mode {s:?}")))
    }
}

/// Upstream stage outputs kept for audit. A stage skipped by the ablation
/// mode leaves its slot empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub text: Option<TextAnalysis>,
    pub image: Option<VisualAnalysis>,
    pub fusion: FusionOutput,
    pub rag: Option<RetrievalOutput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalOutput {
    pub post_id: String,
    pub mode: AblationMode,
    pub label: SentimentLabel,
    /// Header line `label=<L> combined=<S>` followed by the model's justification.
    pub final_report: String,
    pub combined_score: Score,
    /// `None` when the mode skips the retrieved-valence combination.
    pub similar_score: Option<Score>,
    /// Mixing weights actually applied; `(1, 0)` when no combination happened.
    pub alpha: f64,
    pub beta: f64,
    pub trace: Trace,
}

impl FinalOutput {
    /// One prediction JSONL object.
    pub fn prediction_json(&self) -> serde_json::Value {
        json!({
            "id": self.post_id,
            "label": self.label,
            "combined_score": self.combined_score,
            "similar_score": self.similar_score,
            "delta_text": self.trace.fusion.delta_text,
            "delta_image": self.trace.fusion.delta_image,
            "hypotheses": self.trace.fusion.hypotheses,
            "report": self.final_report,
        })
    }

    /// Stage-by-stage human-readable trace.
    pub fn pretty(&self) -> String {
        let mut s = format!("post {} (mode {})\n", self.post_id, self.mode);
        match &self.trace.text {
            Some(t) => {
                s.push_str(&format!("[1] text analyst: score {}\n", t.overall));
                for ((seg, sc), w) in t.segments.iter().zip(&t.segment_scores).zip(&t.weights) {
                    s.push_str(&format!("    segment {} {:?}: {sc} (weight {w:.4})\n", seg.index, seg.text));
                }
            }
            None => s.push_str("[1] text analyst: skipped\n"),
        }
        match &self.trace.image {
            Some(v) => {
                let kind = if v.is_video { "video" } else { "image set" };
                s.push_str(&format!("[2] image analyst: score {} over {} frame(s), {kind}\n", v.overall, v.frame_scores.len()));
                for line in v.report.lines() {
                    s.push_str(&format!("    {line}\n"));
                }
            }
            None => s.push_str("[2] image analyst: skipped\n"),
        }
        let f = &self.trace.fusion;
        s.push_str(&format!(
            "[3] fusion inspector: multimodal {} delta_text {:.4} delta_image {:.4}\n    {}\n",
            f.multimodal_score, f.delta_text, f.delta_image, f.fusion_report
        ));
        for h in &f.hypotheses {
            s.push_str(&format!("    hypothesis: {h}\n"));
        }
        match &self.trace.rag {
            Some(r) => {
                s.push_str(&format!("[4] kb assistant: {}\n", r.rag_report));
                for hit in &r.similar {
                    s.push_str(&format!(
                        "    {} [{}] similarity {:.4}\n",
                        hit.entry.id, hit.entry.label, hit.similarity
                    ));
                }
            }
            None => s.push_str("[4] kb assistant: skipped\n"),
        }
        let sim = self.similar_score.map_or("n/a".to_string(), |s| s.to_string());
        s.push_str(&format!(
            "[5] classifier aggregator: similar {sim}, alpha {} beta {}, combined {}\n",
            self.alpha, self.beta, self.combined_score
        ));
        for line in self.final_report.lines() {
            s.push_str(&format!("    {line}\n"));
        }
        s
    }
}

fn text_only_fusion(text: &TextAnalysis, dim: usize) -> Result<FusionOutput> {
    Ok(FusionOutput {
        multimodal_score: text.overall,
        fusion_report: "image analyst disabled: multimodal score is the text score".into(),
        delta_text: 0.0,
        delta_image: 0.0,
        hypotheses: Vec::new(),
        combined_features: concat_pooled(Some(&text.segment_features), None, dim)?,
    })
}

fn image_only_fusion(visual: &VisualAnalysis, dim: usize) -> Result<FusionOutput> {
    Ok(FusionOutput {
        multimodal_score: visual.overall,
        fusion_report: "text analyst disabled: multimodal score is the visual score".into(),
        delta_text: 0.0,
        delta_image: 0.0,
        hypotheses: Vec::new(),
        combined_features: concat_pooled(None, Some(&visual.frame_features), dim)?,
    })
}

fn mean_fusion(text: &TextAnalysis, visual: &VisualAnalysis, dim: usize) -> Result<FusionOutput> {
    let s_mm = Score::new((text.overall.value() + visual.overall.value()) / 2.0)?;
    let (delta_text, delta_image) = compute_deltas(s_mm, text.overall, visual.overall);
    Ok(FusionOutput {
        multimodal_score: s_mm,
        fusion_report: "fusion inspector disabled: multimodal score is the mean of the unimodal scores".into(),
        delta_text,
        delta_image,
        hypotheses: Vec::new(),
        combined_features: concat_pooled(Some(&text.segment_features), Some(&visual.frame_features), dim)?,
    })
}

/// Configuration plus loaded stop-words: everything a run needs besides the
/// post, the store and the backend.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub config: PipelineConfig,
    pub stopwords: StopWords,
}

impl Pipeline {
    /// Validates `config` and loads its stop-word list (or the built-in one).
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let stopwords = match &config.stopwords_path {
            Some(p) => StopWords::from_file(p)?,
            None => StopWords::default(),
        };
        Ok(Pipeline { config, stopwords })
    }

    pub fn run(&self, post: &Post, store: &KbStore, backend: &dyn ModelBackend) -> Result<FinalOutput> {
        self.run_mode(post, store, backend, AblationMode::Full)
    }

    /// Stages 1 to 5 in order; the first failure aborts with a stage-tagged error.
    pub fn run_mode(
        &self,
        post: &Post,
        store: &KbStore,
        backend: &dyn ModelBackend,
        mode: AblationMode,
    ) -> Result<FinalOutput> {
        let cfg = &self.config;
        post.validate()?;

        let text = mode
            .uses_text()
            .then(|| run_text_analyst(&post.text, backend, cfg, &self.stopwords))
            .transpose()
            .map_err(|e| e.at_stage(Stage::TextAnalyst))?;
        let image = mode
            .uses_visual()
            .then(|| run_image_analyst(&post.visual, backend, cfg))
            .transpose()
            .map_err(|e| e.at_stage(Stage::ImageAnalyst))?;

        let fusion = match (&text, &image) {
            (Some(t), Some(v)) if mode == AblationMode::NoFusionInspector => mean_fusion(t, v, cfg.dimension),
            (Some(t), Some(v)) => run_fusion_inspector(post, t, v, backend, cfg),
            (Some(t), None) => text_only_fusion(t, cfg.dimension),
            (None, Some(v)) => image_only_fusion(v, cfg.dimension),
            (None, None) => unreachable!("every mode keeps at least one modality"),
        }
        .map_err(|e| e.at_stage(Stage::FusionInspector))?;

        let rag = mode
            .uses_kb()
            .then(|| run_kb_assistant(&fusion, store, backend, cfg))
            .transpose()
            .map_err(|e| e.at_stage(Stage::KbAssistant))?;

        let stage5 = || -> Result<_> {
            let s_mm = fusion.multimodal_score;
            let (combined, similar, alpha, beta) = match (&rag, mode) {
                (Some(r), m) if m != AblationMode::NoAggregator => {
                    let s_sim = mean_similar(&r.similar, &cfg.valence)?;
                    (combine_scores(s_mm, s_sim, cfg.alpha, cfg.beta)?, Some(s_sim), cfg.alpha, cfg.beta)
                }
                _ => (s_mm, None, 1.0, 0.0),
            };
            let (label, why) = classify(
                combined,
                &fusion.fusion_report,
                rag.as_ref().map(|r| r.rag_report.as_str()),
                &fusion.hypotheses,
                post,
                mode.uses_text(),
                backend,
            )?;
            Ok((label, why, combined, similar, alpha, beta))
        };
        let (label, why, combined_score, similar_score, alpha, beta) =
            stage5().map_err(|e| e.at_stage(Stage::ClassifierAggregator))?;

        Ok(FinalOutput {
            post_id: post.id.clone(),
            mode,
            label,
            final_report: format!("label={label} combined={combined_score}\n{why}"),
            combined_score,
            similar_score,
            alpha,
            beta,
            trace: Trace {
                text,
                image,
                fusion,
                rag,
            },
        })
    }

    /// Runs every post concurrently (bounded by the current rayon pool) and
    /// returns outputs in input order.
    pub fn run_batch(
        &self,
        posts: &[Post],
        store: &KbStore,
        backend: &dyn ModelBackend,
        mode: AblationMode,
    ) -> Vec<Result<FinalOutput>> {
        posts
            .par_iter()
            .map(|p| self.run_mode(p, store, backend, mode))
            .collect()
    }
}

/// One-call pipeline with the built-in stop-word list or the configured one.
pub fn run_pipeline(
    post: &Post,
    store: &KbStore,
    backend: &dyn ModelBackend,
    config: &PipelineConfig,
) -> Result<FinalOutput> {
    Pipeline::new(config.clone())?.run(post, store, backend)
}

pub fn run_pipeline_with_mode(
    post: &Post,
    store: &KbStore,
    backend: &dyn ModelBackend,
    config: &PipelineConfig,
    mode: AblationMode,
) -> Result<FinalOutput> {
    Pipeline::new(config.clone())?.run_mode(post, store, backend, mode)
}

/// Prediction JSONL, one line per output, in order.
pub fn predictions_jsonl(outputs: &[FinalOutput]) -> String {
    let mut s = String::new();
    for o in outputs {
        s.push_str(&o.prediction_json().to_string());
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::backend::StubBackend;
    use crate::fixtures::keyword_fixture;
    use crate::kb::{build_kb, KbEntry};
    use crate::types::{FeatureVector, ImageRef, Visual};
    use SentimentLabel::*;

    fn s(v: f64) -> Score {
        Score::new(v).unwrap()
    }

    fn hit(label: SentimentLabel) -> Retrieved {
        Retrieved {
            entry: KbEntry {
                id: format!("{label}"),
                text: "t".into(),
                visual_refs: vec![],
                label,
                embedding: FeatureVector::zeros(2),
                metadata: BTreeMap::new(),
            },
            similarity: 0.5,
        }
    }

    #[test]
    fn mean_similar_examples() {
        let vm = ValenceMap::default();
        assert_eq!(mean_similar(&[hit(Happiness)], &vm).unwrap().value(), 0.9);
        let m = mean_similar(&[hit(Happiness), hit(Anger), hit(Like)], &vm).unwrap();
        assert!((m.value() - 0.7 / 3.0).abs() < 1e-12);
        let mut sym = ValenceMap::default();
        sym.set(Like, s(0.5));
        sym.set(Fear, s(-0.5));
        assert_eq!(mean_similar(&[hit(Like), hit(Fear)], &sym).unwrap().value(), 0.0);
        assert!(matches!(mean_similar(&[], &vm), Err(Error::EmptyRetrieval)));
    }

    #[test]
    fn combine_examples() {
        assert_eq!(combine_scores(s(0.37), s(-0.9), 1.0, 0.0).unwrap().value(), 0.37);
        assert!((combine_scores(s(0.5), s(-0.5), 0.7, 0.3).unwrap().value() - 0.2).abs() < 1e-12);
        assert_eq!(combine_scores(s(-0.4), s(-0.4), 0.25, 0.75).unwrap().value(), -0.4);
        assert!(matches!(combine_scores(s(0.1), s(0.2), 0.7, 0.4), Err(Error::WeightViolation(_))));
        assert!(matches!(combine_scores(s(0.1), s(0.2), 1.2, -0.2), Err(Error::WeightViolation(_))));
    }

    fn post(text: &str) -> Post {
        Post::new(
            "p",
            text,
            Visual::ImageSet(vec![ImageRef::Precomputed(FeatureVector::zeros(4))]),
            None,
        )
        .unwrap()
    }

    #[test]
    fn classify_examples() {
        let b = StubBackend::with_defaults(4);
        let c = |score: f64, text: &str| {
            classify(s(score), "f", Some("r"), &[], &post(text), true, &b).unwrap().0
        };
        assert_eq!(c(0.9, "I was so terrified of the storm"), Fear);
        assert_eq!(c(0.85, "a plain caption"), Happiness);
        assert_eq!(c(-0.75, "a plain caption"), Anger);
        // Without the text the keyword rule cannot fire.
        let (l, _) = classify(s(0.85), "f", None, &[], &post("terrified"), false, &b).unwrap();
        assert_eq!(l, Happiness);
    }

    fn setup(dim: usize) -> (Pipeline, StubBackend, crate::dataset::Dataset, KbStore) {
        let config = PipelineConfig {
            dimension: dim,
            ..Default::default()
        };
        let pipeline = Pipeline::new(config).unwrap();
        let backend = StubBackend::with_defaults(dim);
        let data = keyword_fixture(4, dim, 11);
        let store = build_kb(&data, &[], &backend, &pipeline.config, &pipeline.stopwords).unwrap();
        backend.reset_counters();
        (pipeline, backend, data, store)
    }

    #[test]
    fn keyword_posts_recover_gold_and_runs_are_deterministic() {
        let (pipeline, backend, data, store) = setup(16);
        for p in &data.samples {
            let a = pipeline.run(p, &store, &backend).unwrap();
            assert_eq!(Some(a.label), p.gold_label);
            let b = pipeline.run(p, &store, &backend).unwrap();
            assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
            let sim = a.similar_score.unwrap();
            let expect = a.alpha * a.trace.fusion.multimodal_score.value() + a.beta * sim.value();
            assert!((a.combined_score.value() - expect).abs() < 1e-9);
            assert!(a.final_report.starts_with(&format!("label={} combined={}\n", a.label, a.combined_score)));
        }
    }

    #[test]
    fn empty_store_fails_at_stage_four() {
        let (pipeline, backend, data, _) = setup(8);
        let err = pipeline.run(&data.samples[0], &KbStore::new(16), &backend).unwrap_err();
        assert_eq!(err.stage(), Some(Stage::KbAssistant));
        assert!(matches!(err.root(), Error::EmptyStore));
        // Without retrieval the empty store is never touched.
        assert!(pipeline
            .run_mode(&data.samples[0], &KbStore::new(16), &backend, AblationMode::NoKb)
            .is_ok());
    }

    #[test]
    fn ablation_modes_skip_their_stages() {
        let (pipeline, backend, data, store) = setup(8);
        let p = &data.samples[0];

        let out = pipeline.run_mode(p, &store, &backend, AblationMode::NoKb).unwrap();
        assert_eq!(store.query_count(), 0);
        assert_eq!(backend.calls(Task::RagSummary), 0);
        assert_eq!((out.alpha, out.beta, out.similar_score), (1.0, 0.0, None));
        assert_eq!(out.combined_score, out.trace.fusion.multimodal_score);

        backend.reset_counters();
        let out = pipeline.run_mode(p, &store, &backend, AblationMode::TextOnly).unwrap();
        assert_eq!(backend.calls(Task::FrameScore), 0);
        assert_eq!(backend.image_embed_calls(), 0);
        assert_eq!(backend.calls(Task::Fusion), 0);
        assert!(out.trace.image.is_none());
        assert_eq!(out.trace.fusion.multimodal_score, out.trace.text.as_ref().unwrap().overall);
        assert!(out.trace.fusion.combined_features.as_slice()[8..].iter().all(|&x| x == 0.0));

        backend.reset_counters();
        let out = pipeline.run_mode(p, &store, &backend, AblationMode::ImageOnly).unwrap();
        assert_eq!(backend.calls(Task::SegmentScore), 0);
        assert_eq!(backend.text_embed_calls(), 0);
        assert!(out.trace.text.is_none());
        assert!(out.trace.fusion.combined_features.as_slice()[..8].iter().all(|&x| x == 0.0));

        backend.reset_counters();
        let out = pipeline.run_mode(p, &store, &backend, AblationMode::NoFusionInspector).unwrap();
        assert_eq!(backend.calls(Task::Fusion) + backend.calls(Task::Hypotheses), 0);
        let t = out.trace.text.as_ref().unwrap().overall.value();
        let v = out.trace.image.as_ref().unwrap().overall.value();
        assert!((out.trace.fusion.multimodal_score.value() - (t + v) / 2.0).abs() < 1e-12);
        assert!(out.trace.fusion.hypotheses.is_empty());

        let out = pipeline.run_mode(p, &store, &backend, AblationMode::NoAggregator).unwrap();
        assert!(out.trace.rag.is_some());
        assert_eq!(out.similar_score, None);
        assert_eq!(out.combined_score, out.trace.fusion.multimodal_score);
    }

    #[test]
    fn mode_names_round_trip() {
        for m in AblationMode::ALL {
            assert_eq!(m.name().parse::<AblationMode>().unwrap(), m);
        }
        assert_eq!("no-kb".parse::<AblationMode>().unwrap(), AblationMode::NoKb);
        assert!("bogus".parse::<AblationMode>().is_err());
    }

    #[test]
    fn prediction_line_fields() {
        let (pipeline, backend, data, store) = setup(8);
        let out = pipeline.run(&data.samples[0], &store, &backend).unwrap();
        let v = out.prediction_json();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        for k in ["id", "label", "combined_score", "similar_score", "delta_text", "delta_image", "hypotheses", "report"] {
            assert!(keys.contains(&k), "{k}");
        }
        assert_eq!(predictions_jsonl(&[out.clone(), out]).lines().count(), 2);
    }
}
