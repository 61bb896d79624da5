use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{
    clamp_model_score, EmbedInput, ModelBackend, ModelRequest, ModelResponse, ResponseSchema,
    StubLexicon, Task,
};
use crate::error::{Error, Result};
use crate::types::{label_valence, FeatureVector, Score, SentimentLabel, ValenceMap};

/// The single hypothesis the stub emits when refinement is triggered.
pub const STUB_HYPOTHESIS: &str =
    "stub: text and visual sentiment disagree; the caption may be ironic or the image unrelated";

const EMBED_SEED: &[u8] = b"mmsenti-stub-embedding-v1";

/// Label ties closer than this are broken by label name.
const VALENCE_TIE: f64 = 1e-9;

/// `(pos - neg) / (pos + neg + 1)` over lexicon term occurrences.
pub fn stub_text_score(segment: &str, lexicon: &StubLexicon) -> Score {
    let (pos, neg) = lexicon.polarity_counts(segment);
    let v = (pos as f64 - neg as f64) / (pos + neg + 1) as f64;
    Score::new(v).expect("lexicon ratio lies in (-1, 1)")
}

/// Deterministic offline backend.
///
/// Every rule depends only on its inputs, so outputs are bit-identical across
/// runs. Call counters let tests observe which stages reached the backend.
#[derive(Debug)]
pub struct StubBackend {
    lexicon: StubLexicon,
    dimension: usize,
    valence: ValenceMap,
    calls: [AtomicUsize; Task::ALL.len()],
    text_embeds: AtomicUsize,
    image_embeds: AtomicUsize,
}

impl StubBackend {
    pub fn new(lexicon: StubLexicon, dimension: usize, valence: ValenceMap) -> Self {
        StubBackend {
            lexicon,
            dimension,
            valence,
            calls: Default::default(),
            text_embeds: AtomicUsize::new(0),
            image_embeds: AtomicUsize::new(0),
        }
    }

    pub fn with_defaults(dimension: usize) -> Self {
        Self::new(StubLexicon::default(), dimension, ValenceMap::default())
    }

    pub fn lexicon(&self) -> &StubLexicon {
        &self.lexicon
    }

    pub fn calls(&self, task: Task) -> usize {
        self.calls[task_slot(task)].load(Ordering::SeqCst)
    }

    pub fn text_embed_calls(&self) -> usize {
        self.text_embeds.load(Ordering::SeqCst)
    }

    pub fn image_embed_calls(&self) -> usize {
        self.image_embeds.load(Ordering::SeqCst)
    }

    /// Calls that touch the visual modality: frame scoring plus image embeds.
    pub fn visual_calls(&self) -> usize {
        self.calls(Task::FrameScore) + self.image_embed_calls()
    }

    pub fn reset_counters(&self) {
        for c in &self.calls {
            c.store(0, Ordering::SeqCst);
        }
        self.text_embeds.store(0, Ordering::SeqCst);
        self.image_embeds.store(0, Ordering::SeqCst);
    }

    fn features<'a>(&self, req: &'a ModelRequest) -> Result<&'a [f32]> {
        req.hints
            .features
            .as_ref()
            .map(FeatureVector::as_slice)
            .ok_or_else(|| Error::InvalidRequest(format!("{:?} request carries no features", req.task)))
    }

    /// Nearest label by valence distance; near-ties go to the lexicographically
    /// smaller label name.
    fn nearest_label(&self, combined: Score) -> SentimentLabel {
        let mut by_name = SentimentLabel::ALL;
        by_name.sort_by_key(|l| l.name());
        let mut best = by_name[0];
        let mut best_dist = f64::INFINITY;
        for l in by_name {
            let d = (label_valence(l, &self.valence).value() - combined.value()).abs();
            if d < best_dist - VALENCE_TIE {
                best = l;
                best_dist = d;
            }
        }
        best
    }

    fn answer(&self, req: &ModelRequest) -> Result<ModelResponse> {
        let mut r = ModelResponse::default();
        match req.task {
            Task::SegmentScore => {
                let text = req.text_content();
                let (pos, neg) = self.lexicon.polarity_counts(&text);
                r.score = Some(stub_text_score(&text, &self.lexicon));
                r.report = Some(format!("stub: pos={pos} neg={neg}"));
            }
            Task::FrameScore => {
                let v0 = *self.features(req)?.first().unwrap_or(&0.0) as f64;
                r.score = Some(clamp_model_score(v0)?);
                r.report = Some(format!("stub: v[0]={v0:.4}"));
            }
            Task::Fusion => {
                let f = self.features(req)?;
                if f.len() % 2 != 0 {
                    return Err(Error::DimensionMismatch {
                        expected: 2 * (f.len() / 2 + 1),
                        actual: f.len(),
                    });
                }
                let (text_half, visual_half) = f.split_at(f.len() / 2);
                let mt = FeatureVector::mean(text_half);
                let mv = FeatureVector::mean(visual_half);
                r.score = Some(clamp_model_score((mt + mv) / 2.0)?);
                r.report = Some(format!("stub: text half mean={mt:.4}, visual half mean={mv:.4}"));
            }
            Task::Hypotheses => r.hypotheses = Some(vec![STUB_HYPOTHESIS.to_string()]),
            Task::RagSummary => r.report = Some(label_histogram(&req.hints.labels)),
            Task::Classify => {
                let keyword = req
                    .hints
                    .post_text
                    .as_deref()
                    .and_then(|t| self.lexicon.keyword_label(t));
                let (label, why) = match keyword {
                    Some((kw, l)) => (l, format!("stub: keyword {kw:?} maps to {l}")),
                    None => {
                        let combined = req.hints.combined_score.ok_or_else(|| {
                            Error::InvalidRequest("classify request carries no combined score".into())
                        })?;
                        let l = self.nearest_label(combined);
                        (
                            l,
                            format!(
                                "stub: nearest valence to {} is {l} ({})",
                                combined,
                                label_valence(l, &self.valence)
                            ),
                        )
                    }
                };
                r.label = Some(label);
                r.report = Some(why);
            }
        }
        shape(r, req.schema)
    }
}

fn task_slot(task: Task) -> usize {
    Task::ALL.iter().position(|&t| t == task).unwrap()
}

/// Keeps exactly the fields `schema` asks for.
fn shape(mut r: ModelResponse, schema: ResponseSchema) -> Result<ModelResponse> {
    let (score, report, label, hyp) = match schema {
        ResponseSchema::ScoreAndReport => (true, true, false, false),
        ResponseSchema::ScoreOnly => (true, false, false, false),
        ResponseSchema::ReportOnly => (false, true, false, false),
        ResponseSchema::LabelAndReport => (false, true, true, false),
        ResponseSchema::Hypotheses => (false, false, false, true),
    };
    if !score {
        r.score = None;
    }
    if !report {
        r.report = None;
    }
    if !label {
        r.label = None;
    }
    if !hyp {
        r.hypotheses = None;
    }
    if r.matches(schema) {
        Ok(r)
    } else {
        Err(Error::Protocol(format!("stub cannot answer {schema:?} for this task")))
    }
}

/// `"retrieved: Happiness×2, Anger×1"`, ordered by count then first appearance.
pub(crate) fn label_histogram(labels: &[SentimentLabel]) -> String {
    let mut counts: Vec<(SentimentLabel, usize)> = Vec::new();
    for &l in labels {
        match counts.iter_mut().find(|(x, _)| *x == l) {
            Some((_, c)) => *c += 1,
            None => counts.push((l, 1)),
        }
    }
    // Stable sort keeps first-appearance order among equal counts.
    counts.sort_by_key(|&(_, c)| std::cmp::Reverse(c));
    let parts: Vec<String> = counts.iter().map(|(l, c)| format!("{l}×{c}")).collect();
    format!("retrieved: {}", parts.join(", "))
}

fn hashed_unit_vector(tag: &[u8], payload: &[u8], dim: usize) -> Result<FeatureVector> {
    let mut h = Sha256::new();
    h.update(EMBED_SEED);
    h.update(tag);
    h.update(payload);
    let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
    let raw: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = if norm > 0.0 { 1.0 / norm } else { 0.0 };
    FeatureVector::new(raw.iter().map(|x| (x * scale) as f32).collect())
}

impl ModelBackend for StubBackend {
    fn complete(&self, req: &ModelRequest) -> Result<ModelResponse> {
        req.validate(self.supports_images())?;
        self.calls[task_slot(req.task)].fetch_add(1, Ordering::SeqCst);
        self.answer(req)
    }

    fn embed(&self, input: EmbedInput<'_>) -> Result<FeatureVector> {
        match input {
            EmbedInput::Text(t) => {
                let normalized = t.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
                if normalized.is_empty() {
                    return Err(Error::InvalidRequest("cannot embed empty text".into()));
                }
                self.text_embeds.fetch_add(1, Ordering::SeqCst);
                hashed_unit_vector(b"text", normalized.as_bytes(), self.dimension)
            }
            EmbedInput::Image(bytes) => {
                if bytes.is_empty() {
                    return Err(Error::InvalidRequest("cannot embed empty image".into()));
                }
                self.image_embeds.fetch_add(1, Ordering::SeqCst);
                hashed_unit_vector(b"image", bytes, self.dimension)
            }
        }
    }

    fn supports_images(&self) -> bool {
        false
    }

    fn dimension(&self) -> usize {
        self.dimension
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::RequestHints;

    fn lex() -> StubLexicon {
        StubLexicon::default()
    }

    #[test]
    fn text_score_formula() {
        let l = lex();
        // (2 - 0) / (2 + 0 + 1)
        assert_eq!(stub_text_score("good great", &l).value(), 2.0 / 3.0);
        assert_eq!(stub_text_score("awful awful", &l).value(), -2.0 / 3.0);
        assert_eq!(stub_text_score("", &l).value(), 0.0);
        assert_eq!(stub_text_score("good awful", &l).value(), 0.0);
        assert_eq!(stub_text_score("the weather", &l).value(), 0.0);
    }

    #[test]
    fn complete_score_only() {
        let b = StubBackend::with_defaults(8);
        let req = ModelRequest::new(Task::SegmentScore, ResponseSchema::ScoreOnly, "p").text("good great");
        let r = b.complete(&req).unwrap();
        assert!((r.score.unwrap().value() - 0.6667).abs() < 1e-4);
        assert!(r.matches(ResponseSchema::ScoreOnly));
        assert_eq!(b.calls(Task::SegmentScore), 1);
    }

    #[test]
    fn embeddings_are_deterministic_unit_vectors() {
        let b = StubBackend::with_defaults(64);
        let a1 = b.embed(EmbedInput::Text("a sunny day")).unwrap();
        let a2 = b.embed(EmbedInput::Text("a  sunny DAY")).unwrap();
        let c = b.embed(EmbedInput::Text("a rainy day")).unwrap();
        assert_eq!(a1, a2);
        assert_ne!(a1, c);
        assert_eq!(a1.len(), 64);
        let norm: f64 = a1.as_slice().iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
        assert!(b.embed(EmbedInput::Text("")).is_err());
        assert!(b.embed(EmbedInput::Image(&[])).is_err());
        assert_eq!(b.text_embed_calls(), 3);
    }

    #[test]
    fn stub_rejects_images_in_chat() {
        let b = StubBackend::with_defaults(4);
        let req = ModelRequest::new(Task::FrameScore, ResponseSchema::ScoreAndReport, "p")
            .image(vec![1], "image/png");
        assert!(matches!(b.complete(&req), Err(Error::Capability(_))));
    }

    #[test]
    fn frame_rule_uses_first_component() {
        let b = StubBackend::with_defaults(3);
        let hints = RequestHints {
            features: Some(FeatureVector::new(vec![0.25, -0.9, 0.1]).unwrap()),
            ..Default::default()
        };
        let req = ModelRequest::new(Task::FrameScore, ResponseSchema::ScoreAndReport, "p")
            .text("frame")
            .hints(hints);
        let r = b.complete(&req).unwrap();
        assert_eq!(r.score.unwrap().value(), 0.25);
        assert_eq!(r.report.unwrap(), "stub: v[0]=0.2500");
    }

    #[test]
    fn fusion_rule_averages_half_means() {
        let b = StubBackend::with_defaults(2);
        let hints = RequestHints {
            features: Some(FeatureVector::new(vec![0.4, 0.4, 0.0, 0.0]).unwrap()),
            ..Default::default()
        };
        let req = ModelRequest::new(Task::Fusion, ResponseSchema::ScoreAndReport, "p")
            .text("x")
            .hints(hints);
        let v = b.complete(&req).unwrap().score.unwrap().value();
        assert!((v - 0.2).abs() < 1e-7);
    }

    #[test]
    fn histogram_format() {
        use SentimentLabel::*;
        assert_eq!(
            label_histogram(&[Happiness, Happiness, Anger]),
            "retrieved: Happiness×2, Anger×1"
        );
        assert_eq!(label_histogram(&[Fear]), "retrieved: Fear×1");
        assert_eq!(
            label_histogram(&[Sadness, Happiness, Sadness, Happiness, Happiness]),
            "retrieved: Happiness×3, Sadness×2"
        );
    }

    fn classify(b: &StubBackend, text: Option<&str>, combined: f64) -> SentimentLabel {
        let hints = RequestHints {
            combined_score: Some(Score::new(combined).unwrap()),
            post_text: text.map(str::to_string),
            ..Default::default()
        };
        let req = ModelRequest::new(Task::Classify, ResponseSchema::LabelAndReport, "p")
            .text("classify")
            .hints(hints);
        b.complete(&req).unwrap().label.unwrap()
    }

    #[test]
    fn classification_rules() {
        let b = StubBackend::with_defaults(4);
        assert_eq!(classify(&b, Some("I was terrified"), 0.9), SentimentLabel::Fear);
        assert_eq!(classify(&b, Some("nothing special"), 0.85), SentimentLabel::Happiness);
        // |-0.75 - (-0.7)| and |-0.75 - (-0.8)| tie; "Anger" < "Disgust".
        assert_eq!(classify(&b, None, -0.75), SentimentLabel::Anger);
        assert_eq!(classify(&b, None, 0.0), SentimentLabel::Surprise);
    }
}
