//! Stage 1: text preprocessing, segmentation, per-segment scoring and
//! weighted aggregation.

use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::backend::{prompts, EmbedInput, ModelBackend, ModelRequest, ResponseSchema, Task};
use crate::config::{PipelineConfig, SegmentWeighting};
use crate::error::{Error, Result};
use crate::types::{FeatureVector, Score};

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");

/// Tolerance on weight sums.
pub const WEIGHT_TOLERANCE: f64 = 1e-9;

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '。' | '！' | '？')
}

/// Lowercases and strips every non-alphanumeric character.
pub fn normalize_token(tok: &str) -> String {
    tok.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopWords(HashSet<String>);

impl StopWords {
    pub fn new(words: impl IntoIterator<Item = impl AsRef<str>>) -> Self {
        StopWords(
            words
                .into_iter()
                .map(|w| normalize_token(w.as_ref()))
                .filter(|w| !w.is_empty())
                .collect(),
        )
    }

    pub fn empty() -> Self {
        StopWords(HashSet::new())
    }

    /// One token per line.
    pub fn parse(text: &str) -> Self {
        Self::new(text.lines().map(str::trim).filter(|l| !l.starts_with('#')))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for StopWords {
    fn default() -> Self {
        Self::parse(DEFAULT_STOPWORDS)
    }
}

const MIN_STEM: usize = 3;

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u')
}

/// Undoubles a trailing consonant pair ("runn" -> "run"), leaving l/s/z alone.
fn undouble(stem: &str) -> String {
    let chars: Vec<char> = stem.chars().collect();
    let n = chars.len();
    if n > MIN_STEM
        && chars[n - 1] == chars[n - 2]
        && chars[n - 1].is_alphabetic()
        && !is_vowel(chars[n - 1])
        && !matches!(chars[n - 1], 'l' | 's' | 'z')
    {
        chars[..n - 1].iter().collect()
    } else {
        stem.to_string()
    }
}

/// Conservative English suffix stripping: `-ing`, `-ed`, plural `-es` and
/// `-s`. At most one suffix is removed and the stem keeps at least three
/// characters.
pub fn stem(word: &str) -> String {
    let len = word.chars().count();
    let strip = |suffix: &str| -> Option<String> {
        let base = word.strip_suffix(suffix)?;
        (base.chars().count() >= MIN_STEM).then(|| base.to_string())
    };

    if let Some(base) = strip("ing") {
        if base.chars().any(is_vowel) {
            return undouble(&base);
        }
    }
    if let Some(base) = strip("ed") {
        if base.chars().any(is_vowel) {
            return undouble(&base);
        }
    }
    for sibilant in ["sses", "shes", "ches", "xes", "zes"] {
        if word.ends_with(sibilant) {
            if let Some(base) = strip("es") {
                return base;
            }
        }
    }
    if len > MIN_STEM
        && word.ends_with('s')
        && !word.ends_with("ss")
        && !word.ends_with("us")
        && !word.ends_with("is")
    {
        if let Some(base) = strip("s") {
            return base;
        }
    }
    word.to_string()
}

/// Splits a whitespace token into leading punctuation, a core word and
/// trailing punctuation.
fn split_token(tok: &str) -> (&str, &str, &str) {
    let start = tok
        .char_indices()
        .find(|(_, c)| c.is_alphanumeric())
        .map_or(tok.len(), |(i, _)| i);
    let end = tok
        .char_indices()
        .rev()
        .find(|(_, c)| c.is_alphanumeric())
        .map_or(start, |(i, c)| i + c.len_utf8());
    (&tok[..start], &tok[start..end], &tok[end..])
}

/// NFC-normalizes, lowercases, collapses whitespace, removes stop-words and
/// stems each remaining word. Punctuation attached to a dropped stop-word is
/// moved onto the previous kept token so sentence boundaries survive.
pub fn preprocess(raw: &str, stopwords: &StopWords) -> Result<String> {
    if raw.trim().is_empty() {
        return Err(Error::EmptyText);
    }
    let normalized: String = raw.nfc().collect::<String>().to_lowercase();
    let mut out: Vec<String> = Vec::new();
    for tok in normalized.split_whitespace() {
        let (lead, core, trail) = split_token(tok);
        if core.is_empty() {
            // Bare punctuation.
            match out.last_mut() {
                Some(prev) if tok.chars().all(is_terminator) => prev.push_str(tok),
                _ => out.push(tok.to_string()),
            }
            continue;
        }
        if stopwords.contains(&normalize_token(core)) {
            if trail.chars().any(is_terminator) {
                match out.last_mut() {
                    Some(prev) => prev.push_str(trail),
                    None => out.push(trail.to_string()),
                }
            }
            continue;
        }
        out.push(format!("{lead}{}{trail}", stem(core)));
    }
    let joined = out.join(" ");
    if joined.trim().is_empty() {
        return Err(Error::EmptyText);
    }
    Ok(joined)
}

/// One sentence or clause of preprocessed text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub index: usize,
    pub text: String,
    pub token_count: usize,
}

/// Splits on sentence-final punctuation (`.`, `!`, `?` and their CJK
/// full-width forms). Runs of terminators stay with their sentence.
pub fn segment(pre: &str) -> Result<Vec<Segment>> {
    if pre.trim().is_empty() {
        return Err(Error::EmptyText);
    }
    let mut pieces: Vec<String> = Vec::new();
    let mut current = String::new();
    let mut chars = pre.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(c);
        if is_terminator(c) && !chars.peek().copied().is_some_and(is_terminator) {
            pieces.push(std::mem::take(&mut current));
        }
    }
    pieces.push(current);

    Ok(pieces
        .into_iter()
        .map(|p| p.trim().to_string())
        .filter(|p| !p.is_empty())
        .enumerate()
        .map(|(index, text)| Segment {
            index,
            token_count: text.split_whitespace().count().max(1),
            text,
        })
        .collect())
}

pub fn compute_weights(segments: &[Segment], mode: SegmentWeighting) -> Vec<f64> {
    let n = segments.len();
    match mode {
        SegmentWeighting::Uniform => vec![1.0 / n as f64; n],
        SegmentWeighting::TokenProportional => {
            let total: usize = segments.iter().map(|s| s.token_count).sum();
            segments
                .iter()
                .map(|s| s.token_count as f64 / total as f64)
                .collect()
        }
    }
}

/// Checks that weights are non-negative, match `n` in length and sum to 1.
pub fn check_weights(weights: &[f64], n: usize) -> Result<()> {
    if weights.len() != n || n == 0 {
        return Err(Error::WeightMismatch(format!(
            "{} weights for {n} scores",
            weights.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::WeightMismatch(format!("invalid weight {w}")));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_TOLERANCE {
        return Err(Error::WeightMismatch(format!("weights sum to {sum}")));
    }
    Ok(())
}

/// Convex combination `Σ wᵢ·sᵢ`, kept inside `[min sᵢ, max sᵢ]` against
/// rounding.
pub fn weighted_score(scores: &[Score], weights: &[f64]) -> Result<Score> {
    check_weights(weights, scores.len())?;
    let sum: f64 = scores
        .iter()
        .zip(weights)
        .map(|(s, w)| s.value() * w)
        .sum();
    let lo = scores.iter().map(|s| s.value()).fold(f64::INFINITY, f64::min);
    let hi = scores.iter().map(|s| s.value()).fold(f64::NEG_INFINITY, f64::max);
    Score::new(sum.clamp(lo, hi))
}

pub fn aggregate_text(scores: &[Score], weights: &[f64]) -> Result<Score> {
    weighted_score(scores, weights)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextAnalysis {
    pub overall: Score,
    pub segments: Vec<Segment>,
    pub segment_scores: Vec<Score>,
    pub segment_features: Vec<FeatureVector>,
    pub weights: Vec<f64>,
}

impl TextAnalysis {
    /// Short human-readable summary used in downstream prompts.
    pub fn summary(&self) -> String {
        let parts: Vec<String> = self
            .segments
            .iter()
            .zip(&self.segment_scores)
            .map(|(s, sc)| format!("[{}] {:?} -> {sc}", s.index, s.text))
            .collect();
        format!("text score {} over {} segment(s): {}", self.overall, parts.len(), parts.join("; "))
    }
}

/// Scores and embeds one segment: one score call and one embed call.
fn analyze_segment(seg: &Segment, backend: &dyn ModelBackend) -> Result<(Score, FeatureVector)> {
    let req = ModelRequest::new(Task::SegmentScore, ResponseSchema::ScoreOnly, prompts::TEXT_ANALYST)
        .text(seg.text.clone());
    let score = backend.complete(&req)?.expect_score()?;
    let features = backend.embed(EmbedInput::Text(&seg.text))?;
    Ok((score, features))
}

/// Segment preprocessed text and embed each segment, without scoring.
pub fn embed_text_segments(
    text: &str,
    stopwords: &StopWords,
    backend: &dyn ModelBackend,
) -> Result<Vec<FeatureVector>> {
    let pre = preprocess(text, stopwords)?;
    segment(&pre)?
        .par_iter()
        .map(|s| backend.embed(EmbedInput::Text(&s.text)))
        .collect()
}

pub fn run_text_analyst(
    text: &str,
    backend: &dyn ModelBackend,
    config: &PipelineConfig,
    stopwords: &StopWords,
) -> Result<TextAnalysis> {
    let pre = preprocess(text, stopwords)?;
    let segments = segment(&pre)?;
    let results: Vec<(Score, FeatureVector)> = segments
        .par_iter()
        .map(|s| analyze_segment(s, backend))
        .collect::<Result<_>>()?;
    let (segment_scores, segment_features): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    for f in &segment_features {
        f.expect_dim(config.dimension)?;
    }
    let weights = compute_weights(&segments, config.segment_weighting);
    let overall = aggregate_text(&segment_scores, &weights)?;
    Ok(TextAnalysis {
        overall,
        segments,
        segment_scores,
        segment_features,
        weights,
    })
}
