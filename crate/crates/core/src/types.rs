//! Domain types shared by every stage: the seven-label taxonomy, bounded
//! sentiment scores, feature vectors and multimodal posts.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of the seven sentiment categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SentimentLabel {
    Like,
    Happiness,
    Anger,
    Disgust,
    Fear,
    Sadness,
    Surprise,
}

impl SentimentLabel {
    /// All labels in canonical order. Confusion matrices index by this order.
    pub const ALL: [SentimentLabel; 7] = [
        SentimentLabel::Like,
        SentimentLabel::Happiness,
        SentimentLabel::Anger,
        SentimentLabel::Disgust,
        SentimentLabel::Fear,
        SentimentLabel::Sadness,
        SentimentLabel::Surprise,
    ];

    pub const COUNT: usize = 7;

    pub fn name(self) -> &'static str {
        match self {
            SentimentLabel::Like => "Like",
            SentimentLabel::Happiness => "Happiness",
            SentimentLabel::Anger => "Anger",
            SentimentLabel::Disgust => "Disgust",
            SentimentLabel::Fear => "Fear",
            SentimentLabel::Sadness => "Sadness",
            SentimentLabel::Surprise => "Surprise",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

/// Parses a label name, case-insensitively.
pub fn parse_label(s: &str) -> Result<SentimentLabel> {
    let t = s.trim();
    SentimentLabel::ALL
        .iter()
        .copied()
        .find(|l| l.name().eq_ignore_ascii_case(t))
        .ok_or_else(|| Error::UnknownLabel(s.to_string()))
}

impl FromStr for SentimentLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_label(s)
    }
}

impl TryFrom<String> for SentimentLabel {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        parse_label(&s)
    }
}

impl From<SentimentLabel> for String {
    fn from(l: SentimentLabel) -> String {
        l.name().to_string()
    }
}

impl fmt::Display for SentimentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Sentiment polarity in `[-1, 1]`. Construction never clamps.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Score(f64);

impl Score {
    pub const ZERO: Score = Score(0.0);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && (-1.0..=1.0).contains(&value) {
            Ok(Score(value))
        } else {
            Err(Error::ScoreOutOfRange(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Score {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        Score::new(v)
    }
}

impl From<Score> for f64 {
    fn from(s: Score) -> f64 {
        s.0
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4}", self.0)
    }
}

/// Fixed-length vector of finite reals (text, visual, fused or query features).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f32>", into = "Vec<f32>")]
pub struct FeatureVector(Vec<f32>);

impl FeatureVector {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidVector("empty".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidVector(format!("entry {i} is not finite")));
        }
        Ok(FeatureVector(values))
    }

    pub fn zeros(dim: usize) -> Self {
        FeatureVector(vec![0.0; dim.max(1)])
    }

    /// Truncates or zero-pads to `dim`; used where backends return foreign sizes.
    pub fn project(mut values: Vec<f32>, dim: usize) -> Result<Self> {
        values.resize(dim, 0.0);
        FeatureVector::new(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }

    pub fn expect_dim(&self, dim: usize) -> Result<()> {
        if self.0.len() == dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: dim,
                actual: self.0.len(),
            })
        }
    }

    /// Arithmetic mean of the entries (0 for an empty slice).
    pub fn mean(values: &[f32]) -> f64 {
        if values.is_empty() {
            return 0.0;
        }
        values.iter().map(|&v| v as f64).sum::<f64>() / values.len() as f64
    }
}

impl TryFrom<Vec<f32>> for FeatureVector {
    type Error = Error;

    fn try_from(v: Vec<f32>) -> Result<Self> {
        FeatureVector::new(v)
    }
}

impl From<FeatureVector> for Vec<f32> {
    fn from(v: FeatureVector) -> Vec<f32> {
        v.0
    }
}

/// A reference to one image or keyframe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageRef {
    Path(PathBuf),
    Bytes(Vec<u8>),
    Precomputed(FeatureVector),
}

impl ImageRef {
    pub fn describe(&self) -> String {
        match self {
            ImageRef::Path(p) => p.display().to_string(),
            ImageRef::Bytes(b) => format!("<{} bytes>", b.len()),
            ImageRef::Precomputed(v) => format!("<precomputed vector, dim {}>", v.len()),
        }
    }
}

/// The visual modality of a post.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Visual {
    ImageSet(Vec<ImageRef>),
    VideoFrames(Vec<ImageRef>),
}

impl Visual {
    pub fn refs(&self) -> &[ImageRef] {
        match self {
            Visual::ImageSet(r) | Visual::VideoFrames(r) => r,
        }
    }

    pub fn is_video(&self) -> bool {
        matches!(self, Visual::VideoFrames(_))
    }
}

/// One multimodal sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub text: String,
    pub visual: Visual,
    pub gold_label: Option<SentimentLabel>,
}

impl Post {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        visual: Visual,
        gold_label: Option<SentimentLabel>,
    ) -> Result<Self> {
        let post = Post {
            id: id.into(),
            text: text.into(),
            visual,
            gold_label,
        };
        post.validate()?;
        Ok(post)
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::InvalidPost("id is empty".into()));
        }
        if self.text.trim().is_empty() {
            return Err(Error::InvalidPost(format!("{}: text is empty", self.id)));
        }
        if self.visual.refs().is_empty() {
            return Err(Error::InvalidPost(format!(
                "{}: visual modality has no images or frames",
                self.id
            )));
        }
        Ok(())
    }
}

/// Scalar valence for each label, bridging categorical annotations and score arithmetic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValenceMap(BTreeMap<SentimentLabel, Score>);

impl ValenceMap {
    pub fn new(map: BTreeMap<SentimentLabel, Score>) -> Result<Self> {
        if let Some(missing) = SentimentLabel::ALL.iter().find(|l| !map.contains_key(l)) {
            return Err(Error::Config(format!("valence map has no entry for {missing}")));
        }
        Ok(ValenceMap(map))
    }

    pub fn constant(value: Score) -> Self {
        ValenceMap(SentimentLabel::ALL.iter().map(|&l| (l, value)).collect())
    }

    pub fn set(&mut self, label: SentimentLabel, value: Score) {
        self.0.insert(label, value);
    }

    pub fn iter(&self) -> impl Iterator<Item = (SentimentLabel, Score)> + '_ {
        self.0.iter().map(|(&l, &s)| (l, s))
    }
}

impl Default for ValenceMap {
    fn default() -> Self {
        use SentimentLabel::*;
        let pairs = [
            (Happiness, 0.9),
            (Like, 0.6),
            (Surprise, 0.1),
            (Fear, -0.5),
            (Sadness, -0.6),
            (Disgust, -0.7),
            (Anger, -0.8),
        ];
        ValenceMap(pairs.iter().map(|&(l, v)| (l, Score(v))).collect())
    }
}

/// Configured scalar valence for a label.
pub fn label_valence(label: SentimentLabel, map: &ValenceMap) -> Score {
    // ValenceMap construction guarantees totality.
    map.0[&label]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_canonical_and_lowercase_names() {
        assert_eq!(parse_label("Happiness").unwrap(), SentimentLabel::Happiness);
        assert_eq!(parse_label("anger").unwrap(), SentimentLabel::Anger);
        assert_eq!(parse_label("SURPRISE").unwrap(), SentimentLabel::Surprise);
    }

    #[test]
    fn rejects_labels_outside_the_taxonomy() {
        assert!(matches!(parse_label("Joy"), Err(Error::UnknownLabel(s)) if s == "Joy"));
        assert!(parse_label("").is_err());
    }

    #[test]
    fn canonical_names_round_trip() {
        for l in SentimentLabel::ALL {
            assert_eq!(parse_label(l.name()).unwrap(), l);
            assert_eq!(SentimentLabel::from_index(l.index()), Some(l));
        }
        assert_eq!(SentimentLabel::ALL.len(), SentimentLabel::COUNT);
    }

    #[test]
    fn score_rejects_out_of_range_and_non_finite() {
        assert!(Score::new(1.0).is_ok());
        assert!(Score::new(-1.0).is_ok());
        assert!(Score::new(1.0 + 1e-12).is_err());
        assert!(Score::new(-1.5).is_err());
        assert!(Score::new(f64::NAN).is_err());
        assert!(Score::new(f64::INFINITY).is_err());
    }

    #[test]
    fn default_valences() {
        let map = ValenceMap::default();
        assert_eq!(label_valence(SentimentLabel::Happiness, &map).value(), 0.9);
        assert_eq!(label_valence(SentimentLabel::Anger, &map).value(), -0.8);
        let zero = ValenceMap::constant(Score::ZERO);
        for l in SentimentLabel::ALL {
            assert_eq!(label_valence(l, &zero).value(), 0.0);
        }
    }

    #[test]
    fn valence_map_must_be_total() {
        let mut partial = BTreeMap::new();
        partial.insert(SentimentLabel::Like, Score::ZERO);
        assert!(ValenceMap::new(partial).is_err());
    }

    #[test]
    fn feature_vector_rejects_non_finite() {
        assert!(FeatureVector::new(vec![0.0, f32::NAN]).is_err());
        assert!(FeatureVector::new(vec![]).is_err());
        let v = FeatureVector::project(vec![1.0; 1536], 256).unwrap();
        assert_eq!(v.len(), 256);
        let v = FeatureVector::project(vec![1.0; 3], 5).unwrap();
        assert_eq!(v.as_slice(), &[1.0, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn post_requires_text_and_visual() {
        let frame = ImageRef::Precomputed(FeatureVector::zeros(4));
        assert!(Post::new("a", "  ", Visual::ImageSet(vec![frame.clone()]), None).is_err());
        assert!(Post::new("a", "hi", Visual::VideoFrames(vec![]), None).is_err());
        assert!(Post::new("a", "hi", Visual::ImageSet(vec![frame]), None).is_ok());
    }

    #[test]
    fn labels_serialize_as_canonical_strings() {
        let s = serde_json::to_string(&SentimentLabel::Disgust).unwrap();
        assert_eq!(s, "\"Disgust\"");
        let l: SentimentLabel = serde_json::from_str("\"fear\"").unwrap();
        assert_eq!(l, SentimentLabel::Fear);
    }
}
