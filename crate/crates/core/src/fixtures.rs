//! Seeded synthetic datasets and corpora.
//!
//! Posts carry precomputed visual vectors, so no image files are needed. The
//! generator aims at the shape of a real benchmark: balanced labels, about 28
//! tokens of text per post, and 3 to 7 keyframes per video post.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backend::StubLexicon;
use crate::dataset::Dataset;
use crate::kb::{CorpusEntry, TextCorpus};
use crate::types::{label_valence, FeatureVector, ImageRef, Post, SentimentLabel, ValenceMap, Visual};

const FILLER: &[&str] = &[
    "morning", "street", "coffee", "weekend", "city", "train", "photo", "window", "garden",
    "market", "friend", "family", "dinner", "river", "music", "office", "evening", "road",
    "school", "park", "rain", "light", "table", "corner", "bridge", "kitchen", "sky", "crowd",
    "match", "concert", "holiday", "beach", "shop", "neighbor", "dog", "cat", "story", "news",
];

const POSITIVE: &[&str] = &["good", "great", "love", "happy", "wonderful", "nice", "lovely", "bright"];
const NEGATIVE: &[&str] = &["bad", "awful", "terrible", "hate", "sad", "horrible", "ugly", "dark"];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub per_label: usize,
    /// Per-modality feature dimension of the precomputed visual vectors.
    pub dimension: usize,
    /// Probability that a post's text contains a keyword for its gold label.
    pub keyword_rate: f64,
    /// Probability that a post is a video rather than an image set.
    pub video_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            per_label: 500,
            dimension: 256,
            keyword_rate: 0.5,
            video_rate: 0.3,
            seed: 2025,
        }
    }
}

/// A sentence count in 2..=3 and a token budget in 24..=33.
fn sentence_lengths(rng: &mut ChaCha8Rng) -> Vec<usize> {
    let total = rng.gen_range(24..=33);
    let n = rng.gen_range(2..=3);
    let mut lens = vec![total / n; n];
    lens[0] += total % n;
    lens
}

/// Text whose polarity words lean towards `valence`, optionally with `keyword`.
fn post_text(rng: &mut ChaCha8Rng, valence: f64, keyword: Option<&str>) -> String {
    let mut sentences = Vec::new();
    for len in sentence_lengths(rng) {
        let words: Vec<&str> = (0..len)
            .map(|_| {
                // Chance of a polarity word grows with |valence|.
                if rng.gen_bool(0.1 + 0.3 * valence.abs()) {
                    let positive = rng.gen_bool((0.5 + valence / 2.0).clamp(0.05, 0.95));
                    *if positive { POSITIVE } else { NEGATIVE }.choose(rng).unwrap()
                } else {
                    *FILLER.choose(rng).unwrap()
                }
            })
            .collect();
        sentences.push(words);
    }
    if let Some(k) = keyword {
        let s = rng.gen_range(0..sentences.len());
        let at = rng.gen_range(0..=sentences[s].len());
        sentences[s].insert(at, k);
    }
    let mut out: Vec<String> = sentences
        .into_iter()
        .map(|w| {
            let mut s = w.join(" ");
            if let Some(first) = s.get(..1) {
                s = first.to_uppercase() + &s[1..];
            }
            s + "."
        })
        .collect();
    if rng.gen_bool(0.3) {
        let last = out.len() - 1;
        out[last].pop();
        out[last].push('!');
    }
    out.join(" ")
}

/// A visual vector whose first component, the stub's frame score, is near `valence`.
fn visual_vector(rng: &mut ChaCha8Rng, valence: f64, dim: usize) -> FeatureVector {
    let mut v: Vec<f32> = (0..dim).map(|_| rng.gen_range(-0.3f32..0.3)).collect();
    v[0] = (valence + rng.gen_range(-0.25..0.25)).clamp(-1.0, 1.0) as f32;
    FeatureVector::new(v).expect("finite by construction")
}

fn visual(rng: &mut ChaCha8Rng, valence: f64, spec: &SyntheticSpec) -> Visual {
    if rng.gen_bool(spec.video_rate) {
        let frames = rng.gen_range(3..=7);
        Visual::VideoFrames(
            (0..frames)
                .map(|_| ImageRef::Precomputed(visual_vector(rng, valence, spec.dimension)))
                .collect(),
        )
    } else {
        let images = rng.gen_range(1..=2);
        Visual::ImageSet(
            (0..images)
                .map(|_| ImageRef::Precomputed(visual_vector(rng, valence, spec.dimension)))
                .collect(),
        )
    }
}

/// Balanced labelled dataset, `per_label` posts per label, label-major ids.
pub fn synthetic_dataset(spec: &SyntheticSpec, lexicon: &StubLexicon, valence: &ValenceMap) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut samples = Vec::with_capacity(spec.per_label * SentimentLabel::COUNT);
    for label in SentimentLabel::ALL {
        let keywords = lexicon.keywords_for(label);
        let v = label_valence(label, valence).value();
        for i in 0..spec.per_label {
            let keyword = (!keywords.is_empty() && rng.gen_bool(spec.keyword_rate))
                .then(|| *keywords.choose(&mut rng).unwrap());
            let text = post_text(&mut rng, v, keyword);
            let visual = visual(&mut rng, v, spec);
            let id = format!("{}-{i:04}", label.name().to_lowercase());
            samples.push(Post::new(id, text, visual, Some(label)).expect("generated posts are valid"));
        }
    }
    Dataset::new(format!("synthetic-{}", spec.seed), samples).expect("generated ids are unique")
}

/// Every post's text contains a keyword for its gold label, so the stub
/// classifier's keyword rule always recovers the gold label.
pub fn keyword_fixture(per_label: usize, dimension: usize, seed: u64) -> Dataset {
    let spec = SyntheticSpec {
        per_label,
        dimension,
        keyword_rate: 1.0,
        video_rate: 0.3,
        seed,
    };
    let mut d = synthetic_dataset(&spec, &StubLexicon::default(), &ValenceMap::default());
    d.name = format!("keyword-fixture-{seed}");
    d
}

/// Labelled text-only corpus for knowledge-base augmentation.
pub fn synthetic_corpus(name: &str, per_label: usize, seed: u64, valence: &ValenceMap) -> TextCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries = SentimentLabel::ALL
        .iter()
        .flat_map(|&label| (0..per_label).map(move |i| (label, i)))
        .map(|(label, i)| CorpusEntry {
            id: format!("{name}-{}-{i:04}", label.name().to_lowercase()),
            text: post_text(&mut rng, label_valence(label, valence).value(), None),
            label,
        })
        .collect();
    TextCorpus {
        name: name.to_string(),
        entries,
    }
}
