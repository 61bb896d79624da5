//! JSONL dataset ingestion, stratified splitting and per-label statistics.
//!
//! One object per line:
//!
//! ```json
//! {"id": "p1", "text": "...", "images": ["a.png"], "frames": [], "label": "Fear"}
//! ```
//!
//! Exactly one of `images` / `frames` must be non-empty. An image reference is
//! either a path string (relative paths resolve against the file's directory)
//! or an object with one of `path`, `base64` or `vector`.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use base64::Engine;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::{Error, Result, SchemaIssue};
use crate::types::{parse_label, FeatureVector, ImageRef, Post, SentimentLabel, Visual};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub samples: Vec<Post>,
}

impl Dataset {
    /// Builds a dataset, enforcing unique ids and gold labels.
    pub fn new(name: impl Into<String>, samples: Vec<Post>) -> Result<Self> {
        let mut seen = HashSet::new();
        for p in &samples {
            if p.gold_label.is_none() {
                return Err(Error::InvalidPost(format!("{}: missing gold label", p.id)));
            }
            if !seen.insert(p.id.as_str()) {
                return Err(Error::DuplicateId(p.id.clone()));
            }
        }
        Ok(Dataset {
            name: name.into(),
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample count per label, in canonical label order.
    pub fn label_counts(&self) -> [usize; SentimentLabel::COUNT] {
        let mut counts = [0; SentimentLabel::COUNT];
        for p in &self.samples {
            if let Some(l) = p.gold_label {
                counts[l.index()] += 1;
            }
        }
        counts
    }
}

#[derive(Deserialize)]
struct RawLine {
    id: Option<String>,
    text: Option<String>,
    #[serde(default)]
    images: Vec<Value>,
    #[serde(default)]
    frames: Vec<Value>,
    label: Option<String>,
}

fn parse_image_ref(v: &Value, base: &Path) -> std::result::Result<ImageRef, String> {
    let resolve = |s: &str| {
        let p = PathBuf::from(s);
        if p.is_relative() {
            base.join(p)
        } else {
            p
        }
    };
    match v {
        Value::String(s) => Ok(ImageRef::Path(resolve(s))),
        Value::Object(o) => {
            if let Some(p) = o.get("path").and_then(Value::as_str) {
                Ok(ImageRef::Path(resolve(p)))
            } else if let Some(b) = o.get("base64").and_then(Value::as_str) {
                base64::engine::general_purpose::STANDARD
                    .decode(b)
                    .map(ImageRef::Bytes)
                    .map_err(|e| format!("bad base64 image: {e}"))
            } else if let Some(arr) = o.get("vector").and_then(Value::as_array) {
                let vals = arr
                    .iter()
                    .map(|x| x.as_f64().map(|f| f as f32))
                    .collect::<Option<Vec<f32>>>()
                    .ok_or("vector contains non-numbers")?;
                FeatureVector::new(vals)
                    .map(ImageRef::Precomputed)
                    .map_err(|e| e.to_string())
            } else {
                Err("image object needs \"path\", \"base64\" or \"vector\"".into())
            }
        }
        _ => Err("image reference must be a string or an object".into()),
    }
}

fn parse_line(raw: &str, base: &Path, require_label: bool) -> std::result::Result<Post, String> {
    let line: RawLine = serde_json::from_str(raw).map_err(|e| format!("invalid JSON: {e}"))?;
    let id = line.id.filter(|s| !s.trim().is_empty()).ok_or("missing \"id\"")?;
    let text = line
        .text
        .filter(|s| !s.trim().is_empty())
        .ok_or("missing or empty \"text\"")?;
    let parse_refs = |vals: &[Value]| {
        vals.iter()
            .map(|v| parse_image_ref(v, base))
            .collect::<std::result::Result<Vec<_>, _>>()
    };
    let visual = match (line.images.is_empty(), line.frames.is_empty()) {
        (false, true) => Visual::ImageSet(parse_refs(&line.images)?),
        (true, false) => Visual::VideoFrames(parse_refs(&line.frames)?),
        (false, false) => return Err("both \"images\" and \"frames\" are present".into()),
        (true, true) => return Err("needs a non-empty \"images\" or \"frames\"".into()),
    };
    let gold_label = match line.label {
        Some(l) => Some(parse_label(&l).map_err(|e| e.to_string())?),
        None if require_label => return Err("missing \"label\"".into()),
        None => None,
    };
    Post::new(id, text, visual, gold_label).map_err(|e| e.to_string())
}

fn read_jsonl(path: &Path, require_label: bool) -> Result<Vec<Post>> {
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    // Absolute, so that rewritten datasets (e.g. split outputs) stay valid elsewhere.
    let parent = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."));
    let base = std::path::absolute(parent).map_err(|e| Error::io(parent, e))?;
    let mut posts = Vec::new();
    let mut issues = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in content.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        match parse_line(raw, &base, require_label) {
            Ok(p) => {
                if !seen.insert(p.id.clone()) {
                    return Err(Error::DuplicateId(p.id));
                }
                posts.push(p);
            }
            Err(message) => issues.push(SchemaIssue { line: i + 1, message }),
        }
    }
    if !issues.is_empty() {
        return Err(Error::Schema(issues));
    }
    Ok(posts)
}

/// Loads a labelled dataset; every malformed line is reported by number.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let samples = read_jsonl(path, true)?;
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string();
    Dataset::new(name, samples)
}

/// Loads posts for inference; labels are optional.
pub fn load_posts(path: &Path) -> Result<Vec<Post>> {
    read_jsonl(path, false)
}

fn image_ref_json(r: &ImageRef) -> Value {
    match r {
        ImageRef::Path(p) => Value::String(p.to_string_lossy().into_owned()),
        ImageRef::Bytes(b) => {
            json!({ "base64": base64::engine::general_purpose::STANDARD.encode(b) })
        }
        ImageRef::Precomputed(v) => json!({ "vector": v.as_slice() }),
    }
}

/// One dataset line for `post`, in the ingestion schema.
pub fn post_to_json(post: &Post) -> Value {
    let refs: Vec<Value> = post.visual.refs().iter().map(image_ref_json).collect();
    let (images, frames) = match post.visual {
        Visual::ImageSet(_) => (refs, vec![]),
        Visual::VideoFrames(_) => (vec![], refs),
    };
    let mut obj = json!({
        "id": post.id,
        "text": post.text,
        "images": images,
        "frames": frames,
    });
    if let Some(l) = post.gold_label {
        obj["label"] = Value::String(l.name().into());
    }
    obj
}

pub fn write_dataset(path: &Path, posts: &[Post]) -> Result<()> {
    let mut out = Vec::new();
    for p in posts {
        serde_json::to_writer(&mut out, &post_to_json(p)).expect("JSON values serialize");
        out.push(b'\n');
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| Error::io(path, e))
}

/// Stratified split: for each label, `floor(fraction · count)` samples go to
/// the test set after a seeded shuffle. Returns `(train, test)`, each in
/// original dataset order.
pub fn split(d: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    let mut by_label: BTreeMap<SentimentLabel, Vec<usize>> = BTreeMap::new();
    for (i, p) in d.samples.iter().enumerate() {
        let label = p
            .gold_label
            .ok_or_else(|| Error::InvalidPost(format!("{}: missing gold label", p.id)))?;
        by_label.entry(label).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_test = vec![false; d.samples.len()];
    for idx in by_label.values_mut() {
        let n_test = (test_fraction * idx.len() as f64).floor() as usize;
        idx.shuffle(&mut rng);
        for &i in &idx[..n_test] {
            in_test[i] = true;
        }
    }
    let (test, train): (Vec<_>, Vec<_>) = d
        .samples
        .iter()
        .cloned()
        .zip(&in_test)
        .partition(|(_, &t)| t);
    let strip = |v: Vec<(Post, &bool)>| v.into_iter().map(|(p, _)| p).collect::<Vec<_>>();
    Ok((
        Dataset::new(format!("{}-train", d.name), strip(train))?,
        Dataset::new(format!("{}-test", d.name), strip(test))?,
    ))
}

/// Descriptive statistics for `stats`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DatasetStats {
    pub name: String,
    pub samples: usize,
    pub per_label: BTreeMap<String, usize>,
    pub image_posts: usize,
    pub video_posts: usize,
    pub mean_tokens: f64,
    pub mean_frames_per_video: f64,
}

pub fn stats(d: &Dataset) -> DatasetStats {
    let counts = d.label_counts();
    let per_label = SentimentLabel::ALL
        .iter()
        .map(|l| (l.name().to_string(), counts[l.index()]))
        .collect();
    let videos: Vec<&Post> = d.samples.iter().filter(|p| p.visual.is_video()).collect();
    let tokens: usize = d.samples.iter().map(|p| p.text.split_whitespace().count()).sum();
    let frames: usize = videos.iter().map(|p| p.visual.refs().len()).sum();
    let mean = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    DatasetStats {
        name: d.name.clone(),
        samples: d.len(),
        per_label,
        image_posts: d.len() - videos.len(),
        video_posts: videos.len(),
        mean_tokens: mean(tokens, d.len()),
        mean_frames_per_video: mean(frames, videos.len()),
    }
}

impl DatasetStats {
    pub fn to_table(&self) -> String {
        let mut s = format!("dataset {} ({} samples)\n", self.name, self.samples);
        for l in SentimentLabel::ALL {
            s.push_str(&format!("  {:<10} {:>6}\n", l.name(), self.per_label[l.name()]));
        }
        s.push_str(&format!(
            "  image posts {}, video posts {}, mean tokens {:.1}, mean keyframes/video {:.1}\n",
            self.image_posts, self.video_posts, self.mean_tokens, self.mean_frames_per_video
        ));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, lines: &[String]) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, lines.join("\n")).unwrap();
        p
    }

    fn line(id: &str, label: &str) -> String {
        format!(r#"{{"id": "{id}", "text": "hello there", "images": [{{"vector": [0.1, 0.2]}}], "label": "{label}"}}"#)
    }

    #[test]
    fn loads_balanced_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let lines: Vec<String> = SentimentLabel::ALL
            .iter()
            .flat_map(|l| (0..3).map(move |i| line(&format!("{}-{i}", l.name()), l.name())))
            .collect();
        let d = load_dataset(&write(dir.path(), "fx.jsonl", &lines)).unwrap();
        assert_eq!(d.len(), 21);
        assert_eq!(d.label_counts(), [3; 7]);
        assert_eq!(d.name, "fx");
    }

    #[test]
    fn schema_errors_name_lines() {
        let dir = tempfile::tempdir().unwrap();
        let lines = vec![
            line("a", "Like"),
            r#"{"id": "b", "text": "x", "images": [{"vector": [1.0]}]}"#.to_string(),
            r#"{"id": "c", "text": "x", "images": ["a.png"], "frames": ["b.png"], "label": "Fear"}"#.to_string(),
            r#"{"id": "d", "text": "x", "images": [], "label": "Fear"}"#.to_string(),
            "not json".to_string(),
            line("e", "Joy"),
        ];
        let err = load_dataset(&write(dir.path(), "bad.jsonl", &lines)).unwrap_err();
        let Error::Schema(issues) = err else {
            panic!("expected schema error, got {err:?}");
        };
        assert_eq!(issues.iter().map(|i| i.line).collect::<Vec<_>>(), [2, 3, 4, 5, 6]);
        assert!(issues[0].message.contains("label"));
        assert!(issues[1].message.contains("both"));
    }

    #[test]
    fn unlabelled_posts_load_for_inference() {
        let dir = tempfile::tempdir().unwrap();
        let lines = vec![r#"{"id": "q", "text": "hi", "frames": ["k0.jpg", {"path": "/abs/k1.jpg"}]}"#.to_string()];
        let p = write(dir.path(), "posts.jsonl", &lines);
        let posts = load_posts(&p).unwrap();
        assert_eq!(posts[0].gold_label, None);
        let refs = posts[0].visual.refs();
        assert_eq!(refs[0], ImageRef::Path(dir.path().join("k0.jpg")));
        assert_eq!(refs[1], ImageRef::Path("/abs/k1.jpg".into()));
        assert!(load_dataset(&p).is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let lines = vec![line("a", "Like"), line("a", "Fear")];
        assert!(matches!(
            load_dataset(&write(dir.path(), "dup.jsonl", &lines)),
            Err(Error::DuplicateId(id)) if id == "a"
        ));
    }

    #[test]
    fn json_round_trip_of_posts() {
        let dir = tempfile::tempdir().unwrap();
        let post = Post::new(
            "x",
            "text",
            Visual::VideoFrames(vec![
                ImageRef::Bytes(vec![0xFF, 0xD8, 0xFF, 1]),
                ImageRef::Precomputed(FeatureVector::new(vec![0.5, -0.5]).unwrap()),
            ]),
            Some(SentimentLabel::Surprise),
        )
        .unwrap();
        let p = dir.path().join("one.jsonl");
        write_dataset(&p, std::slice::from_ref(&post)).unwrap();
        assert_eq!(load_dataset(&p).unwrap().samples, vec![post]);
    }

    fn synthetic(per_label: usize) -> Dataset {
        let samples = SentimentLabel::ALL
            .iter()
            .flat_map(|&l| {
                (0..per_label).map(move |i| {
                    Post::new(
                        format!("{}-{i}", l.name()),
                        "t",
                        Visual::ImageSet(vec![ImageRef::Precomputed(FeatureVector::zeros(2))]),
                        Some(l),
                    )
                    .unwrap()
                })
            })
            .collect();
        Dataset::new("syn", samples).unwrap()
    }

    #[test]
    fn split_floor_rule_and_determinism() {
        let d = synthetic(3);
        let (train, test) = split(&d, 0.1, 7).unwrap();
        assert_eq!((train.len(), test.len()), (21, 0));

        let d = synthetic(20);
        let (tr1, te1) = split(&d, 0.25, 42).unwrap();
        let (tr2, te2) = split(&d, 0.25, 42).unwrap();
        assert_eq!(te1, te2);
        assert_eq!(tr1, tr2);
        assert_eq!(te1.label_counts(), [5; 7]);
        let (_, te3) = split(&d, 0.25, 43).unwrap();
        assert_ne!(te1.samples, te3.samples);

        assert!(split(&d, 0.0, 1).is_err());
        assert!(split(&d, 1.0, 1).is_err());
    }
}
