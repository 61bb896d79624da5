//! Stage 4: the annotated knowledge base, exact cosine top-k retrieval and
//! retrieval summaries.

mod format;

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, HashSet};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{prompts, ModelBackend, ModelRequest, RequestHints, ResponseSchema, Task};
use crate::config::PipelineConfig;
use crate::dataset::Dataset;
use crate::error::{Error, Result, SchemaIssue};
use crate::fusion::{concat_pooled, FusionOutput};
use crate::image::embed_visual;
use crate::text::{embed_text_segments, StopWords};
use crate::types::{parse_label, FeatureVector, ImageRef, SentimentLabel};

pub use format::{FORMAT_VERSION, MAGIC};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KbEntry {
    pub id: String,
    pub text: String,
    pub visual_refs: Vec<ImageRef>,
    pub label: SentimentLabel,
    pub embedding: FeatureVector,
    pub metadata: BTreeMap<String, String>,
}

/// Retrieved entry with its similarity to the query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retrieved {
    pub entry: KbEntry,
    pub similarity: f64,
}

fn l2_norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}

fn cosine_with_norms(a: &[f32], b: &[f32], na: f64, nb: f64) -> f64 {
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
    // `+ 0.0` folds -0.0 into 0.0 so ordering never depends on the sign of zero.
    (dot / (na * nb)).clamp(-1.0, 1.0) + 0.0
}

/// Cosine similarity, or 0 when either vector has zero norm.
pub fn similarity(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let (a, b) = (a.as_slice(), b.as_slice());
    Ok(cosine_with_norms(a, b, l2_norm(a), l2_norm(b)))
}

/// Query features used for retrieval. Currently the identity on the fused
/// vector; the length check is the only contract.
pub fn select_key_features(combined: &FeatureVector, fused_dim: usize) -> Result<FeatureVector> {
    combined.expect_dim(fused_dim)?;
    Ok(combined.clone())
}

/// In-memory vector store with exact linear-scan search.
///
/// Embeddings are also kept in one contiguous row-major matrix with
/// precomputed norms so the scan touches a single allocation.
#[derive(Debug)]
pub struct KbStore {
    dimension: usize,
    entries: Vec<KbEntry>,
    ids: HashSet<String>,
    matrix: Vec<f32>,
    norms: Vec<f64>,
    queries: AtomicUsize,
}

impl Clone for KbStore {
    fn clone(&self) -> Self {
        KbStore {
            dimension: self.dimension,
            entries: self.entries.clone(),
            ids: self.ids.clone(),
            matrix: self.matrix.clone(),
            norms: self.norms.clone(),
            queries: AtomicUsize::new(0),
        }
    }
}

impl PartialEq for KbStore {
    fn eq(&self, other: &Self) -> bool {
        self.dimension == other.dimension && self.entries == other.entries
    }
}

/// Heap key: a larger key is a better hit (higher similarity, then smaller id).
struct Hit<'a> {
    sim: f64,
    id: &'a str,
    row: usize,
}

impl Hit<'_> {
    fn rank(&self, other: &Self) -> Ordering {
        self.sim
            .total_cmp(&other.sim)
            .then_with(|| other.id.cmp(self.id))
    }
}

impl PartialEq for Hit<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.rank(other) == Ordering::Equal
    }
}
impl Eq for Hit<'_> {}
impl PartialOrd for Hit<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Hit<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rank(other)
    }
}

impl KbStore {
    /// An empty store of fused dimension `dimension` (2·D).
    pub fn new(dimension: usize) -> Self {
        KbStore {
            dimension,
            entries: Vec::new(),
            ids: HashSet::new(),
            matrix: Vec::new(),
            norms: Vec::new(),
            queries: AtomicUsize::new(0),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[KbEntry] {
        &self.entries
    }

    pub fn get(&self, id: &str) -> Option<&KbEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn insert(&mut self, entry: KbEntry) -> Result<()> {
        entry.embedding.expect_dim(self.dimension)?;
        if self.ids.contains(&entry.id) {
            return Err(Error::DuplicateId(entry.id));
        }
        let row = entry.embedding.as_slice();
        self.norms.push(l2_norm(row));
        self.matrix.extend_from_slice(row);
        self.ids.insert(entry.id.clone());
        self.entries.push(entry);
        Ok(())
    }

    /// Number of `top_k` calls served so far.
    pub fn query_count(&self) -> usize {
        self.queries.load(AtomicOrdering::SeqCst)
    }

    fn row(&self, i: usize) -> &[f32] {
        &self.matrix[i * self.dimension..(i + 1) * self.dimension]
    }

    /// Exact top-k by cosine similarity, sorted by descending similarity with
    /// ties broken by ascending id.
    pub fn top_k(&self, query: &FeatureVector, k: usize) -> Result<Vec<Retrieved>> {
        self.queries.fetch_add(1, AtomicOrdering::SeqCst);
        query.expect_dim(self.dimension)?;
        if self.entries.is_empty() {
            return Err(Error::EmptyStore);
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let q = query.as_slice();
        let qn = l2_norm(q);

        // Min-heap of the best k seen so far; the root is the weakest hit.
        let mut heap: BinaryHeap<Reverse<Hit<'_>>> = BinaryHeap::with_capacity(k + 1);
        for (row, entry) in self.entries.iter().enumerate() {
            let hit = Hit {
                sim: cosine_with_norms(q, self.row(row), qn, self.norms[row]),
                id: &entry.id,
                row,
            };
            if heap.len() < k {
                heap.push(Reverse(hit));
            } else if heap.peek().is_some_and(|Reverse(worst)| hit > *worst) {
                heap.pop();
                heap.push(Reverse(hit));
            }
        }
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|Reverse(h)| Retrieved {
                entry: self.entries[h.row].clone(),
                similarity: h.sim,
            })
            .collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        format::encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        format::decode(bytes)
    }

    pub fn persist(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Loads a store and checks it matches the fused dimension of `config`.
    pub fn load_for(path: &Path, config: &PipelineConfig) -> Result<Self> {
        let store = Self::load(path)?;
        if store.dimension != config.fused_dimension() {
            return Err(Error::DimensionMismatch {
                expected: config.fused_dimension(),
                actual: store.dimension,
            });
        }
        Ok(store)
    }
}

pub fn top_k(store: &KbStore, query: &FeatureVector, k: usize) -> Result<Vec<Retrieved>> {
    store.top_k(query, k)
}

/// One report-only call summarizing the retrieved entries.
pub fn summarize_retrieved(similar: &[Retrieved], backend: &dyn ModelBackend) -> Result<String> {
    if similar.is_empty() {
        return Err(Error::EmptyRetrieval);
    }
    let mut req = ModelRequest::new(Task::RagSummary, ResponseSchema::ReportOnly, prompts::KB_ASSISTANT);
    for (rank, r) in similar.iter().enumerate() {
        let meta: Vec<String> = r.entry.metadata.iter().map(|(k, v)| format!("{k}={v}")).collect();
        req = req.text(format!(
            "#{} [{}] similarity {:.4} ({}): {}",
            rank + 1,
            r.entry.label,
            r.similarity,
            meta.join(", "),
            r.entry.text
        ));
    }
    req = req.hints(RequestHints {
        labels: similar.iter().map(|r| r.entry.label).collect(),
        ..Default::default()
    });
    backend.complete(&req)?.expect_report()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalOutput {
    pub similar: Vec<Retrieved>,
    pub rag_report: String,
}

pub fn run_kb_assistant(
    fusion: &FusionOutput,
    store: &KbStore,
    backend: &dyn ModelBackend,
    config: &PipelineConfig,
) -> Result<RetrievalOutput> {
    let key = select_key_features(&fusion.combined_features, config.fused_dimension())?;
    let similar = store.top_k(&key, config.top_k)?;
    let rag_report = summarize_retrieved(&similar, backend)?;
    Ok(RetrievalOutput { similar, rag_report })
}

/// A labelled text-only corpus entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub id: String,
    pub text: String,
    pub label: SentimentLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextCorpus {
    pub name: String,
    pub entries: Vec<CorpusEntry>,
}

/// Reads a JSONL corpus of `{"id", "text", "label"}` objects.
pub fn load_corpus(path: &Path) -> Result<TextCorpus> {
    #[derive(Deserialize)]
    struct Line {
        id: Option<String>,
        text: Option<String>,
        label: Option<String>,
    }
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    let mut issues = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in content.lines().enumerate() {
        let n = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<Line>(raw)
            .map_err(|e| e.to_string())
            .and_then(|l| {
                let id = l.id.filter(|s| !s.is_empty()).ok_or("missing \"id\"")?;
                let text = l.text.filter(|s| !s.trim().is_empty()).ok_or("missing \"text\"")?;
                let label = parse_label(&l.label.ok_or("missing \"label\"")?).map_err(|e| e.to_string())?;
                Ok(CorpusEntry { id, text, label })
            });
        match parsed {
            Ok(e) => {
                if !seen.insert(e.id.clone()) {
                    return Err(Error::DuplicateId(e.id));
                }
                entries.push(e)
            }
            Err(message) => issues.push(SchemaIssue { line: n, message }),
        }
    }
    if !issues.is_empty() {
        return Err(Error::Schema(issues));
    }
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("corpus")
        .to_string();
    Ok(TextCorpus { name, entries })
}

/// Builds the knowledge base: one entry per labelled multimodal sample
/// (embedded as pooled text ++ pooled visual features) and per corpus entry
/// (pooled text ++ zeros).
pub fn build_kb(
    train: &Dataset,
    corpora: &[TextCorpus],
    backend: &dyn ModelBackend,
    config: &PipelineConfig,
    stopwords: &StopWords,
) -> Result<KbStore> {
    let dim = config.dimension;
    let multimodal: Vec<KbEntry> = train
        .samples
        .par_iter()
        .map(|post| {
            let label = post
                .gold_label
                .ok_or_else(|| Error::InvalidPost(format!("{}: knowledge base samples need a label", post.id)))?;
            let text = embed_text_segments(&post.text, stopwords, backend)?;
            let visual = embed_visual(&post.visual, backend, dim)?;
            let embedding = concat_pooled(Some(&text), Some(&visual), dim)?;
            let mut metadata = BTreeMap::new();
            metadata.insert("source".to_string(), "multimodal".to_string());
            metadata.insert("corpus".to_string(), train.name.clone());
            metadata.insert(
                "modality".to_string(),
                if post.visual.is_video() { "video" } else { "image" }.to_string(),
            );
            Ok(KbEntry {
                id: post.id.clone(),
                text: post.text.clone(),
                visual_refs: post.visual.refs().to_vec(),
                label,
                embedding,
                metadata,
            })
        })
        .collect::<Result<_>>()?;

    let mut textual = Vec::new();
    for corpus in corpora {
        let part: Vec<KbEntry> = corpus
            .entries
            .par_iter()
            .map(|e| {
                let text = embed_text_segments(&e.text, stopwords, backend)?;
                let embedding = concat_pooled(Some(&text), None, dim)?;
                let mut metadata = BTreeMap::new();
                metadata.insert("source".to_string(), "text".to_string());
                metadata.insert("corpus".to_string(), corpus.name.clone());
                Ok(KbEntry {
                    id: e.id.clone(),
                    text: e.text.clone(),
                    visual_refs: Vec::new(),
                    label: e.label,
                    embedding,
                    metadata,
                })
            })
            .collect::<Result<_>>()?;
        textual.extend(part);
    }

    let mut store = KbStore::new(config.fused_dimension());
    for entry in multimodal.into_iter().chain(textual) {
        store.insert(entry)?;
    }
    Ok(store)
}
