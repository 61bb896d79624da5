//! Five-stage multi-agent pipeline for multimodal sentiment classification.
//!
//! A post (text plus images or video keyframes) flows through a text analyst,
//! an image analyst, a fusion inspector that flags cross-modal conflicts, a
//! knowledge-base assistant that retrieves similar annotated examples, and a
//! classifier aggregator that assigns one of seven labels.
//!
//! ```no_run
//! use mmsenti::{backend_from_config, fixtures, KbStore, Pipeline, PipelineConfig};
//!
//! let config = PipelineConfig { dimension: 64, ..Default::default() };
//! let backend = backend_from_config(&config).unwrap();
//! let pipeline = Pipeline::new(config.clone()).unwrap();
//! let data = fixtures::keyword_fixture(10, 64, 7);
//! let store: KbStore = mmsenti::kb::build_kb(&data, &[], backend.as_ref(), &config, &pipeline.stopwords).unwrap();
//! let out = pipeline.run(&data.samples[0], &store, backend.as_ref()).unwrap();
//! println!("{}", out.label);
//! ```

pub mod aggregator;
pub mod backend;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod fusion;
pub mod image;
pub mod kb;
pub mod metrics;
pub mod text;
pub mod types;

pub use aggregator::{
    classify, combine_scores, mean_similar, run_pipeline, run_pipeline_with_mode, AblationMode, FinalOutput,
    Pipeline, Trace,
};
pub use backend::{backend_from_config, ModelBackend, RemoteBackend, StubBackend, StubLexicon};
pub use config::{BackendKind, PipelineConfig};
pub use dataset::{load_dataset, load_posts, split, Dataset};
pub use error::{Error, Result, Stage};
pub use eval::{evaluate, run_ablation, Evaluation};
pub use kb::{KbEntry, KbStore, Retrieved};
pub use metrics::{compute_metrics, Metrics};
pub use types::{FeatureVector, ImageRef, Post, Score, SentimentLabel, ValenceMap, Visual};
