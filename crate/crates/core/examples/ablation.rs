//! Evaluate every pipeline variant on a synthetic split and print the
//! ablation table.

use mmsenti::eval::{ablation_table, run_ablations};
use mmsenti::fixtures::{synthetic_dataset, SyntheticSpec};
use mmsenti::kb::build_kb;
use mmsenti::{AblationMode, Pipeline, PipelineConfig, StubBackend, StubLexicon};

fn main() -> mmsenti::Result<()> {
    let pipeline = Pipeline::new(PipelineConfig {
        dimension: 64,
        ..Default::default()
    })?;
    let cfg = &pipeline.config;
    let backend = StubBackend::with_defaults(cfg.dimension);

    let spec = SyntheticSpec {
        per_label: 60,
        dimension: cfg.dimension,
        keyword_rate: 0.4,
        ..Default::default()
    };
    let data = synthetic_dataset(&spec, &StubLexicon::default(), &cfg.valence);
    let (train, test) = mmsenti::split(&data, 0.1, 42)?;
    let store = build_kb(&train, &[], &backend, cfg, &pipeline.stopwords)?;

    let evals = run_ablations(&test, &store, &backend, &pipeline, &AblationMode::ALL, None)?;
    println!("{} test posts, {} knowledge-base entries\n", test.len(), store.len());
    print!("{}", ablation_table(&evals));
    Ok(())
}
