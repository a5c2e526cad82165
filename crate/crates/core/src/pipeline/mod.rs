//! Synthetic-data experiment: categorical ingestion, marginal release with
//! Brownian noise reduction, a naive-Bayes synthesizer and classifier, and
//! the accuracy-first loop over a validation split.

pub mod dataset;
pub mod experiment;
pub mod marginals;
pub mod synth;

pub use dataset::{
    generate_dataset, load_and_discretize, read_and_discretize, split, CategoricalDataset, Column, Schema,
    SplitIndices, Transform, DEFAULT_GENERATED_ROWS,
};
pub use experiment::{
    derive_threshold, median, parse_key_values, parse_schedule, records_to_csv, run_experiment, run_prepared, run_with_checker,
    summarize, CheckerKind, ExperimentConfig, ExperimentOutput, PreparedData, RepeatSummary, RunRecord, Threshold,
    ThresholdDerivation,
};
pub use marginals::{evaluate_marginals, flatten, label_pair_queries, unflatten, MarginalQuery, MarginalTable};
pub use synth::{synthesize, train_and_score, NaiveBayes, NaiveBayesSampler};
