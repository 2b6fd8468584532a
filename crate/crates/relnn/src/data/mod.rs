//! Embedding ingestion, synthetic imbalanced dataset generation, group-aware
//! splitting, and checkpoint persistence.

mod checkpoint;
mod csvio;
mod dataset;
mod split;
mod synth;

pub use checkpoint::{
    read_checkpoint, write_checkpoint, Checkpoint, CheckpointMeta, ModelKind, CHECKPOINT_VERSION,
};
pub use csvio::{
    read_class_manifest, read_dataset_csv, read_embeddings_csv, read_predictions_csv,
    write_class_manifest, write_dataset_csv, write_embeddings_csv, write_predictions_csv,
    PredictionRow,
};
pub use dataset::{class_histogram, ClassCounts, Dataset, Embedding, EmbeddingRecord, EmbeddingSet};
pub use split::group_split;
pub use synth::{synth_generate, table1_counts, SkewProfile};
