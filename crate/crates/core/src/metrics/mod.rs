//! Similarity and classification metrics shared by the reward and the benchmark.

mod classify;
mod cluster;
mod edit;
mod ngram;
mod variables;

pub use classify::{
    binary_prf, category_f1, AdLabel, ConfusionCounts, VariableAnnotation, VC_CATEGORIES,
};
pub use cluster::rand_index;
pub use edit::{edit_distance, normalized_template_similarity};
pub use ngram::{bleu, rouge_l, rouge_n, tokenize, TextMetricConfig};
pub use variables::{
    label_log_tokens, variable_f1_log_anchored, variable_f1_templates, AnchoredF1, PLACEHOLDER,
};
