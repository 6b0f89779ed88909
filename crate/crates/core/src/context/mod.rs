//! Window summaries: prompt features, the chat prompt, summarizer and text
//! embedder backends, and the on-disk summary store.

mod embed;
mod features;
mod prompt;
mod remote;
mod store;
mod summarizer;

pub use embed::{cosine, embedder_registry, fnv1a64, project_context, EmbedderConfig, HashedEmbedder, TextEmbedder, TEXT_DIM};
pub use features::{extract_prompt_features, features_from, Trend, WindowSummaryFeatures, SUMMARY_SPAN, TREND_THRESHOLD};
pub use prompt::{build_prompt, data_summary, Prompt, OUTPUT_REQUIREMENTS, QUALITATIVE_NOTE, SYSTEM_ROLE, USER_TASK};
pub use remote::{CacheEntry, RemoteConfig, RemoteEmbedder, RemoteSummarizer, ResponseCache};
pub use store::{summarize_windows, StoredSummary, SummaryStore};
pub use summarizer::{
    count_sentences, summarize_rule_based, summarizer_registry, ContextSummary, Risk, RuleRow, RuleSummarizer,
    SlopeBand, Summarizer, SummarizerConfig, SummaryBackend, TherapyFlags, TirBand,
};
